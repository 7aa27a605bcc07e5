//! CSV output shared by the library and the command line.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Renders a float with 17 significant digits, enough to round-trip every
/// `f64` exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// An in-memory table written as UTF-8 CSV with a header row and LF endings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<I, S>(headers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a row of already-rendered cells.
    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| format_f64(x)).collect());
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn to_string_lossy(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("cells are UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = CsvTable::new(["a", "b"]);
        assert_eq!(t.to_string_lossy(), "a,b\n");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 5e-324, -1.2345678901234567e300, 0.0] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn quoting_and_line_endings() {
        let mut t = CsvTable::new(["k", "v"]);
        t.push(vec!["a,b".into(), "x".into()]);
        t.push_floats(&[1.0, 2.0]);
        let s = t.to_string_lossy();
        assert_eq!(s, "k,v\n\"a,b\",x\n1.0000000000000000e0,2.0000000000000000e0\n");
        assert!(!s.contains('\r'));
    }
}
