//! Line-oriented text form.
//!
//! ```text
//! V <id> <theta> <hadamard> <z_phase> <x_flip>
//! E <id1> <id2> <pure|weighted|fusion> <phi>
//! ```
//!
//! Floats are written with 17 significant digits, so a round trip is exact.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write;

use super::{EdgeAnnotation, TiltAngle, TiltedGraph, Vertex, VertexId};
use crate::error::{Error, Result};
use crate::io::format_f64;

pub fn to_text(g: &TiltedGraph) -> String {
    let mut s = String::new();
    for v in g.vertices() {
        writeln!(
            s,
            "V {} {} {} {} {}",
            v.id,
            format_f64(v.tilt.radians()),
            v.hadamard,
            format_f64(v.z_phase),
            v.x_flip
        )
        .unwrap();
    }
    for ((a, b), ann) in g.edges() {
        writeln!(s, "E {a} {b} {} {}", ann.kind(), format_f64(ann.angle().unwrap_or(0.0))).unwrap();
    }
    s
}

pub fn from_text(text: &str) -> Result<TiltedGraph> {
    let mut g = TiltedGraph::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| Error::Parse { line, msg };
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        let id = |s: &str| s.parse::<u32>().map(VertexId).map_err(|e| err(format!("bad id `{s}`: {e}")));
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad number `{s}`: {e}")));
        let flag = |s: &str| s.parse::<bool>().map_err(|e| err(format!("bad flag `{s}`: {e}")));
        match f.as_slice() {
            ["V", vid, theta, h, z, x] => {
                let v = Vertex {
                    id: id(vid)?,
                    tilt: TiltAngle::new(num(theta)?),
                    hadamard: flag(h)?,
                    z_phase: num(z)?,
                    x_flip: flag(x)?,
                };
                g.add_vertex(v).map_err(|e| err(e.to_string()))?;
            }
            ["E", a, b, kind, phi] => {
                let phi = num(phi)?;
                let ann = match *kind {
                    "pure" => EdgeAnnotation::Pure,
                    "weighted" => EdgeAnnotation::Weighted(phi),
                    "fusion" => EdgeAnnotation::PartialFusion(phi),
                    other => return Err(err(format!("unknown edge kind `{other}`"))),
                };
                g.add_edge(id(a)?, id(b)?, ann).map_err(|e| err(e.to_string()))?;
            }
            _ => return Err(err(format!("unrecognized record `{l}`"))),
        }
    }
    Ok(g)
}
