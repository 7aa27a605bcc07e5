//! Experiment files: TOML, one experiment per file, one table per command.
//!
//! ```toml
//! seed = 7
//!
//! [profiles.a]
//! g = 10.0
//!
//! [profiles.b]
//! csv = "measured_b.csv"
//!
//! [compare]
//! pair = ["a", "b"]
//! epsilon = 1e-4
//! ```
//!
//! Every problem is reported against the line it comes from. Keys nobody
//! reads are rejected, so a typo cannot silently fall back to a default.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use tglab::growth::{JoinPolicy, Pairing};
use tglab::leakage::LeakageProfile;
use tglab::metrics::ComparisonMode;
use tglab::procedures::JoinKind;
use toml::{Table, Value};

use crate::CliError;

/// Relative tolerance used when the file does not set one.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub name: String,
    pub profile: LeakageProfile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrateConfig {
    pub profiles: Vec<String>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceConfig {
    pub pair: [String; 2],
    pub grid: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistConfig {
    pub pair: [String; 2],
    pub theta_a: f64,
    pub theta_b: f64,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareConfig {
    pub pair: [String; 2],
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JoinConfig {
    pub kind: JoinKind,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowConfig {
    /// Profiles handed out to systems in turn.
    pub pool: Vec<String>,
    pub systems: usize,
    pub target_ghz_size: usize,
    pub fidelity_acceptance: f64,
    pub pairing: Pairing,
    pub flip_rule: bool,
    pub join_method: JoinPolicy,
    pub recycling: bool,
    pub comparison: ComparisonMode,
    pub max_rounds: usize,
    pub join: Option<JoinConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    /// Critically damped couplings for the trajectory check. `None` when
    /// `[verify]` is absent and the default pair is tabulated.
    pub g: Option<[f64; 2]>,
    pub procedure_cases: usize,
    pub algebra_cases: usize,
    pub trajectory_grid: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: PathBuf,
    pub seed: u64,
    pub tolerance: f64,
    pub detection_efficiency: f64,
    pub profiles: BTreeMap<String, Profile>,
    pub calibrate: CalibrateConfig,
    pub efsq_surface: SurfaceConfig,
    pub fidelity_hist: HistConfig,
    pub compare: CompareConfig,
    pub grow: GrowConfig,
    pub verify: VerifyConfig,
}

impl ExperimentConfig {
    pub fn profile(&self, name: &str) -> &LeakageProfile {
        &self.profiles[name].profile
    }
}

/// Source text with a way back from keys to line numbers.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    /// Line of `[section]`, or 1 for the top level.
    fn section_line(&self, section: &str) -> usize {
        if section.is_empty() {
            return 1;
        }
        self.text.lines().position(|l| header(l).is_some_and(|h| h == section)).map_or(1, |i| i + 1)
    }

    /// Line where `key` is assigned inside `section`.
    fn key_line(&self, section: &str, key: &str) -> usize {
        let mut current = String::new();
        for (i, l) in self.text.lines().enumerate() {
            if let Some(h) = header(l) {
                current = h;
                continue;
            }
            if current == section && assigned_key(l).is_some_and(|k| k == key) {
                return i + 1;
            }
        }
        self.section_line(section)
    }

    fn line_of_offset(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }
}

fn header(line: &str) -> Option<String> {
    let t = line.trim();
    let inner = t.strip_prefix('[')?.split(']').next()?;
    Some(inner.split('.').map(|p| p.trim().trim_matches('"')).collect::<Vec<_>>().join("."))
}

fn assigned_key(line: &str) -> Option<String> {
    let (k, _) = line.split_once('=')?;
    Some(k.trim().trim_matches('"').to_string())
}

struct Section<'a> {
    name: String,
    table: Option<&'a Table>,
    src: &'a Source<'a>,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn err(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        let place = if self.name.is_empty() { key.to_string() } else { format!("[{}] {key}", self.name) };
        CliError::Config { line: self.src.key_line(&self.name, key), msg: format!("{place}: {msg}") }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn f64_or(&self, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        match self.raw(key) {
            Some(Value::Float(x)) => Ok(*x),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(self.err(key, format!("expected a number, found {}", v.type_str()))),
            None => default.ok_or_else(|| self.err(key, "missing required key")),
        }
    }

    fn in_range(&self, key: &str, default: Option<f64>, ok: impl Fn(f64) -> bool, what: &str) -> Result<f64, CliError> {
        let x = self.f64_or(key, default)?;
        if x.is_finite() && ok(x) {
            Ok(x)
        } else {
            Err(self.err(key, format!("{x} is out of range: {what}")))
        }
    }

    fn int_or(&self, key: &str, default: Option<i64>) -> Result<i64, CliError> {
        match self.raw(key) {
            Some(Value::Integer(i)) => Ok(*i),
            Some(v) => Err(self.err(key, format!("expected an integer, found {}", v.type_str()))),
            None => default.ok_or_else(|| self.err(key, "missing required key")),
        }
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize, CliError> {
        let n = self.int_or(key, Some(default as i64))?;
        if n < min as i64 {
            return Err(self.err(key, format!("{n} is out of range: must be at least {min}")));
        }
        usize::try_from(n).map_err(|_| self.err(key, "too large"))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(self.err(key, format!("expected true or false, found {}", v.type_str()))),
            None => Ok(default),
        }
    }

    fn choice<T: Copy>(&self, key: &str, default: T, options: &[(&str, T)]) -> Result<T, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::String(s)) => options.iter().find(|(n, _)| n == s).map(|(_, v)| *v).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(key, format!("unknown value {s:?}, expected one of {}", names.join(", ")))
            }),
            Some(v) => Err(self.err(key, format!("expected a string, found {}", v.type_str()))),
        }
    }

    fn names(&self, key: &str, profiles: &BTreeMap<String, Profile>) -> Result<Option<Vec<String>>, CliError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let Value::Array(items) = v else {
            return Err(self.err(key, format!("expected a list of profile names, found {}", v.type_str())));
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            let Value::String(s) = item else {
                return Err(self.err(key, "profile names must be strings"));
            };
            if !profiles.contains_key(s) {
                return Err(self.err(key, format!("no profile named {s:?}")));
            }
            out.push(s.clone());
        }
        if out.is_empty() {
            return Err(self.err(key, "the list is empty"));
        }
        Ok(Some(out))
    }

    /// Defaults to the first two profiles by name.
    fn pair(&self, profiles: &BTreeMap<String, Profile>) -> Result<[String; 2], CliError> {
        match self.names("pair", profiles)? {
            Some(v) if v.len() == 2 => Ok([v[0].clone(), v[1].clone()]),
            Some(v) => Err(self.err("pair", format!("expected two profile names, found {}", v.len()))),
            None => {
                let mut names = profiles.keys();
                // A lone profile pairs with itself.
                let a = names.next().expect("at least one profile");
                let b = names.next().unwrap_or(a);
                Ok([a.clone(), b.clone()])
            }
        }
    }

    fn sub(&self, key: &str) -> Result<Option<&'a Table>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(v) => Err(self.err(key, format!("expected a table, found {}", v.type_str()))),
        }
    }

    fn finish(&self) -> Result<(), CliError> {
        let Some(t) = self.table else { return Ok(()) };
        let used = self.used.borrow();
        match t.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(self.err(k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn section<'a>(src: &'a Source<'a>, name: &str, table: Option<&'a Table>) -> Section<'a> {
    Section { name: name.to_string(), table, src, used: RefCell::new(BTreeSet::new()) }
}

/// Reads and validates an experiment file. Relative profile paths resolve
/// against the file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config { line: 0, msg: format!("cannot read {}: {e}", path.display()) })?;
    parse_config_str(&text, path)
}

pub fn parse_config_str(text: &str, path: &Path) -> Result<ExperimentConfig, CliError> {
    let src = Source { text };
    let root: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
        line: e.span().map_or(1, |s| src.line_of_offset(s.start)),
        msg: e.message().trim().to_string(),
    })?;
    let top = section(&src, "", Some(&root));
    let seed = top.int_or("seed", None)?;
    let seed =
        u64::try_from(seed).map_err(|_| top.err("seed", format!("{seed} is out of range: must be non-negative")))?;
    let tolerance =
        top.in_range("tolerance", Some(DEFAULT_TOLERANCE), |x| x > 0.0 && x <= 1e-3, "must lie in (0, 1e-3]")?;
    let detection_efficiency =
        top.in_range("detection_efficiency", Some(1.0), |x| x > 0.0 && x <= 1.0, "must lie in (0, 1]")?;

    let base = path.parent().unwrap_or(Path::new("."));
    let mut profiles = BTreeMap::new();
    if let Some(t) = top.sub("profiles")? {
        for (name, v) in t {
            let s = format!("profiles.{name}");
            let Value::Table(pt) = v else {
                return Err(CliError::Config {
                    line: src.key_line("profiles", name),
                    msg: format!("[{s}] must be a table"),
                });
            };
            let p = section(&src, &s, Some(pt));
            let profile = parse_profile(&p, base)?;
            p.finish()?;
            profiles.insert(name.clone(), Profile { name: name.clone(), profile });
        }
    }
    if profiles.is_empty() {
        return Err(top.err("profiles", "at least one [profiles.<name>] table is required"));
    }

    let table = |key: &str| top.sub(key);
    let s = section(&src, "calibrate", table("calibrate")?);
    let calibrate = CalibrateConfig {
        profiles: s.names("profiles", &profiles)?.unwrap_or_else(|| profiles.keys().cloned().collect()),
        points: s.count("points", 401, 2)?,
    };
    s.finish()?;

    let s = section(&src, "efsq_surface", table("efsq_surface")?);
    let efsq_surface = SurfaceConfig { pair: s.pair(&profiles)?, grid: s.count("grid", 21, 2)? };
    s.finish()?;

    let quarter = std::f64::consts::FRAC_PI_4;
    let half = std::f64::consts::FRAC_PI_2;
    let s = section(&src, "fidelity_hist", table("fidelity_hist")?);
    let fidelity_hist = HistConfig {
        pair: s.pair(&profiles)?,
        theta_a: s.in_range("theta_a", Some(quarter), |x| (0.0..=half).contains(&x), "must lie in [0, π/2]")?,
        theta_b: s.in_range("theta_b", Some(quarter), |x| (0.0..=half).contains(&x), "must lie in [0, π/2]")?,
        bins: s.count("bins", 50, 10)?,
    };
    s.finish()?;

    let s = section(&src, "compare", table("compare")?);
    let compare = CompareConfig {
        pair: s.pair(&profiles)?,
        epsilon: s.in_range("epsilon", Some(1e-4), |x| x > 0.0, "must be positive")?,
    };
    s.finish()?;

    let s = section(&src, "grow", table("grow")?);
    let grow = parse_grow(&s, &profiles)?;
    s.finish()?;

    let s = section(&src, "verify", table("verify")?);
    let pair = s.pair(&profiles)?;
    let g = |name: &str| match profiles[name].profile {
        LeakageProfile::CriticallyDamped { g } => Ok(g),
        _ => Err(s.err("pair", format!("profile {name:?} is tabulated; the trajectory check needs a coupling g"))),
    };
    let g = match (g(&pair[0]).and_then(|a| Ok([a, g(&pair[1])?])), s.table) {
        (Ok(g), _) => Some(g),
        (Err(e), Some(_)) => return Err(e),
        (Err(_), None) => None,
    };
    let verify = VerifyConfig {
        g,
        procedure_cases: s.count("procedure_cases", 200, 1)?,
        algebra_cases: s.count("algebra_cases", 1000, 1)?,
        trajectory_grid: s.count("trajectory_grid", 20, 1)?,
    };
    s.finish()?;
    top.finish()?;

    Ok(ExperimentConfig {
        source: path.to_path_buf(),
        seed,
        tolerance,
        detection_efficiency,
        profiles,
        calibrate,
        efsq_surface,
        fidelity_hist,
        compare,
        grow,
        verify,
    })
}

fn parse_profile(p: &Section<'_>, base: &Path) -> Result<LeakageProfile, CliError> {
    let has = |k: &str| p.table.is_some_and(|t| t.contains_key(k));
    match (has("g"), has("csv")) {
        (true, false) => {
            let g = p.f64_or("g", None)?;
            LeakageProfile::critically_damped(g).map_err(|e| p.err("g", format!("{g} is out of range: {e}")))
        }
        (false, true) => {
            let Some(Value::String(rel)) = p.raw("csv") else {
                return Err(p.err("csv", "expected a file path string"));
            };
            let file = base.join(rel);
            if !file.is_file() {
                return Err(p.err("csv", format!("file {} does not exist", file.display())));
            }
            LeakageProfile::from_csv_path(&file).map_err(|e| p.err("csv", e))
        }
        (true, true) => Err(p.err("csv", "give either g or csv, not both")),
        (false, false) => Err(p.err("g", "missing: give g (critically damped) or csv (tabulated)")),
    }
}

fn parse_grow(s: &Section<'_>, profiles: &BTreeMap<String, Profile>) -> Result<GrowConfig, CliError> {
    let pool = s.names("pool", profiles)?.unwrap_or_else(|| profiles.keys().cloned().collect());
    let join = match s.sub("join")? {
        None => None,
        Some(t) => {
            let name = format!("{}.join", s.name);
            let j = section(s.src, &name, Some(t));
            let kind =
                j.choice("kind", JoinKind::Bridge, &[("merge", JoinKind::Merge), ("bridge", JoinKind::Bridge)])?;
            let nodes = j.count("nodes", 2, 2)?;
            j.finish()?;
            Some(JoinConfig { kind, nodes })
        }
    };
    Ok(GrowConfig {
        pool,
        systems: s.count("systems", 256, 2)?,
        target_ghz_size: s.count("target_ghz_size", 8, 2)?,
        fidelity_acceptance: s.in_range(
            "fidelity_acceptance",
            Some(0.99),
            |x| x > 0.5 && x <= 1.0,
            "must lie in (1/2, 1]",
        )?,
        pairing: s.choice(
            "pairing",
            Pairing::SortedTilt,
            &[("sorted", Pairing::SortedTilt), ("random", Pairing::Random)],
        )?,
        flip_rule: s.bool_or("flip_rule", true)?,
        join_method: s.choice(
            "join_method",
            JoinPolicy::Auto,
            &[("auto", JoinPolicy::Auto), ("force-i", JoinPolicy::ForceI), ("force-ii", JoinPolicy::ForceII)],
        )?,
        recycling: s.bool_or("recycling", true)?,
        comparison: s.choice(
            "comparison",
            ComparisonMode::Approx,
            &[("approx", ComparisonMode::Approx), ("exact", ComparisonMode::Exact)],
        )?,
        max_rounds: s.count("max_rounds", 10_000, 1)?,
        join,
    })
}
