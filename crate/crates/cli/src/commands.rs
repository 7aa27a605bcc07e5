//! One function per subcommand. Each writes CSV files into the output
//! directory and returns a short human-readable summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tglab::crosscheck::{self, CheckReport};
use tglab::growth::{run_join, run_phase1, run_realignment, JoinPlan, StrategyConfig};
use tglab::io::{format_f64, CsvTable};
use tglab::leakage::{LeakageProfile, QuadratureSettings};
use tglab::metrics::{compare_both, efsq_surface, fidelity_histogram};
use tglab::tilted_graph::TiltAngle;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Calibrate,
    EfsqSurface,
    FidelityHist,
    Compare,
    Grow,
    Verify,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Calibrate,
        Command::EfsqSurface,
        Command::FidelityHist,
        Command::Compare,
        Command::Grow,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::EfsqSurface => "efsq-surface",
            Command::FidelityHist => "fidelity-hist",
            Command::Compare => "compare",
            Command::Grow => "grow",
            Command::Verify => "verify",
        }
    }
}

/// What a command produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    fn write(&mut self, dir: &Path, name: &str, table: &CsvTable) -> Result<(), CliError> {
        let path = dir.join(name);
        table.write_path(&path)?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs `cmd`, writing its CSV files into `out` (created if missing).
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config { line: 0, msg: format!("cannot create {}: {e}", out.display()) })?;
    match cmd {
        Command::Calibrate => calibrate(cfg, out),
        Command::EfsqSurface => surface(cfg, out),
        Command::FidelityHist => histogram(cfg, out),
        Command::Compare => compare(cfg, out),
        Command::Grow => grow(cfg, out),
        Command::Verify => verify(cfg, out),
    }
}

fn pair<'a>(cfg: &'a ExperimentConfig, names: &[String; 2]) -> (&'a LeakageProfile, &'a LeakageProfile) {
    (cfg.profile(&names[0]), cfg.profile(&names[1]))
}

fn calibrate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let n = cfg.calibrate.points;
    for name in &cfg.calibrate.profiles {
        let p = cfg.profile(name);
        let end = p.support_end();
        let mut t = CsvTable::new(["time", "density"]);
        for i in 0..n {
            let time = end * i as f64 / (n - 1) as f64;
            t.push_floats(&[time, p.density(time)]);
        }
        o.write(out, &format!("profile_{name}.csv"), &t)?;
        writeln!(o.summary, "{name}: {n} points on [0, {end}], mass {}", p.total_mass()).unwrap();
    }
    Ok(o)
}

fn settings(cfg: &ExperimentConfig, pa: &LeakageProfile, pb: &LeakageProfile) -> Result<QuadratureSettings, CliError> {
    Ok(QuadratureSettings::for_profiles(&[pa, pb], cfg.tolerance)?)
}

fn surface(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let (pa, pb) = pair(cfg, &cfg.efsq_surface.pair);
    let table = efsq_surface(pa, pb, cfg.efsq_surface.grid, &settings(cfg, pa, pb)?)?;
    let mut o = Outcome::default();
    o.write(out, "efsq_surface.csv", &table)?;
    o.summary = format!("{} grid points\n", table.len());
    Ok(o)
}

fn histogram(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let h = &cfg.fidelity_hist;
    let (pa, pb) = pair(cfg, &h.pair);
    let hist = fidelity_histogram(TiltAngle::new(h.theta_a), TiltAngle::new(h.theta_b), pa, pb, h.bins, cfg.tolerance)?;
    let mut o = Outcome::default();
    o.write(out, "fidelity_hist.csv", &hist.to_table())?;
    o.summary = format!("{} bins, total mass {}\n", h.bins, hist.total_mass());
    Ok(o)
}

fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let (pa, pb) = pair(cfg, &cfg.compare.pair);
    let reports = compare_both(pa, pb, cfg.compare.epsilon, cfg.tolerance)?;
    let mut t = CsvTable::new(["mode", "epsilon", "p_postselect", "p_outside_window", "p_total"]);
    let mut o = Outcome::default();
    for r in &reports {
        t.push(vec![
            r.mode.name().to_string(),
            format_f64(r.epsilon),
            format_f64(r.p_postselect),
            format_f64(r.p_outside_window),
            format_f64(r.p_total),
        ]);
        writeln!(
            o.summary,
            "{:>5}: postselect {:.3}%  outside window {:.3}%  total {:.3}%",
            r.mode.name(),
            100.0 * r.p_postselect,
            100.0 * r.p_outside_window,
            100.0 * r.p_total
        )
        .unwrap();
    }
    o.write(out, "compare.csv", &t)?;
    Ok(o)
}

fn strategy(cfg: &ExperimentConfig) -> Result<StrategyConfig, CliError> {
    let g = &cfg.grow;
    let profiles: Vec<LeakageProfile> = g.pool.iter().map(|n| cfg.profile(n).clone()).collect();
    let mut s = StrategyConfig::round_robin(profiles, g.systems, g.target_ghz_size, cfg.seed)?;
    s.fidelity_acceptance = g.fidelity_acceptance;
    s.pairing = g.pairing;
    s.flip_rule = g.flip_rule;
    s.join_method = g.join_method;
    s.recycling = g.recycling;
    s.comparison = g.comparison;
    s.detection_efficiency = cfg.detection_efficiency;
    s.max_rounds = g.max_rounds;
    s.validate()?;
    Ok(s)
}

/// Phase 1, realignment, then the optional join, each phase's rounds
/// appended to one table.
fn grow(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let s = strategy(cfg)?;
    let (inv, stats) = run_phase1(&s)?;
    let (inv, realigned) = run_realignment(&inv.with_min_size(2), s.fidelity_acceptance, s.seed)?;
    let mut stats = stats.then(realigned);
    let mut o = Outcome::default();
    if let Some(j) = &cfg.grow.join {
        let plan = JoinPlan::linear(j.nodes, j.kind);
        let joined = run_join(&inv, &plan, &s)?;
        writeln!(o.summary, "joined {} pieces, attempts per join {:?}", j.nodes, joined.attempts).unwrap();
        stats = stats.then(joined.stats);
    }
    let mut census = CsvTable::new(["size", "count"]);
    for (size, count) in &stats.census {
        census.push(vec![size.to_string(), count.to_string()]);
    }
    o.write(out, "grow.csv", &stats.to_table())?;
    o.write(out, "grow_census.csv", &census)?;
    writeln!(
        o.summary,
        "heralding {}/{} successes, realignment {}/{}, {} of {} qubits consumed, mean final fidelity {}",
        stats.dh_successes,
        stats.dh_attempts,
        stats.realignments_succeeded,
        stats.realignments_attempted,
        stats.qubits_consumed,
        stats.qubits_initial,
        stats.mean_final_fidelity
    )
    .unwrap();
    Ok(o)
}

fn verify(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let v = &cfg.verify;
    let Some([ga, gb]) = v.g else {
        return Err(CliError::Config {
            line: 0,
            msg: "verify needs a critically damped [verify] pair; the default pair is tabulated".into(),
        });
    };
    let [tilt, density] = crosscheck::trajectory_vs_closed_form(ga, gb, v.trajectory_grid)?;
    let reports: Vec<CheckReport> = vec![
        crosscheck::procedures_vs_state_vector(v.procedure_cases, cfg.seed)?,
        crosscheck::annotation_algebra(v.algebra_cases, cfg.seed)?,
        crosscheck::exact_identities(),
        tilt,
        density,
    ];
    let mut o = Outcome::default();
    o.write(out, "verify.csv", &crosscheck::reports_table(&reports))?;
    for r in &reports {
        let mark = if r.passed() { "ok  " } else { "FAIL" };
        writeln!(
            o.summary,
            "{mark} {:<28} {:>5} cases  max discrepancy {:.3e} (< {:.0e})",
            r.name, r.cases, r.max_discrepancy, r.tolerance
        )
        .unwrap();
    }
    let oracle =
        reports.iter().filter(|r| !r.name.starts_with("trajectory")).map(|r| r.max_discrepancy).fold(0.0, f64::max);
    writeln!(o.summary, "max state-vector oracle discrepancy {oracle:.3e}").unwrap();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(o)
    } else {
        Err(CliError::Verify(format!("{}\n{}", failed.join(", "), o.summary)))
    }
}
