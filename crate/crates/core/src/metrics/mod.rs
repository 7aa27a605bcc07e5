//! Gate-quality expectations, fidelity distributions and the strategy
//! comparison.

mod levelset;
mod series;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heralding::{theta_weights, ClickLikelihood, DhOutcome, DhSampler};
use crate::io::CsvTable;
use crate::leakage::{
    critically_damped_overlap, integrate_2d_with, overlap_integral, quadrature::SimpsonGrid, LeakageProfile,
    QuadratureSettings,
};
use crate::tilted_graph::TiltAngle;

pub(crate) use levelset::quality;
pub use series::{efsq_series, i_n, j_n, Region, SeriesTerms};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvaluationMethod {
    ClosedForm,
    Quadrature,
    Series { order: u32 },
    FirstOrder,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectationResult {
    pub value: f64,
    pub method: EvaluationMethod,
    pub estimated_error: f64,
}

fn both_critically_damped(pa: &LeakageProfile, pb: &LeakageProfile) -> Option<(f64, f64)> {
    match (pa, pb) {
        (LeakageProfile::CriticallyDamped { g: ga }, LeakageProfile::CriticallyDamped { g: gb }) => Some((*ga, *gb)),
        _ => None,
    }
}

/// `E(F) = ¼ sin2θ_a sin2θ_b · (∫√(P_A P_B))²`.
pub fn expected_f(
    theta_a: TiltAngle,
    theta_b: TiltAngle,
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    settings: &QuadratureSettings,
) -> Result<ExpectationResult> {
    let (overlap, err) = match both_critically_damped(pa, pb) {
        Some((ga, gb)) => (critically_damped_overlap(ga, gb), 0.0),
        None => (overlap_integral(pa, pb, settings)?, settings.relative_tolerance()),
    };
    let pre = 0.25 * (2.0 * theta_a.radians()).sin() * (2.0 * theta_b.radians()).sin();
    let value = pre * overlap * overlap;
    Ok(ExpectationResult { value, method: EvaluationMethod::ClosedForm, estimated_error: 2.0 * err * value.abs() })
}

/// `E(F) = ∫∫ √(XY)` by direct 2D quadrature.
pub fn expected_f_quadrature(
    theta_a: TiltAngle,
    theta_b: TiltAngle,
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    settings: &QuadratureSettings,
) -> Result<ExpectationResult> {
    let (th1, th2) = theta_weights(theta_a, theta_b);
    let est = integrate_2d_with(
        |t| (pa.density(t), pb.density(t)),
        |&(a1, b1): &(f64, f64), &(a2, b2): &(f64, f64)| (th1 * a1 * b2 * th2 * b1 * a2).sqrt(),
        settings,
    )?;
    Ok(ExpectationResult { value: est.value, method: EvaluationMethod::Quadrature, estimated_error: est.error })
}

/// `E(F²) = ∫∫ XY/(X+Y)`.
pub fn expected_f_sq(
    theta_a: TiltAngle,
    theta_b: TiltAngle,
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    settings: &QuadratureSettings,
) -> Result<ExpectationResult> {
    let (th1, th2) = theta_weights(theta_a, theta_b);
    if th1 == 0.0 || th2 == 0.0 {
        return Ok(ExpectationResult { value: 0.0, method: EvaluationMethod::ClosedForm, estimated_error: 0.0 });
    }
    let est = integrate_2d_with(
        |t| (pa.density(t), pb.density(t)),
        |&(a1, b1): &(f64, f64), &(a2, b2): &(f64, f64)| {
            let (x, y) = (th1 * a1 * b2, th2 * b1 * a2);
            let s = x + y;
            if s > 0.0 {
                x * y / s
            } else {
                0.0
            }
        },
        settings,
    )?;
    Ok(ExpectationResult { value: est.value, method: EvaluationMethod::Quadrature, estimated_error: est.error })
}

/// First-order expansion `Θ_L(1 − K/2)·I₀`, `K = Θ_L/Θ_S − 1`, given `I₀`.
pub fn efsq_first_order_with(theta_a: TiltAngle, theta_b: TiltAngle, i0: f64) -> ExpectationResult {
    let (th1, th2) = theta_weights(theta_a, theta_b);
    let (l, s) = (th1.max(th2), th1.min(th2));
    let value = if s == 0.0 { 0.0 } else { l * (1.0 - 0.5 * (l / s - 1.0)) * i0 };
    ExpectationResult { value, method: EvaluationMethod::FirstOrder, estimated_error: f64::NAN }
}

pub fn efsq_first_order(
    theta_a: TiltAngle,
    theta_b: TiltAngle,
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    settings: &QuadratureSettings,
) -> Result<ExpectationResult> {
    Ok(efsq_first_order_with(theta_a, theta_b, i_n(pa, pb, 0, settings)?))
}

/// `E(F²)` on a fixed Simpson grid, for many tilt pairs with one profile
/// pair.
#[derive(Clone, Debug)]
pub struct EfsqEvaluator {
    /// `(w·U, V)` per node pair with `U > 0` or `V > 0`.
    cells: Vec<(f64, f64, f64)>,
}

impl EfsqEvaluator {
    pub fn new(pa: &LeakageProfile, pb: &LeakageProfile, intervals: usize) -> Result<Self> {
        if intervals < 2 || intervals % 2 != 0 {
            return Err(Error::InvalidParameter(format!("intervals must be even and ≥ 2, got {intervals}")));
        }
        let t_max = pa.support_end().max(pb.support_end());
        let grid = SimpsonGrid::new(t_max, intervals);
        let d: Vec<(f64, f64)> = grid.nodes.iter().map(|&t| (pa.density(t), pb.density(t))).collect();
        let mut cells = Vec::new();
        for (i, &(a1, b1)) in d.iter().enumerate() {
            for (j, &(a2, b2)) in d.iter().enumerate() {
                let (u, v) = (a1 * b2, b1 * a2);
                if u + v > 0.0 {
                    cells.push((grid.weights[i] * grid.weights[j], u, v));
                }
            }
        }
        Ok(Self { cells })
    }

    pub fn evaluate(&self, theta_a: TiltAngle, theta_b: TiltAngle) -> f64 {
        let (th1, th2) = theta_weights(theta_a, theta_b);
        if th1 == 0.0 || th2 == 0.0 {
            return 0.0;
        }
        self.cells
            .iter()
            .map(|&(w, u, v)| {
                let (x, y) = (th1 * u, th2 * v);
                w * x * y / (x + y)
            })
            .sum()
    }
}

/// `E(F²)` on a `grid × grid` lattice of `(sin²θ_a, sin²θ_b) ∈ [0,1]²`,
/// as a CSV table with columns `sin2_theta_a,sin2_theta_b,efsq`.
pub fn efsq_surface(
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    grid: usize,
    settings: &QuadratureSettings,
) -> Result<CsvTable> {
    if grid < 2 {
        return Err(Error::InvalidParameter(format!("grid must have at least 2 points, got {grid}")));
    }
    let s2: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let tilt = |s: f64| TiltAngle::new(s.sqrt().asin());
    let mut table = CsvTable::new(["sin2_theta_a", "sin2_theta_b", "efsq"]);
    for &a in &s2 {
        for &b in &s2 {
            let v = expected_f_sq(tilt(a), tilt(b), pa, pb, settings)?.value;
            table.push_floats(&[a, b, v]);
        }
    }
    Ok(table)
}

/// Mass of `(X+Y)` in equal-width bins of `F` over `[0, ½]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityHistogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl FidelityHistogram {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Columns `f_bin_lo,f_bin_hi,mass`.
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["f_bin_lo", "f_bin_hi", "mass"]);
        for (w, m) in self.edges.windows(2).zip(&self.masses) {
            t.push_floats(&[w[0], w[1], *m]);
        }
        t
    }
}

/// Inner cells per line in the banded integrals.
pub const BAND_CELLS: usize = 4096;

fn t_max_for(pa: &LeakageProfile, pb: &LeakageProfile) -> f64 {
    pa.support_end().max(pb.support_end())
}

pub fn fidelity_histogram(
    theta_a: TiltAngle,
    theta_b: TiltAngle,
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    bins: usize,
    relative_tolerance: f64,
) -> Result<FidelityHistogram> {
    if bins < 10 {
        return Err(Error::InvalidParameter(format!("need at least 10 bins, got {bins}")));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| 0.5 * i as f64 / bins as f64).collect();
    let (theta1, theta2) = theta_weights(theta_a, theta_b);
    let problem = levelset::BandProblem {
        pa,
        pb,
        theta1,
        theta2,
        edges: &edges,
        t_max: t_max_for(pa, pb),
        inner_cells: BAND_CELLS,
    };
    let masses = problem.masses(|_| 1.0, relative_tolerance)?;
    Ok(FidelityHistogram { edges, masses })
}

/// How the first merge/bridge attempt after a heralded pair is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComparisonMode {
    /// `3F²`.
    Approx,
    /// `2F² + 2F⁴/(1 − 2F²)`, method (ii) at `γ = 0`.
    Exact,
}

impl ComparisonMode {
    pub fn first_attempt_probability(self, f: f64) -> f64 {
        match self {
            ComparisonMode::Approx => 3.0 * f * f,
            ComparisonMode::Exact => {
                let f2 = f * f;
                let d = 1.0 - 2.0 * f2;
                if d <= 0.0 {
                    0.75
                } else {
                    2.0 * f2 + 2.0 * f2 * f2 / d
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ComparisonMode::Approx => "approx",
            ComparisonMode::Exact => "exact",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonReport {
    pub mode: ComparisonMode,
    pub epsilon: f64,
    pub p_postselect: f64,
    pub p_outside_window: f64,
    pub p_total: f64,
}

/// Post-selecting on `F > ½ − ε` against keeping every heralded pair and
/// repairing it with one merge/bridge attempt. Fresh untilted qubits.
pub fn compare_strategies(
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    epsilon: f64,
    mode: ComparisonMode,
    relative_tolerance: f64,
) -> Result<ComparisonReport> {
    let [approx, exact] = compare_both(pa, pb, epsilon, relative_tolerance)?;
    Ok(if mode == ComparisonMode::Approx { approx } else { exact })
}

/// Both comparison modes from one window-mass evaluation.
pub fn compare_both(
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    epsilon: f64,
    relative_tolerance: f64,
) -> Result<[ComparisonReport; 2]> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("window width must be positive, got {epsilon}")));
    }
    let u = TiltAngle::UNTILTED;
    let (theta1, theta2) = theta_weights(u, u);
    let edges: Vec<f64> = if epsilon < 0.5 { vec![0.0, 0.5 - epsilon, 0.5] } else { vec![0.0, 0.5] };
    let problem = levelset::BandProblem {
        pa,
        pb,
        theta1,
        theta2,
        edges: &edges,
        t_max: t_max_for(pa, pb),
        inner_cells: BAND_CELLS,
    };
    let plain = problem.masses(|_| 1.0, relative_tolerance)?;
    let p_post = *plain.last().expect("at least one band");
    let report = |mode: ComparisonMode| -> Result<ComparisonReport> {
        let outside = if edges.len() == 2 {
            0.0
        } else {
            problem.masses(|f| mode.first_attempt_probability(f), relative_tolerance)?[0]
        };
        Ok(ComparisonReport {
            mode,
            epsilon,
            p_postselect: p_post,
            p_outside_window: outside,
            p_total: p_post + outside,
        })
    };
    Ok([report(ComparisonMode::Approx)?, report(ComparisonMode::Exact)?])
}

/// Overhead factor `p^(−ln n)`.
pub fn resource_ratio(p_gate: f64, n: f64) -> Result<f64> {
    if !(p_gate > 0.0 && p_gate <= 1.0) {
        return Err(Error::InvalidParameter(format!("gate probability must lie in (0, 1], got {p_gate}")));
    }
    if !(n > 1.0 && n.is_finite()) {
        return Err(Error::InvalidParameter(format!("computation size must exceed 1, got {n}")));
    }
    Ok(p_gate.powf(-n.ln()))
}

/// Sample statistics of repeated attempts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloSummary {
    pub attempts: u64,
    pub successes: u64,
    /// Conditional on success.
    pub mean_f: f64,
    pub mean_f_sq: f64,
    pub se_f: f64,
    pub se_f_sq: f64,
}

impl MonteCarloSummary {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.attempts as f64
    }

    pub fn se_success_rate(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.attempts as f64).sqrt()
    }
}

/// Runs `attempts` double-heralding attempts and accumulates `F`, `F²` over
/// the successes.
pub fn monte_carlo<R: Rng + ?Sized>(sampler: &DhSampler, attempts: u64, rng: &mut R) -> Result<MonteCarloSummary> {
    let mut fs = Vec::new();
    for _ in 0..attempts {
        if let DhOutcome::Success { clicks, .. } = sampler.attempt(rng)? {
            fs.push(ClickLikelihood::new(sampler.context(), clicks).gate_quality());
        }
    }
    let n = fs.len() as f64;
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / n;
    let mean_f = mean(&mut fs.iter().copied());
    let mean_f_sq = mean(&mut fs.iter().map(|f| f * f));
    let var_f = mean(&mut fs.iter().map(|f| (f - mean_f).powi(2)));
    let var_f_sq = mean(&mut fs.iter().map(|f| (f * f - mean_f_sq).powi(2)));
    Ok(MonteCarloSummary {
        attempts,
        successes: fs.len() as u64,
        mean_f,
        mean_f_sq,
        se_f: (var_f / n).sqrt(),
        se_f_sq: (var_f_sq / n).sqrt(),
    })
}

/// Summed `E(F²)` over pairs, evaluated in parallel.
pub fn summed_efsq(eval: &EfsqEvaluator, pairs: &[(TiltAngle, TiltAngle)]) -> f64 {
    pairs.par_iter().map(|&(a, b)| eval.evaluate(a, b)).collect::<Vec<_>>().iter().sum()
}

#[cfg(test)]
mod tests;
