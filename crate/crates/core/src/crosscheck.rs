//! The analytic layers replayed against the brute-force oracles.
//!
//! Each check reports the largest discrepancy it saw; `tglab verify` and the
//! acceptance tests print these.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::heralding::{click_density_joint, tilt_after_dh, ClickPair, DhContext};
use crate::io::{format_f64, CsvTable};
use crate::leakage::{CavityParams, LeakageProfile};
use crate::oracle::{build_state, edge_diagonal, overlap, TrajectoryOracle};
use crate::procedures::{
    bridge_branch, bridge_failure_function, choose_method, failure_tilt, merge_branch, p_s, realign_branch,
    remove_cherry_branch, JoinKind, ProcedureOutcome, Sign,
};
use crate::rng::{stream, stream_id};
use crate::tilted_graph::{
    combine_partial_fusions, combine_weighted_edges, EdgeAnnotation, TiltAngle, TiltedGraph, Vertex, VertexId,
};
use crate::C64;

const TAG_PROCEDURES: u8 = 20;
const TAG_ALGEBRA: u8 = 21;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_discrepancy: f64,
    pub tolerance: f64,
}

impl CheckReport {
    /// False on NaN.
    pub fn passed(&self) -> bool {
        self.max_discrepancy < self.tolerance
    }
}

pub fn reports_table(reports: &[CheckReport]) -> CsvTable {
    let mut t = CsvTable::new(["check", "cases", "max_discrepancy", "tolerance", "pass"]);
    for r in reports {
        t.push(vec![
            r.name.to_string(),
            r.cases.to_string(),
            format_f64(r.max_discrepancy),
            format_f64(r.tolerance),
            r.passed().to_string(),
        ]);
    }
    t
}

fn id(k: u32) -> VertexId {
    VertexId(k)
}

/// Centre 2 (tilted, Z-phased) between hubs 0 and 1, cherry 3 on the
/// centre, `extra[i]` additional leaves on hub `i`, and a prior annotation
/// on the hubs.
fn joining_graph(
    theta: f64,
    z: f64,
    hubs: (f64, f64),
    extra: (u32, u32),
    prior: EdgeAnnotation,
) -> Result<TiltedGraph> {
    let leaves = |base: u32, n: u32| -> Vec<VertexId> { (base..base + 1 + n).map(id).collect() };
    let mut g = TiltedGraph::ghz(id(0), &leaves(10, extra.0), TiltAngle::new(hubs.0))?;
    g = g.union(&TiltedGraph::ghz(id(1), &leaves(20, extra.1), TiltAngle::new(hubs.1))?)?;
    g.add_vertex(Vertex::new(id(2), TiltAngle::new(theta)).with_z_phase(z))?;
    g.add_vertex(Vertex::plus(id(3)).with_hadamard(true))?;
    for w in [0, 1, 3] {
        g.add_edge(id(2), id(w), EdgeAnnotation::Pure)?;
    }
    g.add_edge(id(0), id(1), prior)?;
    Ok(g)
}

/// `max(|Δp|, 1 − overlap)` of one branch against the oracle.
fn branch_discrepancy(g: &TiltedGraph, rec: &ProcedureOutcome, after: &TiltedGraph) -> Result<f64> {
    let (p, post) = build_state(g)?.project_out(rec.measured, &rec.physical_rotation, rec.outcome)?;
    let got = build_state(after)?.permuted(post.ids())?;
    Ok((p - rec.probability).abs().max(1.0 - overlap(&got, &post)?))
}

/// Both outcomes of one procedure. The rules may reject an outcome only when
/// the other one is certain.
fn both_branches(g: &TiltedGraph, branch: impl Fn(u8) -> Result<(ProcedureOutcome, TiltedGraph)>) -> Result<f64> {
    let (b0, b1) = (branch(0), branch(1));
    Ok(match (&b0, &b1) {
        (Ok((r0, a0)), Ok((r1, a1))) => branch_discrepancy(g, r0, a0)?.max(branch_discrepancy(g, r1, a1)?),
        (Ok((r, a)), Err(_)) | (Err(_), Ok((r, a))) => branch_discrepancy(g, r, a)?.max((1.0 - r.probability).abs()),
        (Err(_), Err(_)) => 1.0,
    })
}

fn procedure_case(rng: &mut impl Rng) -> Result<f64> {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * crate::rng::open_unit(rng);
    let theta = u(0.0, FRAC_PI_2);
    let z = u(0.0, std::f64::consts::TAU);
    let gamma = u(-FRAC_PI_2, FRAC_PI_2);
    let hubs = (u(0.0, FRAC_PI_2), u(0.0, FRAC_PI_2));
    let extra = (u32::from(u(0.0, 1.0) < 0.5), u32::from(u(0.0, 1.0) < 0.5));
    let mut worst: f64 = 0.0;
    for weighted in [false, true] {
        let prior = if weighted { EdgeAnnotation::Weighted(gamma) } else { EdgeAnnotation::PartialFusion(gamma) };
        let g = joining_graph(theta, z, hubs, extra, prior)?;
        worst = worst.max(both_branches(&g, |o| realign_branch(&g, id(3), o))?);
        worst = worst.max(both_branches(&g, |o| remove_cherry_branch(&g, id(3), o))?);
        for o in [0u8, 1] {
            let Ok((_, g2)) = remove_cherry_branch(&g, id(3), o) else { continue };
            for sign in [None, Some(Sign::Plus), Some(Sign::Minus)] {
                worst = worst.max(both_branches(&g2, |o2| {
                    if weighted {
                        bridge_branch(&g2, id(2), sign, o2)
                    } else {
                        merge_branch(&g2, id(2), sign, o2)
                    }
                })?);
            }
        }
    }
    Ok(worst)
}

/// Realign, cherry removal, merge and bridge on random joining graphs of up
/// to ten qubits: every branch's probability and post-state against the
/// state vector.
pub fn procedures_vs_state_vector(cases: usize, seed: u64) -> Result<CheckReport> {
    let worst = (0..cases)
        .into_par_iter()
        .map(|k| procedure_case(&mut stream(seed, stream_id(TAG_PROCEDURES, k as u32, 0))))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CheckReport { name: "procedures_vs_state_vector", cases, max_discrepancy: worst, tolerance: 1e-10 })
}

fn normalized_gap(a: &[C64; 4], b: &[C64; 4]) -> f64 {
    let dot: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    1.0 - dot.norm() / (na * nb)
}

fn product(a: [C64; 4], b: [C64; 4]) -> [C64; 4] {
    [a[0] * b[0], a[1] * b[1], a[2] * b[2], a[3] * b[3]]
}

/// Weighted-edge additivity and partial-fusion composition, including the
/// `π/4` override, as products of the oracle's diagonal matrices.
pub fn annotation_algebra(cases: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = stream(seed, stream_id(TAG_ALGEBRA, 0, 0));
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let a = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        let b = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        let w = |x| edge_diagonal(EdgeAnnotation::Weighted(x));
        worst = worst.max(normalized_gap(&product(w(a), w(b)), &w(combine_weighted_edges(a, b))));
        let p = |x| edge_diagonal(EdgeAnnotation::PartialFusion(x));
        if let Ok((c, n)) = combine_partial_fusions(a, b) {
            let prod = product(p(a), p(b));
            worst = worst.max(normalized_gap(&prod, &p(c)));
            let scale = prod.iter().zip(p(c)).map(|(x, y)| (x.norm() - n * y.norm()).abs()).fold(0.0, f64::max);
            worst = worst.max(scale);
        }
        // Opposite-parity projectors annihilate; every other partner leaves a
        // pure fusion untouched.
        if let Ok((o, _)) = combine_partial_fusions(FRAC_PI_4, a) {
            worst = worst.max((o - FRAC_PI_4).abs());
            worst = worst.max(normalized_gap(&product(p(FRAC_PI_4), p(a)), &p(FRAC_PI_4)));
        }
    }
    Ok(CheckReport { name: "annotation_algebra", cases, max_discrepancy: worst, tolerance: 1e-12 })
}

/// `p_s(π/4) = ½`, `P_ii(π/4, 0) = ¾` for both joins, and the bridge failure
/// function at zero prior equals the realignment failure map on a 100-point
/// grid.
pub fn exact_identities() -> CheckReport {
    let mut worst = (p_s(FRAC_PI_4) - 0.5).abs();
    for kind in [JoinKind::Merge, JoinKind::Bridge] {
        worst = worst.max((choose_method(TiltAngle::UNTILTED, 0.0, kind).p_ii - 0.75).abs());
    }
    for k in 0..100 {
        let phi = (k as f64 + 0.5) / 100.0 * FRAC_PI_2;
        worst = worst.max((bridge_failure_function(0.0, phi) - failure_tilt(phi)).abs());
    }
    CheckReport { name: "exact_identities", cases: 103, max_discrepancy: worst, tolerance: 1e-12 }
}

/// Click times used by the trajectory check.
pub fn trajectory_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.02 * (i + 1) as f64).collect()
}

/// The conditional Schrödinger evolution against the closed-form tilt and
/// joint click density on an `n × n` click grid. Densities are compared
/// relative to `max(q, 1)`.
pub fn trajectory_vs_closed_form(ga: f64, gb: f64, n: usize) -> Result<[CheckReport; 2]> {
    let oracle = TrajectoryOracle::new(CavityParams::critically_damped(ga)?, CavityParams::critically_damped(gb)?)?;
    let ctx = DhContext::untilted(LeakageProfile::critically_damped(ga)?, LeakageProfile::critically_damped(gb)?);
    let times = trajectory_grid(n);
    let pairs: Vec<(f64, f64)> = times.iter().flat_map(|&a| times.iter().map(move |&b| (a, b))).collect();
    let gaps = pairs
        .par_iter()
        .map(|&(t1, t2)| -> Result<(f64, f64)> {
            let r = oracle.run(t1, t2)?;
            let clicks = ClickPair::new(t1, t2)?;
            let tilt = (r.theta_beta.radians() - tilt_after_dh(&ctx, clicks)?.radians()).abs();
            let q = click_density_joint(clicks, &ctx);
            Ok((tilt, (r.click_density - q).abs() / q.max(1.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = |f: fn(&(f64, f64)) -> f64| gaps.iter().map(f).fold(0.0, f64::max);
    Ok([
        CheckReport { name: "trajectory_tilt", cases: pairs.len(), max_discrepancy: worst(|g| g.0), tolerance: 1e-6 },
        CheckReport {
            name: "trajectory_density",
            cases: pairs.len(),
            max_discrepancy: worst(|g| g.1),
            tolerance: 1e-6,
        },
    ])
}

/// Everything above with the default sizes: 200 procedure cases, 1000
/// algebra cases and the 20 × 20 trajectory grid for `(ga, gb)`.
pub fn run_all(ga: f64, gb: f64, seed: u64) -> Result<Vec<CheckReport>> {
    let [tilt, density] = trajectory_vs_closed_form(ga, gb, 20)?;
    Ok(vec![procedures_vs_state_vector(200, seed)?, annotation_algebra(1000, seed)?, exact_identities(), tilt, density])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedures_agree() {
        let r = procedures_vs_state_vector(40, 1).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn algebra_and_identities() {
        let r = annotation_algebra(500, 2).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = exact_identities();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn trajectories_agree_on_a_small_grid() {
        for r in trajectory_vs_closed_form(10.0, 12.5, 4).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn nan_fails() {
        let r = CheckReport { name: "x", cases: 1, max_discrepancy: f64::NAN, tolerance: 1.0 };
        assert!(!r.passed());
        assert_eq!(reports_table(&[r]).len(), 1);
    }
}
