//! Realignment, merging and bridging of tilted vertices.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::Rng;

use crate::error::{graph_err, Error, Result};
use crate::oracle::Unitary2;
use crate::rng::open_unit;
use crate::tilted_graph::{
    canonicalize, measure_graph_z, reduce_mod_pi, reweight_graph_bit, EdgeAnnotation, TiltAngle, TiltedGraph, VertexId,
    ANGLE_EPS,
};
use crate::C64;

/// Which way a merge or bridge is steered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    fn from_nonnegative(x: f64) -> Self {
        if x >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// The measurement basis rotation, in the measured vertex's own frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RotationDescriptor {
    M {
        theta: f64,
    },
    /// `M(β)·S`.
    MS {
        beta: f64,
    },
    PauliBasis(Pauli),
}

impl RotationDescriptor {
    pub fn unitary(&self) -> Unitary2 {
        match *self {
            RotationDescriptor::M { theta } => Unitary2::m(theta),
            RotationDescriptor::MS { beta } => Unitary2::m(beta).mul(&Unitary2::s()),
            RotationDescriptor::PauliBasis(Pauli::Z) => Unitary2::IDENTITY,
            RotationDescriptor::PauliBasis(Pauli::X) => Unitary2::hadamard(),
            RotationDescriptor::PauliBasis(Pauli::Y) => Unitary2::hadamard().mul(&Unitary2::s().adjoint()),
        }
    }
}

/// What a procedure left behind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResultingAnnotation {
    /// New tilt of the realigned vertex.
    Tilt(TiltAngle),
    /// The combined annotation between the two outer vertices, before
    /// canonicalization resolves it.
    Edge(EdgeAnnotation),
    /// A cherry was dropped with a graph-frame Z measurement.
    Removed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcedureOutcome {
    /// The targeted measurement outcome occurred.
    pub success: bool,
    /// The outer pair ended up joined by a parity projector or a control-Z,
    /// or the realigned vertex ended up untilted.
    pub resolved: bool,
    /// Born probability of the observed outcome.
    pub probability: f64,
    /// Probability of the targeted outcome.
    pub success_probability: f64,
    pub measured: VertexId,
    pub outcome: u8,
    pub rotation: RotationDescriptor,
    /// The full single-qubit unitary on the physical qubit before its Z
    /// measurement, including frame undoing.
    pub physical_rotation: Unitary2,
    pub resulting_annotation: ResultingAnnotation,
    /// Z phases added to surviving vertices.
    pub corrections: Vec<(VertexId, f64)>,
}

/// `p_s(θ) = ½ sin²2θ`.
pub fn p_s(theta: f64) -> f64 {
    0.5 * (2.0 * theta).sin().powi(2)
}

/// Failure function: `cos R(φ) = cos²φ / √(1 − ½ sin²2φ)`.
pub fn failure_tilt(phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    (s * s).atan2(c * c)
}

/// Bridge failure angle `F(γ, φ)` for the sign chosen by
/// [`bridge_sign`]. `F(0, φ) = R(φ)`.
pub fn bridge_failure_function(gamma: f64, phi: f64) -> f64 {
    let s = bridge_sign(gamma, phi).value();
    // With D = N_B⁻² − p_s(φ): cos F = cos²φ (s cosγ − sinγ)/√D and
    // sin F = sin²φ √(1 + s sin2γ)/√D. atan2 keeps small angles accurate.
    let (sp, cp) = phi.sin_cos();
    let sin_part = sp * sp * (1.0 + s * (2.0 * gamma).sin()).max(0.0).sqrt();
    let cos_part = cp * cp * (s * gamma.cos() - gamma.sin());
    sin_part.atan2(cos_part)
}

/// Sign making the bridge normalization `N_B ≥ 1`.
pub fn bridge_sign(gamma: f64, theta: f64) -> Sign {
    Sign::from_nonnegative((2.0 * gamma).sin() * (2.0 * theta).cos())
}

/// `N_B² = 1/(1 − s·sin2γ·cos2θ)`.
pub fn bridge_normalization_sq(gamma: f64, theta: f64, sign: Sign) -> f64 {
    1.0 / (1.0 - sign.value() * (2.0 * gamma).sin() * (2.0 * theta).cos())
}

/// `β` such that `M(β)·S` targets `U(s·π/4)` on top of `U(γ)`.
pub fn bridge_beta(gamma: f64, theta: f64, sign: Sign) -> f64 {
    let alpha = sign.value() * FRAC_PI_4 - gamma;
    (alpha.cos() * theta.sin()).atan2(alpha.sin() * theta.cos())
}

/// Merge success probability when the outer bits are unbiased:
/// `p_s(θ)(1 + s·sin2γ)`.
pub fn merge_probability(theta: f64, gamma: f64, sign: Sign) -> f64 {
    p_s(theta) * (1.0 + sign.value() * (2.0 * gamma).sin())
}

/// `p_b = N_B² p_s(θ)`.
pub fn bridge_probability(theta: f64, gamma: f64, sign: Sign) -> f64 {
    bridge_normalization_sq(gamma, theta, sign) * p_s(theta)
}

/// Amplification of a sign-matched merge, `1 + |sin2γ|`.
pub fn merge_amplification(gamma: f64) -> f64 {
    1.0 + (2.0 * gamma).sin().abs()
}

/// Amplification of a sign-matched bridge, `1/(1 − |sin2γ cos2θ|)`.
pub fn bridge_amplification(gamma: f64, theta: f64) -> f64 {
    1.0 / (1.0 - ((2.0 * gamma).sin() * (2.0 * theta).cos()).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JoinKind {
    Merge,
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Drop the cherry, then merge or bridge the tilted vertex.
    I,
    /// Realign with the cherry first.
    II,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodChoice {
    pub method: Method,
    pub p_i: f64,
    pub p_ii: f64,
}

fn amplification(kind: JoinKind, gamma: f64, theta: f64) -> f64 {
    match kind {
        JoinKind::Merge => merge_amplification(gamma),
        JoinKind::Bridge => bridge_amplification(gamma, theta),
    }
}

/// Picks the method with the larger success probability; ties go to (ii).
pub fn choose_method(theta_a: TiltAngle, gamma: f64, kind: JoinKind) -> MethodChoice {
    let ta = theta_a.radians();
    let p_i = amplification(kind, gamma, ta) * p_s(ta);
    let alpha = failure_tilt(ta);
    let p_ii = 1.0 - (1.0 - amplification(kind, gamma, alpha) * p_s(alpha)) * (1.0 - p_s(ta));
    let method = if p_i > p_ii { Method::I } else { Method::II };
    MethodChoice { method, p_i, p_ii }
}

/// Graph-frame tilt and phase of a vertex: `(θ, φ)` with amplitudes
/// `∝ (cosθ, e^{iφ} sinθ)`.
fn tilt_and_phase(g: &TiltedGraph, v: VertexId) -> Result<(f64, f64)> {
    let a = g.vertex(v).ok_or_else(|| graph_err(format!("no vertex {v}")))?.prep_amplitudes();
    let (r0, r1) = (a[0].norm(), a[1].norm());
    let phase = if r0 < 1e-15 || r1 < 1e-15 { 0.0 } else { (a[1] / a[0]).arg() };
    Ok((r1.atan2(r0), phase))
}

fn frame_undo(g: &TiltedGraph, v: VertexId) -> Unitary2 {
    if g.vertex(v).is_some_and(|x| x.hadamard) {
        Unitary2::hadamard()
    } else {
        Unitary2::IDENTITY
    }
}

fn corrections(before: &TiltedGraph, after: &TiltedGraph) -> Vec<(VertexId, f64)> {
    after
        .vertices()
        .filter_map(|v| {
            let old = before.vertex(v.id)?;
            let dz = crate::tilted_graph::reduce_phase(v.z_phase - old.z_phase);
            (dz.abs() > ANGLE_EPS).then_some((v.id, dz))
        })
        .collect()
}

fn check_outcome(outcome: u8) -> Result<usize> {
    match outcome {
        0 | 1 => Ok(usize::from(outcome)),
        _ => Err(Error::InvalidParameter(format!("outcome must be 0 or 1, got {outcome}"))),
    }
}

/// The vertex a cherry hangs off.
///
/// A cherry is a degree-one vertex joined by a control-Z whose graph-frame
/// preparation is an equal superposition.
pub fn cherry_center(g: &TiltedGraph, cherry: VertexId) -> Result<VertexId> {
    let v = g.vertex(cherry).ok_or_else(|| graph_err(format!("no vertex {cherry}")))?;
    let nbrs = g.neighbors(cherry);
    let [(center, EdgeAnnotation::Pure)] = nbrs.as_slice() else {
        return Err(Error::Precondition(format!("{cherry} is not a cherry: needs exactly one control-Z neighbour")));
    };
    let a = v.prep_amplitudes();
    if (a[0].norm() - a[1].norm()).abs() > 1e-9 {
        return Err(Error::Precondition(format!("{cherry} is not a cherry: its preparation is tilted")));
    }
    Ok(*center)
}

/// Every cherry hanging off `center`, in id order.
pub fn cherries_of(g: &TiltedGraph, center: VertexId) -> Vec<VertexId> {
    g.neighbors(center)
        .into_iter()
        .filter(|&(w, _)| cherry_center(g, w).is_ok_and(|c| c == center))
        .map(|(w, _)| w)
        .collect()
}

/// Born weight of `outcome` when a bit with amplitudes `(cosθ, sinθ)` is
/// projected onto row `outcome` of `u`.
fn row_weights(u: &Unitary2, outcome: usize) -> [f64; 2] {
    [u.0[outcome][0].re, u.0[outcome][1].re]
}

/// Realignment with a fixed measurement outcome. Outcome 1 is the success.
pub fn realign_branch(g: &TiltedGraph, cherry: VertexId, outcome: u8) -> Result<(ProcedureOutcome, TiltedGraph)> {
    let o = check_outcome(outcome)?;
    let v = cherry_center(g, cherry)?;
    if g.touched_by_fusion(v) {
        return Err(Error::Precondition(format!("{v} is correlated through a partial fusion")));
    }
    let (theta, phase_v) = tilt_and_phase(g, v)?;
    let (_, phase_k) = tilt_and_phase(g, cherry)?;
    let rotation = RotationDescriptor::M { theta };
    let m = rotation.unitary();
    let physical = m
        .mul(&Unitary2::z_phase(-phase_v))
        .mul(&Unitary2::hadamard())
        .mul(&Unitary2::z_phase(-phase_k))
        .mul(&frame_undo(g, cherry));
    let prob_of = |o: usize| {
        let w = row_weights(&m, o);
        (theta.cos() * w[0]).powi(2) + (theta.sin() * w[1]).powi(2)
    };
    let probability = prob_of(o);
    if probability < 1e-300 {
        return Err(Error::Precondition(format!("outcome {outcome} has zero probability")));
    }
    let w = row_weights(&m, o);
    let mut out = g.clone();
    out.remove_vertex(cherry)?;
    let out = reweight_graph_bit(&out, v, [C64::new(w[0], 0.0), C64::from_polar(w[1], -phase_v)])?;
    let tilt = out.vertex(v).expect("center survives").tilt;
    let outcome_rec = ProcedureOutcome {
        success: o == 1,
        resolved: tilt.is_untilted(),
        probability,
        success_probability: prob_of(1),
        measured: cherry,
        outcome,
        rotation,
        physical_rotation: physical,
        resulting_annotation: ResultingAnnotation::Tilt(tilt),
        corrections: corrections(g, &out),
    };
    Ok((outcome_rec, out))
}

/// Realignment with a sampled outcome.
pub fn realign<R: Rng + ?Sized>(
    g: &TiltedGraph,
    cherry: VertexId,
    rng: &mut R,
) -> Result<(ProcedureOutcome, TiltedGraph)> {
    let (probe, _) = realign_branch(g, cherry, 1).or_else(|_| realign_branch(g, cherry, 0))?;
    let outcome = u8::from(open_unit(rng) < probe.success_probability);
    realign_branch(g, cherry, outcome)
}

/// Drops a cherry by measuring its graph-frame Z.
pub fn remove_cherry_branch(g: &TiltedGraph, cherry: VertexId, outcome: u8) -> Result<(ProcedureOutcome, TiltedGraph)> {
    check_outcome(outcome)?;
    cherry_center(g, cherry)?;
    let out = measure_graph_z(g, cherry, outcome)?;
    let rec = ProcedureOutcome {
        success: true,
        resolved: false,
        probability: 0.5,
        success_probability: 1.0,
        measured: cherry,
        outcome,
        rotation: RotationDescriptor::PauliBasis(Pauli::Z),
        physical_rotation: frame_undo(g, cherry),
        resulting_annotation: ResultingAnnotation::Removed,
        corrections: corrections(g, &out),
    };
    Ok((rec, out))
}

pub fn remove_cherry<R: Rng + ?Sized>(
    g: &TiltedGraph,
    cherry: VertexId,
    rng: &mut R,
) -> Result<(ProcedureOutcome, TiltedGraph)> {
    let outcome = u8::from(open_unit(rng) < 0.5);
    remove_cherry_branch(g, cherry, outcome)
}

/// The two outer neighbours of a central vertex and its graph-frame tilt
/// and phase.
struct Center {
    x: VertexId,
    y: VertexId,
    theta: f64,
    phase: f64,
}

fn center(g: &TiltedGraph, c: VertexId) -> Result<Center> {
    let nbrs = g.neighbors(c);
    let [(x, EdgeAnnotation::Pure), (y, EdgeAnnotation::Pure)] = nbrs.as_slice() else {
        return Err(Error::Precondition(format!("{c} must have exactly two control-Z neighbours, has {}", nbrs.len())));
    };
    let (theta, phase) = tilt_and_phase(g, c)?;
    Ok(Center { x: *x, y: *y, theta, phase })
}

/// `⟨Z_x Z_y⟩` in the graph frame with `c` removed.
fn zz_expectation(g: &TiltedGraph, x: VertexId, y: VertexId, gamma: f64) -> Result<f64> {
    let mut m = 1.0;
    for v in [x, y] {
        let other_fusion =
            g.neighbors(v).iter().any(|&(w, a)| matches!(a, EdgeAnnotation::PartialFusion(_)) && w != x && w != y);
        if other_fusion {
            return Err(Error::Precondition(format!("{v} is correlated through another partial fusion")));
        }
        let a = g.vertex(v).expect("checked").prep_amplitudes();
        m *= (a[0].norm_sqr() - a[1].norm_sqr()) / (a[0].norm_sqr() + a[1].norm_sqr());
    }
    let s2 = (2.0 * gamma).sin();
    Ok((m + s2) / (1.0 + m * s2))
}

/// Merge sign that maximizes the success probability; ties go to `+`.
pub fn merge_sign(g: &TiltedGraph, central: VertexId) -> Result<Sign> {
    let c = center(g, central)?;
    let gamma = prior_angle(g, c.x, c.y, JoinKind::Merge)?;
    let zz = zz_expectation(g, c.x, c.y, gamma)?;
    Ok(Sign::from_nonnegative(zz))
}

fn prior_angle(g: &TiltedGraph, x: VertexId, y: VertexId, kind: JoinKind) -> Result<f64> {
    match (g.edge(x, y), kind) {
        (None, _) => Ok(0.0),
        (Some(EdgeAnnotation::PartialFusion(p)), JoinKind::Merge) => Ok(p),
        (Some(EdgeAnnotation::Weighted(p)), JoinKind::Bridge) => Ok(p),
        (Some(a), _) => Err(Error::Precondition(format!("existing {} edge between {x} and {y}", a.kind()))),
    }
}

fn near_quarter(phi: f64) -> bool {
    (reduce_mod_pi(phi).abs() - FRAC_PI_4).abs() < 1e-9
}

/// Merge with a fixed outcome. Outcome 1 installs the parity projector
/// `P(s·π/4)`; outcome 0 folds in `P(−s·R(θ))`.
pub fn merge_branch(
    g: &TiltedGraph,
    central: VertexId,
    sign: Option<Sign>,
    outcome: u8,
) -> Result<(ProcedureOutcome, TiltedGraph)> {
    let o = check_outcome(outcome)?;
    let c = center(g, central)?;
    let gamma = prior_angle(g, c.x, c.y, JoinKind::Merge)?;
    let zz = zz_expectation(g, c.x, c.y, gamma)?;
    let sign = sign.unwrap_or(Sign::from_nonnegative(zz));
    let rotation = RotationDescriptor::M { theta: sign.value() * c.theta };
    let m = rotation.unitary();
    let physical = m.mul(&Unitary2::z_phase(-c.phase)).mul(&frame_undo(g, central));
    let prob_of = |o: usize| {
        let w = row_weights(&m, o);
        let (a, b) = (c.theta.cos() * w[0], c.theta.sin() * w[1]);
        a * a + b * b + 2.0 * a * b * zz
    };
    let probability = prob_of(o);
    if probability < 1e-300 {
        return Err(Error::Precondition(format!("outcome {outcome} has zero probability")));
    }
    let w = row_weights(&m, o);
    let angle = reduce_mod_pi((c.theta.sin() * w[1]).atan2(c.theta.cos() * w[0]));
    let mut out = g.clone();
    out.remove_vertex(central)?;
    out.fold_edge(c.x, c.y, EdgeAnnotation::PartialFusion(angle))?;
    let combined = out.edge(c.x, c.y).unwrap_or(EdgeAnnotation::PartialFusion(0.0));
    let resolved = combined.angle().is_some_and(near_quarter);
    let out = canonicalize(&out)?;
    let rec = ProcedureOutcome {
        success: o == 1,
        resolved,
        probability,
        success_probability: prob_of(1),
        measured: central,
        outcome,
        rotation,
        physical_rotation: physical,
        resulting_annotation: ResultingAnnotation::Edge(combined),
        corrections: corrections(g, &out),
    };
    Ok((rec, out))
}

pub fn merge<R: Rng + ?Sized>(
    g: &TiltedGraph,
    central: VertexId,
    sign: Option<Sign>,
    rng: &mut R,
) -> Result<(ProcedureOutcome, TiltedGraph)> {
    sample_branch(|o| merge_branch(g, central, sign, o), rng)
}

/// Bridge with a fixed outcome. Outcome 1 turns the weighted edge into
/// `U(s·π/4)`, a control-Z up to local phases.
pub fn bridge_branch(
    g: &TiltedGraph,
    central: VertexId,
    sign: Option<Sign>,
    outcome: u8,
) -> Result<(ProcedureOutcome, TiltedGraph)> {
    let o = check_outcome(outcome)?;
    let c = center(g, central)?;
    let gamma = prior_angle(g, c.x, c.y, JoinKind::Bridge)?;
    let sign = sign.unwrap_or_else(|| bridge_sign(gamma, c.theta));
    let beta = bridge_beta(gamma, c.theta, sign);
    let rotation = RotationDescriptor::MS { beta };
    let m = Unitary2::m(beta);
    let physical = rotation.unitary().mul(&Unitary2::z_phase(-c.phase)).mul(&frame_undo(g, central));
    let prob_of = |o: usize| {
        let w = row_weights(&m, o);
        (c.theta.cos() * w[0]).powi(2) + (c.theta.sin() * w[1]).powi(2)
    };
    let probability = prob_of(o);
    if probability < 1e-300 {
        return Err(Error::Precondition(format!("outcome {outcome} has zero probability")));
    }
    let w = row_weights(&m, o);
    let delta = (c.theta.sin() * w[1]).atan2(c.theta.cos() * w[0]);
    let mut out = g.clone();
    out.remove_vertex(central)?;
    out.fold_edge(c.x, c.y, EdgeAnnotation::Weighted(reduce_mod_pi(delta)))?;
    let combined = out.edge(c.x, c.y).unwrap_or(EdgeAnnotation::Weighted(0.0));
    let resolved = combined.angle().is_some_and(near_quarter);
    let out = canonicalize(&out)?;
    let rec = ProcedureOutcome {
        success: o == 1,
        resolved,
        probability,
        success_probability: prob_of(1),
        measured: central,
        outcome,
        rotation,
        physical_rotation: physical,
        resulting_annotation: ResultingAnnotation::Edge(combined),
        corrections: corrections(g, &out),
    };
    Ok((rec, out))
}

pub fn bridge<R: Rng + ?Sized>(
    g: &TiltedGraph,
    central: VertexId,
    sign: Option<Sign>,
    rng: &mut R,
) -> Result<(ProcedureOutcome, TiltedGraph)> {
    sample_branch(|o| bridge_branch(g, central, sign, o), rng)
}

fn sample_branch<R, F>(branch: F, rng: &mut R) -> Result<(ProcedureOutcome, TiltedGraph)>
where
    R: Rng + ?Sized,
    F: Fn(u8) -> Result<(ProcedureOutcome, TiltedGraph)>,
{
    // Either branch reports both probabilities; one of them is possible.
    let probe = branch(1).or_else(|_| branch(0))?;
    let outcome = u8::from(open_unit(rng) < probe.0.success_probability);
    if (outcome == 1) == probe.0.success {
        Ok(probe)
    } else {
        branch(outcome)
    }
}

/// Realigns `center` with its own cherries until it is untilted, the budget
/// of cherries is spent, or none remain. Returns every attempt.
pub fn realign_until<R: Rng + ?Sized>(
    g: &TiltedGraph,
    center: VertexId,
    budget: usize,
    rng: &mut R,
) -> Result<(Vec<ProcedureOutcome>, TiltedGraph)> {
    let mut g = g.clone();
    let mut log = Vec::new();
    while log.len() < budget {
        let tilt = g.vertex(center).ok_or_else(|| graph_err(format!("no vertex {center}")))?.tilt;
        if tilt.is_untilted() || tilt.is_degenerate() {
            break;
        }
        let Some(&k) = cherries_of(&g, center).first() else {
            break;
        };
        let (rec, next) = realign(&g, k, rng)?;
        g = next;
        log.push(rec);
    }
    Ok((log, g))
}

/// `π/2 − θ` keeps `p_s`; used to fold tilts into `[0, π/4]`.
pub fn folded_tilt(theta: f64) -> f64 {
    let t = theta.rem_euclid(FRAC_PI_2);
    t.min(FRAC_PI_2 - t)
}
