//! The double-heralding event model and its graph rewrite.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use rand::Rng;

use crate::error::{graph_err, Error, Result};
use crate::leakage::{LeakageProfile, TimeSampler};
use crate::rng::open_unit;
use crate::tilted_graph::{
    apply_lab_x, canonicalize, graph_bit_probability, lab_bit_carrier, measure_lab_z, reweight_graph_bit,
    EdgeAnnotation, TiltAngle, TiltedGraph, VertexId,
};
use crate::C64;

/// Everything one double-heralding attempt depends on.
#[derive(Clone, Debug)]
pub struct DhContext {
    pub theta_a: TiltAngle,
    pub theta_b: TiltAngle,
    pub pa: LeakageProfile,
    pub pb: LeakageProfile,
    detection_efficiency: f64,
}

impl DhContext {
    pub fn new(theta_a: TiltAngle, theta_b: TiltAngle, pa: LeakageProfile, pb: LeakageProfile) -> Self {
        Self { theta_a, theta_b, pa, pb, detection_efficiency: 1.0 }
    }

    /// Two untilted qubits.
    pub fn untilted(pa: LeakageProfile, pb: LeakageProfile) -> Self {
        Self::new(TiltAngle::UNTILTED, TiltAngle::UNTILTED, pa, pb)
    }

    pub fn with_detection_efficiency(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("detection efficiency must lie in (0, 1], got {eta}")));
        }
        self.detection_efficiency = eta;
        Ok(self)
    }

    pub fn detection_efficiency(&self) -> f64 {
        self.detection_efficiency
    }

    /// `(Θ₁, Θ₂) = (cos²θ_a sin²θ_b, sin²θ_a cos²θ_b)`.
    pub fn thetas(&self) -> (f64, f64) {
        theta_weights(self.theta_a, self.theta_b)
    }

    /// Probability that both rounds click: `η²·m_A·m_B·(Θ₁ + Θ₂)`, where the
    /// masses are 1 unless a tabulated profile loses photons.
    pub fn success_probability(&self) -> f64 {
        let eta = self.detection_efficiency;
        eta * eta * self.pa.total_mass() * self.pb.total_mass() * success_probability(self.theta_a, self.theta_b)
    }

    /// The same context with A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            theta_a: self.theta_b,
            theta_b: self.theta_a,
            pa: self.pb.clone(),
            pb: self.pa.clone(),
            detection_efficiency: self.detection_efficiency,
        }
    }
}

/// `(Θ₁, Θ₂)` for the given tilts.
pub fn theta_weights(theta_a: TiltAngle, theta_b: TiltAngle) -> (f64, f64) {
    let (sa, ca) = theta_a.radians().sin_cos();
    let (sb, cb) = theta_b.radians().sin_cos();
    (ca * ca * sb * sb, sa * sa * cb * cb)
}

/// Ideal success probability `cos²θ_a sin²θ_b + sin²θ_a cos²θ_b`.
pub fn success_probability(theta_a: TiltAngle, theta_b: TiltAngle) -> f64 {
    let (t1, t2) = theta_weights(theta_a, theta_b);
    t1 + t2
}

/// Detector click times of both rounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClickPair {
    pub t1: f64,
    pub t2: f64,
}

impl ClickPair {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 > 0.0 && t2 > 0.0 && t1.is_finite() && t2.is_finite()) {
            return Err(Error::InvalidParameter(format!("click times must be positive, got ({t1}, {t2})")));
        }
        Ok(Self { t1, t2 })
    }
}

/// The two which-path likelihood terms of a click record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClickLikelihood {
    /// `Θ₁ P_A(t₁) P_B(t₂)`: A emitted first.
    pub x_term: f64,
    /// `Θ₂ P_B(t₁) P_A(t₂)`: B emitted first.
    pub y_term: f64,
}

impl ClickLikelihood {
    pub fn new(ctx: &DhContext, clicks: ClickPair) -> Self {
        let (th1, th2) = ctx.thetas();
        Self {
            x_term: th1 * ctx.pa.density(clicks.t1) * ctx.pb.density(clicks.t2),
            y_term: th2 * ctx.pb.density(clicks.t1) * ctx.pa.density(clicks.t2),
        }
    }

    pub fn total(&self) -> f64 {
        self.x_term + self.y_term
    }

    /// `F = √(XY)/(X+Y)`, the gate quality of the heralded pair.
    pub fn gate_quality(&self) -> f64 {
        crate::metrics::quality(self.x_term, self.y_term)
    }

    /// `θ_β` with `cos²θ_β = Y/(X+Y)`.
    pub fn tilt(&self) -> Result<TiltAngle> {
        if !(self.total() > 0.0) {
            return Err(Error::UndefinedTilt);
        }
        Ok(TiltAngle::new(self.x_term.sqrt().atan2(self.y_term.sqrt())))
    }
}

/// Product of the two detector signs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Plus,
    Minus,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Plus => 1.0,
            Parity::Minus => -1.0,
        }
    }

    pub fn from_detectors(first_plus: bool, second_plus: bool) -> Self {
        if first_plus == second_plus {
            Parity::Plus
        } else {
            Parity::Minus
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Parity::Plus
        } else {
            Parity::Minus
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DhOutcome {
    Success {
        theta_beta: TiltAngle,
        clicks: ClickPair,
        parity: Parity,
    },
    /// Fewer than two clicks; both qubits are Z-measured with these lab
    /// outcomes (A, B).
    Failure {
        z_outcomes: [u8; 2],
    },
}

impl DhOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, DhOutcome::Success { .. })
    }
}

/// Round-one click density `Θ₁P_A(t₁) + Θ₂P_B(t₁)`.
pub fn click_density_first(t1: f64, ctx: &DhContext) -> f64 {
    let (th1, th2) = ctx.thetas();
    th1 * ctx.pa.density(t1) + th2 * ctx.pb.density(t1)
}

/// Joint density `X + Y` of both click times.
pub fn click_density_joint(clicks: ClickPair, ctx: &DhContext) -> f64 {
    ClickLikelihood::new(ctx, clicks).total()
}

/// Density of `t₂` given a round-one click at `t₁`.
pub fn conditional_second(clicks: ClickPair, ctx: &DhContext) -> Result<f64> {
    let q1 = click_density_first(clicks.t1, ctx);
    if !(q1 > 0.0) {
        return Err(Error::NullConditioning(format!("no round-one click density at t1 = {}", clicks.t1)));
    }
    Ok(click_density_joint(clicks, ctx) / q1)
}

/// Tilt of the vertex produced by a successful attempt.
pub fn tilt_after_dh(ctx: &DhContext, clicks: ClickPair) -> Result<TiltAngle> {
    ClickLikelihood::new(ctx, clicks).tilt()
}

/// Samples attempts and click records for a fixed context.
#[derive(Clone, Debug)]
pub struct DhSampler {
    ctx: DhContext,
    sa: Arc<TimeSampler>,
    sb: Arc<TimeSampler>,
}

impl DhSampler {
    pub fn new(ctx: DhContext) -> Result<Self> {
        let sa = Arc::new(TimeSampler::new(&ctx.pa)?);
        let sb = Arc::new(TimeSampler::new(&ctx.pb)?);
        Ok(Self { ctx, sa, sb })
    }

    /// Reuses already built samplers for a context with new tilts.
    pub fn from_samplers(theta_a: TiltAngle, theta_b: TiltAngle, sa: Arc<TimeSampler>, sb: Arc<TimeSampler>) -> Self {
        let ctx = DhContext::new(theta_a, theta_b, sa.profile().clone(), sb.profile().clone());
        Self { ctx, sa, sb }
    }

    pub fn with_detection_efficiency(mut self, eta: f64) -> Result<Self> {
        self.ctx = self.ctx.with_detection_efficiency(eta)?;
        Ok(self)
    }

    pub fn context(&self) -> &DhContext {
        &self.ctx
    }

    /// Click times conditioned on success: A-first with probability
    /// `Θ₁/(Θ₁+Θ₂)`, each time drawn from its profile.
    pub fn sample_clicks<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ClickPair> {
        let (th1, th2) = self.ctx.thetas();
        if !(th1 + th2 > 0.0) {
            return Err(Error::NullConditioning("both which-path weights vanish".into()));
        }
        let a_first = open_unit(rng) * (th1 + th2) < th1;
        let (first, second) = if a_first { (&self.sa, &self.sb) } else { (&self.sb, &self.sa) };
        let t1 = first.sample(rng);
        let t2 = second.sample(rng);
        ClickPair::new(t1, t2)
    }

    /// One full attempt.
    pub fn attempt<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DhOutcome> {
        let p = self.ctx.success_probability();
        if open_unit(rng) < p {
            let clicks = self.sample_clicks(rng)?;
            let theta_beta = tilt_after_dh(&self.ctx, clicks)?;
            return Ok(DhOutcome::Success { theta_beta, clicks, parity: Parity::sample(rng) });
        }
        Ok(DhOutcome::Failure { z_outcomes: self.failure_outcomes(rng) })
    }

    /// Lab Z values left behind by a failed attempt. Equal bits always fail;
    /// unequal bits fail when a photon is lost.
    fn failure_outcomes<R: Rng + ?Sized>(&self, rng: &mut R) -> [u8; 2] {
        let (sa, ca) = self.ctx.theta_a.radians().sin_cos();
        let (sb, cb) = self.ctx.theta_b.radians().sin_cos();
        let (th1, th2) = self.ctx.thetas();
        let keep = self.ctx.success_probability() / success_probability(self.ctx.theta_a, self.ctx.theta_b).max(1e-300);
        let lost = 1.0 - keep.min(1.0);
        let w = [(ca * cb).powi(2), (sa * sb).powi(2), lost * th1, lost * th2];
        let total: f64 = w.iter().sum();
        let mut u = open_unit(rng) * total;
        let bits = [[0, 0], [1, 1], [0, 1], [1, 0]];
        for (wk, b) in w.iter().zip(bits) {
            if u < *wk {
                return b;
            }
            u -= wk;
        }
        bits[w.iter().rposition(|&x| x > 0.0).unwrap_or(0)]
    }
}

/// Convenience wrapper around [`DhSampler::sample_clicks`].
pub fn sample_clicks<R: Rng + ?Sized>(ctx: &DhContext, rng: &mut R) -> Result<ClickPair> {
    DhSampler::new(ctx.clone())?.sample_clicks(rng)
}

/// Rewrites `g` for a double-heralding attempt on the qubits `qa`, `qb`.
///
/// Each qubit must expose its lab Z value through a single vertex: either
/// itself (no Hadamard) or, for a Hadamard leaf in `|±⟩`, the vertex it
/// hangs off. Those carrier bits must be uncorrelated with the rest of the
/// graph, which holds whenever no partial fusion touches them.
pub fn apply_dh_to_graph(g: &TiltedGraph, qa: VertexId, qb: VertexId, outcome: DhOutcome) -> Result<TiltedGraph> {
    for q in [qa, qb] {
        if !g.contains(q) {
            return Err(graph_err(format!("no vertex {q}")));
        }
    }
    if qa == qb {
        return Err(graph_err(format!("double heralding needs two qubits, got {qa} twice")));
    }
    match outcome {
        DhOutcome::Failure { z_outcomes } => {
            let g = measure_lab_z(g, qa, z_outcomes[0])?;
            measure_lab_z(&g, qb, z_outcomes[1])
        }
        DhOutcome::Success { theta_beta, parity, .. } => {
            let (ca, fa) = carrier(g, qa)?;
            let (cb, fb) = carrier(g, qb)?;
            if ca == cb || g.edge(ca, cb).is_some() {
                return Err(graph_err(format!("lab bits of {qa} and {qb} share a vertex or an edge")));
            }
            let ta = lab_tilt(g, ca, fa)?;
            let tb = lab_tilt(g, cb, fb)?;
            // Kraus weights on A's lab bit within the odd-parity sector.
            let (sbeta, cbeta) = theta_beta.radians().sin_cos();
            let ratio = |num: f64, den: f64| if den.abs() < 1e-15 { 0.0 } else { num / den };
            let w0 = ratio(sbeta, ta.cos() * tb.sin());
            let w1 = parity.sign() * ratio(cbeta, ta.sin() * tb.cos());
            if w0 == 0.0 && w1 == 0.0 {
                return Err(Error::Precondition("heralded outcome has zero amplitude for these qubits".into()));
            }
            let weights = if fa { [w1, w0] } else { [w0, w1] };
            let mut out = reweight_graph_bit(g, ca, weights.map(|w| C64::new(w, 0.0)))?;
            // Odd lab parity, seen through the carriers' complement flags.
            let angle = if fa ^ fb { FRAC_PI_4 } else { -FRAC_PI_4 };
            out.fold_edge(ca, cb, EdgeAnnotation::PartialFusion(angle))?;
            let out = canonicalize(&out)?;
            let out = apply_lab_x(&out, qa)?;
            let out = apply_lab_x(&out, qb)?;
            canonicalize(&out)
        }
    }
}

/// Tilt of the lab Z distribution of qubit `q`, the angle a double-heralding
/// context needs for it.
pub fn lab_qubit_tilt(g: &TiltedGraph, q: VertexId) -> Result<TiltAngle> {
    let (c, flip) = carrier(g, q)?;
    Ok(TiltAngle::new(lab_tilt(g, c, flip)?))
}

/// Kraus weights `(√(P_A(t₁)P_B(t₂)), s·√(P_B(t₁)P_A(t₂)))` of a heralded
/// success on the odd lab sector `|01⟩`, `|10⟩`.
pub fn kraus_weights(ctx: &DhContext, clicks: ClickPair, parity: Parity) -> [f64; 2] {
    let a = (ctx.pa.density(clicks.t1) * ctx.pb.density(clicks.t2)).sqrt();
    let b = (ctx.pb.density(clicks.t1) * ctx.pa.density(clicks.t2)).sqrt();
    [a, parity.sign() * b]
}

fn carrier(g: &TiltedGraph, q: VertexId) -> Result<(VertexId, bool)> {
    lab_bit_carrier(g, q).ok_or_else(|| graph_err(format!("{q} has no single lab-bit carrier")))
}

/// Tilt of the lab Z distribution carried by `c`.
fn lab_tilt(g: &TiltedGraph, c: VertexId, flip: bool) -> Result<f64> {
    let p1 = graph_bit_probability(g, c)
        .ok_or_else(|| graph_err(format!("bit of {c} is correlated through a partial fusion")))?;
    let p1 = if flip { 1.0 - p1 } else { p1 };
    Ok(p1.sqrt().atan2((1.0 - p1).max(0.0).sqrt()))
}
