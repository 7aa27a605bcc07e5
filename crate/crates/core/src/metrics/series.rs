//! Series expansion of `E(F²)` about the diagonal `Θ₁ = Θ₂`.

use crate::error::{Error, Result};
use crate::leakage::{integrate_2d_with, LeakageProfile, QuadratureSettings};
use crate::tilted_graph::TiltAngle;

use super::{EvaluationMethod, ExpectationResult};
use crate::heralding::theta_weights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    /// Expansion in `K = Θ₁/Θ₂ − 1` over the `J_n`.
    RI,
    /// Expansion in `K' = Θ₂/Θ₁ − 1` over the `I_n`.
    RJ,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTerms {
    /// `I_0..=I_N` (region `RJ`) or `J_0..=J_N` (region `RI`).
    pub values: Vec<f64>,
    pub region: Region,
    /// The expansion parameter used.
    pub k: f64,
}

/// `∫∫ UV/(U+V) · (V/(U+V))^n` with `U = P_A(t₁)P_B(t₂)`, `V = P_B(t₁)P_A(t₂)`.
pub fn i_n(pa: &LeakageProfile, pb: &LeakageProfile, n: u32, settings: &QuadratureSettings) -> Result<f64> {
    moment(pa, pb, n, false, settings)
}

/// As [`i_n`] with `U/(U+V)` as the base of the power.
pub fn j_n(pa: &LeakageProfile, pb: &LeakageProfile, n: u32, settings: &QuadratureSettings) -> Result<f64> {
    moment(pa, pb, n, true, settings)
}

fn moment(pa: &LeakageProfile, pb: &LeakageProfile, n: u32, use_u: bool, settings: &QuadratureSettings) -> Result<f64> {
    let est = integrate_2d_with(
        |t| (pa.density(t), pb.density(t)),
        |&(a1, b1): &(f64, f64), &(a2, b2): &(f64, f64)| {
            let (u, v) = (a1 * b2, b1 * a2);
            let s = u + v;
            if s <= 0.0 {
                return 0.0;
            }
            let base = if use_u { u / s } else { v / s };
            u * v / s * base.powi(n as i32)
        },
        settings,
    )?;
    Ok(est.value)
}

/// The series for `E(F²)` truncated after `order`, in whichever region has
/// the smaller expansion parameter.
pub fn efsq_series(
    theta_a: TiltAngle,
    theta_b: TiltAngle,
    pa: &LeakageProfile,
    pb: &LeakageProfile,
    order: u32,
    settings: &QuadratureSettings,
) -> Result<(ExpectationResult, SeriesTerms)> {
    let (th1, th2) = theta_weights(theta_a, theta_b);
    if !(th1 > 0.0 && th2 > 0.0) {
        return Err(Error::Series(format!(
            "({}, {}) lies outside both expansion regions",
            theta_a.radians(),
            theta_b.radians()
        )));
    }
    let (region, lead, k) = if (th1 / th2 - 1.0).abs() <= (th2 / th1 - 1.0).abs() {
        (Region::RI, th1, th1 / th2 - 1.0)
    } else {
        (Region::RJ, th2, th2 / th1 - 1.0)
    };
    if k.abs() >= 1.0 {
        return Err(Error::Series(format!("expansion parameter |K| = {} does not converge", k.abs())));
    }
    let values = (0..=order)
        .map(|n| match region {
            Region::RI => j_n(pa, pb, n, settings),
            Region::RJ => i_n(pa, pb, n, settings),
        })
        .collect::<Result<Vec<_>>>()?;
    let value = lead * values.iter().enumerate().map(|(n, v)| (-k).powi(n as i32) * v).sum::<f64>();
    // Terms decrease and alternate (or all share a sign); the next term
    // bounds the truncation error.
    let next = lead * k.abs().powi(order as i32 + 1) * values.last().copied().unwrap_or(0.0);
    let result = ExpectationResult { value, method: EvaluationMethod::Series { order }, estimated_error: next };
    Ok((result, SeriesTerms { values, region, k }))
}
