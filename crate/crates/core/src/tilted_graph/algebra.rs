//! Combination rules for annotations sitting on the same vertex pair.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use super::{reduce_mod_pi, EdgeAnnotation, TiltAngle, Vertex};
use crate::error::{graph_err, Error, Result};

/// `P(φ₁)P(φ₂) = N_M·P(φ)`. Returns `(φ, N_M)` with φ canonical.
///
/// Fails when the product vanishes (`φ₁ − φ₂ = ±π/2` with
/// `φ₁ + φ₂ ∈ {0, π}`), i.e. opposite-parity projectors.
pub fn combine_partial_fusions(phi1: f64, phi2: f64) -> Result<(f64, f64)> {
    let s = (phi1 + phi2).sin();
    let c = (phi1 - phi2).cos();
    let n = c.hypot(s);
    if n < 1e-15 {
        return Err(Error::Annihilation);
    }
    // Shifting by π only flips the overall sign of P, which renormalization
    // discards.
    Ok((reduce_mod_pi(s.atan2(c)), n))
}

/// `U(φ₁)U(φ₂) = U(φ₁ + φ₂)`, reduced modulo π.
pub fn combine_weighted_edges(phi1: f64, phi2: f64) -> f64 {
    reduce_mod_pi(phi1 + phi2)
}

/// Relabels a vertex with the X absorbed into its tilt: `X|θ⟩ = |π/2 − θ⟩`.
/// The prepared state is unchanged; the flag records the relabelling.
pub fn apply_x_flip(v: &Vertex) -> Vertex {
    Vertex { tilt: TiltAngle::new(FRAC_PI_2 - v.tilt.radians()), x_flip: !v.x_flip, ..*v }
}

pub(crate) struct Folded {
    pub annotation: Option<EdgeAnnotation>,
    /// Z phase to add to both endpoints.
    pub z_correction: f64,
}

/// Product of two diagonal edge operators on one pair.
pub(crate) fn fold(a: EdgeAnnotation, b: EdgeAnnotation) -> Result<Folded> {
    use EdgeAnnotation::*;
    let plain = |ann| Ok(Folded { annotation: Some(ann), z_correction: 0.0 });
    match (a, b) {
        (Pure, Pure) => Ok(Folded { annotation: None, z_correction: 0.0 }),
        (Weighted(x), Weighted(y)) => plain(Weighted(combine_weighted_edges(x, y))),
        (PartialFusion(x), PartialFusion(y)) => plain(PartialFusion(combine_partial_fusions(x, y)?.0)),
        // CZ ∝ U(π/4)·S⊗S.
        (Pure, Weighted(x)) | (Weighted(x), Pure) => {
            Ok(Folded { annotation: Some(Weighted(combine_weighted_edges(x, FRAC_PI_4))), z_correction: FRAC_PI_2 })
        }
        (x, y) => Err(graph_err(format!("cannot fold a {} edge with a {} edge on the same pair", x.kind(), y.kind()))),
    }
}
