//! Canonicalization and the local operations used by the procedures.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use super::{reduce_mod_pi, EdgeAnnotation, TiltAngle, TiltedGraph, Vertex, VertexId, ANGLE_EPS};
use crate::error::{graph_err, Error, Result};
use crate::C64;

enum Rule {
    Replace(EdgeAnnotation),
    Drop,
    /// Remove the edge and apply `Z(dz)` to both endpoints.
    DropWithZ(f64),
    ToPure(f64),
    Merge {
        even: bool,
    },
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < ANGLE_EPS
}

fn rule_for(ann: EdgeAnnotation) -> Option<Rule> {
    match ann {
        EdgeAnnotation::Pure => None,
        EdgeAnnotation::Weighted(phi) => {
            let r = reduce_mod_pi(phi);
            if near(r, 0.0) {
                Some(Rule::Drop)
            } else if near(r.abs(), FRAC_PI_2) {
                // U(π/2) = i·Z⊗Z.
                Some(Rule::DropWithZ(PI))
            } else if near(r, FRAC_PI_4) {
                // U(π/4) ∝ CZ·S†⊗S†.
                Some(Rule::ToPure(-FRAC_PI_2))
            } else if near(r, -FRAC_PI_4) {
                Some(Rule::ToPure(FRAC_PI_2))
            } else if r != phi {
                Some(Rule::Replace(EdgeAnnotation::Weighted(r)))
            } else {
                None
            }
        }
        EdgeAnnotation::PartialFusion(phi) => {
            let r = reduce_mod_pi(phi);
            if near(r, 0.0) {
                Some(Rule::Drop)
            } else if near(r.abs(), FRAC_PI_2) {
                // P(π/2) = Z⊗Z.
                Some(Rule::DropWithZ(PI))
            } else if near(r, FRAC_PI_4) {
                Some(Rule::Merge { even: true })
            } else if near(r, -FRAC_PI_4) {
                Some(Rule::Merge { even: false })
            } else if r != phi {
                Some(Rule::Replace(EdgeAnnotation::PartialFusion(r)))
            } else {
                None
            }
        }
    }
}

/// Rewrites a graph into canonical form without changing its state.
///
/// Annotation angles are reduced into `(−π/2, π/2]`; weighted edges at
/// `±π/4` become control-Z plus Z phases; partial fusions at `±π/4` (parity
/// projectors) are resolved by merging the higher-id endpoint into the lower
/// one, after which the absorbed vertex hangs off the survivor as a Hadamard
/// leaf copying its bit; every vertex is put in the `θ ∈ [0, π/2]`, no-X form.
///
/// Fails only if the graph describes the zero vector (opposite-parity
/// projectors on the same pair of bits).
pub fn canonicalize(g: &TiltedGraph) -> Result<TiltedGraph> {
    let mut g = g.clone();
    let budget = 16 * (g.edge_count() + g.qubit_count()) + 16;
    for _ in 0..budget {
        let next = g.edges().find_map(|((a, b), ann)| rule_for(ann).map(|r| (a, b, r)));
        let Some((a, b, rule)) = next else {
            for v in g.vertices.values_mut() {
                *v = Vertex::from_amplitudes(v.id, v.prep_amplitudes(), v.hadamard)?;
            }
            return Ok(g);
        };
        match rule {
            Rule::Replace(ann) => {
                g.set_edge(a, b, ann)?;
            }
            Rule::Drop => {
                g.remove_edge(a, b);
            }
            Rule::DropWithZ(dz) => {
                g.remove_edge(a, b);
                g.add_z_phase(a, dz)?;
                g.add_z_phase(b, dz)?;
            }
            Rule::ToPure(dz) => {
                g.set_edge(a, b, EdgeAnnotation::Pure)?;
                g.add_z_phase(a, dz)?;
                g.add_z_phase(b, dz)?;
            }
            Rule::Merge { even } => merge_pair(&mut g, a, b, even)?,
        }
    }
    Err(graph_err("canonicalization did not terminate"))
}

/// Resolves the parity projector `(1 ± ZZ)/2` on `a`–`b`.
fn merge_pair(g: &mut TiltedGraph, a: VertexId, b: VertexId, even: bool) -> Result<()> {
    let (x, y) = (a.min(b), a.max(b));
    g.remove_edge(x, y);
    let vx = *g.vertex_mut(x)?;
    let vy = *g.vertex_mut(y)?;
    let ax = vx.prep_amplitudes();
    let ay = vy.prep_amplitudes();
    let (y0, y1) = if even { (ay[0], ay[1]) } else { (ay[1], ay[0]) };
    let merged = Vertex::from_amplitudes(x, [ax[0] * y0, ax[1] * y1], vx.hadamard).map_err(|e| match e {
        Error::ZeroNorm => Error::Annihilation,
        e => e,
    })?;
    *g.vertex_mut(x)? = merged;
    // With odd parity Z_y = −Z_x, so y's edges change sign when moved.
    for (w, ann) in g.neighbors(y) {
        g.remove_edge(y, w);
        let moved = match (even, ann) {
            (true, ann) => ann,
            (false, EdgeAnnotation::Pure) => {
                g.add_z_phase(w, PI)?;
                EdgeAnnotation::Pure
            }
            (false, EdgeAnnotation::Weighted(p)) => EdgeAnnotation::Weighted(-p),
            (false, EdgeAnnotation::PartialFusion(p)) => EdgeAnnotation::PartialFusion(-p),
        };
        g.fold_edge(x, w, moved)?;
    }
    *g.vertex_mut(y)? = Vertex {
        id: y,
        tilt: TiltAngle::UNTILTED,
        hadamard: !vy.hadamard,
        z_phase: if even { 0.0 } else { PI },
        x_flip: false,
    };
    g.add_edge(x, y, EdgeAnnotation::Pure)
}

/// X on `v` in the graph frame, pushed back through its edges.
fn graph_frame_x(g: &mut TiltedGraph, v: VertexId) -> Result<()> {
    for (w, ann) in g.neighbors(v) {
        match ann {
            EdgeAnnotation::Pure => g.add_z_phase(w, PI)?,
            EdgeAnnotation::Weighted(p) => g.set_edge(v, w, EdgeAnnotation::Weighted(-p))?,
            EdgeAnnotation::PartialFusion(p) => g.set_edge(v, w, EdgeAnnotation::PartialFusion(-p))?,
        }
    }
    // X·Z(z) = e^{iz}·Z(−z)·X.
    let vx = g.vertex_mut(v)?;
    vx.z_phase = super::reduce_phase(-vx.z_phase);
    vx.x_flip = !vx.x_flip;
    Ok(())
}

/// Physical X on the qubit `v`.
pub fn apply_lab_x(g: &TiltedGraph, v: VertexId) -> Result<TiltedGraph> {
    let mut g = g.clone();
    if g.vertex_mut(v)?.hadamard {
        // X·H = H·Z.
        g.add_z_phase(v, PI)?;
    } else {
        graph_frame_x(&mut g, v)?;
    }
    Ok(g)
}

/// Physical `Z(φ) = diag(1, e^{iφ})` on `v`. Behind a Hadamard only `φ = π`
/// keeps the graph form.
pub fn apply_lab_z(g: &TiltedGraph, v: VertexId, phi: f64) -> Result<TiltedGraph> {
    let mut g = g.clone();
    if !g.vertex_mut(v)?.hadamard {
        g.add_z_phase(v, phi)?;
    } else if near(super::reduce_phase(phi), PI) {
        graph_frame_x(&mut g, v)?;
    } else if !near(super::reduce_phase(phi), 0.0) {
        return Err(graph_err(format!("Z({phi}) behind a Hadamard on {v} leaves the graph form")));
    }
    Ok(g)
}

/// Physical Hadamard on `v`.
pub fn apply_lab_hadamard(g: &TiltedGraph, v: VertexId) -> Result<TiltedGraph> {
    let mut g = g.clone();
    let vx = g.vertex_mut(v)?;
    vx.hadamard = !vx.hadamard;
    Ok(g)
}

/// Multiplies the graph-frame amplitudes of `v` by `weights`, i.e. applies a
/// diagonal (not necessarily unitary) operator before the edges.
pub fn reweight_graph_bit(g: &TiltedGraph, v: VertexId, weights: [C64; 2]) -> Result<TiltedGraph> {
    let mut g = g.clone();
    reweight_in_place(&mut g, v, weights)?;
    Ok(g)
}

pub(crate) fn reweight_in_place(g: &mut TiltedGraph, v: VertexId, weights: [C64; 2]) -> Result<()> {
    let vx = g.vertex_mut(v)?;
    let a = vx.prep_amplitudes();
    *vx = Vertex::from_amplitudes(v, [a[0] * weights[0], a[1] * weights[1]], vx.hadamard)?;
    Ok(())
}

/// Projects the graph-frame bit of `v` onto `outcome` and removes `v`,
/// pushing its effect onto the neighbours.
pub fn measure_graph_z(g: &TiltedGraph, v: VertexId, outcome: u8) -> Result<TiltedGraph> {
    let mut g = g.clone();
    measure_graph_z_in_place(&mut g, v, outcome)?;
    Ok(g)
}

fn measure_graph_z_in_place(g: &mut TiltedGraph, v: VertexId, outcome: u8) -> Result<()> {
    let b = usize::from(outcome != 0);
    let amp = g.vertex_mut(v)?.prep_amplitudes()[b];
    if amp.norm() < 1e-15 {
        return Err(Error::Precondition(format!("outcome {outcome} on {v} has zero amplitude")));
    }
    let s = if b == 0 { 1.0 } else { -1.0 };
    for (w, ann) in g.neighbors(v) {
        match ann {
            EdgeAnnotation::Pure => {
                if b == 1 {
                    g.add_z_phase(w, PI)?;
                }
            }
            EdgeAnnotation::Weighted(p) => g.add_z_phase(w, -2.0 * p * s)?,
            EdgeAnnotation::PartialFusion(p) => {
                let (sn, c) = p.sin_cos();
                reweight_in_place(g, w, [C64::new(c + s * sn, 0.0), C64::new(c - s * sn, 0.0)])?;
            }
        }
    }
    g.remove_vertex(v)?;
    Ok(())
}

/// The vertex whose graph-frame bit equals the lab Z value of `v`, and
/// whether the two are complementary.
///
/// A qubit without a Hadamard carries its own bit. A Hadamard leaf attached
/// by a single control-Z, prepared in `|±⟩`, copies the bit of its
/// neighbour. Anything else has no single carrier.
pub fn lab_bit_carrier(g: &TiltedGraph, v: VertexId) -> Option<(VertexId, bool)> {
    let vx = g.vertex(v)?;
    if !vx.hadamard {
        return Some((v, false));
    }
    let nbrs = g.neighbors(v);
    let [(w, EdgeAnnotation::Pure)] = nbrs.as_slice() else {
        return None;
    };
    let a = vx.prep_amplitudes();
    if a[0].norm() < 1e-12 {
        return None;
    }
    let r = a[1] / a[0];
    if (r.norm() - 1.0).abs() > 1e-9 || r.im.abs() > 1e-9 {
        return None;
    }
    Some((*w, r.re < 0.0))
}

/// Probability that the graph-frame bit of `v` is 1, when it does not
/// depend on other vertices (no partial fusion touches `v`).
pub fn graph_bit_probability(g: &TiltedGraph, v: VertexId) -> Option<f64> {
    if g.touched_by_fusion(v) {
        return None;
    }
    let a = g.vertex(v)?.prep_amplitudes();
    let (p0, p1) = (a[0].norm_sqr(), a[1].norm_sqr());
    Some(p1 / (p0 + p1))
}

/// Physical Z measurement of `v` with a known outcome; `v` is removed.
///
/// Supported when `v` carries no Hadamard, is isolated, or is a Hadamard
/// leaf. In the leaf case the neighbour's bit is fixed, which detaches the
/// neighbour from the rest of the graph (it stays, as a product vertex).
pub fn measure_lab_z(g: &TiltedGraph, v: VertexId, outcome: u8) -> Result<TiltedGraph> {
    let vx = *g.vertex(v).ok_or_else(|| graph_err(format!("no vertex {v}")))?;
    if !vx.hadamard {
        return measure_graph_z(g, v, outcome);
    }
    let b = usize::from(outcome != 0);
    if g.degree(v) == 0 {
        let a = vx.prep_amplitudes();
        let lab = [(a[0] + a[1]) * FRAC_1_SQRT_2, (a[0] - a[1]) * FRAC_1_SQRT_2];
        if lab[b].norm() < 1e-15 {
            return Err(Error::Precondition(format!("outcome {outcome} on {v} has zero amplitude")));
        }
        let mut g = g.clone();
        g.remove_vertex(v)?;
        return Ok(g);
    }
    let (w, flip) = lab_bit_carrier(g, v)
        .ok_or_else(|| graph_err(format!("cannot Z-measure {v}: neither frame-free nor a Hadamard leaf")))?;
    let bit = (b != 0) ^ flip;
    let mut g = detach(g, w, u8::from(bit))?;
    g.remove_vertex(v)?;
    Ok(g)
}

/// Fixes the graph-frame bit of `w` and replaces its edges by local phases.
fn detach(g: &TiltedGraph, w: VertexId, bit: u8) -> Result<TiltedGraph> {
    let vw = *g.vertex(w).ok_or_else(|| graph_err(format!("no vertex {w}")))?;
    let mut g = measure_graph_z(g, w, bit)?;
    let tilt = TiltAngle::new(if bit == 0 { 0.0 } else { FRAC_PI_2 });
    g.add_vertex(Vertex::new(w, tilt).with_hadamard(vw.hadamard))?;
    Ok(g)
}
