//! Graph states with tilted vertices, weighted edges and partial fusions.
//!
//! The state described by a [`TiltedGraph`] is built constructively: each
//! vertex is prepared in `Z(z)·X^x·(cosθ|0⟩ + sinθ|1⟩)`, every annotated edge
//! applies its diagonal two-qubit operator (control-Z, `U(φ) = exp(iφZZ)` or
//! `P(φ) = cosφ·1 + sinφ·ZZ`), and finally a Hadamard acts on each vertex
//! whose flag is set. Because every edge operator is diagonal the order of
//! edges never matters. This "graph frame" (before the Hadamards) is where all
//! rewrite rules in this module operate.

mod algebra;
mod rewrite;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;

use crate::error::{graph_err, Error, Result};
use crate::C64;

pub use algebra::{apply_x_flip, combine_partial_fusions, combine_weighted_edges};
pub use rewrite::{
    apply_lab_hadamard, apply_lab_x, apply_lab_z, canonicalize, graph_bit_probability, lab_bit_carrier,
    measure_graph_z, measure_lab_z, reweight_graph_bit,
};
pub use text::{from_text, to_text};

/// Angles closer than this to a special value are snapped onto it.
pub const ANGLE_EPS: f64 = 1e-12;

/// Reduces an angle modulo π into `(−π/2, π/2]`.
pub fn reduce_mod_pi(phi: f64) -> f64 {
    if phi > -FRAC_PI_2 && phi <= FRAC_PI_2 {
        return phi;
    }
    let x = phi.rem_euclid(PI);
    if x > FRAC_PI_2 {
        x - PI
    } else {
        x
    }
}

/// Reduces a phase modulo 2π into `[0, 2π)`.
pub fn reduce_phase(z: f64) -> f64 {
    if (0.0..TAU).contains(&z) {
        return z;
    }
    let x = z.rem_euclid(TAU);
    if x >= TAU {
        0.0
    } else {
        x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A vertex's tilting angle, kept in `(−π/2, π/2]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct TiltAngle(f64);

impl TiltAngle {
    /// `|+⟩`.
    pub const UNTILTED: TiltAngle = TiltAngle(FRAC_PI_4);

    /// Reduces `theta` modulo π. Non-finite input yields NaN; use
    /// [`TiltAngle::try_new`] where that matters.
    pub fn new(theta: f64) -> Self {
        Self(reduce_mod_pi(theta))
    }

    pub fn try_new(theta: f64) -> Result<Self> {
        crate::error::finite(theta, "tilt")?;
        Ok(Self::new(theta))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn is_untilted(self) -> bool {
        (self.0.abs() - FRAC_PI_4).abs() < ANGLE_EPS
    }

    /// θ ∈ {0, π/2}: a product-state vertex that cannot be entangled.
    pub fn is_degenerate(self) -> bool {
        self.0.abs() < ANGLE_EPS || (self.0 - FRAC_PI_2).abs() < ANGLE_EPS
    }

    /// `f(θ) = |⟨Ψ(θ)|Ψ(π/4)⟩|² = ½(1 + sin 2θ)`.
    pub fn fidelity(self) -> f64 {
        0.5 * (1.0 + (2.0 * self.0).sin())
    }

    /// `F = f − ½ = ½ sin 2θ`.
    pub fn gate_quality(self) -> f64 {
        0.5 * (2.0 * self.0).sin()
    }

    /// `π/2 − θ`, the tilt after an X flip.
    pub fn complement(self) -> Self {
        Self::new(FRAC_PI_2 - self.0)
    }
}

impl fmt::Display for TiltAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub tilt: TiltAngle,
    /// A Hadamard applied after the edges.
    pub hadamard: bool,
    /// Diagonal phase `Z(z) = diag(1, e^{iz})` applied before the edges.
    pub z_phase: f64,
    /// An X applied to the tilted preparation, before `z_phase`.
    pub x_flip: bool,
}

impl Vertex {
    pub fn new(id: VertexId, tilt: TiltAngle) -> Self {
        Self { id, tilt, hadamard: false, z_phase: 0.0, x_flip: false }
    }

    /// An untilted `|+⟩` vertex.
    pub fn plus(id: VertexId) -> Self {
        Self::new(id, TiltAngle::UNTILTED)
    }

    pub fn with_hadamard(mut self, on: bool) -> Self {
        self.hadamard = on;
        self
    }

    pub fn with_z_phase(mut self, z: f64) -> Self {
        self.z_phase = reduce_phase(z);
        self
    }

    pub fn with_x_flip(mut self, on: bool) -> Self {
        self.x_flip = on;
        self
    }

    /// Single-qubit preparation `Z(z)·X^x·|θ⟩` in the graph frame.
    pub fn prep_amplitudes(&self) -> [C64; 2] {
        let (s, c) = self.tilt.radians().sin_cos();
        let (a0, a1) = if self.x_flip { (s, c) } else { (c, s) };
        [C64::new(a0, 0.0), C64::from_polar(a1, self.z_phase)]
    }

    /// The canonical vertex (`θ ∈ [0, π/2]`, no X flag) preparing `amps` up
    /// to normalization and global phase.
    pub fn from_amplitudes(id: VertexId, amps: [C64; 2], hadamard: bool) -> Result<Self> {
        let (r0, r1) = (amps[0].norm(), amps[1].norm());
        if !(r0.is_finite() && r1.is_finite()) {
            return Err(Error::NonFinite("vertex amplitudes"));
        }
        let norm = r0.hypot(r1);
        if norm < 1e-300 {
            return Err(Error::ZeroNorm);
        }
        // Snap vanishing components so degenerate vertices stay exact.
        let (r0, r1) = (if r0 < 1e-15 * norm { 0.0 } else { r0 }, if r1 < 1e-15 * norm { 0.0 } else { r1 });
        let theta = r1.atan2(r0);
        let z = if r0 == 0.0 || r1 == 0.0 { 0.0 } else { amps[1].arg() - amps[0].arg() };
        Ok(Self { id, tilt: TiltAngle::new(theta), hadamard, z_phase: reduce_phase(z), x_flip: false })
    }

    pub fn is_canonical(&self) -> bool {
        let t = self.tilt.radians();
        !self.x_flip && (0.0..=FRAC_PI_2).contains(&t) && (0.0..TAU).contains(&self.z_phase)
    }
}

/// What an edge between two vertices does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeAnnotation {
    /// Control-Z.
    Pure,
    /// `U(φ) = cosφ·1 + i sinφ·ZZ`, always unitary.
    Weighted(f64),
    /// `P(φ) = cosφ·1 + sinφ·ZZ`, followed by renormalization.
    PartialFusion(f64),
}

impl EdgeAnnotation {
    pub fn angle(self) -> Option<f64> {
        match self {
            Self::Pure => None,
            Self::Weighted(p) | Self::PartialFusion(p) => Some(p),
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Self::Pure => "pure",
            Self::Weighted(_) => "weighted",
            Self::PartialFusion(_) => "fusion",
        }
    }
}

pub(crate) fn edge_key(a: VertexId, b: VertexId) -> (VertexId, VertexId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TiltedGraph {
    vertices: BTreeMap<VertexId, Vertex>,
    edges: BTreeMap<(VertexId, VertexId), EdgeAnnotation>,
}

impl TiltedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A (possibly tilted) GHZ state `cosθ|0…0⟩ + sinθ|1…1⟩`: a hub holding
    /// the tilt, joined by control-Z to untilted leaves carrying Hadamards.
    pub fn ghz(hub: VertexId, leaves: &[VertexId], tilt: TiltAngle) -> Result<Self> {
        let mut g = Self::new();
        g.add_vertex(Vertex::new(hub, tilt))?;
        for &leaf in leaves {
            g.add_vertex(Vertex::plus(leaf).with_hadamard(true))?;
            g.add_edge(hub, leaf, EdgeAnnotation::Pure)?;
        }
        Ok(g)
    }

    /// Disjoint union. Vertex ids must not clash.
    pub fn union(mut self, other: &TiltedGraph) -> Result<Self> {
        for v in other.vertices.values() {
            self.add_vertex(*v)?;
        }
        for (&(a, b), &ann) in &other.edges {
            self.add_edge(a, b, ann)?;
        }
        Ok(self)
    }

    pub fn add_vertex(&mut self, v: Vertex) -> Result<()> {
        if self.vertices.contains_key(&v.id) {
            return Err(graph_err(format!("vertex {} already exists", v.id)));
        }
        crate::error::finite(v.tilt.radians(), "tilt")?;
        crate::error::finite(v.z_phase, "z_phase")?;
        let v = Vertex { z_phase: reduce_phase(v.z_phase), ..v };
        self.vertices.insert(v.id, v);
        Ok(())
    }

    pub fn add_edge(&mut self, a: VertexId, b: VertexId, ann: EdgeAnnotation) -> Result<()> {
        self.check_pair(a, b)?;
        if let Some(phi) = ann.angle() {
            crate::error::finite(phi, "edge angle")?;
        }
        let key = edge_key(a, b);
        if self.edges.contains_key(&key) {
            return Err(graph_err(format!("edge {a}–{b} already annotated")));
        }
        self.edges.insert(key, ann);
        Ok(())
    }

    /// Replaces whatever annotation `a`–`b` carried.
    pub fn set_edge(&mut self, a: VertexId, b: VertexId, ann: EdgeAnnotation) -> Result<()> {
        self.check_pair(a, b)?;
        self.edges.insert(edge_key(a, b), ann);
        Ok(())
    }

    /// Combines `ann` with the existing annotation of `a`–`b`.
    pub fn fold_edge(&mut self, a: VertexId, b: VertexId, ann: EdgeAnnotation) -> Result<()> {
        self.check_pair(a, b)?;
        let key = edge_key(a, b);
        let Some(old) = self.edges.get(&key).copied() else {
            self.edges.insert(key, ann);
            return Ok(());
        };
        let folded = algebra::fold(old, ann)?;
        for (v, dz) in [(a, folded.z_correction), (b, folded.z_correction)] {
            if dz != 0.0 {
                self.add_z_phase(v, dz)?;
            }
        }
        match folded.annotation {
            Some(ann) => self.edges.insert(key, ann),
            None => self.edges.remove(&key),
        };
        Ok(())
    }

    fn check_pair(&self, a: VertexId, b: VertexId) -> Result<()> {
        if a == b {
            return Err(graph_err(format!("self-edge on {a}")));
        }
        for v in [a, b] {
            if !self.vertices.contains_key(&v) {
                return Err(graph_err(format!("edge endpoint {v} does not exist")));
            }
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, a: VertexId, b: VertexId) -> Option<EdgeAnnotation> {
        self.edges.remove(&edge_key(a, b))
    }

    /// Removes a vertex and every edge touching it.
    pub fn remove_vertex(&mut self, id: VertexId) -> Result<Vertex> {
        let v = self.vertices.remove(&id).ok_or_else(|| graph_err(format!("no vertex {id}")))?;
        self.edges.retain(|&(a, b), _| a != id && b != id);
        Ok(v)
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    pub(crate) fn vertex_mut(&mut self, id: VertexId) -> Result<&mut Vertex> {
        self.vertices.get_mut(&id).ok_or_else(|| graph_err(format!("no vertex {id}")))
    }

    pub(crate) fn add_z_phase(&mut self, id: VertexId, dz: f64) -> Result<()> {
        let v = self.vertex_mut(id)?;
        v.z_phase = reduce_phase(v.z_phase + dz);
        Ok(())
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.vertices.contains_key(&id)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> + '_ {
        self.vertices.values()
    }

    pub fn vertex_ids(&self) -> Vec<VertexId> {
        self.vertices.keys().copied().collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = ((VertexId, VertexId), EdgeAnnotation)> + '_ {
        self.edges.iter().map(|(&k, &v)| (k, v))
    }

    pub fn edge(&self, a: VertexId, b: VertexId) -> Option<EdgeAnnotation> {
        self.edges.get(&edge_key(a, b)).copied()
    }

    pub fn neighbors(&self, id: VertexId) -> Vec<(VertexId, EdgeAnnotation)> {
        self.edges
            .iter()
            .filter_map(|(&(a, b), &ann)| {
                if a == id {
                    Some((b, ann))
                } else if b == id {
                    Some((a, ann))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn degree(&self, id: VertexId) -> usize {
        self.edges.keys().filter(|&&(a, b)| a == id || b == id).count()
    }

    /// True when a partial fusion touches `id`, which correlates its bit
    /// with other vertices' bits.
    pub fn touched_by_fusion(&self, id: VertexId) -> bool {
        self.neighbors(id).iter().any(|(_, ann)| matches!(ann, EdgeAnnotation::PartialFusion(_)))
    }

    pub fn qubit_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Vertices reachable from `id` along any annotated edge.
    pub fn component_of(&self, id: VertexId) -> BTreeSet<VertexId> {
        let mut seen = BTreeSet::new();
        if !self.contains(id) {
            return seen;
        }
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.neighbors(v).into_iter().map(|(w, _)| w).filter(|w| !seen.contains(w)));
            }
        }
        seen
    }

    pub fn components(&self) -> Vec<BTreeSet<VertexId>> {
        let mut left: BTreeSet<VertexId> = self.vertices.keys().copied().collect();
        let mut out = Vec::new();
        while let Some(&v) = left.iter().next() {
            let c = self.component_of(v);
            for w in &c {
                left.remove(w);
            }
            out.push(c);
        }
        out
    }

    /// Subgraph induced by `ids`.
    pub fn induced(&self, ids: &BTreeSet<VertexId>) -> TiltedGraph {
        TiltedGraph {
            vertices: self.vertices.iter().filter(|(k, _)| ids.contains(k)).map(|(&k, &v)| (k, v)).collect(),
            edges: self
                .edges
                .iter()
                .filter(|((a, b), _)| ids.contains(a) && ids.contains(b))
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }
}
