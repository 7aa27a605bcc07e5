use rand::Rng;

use super::{Unitary2, MAX_QUBITS};
use crate::error::{graph_err, Error, Result};
use crate::tilted_graph::{EdgeAnnotation, TiltedGraph, VertexId};
use crate::C64;

/// A dense register. Qubit `k` (the `k`-th entry of `ids`) is bit `k` of the
/// amplitude index.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    ids: Vec<VertexId>,
    amps: Vec<C64>,
}

/// One Born-rule measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub qubit: VertexId,
    /// Applied before measuring in the computational basis.
    pub rotation: Unitary2,
    pub outcome: u8,
    pub probability: f64,
}

impl StateVector {
    /// Normalizes `amps`; `ids` must be distinct.
    pub fn from_amplitudes(ids: Vec<VertexId>, amps: Vec<C64>) -> Result<Self> {
        if ids.len() > MAX_QUBITS {
            return Err(Error::TooManyQubits(ids.len()));
        }
        if amps.len() != 1 << ids.len() {
            return Err(Error::DimensionMismatch);
        }
        let mut s = Self { ids, amps };
        s.renormalize()?;
        Ok(s)
    }

    pub fn qubit_count(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[VertexId] {
        &self.ids
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn position(&self, q: VertexId) -> Result<usize> {
        self.ids.iter().position(|&x| x == q).ok_or_else(|| graph_err(format!("qubit {q} not in register")))
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn renormalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n > 1e-150) {
            return Err(Error::ZeroNorm);
        }
        for a in &mut self.amps {
            *a /= n;
        }
        Ok(n)
    }

    pub fn apply_1q(&mut self, q: VertexId, u: &Unitary2) -> Result<()> {
        let k = self.position(q)?;
        let bit = 1usize << k;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let [a0, a1] = u.apply([self.amps[i], self.amps[i | bit]]);
                self.amps[i] = a0;
                self.amps[i | bit] = a1;
            }
        }
        Ok(())
    }

    /// Diagonal operator on two qubits; `d` is indexed by `b_a + 2·b_b`.
    /// No renormalization.
    pub fn apply_diag_2q(&mut self, qa: VertexId, qb: VertexId, d: [C64; 4]) -> Result<()> {
        let (ka, kb) = (self.position(qa)?, self.position(qb)?);
        if ka == kb {
            return Err(graph_err("two-qubit operator on a single qubit"));
        }
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= d[((i >> ka) & 1) + 2 * ((i >> kb) & 1)];
        }
        Ok(())
    }

    /// Probability of `outcome` after rotating `q` by `rotation`.
    pub fn probability(&self, q: VertexId, rotation: &Unitary2, outcome: u8) -> Result<f64> {
        let mut s = self.clone();
        s.apply_1q(q, rotation)?;
        let bit = 1usize << s.position(q)?;
        let want = if outcome != 0 { bit } else { 0 };
        Ok(s.amps.iter().enumerate().filter(|(i, _)| i & bit == want).map(|(_, a)| a.norm_sqr()).sum())
    }

    /// Rotates and projects `q`, keeping it in the register. Returns the
    /// Born probability and the renormalized post-measurement state.
    pub fn project(&self, q: VertexId, rotation: &Unitary2, outcome: u8) -> Result<(f64, StateVector)> {
        let mut s = self.clone();
        s.apply_1q(q, rotation)?;
        let bit = 1usize << s.position(q)?;
        let want = if outcome != 0 { bit } else { 0 };
        for (i, a) in s.amps.iter_mut().enumerate() {
            if i & bit != want {
                *a = C64::new(0.0, 0.0);
            }
        }
        let n = s.renormalize()?;
        Ok((n * n, s))
    }

    /// Like [`StateVector::project`] but drops the measured qubit.
    pub fn project_out(&self, q: VertexId, rotation: &Unitary2, outcome: u8) -> Result<(f64, StateVector)> {
        let (p, s) = self.project(q, rotation, outcome)?;
        let k = s.position(q)?;
        let bit = 1usize << k;
        let want = if outcome != 0 { bit } else { 0 };
        let low = bit - 1;
        let amps = (0..s.amps.len() / 2)
            .map(|j| {
                let i = (j & low) | ((j & !low) << 1) | want;
                s.amps[i]
            })
            .collect();
        let mut ids = s.ids.clone();
        ids.remove(k);
        Ok((p, StateVector { ids, amps }))
    }

    /// `self ⊗ other`; `other`'s qubits follow `self`'s in the register.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.ids.len() + other.ids.len();
        if n > MAX_QUBITS {
            return Err(Error::TooManyQubits(n));
        }
        if other.ids.iter().any(|q| self.ids.contains(q)) {
            return Err(graph_err("tensor factors share a qubit"));
        }
        let mut ids = self.ids.clone();
        ids.extend_from_slice(&other.ids);
        let amps = other.amps.iter().flat_map(|&b| self.amps.iter().map(move |&a| a * b)).collect();
        Ok(StateVector { ids, amps })
    }

    /// Double-heralding success: keeps the odd lab sector of `(qa, qb)` with
    /// weight `w[0]` on `|0⟩_a|1⟩_b` and `w[1]` on `|1⟩_a|0⟩_b`, flips both
    /// qubits and renormalizes.
    pub fn apply_dh_kraus(&mut self, qa: VertexId, qb: VertexId, w: [f64; 2]) -> Result<()> {
        let z = C64::new(0.0, 0.0);
        self.apply_diag_2q(qa, qb, [z, C64::new(w[1], 0.0), C64::new(w[0], 0.0), z])?;
        let x = Unitary2::pauli_x();
        self.apply_1q(qa, &x)?;
        self.apply_1q(qb, &x)?;
        self.renormalize()?;
        Ok(())
    }

    /// Reorders the register to follow `ids`.
    pub fn permuted(&self, ids: &[VertexId]) -> Result<StateVector> {
        if ids.len() != self.ids.len() {
            return Err(Error::DimensionMismatch);
        }
        let pos: Vec<usize> = ids.iter().map(|&q| self.position(q)).collect::<Result<_>>()?;
        let mut amps = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (j, a) in amps.iter_mut().enumerate() {
            let mut i = 0;
            for (new_k, &old_k) in pos.iter().enumerate() {
                i |= ((j >> new_k) & 1) << old_k;
            }
            *a = self.amps[i];
        }
        Ok(StateVector { ids: ids.to_vec(), amps })
    }
}

/// Diagonal of an edge operator over `(b_x, b_y)`, indexed `b_x + 2·b_y`.
pub fn edge_diagonal(ann: EdgeAnnotation) -> [C64; 4] {
    let parity = |i: usize| if (i & 1) ^ (i >> 1) == 0 { 1.0 } else { -1.0 };
    let mut d = [C64::new(0.0, 0.0); 4];
    for (i, x) in d.iter_mut().enumerate() {
        *x = match ann {
            EdgeAnnotation::Pure => C64::new(if i == 3 { -1.0 } else { 1.0 }, 0.0),
            EdgeAnnotation::Weighted(p) => C64::from_polar(1.0, p * parity(i)),
            EdgeAnnotation::PartialFusion(p) => C64::new(p.cos() + p.sin() * parity(i), 0.0),
        };
    }
    d
}

/// The normalized state a tilted graph describes.
pub fn build_state(g: &TiltedGraph) -> Result<StateVector> {
    let n = g.qubit_count();
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    let ids = g.vertex_ids();
    let preps: Vec<[C64; 2]> = g.vertices().map(|v| v.prep_amplitudes()).collect();
    let mut amps: Vec<C64> = (0..1usize << n).map(|i| (0..n).map(|k| preps[k][(i >> k) & 1]).product()).collect();
    let mut s = StateVector { ids, amps: std::mem::take(&mut amps) };
    for ((a, b), ann) in g.edges() {
        s.apply_diag_2q(a, b, edge_diagonal(ann))?;
    }
    let h = Unitary2::hadamard();
    for v in g.vertices().filter(|v| v.hadamard) {
        s.apply_1q(v.id, &h)?;
    }
    // Unit preps and edge factors bounded by √2 keep genuine states far
    // above this; anything below is an annihilated fusion plus roundoff.
    if s.norm() < 1e-12 {
        return Err(Error::ZeroNorm);
    }
    s.renormalize()?;
    Ok(s)
}

/// Rotates, samples an outcome by the Born rule, and collapses.
pub fn measure<R: Rng + ?Sized>(
    s: &StateVector,
    q: VertexId,
    rotation: &Unitary2,
    rng: &mut R,
) -> Result<(MeasurementRecord, StateVector)> {
    let p1 = s.probability(q, rotation, 1)?;
    let outcome = u8::from(crate::rng::open_unit(rng) < p1);
    let (probability, post) = s.project(q, rotation, outcome)?;
    Ok((MeasurementRecord { qubit: q, rotation: *rotation, outcome, probability }, post))
}

/// `|⟨a|b⟩|²` for registers over the same qubits, in any order.
pub fn overlap(a: &StateVector, b: &StateVector) -> Result<f64> {
    let aligned;
    let b = if a.ids == b.ids {
        b
    } else {
        aligned = b.permuted(&a.ids)?;
        &aligned
    };
    let ip: C64 = a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum();
    Ok(ip.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tilted_graph::{TiltAngle, Vertex};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    fn id(i: u32) -> VertexId {
        VertexId(i)
    }

    fn close(a: C64, b: f64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn single_plus_vertex() {
        let mut g = TiltedGraph::new();
        g.add_vertex(Vertex::plus(id(0))).unwrap();
        let s = build_state(&g).unwrap();
        assert!(close(s.amplitudes()[0], FRAC_1_SQRT_2) && close(s.amplitudes()[1], FRAC_1_SQRT_2));
    }

    #[test]
    fn two_vertex_graph_state() {
        let mut g = TiltedGraph::new();
        g.add_vertex(Vertex::plus(id(0))).unwrap();
        g.add_vertex(Vertex::plus(id(1))).unwrap();
        g.add_edge(id(0), id(1), EdgeAnnotation::Pure).unwrap();
        let s = build_state(&g).unwrap();
        // (|0+⟩ + |1−⟩)/√2 with qubit 0 as the first factor.
        let want = [0.5, 0.5, 0.5, -0.5];
        for (i, w) in want.iter().enumerate() {
            assert!(close(s.amplitudes()[i], *w), "{i}");
        }
    }

    #[test]
    fn tilted_ghz_amplitudes() {
        let t = PI / 6.0;
        let g = TiltedGraph::ghz(id(0), &[id(1), id(2), id(3)], TiltAngle::new(t)).unwrap();
        let s = build_state(&g).unwrap();
        assert!(close(s.amplitudes()[0], t.cos()));
        assert!(close(s.amplitudes()[15], t.sin()));
        let rest: f64 = s.amplitudes()[1..15].iter().map(|a| a.norm()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn overlap_examples() {
        let pair = |t: f64| {
            let g = TiltedGraph::ghz(id(0), &[id(1)], TiltAngle::new(t)).unwrap();
            build_state(&g).unwrap()
        };
        let ideal = pair(FRAC_PI_4);
        assert!((overlap(&ideal, &ideal).unwrap() - 1.0).abs() < 1e-14);
        assert!((overlap(&pair(0.0), &ideal).unwrap() - 0.5).abs() < 1e-14);
        for k in 0..=20 {
            let t = k as f64 * PI / 40.0;
            let f = overlap(&pair(t), &ideal).unwrap();
            assert!((f - 0.5 * (1.0 + (2.0 * t).sin())).abs() < 1e-13);
        }
        let mut other = TiltedGraph::new();
        other.add_vertex(Vertex::plus(id(0))).unwrap();
        assert!(overlap(&ideal, &build_state(&other).unwrap()).is_err());
    }

    #[test]
    fn plus_measures_evenly() {
        let mut g = TiltedGraph::new();
        g.add_vertex(Vertex::plus(id(3))).unwrap();
        let s = build_state(&g).unwrap();
        for o in 0..2 {
            assert!((s.probability(id(3), &Unitary2::IDENTITY, o).unwrap() - 0.5).abs() < 1e-15);
        }
        let (rec, post) = measure(&s, id(3), &Unitary2::IDENTITY, &mut stream(1, 1)).unwrap();
        assert!((rec.probability - 0.5).abs() < 1e-15);
        assert!((post.amplitudes()[usize::from(rec.outcome)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fig5_chain_measurements() {
        // A – C – B with untilted C: X on C merges A and B, Y bridges them.
        let mut g = TiltedGraph::new();
        for i in 0..3 {
            g.add_vertex(Vertex::plus(id(i))).unwrap();
        }
        g.add_edge(id(0), id(1), EdgeAnnotation::Pure).unwrap();
        g.add_edge(id(1), id(2), EdgeAnnotation::Pure).unwrap();
        let s = build_state(&g).unwrap();

        let (_, merged) = s.project_out(id(1), &Unitary2::hadamard(), 0).unwrap();
        // Outcome + on C leaves (|00⟩ + |11⟩)/√2 up to the outer Hadamards.
        let mut m = merged.clone();
        m.apply_1q(id(0), &Unitary2::hadamard()).unwrap();
        m.apply_1q(id(2), &Unitary2::hadamard()).unwrap();
        assert!(close(m.amplitudes()[0] * m.amplitudes()[0].conj() * 2.0, 1.0));
        assert!(m.amplitudes()[1].norm() < 1e-12 && m.amplitudes()[2].norm() < 1e-12);

        let y_basis = Unitary2::hadamard().mul(&Unitary2::z_phase(-std::f64::consts::FRAC_PI_2));
        let (p, bridged) = s.project_out(id(1), &y_basis, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        // Up to local phases, this is the two-qubit graph state A – B.
        let mut edge = TiltedGraph::new();
        edge.add_vertex(Vertex::plus(id(0))).unwrap();
        edge.add_vertex(Vertex::plus(id(2))).unwrap();
        edge.add_edge(id(0), id(2), EdgeAnnotation::Pure).unwrap();
        let target = build_state(&edge).unwrap();
        let best = (0..4)
            .map(|k| {
                let mut b = bridged.clone();
                b.apply_1q(id(0), &Unitary2::z_phase(k as f64 * std::f64::consts::FRAC_PI_2)).unwrap();
                b.apply_1q(id(2), &Unitary2::z_phase(k as f64 * std::f64::consts::FRAC_PI_2)).unwrap();
                overlap(&b, &target).unwrap()
            })
            .fold(0.0, f64::max);
        assert!((best - 1.0).abs() < 1e-12, "{best}");
    }

    #[test]
    fn project_out_and_permute() {
        let t = 0.3;
        let g = TiltedGraph::ghz(id(0), &[id(1), id(2)], TiltAngle::new(t)).unwrap();
        let s = build_state(&g).unwrap();
        let (p, r) = s.project_out(id(1), &Unitary2::IDENTITY, 1).unwrap();
        assert!((p - t.sin().powi(2)).abs() < 1e-14);
        assert_eq!(r.ids(), &[id(0), id(2)]);
        assert!(close(r.amplitudes()[3], 1.0));
        let perm = s.permuted(&[id(2), id(0), id(1)]).unwrap();
        assert!((overlap(&perm.permuted(s.ids()).unwrap(), &s).unwrap() - 1.0).abs() < 1e-14);
        assert!((overlap(&perm, &s).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cap_is_enforced() {
        let ids: Vec<VertexId> = (1..=MAX_QUBITS as u32).map(id).collect();
        assert!(build_state(&TiltedGraph::ghz(id(0), &ids, TiltAngle::UNTILTED).unwrap()).is_err());
    }

    #[test]
    fn annihilating_fusions_have_zero_norm() {
        let mut g = TiltedGraph::new();
        g.add_vertex(Vertex::new(id(0), TiltAngle::new(0.0))).unwrap();
        g.add_vertex(Vertex::new(id(1), TiltAngle::new(std::f64::consts::FRAC_PI_2))).unwrap();
        g.add_edge(id(0), id(1), EdgeAnnotation::PartialFusion(FRAC_PI_4)).unwrap();
        assert!(matches!(build_state(&g), Err(Error::ZeroNorm)));
    }
}
