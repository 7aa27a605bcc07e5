//! Integrals of `(X+Y)·w(F)` restricted to bands of the gate quality
//! `F = √(XY)/(X+Y)`.
//!
//! For each outer time `t₁` the inner line in `t₂` is cut into fixed cells;
//! cells where `F` changes band are split at the crossings, found by
//! bisection, so band boundaries are resolved exactly rather than by
//! sampling. The outer integral is composite Gauss–Legendre with doubling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::leakage::LeakageProfile;

const GL_X: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_W: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

const MAX_OUTER_PANELS: usize = 1 << 13;

/// Gate quality of one click record; zero where both terms vanish.
#[inline]
pub(crate) fn quality(x: f64, y: f64) -> f64 {
    let s = x + y;
    if s > 0.0 {
        (x * y).sqrt() / s
    } else {
        0.0
    }
}

pub(crate) struct BandProblem<'a> {
    pub pa: &'a LeakageProfile,
    pub pb: &'a LeakageProfile,
    pub theta1: f64,
    pub theta2: f64,
    /// Ascending band boundaries starting at 0 and ending at ½.
    pub edges: &'a [f64],
    pub t_max: f64,
    pub inner_cells: usize,
}

struct InnerGrid {
    /// Cell boundaries and per-cell GL nodes, with both densities.
    bounds: Vec<(f64, f64, f64)>,
    nodes: Vec<[(f64, f64, f64, f64); 5]>,
}

impl BandProblem<'_> {
    fn band(&self, f: f64) -> usize {
        let k = self.edges.len() - 1;
        self.edges[1..k].partition_point(|&e| e <= f)
    }

    fn dens(&self, t: f64) -> (f64, f64) {
        (self.pa.density(t), self.pb.density(t))
    }

    fn inner_grid(&self) -> InnerGrid {
        let n = self.inner_cells;
        let h = self.t_max / n as f64;
        let bounds = (0..=n)
            .map(|i| {
                let t = i as f64 * h;
                let (a, b) = self.dens(t);
                (t, a, b)
            })
            .collect();
        let nodes = (0..n)
            .map(|i| {
                let mid = (i as f64 + 0.5) * h;
                std::array::from_fn(|k| {
                    let t = mid + 0.5 * h * GL_X[k];
                    let (a, b) = self.dens(t);
                    (t, a, b, 0.5 * h * GL_W[k])
                })
            })
            .collect();
        InnerGrid { bounds, nodes }
    }

    /// `(X, Y)` at `t₂` given the round-one densities `(a1, b1)`.
    #[inline]
    fn xy(&self, a1: f64, b1: f64, a2: f64, b2: f64) -> (f64, f64) {
        (self.theta1 * a1 * b2, self.theta2 * b1 * a2)
    }

    fn f_at(&self, a1: f64, b1: f64, t2: f64) -> f64 {
        let (a2, b2) = self.dens(t2);
        let (x, y) = self.xy(a1, b1, a2, b2);
        quality(x, y)
    }

    fn inner<W: Fn(f64) -> f64>(&self, grid: &InnerGrid, t1: f64, weight: &W, out: &mut [f64]) {
        let (a1, b1) = self.dens(t1);
        if a1 == 0.0 && b1 == 0.0 {
            return;
        }
        let mut prev = {
            let (_, a2, b2) = grid.bounds[0];
            let (x, y) = self.xy(a1, b1, a2, b2);
            quality(x, y)
        };
        for (i, cell) in grid.nodes.iter().enumerate() {
            let (t_hi, a_hi, b_hi) = grid.bounds[i + 1];
            let (x_hi, y_hi) = self.xy(a1, b1, a_hi, b_hi);
            let f_hi = quality(x_hi, y_hi);
            let mut vals = [(0.0, 0.0, 0.0); 5];
            let mut uniform = self.band(prev) == self.band(f_hi);
            let band0 = self.band(prev);
            for (k, &(_, a2, b2, _)) in cell.iter().enumerate() {
                let (x, y) = self.xy(a1, b1, a2, b2);
                let f = quality(x, y);
                vals[k] = (x + y, f, 0.0);
                uniform &= self.band(f) == band0;
            }
            if uniform {
                let s: f64 = cell.iter().zip(&vals).map(|(n, v)| n.3 * v.0 * weight(v.1)).sum();
                out[band0] += s;
            } else {
                let t_lo = grid.bounds[i].0;
                self.split_cell(a1, b1, t_lo, prev, t_hi, f_hi, cell, &vals, weight, out);
            }
            prev = f_hi;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn split_cell<W: Fn(f64) -> f64>(
        &self,
        a1: f64,
        b1: f64,
        t_lo: f64,
        f_lo: f64,
        t_hi: f64,
        f_hi: f64,
        cell: &[(f64, f64, f64, f64); 5],
        vals: &[(f64, f64, f64); 5],
        weight: &W,
        out: &mut [f64],
    ) {
        let mut samples = Vec::with_capacity(7);
        samples.push((t_lo, f_lo));
        samples.extend(cell.iter().zip(vals).map(|(n, v)| (n.0, v.1)));
        samples.push((t_hi, f_hi));
        let mut cuts = vec![t_lo];
        for w in samples.windows(2) {
            let ((ta, fa), (tb, fb)) = (w[0], w[1]);
            let (ba, bb) = (self.band(fa), self.band(fb));
            if ba == bb {
                continue;
            }
            let (lo, hi) = (ba.min(bb), ba.max(bb));
            for e in &self.edges[lo + 1..=hi] {
                cuts.push(self.bisect(a1, b1, ta, fa, tb, *e));
            }
        }
        cuts.push(t_hi);
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let (u, v) = (w[0], w[1]);
            if v <= u {
                continue;
            }
            let mid = 0.5 * (u + v);
            let band = self.band(self.f_at(a1, b1, mid));
            let mut s = 0.0;
            for k in 0..5 {
                let t = mid + 0.5 * (v - u) * GL_X[k];
                let (a2, b2) = self.dens(t);
                let (x, y) = self.xy(a1, b1, a2, b2);
                s += 0.5 * (v - u) * GL_W[k] * (x + y) * weight(quality(x, y));
            }
            out[band] += s;
        }
    }

    /// Point in `[ta, tb]` where `F` crosses `level`.
    fn bisect(&self, a1: f64, b1: f64, ta: f64, fa: f64, tb: f64, level: f64) -> f64 {
        let below = fa < level;
        let (mut lo, mut hi) = (ta, tb);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (self.f_at(a1, b1, mid) < level) == below {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn outer<W: Fn(f64) -> f64 + Sync>(&self, grid: &InnerGrid, panels: usize, weight: &W) -> Vec<f64> {
        let h = self.t_max / panels as f64;
        let bands = self.edges.len() - 1;
        let rows: Vec<Vec<f64>> = (0..panels * 5)
            .into_par_iter()
            .map(|j| {
                let (p, k) = (j / 5, j % 5);
                let t1 = (p as f64 + 0.5) * h + 0.5 * h * GL_X[k];
                let mut row = vec![0.0; bands];
                self.inner(grid, t1, weight, &mut row);
                let w = 0.5 * h * GL_W[k];
                row.iter_mut().for_each(|r| *r *= w);
                row
            })
            .collect();
        let mut total = vec![0.0; bands];
        for row in rows {
            for (t, r) in total.iter_mut().zip(row) {
                *t += r;
            }
        }
        total
    }

    /// Band masses of `(X+Y)·weight(F)`, doubling the outer panels until
    /// no band moves by more than `tol` times the total.
    pub fn masses<W: Fn(f64) -> f64 + Sync>(&self, weight: W, tol: f64) -> Result<Vec<f64>> {
        if self.edges.len() < 2 || self.edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("band edges must be strictly ascending".into()));
        }
        let grid = self.inner_grid();
        let mut panels = 64;
        let mut coarse = self.outer(&grid, panels, &weight);
        while panels < MAX_OUTER_PANELS {
            panels *= 2;
            let fine = self.outer(&grid, panels, &weight);
            let scale: f64 = fine.iter().sum::<f64>().abs().max(1e-300);
            let diff = fine.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if !diff.is_finite() {
                return Err(Error::NonConvergence("band integrand produced a non-finite value".into()));
            }
            if diff <= tol * scale {
                return Ok(fine);
            }
            coarse = fine;
        }
        Err(Error::NonConvergence(format!("band integration did not settle to {tol} with {panels} outer panels")))
    }
}
