//! Inverse-CDF sampling of leakage profiles.

use rand::Rng;

use super::{cd_cdf, cd_density, LeakageProfile};
use crate::error::{Error, Result};

const CD_TABLE: usize = 4096;

/// Precomputed inverse CDF for one profile. Build once, sample many times.
#[derive(Clone, Debug)]
pub struct TimeSampler {
    profile: LeakageProfile,
    knots: Vec<f64>,
    /// Normalized cumulative mass at each knot.
    cdf: Vec<f64>,
}

impl TimeSampler {
    pub fn new(profile: &LeakageProfile) -> Result<Self> {
        let mass = profile.total_mass();
        if !(mass > 0.0) {
            return Err(Error::ZeroMass);
        }
        let (knots, cdf) = match profile {
            LeakageProfile::CriticallyDamped { g } => {
                let end = profile.support_end();
                let knots: Vec<f64> = (0..=CD_TABLE).map(|i| end * i as f64 / CD_TABLE as f64).collect();
                let cdf = knots.iter().map(|&t| cd_cdf(*g, t)).collect();
                (knots, cdf)
            }
            LeakageProfile::Tabulated(tab) => {
                let t = tab.times();
                let d = tab.densities();
                let mut acc = 0.0;
                let mut cdf = Vec::with_capacity(t.len());
                cdf.push(0.0);
                for k in 0..t.len() - 1 {
                    acc += 0.5 * (t[k + 1] - t[k]) * (d[k] + d[k + 1]);
                    cdf.push(acc / mass);
                }
                (t.to_vec(), cdf)
            }
        };
        Ok(Self { profile: profile.clone(), knots, cdf })
    }

    pub fn profile(&self) -> &LeakageProfile {
        &self.profile
    }

    /// The time at which the normalized cumulative mass reaches `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let idx = self.cdf.partition_point(|&c| c <= u);
        if idx == 0 {
            return 0.0;
        }
        if idx >= self.cdf.len() {
            return *self.knots.last().expect("non-empty table");
        }
        let k = idx - 1;
        let (t0, t1) = (self.knots[k], self.knots[k + 1]);
        match &self.profile {
            LeakageProfile::CriticallyDamped { g } => invert_bracketed(*g, u, t0, t1),
            LeakageProfile::Tabulated(tab) => {
                let d = tab.densities();
                let (d0, d1) = (d[k], d[k + 1]);
                let w = t1 - t0;
                // Remaining (unnormalized) mass to cover inside this segment.
                let r = (u - self.cdf[k]) * tab.total_mass();
                // d0·x + (d1−d0)x²/(2w) = r, solved in the cancellation-free form.
                let a = (d1 - d0) / (2.0 * w);
                let disc = (d0 * d0 + 4.0 * a * r).max(0.0);
                let denom = d0 + disc.sqrt();
                let x = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
                t0 + x.clamp(0.0, w)
            }
        }
    }

    /// One draw, strictly positive with probability one.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(crate::rng::open_unit(rng))
    }
}

/// Solves `cd_cdf(g, t) = u` for `t` in `[lo, hi]` by safeguarded Newton.
fn invert_bracketed(g: f64, u: f64, mut lo: f64, mut hi: f64) -> f64 {
    let (c0, c1) = (cd_cdf(g, lo), cd_cdf(g, hi));
    let mut t = if c1 > c0 { lo + (hi - lo) * (u - c0) / (c1 - c0) } else { 0.5 * (lo + hi) };
    for _ in 0..100 {
        let f = cd_cdf(g, t) - u;
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let d = cd_density(g, t);
        let mut next = if d > 0.0 { t - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        t = next;
    }
    t
}

/// Draws one emission time. Builds a fresh table per call; loops should hold
/// a [`TimeSampler`] instead.
pub fn sample_time<R: Rng + ?Sized>(profile: &LeakageProfile, rng: &mut R) -> Result<f64> {
    Ok(TimeSampler::new(profile)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn seeded_sequences_repeat() {
        let p = LeakageProfile::critically_damped(10.0).unwrap();
        let s = TimeSampler::new(&p).unwrap();
        let a: Vec<f64> = {
            let mut r = stream(42, 0);
            (0..100).map(|_| s.sample(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = stream(42, 0);
            (0..100).map(|_| s.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn quantile_inverts_the_analytic_cdf() {
        let g = 12.5;
        let s = TimeSampler::new(&LeakageProfile::critically_damped(g).unwrap()).unwrap();
        for i in 1..1000 {
            let u = i as f64 / 1000.0;
            let t = s.quantile(u);
            assert!((cd_cdf(g, t) - u).abs() < 1e-13, "u = {u}");
        }
    }

    #[test]
    fn mean_and_ks_for_critically_damped() {
        let g = 10.0;
        let p = LeakageProfile::critically_damped(g).unwrap();
        let s = TimeSampler::new(&p).unwrap();
        let mut rng = stream(2024, 1);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // Gamma(3, 2g): mean 3/(2g), variance 3/(4g²).
        let se = (3.0 / (4.0 * g * g) / n as f64).sqrt();
        assert!((mean - 1.5 / g).abs() < 3.0 * se, "mean {mean}");
        let d = ks_statistic(xs, |t| cd_cdf(g, t));
        assert!(d < 0.002, "KS {d}");
    }

    #[test]
    fn tabulated_quantile_is_exact_for_piecewise_linear_density() {
        let p = LeakageProfile::tabulated(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.6, 0.0, 0.2]).unwrap();
        let s = TimeSampler::new(&p).unwrap();
        let m = p.total_mass();
        for i in 1..200 {
            let u = i as f64 / 200.0;
            let t = s.quantile(u);
            assert!((p.cdf(t) / m - u).abs() < 1e-12, "u = {u}, t = {t}");
        }
    }

    #[test]
    fn sub_unit_mass_is_renormalized() {
        let p = LeakageProfile::tabulated(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let s = TimeSampler::new(&p).unwrap();
        assert!((s.quantile(0.5) - 0.5).abs() < 1e-15);
        assert!((s.quantile(0.999_999) - 0.999_999).abs() < 1e-12);
    }
}
