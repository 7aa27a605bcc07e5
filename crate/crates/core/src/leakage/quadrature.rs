//! Composite Simpson quadrature with grid doubling.

use rayon::prelude::*;

use super::LeakageProfile;
use crate::error::{Error, Result};

const MAX_INTERVALS_1D: usize = 1 << 22;
const MAX_INTERVALS_2D: usize = 1 << 12;

/// Domain, tolerance and starting resolution for every time integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSettings {
    relative_tolerance: f64,
    t_max: f64,
    panel_count: usize,
}

impl QuadratureSettings {
    /// `panel_count` Simpson panels (two intervals each) on `[0, t_max]` to
    /// start with; the grid is doubled until two successive estimates agree.
    pub fn new(relative_tolerance: f64, t_max: f64, panel_count: usize) -> Result<Self> {
        if !(relative_tolerance > 0.0 && relative_tolerance <= 1e-3) {
            return Err(Error::InvalidParameter(format!(
                "relative tolerance must lie in (0, 1e-3], got {relative_tolerance}"
            )));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max must be positive, got {t_max}")));
        }
        if panel_count == 0 {
            return Err(Error::InvalidParameter("panel_count must be positive".into()));
        }
        Ok(Self { relative_tolerance, t_max, panel_count })
    }

    /// Truncates at the latest support end of `profiles`.
    pub fn for_profiles(profiles: &[&LeakageProfile], relative_tolerance: f64) -> Result<Self> {
        let t_max = profiles.iter().map(|p| p.support_end()).fold(0.0, f64::max);
        Self::new(relative_tolerance, t_max, 32)
    }

    pub fn relative_tolerance(&self) -> f64 {
        self.relative_tolerance
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn panel_count(&self) -> usize {
        self.panel_count
    }

    pub fn with_relative_tolerance(self, tol: f64) -> Result<Self> {
        Self::new(tol, self.t_max, self.panel_count)
    }

    pub(crate) fn grid(&self, intervals: usize) -> SimpsonGrid {
        SimpsonGrid::new(self.t_max, intervals)
    }

    fn converged(&self, coarse: f64, fine: f64) -> bool {
        (fine - coarse).abs() <= self.relative_tolerance * fine.abs()
    }
}

/// A value together with the coarse-vs-fine difference it was accepted on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    /// The finer Simpson sum plus its Richardson correction.
    pub value: f64,
    /// `|S_2n − S_n| / 15`, or the gap between the last two extrapolated
    /// values when those were what converged.
    pub error: f64,
    pub intervals: usize,
}

impl Estimate {
    /// One Romberg step on top of two Simpson sums.
    fn richardson(coarse: f64, fine: f64, intervals: usize) -> Self {
        let d = (fine - coarse) / 15.0;
        Self { value: fine + d, error: d.abs(), intervals }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SimpsonGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SimpsonGrid {
    pub fn new(t_max: f64, intervals: usize) -> Self {
        debug_assert!(intervals % 2 == 0);
        let h = t_max / intervals as f64;
        let nodes = (0..=intervals).map(|i| i as f64 * h).collect();
        let weights = (0..=intervals)
            .map(|i| {
                let w = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect();
        Self { nodes, weights }
    }
}

fn simpson_1d<F: Fn(f64) -> f64>(f: &F, grid: &SimpsonGrid) -> f64 {
    grid.nodes.iter().zip(&grid.weights).map(|(&t, &w)| w * f(t)).sum()
}

/// `∫_0^{t_max} f(t) dt`.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, settings: &QuadratureSettings) -> Result<Estimate> {
    let mut n = 2 * settings.panel_count;
    let mut coarse = simpson_1d(&f, &settings.grid(n));
    check_finite(coarse)?;
    while n < MAX_INTERVALS_1D {
        n *= 2;
        let fine = simpson_1d(&f, &settings.grid(n));
        check_finite(fine)?;
        if settings.converged(coarse, fine) {
            return Ok(Estimate::richardson(coarse, fine, n));
        }
        coarse = fine;
    }
    Err(Error::NonConvergence(format!(
        "1D Simpson did not reach relative tolerance {} with {n} intervals",
        settings.relative_tolerance
    )))
}

/// `∫∫ f(t1, t2) dt1 dt2` over `[0, t_max]²`.
pub fn integrate_2d<F>(f: F, settings: &QuadratureSettings) -> Result<Estimate>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    integrate_2d_with(|t| t, |a: &f64, b: &f64| f(*a, *b), settings)
}

/// 2D integral of an integrand that factors through per-node data.
///
/// `prepare` runs once per grid node and its output is handed to `f` for
/// each `(t1, t2)` pair, which lets expensive density evaluations be shared
/// across a row. Rows are summed in index order, so the result does not
/// depend on the thread count.
pub fn integrate_2d_with<P, Prep, F>(prepare: Prep, f: F, settings: &QuadratureSettings) -> Result<Estimate>
where
    P: Send + Sync,
    Prep: Fn(f64) -> P + Sync,
    F: Fn(&P, &P) -> f64 + Sync,
{
    let eval = |n: usize| -> f64 {
        let grid = settings.grid(n);
        let data: Vec<P> = grid.nodes.par_iter().map(|&t| prepare(t)).collect();
        let rows: Vec<f64> = data
            .par_iter()
            .zip(grid.weights.par_iter())
            .map(|(pi, &wi)| wi * data.iter().zip(&grid.weights).map(|(pj, &wj)| wj * f(pi, pj)).sum::<f64>())
            .collect();
        rows.iter().sum()
    };
    let mut n = 2 * settings.panel_count;
    let mut coarse = eval(n);
    check_finite(coarse)?;
    let mut previous: Option<Estimate> = None;
    while n < MAX_INTERVALS_2D {
        n *= 2;
        let fine = eval(n);
        check_finite(fine)?;
        let est = Estimate::richardson(coarse, fine, n);
        if settings.converged(coarse, fine) {
            return Ok(est);
        }
        // Successive extrapolated values converge at sixth order on smooth
        // integrands, well before the raw sums do.
        if let Some(prev) = previous {
            if settings.converged(prev.value, est.value) {
                return Ok(Estimate { error: (est.value - prev.value).abs(), ..est });
            }
        }
        previous = Some(est);
        coarse = fine;
    }
    Err(Error::NonConvergence(format!(
        "2D Simpson did not reach relative tolerance {} with {n}² intervals",
        settings.relative_tolerance
    )))
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonConvergence("integrand produced a non-finite value".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::cd_density;

    fn s(tol: f64, t_max: f64) -> QuadratureSettings {
        QuadratureSettings::new(tol, t_max, 8).unwrap()
    }

    #[test]
    fn zero_integrand() {
        assert_eq!(integrate_1d(|_| 0.0, &s(1e-8, 1.0)).unwrap().value, 0.0);
        assert_eq!(integrate_2d(|_, _| 0.0, &s(1e-8, 1.0)).unwrap().value, 0.0);
    }

    #[test]
    fn polynomials_are_exact() {
        let v = integrate_1d(|t| 3.0 * t * t, &s(1e-12, 2.0)).unwrap().value;
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn product_of_normalized_densities() {
        let v = integrate_2d(|a, b| cd_density(10.0, a) * cd_density(12.5, b), &s(1e-7, 2.0)).unwrap().value;
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn non_convergence_is_an_error() {
        // A discontinuous integrand with an irrational jump location
        // converges only at first order, far too slowly for this tolerance.
        let r = integrate_1d(|t| if t < std::f64::consts::FRAC_1_SQRT_2 { 1.0 } else { 0.0 }, &s(1e-15, 1.0));
        assert!(matches!(r, Err(Error::NonConvergence(_))));
        assert!(integrate_1d(|_| f64::NAN, &s(1e-8, 1.0)).is_err());
    }

    #[test]
    fn settings_validation() {
        assert!(QuadratureSettings::new(0.0, 1.0, 4).is_err());
        assert!(QuadratureSettings::new(1e-2, 1.0, 4).is_err());
        assert!(QuadratureSettings::new(1e-8, -1.0, 4).is_err());
        assert!(QuadratureSettings::new(1e-8, 1.0, 0).is_err());
    }

    #[test]
    fn deterministic_under_thread_count() {
        let f = |a: f64, b: f64| (a * 3.0).sin().abs() * (-b).exp() * cd_density(4.0, a + b);
        let st = s(1e-6, 3.0);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| integrate_2d(f, &st).unwrap().value);
        let b = four.install(|| integrate_2d(f, &st).unwrap().value);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
