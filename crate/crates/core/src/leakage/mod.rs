//! Photon-leakage densities of atom–cavity systems.
//!
//! A [`LeakageProfile`] is the probability density `P(t)` that the photon of a
//! single excited system leaves the cavity at time `t`. Two shapes are
//! supported: the critically damped closed form `4g³t²e^(−2gt)` and an
//! arbitrary tabulated density with linear interpolation between samples.

pub(crate) mod quadrature;
mod sampling;

use std::io::Read;
use std::path::Path;

pub use quadrature::{integrate_1d, integrate_2d, integrate_2d_with, Estimate, QuadratureSettings};
pub use sampling::{sample_time, TimeSampler};

use crate::error::{finite, Error, Result};

/// Tail mass tolerated beyond [`LeakageProfile::support_end`].
pub const TAIL_MASS: f64 = 1e-12;

/// Jaynes–Cummings coupling `g` and cavity leakage rate `κ`, both inverse times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityParams {
    g: f64,
    kappa: f64,
}

impl CavityParams {
    pub fn new(g: f64, kappa: f64) -> Result<Self> {
        finite(g, "g")?;
        finite(kappa, "kappa")?;
        if g <= 0.0 || kappa <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cavity parameters must be positive (g = {g}, kappa = {kappa})"
            )));
        }
        Ok(Self { g, kappa })
    }

    /// The `κ = 4g` system.
    pub fn critically_damped(g: f64) -> Result<Self> {
        Self::new(g, 4.0 * g)
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_critically_damped(&self) -> bool {
        (self.kappa - 4.0 * self.g).abs() <= 1e-12 * self.kappa
    }

    /// Slowest decay rate of the excitation amplitude.
    pub(crate) fn slowest_rate(&self) -> f64 {
        let q = self.kappa * self.kappa / 16.0 - self.g * self.g;
        if q > 0.0 {
            self.kappa / 4.0 - q.sqrt()
        } else {
            self.kappa / 4.0
        }
    }
}

/// `4g³t²e^(−2gt)` for `t > 0`, zero otherwise.
pub fn critically_damped_density(g: f64, t: f64) -> Result<f64> {
    finite(g, "g")?;
    finite(t, "t")?;
    if g <= 0.0 {
        return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
    }
    Ok(cd_density(g, t))
}

/// Cumulative mass of the critically damped density up to `t`.
pub fn critically_damped_cdf(g: f64, t: f64) -> Result<f64> {
    finite(g, "g")?;
    finite(t, "t")?;
    if g <= 0.0 {
        return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
    }
    Ok(cd_cdf(g, t))
}

/// `∫√(C(t,g_a)C(t,g_b))dt = 8(g_a g_b)^{3/2}/(g_a+g_b)³`.
pub fn critically_damped_overlap(ga: f64, gb: f64) -> f64 {
    8.0 * (ga * gb).powf(1.5) / (ga + gb).powi(3)
}

#[inline]
pub(crate) fn cd_density(g: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        4.0 * g * g * g * t * t * (-2.0 * g * t).exp()
    }
}

#[inline]
pub(crate) fn cd_cdf(g: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = 2.0 * g * t;
    // 1 − e^{−x}(1 + x + x²/2), written to keep precision for small x.
    if x < 0.5 {
        // Series: x³/6 − x⁴/8 + x⁵/20 − ...  = Σ_{k≥3} (−1)^{k+1} x^k (k−1)(k−2)/(2·k!)
        let mut term = x * x * x / 6.0;
        let mut sum = term;
        for k in 4..40 {
            let kf = k as f64;
            term *= -x / kf;
            let coeff = (kf - 1.0) * (kf - 2.0) / 2.0;
            let contrib = term * coeff;
            sum += contrib;
            if contrib.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        1.0 - (-x).exp() * (1.0 + x + 0.5 * x * x)
    }
}

/// A calibrated density given on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedProfile {
    times: Vec<f64>,
    densities: Vec<f64>,
    total_mass: f64,
}

impl TabulatedProfile {
    /// Validates the grid and computes the (trapezoid-exact) total mass.
    pub fn new(times: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if times.len() != densities.len() {
            return Err(Error::ProfileData(format!("{} times but {} densities", times.len(), densities.len())));
        }
        if times.len() < 2 {
            return Err(Error::ProfileData("need at least two grid points".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::ProfileData(format!("grid must start at 0, starts at {}", times[0])));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::ProfileData(format!("times must be strictly ascending (row {})", i + 2)));
            }
        }
        for (i, &d) in densities.iter().enumerate() {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::ProfileData(format!(
                    "density at row {} must be finite and non-negative, got {d}",
                    i + 1
                )));
            }
        }
        let total_mass: f64 =
            times.windows(2).zip(densities.windows(2)).map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1])).sum();
        if !(total_mass > 0.0) {
            return Err(Error::ZeroMass);
        }
        if total_mass > 1.0 + 1e-6 {
            return Err(Error::ProfileData(format!("total mass {total_mass} exceeds 1")));
        }
        Ok(Self { times, densities, total_mass })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    fn segment(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t > *self.times.last()? {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t);
        Some(k.saturating_sub(1).min(self.times.len() - 2))
    }

    fn density(&self, t: f64) -> f64 {
        match self.segment(t) {
            None => 0.0,
            Some(k) => {
                let (t0, t1) = (self.times[k], self.times[k + 1]);
                let (d0, d1) = (self.densities[k], self.densities[k + 1]);
                d0 + (d1 - d0) * (t - t0) / (t1 - t0)
            }
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let Some(k) = self.segment(t) else {
            return self.total_mass;
        };
        let mut mass = 0.0;
        for j in 0..k {
            mass += 0.5 * (self.times[j + 1] - self.times[j]) * (self.densities[j] + self.densities[j + 1]);
        }
        let x = t - self.times[k];
        mass + 0.5 * x * (self.densities[k] + self.density(t))
    }
}

/// The photon-emission density of one system.
#[derive(Clone, Debug, PartialEq)]
pub enum LeakageProfile {
    CriticallyDamped { g: f64 },
    Tabulated(TabulatedProfile),
}

impl LeakageProfile {
    pub fn critically_damped(g: f64) -> Result<Self> {
        finite(g, "g")?;
        if g <= 0.0 {
            return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
        }
        Ok(Self::CriticallyDamped { g })
    }

    pub fn tabulated(times: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        TabulatedProfile::new(times, densities).map(Self::Tabulated)
    }

    /// Samples `self` on `times` and returns the result as a tabulated profile.
    pub fn tabulate(&self, times: &[f64]) -> Result<Self> {
        Self::tabulated(times.to_vec(), times.iter().map(|&t| self.density(t)).collect())
    }

    #[inline]
    pub fn density(&self, t: f64) -> f64 {
        match self {
            Self::CriticallyDamped { g } => cd_density(*g, t),
            Self::Tabulated(tab) => tab.density(t),
        }
    }

    /// Cumulative (not renormalized) mass up to `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Self::CriticallyDamped { g } => cd_cdf(*g, t),
            Self::Tabulated(tab) => tab.cdf(t),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::CriticallyDamped { .. } => 1.0,
            Self::Tabulated(tab) => tab.total_mass,
        }
    }

    /// A time beyond which less than [`TAIL_MASS`] remains.
    pub fn support_end(&self) -> f64 {
        match self {
            Self::CriticallyDamped { g } => 20.0 / g,
            Self::Tabulated(tab) => *tab.times.last().expect("validated grid"),
        }
    }

    /// Reads a `time,density` CSV file.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "density" {
            return Err(Error::ProfileData(format!(
                "expected header `time,density`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut times = Vec::new();
        let mut densities = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(i + 2, |p| p.line() as usize);
            let parse = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("bad {what} `{s}`: {e}") })
            };
            if rec.len() != 2 {
                return Err(Error::Parse { line, msg: format!("expected 2 fields, got {}", rec.len()) });
            }
            times.push(parse(&rec[0], "time")?);
            densities.push(parse(&rec[1], "density")?);
        }
        Self::tabulated(times, densities)
    }
}

/// `∫√(P_A(t)P_B(t))dt` by quadrature.
///
/// For two critically damped profiles this reproduces
/// [`critically_damped_overlap`].
pub fn overlap_integral(pa: &LeakageProfile, pb: &LeakageProfile, settings: &QuadratureSettings) -> Result<f64> {
    let est = integrate_1d(|t| (pa.density(t) * pb.density(t)).sqrt(), settings)?;
    Ok(est.value.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn settings(profiles: &[&LeakageProfile]) -> QuadratureSettings {
        QuadratureSettings::for_profiles(profiles, 1e-10).unwrap()
    }

    #[test]
    fn density_examples() {
        assert_eq!(critically_damped_density(10.0, 0.0).unwrap(), 0.0);
        assert_eq!(critically_damped_density(10.0, -1.0).unwrap(), 0.0);
        let peak = critically_damped_density(10.0, 0.1).unwrap();
        assert_relative_eq!(peak, 40.0 * (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(peak, 5.413411329464508, max_relative = 1e-12);
        for t in [0.09, 0.0999, 0.1001, 0.11] {
            assert!(critically_damped_density(10.0, t).unwrap() < peak);
        }
    }

    #[test]
    fn density_rejects_bad_input() {
        assert!(critically_damped_density(f64::NAN, 1.0).is_err());
        assert!(critically_damped_density(1.0, f64::INFINITY).is_err());
        assert!(critically_damped_density(-1.0, 1.0).is_err());
        assert!(CavityParams::new(0.0, 1.0).is_err());
        assert!(CavityParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn normalization_by_quadrature() {
        for g in [0.5, 3.0, 10.0, 12.5, 400.0] {
            let p = LeakageProfile::critically_damped(g).unwrap();
            let s = settings(&[&p]);
            let m = integrate_1d(|t| p.density(t), &s).unwrap().value;
            assert!((m - 1.0).abs() < 1e-9, "g = {g}: {m}");
        }
    }

    #[test]
    fn tail_beyond_support_end_is_negligible() {
        for g in [0.1, 1.0, 10.0, 1e3] {
            let p = LeakageProfile::critically_damped(g).unwrap();
            assert!(1.0 - p.cdf(p.support_end()) < TAIL_MASS);
        }
    }

    #[test]
    fn cdf_series_branch_matches_closed_form() {
        for x in [0.1f64, 0.3, 0.49, 0.5, 0.51] {
            let series = cd_cdf(1.0, x / 2.0);
            let closed = 1.0 - (-x).exp() * (1.0 + x + 0.5 * x * x);
            assert_relative_eq!(series, closed, max_relative = 1e-9);
        }
    }

    #[test]
    fn overlap_examples() {
        let a = LeakageProfile::critically_damped(10.0).unwrap();
        let b = LeakageProfile::critically_damped(12.5).unwrap();
        let s = settings(&[&a, &b]);
        let ov = overlap_integral(&a, &b, &s).unwrap();
        assert!((ov - 0.981539).abs() < 5e-7, "{ov}");
        assert_relative_eq!(ov, critically_damped_overlap(10.0, 12.5), max_relative = 1e-9);
        assert_relative_eq!(overlap_integral(&a, &a, &s).unwrap(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn overlap_vanishes_monotonically_for_separating_rates() {
        let a = LeakageProfile::critically_damped(10.0).unwrap();
        let mut last = 1.0;
        for gb in [10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0] {
            let b = LeakageProfile::critically_damped(gb).unwrap();
            let ov = overlap_integral(&a, &b, &settings(&[&a, &b])).unwrap();
            assert!(ov <= last + 1e-12);
            last = ov;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn tabulated_reproduces_closed_form_overlap() {
        let times: Vec<f64> = (0..=40_000).map(|i| i as f64 * 2.0 / 40_000.0).collect();
        let a = LeakageProfile::critically_damped(10.0).unwrap().tabulate(&times).unwrap();
        let b = LeakageProfile::critically_damped(12.5).unwrap().tabulate(&times).unwrap();
        let s = QuadratureSettings::for_profiles(&[&a, &b], 1e-8).unwrap();
        let ov = overlap_integral(&a, &b, &s).unwrap();
        assert!((ov - critically_damped_overlap(10.0, 12.5)).abs() < 1e-6, "{ov}");
        assert!((a.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tabulated_validation() {
        assert!(LeakageProfile::tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).is_ok());
        assert!(LeakageProfile::tabulated(vec![0.1, 1.0], vec![1.0, 1.0]).is_err());
        assert!(LeakageProfile::tabulated(vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 0.0]).is_err());
        assert!(LeakageProfile::tabulated(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(matches!(LeakageProfile::tabulated(vec![0.0, 1.0], vec![0.0, 0.0]), Err(Error::ZeroMass)));
        assert!(LeakageProfile::tabulated(vec![0.0, 1.0], vec![3.0, 3.0]).is_err());
    }

    #[test]
    fn tabulated_density_interpolates_and_vanishes_outside() {
        let p = LeakageProfile::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 0.5]).unwrap();
        assert_eq!(p.density(0.5), 0.25);
        assert_eq!(p.density(1.5), 0.5);
        assert_eq!(p.density(2.5), 0.0);
        assert_eq!(p.density(-0.5), 0.0);
        assert_relative_eq!(p.total_mass(), 0.75);
        assert_relative_eq!(p.cdf(1.0), 0.25);
        assert_relative_eq!(p.cdf(5.0), 0.75);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 / 49.0 * 1.7).collect();
        let p = LeakageProfile::critically_damped(std::f64::consts::PI).unwrap().tabulate(&times).unwrap();
        let LeakageProfile::Tabulated(tab) = &p else { unreachable!() };
        let mut table = crate::io::CsvTable::new(["time", "density"]);
        for (t, d) in tab.times().iter().zip(tab.densities()) {
            table.push_floats(&[*t, *d]);
        }
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        let back = LeakageProfile::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn csv_errors_are_reported() {
        let bad_header = "t,d\n0,1\n1,1\n";
        assert!(LeakageProfile::from_csv_reader(bad_header.as_bytes()).is_err());
        let bad_value = "time,density\n0,1\n1,abc\n";
        match LeakageProfile::from_csv_reader(bad_value.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let descending = "time,density\n0,1\n1,1\n0.5,1\n";
        assert!(LeakageProfile::from_csv_reader(descending.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_bounded(ga in 0.5f64..50.0, gb in 0.5f64..50.0) {
            let a = LeakageProfile::critically_damped(ga).unwrap();
            let b = LeakageProfile::critically_damped(gb).unwrap();
            let s = QuadratureSettings::for_profiles(&[&a, &b], 1e-9).unwrap();
            let ab = overlap_integral(&a, &b, &s).unwrap();
            let ba = overlap_integral(&b, &a, &s).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab <= 1.0);
            prop_assert!((ab - critically_damped_overlap(ga, gb)).abs() < 1e-8);
        }

        #[test]
        fn tabulated_mass_matches_declared(ds in proptest::collection::vec(0.0f64..1.0, 2..40)) {
            prop_assume!(ds.iter().any(|&d| d > 0.0));
            let n = ds.len();
            let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let p = LeakageProfile::tabulated(times.clone(), ds).unwrap();
            // Simpson on each segment is exact for the linear interpolant.
            let m: f64 = times
                .windows(2)
                .map(|w| {
                    let mid = 0.5 * (w[0] + w[1]);
                    let (a, b) = (p.density(w[0] + 1e-15), p.density(w[1] - 1e-15));
                    (w[1] - w[0]) / 6.0 * (a + 4.0 * p.density(mid) + b)
                })
                .sum();
            prop_assert!((m - p.total_mass()).abs() < 1e-9);
            prop_assert!((p.cdf(*times.last().unwrap()) - p.total_mass()).abs() < 1e-12);
        }
    }
}
