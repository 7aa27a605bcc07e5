//! Quantum-trajectory integration of the double-heralding protocol.
//!
//! Each system has four levels: the excited atom with an empty cavity, the
//! ground atom with one cavity photon, and the two qubit levels `|1⟩`, `|0⟩`
//! with an empty cavity. The qubit level `|0⟩` is the one the π-pulse
//! excites. Between clicks the joint 16-dimensional amplitude evolves under
//! the non-Hermitian conditional Hamiltonian
//! `H = Σ_x g_x(|e⟩⟨0γ| + h.c.) − i κ_x/2 ·a_x†a_x`; a click in detector `±`
//! applies `J± = √(κ_A/2)·a_A ± √(κ_B/2)·a_B`.

use crate::error::{Error, Result};
use crate::leakage::CavityParams;
use crate::tilted_graph::TiltAngle;
use crate::C64;

/// Levels per system.
pub const LEVELS: usize = 4;
const DIM: usize = LEVELS * LEVELS;

const EXCITED: usize = 0;
const PHOTON: usize = 1;
const ONE: usize = 2;
const ZERO: usize = 3;

/// Residual excitation (relative amplitude) tolerated after a wait.
const RESIDUAL_TOL: f64 = 1e-8;

const ZERO_C: C64 = C64::new(0.0, 0.0);

/// Unnormalized conditional state; its squared norm is the probability
/// density of the click record so far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryState {
    /// Indexed `LEVELS·level_A + level_B`.
    pub amps: [C64; DIM],
    pub time: f64,
}

impl TrajectoryState {
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Result of one simulated double-heralding run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhTrajectory {
    pub theta_beta: TiltAngle,
    /// Joint click density summed over both detectors in both rounds.
    pub click_density: f64,
    /// Per-(round-1 detector, round-2 detector) density, `+` first.
    pub detector_densities: [[f64; 2]; 2],
    /// Final qubit amplitudes for the `(+, +)` record, indexed
    /// `b_A + 2·b_B` with lab bits.
    pub final_qubits: [C64; 4],
}

/// Integrator for one pair of systems.
#[derive(Clone, Debug)]
pub struct TrajectoryOracle {
    a: CavityParams,
    b: CavityParams,
    step: f64,
    wait_time: f64,
    /// Columns are the evolved basis vectors.
    wait: Vec<[C64; DIM]>,
}

impl TrajectoryOracle {
    pub fn new(a: CavityParams, b: CavityParams) -> Result<Self> {
        let fastest = [a.g(), a.kappa(), b.g(), b.kappa()].into_iter().fold(0.0, f64::max);
        let step = 1.0 / (100.0 * fastest);
        let slowest = a.slowest_rate().min(b.slowest_rate());
        if !(slowest > 0.0) {
            return Err(Error::Trajectory("excitation never decays".into()));
        }
        let wait_time = 45.0 / slowest;
        let mut oracle = Self { a, b, step, wait_time, wait: Vec::new() };
        // The evolution is linear, so the wait is a fixed matrix.
        let wait = (0..DIM)
            .map(|k| {
                let mut e = [ZERO_C; DIM];
                e[k] = C64::new(1.0, 0.0);
                oracle.evolve_amps(e, wait_time)
            })
            .collect();
        oracle.wait = wait;
        Ok(oracle)
    }

    /// The RK4 step size.
    pub fn step(&self) -> f64 {
        self.step
    }

    fn deriv(&self, psi: &[C64; DIM]) -> [C64; DIM] {
        let i = C64::new(0.0, 1.0);
        let mut d = [ZERO_C; DIM];
        for la in 0..LEVELS {
            for lb in 0..LEVELS {
                let k = LEVELS * la + lb;
                let mut acc = ZERO_C;
                // System A.
                match la {
                    EXCITED => acc += -i * self.a.g() * psi[LEVELS * PHOTON + lb],
                    PHOTON => {
                        acc += -i * self.a.g() * psi[LEVELS * EXCITED + lb] - 0.5 * self.a.kappa() * psi[k];
                    }
                    _ => {}
                }
                // System B.
                match lb {
                    EXCITED => acc += -i * self.b.g() * psi[LEVELS * la + PHOTON],
                    PHOTON => {
                        acc += -i * self.b.g() * psi[LEVELS * la + EXCITED] - 0.5 * self.b.kappa() * psi[k];
                    }
                    _ => {}
                }
                d[k] = acc;
            }
        }
        d
    }

    fn rk4(&self, psi: &[C64; DIM], h: f64) -> [C64; DIM] {
        let add = |x: &[C64; DIM], k: &[C64; DIM], s: f64| {
            let mut o = *x;
            for (oi, ki) in o.iter_mut().zip(k) {
                *oi += ki * s;
            }
            o
        };
        let k1 = self.deriv(psi);
        let k2 = self.deriv(&add(psi, &k1, h / 2.0));
        let k3 = self.deriv(&add(psi, &k2, h / 2.0));
        let k4 = self.deriv(&add(psi, &k3, h));
        let mut out = *psi;
        for j in 0..DIM {
            out[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
        }
        out
    }

    fn evolve_amps(&self, mut psi: [C64; DIM], duration: f64) -> [C64; DIM] {
        let full = (duration / self.step).floor() as usize;
        for _ in 0..full {
            psi = self.rk4(&psi, self.step);
        }
        let rest = duration - full as f64 * self.step;
        if rest > 0.0 {
            psi = self.rk4(&psi, rest);
        }
        psi
    }

    /// No-click evolution for `duration`.
    pub fn evolve(&self, state: &TrajectoryState, duration: f64) -> Result<TrajectoryState> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::Trajectory(format!("bad duration {duration}")));
        }
        let amps = self.evolve_amps(state.amps, duration);
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Trajectory("integration produced non-finite amplitudes".into()));
        }
        Ok(TrajectoryState { amps, time: state.time + duration })
    }

    /// Applies `J₊` (`plus = true`) or `J₋`.
    pub fn jump(&self, state: &TrajectoryState, plus: bool) -> TrajectoryState {
        let sign = if plus { 1.0 } else { -1.0 };
        let (ca, cb) = ((self.a.kappa() / 2.0).sqrt(), sign * (self.b.kappa() / 2.0).sqrt());
        let mut out = [ZERO_C; DIM];
        for l in 0..LEVELS {
            out[LEVELS * ZERO + l] += ca * state.amps[LEVELS * PHOTON + l];
            out[LEVELS * l + ZERO] += cb * state.amps[LEVELS * l + PHOTON];
        }
        TrajectoryState { amps: out, time: state.time }
    }

    /// `‖J₊ψ‖²` and `‖J₋ψ‖²`.
    pub fn click_rates(&self, state: &TrajectoryState) -> [f64; 2] {
        [self.jump(state, true).norm_sqr(), self.jump(state, false).norm_sqr()]
    }

    /// `−dN/dt = Σ_x κ_x |c₂,x|²`.
    pub fn decay_rate(&self, state: &TrajectoryState) -> f64 {
        let mut r = 0.0;
        for l in 0..LEVELS {
            r += self.a.kappa() * state.amps[LEVELS * PHOTON + l].norm_sqr();
            r += self.b.kappa() * state.amps[LEVELS * l + PHOTON].norm_sqr();
        }
        r
    }

    /// Qubits prepared in `cosθ|0⟩ + sinθ|1⟩`, then π-pulsed.
    pub fn prepared(theta_a: f64, theta_b: f64) -> TrajectoryState {
        let mut amps = [ZERO_C; DIM];
        let qa = [(ZERO, theta_a.cos()), (ONE, theta_a.sin())];
        let qb = [(ZERO, theta_b.cos()), (ONE, theta_b.sin())];
        for (la, xa) in qa {
            for (lb, xb) in qb {
                amps[LEVELS * la + lb] = C64::new(xa * xb, 0.0);
            }
        }
        TrajectoryState { amps: pi_pulse(&amps), time: 0.0 }
    }

    fn wait(&self, state: &TrajectoryState) -> Result<TrajectoryState> {
        let mut out = [ZERO_C; DIM];
        for (col, &x) in self.wait.iter().zip(&state.amps) {
            if x != ZERO_C {
                for (o, c) in out.iter_mut().zip(col) {
                    *o += c * x;
                }
            }
        }
        let qubit: f64 = [ONE, ZERO]
            .iter()
            .flat_map(|&la| [ONE, ZERO].map(move |lb| LEVELS * la + lb))
            .map(|k| out[k].norm_sqr())
            .sum();
        let total: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        let residual = (total - qubit).max(0.0).sqrt();
        if residual > RESIDUAL_TOL * qubit.sqrt().max(1e-300) {
            return Err(Error::Trajectory(format!("residual excitation {residual:e} after the wait")));
        }
        Ok(TrajectoryState { amps: out, time: state.time + self.wait_time })
    }

    /// Runs both heralding rounds from untilted qubits.
    pub fn run(&self, t1: f64, t2: f64) -> Result<DhTrajectory> {
        self.run_tilted(t1, t2, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4)
    }

    /// Runs both rounds from qubits tilted by `theta_a`, `theta_b`.
    pub fn run_tilted(&self, t1: f64, t2: f64, theta_a: f64, theta_b: f64) -> Result<DhTrajectory> {
        if !(t1 > 0.0 && t2 > 0.0 && t1.is_finite() && t2.is_finite()) {
            return Err(Error::Trajectory(format!("click times must be positive, got ({t1}, {t2})")));
        }
        let start = Self::prepared(theta_a, theta_b);
        let before1 = self.evolve(&start, t1)?;
        let mut densities = [[0.0; 2]; 2];
        let mut final_qubits = [ZERO_C; 4];
        let mut cos2 = 0.0;
        let mut sin2 = 0.0;
        for (d1, plus1) in [true, false].into_iter().enumerate() {
            let after1 = self.wait(&self.jump(&before1, plus1))?;
            let mut amps = x_flip(&after1.amps);
            amps = pi_pulse(&amps);
            let round2 = TrajectoryState { amps, time: 0.0 };
            let before2 = self.evolve(&round2, t2)?;
            for (d2, plus2) in [true, false].into_iter().enumerate() {
                let end = self.wait(&self.jump(&before2, plus2))?;
                let q = |la: usize, lb: usize| end.amps[LEVELS * la + lb];
                densities[d1][d2] = end.norm_sqr();
                cos2 += q(ZERO, ONE).norm_sqr();
                sin2 += q(ONE, ZERO).norm_sqr();
                if d1 == 0 && d2 == 0 {
                    final_qubits = [q(ZERO, ZERO), q(ONE, ZERO), q(ZERO, ONE), q(ONE, ONE)];
                }
            }
        }
        let click_density = densities.iter().flatten().sum();
        if !(cos2 + sin2 > 0.0) {
            return Err(Error::UndefinedTilt);
        }
        Ok(DhTrajectory {
            theta_beta: TiltAngle::new(sin2.sqrt().atan2(cos2.sqrt())),
            click_density,
            detector_densities: densities,
            final_qubits,
        })
    }
}

/// Swaps `|0⟩` and `|e⟩` on both systems.
fn pi_pulse(amps: &[C64; DIM]) -> [C64; DIM] {
    permute(amps, |l| match l {
        ZERO => EXCITED,
        EXCITED => ZERO,
        l => l,
    })
}

/// Swaps the qubit levels on both systems.
fn x_flip(amps: &[C64; DIM]) -> [C64; DIM] {
    permute(amps, |l| match l {
        ZERO => ONE,
        ONE => ZERO,
        l => l,
    })
}

fn permute(amps: &[C64; DIM], f: impl Fn(usize) -> usize) -> [C64; DIM] {
    let mut out = [ZERO_C; DIM];
    for la in 0..LEVELS {
        for lb in 0..LEVELS {
            out[LEVELS * f(la) + f(lb)] = amps[LEVELS * la + lb];
        }
    }
    out
}

/// Simulates both heralding rounds for one pair of click times.
pub fn trajectory_dh(a: CavityParams, b: CavityParams, t1: f64, t2: f64) -> Result<DhTrajectory> {
    TrajectoryOracle::new(a, b)?.run(t1, t2)
}

/// Emission density `κ|c₂(t)|²` of one initially excited system, sampled at
/// ascending `times`.
pub fn single_system_density(params: CavityParams, times: &[f64]) -> Result<Vec<f64>> {
    if times.windows(2).any(|w| !(w[1] >= w[0])) || times.first().is_some_and(|&t| !(t >= 0.0)) {
        return Err(Error::Trajectory("times must be non-negative and ascending".into()));
    }
    let (g, kappa) = (params.g(), params.kappa());
    let h = 1.0 / (100.0 * g.max(kappa));
    let i = C64::new(0.0, 1.0);
    let deriv = |c: [C64; 2]| [-i * g * c[1], -i * g * c[0] - 0.5 * kappa * c[1]];
    let rk4 = |c: [C64; 2], h: f64| {
        let f = |c: [C64; 2], k: [C64; 2], s: f64| [c[0] + k[0] * s, c[1] + k[1] * s];
        let k1 = deriv(c);
        let k2 = deriv(f(c, k1, h / 2.0));
        let k3 = deriv(f(c, k2, h / 2.0));
        let k4 = deriv(f(c, k3, h));
        [
            c[0] + (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) * (h / 6.0),
            c[1] + (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) * (h / 6.0),
        ]
    };
    let mut c = [C64::new(1.0, 0.0), ZERO_C];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t + h <= target {
            c = rk4(c, h);
            t += h;
        }
        let tail = rk4(c, target - t);
        out.push(kappa * tail[1].norm_sqr());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::cd_density;

    fn cd(g: f64) -> CavityParams {
        CavityParams::critically_damped(g).unwrap()
    }

    fn eq10(ga: f64, gb: f64, t1: f64, t2: f64) -> f64 {
        let x = cd_density(ga, t1) * cd_density(gb, t2);
        let y = cd_density(gb, t1) * cd_density(ga, t2);
        x.sqrt().atan2(y.sqrt())
    }

    #[test]
    fn single_system_matches_closed_form() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.005).collect();
        for g in [10.0, 12.5] {
            let d = single_system_density(cd(g), &times).unwrap();
            for (t, x) in times.iter().zip(&d) {
                assert!((x - cd_density(g, *t)).abs() < 1e-6, "g {g} t {t}");
            }
        }
    }

    #[test]
    fn identical_cavities_erase_the_path() {
        let o = TrajectoryOracle::new(cd(10.0), cd(10.0)).unwrap();
        for (t1, t2) in [(0.02, 0.3), (0.1, 0.1), (0.25, 0.05)] {
            let r = o.run(t1, t2).unwrap();
            assert!((r.theta_beta.radians() - std::f64::consts::FRAC_PI_4).abs() < 1e-10);
        }
    }

    #[test]
    fn mismatched_pair_reproduces_closed_forms() {
        let o = TrajectoryOracle::new(cd(10.0), cd(12.5)).unwrap();
        let r = o.run(0.05, 0.2).unwrap();
        assert!((r.theta_beta.radians() - eq10(10.0, 12.5, 0.05, 0.2)).abs() < 1e-6);
        let q12 =
            0.25 * (cd_density(10.0, 0.05) * cd_density(12.5, 0.2) + cd_density(12.5, 0.05) * cd_density(10.0, 0.2));
        assert!((r.click_density - q12).abs() < 1e-6 * q12.max(1.0));
    }

    #[test]
    fn detectors_are_equally_likely() {
        let o = TrajectoryOracle::new(cd(10.0), cd(12.5)).unwrap();
        let mut s = TrajectoryOracle::prepared(0.7, 0.5);
        for _ in 0..30 {
            s = o.evolve(&s, 0.01).unwrap();
            let [p, m] = o.click_rates(&s);
            assert!((p - m).abs() < 1e-10);
        }
    }

    #[test]
    fn norm_decays_at_the_leakage_rate() {
        let o = TrajectoryOracle::new(cd(10.0), cd(12.5)).unwrap();
        let mut s = TrajectoryOracle::prepared(0.6, 0.9);
        let dt = 1e-5;
        for _ in 0..20 {
            let next = o.evolve(&s, dt).unwrap();
            assert!(next.norm_sqr() <= s.norm_sqr() + 1e-15);
            let mid = o.evolve(&s, dt / 2.0).unwrap();
            let slope = (s.norm_sqr() - next.norm_sqr()) / dt;
            assert!(
                (slope - o.decay_rate(&mid)).abs() < 1e-6 * o.decay_rate(&mid).max(1.0),
                "{slope} vs {}",
                o.decay_rate(&mid)
            );
            s = o.evolve(&s, 0.01).unwrap();
        }
    }

    #[test]
    fn jump_resolution_is_exact() {
        // J₊†J₊ + J₋†J₋ = J_A†J_A + J_B†J_B, checked on random states.
        let o = TrajectoryOracle::new(cd(3.0), cd(7.0)).unwrap();
        let mut rng = crate::rng::stream(9, 9);
        use rand::Rng;
        for _ in 0..20 {
            let mut amps = [ZERO_C; DIM];
            for a in &mut amps {
                *a = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
            let s = TrajectoryState { amps, time: 0.0 };
            let [p, m] = o.click_rates(&s);
            assert!((p + m - o.decay_rate(&s)).abs() < 1e-12 * o.decay_rate(&s));
        }
    }

    #[test]
    fn rejects_non_positive_times() {
        let o = TrajectoryOracle::new(cd(10.0), cd(12.5)).unwrap();
        assert!(o.run(0.0, 0.1).is_err());
        assert!(o.run(0.1, f64::NAN).is_err());
    }
}
