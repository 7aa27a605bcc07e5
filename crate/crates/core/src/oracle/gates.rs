use std::f64::consts::FRAC_1_SQRT_2;

use crate::C64;

/// A 2×2 matrix acting on one qubit, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2(pub [[C64; 2]; 2]);

const fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

impl Unitary2 {
    pub const IDENTITY: Unitary2 = Unitary2([[c(1.0), c(0.0)], [c(0.0), c(1.0)]]);

    pub fn real(m: [[f64; 2]; 2]) -> Self {
        Self([[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]])
    }

    pub fn hadamard() -> Self {
        Self::real([[FRAC_1_SQRT_2, FRAC_1_SQRT_2], [FRAC_1_SQRT_2, -FRAC_1_SQRT_2]])
    }

    pub fn pauli_x() -> Self {
        Self::real([[0.0, 1.0], [1.0, 0.0]])
    }

    /// `diag(1, e^{iφ})`.
    pub fn z_phase(phi: f64) -> Self {
        Self([[c(1.0), c(0.0)], [c(0.0), C64::from_polar(1.0, phi)]])
    }

    /// `diag(1, i)`.
    pub fn s() -> Self {
        Self::z_phase(std::f64::consts::FRAC_PI_2)
    }

    /// `M(θ) = [[−cosθ, sinθ], [sinθ, cosθ]]`.
    pub fn m(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::real([[-c, s], [s, c]])
    }

    /// `self · rhs`: `rhs` acts first.
    pub fn mul(&self, rhs: &Unitary2) -> Unitary2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[c(0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Unitary2(out)
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn adjoint(&self) -> Unitary2 {
        let m = &self.0;
        Unitary2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.adjoint().mul(self);
        (p.0[0][0] - 1.0).norm() < tol
            && (p.0[1][1] - 1.0).norm() < tol
            && p.0[0][1].norm() < tol
            && p.0[1][0].norm() < tol
    }
}
