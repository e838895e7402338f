//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64;
use refpulse_core::coherent::{ProtocolParams, SubspaceConstants};
use refpulse_core::fock::{build_fock_rep, CMat};

/// Brute-force minimum of the check-error fraction over all six-outcome
/// distributions consistent with `(n_fil, n_ph)`.
///
/// The unknowns are `p00 = n₊(1−δ₊)`, `p11 = n₊δ₊`, `p10 = n₋(1−δ₋)`,
/// `p01 = n₋δ₋`, `m0`, `m1`. The pair `(m0, m1)` is swept on a grid over
/// `[0, n_fil]²` (every ex-block pair is conclusive); the four block
/// fractions follow from the linear relations by a dense solve and the
/// point is kept only when all six are nonnegative. A first pass locates the
/// feasible box, a second pass resolves it. Returns `(minimum, resolution)`
/// where the resolution is the largest objective change to a feasible grid
/// neighbour of the minimiser.
pub struct GridOracle {
    pub grid: usize,
}

impl GridOracle {
    fn solve(&self, k: &SubspaceConstants, n_fil: f64, n_ph: f64, m0: f64, m1: f64) -> Option<[f64; 6]> {
        let (s2, c2) = (k.s_sq(), k.c_sq());
        // x = (p00, p11, p10, p01)
        let a = Matrix4::new(
            1.0, 1.0, 1.0, 1.0, //
            0.0, 0.0, s2, c2, //
            s2, c2, s2, c2, //
            0.0, 1.0, 1.0, 0.0,
        );
        let b = Vector4::new(1.0 - m0 - m1, n_ph - m1, n_fil - m0 - m1, k.s_alpha_sq() - m1);
        let x = a.lu().solve(&b)?;
        let tol = 1e-13 * (n_fil + n_ph + k.s_alpha_sq());
        if x.iter().any(|&v| v < -tol) {
            return None;
        }
        Some([x[0].max(0.0), x[1].max(0.0), x[2].max(0.0), x[3].max(0.0), m0, m1])
    }

    fn objective(k: &SubspaceConstants, p: &[f64; 6]) -> f64 {
        let (c, s) = (k.beta.c(), k.beta.s());
        // δ′ bound in its expanded three-term form
        let g = |n: f64, x: f64| {
            if n <= 0.0 {
                return 0.0;
            }
            let d = (x / n).clamp(0.0, 1.0);
            n * (c * c * d + s * s * (1.0 - d) - 2.0 * c * s * (d * (1.0 - d)).sqrt()).max(0.0)
        };
        let [p00, p11, p10, p01, m0, m1] = *p;
        (m0 + m1 + g(p00 + p11, p11) + g(p10 + p01, p01)) / 2.0
    }

    fn sweep(&self, k: &SubspaceConstants, n_fil: f64, n_ph: f64, b: [f64; 4]) -> DMatrix<f64> {
        let g = self.grid;
        DMatrix::from_fn(g, g, |i, j| {
            let m0 = b[0] + (b[1] - b[0]) * i as f64 / (g - 1) as f64;
            let m1 = b[2] + (b[3] - b[2]) * j as f64 / (g - 1) as f64;
            self.solve(k, n_fil, n_ph, m0, m1)
                .map(|p| Self::objective(k, &p))
                .unwrap_or(f64::INFINITY)
        })
    }

    pub fn min_err(&self, k: &SubspaceConstants, n_fil: f64, n_ph: f64) -> Option<(f64, f64)> {
        let g = self.grid;
        let wide = [0.0, n_fil, 0.0, n_fil];
        let coarse = self.sweep(k, n_fil, n_ph, wide);
        let cell = [
            (wide[1] - wide[0]) / (g - 1) as f64,
            (wide[3] - wide[2]) / (g - 1) as f64,
        ];
        let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for i in 0..g {
            for j in 0..g {
                if coarse[(i, j)].is_finite() {
                    let (x, y) = (wide[0] + cell[0] * i as f64, wide[2] + cell[1] * j as f64);
                    bbox = [bbox[0].min(x), bbox[1].max(x), bbox[2].min(y), bbox[3].max(y)];
                }
            }
        }
        if !bbox[0].is_finite() {
            return None;
        }
        let fine_box = [
            (bbox[0] - cell[0]).max(0.0),
            bbox[1] + cell[0],
            (bbox[2] - cell[1]).max(0.0),
            bbox[3] + cell[1],
        ];
        let fine = self.sweep(k, n_fil, n_ph, fine_box);
        let (mut best, mut at) = (f64::INFINITY, (0, 0));
        for i in 0..g {
            for j in 0..g {
                if fine[(i, j)] < best {
                    best = fine[(i, j)];
                    at = (i, j);
                }
            }
        }
        let mut resolution: f64 = 0.0;
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (i, j) = (at.0 as i64 + di, at.1 as i64 + dj);
                if i < 0 || j < 0 || i >= g as i64 || j >= g as i64 {
                    continue;
                }
                let v = fine[(i as usize, j as usize)];
                if v.is_finite() {
                    resolution = resolution.max((v - best).abs());
                }
            }
        }
        Some((best, resolution))
    }
}

fn qubit(v: [f64; 2]) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_iterator(2, v.iter().map(|&x| Complex64::new(x, 0.0)))
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Expected `(n_fil, n_ph)` per pair without eavesdropping, from the joint
/// Alice-qubit/Bob-mode density matrix after a pure-loss channel.
pub fn no_attack_tallies(params: &ProtocolParams, n_max: usize) -> (f64, f64) {
    let beta = params.beta_sq.sqrt();
    let rep = build_fock_rep(beta, n_max).expect("truncation within limits");
    let d = rep.dim();
    // overlap of the environment states for a ≠ a′
    let env = (-2.0 * (1.0 - params.eta) * params.alpha_sq).exp();

    let z = [qubit([1.0, 0.0]), qubit([0.0, 1.0])];
    let b = [rep.plus_beta.clone(), rep.minus_beta.clone()];
    let mut rho = CMat::zeros(2 * d, 2 * d);
    for a in 0..2 {
        for a2 in 0..2 {
            let w = if a == a2 { 0.5 } else { 0.5 * env };
            let alice = &z[a] * z[a2].adjoint();
            let bob = &b[a] * b[a2].adjoint();
            rho += kron(&alice, &bob) * Complex64::new(w, 0.0);
        }
    }

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let ax = [qubit([h, h]), qubit([h, -h])];
    let proj = |v: &nalgebra::DVector<Complex64>| v * v.adjoint();
    let bob_filtered = |target: &nalgebra::DVector<Complex64>| {
        rep.kraus
            .iter()
            .fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * proj(target) * k)
    };
    let m_fil = kron(&CMat::identity(2, 2), &rep.filter_operator());
    let m_ph = kron(&proj(&ax[0]), &bob_filtered(&rep.one_x)) + kron(&proj(&ax[1]), &bob_filtered(&rep.zero_x));
    ((m_fil * &rho).trace().re, (m_ph * &rho).trace().re)
}
