//! Numerical checks of the filter/POVM operator identities in a truncated
//! single-mode Fock space.
//!
//! The space orthogonal to `span{|β⟩, |−β⟩}` is represented by its
//! in-truncation complement. The identities only depend on the projector
//! onto that complement, which [`ex_basis_invariance_check`] verifies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coherent::{subspace_constants, OverlapConstants};
use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Largest Poisson tail mass beyond `n_max` that a build accepts.
pub const TRUNCATION_LIMIT: f64 = 1e-6;
/// Tail mass above which a build logs a warning.
pub const TRUNCATION_WARN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub orthonormality: f64,
    pub identity: f64,
    pub eigenvalue_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orthonormality: 1e-12,
            identity: 1e-8,
            eigenvalue_floor: 1e-10,
        }
    }
}

/// Dense representation of Bob's measurement and filter for one `β`.
#[derive(Debug, Clone)]
pub struct FockRep {
    pub n_max: usize,
    pub beta: f64,
    pub consts: OverlapConstants,
    /// Poisson mass of `|β⟩` above `n_max`, dropped by the truncation.
    pub tail_mass: f64,
    pub plus_beta: CVec,
    pub minus_beta: CVec,
    pub zero_x: CVec,
    pub one_x: CVec,
    pub zero_z: CVec,
    pub one_z: CVec,
    /// Orthonormal basis `{μ_j}` of the complement of `span{|β⟩, |−β⟩}`.
    pub ex_basis: Vec<CVec>,
    /// `F_0`, `F_1`, `F_2`.
    pub povm: [CMat; 3],
    /// `A_0, A_1, …` with `A_j = |0_x⟩⟨μ_j|` for `j ≥ 1`.
    pub kraus: Vec<CMat>,
    /// Coefficients `(a, b)` of `A_0 = a|0_x⟩⟨0_x| + b|1_x⟩⟨1_x|`.
    pub filter_coefficients: (f64, f64),
}

impl FockRep {
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// Same representation with `A_0` rebuilt from the given coefficients.
    /// Used to check that a wrong filter is caught.
    pub fn with_filter_coefficients(&self, a: f64, b: f64) -> FockRep {
        let mut rep = self.clone();
        rep.kraus[0] = filter_head(&rep.zero_x, &rep.one_x, a, b);
        rep.filter_coefficients = (a, b);
        rep
    }

    /// `Σ_j A_j† A_j`.
    pub fn filter_operator(&self) -> CMat {
        let d = self.dim();
        self.kraus
            .iter()
            .fold(CMat::zeros(d, d), |acc, a| acc + a.adjoint() * a)
    }

    /// `Σ_j A_j† |k_z⟩⟨k_z| A_j` for `k ∈ {0, 1}`.
    pub fn filtered_outcome(&self, k: usize) -> CMat {
        filtered_outcome_with(&self.kraus, if k == 0 { &self.zero_z } else { &self.one_z })
    }
}

/// Coherent state `|amplitude⟩` on occupations `0..=n_max`, renormalised.
fn coherent_vector(amplitude: f64, n_max: usize) -> CVec {
    let mut coeffs = Vec::with_capacity(n_max + 1);
    let mut c = (-amplitude * amplitude / 2.0).exp();
    coeffs.push(c);
    for n in 1..=n_max {
        c *= amplitude / (n as f64).sqrt();
        coeffs.push(c);
    }
    let v = CVec::from_iterator(n_max + 1, coeffs.into_iter().map(|x| Complex64::new(x, 0.0)));
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

/// `Σ_{n > n_max} e^{−m} mⁿ / n!`, summed term by term.
pub fn poisson_tail(mean: f64, n_max: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let n0 = n_max + 1;
    let ln_fact: f64 = (2..=n0).map(|k| (k as f64).ln()).sum();
    let mut term = (-mean + n0 as f64 * mean.ln() - ln_fact).exp();
    let mut sum = 0.0;
    let mut n = n0;
    while n < n0 + 100_000 {
        sum += term;
        n += 1;
        term *= mean / n as f64;
        if n as f64 > mean && term <= sum * 1e-18 {
            break;
        }
    }
    sum.min(1.0)
}

fn outer(u: &CVec, v: &CVec) -> CMat {
    u * v.adjoint()
}

fn filter_head(zero_x: &CVec, one_x: &CVec, a: f64, b: f64) -> CMat {
    outer(zero_x, zero_x) * Complex64::new(a, 0.0) + outer(one_x, one_x) * Complex64::new(b, 0.0)
}

fn filtered_outcome_with(kraus: &[CMat], k_z: &CVec) -> CMat {
    let proj = outer(k_z, k_z);
    let d = k_z.len();
    kraus
        .iter()
        .fold(CMat::zeros(d, d), |acc, a| acc + a.adjoint() * &proj * a)
}

fn ex_kraus<'a>(zero_x: &'a CVec, ex_basis: &'a [CVec]) -> impl Iterator<Item = CMat> + 'a {
    ex_basis.iter().map(move |mu| outer(zero_x, mu))
}

/// Completes `{q0, q1}` (orthonormal) to an orthonormal basis of the whole
/// space with column-pivoted Gram–Schmidt over the Fock basis vectors.
fn complement_basis(q0: &CVec, q1: &CVec, dim: usize) -> Vec<CVec> {
    let project_out = |v: &mut CVec, q: &CVec| {
        let c = q.dotc(v);
        *v -= q * c;
    };
    let mut residuals: Vec<CVec> = (0..dim)
        .map(|k| {
            let mut e = CVec::zeros(dim);
            e[k] = Complex64::new(1.0, 0.0);
            project_out(&mut e, q0);
            project_out(&mut e, q1);
            e
        })
        .collect();

    let mut basis: Vec<CVec> = Vec::with_capacity(dim.saturating_sub(2));
    while basis.len() + 2 < dim {
        let (pivot, _) = residuals
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("residual pool is never empty before completion");
        let mut v = residuals.swap_remove(pivot);
        // second pass against everything accepted so far
        project_out(&mut v, q0);
        project_out(&mut v, q1);
        for b in &basis {
            project_out(&mut v, b);
        }
        let norm = v.norm();
        v /= Complex64::new(norm, 0.0);
        for r in residuals.iter_mut() {
            project_out(r, &v);
        }
        basis.push(v);
    }
    basis
}

/// Builds `|±β⟩`, the X/Z bases, the complement basis, `{F_k}` and `{A_j}`.
pub fn build_fock_rep(beta: f64, n_max: usize) -> Result<FockRep> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::domain("beta", beta, "finite and > 0"));
    }
    if n_max < 4 {
        return Err(Error::domain("n_max", n_max as f64, ">= 4"));
    }
    let beta_sq = beta * beta;
    let tail_mass = poisson_tail(beta_sq, n_max);
    if tail_mass > TRUNCATION_LIMIT {
        return Err(Error::Truncation {
            n_max,
            beta_sq,
            tail_mass,
            limit: TRUNCATION_LIMIT,
        });
    }
    if tail_mass > TRUNCATION_WARN {
        log::warn!("Fock truncation n_max = {n_max} drops tail mass {tail_mass:e} at beta^2 = {beta_sq}");
    }

    let consts = subspace_constants(beta_sq)?;
    let dim = n_max + 1;
    let plus_beta = coherent_vector(beta, n_max);
    let minus_beta = coherent_vector(-beta, n_max);

    let zero_x = (&plus_beta + &minus_beta) / Complex64::new(2.0 * consts.c(), 0.0);
    let one_x = (&plus_beta - &minus_beta) / Complex64::new(2.0 * consts.s(), 0.0);
    let sqrt_half = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let zero_z = (&zero_x + &one_x) * sqrt_half;
    let one_z = (&zero_x - &one_x) * sqrt_half;

    let q0 = &zero_x / Complex64::new(zero_x.norm(), 0.0);
    let q1 = &one_x / Complex64::new(one_x.norm(), 0.0);
    let ex_basis = complement_basis(&q0, &q1, dim);

    let identity = CMat::identity(dim, dim);
    let half = Complex64::new(0.5, 0.0);
    let f0 = (&identity - outer(&minus_beta, &minus_beta)) * half;
    let f1 = (&identity - outer(&plus_beta, &plus_beta)) * half;
    // Written out rather than as 1 − F_0 − F_1 so completeness is a real check.
    let f2 = (outer(&plus_beta, &plus_beta) + outer(&minus_beta, &minus_beta)) * half;

    let filter_coefficients = (consts.s(), consts.c());
    let mut kraus = vec![filter_head(
        &zero_x,
        &one_x,
        filter_coefficients.0,
        filter_coefficients.1,
    )];
    kraus.extend(ex_kraus(&zero_x, &ex_basis));

    Ok(FockRep {
        n_max,
        beta,
        consts,
        tail_mass,
        plus_beta,
        minus_beta,
        zero_x,
        one_x,
        zero_z,
        one_z,
        ex_basis,
        povm: [f0, f1, f2],
        kraus,
        filter_coefficients,
    })
}

/// Largest singular value.
pub fn operator_norm(m: &CMat) -> f64 {
    m.clone().singular_values().max()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub beta_sq: f64,
    pub n_max: usize,
    pub tail_mass: f64,
    /// `‖F_k − Σ_j A_j†|k_z⟩⟨k_z|A_j‖` for k = 0 and 1.
    pub dev_eq1_k0: f64,
    pub dev_eq1_k1: f64,
    /// `‖F_0 + F_1 + F_2 − 1‖`.
    pub dev_completeness: f64,
    pub min_eigenvalue_f0: f64,
    pub min_eigenvalue_f1: f64,
    pub min_eigenvalue_f2: f64,
    /// Largest eigenvalue of `Σ_j A_j†A_j`.
    pub max_eigenvalue_filter: f64,
    /// Max distance of the filter spectrum from `{s², c², 1, …, 1}`.
    pub filter_spectrum_dev: f64,
    /// `|⟨β|Σ_j A_j†A_j|β⟩ − 2s²c²|`.
    pub filter_acceptance_dev: f64,
    /// `|⟨−β|β⟩ − e^{−2β²}|`.
    pub overlap_dev: f64,
    /// Max entry of `G − 1` for the Gram matrix of `{0_x, 1_x, μ_j}`, and of
    /// the Z basis.
    pub orthonormality_dev: f64,
    pub tolerance: f64,
    /// All identity deviations below `tolerance`, `F_2 ⪰ −tolerance`, and
    /// the filter bounded by `1 + tolerance`.
    pub pass: bool,
}

/// Evaluates every operator identity the analysis relies on.
pub fn verify_identities(rep: &FockRep, tol: f64) -> VerificationReport {
    let dim = rep.dim();
    let identity = CMat::identity(dim, dim);
    let [f0, f1, f2] = &rep.povm;

    let dev_eq1_k0 = operator_norm(&(f0 - rep.filtered_outcome(0)));
    let dev_eq1_k1 = operator_norm(&(f1 - rep.filtered_outcome(1)));
    let dev_completeness = operator_norm(&(f0 + f1 + f2 - &identity));

    let min_eig = |m: &CMat| hermitian_eigenvalues(m)[0];
    let filter = rep.filter_operator();
    let spectrum = hermitian_eigenvalues(&filter);
    let max_eigenvalue_filter = *spectrum.last().expect("non-empty spectrum");

    let s_sq = rep.consts.s_sq;
    let c_sq = rep.consts.c_sq;
    let mut expected: Vec<f64> = vec![s_sq, c_sq];
    expected.extend(std::iter::repeat_n(1.0, dim - 2));
    expected.sort_by(f64::total_cmp);
    let filter_spectrum_dev = spectrum
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let accept = rep.plus_beta.dotc(&(&filter * &rep.plus_beta)).re;
    let filter_acceptance_dev = (accept - 2.0 * s_sq * c_sq).abs();
    let overlap_dev = (rep.minus_beta.dotc(&rep.plus_beta).re - rep.consts.t).abs();

    let mut vectors = vec![&rep.zero_x, &rep.one_x];
    vectors.extend(rep.ex_basis.iter());
    let mut orthonormality_dev = gram_deviation(&vectors);
    orthonormality_dev = orthonormality_dev.max(gram_deviation(&[&rep.zero_z, &rep.one_z]));

    let pass = dev_eq1_k0 < tol
        && dev_eq1_k1 < tol
        && dev_completeness < tol
        && min_eig(f2) > -tol
        && max_eigenvalue_filter < 1.0 + tol;

    VerificationReport {
        beta_sq: rep.beta * rep.beta,
        n_max: rep.n_max,
        tail_mass: rep.tail_mass,
        dev_eq1_k0,
        dev_eq1_k1,
        dev_completeness,
        min_eigenvalue_f0: min_eig(f0),
        min_eigenvalue_f1: min_eig(f1),
        min_eigenvalue_f2: min_eig(f2),
        max_eigenvalue_filter,
        filter_spectrum_dev,
        filter_acceptance_dev,
        overlap_dev,
        orthonormality_dev,
        tolerance: tol,
        pass,
    }
}

fn gram_deviation(vectors: &[&CVec]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dotc(b) - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Haar-random unitary of size `dim` from a seeded generator.
pub fn random_unitary(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ginibre = CMat::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// Operator-norm change of `Σ_{j≥1} A_j†|k_z⟩⟨k_z|A_j` (worst over k) when
/// the complement basis is replaced by `μ'_j = Σ_i μ_i U_ij`.
pub fn ex_basis_rotation_change(rep: &FockRep, unitary: &CMat) -> f64 {
    let n = rep.ex_basis.len();
    assert_eq!(unitary.nrows(), n, "unitary must act on the complement basis");
    let rotated: Vec<CVec> = (0..n)
        .map(|j| {
            rep.ex_basis
                .iter()
                .enumerate()
                .fold(CVec::zeros(rep.dim()), |acc, (i, mu)| acc + mu * unitary[(i, j)])
        })
        .collect();
    let before: Vec<CMat> = ex_kraus(&rep.zero_x, &rep.ex_basis).collect();
    let after: Vec<CMat> = ex_kraus(&rep.zero_x, &rotated).collect();
    [&rep.zero_z, &rep.one_z]
        .into_iter()
        .map(|k_z| operator_norm(&(filtered_outcome_with(&before, k_z) - filtered_outcome_with(&after, k_z))))
        .fold(0.0, f64::max)
}

/// Applies a seeded Haar-random rotation to the complement basis and
/// reports how much the filtered outcome operators move (should be ≈ 0).
pub fn ex_basis_invariance_check(rep: &FockRep, seed: u64) -> f64 {
    let u = random_unitary(rep.ex_basis.len(), seed);
    ex_basis_rotation_change(rep, &u)
}
