//! Scalar algebra of coherent states and Bob's three-outcome measurement.
//!
//! Conventions: amplitudes are stored by intensity (`|α|²`, `|β|²`), the
//! global phase makes α and β real and positive, and every
//! probability-level quantity is a fraction of the number of pairs `N`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};

/// Overlap constants of the pair `|x⟩, |−x⟩` for one amplitude.
///
/// `t = ⟨−x|x⟩ = e^{−2|x|²}`, `c² = (1+t)/2`, `s² = (1−t)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapConstants {
    pub amplitude_sq: f64,
    pub t: f64,
    pub c_sq: f64,
    pub s_sq: f64,
}

impl OverlapConstants {
    pub fn c(&self) -> f64 {
        self.c_sq.sqrt()
    }

    pub fn s(&self) -> f64 {
        self.s_sq.sqrt()
    }
}

/// Builds the overlap constants for `amplitude_sq = |x|²`.
///
/// `s²` goes through `expm1`, so it keeps full relative precision for tiny
/// amplitudes where `1 − e^{−2|x|²}` would cancel.
pub fn subspace_constants(amplitude_sq: f64) -> Result<OverlapConstants> {
    check_range("amplitude_sq", amplitude_sq, 0.0, f64::INFINITY, "finite and >= 0")?;
    let x = -2.0 * amplitude_sq;
    let s_sq = -x.exp_m1() / 2.0;
    Ok(OverlapConstants {
        amplitude_sq,
        t: x.exp(),
        c_sq: 1.0 - s_sq,
        s_sq,
    })
}

/// Constants for one analysis point: Alice's signal `α` and Bob's LO `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceConstants {
    pub alpha: OverlapConstants,
    pub beta: OverlapConstants,
}

impl SubspaceConstants {
    pub fn new(alpha_sq: f64, beta_sq: f64) -> Result<Self> {
        Ok(Self {
            alpha: subspace_constants(alpha_sq)?,
            beta: subspace_constants(beta_sq)?,
        })
    }

    pub fn from_params(params: &ProtocolParams) -> Self {
        // ProtocolParams validates both intensities on construction.
        Self::new(params.alpha_sq, params.beta_sq).expect("validated protocol parameters")
    }

    pub fn s_sq(&self) -> f64 {
        self.beta.s_sq
    }

    pub fn c_sq(&self) -> f64 {
        self.beta.c_sq
    }

    pub fn t(&self) -> f64 {
        self.beta.t
    }

    pub fn s_alpha_sq(&self) -> f64 {
        self.alpha.s_sq
    }

    pub fn c_alpha_sq(&self) -> f64 {
        self.alpha.c_sq
    }
}

/// Physical configuration of one analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Alice's signal intensity `|α|²`.
    pub alpha_sq: f64,
    /// Channel transmission.
    pub eta: f64,
    /// Pairs per half after the random permutation.
    pub n_pairs: u64,
    /// Bob's LO intensity `|β|²`.
    pub beta_sq: f64,
}

impl ProtocolParams {
    /// Parameters with Bob's LO matched to the received signal, `β² = η·α²`.
    pub fn new(alpha_sq: f64, eta: f64, n_pairs: u64) -> Result<Self> {
        check_range("alpha_sq", alpha_sq, 0.0, f64::INFINITY, "finite and >= 0")?;
        Self::with_beta_sq(alpha_sq, eta, n_pairs, eta * alpha_sq)
    }

    /// Parameters with an explicitly chosen LO intensity.
    pub fn with_beta_sq(alpha_sq: f64, eta: f64, n_pairs: u64, beta_sq: f64) -> Result<Self> {
        check_range("alpha_sq", alpha_sq, 0.0, f64::INFINITY, "finite and >= 0")?;
        check_range("beta_sq", beta_sq, 0.0, f64::INFINITY, "finite and >= 0")?;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain("eta", eta, "in (0, 1]"));
        }
        if n_pairs == 0 {
            return Err(Error::domain("n_pairs", 0.0, ">= 1"));
        }
        Ok(Self {
            alpha_sq,
            eta,
            n_pairs,
            beta_sq,
        })
    }

    pub fn constants(&self) -> SubspaceConstants {
        SubspaceConstants::from_params(self)
    }
}

/// Binary entropy in bits, `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_range("p", p, 0.0, 1.0, "in [0, 1]")?;
    Ok(binary_entropy_unchecked(p))
}

#[inline]
pub(crate) fn binary_entropy_unchecked(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    // ln_1p keeps the (1−p) term accurate for small p.
    -(p * p.ln() + (1.0 - p) * (-p).ln_1p()) / std::f64::consts::LN_2
}

/// Outcome probabilities of `{F_0, F_1, F_2}` for a coherent input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConclusiveProbs {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl ConclusiveProbs {
    pub fn conclusive(&self) -> f64 {
        self.p0 + self.p1
    }
}

/// Probabilities of outcomes 0, 1 and inconclusive for a coherent state of
/// amplitude `received` measured against an LO of real amplitude `beta`.
///
/// Uses `|⟨u|v⟩|² = e^{−|u−v|²}`: outcome 1 never fires on `|β⟩` and
/// outcome 0 never fires on `|−β⟩`.
pub fn conclusive_probs(received: Complex64, beta: f64) -> Result<ConclusiveProbs> {
    if !(received.re.is_finite() && received.im.is_finite()) {
        return Err(Error::domain("received_amplitude", f64::NAN, "finite complex number"));
    }
    check_range("beta", beta, 0.0, f64::INFINITY, "finite and >= 0")?;
    let b = Complex64::new(beta, 0.0);
    let p1 = -(-(received - b).norm_sqr()).exp_m1() / 2.0;
    let p0 = -(-(received + b).norm_sqr()).exp_m1() / 2.0;
    Ok(ConclusiveProbs {
        p0,
        p1,
        p2: (1.0 - p0 - p1).max(0.0),
    })
}

/// Per-pair conclusive probability without eavesdropping, `(1 − e^{−4β²})/2`.
///
/// Multiplying by `N` gives the normalisation `n_fil0` used on region plots.
pub fn no_attack_acceptance(params: &ProtocolParams) -> f64 {
    -(-4.0 * params.beta_sq).exp_m1() / 2.0
}
