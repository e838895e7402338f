use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the range where the quantity is defined.
    #[error("{name} = {value} is out of range: {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// The Fock truncation drops more probability than the build tolerates.
    #[error("n_max = {n_max} is too small for beta^2 = {beta_sq}: Poisson tail mass {tail_mass:e} exceeds {limit:e}")]
    Truncation {
        n_max: usize,
        beta_sq: f64,
        tail_mass: f64,
        limit: f64,
    },

    /// No attack reproduces the tallies; for physical tallies this points at
    /// a modelling bug upstream.
    #[error("inconsistent tallies: n_fil = {n_fil:e}, n_err = {n_err:e}, smallest attainable n_err = {min_err:e}")]
    InconsistentTallies { n_fil: f64, n_err: f64, min_err: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain { name, value, expected }
    }
}

/// Checks `lo <= value <= hi` and finiteness.
pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64, expected: &'static str) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::domain(name, value, expected))
    }
}
