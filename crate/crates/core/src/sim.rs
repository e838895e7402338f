//! Monte Carlo run of the prepare-and-measure protocol.
//!
//! Each of the `2N` pulses draws from its own random stream, so tallies do
//! not depend on thread count or evaluation order. The check/data split is a
//! uniformly random `N`-subset drawn from a reserved stream.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::BoundSolverConfig;
use crate::coherent::{conclusive_probs, ProtocolParams};
use crate::error::{check_range, Error, Result};
use crate::keyrate::{key_length, KeyRateResult, Tallies, TallySource};
use crate::rng::{StreamFamily, PERMUTATION_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Transmission applied to the signal amplitude.
    pub eta: f64,
    /// Systematic phase rotation of the signal, radians.
    pub delta_phi: f64,
    /// Per-pulse probability of an injected orthogonal-mode photon.
    pub spurious_prob: f64,
}

impl ChannelModel {
    pub fn lossy(eta: f64) -> Self {
        Self {
            eta,
            delta_phi: 0.0,
            spurious_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("channel.eta", self.eta, 0.0, 1.0, "in [0, 1]")?;
        check_range("spurious_prob", self.spurious_prob, 0.0, 1.0, "in [0, 1]")?;
        if !self.delta_phi.is_finite() {
            return Err(Error::domain("delta_phi", self.delta_phi, "finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Zero,
    One,
    Inconclusive,
}

impl Outcome {
    const ALL: [Outcome; 3] = [Outcome::Zero, Outcome::One, Outcome::Inconclusive];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub alice_bit: u8,
    pub bob_bit: u8,
    pub outcome: Outcome,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub rng_seed: u64,
    /// `2N`
    pub total_pairs: u64,
    /// `N`
    pub n_pairs: u64,
    pub n_conclusive_check: u64,
    pub n_err: u64,
    /// Conclusive data pairs.
    pub n_fil: u64,
    pub n_fil_frac: f64,
    pub n_err_frac: f64,
    /// Errors among conclusive check pairs.
    pub check_error_rate: f64,
    pub check_conclusive_frac: f64,
    /// Counts over all `2N` pulses keyed by Alice's bit, Bob's bit, outcome.
    pub histogram: Vec<HistogramEntry>,
}

impl SimResult {
    pub fn tallies(&self) -> Result<Tallies> {
        Tallies::from_counts(self.n_fil, self.n_err, self.n_pairs, TallySource::Simulated)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    check_conclusive: u64,
    check_errors: u64,
    data_conclusive: u64,
    hist: [[[u64; 3]; 2]; 2],
}

impl Counts {
    fn merge(mut self, o: Counts) -> Counts {
        self.check_conclusive += o.check_conclusive;
        self.check_errors += o.check_errors;
        self.data_conclusive += o.data_conclusive;
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..3 {
                    self.hist[a][b][k] += o.hist[a][b][k];
                }
            }
        }
        self
    }
}

/// Marks a uniformly random `n`-subset of `0..total` (selection sampling).
fn check_mask(family: &StreamFamily, total: u64, n: u64) -> Vec<bool> {
    let mut rng = family.stream(PERMUTATION_STREAM);
    let mut needed = n;
    let mut mask = Vec::with_capacity(total as usize);
    for i in 0..total {
        let remaining = total - i;
        let pick = needed > 0 && rng.random_range(0..remaining) < needed;
        if pick {
            needed -= 1;
        }
        mask.push(pick);
    }
    mask
}

/// Simulates `2N` pulses through the channel and Bob's detector.
pub fn simulate_run(params: &ProtocolParams, channel: &ChannelModel, seed: u64) -> Result<SimResult> {
    channel.validate()?;
    let n = params.n_pairs;
    let total = n
        .checked_mul(2)
        .ok_or(Error::domain("n_pairs", n as f64, "2N must fit in 64 bits"))?;
    if total > usize::MAX as u64 {
        return Err(Error::domain("n_pairs", n as f64, "addressable on this platform"));
    }

    let beta = params.beta_sq.sqrt();
    let amplitude = channel.eta.sqrt() * params.alpha_sq.sqrt();
    // click[a][b]: Bob chose b, so only F_b can fire; P(F_b) is halved by his coin
    let mut click = [[0.0; 2]; 2];
    for (a, row) in click.iter_mut().enumerate() {
        let sign = if a == 0 { 1.0 } else { -1.0 };
        let p = conclusive_probs(Complex64::from_polar(sign * amplitude, channel.delta_phi), beta)?;
        let lambda = channel.spurious_prob;
        row[0] = 1.0 - (1.0 - lambda) * (1.0 - 2.0 * p.p0).max(0.0);
        row[1] = 1.0 - (1.0 - lambda) * (1.0 - 2.0 * p.p1).max(0.0);
    }

    let family = StreamFamily::new(seed);
    let mask = check_mask(&family, total, n);

    let counts = mask
        .par_iter()
        .enumerate()
        .fold(Counts::default, |mut acc, (i, &is_check)| {
            let mut rng = family.stream(i as u64);
            let a = rng.random::<bool>() as usize;
            let b = rng.random::<bool>() as usize;
            let clicked = rng.random::<f64>() < click[a][b];
            let outcome = match (clicked, b) {
                (false, _) => Outcome::Inconclusive,
                (true, 0) => Outcome::Zero,
                (true, _) => Outcome::One,
            };
            acc.hist[a][b][outcome.index()] += 1;
            if clicked {
                if is_check {
                    acc.check_conclusive += 1;
                    acc.check_errors += (a != b) as u64;
                } else {
                    acc.data_conclusive += 1;
                }
            }
            acc
        })
        .reduce(Counts::default, Counts::merge);

    let mut histogram = Vec::with_capacity(12);
    for a in 0..2u8 {
        for b in 0..2u8 {
            for outcome in Outcome::ALL {
                histogram.push(HistogramEntry {
                    alice_bit: a,
                    bob_bit: b,
                    outcome,
                    count: counts.hist[a as usize][b as usize][outcome.index()],
                });
            }
        }
    }

    let nf = n as f64;
    Ok(SimResult {
        rng_seed: seed,
        total_pairs: total,
        n_pairs: n,
        n_conclusive_check: counts.check_conclusive,
        n_err: counts.check_errors,
        n_fil: counts.data_conclusive,
        n_fil_frac: counts.data_conclusive as f64 / nf,
        n_err_frac: counts.check_errors as f64 / nf,
        check_error_rate: if counts.check_conclusive > 0 {
            counts.check_errors as f64 / counts.check_conclusive as f64
        } else {
            0.0
        },
        check_conclusive_frac: counts.check_conclusive as f64 / nf,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEnd {
    pub sim: SimResult,
    pub key: KeyRateResult,
    /// Consistency slack applied to the sampled tallies (fraction of `N`).
    pub consistency_slack: f64,
}

/// Simulates a run and feeds its empirical fractions to [`key_length`].
///
/// Sampled tallies scatter around their expectation, so observed `n_err`
/// may dip below the smallest value any attack can produce. Tallies within
/// five binomial standard deviations of `n_fil` are lifted onto the
/// attainable boundary instead of rejected. No finite-size confidence terms
/// are added to the key length.
pub fn end_to_end_gain(
    params: &ProtocolParams,
    channel: &ChannelModel,
    seed: u64,
    cfg: &BoundSolverConfig,
) -> Result<EndToEnd> {
    let sim = simulate_run(params, channel, seed)?;
    let tallies = sim.tallies()?;
    let slack = (5.0 * (tallies.n_fil_frac.max(1.0 / sim.n_pairs as f64) / sim.n_pairs as f64).sqrt()).min(1.0);
    let cfg = BoundSolverConfig {
        consistency_slack: cfg.consistency_slack.max(slack),
        ..*cfg
    };
    let key = key_length(&tallies, &params.constants(), &cfg)?;
    Ok(EndToEnd {
        sim,
        key,
        consistency_slack: cfg.consistency_slack,
    })
}
