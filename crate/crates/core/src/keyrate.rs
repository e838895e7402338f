//! Key gain from tallies, the two error models, security regions and the
//! signal-intensity optimiser.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{BoundSolverConfig, PhaseErrorProfile};
use crate::coherent::{
    binary_entropy_unchecked, conclusive_probs, no_attack_acceptance, ProtocolParams, SubspaceConstants,
};
use crate::error::{check_range, Error, Result};
use crate::search::golden_section_min;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TallySource {
    ModelA,
    ModelB,
    Simulated,
    Manual,
}

/// Observed fractions (of `N`) of conclusive data pairs and check errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tallies {
    pub n_fil_frac: f64,
    pub n_err_frac: f64,
    pub source: TallySource,
}

impl Tallies {
    pub fn new(n_fil_frac: f64, n_err_frac: f64, source: TallySource) -> Result<Self> {
        check_range("n_fil_frac", n_fil_frac, 0.0, 1.0, "in [0, 1]")?;
        check_range("n_err_frac", n_err_frac, 0.0, 1.0, "in [0, 1]")?;
        if n_err_frac > n_fil_frac {
            return Err(Error::domain("n_err_frac", n_err_frac, "at most n_fil_frac"));
        }
        Ok(Self {
            n_fil_frac,
            n_err_frac,
            source,
        })
    }

    pub fn from_counts(n_fil: u64, n_err: u64, n_pairs: u64, source: TallySource) -> Result<Self> {
        if n_pairs == 0 {
            return Err(Error::domain("n_pairs", 0.0, ">= 1"));
        }
        let n = n_pairs as f64;
        Self::new(n_fil as f64 / n, n_err as f64 / n, source)
    }

    pub fn error_rate(&self) -> f64 {
        if self.n_fil_frac > 0.0 {
            self.n_err_frac / self.n_fil_frac
        } else {
            0.0
        }
    }
}

/// Noise parameters of the two error curves.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Intensity-independent spurious click rate (dark counts).
    pub gamma: f64,
    /// Misalignment parameter, `< 1/2`.
    pub zeta: f64,
    /// Phase misalignment in radians.
    pub delta_phi: f64,
}

impl ErrorModel {
    pub fn new(gamma: f64, zeta: f64, delta_phi: f64) -> Result<Self> {
        let m = Self { gamma, zeta, delta_phi };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_range("gamma", self.gamma, 0.0, 1.0, "in [0, 1]")?;
        if !(self.zeta >= 0.0 && self.zeta < 0.5) {
            return Err(Error::domain("zeta", self.zeta, "in [0, 0.5)"));
        }
        if !self.delta_phi.is_finite() {
            return Err(Error::domain("delta_phi", self.delta_phi, "finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub n_fil_frac: f64,
    pub n_err_frac: f64,
    pub n_ph_bound_frac: f64,
    pub key_frac: f64,
    /// Same value as `key_frac`.
    pub gain: f64,
    /// `1 − h(e) − h(n̄_ph/n_fil) >= 0`
    pub nonnegative: bool,
    /// `2n̄_ph <= n_fil`
    pub phase_condition: bool,
    /// No conclusive events; the key is undefined and reported as 0.
    pub degenerate: bool,
}

impl KeyRateResult {
    pub fn from_bound(n_fil: f64, n_err: f64, n_ph_bound: f64) -> Self {
        if n_fil == 0.0 {
            return Self {
                n_fil_frac: 0.0,
                n_err_frac: n_err,
                n_ph_bound_frac: 0.0,
                key_frac: 0.0,
                gain: 0.0,
                nonnegative: false,
                phase_condition: true,
                degenerate: true,
            };
        }
        let e = (n_err / n_fil).clamp(0.0, 1.0);
        let q = (n_ph_bound / n_fil).clamp(0.0, 1.0);
        let raw = n_fil * (1.0 - binary_entropy_unchecked(e) - binary_entropy_unchecked(q));
        let nonnegative = raw >= 0.0;
        let phase_condition = 2.0 * n_ph_bound <= n_fil;
        let key = if nonnegative && phase_condition { raw } else { 0.0 };
        Self {
            n_fil_frac: n_fil,
            n_err_frac: n_err,
            n_ph_bound_frac: n_ph_bound,
            key_frac: key,
            gain: key,
            nonnegative,
            phase_condition,
            degenerate: false,
        }
    }

    /// Fraction of the sifted key removed by privacy amplification and
    /// error correction, `1 − key/n_fil`.
    pub fn shortening(&self) -> f64 {
        if self.n_fil_frac > 0.0 {
            1.0 - self.key_frac / self.n_fil_frac
        } else {
            1.0
        }
    }
}

/// `n_key/N = n_fil[1 − h(n_err/n_fil) − h(n̄_ph/n_fil)]`, clamped at zero and
/// zeroed when `2n̄_ph > n_fil`.
pub fn key_length(tallies: &Tallies, consts: &SubspaceConstants, cfg: &BoundSolverConfig) -> Result<KeyRateResult> {
    let t = Tallies::new(tallies.n_fil_frac, tallies.n_err_frac, tallies.source)?;
    if t.n_fil_frac == 0.0 {
        return Ok(KeyRateResult::from_bound(0.0, t.n_err_frac, 0.0));
    }
    let n_ph = crate::bound::phase_error_bound(t.n_fil_frac, t.n_err_frac, consts, cfg)?;
    Ok(KeyRateResult::from_bound(t.n_fil_frac, t.n_err_frac, n_ph))
}

/// Spurious-click probability `λ = γ + 1 − exp{−α²η·4ζ/(1−2ζ)}`.
pub fn lambda_model(model: &ErrorModel, params: &ProtocolParams) -> Result<f64> {
    model.validate()?;
    let x = params.alpha_sq * params.eta * 4.0 * model.zeta / (1.0 - 2.0 * model.zeta);
    let lambda = model.gamma - (-x).exp_m1();
    if lambda > 1.0 {
        return Err(Error::domain("lambda", lambda, "at most 1 (reduce gamma or zeta)"));
    }
    Ok(lambda)
}

/// Curve A: spurious clicks at rate `λ`, half of them errors.
pub fn curve_a_tallies(lambda: f64, params: &ProtocolParams) -> Result<Tallies> {
    check_range("lambda", lambda, 0.0, 1.0, "in [0, 1]")?;
    let n_fil0 = no_attack_acceptance(params);
    Tallies::new(lambda + (1.0 - lambda) * n_fil0, lambda / 2.0, TallySource::ModelA)
}

/// Curve B: the received amplitude is rotated by `Δφ`.
pub fn curve_b_tallies(delta_phi: f64, params: &ProtocolParams) -> Result<Tallies> {
    if !delta_phi.is_finite() {
        return Err(Error::domain("delta_phi", delta_phi, "finite"));
    }
    let beta = params.beta_sq.sqrt();
    // Alice sent bit 0 (|β⟩ at Bob); outcome 0 is right, outcome 1 wrong.
    let p = conclusive_probs(Complex64::from_polar(beta, delta_phi), beta)?;
    Tallies::new(p.p0 + p.p1, p.p1, TallySource::ModelB)
}

/// Largest `p ∈ [0, 1/2]` with `h(p) <= target`.
fn inverse_entropy(target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    if target >= 1.0 {
        return 0.5;
    }
    let (mut a, mut b) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if binary_entropy_unchecked(mid) <= target {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

/// `G > 0` at `(n_fil, n_err)`, decided without computing the bound itself.
/// Inconsistent tallies count as outside the region.
fn gain_positive(profile: Option<&PhaseErrorProfile>, n_err: f64) -> bool {
    let Some(profile) = profile else { return false };
    let n_fil = profile.n_fil();
    if n_err > n_fil {
        return false;
    }
    let e = n_err / n_fil;
    let budget = 1.0 - binary_entropy_unchecked(e);
    if budget <= 0.0 {
        return false;
    }
    // G > 0 ⇔ n̄_ph < p*·n_fil with h(p*) = 1 − h(e), p* <= 1/2
    let y = inverse_entropy(budget) * n_fil;
    profile.bound_below(n_err, y).unwrap_or(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    /// Columns in `n_fil/n_fil0 ∈ (0, x_max]`.
    pub x_points: usize,
    /// Rows in `n_err/n_fil ∈ [0, rate_max]`.
    pub rate_points: usize,
    pub x_max: f64,
    pub rate_max: f64,
    /// Relative bisection tolerance on boundary rates.
    pub rel_tol: f64,
    /// Samples on each overlay curve.
    pub overlay_points: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            x_points: 200,
            rate_points: 200,
            x_max: 2.0,
            rate_max: 0.15,
            rel_tol: 1e-4,
            overlay_points: 200,
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x_points < 1 {
            return Err(Error::domain("x_points", 0.0, ">= 1"));
        }
        if self.rate_points < 2 {
            return Err(Error::domain("rate_points", self.rate_points as f64, ">= 2"));
        }
        if self.overlay_points < 2 {
            return Err(Error::domain("overlay_points", self.overlay_points as f64, ">= 2"));
        }
        check_range("x_max", self.x_max, f64::MIN_POSITIVE, 1e6, "positive")?;
        check_range("rate_max", self.rate_max, f64::MIN_POSITIVE, 1.0, "in (0, 1]")?;
        check_range("rel_tol", self.rel_tol, f64::MIN_POSITIVE, 0.1, "in (0, 0.1]")?;
        Ok(())
    }
}

/// One plotted point: abscissa `n_fil/n_fil0`, ordinate `n_err/n_fil`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub n_fil_over_nfil0: f64,
    pub err_rate: f64,
    pub gain: f64,
}

/// Positive-gain interval of one column; `None` when the column has none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionColumn {
    pub n_fil_over_nfil0: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityRegion {
    pub params: ProtocolParams,
    pub n_fil0: f64,
    pub columns: Vec<RegionColumn>,
    pub curve_a: Vec<RegionPoint>,
    pub curve_b: Vec<RegionPoint>,
    /// Largest upper-edge rate over all columns.
    pub max_error_rate: Option<f64>,
    /// Error rate at which curve A leaves the region.
    pub curve_a_tolerable_rate: Option<f64>,
}

impl SecurityRegion {
    /// `G = 0` contour: lower edge left to right, then upper edge right to left.
    pub fn contour(&self) -> Vec<RegionPoint> {
        let lower = self
            .columns
            .iter()
            .filter_map(|c| c.lower.map(|r| (c.n_fil_over_nfil0, r)));
        let upper = self
            .columns
            .iter()
            .rev()
            .filter_map(|c| c.upper.map(|r| (c.n_fil_over_nfil0, r)));
        lower
            .chain(upper)
            .map(|(x, r)| RegionPoint {
                n_fil_over_nfil0: x,
                err_rate: r,
                gain: 0.0,
            })
            .collect()
    }
}

/// Traces the positive-gain region on the `(n_fil/n_fil0, n_err/n_fil)` plane
/// with curve-A and curve-B overlays.
pub fn security_region(
    params: &ProtocolParams,
    grid: &RegionConfig,
    cfg: &BoundSolverConfig,
) -> Result<SecurityRegion> {
    grid.validate()?;
    cfg.validate()?;
    let consts = params.constants();
    let n_fil0 = no_attack_acceptance(params);
    if n_fil0 == 0.0 {
        return Err(Error::domain(
            "beta_sq",
            params.beta_sq,
            "positive (no conclusive events otherwise)",
        ));
    }

    let columns: Vec<RegionColumn> = (1..=grid.x_points)
        .into_par_iter()
        .map(|i| {
            let x = grid.x_max * i as f64 / grid.x_points as f64;
            region_column(x, n_fil0, &consts, grid, cfg)
        })
        .collect();

    let max_error_rate = columns.iter().filter_map(|c| c.upper).reduce(f64::max);
    let (curve_a, curve_a_tolerable_rate) = curve_a_overlay(params, n_fil0, grid, cfg)?;
    let curve_b = curve_b_overlay(params, n_fil0, grid, cfg)?;

    Ok(SecurityRegion {
        params: *params,
        n_fil0,
        columns,
        curve_a,
        curve_b,
        max_error_rate,
        curve_a_tolerable_rate,
    })
}

fn region_column(
    x: f64,
    n_fil0: f64,
    consts: &SubspaceConstants,
    grid: &RegionConfig,
    cfg: &BoundSolverConfig,
) -> RegionColumn {
    let empty = RegionColumn {
        n_fil_over_nfil0: x,
        lower: None,
        upper: None,
    };
    let n_fil = x * n_fil0;
    if n_fil > 1.0 {
        return empty;
    }
    let profile = match PhaseErrorProfile::new(n_fil, consts, cfg) {
        Ok(Some(p)) => p,
        _ => return empty,
    };
    let positive = |rate: f64| gain_positive(Some(&profile), rate * n_fil);
    let rate_at = |j: usize| grid.rate_max * j as f64 / (grid.rate_points - 1) as f64;
    let signs: Vec<bool> = (0..grid.rate_points).map(|j| positive(rate_at(j))).collect();

    let Some(first) = signs.iter().position(|&s| s) else {
        return empty;
    };
    let last = signs.iter().rposition(|&s| s).expect("some sign is positive");
    let refine = |inside: f64, outside: f64| {
        let (mut a, mut b) = (inside, outside);
        while (a - b).abs() > grid.rel_tol * a.abs().max(b.abs()) {
            let mid = 0.5 * (a + b);
            if positive(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let lower = if first == 0 {
        0.0
    } else {
        refine(rate_at(first), rate_at(first - 1))
    };
    let upper = if last == grid.rate_points - 1 {
        grid.rate_max
    } else {
        refine(rate_at(last), rate_at(last + 1))
    };
    RegionColumn {
        n_fil_over_nfil0: x,
        lower: Some(lower),
        upper: Some(upper),
    }
}

fn overlay_point(tallies: &Tallies, n_fil0: f64, consts: &SubspaceConstants, cfg: &BoundSolverConfig) -> RegionPoint {
    let gain = key_length(tallies, consts, cfg).map(|r| r.gain).unwrap_or(0.0);
    RegionPoint {
        n_fil_over_nfil0: tallies.n_fil_frac / n_fil0,
        err_rate: tallies.error_rate(),
        gain,
    }
}

/// Curve A from `λ = 0` to the right edge of the window, plus the rate at
/// which its gain first vanishes.
fn curve_a_overlay(
    params: &ProtocolParams,
    n_fil0: f64,
    grid: &RegionConfig,
    cfg: &BoundSolverConfig,
) -> Result<(Vec<RegionPoint>, Option<f64>)> {
    let consts = params.constants();
    // λ at which n_fil reaches x_max·n_fil0
    let lambda_max = (((grid.x_max - 1.0) * n_fil0) / (1.0 - n_fil0)).clamp(0.0, 1.0);
    let points: Vec<RegionPoint> = (0..grid.overlay_points)
        .into_par_iter()
        .map(|i| {
            let lambda = lambda_max * i as f64 / (grid.overlay_points - 1) as f64;
            let t = curve_a_tallies(lambda, params).expect("lambda in range");
            overlay_point(&t, n_fil0, &consts, cfg)
        })
        .collect();

    let positive = |lambda: f64| -> bool {
        let t = curve_a_tallies(lambda, params).expect("lambda in range");
        let profile = PhaseErrorProfile::new(t.n_fil_frac, &consts, cfg).ok().flatten();
        gain_positive(profile.as_ref(), t.n_err_frac)
    };
    let tolerable = if lambda_max == 0.0 || !positive(0.0) || positive(lambda_max) {
        None
    } else {
        // G is nonincreasing along curve A
        let (mut a, mut b) = (0.0, lambda_max);
        for _ in 0..200 {
            if b - a <= 1e-6 * b {
                break;
            }
            let mid = 0.5 * (a + b);
            if positive(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        let t = curve_a_tallies(0.5 * (a + b), params)?;
        Some(t.error_rate())
    };
    Ok((points, tolerable))
}

/// Curve B for `Δφ ∈ [0, π]`, restricted to the plotted rate window.
fn curve_b_overlay(
    params: &ProtocolParams,
    n_fil0: f64,
    grid: &RegionConfig,
    cfg: &BoundSolverConfig,
) -> Result<Vec<RegionPoint>> {
    let consts = params.constants();
    let phis: Vec<f64> = (0..grid.overlay_points)
        .map(|i| std::f64::consts::PI * i as f64 / (grid.overlay_points - 1) as f64)
        .collect();
    let tallies = phis
        .iter()
        .map(|&phi| curve_b_tallies(phi, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(tallies
        .par_iter()
        .filter(|t| t.error_rate() <= grid.rate_max)
        .map(|t| overlay_point(t, n_fil0, &consts, cfg))
        .collect())
}

/// Settings for [`optimize_gain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSearch {
    pub alpha_sq_min: f64,
    pub alpha_sq_max: f64,
    pub scan_per_decade: usize,
    /// Golden-section tolerance on `ln α²`.
    pub log_tol: f64,
}

impl Default for GainSearch {
    fn default() -> Self {
        Self {
            alpha_sq_min: 1e-6,
            alpha_sq_max: 10.0,
            scan_per_decade: 8,
            log_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainOptimum {
    pub eta: f64,
    /// `None` when the gain is zero for every intensity.
    pub alpha_sq_opt: Option<f64>,
    pub gain_opt: f64,
    /// Key details at the optimum.
    pub at_optimum: Option<KeyRateResult>,
    /// `(α², G)` samples of the coarse scan.
    pub trace: Vec<(f64, f64)>,
}

/// `G(α²)` along curve A with `λ` from the error model. Unreachable points
/// (`λ > 1`, inconsistent tallies) count as zero gain.
pub fn gain_at(alpha_sq: f64, eta: f64, model: &ErrorModel, cfg: &BoundSolverConfig) -> Result<KeyRateResult> {
    let params = ProtocolParams::new(alpha_sq, eta, 1)?;
    let lambda = match lambda_model(model, &params) {
        Ok(l) => l,
        Err(Error::Domain { name: "lambda", .. }) => return Ok(KeyRateResult::from_bound(1.0, 0.5, 1.0)),
        Err(e) => return Err(e),
    };
    let tallies = curve_a_tallies(lambda, &params)?;
    match key_length(&tallies, &params.constants(), cfg) {
        Ok(r) => Ok(r),
        Err(Error::InconsistentTallies { .. }) => {
            log::warn!("curve-A tallies inconsistent at alpha_sq = {alpha_sq:e}, eta = {eta:e}; gain taken as 0");
            Ok(KeyRateResult::from_bound(
                tallies.n_fil_frac,
                tallies.n_err_frac,
                tallies.n_fil_frac,
            ))
        }
        Err(e) => Err(e),
    }
}

/// Maximises `G` over `α²` for one transmission.
pub fn optimize_gain(
    eta: f64,
    model: &ErrorModel,
    search: &GainSearch,
    cfg: &BoundSolverConfig,
) -> Result<GainOptimum> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain("eta", eta, "in (0, 1]"));
    }
    model.validate()?;
    cfg.validate()?;
    if !(search.alpha_sq_min > 0.0 && search.alpha_sq_max > search.alpha_sq_min && search.scan_per_decade >= 1) {
        return Err(Error::domain(
            "alpha_sq_min",
            search.alpha_sq_min,
            "0 < alpha_sq_min < alpha_sq_max",
        ));
    }
    let (lo, hi) = (search.alpha_sq_min.ln(), search.alpha_sq_max.ln());
    let decades = (hi - lo) / std::f64::consts::LN_10;
    let points = (decades * search.scan_per_decade as f64).ceil() as usize + 1;
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();

    let gain = |x: f64| gain_at(x.exp(), eta, model, cfg).map(|r| r.gain);
    let gains = xs.iter().map(|&x| gain(x)).collect::<Result<Vec<f64>>>()?;
    let trace: Vec<(f64, f64)> = xs.iter().zip(&gains).map(|(&x, &g)| (x.exp(), g)).collect();

    let i_best = (0..points)
        .max_by(|&a, &b| gains[a].total_cmp(&gains[b]))
        .expect("scan is non-empty");
    if gains[i_best] <= 0.0 {
        return Ok(GainOptimum {
            eta,
            alpha_sq_opt: None,
            gain_opt: 0.0,
            at_optimum: None,
            trace,
        });
    }
    let a = xs[i_best.saturating_sub(1)];
    let b = xs[(i_best + 1).min(points - 1)];
    let (mut x_opt, neg) = golden_section_min(|x| -gain(x).unwrap_or(0.0), a, b, search.log_tol);
    if -neg < gains[i_best] {
        x_opt = xs[i_best];
    }
    let alpha_sq_opt = x_opt.exp();
    let at = gain_at(alpha_sq_opt, eta, model, cfg)?;
    Ok(GainOptimum {
        eta,
        alpha_sq_opt: Some(alpha_sq_opt),
        gain_opt: at.gain,
        at_optimum: Some(at),
        trace,
    })
}

/// Ideal single-photon BB84 gain `η/2`. With dark counts the curve is cut
/// to 0 once the signal counting rate `η` falls below `γ`; this cutoff is an
/// approximation, not a derived finite-key formula.
pub fn bb84_ideal_reference(eta: f64, gamma: f64) -> f64 {
    if gamma > 0.0 && eta < gamma {
        0.0
    } else {
        eta / 2.0
    }
}

/// One point of an optimised-gain sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub eta: f64,
    pub alpha_sq_opt: Option<f64>,
    pub gain: f64,
    pub reference_gain: f64,
}

/// Optimised gain over a list of transmissions, evaluated in parallel.
pub fn gain_vs_eta(
    etas: &[f64],
    model: &ErrorModel,
    search: &GainSearch,
    cfg: &BoundSolverConfig,
) -> Result<Vec<EtaPoint>> {
    etas.par_iter()
        .map(|&eta| {
            let opt = optimize_gain(eta, model, search, cfg)?;
            Ok(EtaPoint {
                eta,
                alpha_sq_opt: opt.alpha_sq_opt,
                gain: opt.gain_opt,
                reference_gain: bb84_ideal_reference(eta, model.gamma),
            })
        })
        .collect()
}

/// Smallest `ζ` (with `γ = 0`) whose optimised gain falls below
/// `zero_level·η`, by bisection on `[0, 0.5)`.
pub fn misalignment_threshold(eta: f64, zero_level: f64, search: &GainSearch, cfg: &BoundSolverConfig) -> Result<f64> {
    let is_zero = |zeta: f64| -> Result<bool> {
        let model = ErrorModel::new(0.0, zeta, 0.0)?;
        Ok(optimize_gain(eta, &model, search, cfg)?.gain_opt < zero_level * eta)
    };
    let (mut a, mut b) = (0.0, 0.499);
    if is_zero(a)? {
        return Ok(0.0);
    }
    if !is_zero(b)? {
        return Err(Error::domain("zeta", b, "gain must vanish below 0.5"));
    }
    while b - a > 1e-4 {
        let mid = 0.5 * (a + b);
        if is_zero(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b)
}

/// Largest `η` in `[eta_lo, eta_hi]` at which the optimised gain is zero,
/// assuming the gain is positive at `eta_hi` and vanishes at `eta_lo`.
/// Bisection in `ln η`.
pub fn zero_gain_eta(
    model: &ErrorModel,
    eta_lo: f64,
    eta_hi: f64,
    search: &GainSearch,
    cfg: &BoundSolverConfig,
) -> Result<Option<f64>> {
    let gain = |eta: f64| optimize_gain(eta, model, search, cfg).map(|o| o.gain_opt);
    if gain(eta_hi)? <= 0.0 || gain(eta_lo)? > 0.0 {
        return Ok(None);
    }
    let (mut a, mut b) = (eta_lo.ln(), eta_hi.ln());
    while b - a > 1e-3 {
        let mid = 0.5 * (a + b);
        if gain(mid.exp())? > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b.exp()))
}
