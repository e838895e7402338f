//! Phase-error estimation engine.
//!
//! The `N` data pairs split over six projective outcomes with fractions
//! `{n₊(1−δ₊), n₊δ₊, n₋(1−δ₋), n₋δ₋, m₀, m₁}`. Given the filter tally
//! `n_fil` and a candidate phase-error tally `n_ph`, four linear relations
//! hold in the `N → ∞` limit:
//!
//! ```text
//! n₊ + n₋ + m₀ + m₁                                   = 1
//! m₁ + n₋[s²(1−δ₋) + c²δ₋]                            = n_ph
//! m₀ + m₁ + c²(n₊δ₊ + n₋δ₋) + s²[n₊(1−δ₊) + n₋(1−δ₋)] = n_fil
//! m₁ + n₊δ₊ + n₋(1−δ₋)                                = s_α²
//! ```
//!
//! For fixed `(m₀, m₁)` they are linear in `u = n₊δ₊`, `v = n₋δ₋` and
//! `w = n₋` and have a unique solution. The smallest check-error fraction
//! compatible with that solution is
//!
//! ```text
//! n_err = [m₀ + m₁ + n₊ g(δ₊) + n₋ g(δ₋)] / 2,   g(δ) = (c√δ − s√(1−δ))²
//! ```
//!
//! which is jointly convex in all variables. Minimising over `(m₀, m₁)`
//! therefore gives a convex function of `n_ph`, and the phase-error bound is
//! the upper root of `min_err(n_fil, ·) = n_err`.

use serde::{Deserialize, Serialize};

use crate::coherent::{OverlapConstants, SubspaceConstants};
use crate::error::{check_range, Error, Result};
use crate::search::{golden_section_min, nelder_mead_2d};

/// Points in the coarse `n_ph` scan of [`PhaseErrorProfile`].
pub const PH_SCAN_POINTS: usize = 32;

/// Fractions of the data pairs in each projective outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVars {
    pub n_plus: f64,
    pub n_minus: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub m0: f64,
    pub m1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSolverConfig {
    /// Finite-size slack on the tally relations. Only the asymptotic engine
    /// (zero slack) is implemented.
    pub epsilon_slack: f64,
    /// Grid points per axis of the `(m₀, m₁)` search.
    pub m_grid: usize,
    /// Bisection tolerance on `n_ph`, relative to `n_fil`.
    pub ph_tolerance: f64,
    /// Points per axis of the brute-force validation oracle.
    pub oracle_grid: usize,
    /// Absolute amount (fraction of `N`) by which observed `n_err` may fall
    /// below the smallest attainable value before tallies are rejected as
    /// inconsistent. Zero for analytic tallies; sampled tallies need room
    /// for their statistical spread.
    pub consistency_slack: f64,
}

impl Default for BoundSolverConfig {
    fn default() -> Self {
        Self {
            epsilon_slack: 0.0,
            m_grid: 33,
            ph_tolerance: 1e-9,
            oracle_grid: 60,
            consistency_slack: 0.0,
        }
    }
}

impl BoundSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_slack != 0.0 {
            return Err(Error::Unsupported(
                "epsilon_slack > 0: only the asymptotic (zero-slack) bound is implemented",
            ));
        }
        if self.m_grid < 2 {
            return Err(Error::domain("m_grid", self.m_grid as f64, ">= 2"));
        }
        if self.oracle_grid < 2 {
            return Err(Error::domain("oracle_grid", self.oracle_grid as f64, ">= 2"));
        }
        check_range(
            "ph_tolerance",
            self.ph_tolerance,
            f64::MIN_POSITIVE,
            1e-2,
            "in (0, 1e-2]",
        )?;
        check_range("consistency_slack", self.consistency_slack, 0.0, 1.0, "in [0, 1]")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSolution {
    pub vars: ConstraintVars,
    /// Smallest check-error fraction; `+∞` when infeasible.
    pub min_err: f64,
    pub feasible: bool,
    /// Whether `m₀ = m₁ = 0` attains the minimum.
    pub zero_m_optimal: bool,
}

impl BoundSolution {
    fn infeasible(m0: f64, m1: f64) -> Self {
        Self {
            vars: ConstraintVars {
                n_plus: f64::NAN,
                n_minus: f64::NAN,
                delta_plus: f64::NAN,
                delta_minus: f64::NAN,
                m0,
                m1,
            },
            min_err: f64::INFINITY,
            feasible: false,
            zero_m_optimal: false,
        }
    }
}

/// `(c√δ − s√(1−δ))²`, the smallest `Γ`-outcome probability compatible with
/// a `P₁₁` probability `δ` inside a two-dimensional block.
pub fn g_function(delta: f64, consts: &OverlapConstants) -> Result<f64> {
    check_range("delta", delta, 0.0, 1.0, "in [0, 1]")?;
    Ok(weighted_g(delta, 1.0, consts.c(), consts.s()))
}

/// `n·g(x/n)` written as `(c√x − s√(n−x))²`; no division, so `n = 0` is fine.
#[inline]
fn weighted_g(x: f64, n: f64, c: f64, s: f64) -> f64 {
    let d = c * x.max(0.0).sqrt() - s * (n - x).max(0.0).sqrt();
    d * d
}

/// Solution of the three tally relations at fixed `(m₀, m₁)`.
#[derive(Debug, Clone, Copy)]
struct Reduced {
    /// `n₊δ₊`
    u: f64,
    /// `n₋δ₋`
    v: f64,
    /// `n₋`
    w: f64,
    n_plus: f64,
}

/// Everything the inner loop needs, precomputed for one `(n_fil, n_ph)`.
#[derive(Debug, Clone, Copy)]
struct Problem {
    n_fil: f64,
    n_ph: f64,
    s_sq: f64,
    c_sq: f64,
    t: f64,
    s: f64,
    c: f64,
    s_alpha_sq: f64,
    tol: f64,
}

impl Problem {
    fn new(n_fil: f64, n_ph: f64, consts: &SubspaceConstants) -> Self {
        let s_alpha_sq = consts.s_alpha_sq();
        Self {
            n_fil,
            n_ph,
            s_sq: consts.s_sq(),
            c_sq: consts.c_sq(),
            t: consts.t(),
            s: consts.beta.s(),
            c: consts.beta.c(),
            s_alpha_sq,
            tol: 1e-13 * (n_fil + n_ph + s_alpha_sq) + 1e-300,
        }
    }

    #[inline]
    fn eliminate(&self, m0: f64, m1: f64) -> Reduced {
        let m = m0 + m1;
        // filter relation: u + v = (n_fil − m − s²(1 − m)) / t
        let sum = (self.n_fil - self.s_sq - m * self.c_sq) / self.t;
        // phase and marginal relations; the coefficient of v is 2s² + t = 1
        let v = self.n_ph - m1 - self.s_sq * (self.s_alpha_sq - m1 - sum);
        let w = self.s_alpha_sq - m1 - sum + 2.0 * v;
        Reduced {
            u: sum - v,
            v,
            w,
            n_plus: 1.0 - m - w,
        }
    }

    /// The four range constraints as values that must be `>= 0`.
    #[inline]
    fn slacks(r: &Reduced) -> [f64; 4] {
        [r.u, r.v, r.w - r.v, r.n_plus - r.u]
    }

    #[inline]
    fn is_feasible(&self, m0: f64, m1: f64, r: &Reduced) -> bool {
        let [a, b, c, d] = Self::slacks(r);
        m0 >= -self.tol
            && m1 >= -self.tol
            && a >= -self.tol
            && b >= -self.tol
            && c >= -self.tol
            && d >= -(self.tol + 4.0 * f64::EPSILON)
    }

    #[inline]
    fn objective(&self, m0: f64, m1: f64, r: &Reduced) -> f64 {
        let n_plus = r.n_plus.max(0.0);
        let w = r.w.max(0.0);
        let u = r.u.clamp(0.0, n_plus);
        let v = r.v.clamp(0.0, w);
        (m0.max(0.0) + m1.max(0.0) + weighted_g(u, n_plus, self.c, self.s) + weighted_g(v, w, self.c, self.s)) / 2.0
    }

    /// Objective, or `+∞` outside the feasible set.
    #[inline]
    fn value(&self, m0: f64, m1: f64) -> f64 {
        let r = self.eliminate(m0, m1);
        if self.is_feasible(m0, m1, &r) {
            self.objective(m0, m1, &r)
        } else {
            f64::INFINITY
        }
    }

    fn solution(&self, m0: f64, m1: f64) -> BoundSolution {
        let r = self.eliminate(m0, m1);
        if !self.is_feasible(m0, m1, &r) {
            return BoundSolution::infeasible(m0, m1);
        }
        let n_plus = r.n_plus.max(0.0);
        let w = r.w.max(0.0);
        let ratio = |x: f64, n: f64| if n > 0.0 { (x / n).clamp(0.0, 1.0) } else { 0.0 };
        BoundSolution {
            vars: ConstraintVars {
                n_plus,
                n_minus: w,
                delta_plus: ratio(r.u, n_plus),
                delta_minus: ratio(r.v, w),
                m0: m0.max(0.0),
                m1: m1.max(0.0),
            },
            min_err: self.objective(m0, m1, &r),
            feasible: true,
            zero_m_optimal: m0 == 0.0 && m1 == 0.0,
        }
    }

    /// The feasible `(m₀, m₁)` polygon. All slacks are affine in `(m₀, m₁)`,
    /// so the polygon is the triangle `m₀, m₁ ≥ 0, m₀ + m₁ ≤ 1` clipped by
    /// four half-planes.
    fn feasible_polygon(&self) -> Vec<[f64; 2]> {
        let at = |m0: f64, m1: f64| Self::slacks(&self.eliminate(m0, m1));
        let base = at(0.0, 0.0);
        let e0 = at(1.0, 0.0);
        let e1 = at(0.0, 1.0);
        let mut poly = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for k in 0..4 {
            let slack = if k == 3 {
                self.tol + 4.0 * f64::EPSILON
            } else {
                self.tol
            };
            let (a, b0, b1) = (base[k] + slack, e0[k] - base[k], e1[k] - base[k]);
            poly = clip_half_plane(&poly, |p| a + b0 * p[0] + b1 * p[1]);
            if poly.is_empty() {
                break;
            }
        }
        poly
    }
}

/// Sutherland–Hodgman step keeping `{p : h(p) >= 0}`.
fn clip_half_plane<H: Fn([f64; 2]) -> f64>(poly: &[[f64; 2]], h: H) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (hp, hq) = (h(p), h(q));
        if hp >= 0.0 {
            out.push(p);
        }
        if (hp >= 0.0) != (hq >= 0.0) {
            let t = hp / (hp - hq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn validate_fractions(n_fil: f64, n_ph: f64) -> Result<()> {
    check_range("n_fil", n_fil, 0.0, 1.0, "in [0, 1]")?;
    check_range("n_ph", n_ph, 0.0, 1.0, "in [0, 1]")?;
    Ok(())
}

/// Solves the tally relations at fixed `(m₀, m₁)` and returns the smallest
/// compatible check-error fraction. Infeasible systems come back with
/// `feasible = false`.
pub fn min_err_fixed_m(n_fil: f64, n_ph: f64, m0: f64, m1: f64, consts: &SubspaceConstants) -> Result<BoundSolution> {
    validate_fractions(n_fil, n_ph)?;
    check_range("m0", m0, 0.0, 1.0, "in [0, 1]")?;
    check_range("m1", m1, 0.0, 1.0, "in [0, 1]")?;
    Ok(Problem::new(n_fil, n_ph, consts).solution(m0, m1))
}

/// Minimum of [`min_err_fixed_m`] over all feasible `(m₀, m₁)`.
///
/// Grid search on the bounding box of the feasible polygon plus its
/// vertices, then a Nelder–Mead polish. When `(0, 0)` is feasible and
/// nothing beats it by more than `1e-10·n_fil`, the `(0, 0)` solution is
/// returned as is.
pub fn min_err(n_fil: f64, n_ph: f64, consts: &SubspaceConstants, cfg: &BoundSolverConfig) -> Result<BoundSolution> {
    validate_fractions(n_fil, n_ph)?;
    cfg.validate()?;
    Ok(minimize_over_m(&Problem::new(n_fil, n_ph, consts), cfg.m_grid))
}

fn minimize_over_m(p: &Problem, m_grid: usize) -> BoundSolution {
    let poly = p.feasible_polygon();
    if poly.is_empty() {
        return BoundSolution::infeasible(0.0, 0.0);
    }

    let zero = p.value(0.0, 0.0);
    let mut best = (zero, [0.0, 0.0]);
    let consider = |m: [f64; 2], best: &mut (f64, [f64; 2])| {
        let v = p.value(m[0], m[1]);
        if v < best.0 {
            *best = (v, m);
        }
    };

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &poly {
        let v = [v[0].max(0.0), v[1].max(0.0)];
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
        consider(v, &mut best);
    }
    let centroid = poly.iter().fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
    let n = poly.len() as f64;
    consider([(centroid[0] / n).max(0.0), (centroid[1] / n).max(0.0)], &mut best);

    let steps = (m_grid - 1) as f64;
    for i in 0..m_grid {
        let m0 = lo[0] + (hi[0] - lo[0]) * i as f64 / steps;
        for j in 0..m_grid {
            let m1 = lo[1] + (hi[1] - lo[1]) * j as f64 / steps;
            consider([m0, m1], &mut best);
        }
    }

    let threshold = 1e-10 * p.n_fil;
    if zero.is_finite() && best.0 >= zero - threshold {
        let mut sol = p.solution(0.0, 0.0);
        sol.zero_m_optimal = true;
        return sol;
    }

    let step = [
        ((hi[0] - lo[0]) / steps).max(1e-3 * p.n_fil.max(1e-300)),
        ((hi[1] - lo[1]) / steps).max(1e-3 * p.n_fil.max(1e-300)),
    ];
    let ftol = 1e-15 * p.n_fil;
    let (m, v) = nelder_mead_2d(|m| p.value(m[0], m[1]), best.1, step, ftol, 400);
    if v < best.0 {
        best = (v, m);
    }

    let mut sol = p.solution(best.1[0], best.1[1]);
    sol.zero_m_optimal = zero.is_finite() && zero <= sol.min_err + threshold;
    if zero.is_finite() && !sol.zero_m_optimal {
        log::debug!(
            "m0 = m1 = 0 not optimal at n_fil = {:e}, n_ph = {:e}: ({:e}, {:e}) gives {:e} < {:e}",
            p.n_fil,
            p.n_ph,
            sol.vars.m0,
            sol.vars.m1,
            sol.min_err,
            zero
        );
    }
    sol
}

/// `min_err(n_fil, ·)` on the feasible range of `n_ph` for one filter tally,
/// prepared so that many `n_err` values can be inverted cheaply.
#[derive(Debug, Clone)]
pub struct PhaseErrorProfile {
    n_fil: f64,
    consts: SubspaceConstants,
    cfg: BoundSolverConfig,
    /// Feasible `n_ph` range, clipped to `[0, n_fil]`.
    pub feasible: (f64, f64),
    /// Minimiser and minimum of `min_err(n_fil, ·)`.
    pub argmin: f64,
    pub min_value: f64,
    /// Coarse samples `(n_ph, min_err)` across the feasible range.
    pub scan: Vec<(f64, f64)>,
    /// Whether the samples right of the minimum are nondecreasing.
    pub monotone: bool,
}

impl PhaseErrorProfile {
    /// Returns `None` for `n_fil = 0`, where no bound is needed.
    pub fn new(n_fil: f64, consts: &SubspaceConstants, cfg: &BoundSolverConfig) -> Result<Option<Self>> {
        check_range("n_fil", n_fil, 0.0, 1.0, "in [0, 1]")?;
        cfg.validate()?;
        if n_fil == 0.0 {
            return Ok(None);
        }
        let f = |x: f64| minimize_over_m(&Problem::new(n_fil, x, consts), cfg.m_grid).min_err;
        let is_feasible = |x: f64| !Problem::new(n_fil, x, consts).feasible_polygon().is_empty();

        let Some(feasible) = feasible_interval(n_fil, consts.s_alpha_sq(), is_feasible) else {
            return Err(Error::InconsistentTallies {
                n_fil,
                n_err: f64::NAN,
                min_err: f64::INFINITY,
            });
        };
        let (lo, hi) = feasible;

        let scan: Vec<(f64, f64)> = (0..PH_SCAN_POINTS)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (PH_SCAN_POINTS - 1) as f64;
                (x, f(x))
            })
            .collect();
        let i_min = (0..scan.len())
            .min_by(|&a, &b| scan[a].1.total_cmp(&scan[b].1))
            .expect("scan is non-empty");
        let a = scan[i_min.saturating_sub(1)].0;
        let b = scan[(i_min + 1).min(scan.len() - 1)].0;
        let (argmin, min_value) = if b > a {
            golden_section_min(f, a, b, 1e-3 * cfg.ph_tolerance * n_fil)
        } else {
            scan[i_min]
        };
        let (argmin, min_value) = if scan[i_min].1 < min_value {
            scan[i_min]
        } else {
            (argmin, min_value)
        };

        let noise = 1e-12 * n_fil;
        let monotone = scan[i_min..].windows(2).all(|w| w[1].1 >= w[0].1 - noise);
        if !monotone {
            log::warn!("min_err is not monotone above its minimum at n_fil = {n_fil:e}; using exhaustive scan");
        }

        Ok(Some(Self {
            n_fil,
            consts: *consts,
            cfg: *cfg,
            feasible,
            argmin,
            min_value,
            scan,
            monotone,
        }))
    }

    pub fn n_fil(&self) -> f64 {
        self.n_fil
    }

    fn min_err_at(&self, n_ph: f64) -> f64 {
        minimize_over_m(&Problem::new(self.n_fil, n_ph, &self.consts), self.cfg.m_grid).min_err
    }

    fn target(&self, n_err: f64) -> Result<f64> {
        check_range("n_err", n_err, 0.0, self.n_fil, "in [0, n_fil]")?;
        let slack = self.cfg.consistency_slack + 1e-12 * self.n_fil;
        if self.min_value > n_err + slack {
            return Err(Error::InconsistentTallies {
                n_fil: self.n_fil,
                n_err,
                min_err: self.min_value,
            });
        }
        // Tallies inside the slack are lifted onto the attainable boundary.
        Ok(n_err.max(self.min_value))
    }

    /// Whether `bound(n_err) < y`, decided with a single `min_err`
    /// evaluation when the profile is monotone.
    pub fn bound_below(&self, n_err: f64, y: f64) -> Result<bool> {
        let target = self.target(n_err)?;
        if !self.monotone {
            return Ok(self.bound(n_err)? < y);
        }
        if y <= self.argmin {
            return Ok(false);
        }
        if y > self.feasible.1 {
            return Ok(true);
        }
        Ok(self.min_err_at(y) > target)
    }

    /// Largest `n_ph` in the feasible range with `min_err(n_fil, n_ph) <= n_err`.
    pub fn bound(&self, n_err: f64) -> Result<f64> {
        let target = self.target(n_err)?;
        let hi = self.feasible.1;
        let resolution = self.cfg.ph_tolerance * self.n_fil;

        if !self.monotone {
            let step = (resolution * 1e3).max(f64::MIN_POSITIVE);
            let mut x = self.argmin;
            let mut best = self.argmin;
            while x <= hi {
                if self.min_err_at(x) <= target {
                    best = x;
                }
                x += step;
            }
            return Ok(best.min(self.n_fil));
        }

        if self.min_err_at(hi) <= target {
            return Ok(hi.min(self.n_fil));
        }
        let mut a = self.argmin;
        let mut b = hi;
        for &(x, fx) in self.scan.iter().filter(|(x, _)| *x > self.argmin) {
            if fx <= target {
                a = x;
            } else {
                b = x;
                break;
            }
        }
        while b - a > resolution {
            let mid = 0.5 * (a + b);
            if self.min_err_at(mid) <= target {
                a = mid;
            } else {
                b = mid;
            }
        }
        // the upper end of the final bracket keeps the bound conservative
        Ok(b.min(self.n_fil))
    }
}

/// Feasible interval of `n_ph ∈ [0, n_fil]`, located by scanning and then
/// bisecting both edges. The feasible set is convex, so it is an interval.
/// `hint` is tried when the scans miss a very narrow interval; near
/// `n_fil = 1` everything sits in the ex block and the interval shrinks to
/// `n_ph = s_α²`.
fn feasible_interval<P: Fn(f64) -> bool>(n_fil: f64, hint: f64, is_feasible: P) -> Option<(f64, f64)> {
    let edge = |inside: f64, outside: f64| {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..200 {
            if (a - b).abs() <= 1e-15 * n_fil {
                break;
            }
            let mid = 0.5 * (a + b);
            if is_feasible(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    let coarse = |points: usize| -> Option<(usize, usize, usize)> {
        let xs: Vec<bool> = (0..points)
            .map(|i| is_feasible(n_fil * i as f64 / (points - 1) as f64))
            .collect();
        let first = xs.iter().position(|&f| f)?;
        let last = xs.iter().rposition(|&f| f)?;
        Some((first, last, points))
    };
    let Some((first, last, points)) = coarse(65).or_else(|| coarse(4097)) else {
        let hint = hint.clamp(0.0, n_fil);
        return is_feasible(hint).then(|| (edge(hint, 0.0), edge(hint, n_fil)));
    };
    let at = |i: usize| n_fil * i as f64 / (points - 1) as f64;
    let lo = if first == 0 {
        0.0
    } else {
        edge(at(first), at(first - 1))
    };
    let hi = if last == points - 1 {
        n_fil
    } else {
        edge(at(last), at(last + 1))
    };
    Some((lo, hi))
}

/// Upper bound `n̄_ph(n_fil, n_err)` on the phase-error fraction.
///
/// Returns 0 for `n_fil = 0` (no conclusive events). Fails with
/// [`Error::InconsistentTallies`] when no attack produces as few check
/// errors as observed.
pub fn phase_error_bound(n_fil: f64, n_err: f64, consts: &SubspaceConstants, cfg: &BoundSolverConfig) -> Result<f64> {
    check_range("n_err", n_err, 0.0, 1.0, "in [0, 1]")?;
    if n_err > n_fil {
        return Err(Error::domain("n_err", n_err, "at most n_fil"));
    }
    match PhaseErrorProfile::new(n_fil, consts, cfg)? {
        None => Ok(0.0),
        Some(profile) => profile.bound(n_err).map_err(|e| match e {
            Error::InconsistentTallies { min_err, .. } => Error::InconsistentTallies { n_fil, n_err, min_err },
            other => other,
        }),
    }
}
