//! Acceptance checks. Each criterion prints one PASS/FAIL line to stderr
//! (bypassing output capture) and then asserts.
//!
//! Criteria run one at a time so wall-clock budgets are not skewed by
//! sibling tests sharing the CPU.

mod common;

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refpulse_core::bound::{min_err, phase_error_bound, BoundSolverConfig, PhaseErrorProfile};
use refpulse_core::coherent::{no_attack_acceptance, ProtocolParams};
use refpulse_core::fock::{build_fock_rep, hermitian_eigenvalues, verify_identities, Tolerances};
use refpulse_core::keyrate::{
    curve_a_tallies, curve_b_tallies, gain_vs_eta, key_length, misalignment_threshold, optimize_gain, security_region,
    zero_gain_eta, ErrorModel, GainSearch, KeyRateResult, RegionConfig, Tallies, TallySource,
};
use refpulse_core::sim::{simulate_run, ChannelModel};

use common::{no_attack_tallies, GridOracle};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!(
        "acceptance criterion {criterion}: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn criterion_01_operator_identities() {
    let _guard = serial();
    let start = Instant::now();
    let tol = Tolerances::default();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut pass = true;
    for beta_sq in [1e-4, 1e-2, 0.25, 1.0] {
        let rep = build_fock_rep(f64::sqrt(beta_sq), 48).unwrap();
        let r = verify_identities(&rep, tol.identity);
        let eigs = hermitian_eigenvalues(&rep.filter_operator());
        let in_range = eigs.iter().all(|&e| (-1e-10..=1.0 + 1e-10).contains(&e));
        let eq1 = r.dev_eq1_k0.max(r.dev_eq1_k1);
        worst = (
            worst.0.max(eq1),
            worst.1.max(r.dev_completeness),
            worst.2.max(r.filter_spectrum_dev),
            worst.3.max(r.filter_acceptance_dev),
        );
        pass &= eq1 < 1e-8 && r.dev_completeness < 1e-8 && in_range && r.filter_spectrum_dev < 1e-8;
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(5);
    report(
        1,
        pass,
        &format!(
            "eq1 {:.1e}, completeness {:.1e}, spectrum {:.1e}, acceptance {:.1e}, {:.2?}",
            worst.0, worst.1, worst.2, worst.3, elapsed
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_region_small_amplitude_limit() {
    let _guard = serial();
    let start = Instant::now();
    let params = ProtocolParams::new(0.5, 0.01, 1).unwrap();
    let region = security_region(&params, &RegionConfig::default(), &BoundSolverConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let max = region.max_error_rate.unwrap_or(f64::NAN);
    let pass = (0.003..=0.010).contains(&max) && elapsed < Duration::from_secs(60);
    report(
        2,
        pass,
        &format!(
            "max tolerable n_err/n_fil {:.4}%, curve A leaves at {:.4}%, {:.2?}",
            100.0 * max,
            100.0 * region.curve_a_tolerable_rate.unwrap_or(f64::NAN),
            elapsed
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_region_tolerable_rate_and_shape() {
    let _guard = serial();
    let cfg = BoundSolverConfig::default();
    let grid = RegionConfig::default();
    let a = security_region(&ProtocolParams::new(1e-3, 0.01, 1).unwrap(), &grid, &cfg).unwrap();
    let b = security_region(&ProtocolParams::new(1e-3, 1e-3, 1).unwrap(), &grid, &cfg).unwrap();

    // the tolerable rate of ordinary noise sources (curve A)
    let rate = a.curve_a_tolerable_rate.unwrap_or(f64::NAN);
    let rate_ok = (0.06..=0.08).contains(&rate);

    let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => (x - y).abs() <= 0.02 * x.abs().max(y.abs()),
        (None, None) => true,
        _ => false,
    };
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for (ca, cb) in a.columns.iter().zip(&b.columns) {
        assert_eq!(ca.n_fil_over_nfil0, cb.n_fil_over_nfil0);
        if !(close(ca.lower, cb.lower) && close(ca.upper, cb.upper)) {
            mismatched += 1;
        }
        for (x, y) in [(ca.lower, cb.lower), (ca.upper, cb.upper)] {
            if let (Some(x), Some(y)) = (x, y) {
                if x.max(y) > 0.0 {
                    worst = worst.max((x - y).abs() / x.max(y));
                }
            }
        }
    }
    let pass = rate_ok && mismatched == 0;
    report(
        3,
        pass,
        &format!(
            "curve-A tolerable rate {:.3}%, raw upper edge max in window {:.3}%, shape: worst relative gap {:.2e}, {} mismatched columns",
            100.0 * rate,
            100.0 * a.max_error_rate.unwrap_or(f64::NAN),
            worst,
            mismatched
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_intensity_optimum() {
    let _guard = serial();
    let eta = 1e-3;
    let cfg = BoundSolverConfig::default();
    let opt = optimize_gain(eta, &ErrorModel::default(), &GainSearch::default(), &cfg).unwrap();
    let alpha = opt.alpha_sq_opt.unwrap_or(f64::NAN);
    let at: KeyRateResult = opt.at_optimum.expect("positive gain");
    let g = opt.gain_opt / (eta / 2.0);
    let nf = at.n_fil_frac / (eta / 2.0);
    let shortening = at.shortening();
    let pass = (0.20..=0.26).contains(&alpha)
        && (0.26..=0.32).contains(&g)
        && (0.88..=0.94).contains(&nf)
        && (0.66..=0.72).contains(&shortening);
    report(
        4,
        pass,
        &format!("alpha_sq_opt {alpha:.4}, G/(eta/2) {g:.4}, n_fil/N/(eta/2) {nf:.4}, shortening {shortening:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_linear_scaling() {
    let _guard = serial();
    let etas: Vec<f64> = (0..=8).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect();
    let pts = gain_vs_eta(
        &etas,
        &ErrorModel::default(),
        &GainSearch::default(),
        &BoundSolverConfig::default(),
    )
    .unwrap();
    // least-squares slope in log-log
    let xs: Vec<f64> = pts.iter().map(|p| p.eta.log10()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.gain.log10()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let pass = (slope - 1.0).abs() <= 0.05;
    report(5, pass, &format!("log-log slope {slope:.4}"));
    assert!(pass);
}

#[test]
fn criterion_06_misalignment_threshold() {
    let _guard = serial();
    let eta = 1e-3;
    let zeta = misalignment_threshold(eta, 1e-12, &GainSearch::default(), &BoundSolverConfig::default()).unwrap();
    let pass = (0.071..=0.081).contains(&zeta);
    report(6, pass, &format!("gain vanishes from zeta = {:.3}%", 100.0 * zeta));
    assert!(pass);
}

#[test]
fn criterion_07_dark_count_cutoff() {
    let _guard = serial();
    let cfg = BoundSolverConfig::default();
    let search = GainSearch::default();
    let gamma = 1e-4;
    let model = ErrorModel::new(gamma, 0.0, 0.0).unwrap();
    let eta0 = zero_gain_eta(&model, 1e-6, 1e-1, &search, &cfg)
        .unwrap()
        .expect("gain crosses zero");
    // intensity chosen just above the cutoff
    let alpha_opt = optimize_gain(eta0 * 1.001, &model, &search, &cfg)
        .unwrap()
        .alpha_sq_opt
        .expect("positive above the cutoff");
    let eta_star = gamma / (2.0 * alpha_opt);
    let decades = (eta0 / eta_star).log10();
    let pass = decades.abs() <= 1.0;
    report(
        7,
        pass,
        &format!(
            "gain hits 0 at eta {eta0:.3e}; 2*eta*alpha_sq_opt = gamma at eta {eta_star:.3e} (alpha_sq_opt {alpha_opt:.3}); {decades:.2} decades apart"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_oracle_equivalence() {
    let _guard = serial();
    let cfg = BoundSolverConfig::default();
    let oracle = GridOracle { grid: cfg.oracle_grid };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_gap: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut pass = true;
    let mut checked = 0;
    for &alpha_sq in &[0.5, 1e-3] {
        let params = ProtocolParams::new(alpha_sq, 0.01, 1).unwrap();
        let k = params.constants();
        let n_fil0 = no_attack_acceptance(&params);
        let mut found = 0;
        let mut attempts = 0;
        while found < 10 && attempts < 200 {
            attempts += 1;
            let n_fil = n_fil0 * rng.random_range(0.8..1.8);
            let Ok(Some(profile)) = PhaseErrorProfile::new(n_fil, &k, &cfg) else {
                continue;
            };
            let (lo, hi) = profile.feasible;
            let n_ph = lo + (hi - lo) * rng.random_range(0.1..0.9);
            let engine = min_err(n_fil, n_ph, &k, &cfg).unwrap();
            let Some((brute, resolution)) = oracle.min_err(&k, n_fil, n_ph) else {
                continue;
            };
            assert!(engine.feasible);
            found += 1;
            checked += 1;
            let gap = (engine.min_err - brute).abs();
            let excess = (engine.min_err - brute) / n_fil;
            worst_gap = worst_gap.max(gap / resolution.max(f64::MIN_POSITIVE));
            worst_excess = worst_excess.max(excess);
            pass &= gap <= resolution + 1e-12 * n_fil;
            pass &= engine.min_err <= brute + 1e-12 * n_fil;
        }
    }
    pass &= checked == 20;
    report(
        8,
        pass,
        &format!(
            "{checked} inputs; worst |engine - oracle| / resolution {worst_gap:.3}, worst (engine - oracle)/n_fil {worst_excess:.2e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_simulator_consistency() {
    let _guard = serial();
    let n = 1_000_000u64;
    let params = ProtocolParams::new(0.5, 0.01, n).unwrap();
    let cases = [
        (
            "curve A, lambda 1e-3",
            ChannelModel {
                eta: 0.01,
                delta_phi: 0.0,
                spurious_prob: 1e-3,
            },
            curve_a_tallies(1e-3, &params).unwrap(),
        ),
        (
            "curve B, dphi 0.2",
            ChannelModel {
                eta: 0.01,
                delta_phi: 0.2,
                spurious_prob: 0.0,
            },
            curve_b_tallies(0.2, &params).unwrap(),
        ),
    ];
    let sigma = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for (_, channel, expected) in &cases {
        for seed in [1, 2, 3] {
            let start = Instant::now();
            let r = simulate_run(&params, channel, seed).unwrap();
            slowest = slowest.max(start.elapsed());
            let z_fil = (r.n_fil_frac - expected.n_fil_frac).abs() / sigma(expected.n_fil_frac);
            let z_err = (r.n_err_frac - expected.n_err_frac).abs() / sigma(expected.n_err_frac);
            worst = worst.max(z_fil).max(z_err);
            pass &= z_fil <= 5.0 && z_err <= 5.0;
        }
    }
    pass &= slowest < Duration::from_secs(30);
    report(
        9,
        pass,
        &format!("worst deviation {worst:.2} sigma, slowest run {slowest:.2?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_no_attack_soundness() {
    let _guard = serial();
    let params = ProtocolParams::new(0.5, 0.01, 1).unwrap();
    let k = params.constants();
    let cfg = BoundSolverConfig::default();
    let (n_fil, n_ph) = no_attack_tallies(&params, 24);
    let err = min_err(n_fil, n_ph, &k, &cfg).unwrap();
    let bound = phase_error_bound(n_fil, 0.0, &k, &cfg).unwrap();
    let key = key_length(&Tallies::new(n_fil, 0.0, TallySource::Manual).unwrap(), &k, &cfg).unwrap();
    let pass = err.feasible
        && err.min_err.abs() <= 1e-9
        && err.min_err <= 1e-9 * n_fil
        && key.gain > 0.0
        && bound >= n_ph - cfg.ph_tolerance * n_fil;
    report(
        10,
        pass,
        &format!(
            "no-attack n_fil {n_fil:.6e} (analytic {:.6e}), n_ph {n_ph:.6e}, min_err {:.1e}, bound {bound:.6e}, gain {:.4e}",
            no_attack_acceptance(&params),
            err.min_err,
            key.gain
        ),
    );
    assert!(pass);
}
