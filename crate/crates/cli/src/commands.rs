use std::path::Path;

use serde::{Deserialize, Serialize};

use refpulse_core::bound::BoundSolverConfig;
use refpulse_core::coherent::{no_attack_acceptance, ProtocolParams};
use refpulse_core::fock::{build_fock_rep, verify_identities, Tolerances};
use refpulse_core::keyrate::{
    curve_a_tallies, curve_b_tallies, gain_vs_eta, key_length, lambda_model, security_region, ErrorModel, EtaPoint,
    GainSearch, KeyRateResult, RegionConfig, RegionPoint, SecurityRegion, Tallies, TallySource,
};
use refpulse_core::sim::{end_to_end_gain, ChannelModel, SimResult};

use crate::config::{or_default, required};
use crate::output::fmt_float;
use crate::{CliError, Context, Format, GainArgs, OptimizeArgs, RegionArgs, SimulateArgs, SolverArgs, VerifyArgs};

const REGION_UNITS: &str = "n_fil_over_nfil0: conclusive data pairs relative to the no-eavesdropper value; \
err_rate: check errors per conclusive check pair; gain: key bits per N pairs";
const OPTIMIZE_UNITS: &str = "eta: channel transmission; alpha_sq_opt: mean photon number of the signal pulse \
(empty when no intensity gives a key); gain, reference_gain: key bits per N pairs";
const HISTOGRAM_UNITS: &str = "alice_bit, bob_bit: 0 or 1; outcome: zero, one or inconclusive; count: pulses";

/// One scalar from a flag or from a one-element config list.
fn single(flag: Option<f64>, file: &Option<Vec<f64>>, name: &str) -> Result<Option<f64>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.as_deref() {
        None => Ok(None),
        Some([x]) => Ok(Some(*x)),
        Some(v) => Err(CliError::Config(format!(
            "\"{name}\" in config has {} values; this subcommand takes exactly one",
            v.len()
        ))),
    }
}

fn solver_config(a: &SolverArgs, ctx: &Context) -> BoundSolverConfig {
    let d = BoundSolverConfig::default();
    BoundSolverConfig {
        m_grid: or_default(a.m_grid, &ctx.file.m_grid, d.m_grid),
        ph_tolerance: or_default(a.ph_tolerance, &ctx.file.ph_tolerance, d.ph_tolerance),
        ..d
    }
}

fn protocol(alpha_sq: f64, eta: f64, n_pairs: u64, beta_sq: Option<f64>) -> Result<ProtocolParams, CliError> {
    Ok(match beta_sq {
        Some(b) => ProtocolParams::with_beta_sq(alpha_sq, eta, n_pairs, b)?,
        None => ProtocolParams::new(alpha_sq, eta, n_pairs)?,
    })
}

fn region_rows(points: &[RegionPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| vec![fmt_float(p.n_fil_over_nfil0), fmt_float(p.err_rate), fmt_float(p.gain)])
        .collect()
}

pub fn verify(a: &VerifyArgs, ctx: &mut Context) -> Result<(), CliError> {
    let beta_sq = required(a.beta_sq, &ctx.file.beta_sq, "beta_sq")?;
    let n_max = or_default(a.n_max, &ctx.file.n_max, 32);
    let tol = or_default(a.tolerance, &ctx.file.tolerance, Tolerances::default().identity);
    if !(beta_sq.is_finite() && beta_sq >= 0.0) {
        return Err(refpulse_core::Error::Domain {
            name: "beta_sq",
            value: beta_sq,
            expected: "finite and >= 0",
        }
        .into());
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::Usage(format!(
            "--tolerance {tol}: expected a positive number"
        )));
    }
    let rep = build_fock_rep(beta_sq.sqrt(), n_max)?;
    let report = verify_identities(&rep, tol);
    ctx.out.json("verify.json", &report)?;
    println!("verify beta_sq={beta_sq} n_max={n_max}: pass={}", report.pass);
    if !report.pass {
        return Err(CliError::VerificationFailed(format!(
            "an identity deviates by more than {tol:e}; see verify.json, then raise --n-max or loosen --tolerance"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct RegionReport<'a> {
    #[serde(flatten)]
    region: &'a SecurityRegion,
    grid: RegionConfig,
    contour: Vec<RegionPoint>,
}

pub fn region(a: &RegionArgs, ctx: &mut Context) -> Result<(), CliError> {
    let f = &ctx.file;
    let alpha_sq = required(a.alpha_sq, &f.alpha_sq, "alpha_sq")?;
    let eta = single(a.eta, &f.eta, "eta")?.ok_or_else(|| CliError::Config("missing --eta".into()))?;
    let params = protocol(alpha_sq, eta, 1, a.beta_sq.or(f.beta_sq))?;
    let d = RegionConfig::default();
    let grid = RegionConfig {
        x_points: or_default(a.x_points, &f.x_points, d.x_points),
        rate_points: or_default(a.rate_points, &f.rate_points, d.rate_points),
        x_max: or_default(a.x_max, &f.x_max, d.x_max),
        rate_max: or_default(a.rate_max, &f.rate_max, d.rate_max),
        rel_tol: or_default(a.rel_tol, &f.rel_tol, d.rel_tol),
        ..d
    };
    let region = security_region(&params, &grid, &solver_config(&a.solver, ctx))?;
    let contour = region.contour();
    if ctx.format == Format::Csv {
        let header = ["n_fil_over_nfil0", "err_rate", "gain"];
        ctx.out
            .csv("region.csv", REGION_UNITS, &header, &region_rows(&contour))?;
        ctx.out.csv(
            "region_curve_a.csv",
            REGION_UNITS,
            &header,
            &region_rows(&region.curve_a),
        )?;
        ctx.out.csv(
            "region_curve_b.csv",
            REGION_UNITS,
            &header,
            &region_rows(&region.curve_b),
        )?;
    }
    let report = RegionReport {
        region: &region,
        grid,
        contour,
    };
    ctx.out.json("region.json", &report)?;
    let show = |x: Option<f64>| x.map_or("none".to_string(), |r| format!("{r:.6}"));
    println!(
        "region alpha_sq={alpha_sq} eta={eta}: max_error_rate={} curve_a_tolerable_rate={}",
        show(region.max_error_rate),
        show(region.curve_a_tolerable_rate)
    );
    Ok(())
}

#[derive(Serialize)]
struct GainReport {
    params: ProtocolParams,
    model: TallySource,
    lambda: Option<f64>,
    gamma: Option<f64>,
    zeta: Option<f64>,
    delta_phi: Option<f64>,
    n_fil0: f64,
    tallies: Tallies,
    error_rate: f64,
    result: KeyRateResult,
    shortening: f64,
}

pub fn gain(a: &GainArgs, ctx: &mut Context) -> Result<(), CliError> {
    let f = &ctx.file;
    let alpha_sq = required(a.alpha_sq, &f.alpha_sq, "alpha_sq")?;
    let eta = single(a.eta, &f.eta, "eta")?.ok_or_else(|| CliError::Config("missing --eta".into()))?;
    let params = protocol(alpha_sq, eta, 1, a.beta_sq.or(f.beta_sq))?;

    let lambda = a.lambda.or(f.lambda);
    let gamma = single(a.gamma, &f.gamma, "gamma")?;
    let zeta = single(a.zeta, &f.zeta, "zeta")?;
    let delta_phi = a.delta_phi.or(f.delta_phi);
    let n_fil = a.n_fil.or(f.n_fil);
    let n_err = a.n_err.or(f.n_err);

    let curve_a = lambda.is_some() || gamma.is_some() || zeta.is_some();
    let curve_b = delta_phi.is_some();
    let manual = n_fil.is_some() || n_err.is_some();
    if [curve_a, curve_b, manual].iter().filter(|&&x| x).count() != 1 {
        return Err(CliError::Usage(
            "choose exactly one tally model: --lambda or --gamma/--zeta (curve A), --delta-phi (curve B), or --n-fil with --n-err (manual)".into(),
        ));
    }
    if lambda.is_some() && (gamma.is_some() || zeta.is_some()) {
        return Err(CliError::Usage(
            "--lambda conflicts with --gamma/--zeta; give lambda directly or derive it, not both".into(),
        ));
    }

    let (tallies, lambda) = if curve_a {
        let l = match lambda {
            Some(l) => l,
            None => lambda_model(
                &ErrorModel::new(gamma.unwrap_or(0.0), zeta.unwrap_or(0.0), 0.0)?,
                &params,
            )?,
        };
        (curve_a_tallies(l, &params)?, Some(l))
    } else if let Some(dp) = delta_phi {
        (curve_b_tallies(dp, &params)?, None)
    } else {
        let (Some(nf), Some(ne)) = (n_fil, n_err) else {
            return Err(CliError::Usage("manual tallies need both --n-fil and --n-err".into()));
        };
        (Tallies::new(nf, ne, TallySource::Manual)?, None)
    };

    let result = key_length(&tallies, &params.constants(), &solver_config(&a.solver, ctx))?;
    let report = GainReport {
        params,
        model: tallies.source,
        lambda,
        gamma,
        zeta,
        delta_phi,
        n_fil0: no_attack_acceptance(&params),
        tallies,
        error_rate: tallies.error_rate(),
        result,
        shortening: result.shortening(),
    };
    ctx.out.json("gain.json", &report)?;
    println!(
        "gain alpha_sq={alpha_sq} eta={eta}: n_fil={:.6e} n_err={:.6e} n_ph_bound={:.6e} gain={:.6e}",
        result.n_fil_frac, result.n_err_frac, result.n_ph_bound_frac, result.gain
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ReferencePoint {
    eta: f64,
    gain: f64,
}

#[derive(Serialize)]
struct ModelSeries {
    gamma: f64,
    zeta: f64,
    file: Option<String>,
    points: Vec<EtaPoint>,
}

#[derive(Serialize)]
struct OptimizeReport {
    search: GainSearch,
    series: Vec<ModelSeries>,
    reference_series: Option<Vec<ReferencePoint>>,
}

fn read_reference(path: &Path) -> Result<Vec<ReferencePoint>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    rdr.deserialize()
        .collect::<Result<Vec<ReferencePoint>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e} (expected columns eta,gain)", path.display())))
}

fn eta_grid(a: &OptimizeArgs, ctx: &Context) -> Result<Vec<f64>, CliError> {
    let f = &ctx.file;
    let list = a.eta.clone().or_else(|| f.eta.clone());
    let range = (
        a.eta_min.or(f.eta_min),
        a.eta_max.or(f.eta_max),
        a.eta_points.or(f.eta_points),
    );
    match (list, range) {
        (Some(v), (None, None, None)) if !v.is_empty() => Ok(v),
        (None, (Some(lo), Some(hi), Some(n))) => {
            if !(lo > 0.0 && hi >= lo && hi <= 1.0) || n == 0 || (n == 1 && hi != lo) {
                return Err(CliError::Usage(format!(
                    "--eta-min {lo} --eta-max {hi} --eta-points {n}: need 0 < eta-min <= eta-max <= 1 and a point count >= 2 for a range"
                )));
            }
            let (l, h) = (lo.ln(), hi.ln());
            Ok((0..n)
                .map(|i| {
                    if n == 1 {
                        lo
                    } else {
                        (l + (h - l) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect())
        }
        _ => Err(CliError::Usage(
            "give either --eta (comma-separated list) or all of --eta-min, --eta-max, --eta-points".into(),
        )),
    }
}

fn model_sets(a: &OptimizeArgs, ctx: &Context) -> Result<Vec<(f64, f64)>, CliError> {
    let g = a
        .gamma
        .clone()
        .or_else(|| ctx.file.gamma.clone())
        .unwrap_or_else(|| vec![0.0]);
    let z = a
        .zeta
        .clone()
        .or_else(|| ctx.file.zeta.clone())
        .unwrap_or_else(|| vec![0.0]);
    let n = g.len().max(z.len());
    let pick = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
    if g.is_empty() || z.is_empty() || (g.len() != n && g.len() != 1) || (z.len() != n && z.len() != 1) {
        return Err(CliError::Usage(format!(
            "--gamma has {} values and --zeta has {}; give equal counts or a single value to broadcast",
            g.len(),
            z.len()
        )));
    }
    Ok((0..n).map(|i| (pick(&g, i), pick(&z, i))).collect())
}

pub fn optimize(a: &OptimizeArgs, ctx: &mut Context) -> Result<(), CliError> {
    let etas = eta_grid(a, ctx)?;
    let sets = model_sets(a, ctx)?;
    let d = GainSearch::default();
    let search = GainSearch {
        alpha_sq_min: or_default(a.alpha_sq_min, &ctx.file.alpha_sq_min, d.alpha_sq_min),
        alpha_sq_max: or_default(a.alpha_sq_max, &ctx.file.alpha_sq_max, d.alpha_sq_max),
        ..d
    };
    let reference = match a.reference_series.as_ref().or(ctx.file.reference_series.as_ref()) {
        Some(p) => Some(read_reference(p)?),
        None => None,
    };
    let cfg = solver_config(&a.solver, ctx);

    let mut series = Vec::with_capacity(sets.len());
    for (i, &(gamma, zeta)) in sets.iter().enumerate() {
        let model = ErrorModel::new(gamma, zeta, 0.0)?;
        let points = gain_vs_eta(&etas, &model, &search, &cfg)?;
        let file = (ctx.format == Format::Csv).then(|| {
            if sets.len() == 1 {
                "optimize.csv".to_string()
            } else {
                format!("optimize_{i}.csv")
            }
        });
        if let Some(name) = &file {
            let rows: Vec<Vec<String>> = points
                .iter()
                .map(|p| {
                    vec![
                        fmt_float(p.eta),
                        p.alpha_sq_opt.map_or(String::new(), fmt_float),
                        fmt_float(p.gain),
                        fmt_float(p.reference_gain),
                    ]
                })
                .collect();
            let units = format!("gamma = {gamma}, zeta = {zeta}; {OPTIMIZE_UNITS}");
            ctx.out
                .csv(name, &units, &["eta", "alpha_sq_opt", "gain", "reference_gain"], &rows)?;
        }
        for p in &points {
            let opt = p.alpha_sq_opt.map_or("none".to_string(), |x| format!("{x:.6}"));
            println!(
                "gamma={gamma} zeta={zeta} eta={}: alpha_sq_opt={opt} gain={:.6e}",
                p.eta, p.gain
            );
        }
        series.push(ModelSeries {
            gamma,
            zeta,
            file,
            points,
        });
    }
    let report = OptimizeReport {
        search,
        series,
        reference_series: reference,
    };
    ctx.out.json("optimize.json", &report)
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    params: ProtocolParams,
    channel: ChannelModel,
    sim: &'a SimResult,
    key: KeyRateResult,
    consistency_slack: f64,
}

pub fn simulate(a: &SimulateArgs, ctx: &mut Context) -> Result<(), CliError> {
    let f = &ctx.file;
    let alpha_sq = required(a.alpha_sq, &f.alpha_sq, "alpha_sq")?;
    let eta = single(a.eta, &f.eta, "eta")?.ok_or_else(|| CliError::Config("missing --eta".into()))?;
    let n_pairs = or_default(a.n_pairs, &f.n_pairs, 100_000);
    let seed = or_default(a.seed, &f.seed, 0);
    let params = protocol(alpha_sq, eta, n_pairs, a.beta_sq.or(f.beta_sq))?;
    let channel = ChannelModel {
        eta,
        delta_phi: or_default(a.delta_phi, &f.delta_phi, 0.0),
        spurious_prob: or_default(a.lambda, &f.lambda, 0.0),
    };
    let run = end_to_end_gain(&params, &channel, seed, &solver_config(&a.solver, ctx))?;
    if ctx.format == Format::Csv {
        let rows: Vec<Vec<String>> = run
            .sim
            .histogram
            .iter()
            .map(|h| {
                let outcome = serde_json::to_value(h.outcome)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                vec![
                    h.alice_bit.to_string(),
                    h.bob_bit.to_string(),
                    outcome,
                    h.count.to_string(),
                ]
            })
            .collect();
        ctx.out.csv(
            "simulate_histogram.csv",
            HISTOGRAM_UNITS,
            &["alice_bit", "bob_bit", "outcome", "count"],
            &rows,
        )?;
    }
    let report = SimulateReport {
        params,
        channel,
        sim: &run.sim,
        key: run.key,
        consistency_slack: run.consistency_slack,
    };
    ctx.out.json("simulate.json", &report)?;
    println!(
        "simulate seed={seed} N={n_pairs}: n_fil={} n_err={} check_error_rate={:.6} gain={:.6e}",
        run.sim.n_fil, run.sim.n_err, run.sim.check_error_rate, run.key.gain
    );
    Ok(())
}
