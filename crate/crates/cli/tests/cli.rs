use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_refpulse");

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("REFPULSE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(out: &Path, args: &[&str]) -> (i32, String) {
    let o = run(out, args);
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(doc: &Path, schema: &str) {
    let schema = json(&schema_dir().join(schema));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let value = json(doc);
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{} violates schema: {errors:?}", doc.display());
}

const SMALL_REGION: &[&str] = &[
    "region",
    "--alpha-sq",
    "0.5",
    "--eta",
    "0.01",
    "--x-points",
    "24",
    "--rate-points",
    "24",
];
const SMALL_SIM: &[&str] = &[
    "simulate",
    "--alpha-sq",
    "0.3",
    "--eta",
    "0.1",
    "--n-pairs",
    "20000",
    "--seed",
    "11",
];

#[test]
fn example_region_max_below_one_percent() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["region", "--alpha-sq", "0.5", "--eta", "0.01"]);
    let text = fs::read_to_string(dir.path().join("region.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert_eq!(lines.next().unwrap(), "n_fil_over_nfil0,err_rate,gain");
    let max = lines
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max > 0.0 && max < 0.01, "max ordinate {max}");
}

#[test]
fn example_optimize_alpha_near_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        dir.path(),
        &["optimize", "--eta", "1e-3", "--gamma", "0", "--zeta", "0"],
    );
    assert!(stdout.contains("alpha_sq_opt="));
    let v = json(&dir.path().join("optimize.json"));
    let a = v["series"][0]["points"][0]["alpha_sq_opt"].as_f64().unwrap();
    assert!((a - 0.23).abs() < 0.02, "alpha_sq_opt {a}");
    let csv = fs::read_to_string(dir.path().join("optimize.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "eta,alpha_sq_opt,gain,reference_gain");
}

#[test]
fn example_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["verify", "--beta-sq", "0.01", "--n-max", "32"]);
    assert_eq!(json(&dir.path().join("verify.json"))["pass"], Value::Bool(true));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cases: [&[&str]; 4] = [
        SMALL_REGION,
        SMALL_SIM,
        &["optimize", "--eta", "1e-3,1e-2", "--gamma", "0,1e-4", "--zeta", "0"],
        &["gain", "--alpha-sq", "0.3", "--eta", "0.05", "--delta-phi", "0.05"],
    ];
    for args in cases {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        ok(a.path(), args);
        ok(b.path(), &[&["--threads", "1"], args].concat());
        let mut names: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            let x = fs::read(a.path().join(&n)).unwrap();
            let y = fs::read(b.path().join(&n)).unwrap();
            assert!(x == y, "{args:?}: {n:?} differs between runs");
        }
    }
}

#[test]
fn json_outputs_match_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["verify", "--beta-sq", "0.2"]);
    assert_schema(&d.join("verify.json"), "verify.schema.json");
    ok(d, SMALL_REGION);
    assert_schema(&d.join("region.json"), "region.schema.json");
    for model in [
        &["--lambda", "1e-3"][..],
        &["--gamma", "1e-4", "--zeta", "0.01"],
        &["--delta-phi", "0.1"],
        &["--n-fil", "0.006", "--n-err", "0.0001"],
    ] {
        ok(
            d,
            &[&["gain", "--alpha-sq", "0.3", "--eta", "0.01"][..], model].concat(),
        );
        assert_schema(&d.join("gain.json"), "gain.schema.json");
    }
    let reference = d.join("ref.csv");
    fs::write(&reference, "# digitised curve\neta,gain\n0.001,0.0001\n0.01,0.001\n").unwrap();
    ok(
        d,
        &[
            "optimize",
            "--eta-min",
            "1e-3",
            "--eta-max",
            "1e-2",
            "--eta-points",
            "3",
            "--reference-series",
            reference.to_str().unwrap(),
        ],
    );
    assert_schema(&d.join("optimize.json"), "optimize.schema.json");
    assert_eq!(
        json(&d.join("optimize.json"))["reference_series"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
    ok(d, SMALL_SIM);
    assert_schema(&d.join("simulate.json"), "simulate.schema.json");
}

#[test]
fn csv_floats_carry_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), SMALL_REGION);
    let text = fs::read_to_string(dir.path().join("region_curve_a.csv")).unwrap();
    let row = text.lines().nth(2).unwrap();
    for field in row.split(',') {
        let mantissa = field
            .split('e')
            .next()
            .unwrap()
            .trim_start_matches('-')
            .replace('.', "");
        assert_eq!(mantissa.len(), 12, "{field}");
    }
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.json");
    let body = r#"{"alpha_sq": 0.3, "eta": [0.01], "lambda": 0.001, "format": "json"}"#;
    fs::write(&cfg, body).unwrap();
    assert_schema(&cfg, "config.schema.json");
    ok(d, &["--config", cfg.to_str().unwrap(), "gain", "--alpha-sq", "0.2"]);
    let v = json(&d.join("gain.json"));
    assert_eq!(v["params"]["alpha_sq"].as_f64(), Some(0.2));
    assert_eq!(v["lambda"].as_f64(), Some(0.001));

    ok(
        d,
        &[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--n-pairs",
            "1000",
            "--lambda",
            "0",
        ],
    );
    assert!(!d.join("simulate_histogram.csv").exists(), "json format skips CSV");

    fs::write(&cfg, r#"{"alpha_sq": 0.3, "unknown_knob": 1}"#).unwrap();
    let (c, msg) = code(
        d,
        &[
            "--config",
            cfg.to_str().unwrap(),
            "gain",
            "--eta",
            "0.01",
            "--lambda",
            "0",
        ],
    );
    assert_eq!(c, 2, "{msg}");
    assert!(msg.contains("unknown_knob"));
}

#[test]
fn env_var_sets_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(BIN)
        .args(["verify", "--beta-sq", "0.01"])
        .env("REFPULSE_OUT_DIR", dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn model_flags_are_mutually_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["gain", "--alpha-sq", "0.3", "--eta", "0.01"];
    for extra in [
        &["--lambda", "0.001", "--delta-phi", "0.1"][..],
        &["--delta-phi", "0.1", "--n-fil", "0.01", "--n-err", "0"],
        &["--lambda", "0.001", "--gamma", "0"],
        &["--n-fil", "0.01"],
        &[],
    ] {
        let (c, msg) = code(dir.path(), &[&base[..], extra].concat());
        assert_eq!(c, 2, "{extra:?}: {msg}");
        assert_eq!(msg.trim().lines().count(), 1, "one-line message: {msg}");
    }
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["verify", "--bogus"]).0, 2);
    assert_eq!(
        code(d, &["gain", "--alpha-sq", "0.3", "--eta", "2", "--lambda", "0"]).0,
        3
    );
    assert_eq!(
        code(d, &["gain", "--alpha-sq", "0.3", "--eta", "0.01", "--lambda", "1.5"]).0,
        3
    );
    assert_eq!(
        code(
            d,
            &[
                "gain",
                "--alpha-sq",
                "0.3",
                "--eta",
                "0.01",
                "--n-fil",
                "0.5",
                "--n-err",
                "0"
            ]
        )
        .0,
        4
    );
    assert_eq!(code(d, &["verify", "--beta-sq", "10", "--n-max", "5"]).0, 5);
    let blocker = d.join("not_a_dir");
    fs::write(&blocker, "").unwrap();
    let (c, msg) = code(&blocker, &["verify", "--beta-sq", "0.01"]);
    assert_eq!(c, 6, "{msg}");
    assert!(msg.contains("not_a_dir"));
    let (c, _) = code(d, &["verify", "--beta-sq", "0.01", "--tolerance", "1e-30"]);
    assert_eq!(c, 7);
    assert_eq!(json(&d.join("verify.json"))["pass"], Value::Bool(false));
}
