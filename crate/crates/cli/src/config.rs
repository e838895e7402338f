//! JSON config file. Every key is optional; command-line flags win.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha_sq: Option<f64>,
    pub eta: Option<Vec<f64>>,
    pub beta_sq: Option<f64>,
    pub gamma: Option<Vec<f64>>,
    pub zeta: Option<Vec<f64>>,
    pub delta_phi: Option<f64>,
    pub lambda: Option<f64>,
    pub n_fil: Option<f64>,
    pub n_err: Option<f64>,
    pub n_pairs: Option<u64>,
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
    pub tolerance: Option<f64>,
    pub x_points: Option<usize>,
    pub rate_points: Option<usize>,
    pub x_max: Option<f64>,
    pub rate_max: Option<f64>,
    pub rel_tol: Option<f64>,
    pub m_grid: Option<usize>,
    pub ph_tolerance: Option<f64>,
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
    pub eta_points: Option<usize>,
    pub alpha_sq_min: Option<f64>,
    pub alpha_sq_max: Option<f64>,
    pub reference_series: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<String>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag value, else config value, else an error naming both sources.
pub fn required<T: Clone>(flag: Option<T>, file: &Option<T>, name: &str) -> Result<T, CliError> {
    flag.or_else(|| file.clone()).ok_or_else(|| {
        CliError::Config(format!(
            "missing --{} (pass the flag or set \"{}\" in the config file)",
            name.replace('_', "-"),
            name
        ))
    })
}

pub fn or_default<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}
