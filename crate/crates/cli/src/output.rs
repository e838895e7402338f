//! File writers. Floats go out at 12 significant digits in both formats.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SIG_DIGITS: usize = 12;

pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{:.*e}", SIG_DIGITS - 1, x)
    } else {
        String::new()
    }
}

fn round_sig(x: f64) -> f64 {
    fmt_float(x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub struct OutDir {
    pub dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut v = serde_json::to_value(value).map_err(|e| io_error(&path, e))?;
        round_value(&mut v);
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| io_error(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// CSV with a `#` units line, a header row and one row per record.
    pub fn csv(&mut self, name: &str, units: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut buf = format!("# {units}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(|e| io_error(&path, e))?;
            for row in rows {
                w.write_record(row).map_err(|e| io_error(&path, e))?;
            }
            w.flush().map_err(|e| io_error(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| io_error(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}
