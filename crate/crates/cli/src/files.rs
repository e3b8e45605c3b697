//! File formats and the CLI error type.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sdm_core::spectra::{grid_omega, FirFilter, FrequencyWeight};

/// Command failures, split by exit code: usage/input problems exit with 2,
/// failed internal cross-checks with 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invariant(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Invariant(msg) => write!(f, "invariant check failed: {msg}"),
        }
    }
}

impl From<sdm_core::Error> for CliError {
    fn from(err: sdm_core::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

/// On-disk filter format: taps, the oversampling ratio the filter was
/// designed for, and free-form metadata about the design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterFile {
    pub taps: Vec<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl FilterFile {
    pub fn filter(&self) -> Result<FirFilter, CliError> {
        Ok(FirFilter::new(self.taps.clone())?)
    }
}

pub fn read_filter(path: &Path) -> Result<FilterFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("malformed filter file {}: {e}", path.display())))
}

pub fn write_filter(path: &Path, file: &FilterFile) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(file)
        .map_err(|e| CliError::usage(format!("cannot encode filter: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// Write taps in the flat `n,c_n` interchange form.
pub fn write_filter_csv(path: &Path, filter: &FirFilter) -> Result<(), CliError> {
    let mut out = String::from("n,c_n\n");
    for (i, c) in filter.taps().iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, c));
    }
    fs::write(path, out)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// Read a frequency weight sampled as `omega,value` rows, ascending omega
/// over one period starting at -pi. Row count must be a power of two and,
/// when `expected_grid` is given, must match it.
pub fn read_weight_csv(
    path: &Path,
    expected_grid: Option<usize>,
) -> Result<FrequencyWeight, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == "omega,value" => {}
        other => {
            return Err(CliError::usage(format!(
                "{}: expected header `omega,value`, got {:?}",
                path.display(),
                other.unwrap_or_default()
            )))
        }
    }
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (omega_text, value_text) = line.split_once(',').ok_or_else(|| {
            CliError::usage(format!(
                "{} row {}: expected `omega,value`",
                path.display(),
                idx + 2
            ))
        })?;
        let omega: f64 = omega_text.trim().parse().map_err(|e| {
            CliError::usage(format!(
                "{} row {}: bad omega: {e}",
                path.display(),
                idx + 2
            ))
        })?;
        let value: f64 = value_text.trim().parse().map_err(|e| {
            CliError::usage(format!(
                "{} row {}: bad value: {e}",
                path.display(),
                idx + 2
            ))
        })?;
        values.push((omega, value));
    }
    let m = values.len();
    if let Some(expected) = expected_grid {
        if m != expected {
            return Err(CliError::usage(format!(
                "{}: grid size mismatch: expected {expected} rows, got {m}",
                path.display()
            )));
        }
    }
    if m < 8 || !m.is_power_of_two() {
        return Err(CliError::usage(format!(
            "{}: row count must be a power of two >= 8, got {m}",
            path.display()
        )));
    }
    for (i, (omega, _)) in values.iter().enumerate() {
        let expect = grid_omega(i, m);
        if (omega - expect).abs() > 1e-9 {
            return Err(CliError::usage(format!(
                "{} row {}: omega {} does not lie on the {}-point grid (expected {})",
                path.display(),
                i + 2,
                omega,
                m,
                expect
            )));
        }
    }
    Ok(FrequencyWeight::new(
        values.into_iter().map(|(_, v)| v).collect(),
    )?)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}
