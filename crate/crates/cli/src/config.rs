//! Loading of JSON run configurations.

use std::fs;
use std::path::{Path, PathBuf};

use lpvgen::{SampledSignal, SchedulingSignal};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Failure};

/// Raw configuration text plus what is needed to resolve relative paths.
pub struct RawConfig {
    pub path: PathBuf,
    pub text: String,
    pub digest: String,
}

impl RawConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes)
            .map_err(|_| Failure::config(format!("config {} is not UTF-8", path.display())))?;
        Ok(RawConfig { path: path.to_path_buf(), text, digest })
    }

    pub fn parse<T: DeserializeOwned>(&self) -> CliResult<T> {
        parse_json(&self.text, &self.path)
    }

    /// Parses after setting the top-level `seed` field to `seed`.
    pub fn parse_with_seed<T: DeserializeOwned>(&self, seed: Option<u64>) -> CliResult<T> {
        let Some(seed) = seed else { return self.parse() };
        let mut value: serde_json::Value = parse_json(&self.text, &self.path)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Failure::config(format!("{}: top level must be an object", self.path.display())))?;
        obj.insert("seed".into(), seed.into());
        serde_json::from_value(value)
            .map_err(|e| Failure::config(format!("{}: {e}", self.path.display())))
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(rel)
        }
    }

    /// Inline value, or the contents of `file` relative to the config.
    pub fn inline_or_file<T: DeserializeOwned>(
        &self,
        inline: Option<T>,
        file: Option<&Path>,
        what: &str,
    ) -> CliResult<T> {
        match (inline, file) {
            (Some(v), None) => Ok(v),
            (None, Some(f)) => {
                let path = self.resolve(f);
                let text = fs::read_to_string(&path)
                    .map_err(|e| Failure::config(format!("cannot read {what} file {}: {e}", path.display())))?;
                parse_json(&text, &path)
            }
            (Some(_), Some(_)) => Err(Failure::config(format!("give either `{what}` or `{what}_file`, not both"))),
            (None, None) => Err(Failure::config(format!("missing `{what}` (or `{what}_file`)"))),
        }
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// A signal given either by samples or as a constant over the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SignalSpec {
    Constant(Vec<f64>),
    Sampled(SampledSignal<f64>),
}

impl SignalSpec {
    pub fn build(&self, dt: f64, t_end: f64) -> CliResult<SampledSignal<f64>> {
        match self {
            SignalSpec::Constant(v) => Ok(SampledSignal::constant(DVector::from_column_slice(v), dt, t_end)?),
            SignalSpec::Sampled(s) => Ok(s.clone()),
        }
    }

    pub fn build_scheduling(&self, dt: f64, t_end: f64) -> CliResult<SchedulingSignal<f64>> {
        Ok(SchedulingSignal::new(self.build(dt, t_end)?)?)
    }
}

/// Scheduling for a system with `n_p` parameters; may be omitted when `n_p = 0`.
pub fn scheduling_or_empty(
    spec: Option<&SignalSpec>,
    n_p: usize,
    dt: f64,
    t_end: f64,
) -> CliResult<SchedulingSignal<f64>> {
    match (spec, n_p) {
        (Some(s), _) => s.build_scheduling(dt, t_end),
        (None, 0) => Ok(SchedulingSignal::empty()),
        (None, _) => Err(Failure::config(format!("system has n_p = {n_p}; `scheduling` is required"))),
    }
}
