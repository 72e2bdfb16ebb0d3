//! Experiment-runner entry points shared by the `zsm` binary and the
//! acceptance suite: name resolution, config loading, verdict emission,
//! and verdict-schema validation.

use std::path::PathBuf;

use crate::config::ExperimentConfig;
use crate::error::CoreError;
use crate::experiments::{self, ExperimentVerdict};

/// Process exit codes of the runner.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_UNKNOWN_EXPERIMENT: i32 = 2;
pub const EXIT_BAD_CONFIG: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    UnknownExperiment {
        name: String,
        available: Vec<&'static str>,
    },
    BadConfig(String),
    Failed(CoreError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::UnknownExperiment { name, available } => {
                writeln!(f, "unknown experiment `{name}`; registered experiments:")?;
                for a in available {
                    writeln!(f, "  {a}")?;
                }
                Ok(())
            }
            CliError::BadConfig(msg) => write!(f, "config rejected: {msg}"),
            CliError::Failed(e) => write!(f, "experiment failed: {e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownExperiment { .. } => EXIT_UNKNOWN_EXPERIMENT,
            CliError::BadConfig(_) => EXIT_BAD_CONFIG,
            CliError::Failed(_) => EXIT_FAIL,
        }
    }
}

/// Resolve and run one experiment; `seed` overrides the config seed.
pub fn run(
    name: &str,
    config_path: Option<&std::path::Path>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ExperimentVerdict, CliError> {
    let def = experiments::find(name).ok_or_else(|| CliError::UnknownExperiment {
        name: name.to_string(),
        available: experiments::registry().iter().map(|e| e.name).collect(),
    })?;
    let mut cfg = match config_path {
        Some(path) => {
            ExperimentConfig::load(path).map_err(|e| CliError::BadConfig(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    cfg.validate()
        .map_err(|e| CliError::BadConfig(e.to_string()))?;
    experiments::run_experiment(def, &cfg, out_dir).map_err(CliError::Failed)
}

/// One line per registered experiment.
pub fn list_lines() -> Vec<String> {
    experiments::registry()
        .iter()
        .map(|e| format!("{:<28} {}", e.name, e.summary))
        .collect()
}

/// Long-form description of one experiment.
pub fn describe(name: &str) -> Result<String, CliError> {
    let def = experiments::find(name).ok_or_else(|| CliError::UnknownExperiment {
        name: name.to_string(),
        available: experiments::registry().iter().map(|e| e.name).collect(),
    })?;
    Ok(format!("{}\n\n{}\n", def.name, def.details))
}

/// Minimal structural validation of a verdict document against the shipped
/// schema: required keys, their types, and the per-metric shape.
pub fn validate_verdict_json(doc: &serde_json::Value) -> Result<(), String> {
    let obj = doc.as_object().ok_or("verdict must be an object")?;
    for (key, check) in [
        ("experiment", "string"),
        ("pass", "bool"),
        ("metrics", "object"),
        ("artifacts", "array"),
        ("wall_seconds", "number"),
        ("config_hash", "string"),
        ("seed", "number"),
    ] {
        let v = obj.get(key).ok_or_else(|| format!("missing key `{key}`"))?;
        let ok = match check {
            "string" => v.is_string(),
            "bool" => v.is_boolean(),
            "object" => v.is_object(),
            "array" => v.is_array(),
            "number" => v.is_number(),
            _ => false,
        };
        if !ok {
            return Err(format!("key `{key}` must be a {check}"));
        }
    }
    for (name, metric) in obj["metrics"].as_object().unwrap() {
        let m = metric
            .as_object()
            .ok_or_else(|| format!("metric `{name}` must be an object"))?;
        for key in ["value", "bound", "pass"] {
            if !m.contains_key(key) {
                return Err(format!("metric `{name}` missing `{key}`"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_at_least_ten_experiments() {
        assert!(experiments::registry().len() >= 10);
        assert!(list_lines().len() >= 10);
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let err = describe("zzz").unwrap_err();
        assert_eq!(err.exit_code(), EXIT_UNKNOWN_EXPERIMENT);
        assert!(err.to_string().contains("ring-spectrum"));
    }

    #[test]
    fn describe_names_the_quantization_formula() {
        let text = describe("ring-spectrum").unwrap();
        assert!(text.contains("n^2 hbar^2"), "{text}");
    }

    #[test]
    fn verdicts_validate_against_the_schema() {
        let verdict = run("frequency-shifts", None, None, None).unwrap();
        let json = serde_json::to_value(&verdict).unwrap();
        validate_verdict_json(&json).unwrap();
        assert!(verdict.pass);
    }
}
