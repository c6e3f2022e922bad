//! Config and model-file loading for the experiment runner.

use std::path::Path;

use serde::{Deserialize, Serialize};

use hmm_limits::family::AffineFamilySpec;
use hmm_limits::lab::{ExperimentConfig, FamilySpec};

/// Errors mapped to process exit codes: config problems exit 2, model
/// validation problems exit 3, experiment-level failures exit 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model validation error: {0}")]
    Model(hmm_limits::Error),
    #[error("experiment error: {0}")]
    Experiment(hmm_limits::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::Experiment(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

pub fn experiment_err(e: hmm_limits::Error) -> CliError {
    CliError::Experiment(e)
}

/// On-disk model description: {"delta": [[...]], "emit": [[...]]}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit: Option<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!(
                "{}: parse error at line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    pub fn require_delta(&self) -> Result<&Vec<Vec<f64>>, CliError> {
        self.delta
            .as_ref()
            .ok_or_else(|| CliError::Config("model file is missing the \"delta\" field".into()))
    }

    pub fn require_emit(&self) -> Result<&Vec<Vec<f64>>, CliError> {
        self.emit
            .as_ref()
            .ok_or_else(|| CliError::Config("model file is missing the \"emit\" field".into()))
    }
}

/// Embeds a fixed kernel as a constant one-parameter family, so the
/// experiment machinery runs unchanged on plain (kernel, channel) models.
pub fn constant_family(delta: &[Vec<f64>]) -> FamilySpec {
    let n = delta.len();
    FamilySpec::Affine(AffineFamilySpec {
        a: delta.to_vec(),
        b: vec![vec![0.0; n]; n],
        omega: (-1.0, 1.0),
        theta0: 0.0,
    })
}

/// Loads a full experiment config from JSON, applying the documented
/// defaults (alpha = 0.5, beta = 0.1, j_max = 50, cylinder_len = 3) to
/// absent fields and validating ranges.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{}: parse error at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    cfg.validate().map_err(|e| match e {
        hmm_limits::Error::ParamOutOfRange { .. } => CliError::Config(format!("range error: {e}")),
        other => CliError::Model(other),
    })?;
    Ok(cfg)
}

/// Canonical JSON form of a config: serialize after parse; idempotent.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_is_idempotent() {
        let dir = std::env::temp_dir().join("hmml-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        std::fs::write(
            &path,
            r#"{"family":"flip","theta0":0.3,"omega":[0.05,0.45],
                "channel":[[0.9,0.1],[0.1,0.9]],
                "n_grid":[256,1024],"reps":200,"seed":7}"#,
        )
        .unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.beta, 0.1);
        assert_eq!(cfg.j_max, 50);
        assert_eq!(cfg.cylinder_len, 3);
        let canon = canonical_json(&cfg);
        let path2 = dir.join("cfg2.json");
        std::fs::write(&path2, &canon).unwrap();
        let cfg2 = load_config(&path2).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(canon, canonical_json(&cfg2));
    }

    #[test]
    fn theta_outside_omega_is_a_config_error() {
        let dir = std::env::temp_dir().join("hmml-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(
            &path,
            r#"{"family":"flip","theta0":0.7,"omega":[0.05,0.45],
                "channel":[[0.9,0.1],[0.1,0.9]],
                "n_grid":[256],"reps":200,"seed":7}"#,
        )
        .unwrap();
        match load_config(&path) {
            Err(CliError::Config(msg)) => assert!(msg.contains("range"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let dir = std::env::temp_dir().join("hmml-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("syntax.json");
        std::fs::write(&path, "{\n  \"family\": flip\n}").unwrap();
        match load_config(&path) {
            Err(CliError::Config(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
