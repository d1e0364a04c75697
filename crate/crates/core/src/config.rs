//! Declarative configuration: level ranges, lag lists, controlling-variable
//! specs, and the experiment file consumed by the simulation command.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::cqgram::{CqError, LevelGrid};
use crate::dgpsim::{ControlScheme, DgpModel, DgpSpec, DEFAULT_BURN_IN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad level list {0:?}: expected start:end:step or a comma-separated list in (0,1)")]
    BadTaus(String),
    #[error("bad lag list {0:?}: expected comma-separated integers >= 1")]
    BadLags(String),
    #[error("bad control spec {0:?}: expected y:LAG, x:LAG, PATH:COLUMN or PATH:COLUMN:LAG")]
    BadControlSpec(String),
    #[error("{model} rows take {expected} parameters, row has {got}")]
    BadParamCount {
        model: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cq(#[from] CqError),
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Parses either `start:end:step` or a comma-separated list of levels.
pub fn parse_tau_list(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = || ConfigError::BadTaus(s.to_string());
    let taus: Vec<f64> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let end: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let step: f64 = parts[2].trim().parse().map_err(|_| bad())?;
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(bad());
        }
        let n = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| round12(start + i as f64 * step)).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if taus.is_empty()
        || taus.iter().any(|&t| !(t > 0.0 && t < 1.0))
        || taus.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(bad());
    }
    Ok(taus)
}

/// The square grid over a parsed level list.
pub fn parse_tau_grid(s: &str) -> Result<LevelGrid, ConfigError> {
    Ok(LevelGrid::square(parse_tau_list(s)?)?)
}

pub fn parse_lags(s: &str) -> Result<Vec<usize>, ConfigError> {
    let bad = || ConfigError::BadLags(s.to_string());
    let lags: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if lags.is_empty() || lags.contains(&0) {
        return Err(bad());
    }
    Ok(lags)
}

/// A controlling-variable request as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlSource {
    /// Lagged copy of the target series (lag >= 1).
    TargetLag(usize),
    /// Lagged copy of the source series (lag >= 1).
    SourceLag(usize),
    /// A column from another CSV, joined on dates, optionally lagged.
    External {
        path: String,
        column: String,
        lag: usize,
    },
}

/// Grammar: `y:LAG` and `x:LAG` for lagged copies of the two input series,
/// `PATH:COLUMN` for a contemporaneous external column, `PATH:COLUMN:LAG`
/// for a lagged one.
pub fn parse_control_spec(s: &str) -> Result<ControlSource, ConfigError> {
    let bad = || ConfigError::BadControlSpec(s.to_string());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["y", lag] => {
            let lag: usize = lag.trim().parse().map_err(|_| bad())?;
            if lag == 0 {
                return Err(bad());
            }
            Ok(ControlSource::TargetLag(lag))
        }
        ["x", lag] => {
            let lag: usize = lag.trim().parse().map_err(|_| bad())?;
            if lag == 0 {
                return Err(bad());
            }
            Ok(ControlSource::SourceLag(lag))
        }
        [path, column] => Ok(ControlSource::External {
            path: path.to_string(),
            column: column.to_string(),
            lag: 0,
        }),
        [path, column, lag] => Ok(ControlSource::External {
            path: path.to_string(),
            column: column.to_string(),
            lag: lag.trim().parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ModelField {
    #[serde(rename = "P1", alias = "p1")]
    P1,
    #[serde(rename = "P2", alias = "p2")]
    P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlsField {
    None,
    Exp2,
    Exp3,
}

impl From<ModelField> for DgpModel {
    fn from(m: ModelField) -> Self {
        match m {
            ModelField::P1 => DgpModel::P1,
            ModelField::P2 => DgpModel::P2,
        }
    }
}

impl From<ControlsField> for ControlScheme {
    fn from(c: ControlsField) -> Self {
        match c {
            ControlsField::None => ControlScheme::None,
            ControlsField::Exp2 => ControlScheme::Exp2,
            ControlsField::Exp3 => ControlScheme::Exp3,
        }
    }
}

fn default_nominal() -> f64 {
    0.05
}

fn default_p() -> usize {
    5
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_taus() -> String {
    "0.05:0.95:0.05".to_string()
}

fn default_big_t() -> usize {
    100_000
}

fn default_diff_reps() -> usize {
    20
}

/// One experiment file: shared settings plus the parameter rows to run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelField,
    pub controls: ControlsField,
    /// Sample length of both periods; rows may override.
    pub length: usize,
    pub trials: usize,
    /// Bootstrap replicates (L).
    pub replicates: usize,
    #[serde(default = "default_nominal")]
    pub nominal_level: f64,
    #[serde(default = "default_p")]
    pub p: usize,
    pub seed: u64,
    #[serde(default)]
    pub block_length: Option<f64>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_taus")]
    pub taus: String,
    /// When set, estimate the approximate difference column from long samples.
    #[serde(default)]
    pub compute_difference: bool,
    #[serde(default = "default_big_t")]
    pub difference_big_t: usize,
    #[serde(default = "default_diff_reps")]
    pub difference_reps: usize,
    pub rows: Vec<ExperimentRow>,
}

/// P1 rows carry `(alpha0, alpha1)`; P2 rows carry
/// `(beta0, beta1, gamma0, gamma1, alpha0, alpha1)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRow {
    pub params_b: Vec<f64>,
    pub params_a: Vec<f64>,
    #[serde(default)]
    pub length: Option<usize>,
    #[serde(default)]
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(ConfigError::Invalid("replicates must be at least 1".into()));
        }
        if self.p == 0 {
            return Err(ConfigError::Invalid("p must be at least 1".into()));
        }
        if !(self.nominal_level > 0.0 && self.nominal_level < 1.0) {
            return Err(ConfigError::Invalid(
                "nominal_level must lie in (0, 1)".into(),
            ));
        }
        if self.rows.is_empty() {
            return Err(ConfigError::Invalid("at least one row is required".into()));
        }
        parse_tau_list(&self.taus)?;
        for row in &self.rows {
            self.specs_for(row)?;
        }
        Ok(())
    }

    /// Builds the pair of generator specs for one row.
    pub fn specs_for(&self, row: &ExperimentRow) -> Result<(DgpSpec, DgpSpec), ConfigError> {
        let length = row.length.unwrap_or(self.length);
        let build = |params: &[f64]| -> Result<DgpSpec, ConfigError> {
            let spec = match self.model {
                ModelField::P1 => {
                    if params.len() != 2 {
                        return Err(ConfigError::BadParamCount {
                            model: "P1",
                            expected: 2,
                            got: params.len(),
                        });
                    }
                    DgpSpec::p1(params[0], params[1], length)
                }
                ModelField::P2 => {
                    if params.len() != 6 {
                        return Err(ConfigError::BadParamCount {
                            model: "P2",
                            expected: 6,
                            got: params.len(),
                        });
                    }
                    DgpSpec::p2(
                        [params[0], params[1], params[2], params[3], params[4], params[5]],
                        length,
                    )
                }
            };
            Ok(spec
                .with_controls(ControlScheme::from(self.controls))
                .with_burn_in(self.burn_in))
        };
        Ok((build(&row.params_b)?, build(&row.params_a)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tau_range_has_19_levels() {
        let taus = parse_tau_list("0.05:0.95:0.05").unwrap();
        assert_eq!(taus.len(), 19);
        assert_eq!(taus[0], 0.05);
        assert_eq!(taus[18], 0.95);
        assert_eq!(taus[6], 0.35);
    }

    #[test]
    fn tau_lists_and_errors() {
        assert_eq!(parse_tau_list("0.1,0.5,0.9").unwrap(), vec![0.1, 0.5, 0.9]);
        assert!(parse_tau_list("0.9,0.1").is_err());
        assert!(parse_tau_list("0:0.95:0.05").is_err());
        assert!(parse_tau_list("abc").is_err());
        assert!(parse_tau_list("0.5:0.4:0.1").is_err());
    }

    #[test]
    fn lag_lists() {
        assert_eq!(parse_lags("1,5,22").unwrap(), vec![1, 5, 22]);
        assert_eq!(parse_lags("3").unwrap(), vec![3]);
        assert!(parse_lags("0,1").is_err());
        assert!(parse_lags("a").is_err());
    }

    #[test]
    fn control_specs() {
        assert_eq!(parse_control_spec("y:1").unwrap(), ControlSource::TargetLag(1));
        assert_eq!(parse_control_spec("x:2").unwrap(), ControlSource::SourceLag(2));
        assert_eq!(
            parse_control_spec("vix.csv:close").unwrap(),
            ControlSource::External {
                path: "vix.csv".into(),
                column: "close".into(),
                lag: 0
            }
        );
        assert_eq!(
            parse_control_spec("vix.csv:close:3").unwrap(),
            ControlSource::External {
                path: "vix.csv".into(),
                column: "close".into(),
                lag: 3
            }
        );
        assert!(parse_control_spec("y:0").is_err());
        assert!(parse_control_spec("nonsense").is_err());
    }

    #[test]
    fn experiment_config_round_trip() {
        let text = r#"
model = "P1"
controls = "none"
length = 500
trials = 1000
replicates = 800
seed = 7

[[rows]]
params_b = [0.5, -0.4]
params_a = [0.5, -0.1]

[[rows]]
params_b = [0.5, -0.4]
params_a = [0.5, 0.0]
length = 1000
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.p, 5);
        assert_eq!(cfg.nominal_level, 0.05);
        assert_eq!(cfg.burn_in, 5000);
        let (b, a) = cfg.specs_for(&cfg.rows[0]).unwrap();
        assert_eq!(b.alpha0, 0.5);
        assert_eq!(a.alpha1, -0.1);
        assert_eq!(b.length, 500);
        let (b2, _) = cfg.specs_for(&cfg.rows[1]).unwrap();
        assert_eq!(b2.length, 1000);
    }

    #[test]
    fn p2_param_count_enforced() {
        let text = r#"
model = "P2"
controls = "exp3"
length = 500
trials = 10
replicates = 10
seed = 1

[[rows]]
params_b = [0.1, 0.2]
params_a = [0.1, 0.2]
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::BadParamCount { expected: 6, .. })
        ));
    }
}
