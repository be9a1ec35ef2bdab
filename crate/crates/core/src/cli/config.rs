//! Run configuration: defaults, a flat `key = value` file, the
//! `CORRNET_SEED` environment variable, and command-line flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::classify::{ClassifierKind, ClassifierSpec, TreeParams, DEFAULT_N_ESTIMATORS};
use crate::flow::IdleTimeout;
use crate::seed::DEFAULT_SEED;
use crate::selection::{Policy, SelectionOptions};

pub const SEED_ENV: &str = "CORRNET_SEED";
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_IDLE_TIMEOUT_SECS: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("{source_name}: invalid {key} {value:?}: {reason}")]
    BadValue {
        source_name: String,
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracySource {
    #[default]
    Cv,
    Holdout,
}

impl fmt::Display for AccuracySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccuracySource::Cv => "cv",
            AccuracySource::Holdout => "holdout",
        })
    }
}

impl FromStr for AccuracySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cv" => Ok(AccuracySource::Cv),
            "holdout" => Ok(AccuracySource::Holdout),
            _ => Err("expected cv or holdout".into()),
        }
    }
}

/// `max_depth` as written in config files and flags: a number or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxDepth(pub Option<usize>);

impl FromStr for MaxDepth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("unlimited") {
            return Ok(MaxDepth(None));
        }
        s.parse().map(|d| MaxDepth(Some(d))).map_err(|e| format!("{e}"))
    }
}

/// Settings that may come from a config file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub idle_timeout: Option<f64>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub classifier: Option<ClassifierKind>,
    pub n_estimators: Option<usize>,
    pub max_depth: Option<MaxDepth>,
    pub min_samples_split: Option<usize>,
    pub policy: Option<Policy>,
    pub min_active: Option<usize>,
    pub accuracy_source: Option<AccuracySource>,
    pub test: Option<PathBuf>,
}

pub const CONFIG_KEYS: [&str; 11] = [
    "idle_timeout",
    "k",
    "seed",
    "classifier",
    "n_estimators",
    "max_depth",
    "min_samples_split",
    "policy",
    "min_active",
    "accuracy_source",
    "test",
];

fn parse_value<T: FromStr>(source_name: &str, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        source_name: source_name.to_string(),
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

/// Parses a config file: one `key = value` per line, `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Overrides, ConfigError> {
    let mut o = Overrides::default();
    let mut seen: Vec<&str> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            reason: format!("expected key = value, found {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = CONFIG_KEYS.iter().find(|&&k| k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        };
        if seen.contains(&known) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        seen.push(known);
        let src = format!("config line {line}");
        match known {
            "idle_timeout" => o.idle_timeout = Some(parse_value(&src, key, value)?),
            "k" => o.k = Some(parse_value(&src, key, value)?),
            "seed" => o.seed = Some(parse_value(&src, key, value)?),
            "classifier" => o.classifier = Some(parse_value(&src, key, value)?),
            "n_estimators" => o.n_estimators = Some(parse_value(&src, key, value)?),
            "max_depth" => o.max_depth = Some(parse_value(&src, key, value)?),
            "min_samples_split" => o.min_samples_split = Some(parse_value(&src, key, value)?),
            "policy" => o.policy = Some(parse_value(&src, key, value)?),
            "min_active" => o.min_active = Some(parse_value(&src, key, value)?),
            "accuracy_source" => o.accuracy_source = Some(parse_value(&src, key, value)?),
            "test" => o.test = Some(PathBuf::from(value)),
            _ => unreachable!(),
        }
    }
    Ok(o)
}

impl Overrides {
    /// Fields set in `self` win over those in `lower`.
    pub fn or(self, lower: Overrides) -> Overrides {
        Overrides {
            idle_timeout: self.idle_timeout.or(lower.idle_timeout),
            k: self.k.or(lower.k),
            seed: self.seed.or(lower.seed),
            classifier: self.classifier.or(lower.classifier),
            n_estimators: self.n_estimators.or(lower.n_estimators),
            max_depth: self.max_depth.or(lower.max_depth),
            min_samples_split: self.min_samples_split.or(lower.min_samples_split),
            policy: self.policy.or(lower.policy),
            min_active: self.min_active.or(lower.min_active),
            accuracy_source: self.accuracy_source.or(lower.accuracy_source),
            test: self.test.or(lower.test),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub idle_timeout: f64,
    pub k: usize,
    pub seed: u64,
    pub classifier: ClassifierSpec,
    pub policy: Policy,
    pub min_active: usize,
    pub accuracy_source: AccuracySource,
    pub test: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            idle_timeout: DEFAULT_IDLE_TIMEOUT_SECS,
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            classifier: ClassifierSpec::default(),
            policy: Policy::Exhaustive,
            min_active: 1,
            accuracy_source: AccuracySource::Cv,
            test: None,
        }
    }
}

impl RunConfig {
    /// Flags, then the config file, then `CORRNET_SEED`, then defaults.
    pub fn resolve(flags: Overrides, file: Overrides, env_seed: Option<&str>) -> Result<RunConfig, ConfigError> {
        let merged = flags.or(file);
        let d = RunConfig::default();
        let seed = match (merged.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(v)) => parse_value(SEED_ENV, "seed", v.trim())?,
            (None, None) => d.seed,
        };
        let config = RunConfig {
            idle_timeout: merged.idle_timeout.unwrap_or(d.idle_timeout),
            k: merged.k.unwrap_or(d.k),
            seed,
            classifier: ClassifierSpec {
                kind: merged.classifier.unwrap_or(d.classifier.kind),
                tree: TreeParams {
                    max_depth: merged.max_depth.map_or(d.classifier.tree.max_depth, |m| m.0),
                    min_samples_split: merged.min_samples_split.unwrap_or(d.classifier.tree.min_samples_split),
                },
                n_estimators: merged.n_estimators.unwrap_or(DEFAULT_N_ESTIMATORS),
            },
            policy: merged.policy.unwrap_or(d.policy),
            min_active: merged.min_active.unwrap_or(d.min_active),
            accuracy_source: merged.accuracy_source.unwrap_or(d.accuracy_source),
            test: merged.test,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if IdleTimeout::from_secs_f64(self.idle_timeout).is_none() {
            return invalid(format!("idle_timeout must be a positive number of seconds, got {}", self.idle_timeout));
        }
        if self.k < 2 {
            return invalid(format!("k must be at least 2, got {}", self.k));
        }
        if self.min_active < 1 {
            return invalid("min_active must be at least 1".into());
        }
        if let Err(e) = self.classifier.validate() {
            return invalid(e.to_string());
        }
        if self.accuracy_source == AccuracySource::Holdout && self.test.is_none() {
            return invalid("accuracy_source = holdout needs a test CSV".into());
        }
        Ok(())
    }

    pub fn idle_timeout(&self) -> IdleTimeout {
        IdleTimeout::from_secs_f64(self.idle_timeout).expect("validated")
    }

    pub fn selection_options(&self) -> SelectionOptions {
        SelectionOptions {
            policy: self.policy,
            min_active: self.min_active,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let text = "# run settings\n\
                    idle_timeout = 120.5\n\
                    k=5\n\
                    seed = 7 # trailing comment\n\
                    classifier = rf\n\
                    n_estimators = 25\n\
                    max_depth = none\n\
                    min_samples_split = 4\n\
                    policy = stop-on-decline\n\
                    min_active = 2\n\
                    accuracy_source = holdout\n\
                    test = data/test.csv\n\n";
        let o = parse_config(text).unwrap();
        assert_eq!(o.idle_timeout, Some(120.5));
        assert_eq!(o.k, Some(5));
        assert_eq!(o.seed, Some(7));
        assert_eq!(o.classifier, Some(ClassifierKind::Forest));
        assert_eq!(o.max_depth, Some(MaxDepth(None)));
        assert_eq!(o.policy, Some(Policy::StopOnDecline));
        assert_eq!(o.test, Some(PathBuf::from("data/test.csv")));
        let c = RunConfig::resolve(Overrides::default(), o, None).unwrap();
        assert_eq!(c.classifier.n_estimators, 25);
        assert_eq!(c.classifier.tree.min_samples_split, 4);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(
            parse_config("k = 3\nfolds = 4\n"),
            Err(ConfigError::UnknownKey { line: 2, key: "folds".into() })
        );
        assert_eq!(
            parse_config("k = 3\nk = 4\n"),
            Err(ConfigError::DuplicateKey { line: 2, key: "k".into() })
        );
        assert!(matches!(parse_config("k 3"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config("k = three"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn precedence_is_flags_then_file_then_env_then_default() {
        let flags = Overrides {
            k: Some(3),
            ..Overrides::default()
        };
        let file = parse_config("k = 5\nseed = 9\nmin_active = 2").unwrap();
        let c = RunConfig::resolve(flags.clone(), file.clone(), Some("11")).unwrap();
        assert_eq!((c.k, c.seed, c.min_active), (3, 9, 2));
        let c = RunConfig::resolve(flags, Overrides::default(), Some("11")).unwrap();
        assert_eq!(c.seed, 11);
        let c = RunConfig::resolve(Overrides::default(), Overrides::default(), None).unwrap();
        assert_eq!(c, RunConfig::default());
        assert!(RunConfig::resolve(Overrides::default(), Overrides::default(), Some("x")).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad = |o: Overrides| RunConfig::resolve(o, Overrides::default(), None).is_err();
        assert!(bad(Overrides { k: Some(1), ..Default::default() }));
        assert!(bad(Overrides { idle_timeout: Some(0.0), ..Default::default() }));
        assert!(bad(Overrides { min_active: Some(0), ..Default::default() }));
        assert!(bad(Overrides { min_samples_split: Some(1), ..Default::default() }));
        assert!(bad(Overrides {
            accuracy_source: Some(AccuracySource::Holdout),
            ..Default::default()
        }));
    }
}
