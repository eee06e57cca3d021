//! JSON sweep configuration.
//!
//! Every key is optional; absent keys take the defaults below. Axis keys
//! (`beta`, `strategies`, `epsilon`) accept either a scalar or a list.
//!
//! ```json
//! {
//!   "master_seed": 1,
//!   "n": 4000, "m": 200, "k": 4, "k_prime": 5,
//!   "beta": [0.0, 0.4, "uniform_random"],
//!   "strategies": ["greedy", "epsilon_greedy"],
//!   "epsilon": 0.1,
//!   "seed_fraction": 0.001,
//!   "realizations": 10,
//!   "regenerate_teacher": true,
//!   "hyperparams": { "learning_rate": 0.02, "patience": 5 },
//!   "output_dir": "out"
//! }
//! ```

use std::path::{Path, PathBuf};

use recsim_core::{BetaCondition, ExperimentConfig, StrategyKind, TrainingHyperparams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STRATEGY_NAMES: [&str; 4] = ["greedy", "epsilon_greedy", "random", "oracle"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum BetaValue {
    Constant(f64),
    Named(String),
}

impl BetaValue {
    fn resolve(&self) -> Result<BetaCondition, ConfigError> {
        match self {
            BetaValue::Constant(b) => Ok(BetaCondition::Constant(*b)),
            BetaValue::Named(s) if s == "uniform_random" => Ok(BetaCondition::UniformRandom),
            BetaValue::Named(s) => Err(invalid(
                "beta",
                format!("{s:?} is neither a number nor \"uniform_random\""),
            )),
        }
    }

    fn from_condition(b: BetaCondition) -> Self {
        match b {
            BetaCondition::Constant(v) => BetaValue::Constant(v),
            BetaCondition::UniformRandom => BetaValue::Named("uniform_random".into()),
        }
    }
}

/// On-disk form.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    master_seed: Option<u64>,
    n: Option<usize>,
    m: Option<usize>,
    k: Option<usize>,
    k_prime: Option<usize>,
    latent_scale: Option<f64>,
    beta: Option<OneOrMany<BetaValue>>,
    strategies: Option<OneOrMany<String>>,
    epsilon: Option<OneOrMany<f64>>,
    seed_fraction: Option<f64>,
    realizations: Option<usize>,
    regenerate_teacher: Option<bool>,
    hyperparams: Option<TrainingHyperparams>,
    workers: Option<usize>,
    output_dir: Option<PathBuf>,
    snapshot_t: Option<usize>,
    popularity_stride: Option<usize>,
}

/// A validated sweep: a base configuration and the axes crossed over it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Shared settings; `beta` and `strategy` are overridden per cell.
    pub base: ExperimentConfig,
    pub betas: Vec<BetaCondition>,
    pub strategies: Vec<String>,
    /// Only `epsilon_greedy` expands over this axis.
    pub epsilons: Vec<f64>,
    pub output_dir: PathBuf,
    /// Mid-run snapshot; `None` means `m / 2`.
    pub snapshot_t: Option<usize>,
    pub popularity_stride: usize,
}

/// One point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: String,
    pub config: ExperimentConfig,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            base: ExperimentConfig {
                workers: default_workers(),
                ..Default::default()
            },
            betas: [0.0, 0.2, 0.4, 0.6, 0.8]
                .into_iter()
                .map(BetaCondition::Constant)
                .chain([BetaCondition::UniformRandom])
                .collect(),
            strategies: STRATEGY_NAMES.iter().map(|s| s.to_string()).collect(),
            epsilons: vec![0.1],
            output_dir: PathBuf::from("out"),
            snapshot_t: None,
            popularity_stride: 1,
        }
    }
}

impl SweepSpec {
    pub fn snapshot_t(&self) -> usize {
        self.snapshot_t.unwrap_or(self.base.m / 2)
    }

    /// Cross product of beta, strategy and (for epsilon-greedy) epsilon, in
    /// that nesting order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for beta in &self.betas {
            for name in &self.strategies {
                let eps_axis: Vec<f64> = if name == "epsilon_greedy" {
                    self.epsilons.clone()
                } else {
                    vec![0.0]
                };
                for eps in eps_axis {
                    let strategy =
                        StrategyKind::from_name(name, eps).expect("validated strategy name");
                    cells.push(Cell {
                        id: cell_id(*beta, strategy),
                        config: ExperimentConfig {
                            beta: *beta,
                            strategy,
                            ..self.base.clone()
                        },
                    });
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.betas.is_empty() {
            return Err(invalid("beta", "at least one value is required"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "at least one strategy is required"));
        }
        for s in &self.strategies {
            if !STRATEGY_NAMES.contains(&s.as_str()) {
                return Err(invalid(
                    "strategies",
                    format!("unknown strategy {s:?}; expected one of {STRATEGY_NAMES:?}"),
                ));
            }
        }
        if self.epsilons.is_empty() {
            return Err(invalid("epsilon", "at least one value is required"));
        }
        if let Some(t) = self.snapshot_t {
            if t == 0 || t > self.base.m {
                return Err(invalid(
                    "snapshot_t",
                    format!("{t} is outside 1..={}", self.base.m),
                ));
            }
        }
        if self.popularity_stride == 0 {
            return Err(invalid("popularity_stride", "must be at least 1"));
        }
        let mut seen = std::collections::HashSet::new();
        for cell in self.cells() {
            cell.config.validate().map_err(|e| match e {
                recsim_core::Error::Config { field, reason } => invalid(field, reason),
                other => invalid("config", other.to_string()),
            })?;
            if !seen.insert(cell.id.clone()) {
                return Err(invalid(
                    "beta/epsilon",
                    format!("duplicate cell {}", cell.id),
                ));
            }
        }
        Ok(())
    }

    /// Full explicit JSON form; `parse_config(&spec.to_json())` returns `spec`.
    pub fn to_json(&self) -> String {
        let file = ConfigFile {
            master_seed: Some(self.base.master_seed),
            n: Some(self.base.n),
            m: Some(self.base.m),
            k: Some(self.base.k),
            k_prime: Some(self.base.k_prime),
            latent_scale: self.base.latent_scale,
            beta: Some(OneOrMany::Many(
                self.betas
                    .iter()
                    .map(|b| BetaValue::from_condition(*b))
                    .collect(),
            )),
            strategies: Some(OneOrMany::Many(self.strategies.clone())),
            epsilon: Some(OneOrMany::Many(self.epsilons.clone())),
            seed_fraction: Some(self.base.seed_fraction),
            realizations: Some(self.base.realizations),
            regenerate_teacher: Some(self.base.regenerate_teacher),
            hyperparams: Some(self.base.hyperparams),
            workers: Some(self.base.workers),
            output_dir: Some(self.output_dir.clone()),
            snapshot_t: self.snapshot_t,
            popularity_stride: Some(self.popularity_stride),
        };
        serde_json::to_string_pretty(&file).expect("config serializes")
    }
}

/// Cell label used in every CSV, e.g. `beta=0.4/epsilon_greedy(0.1)`.
pub fn cell_id(beta: BetaCondition, strategy: StrategyKind) -> String {
    format!("beta={}/{}", beta.label(), strategy)
}

pub fn parse_config(text: &str) -> Result<SweepSpec, ConfigError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let defaults = SweepSpec::default();
    let d = &defaults.base;
    let base = ExperimentConfig {
        n: file.n.unwrap_or(d.n),
        m: file.m.unwrap_or(d.m),
        k: file.k.unwrap_or(d.k),
        k_prime: file.k_prime.unwrap_or(d.k_prime),
        latent_scale: file.latent_scale,
        beta: d.beta,
        strategy: d.strategy,
        seed_fraction: file.seed_fraction.unwrap_or(d.seed_fraction),
        realizations: file.realizations.unwrap_or(d.realizations),
        regenerate_teacher: file.regenerate_teacher.unwrap_or(d.regenerate_teacher),
        hyperparams: file.hyperparams.unwrap_or(d.hyperparams),
        master_seed: file.master_seed.unwrap_or(d.master_seed),
        workers: file.workers.unwrap_or(d.workers),
    };
    let betas = match file.beta {
        Some(b) => b
            .into_vec()
            .iter()
            .map(BetaValue::resolve)
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.betas.clone(),
    };
    let spec = SweepSpec {
        base,
        betas,
        strategies: file
            .strategies
            .map(OneOrMany::into_vec)
            .unwrap_or(defaults.strategies),
        epsilons: file
            .epsilon
            .map(OneOrMany::into_vec)
            .unwrap_or(defaults.epsilons),
        output_dir: file.output_dir.unwrap_or(defaults.output_dir),
        snapshot_t: file.snapshot_t,
        popularity_stride: file.popularity_stride.unwrap_or(defaults.popularity_stride),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_config(path: &Path) -> Result<SweepSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(r#"{"master_seed": 1}"#).unwrap();
        let b = &spec.base;
        assert_eq!((b.n, b.m, b.k, b.k_prime), (4000, 200, 4, 5));
        assert_eq!(b.seed_fraction, 0.001);
        assert_eq!(b.realizations, 10);
        assert_eq!(b.master_seed, 1);
        assert_eq!(spec.epsilons, vec![0.1]);
        assert!(b.regenerate_teacher);
        assert_eq!(spec.snapshot_t(), 100);
    }

    #[test]
    fn axes_cross_product() {
        let spec =
            parse_config(r#"{"beta": [0.0, 0.4], "strategies": ["greedy","epsilon_greedy"]}"#)
                .unwrap();
        let ids: Vec<String> = spec.cells().into_iter().map(|c| c.id).collect();
        assert_eq!(
            ids,
            vec![
                "beta=0/greedy",
                "beta=0/epsilon_greedy(0.1)",
                "beta=0.4/greedy",
                "beta=0.4/epsilon_greedy(0.1)"
            ]
        );
    }

    #[test]
    fn epsilon_axis_only_expands_epsilon_greedy() {
        let spec = parse_config(
            r#"{"beta": 0.2, "strategies": ["random","epsilon_greedy"], "epsilon": [0.05, 0.2]}"#,
        )
        .unwrap();
        assert_eq!(spec.cells().len(), 3);
    }

    #[test]
    fn random_beta_parses() {
        let spec = parse_config(r#"{"beta": ["uniform_random"], "strategies": "oracle"}"#).unwrap();
        assert_eq!(spec.betas, vec![BetaCondition::UniformRandom]);
        assert_eq!(spec.cells()[0].id, "beta=uniform_random/oracle");
        assert!(parse_config(r#"{"beta": ["sometimes"]}"#).is_err());
    }

    #[test]
    fn seed_fraction_out_of_range_names_field() {
        match parse_config(r#"{"seed_fraction": 1.5}"#) {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "seed_fraction"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn other_validation_errors() {
        for (text, field) in [
            (r#"{"strategies": ["softmax"]}"#, "strategies"),
            (
                r#"{"epsilon": 1.5, "strategies": ["epsilon_greedy"]}"#,
                "epsilon",
            ),
            (r#"{"beta": 2.0}"#, "beta"),
            (r#"{"realizations": 0}"#, "realizations"),
            (
                r#"{"hyperparams": {"validation_fraction": 1.0}}"#,
                "validation_fraction",
            ),
            (r#"{"m": 10, "snapshot_t": 11}"#, "snapshot_t"),
        ] {
            match parse_config(text) {
                Err(ConfigError::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_config("{\n  \"n\": 4,\n  \"m\": oops\n}") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_config(r#"{"nn": 4}"#),
            Err(ConfigError::Parse { .. })
        ));
    }

    fn arb_spec() -> impl Strategy<Value = SweepSpec> {
        (
            (1usize..50, 1usize..30, 1usize..5, 1usize..6, any::<u64>()),
            prop::collection::vec(
                prop_oneof![
                    (0u32..=10).prop_map(|b| BetaCondition::Constant(f64::from(b) / 10.0)),
                    Just(BetaCondition::UniformRandom)
                ],
                1..4,
            ),
            prop::sample::subsequence(STRATEGY_NAMES.to_vec(), 1..=4),
            prop::collection::vec(0u32..=100, 1..3),
            (0u32..100, 1usize..20, any::<bool>(), 1usize..4),
            (1u32..100, 1usize..300, 0usize..10),
        )
            .prop_map(
                |(
                    (n, m, k, kp, seed),
                    betas,
                    strategies,
                    eps,
                    (sf, reals, regen, stride),
                    (lr, epochs, pat),
                )| {
                    let mut betas = betas;
                    betas.dedup();
                    let mut eps: Vec<f64> = eps.into_iter().map(|e| f64::from(e) / 100.0).collect();
                    eps.dedup();
                    SweepSpec {
                        base: ExperimentConfig {
                            n,
                            m,
                            k,
                            k_prime: kp,
                            master_seed: seed,
                            seed_fraction: f64::from(sf) / 1000.0,
                            realizations: reals,
                            regenerate_teacher: regen,
                            hyperparams: TrainingHyperparams {
                                learning_rate: f64::from(lr) / 1000.0,
                                max_epochs: epochs,
                                patience: pat,
                                ..Default::default()
                            },
                            workers: 2,
                            ..Default::default()
                        },
                        betas,
                        strategies: strategies.into_iter().map(String::from).collect(),
                        epsilons: eps,
                        output_dir: PathBuf::from("results/x"),
                        snapshot_t: Some(m),
                        popularity_stride: stride,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn json_round_trip(spec in arb_spec()) {
            prop_assume!(spec.validate().is_ok());
            let back = parse_config(&spec.to_json()).unwrap();
            prop_assert_eq!(back, spec);
        }
    }
}
