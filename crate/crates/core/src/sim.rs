//! Realization driver: teacher generation, initial seeding, and the
//! recommend → choose → retrain loop, run once per timestep.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::InteractionLog;
use crate::metrics;
use crate::rng::{rng_from_seed, RealizationSeeds};
use crate::strategy::{recommend, StrategyKind};
use crate::student::{brier, StudentModel, TrainReport, TrainingHyperparams};
use crate::teacher::{default_latent_scale, BetaCondition, TeacherModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub k_prime: usize,
    /// Teacher latent bound; `None` means `1/√k`.
    pub latent_scale: Option<f64>,
    pub beta: BetaCondition,
    pub strategy: StrategyKind,
    pub seed_fraction: f64,
    pub realizations: usize,
    pub regenerate_teacher: bool,
    pub hyperparams: TrainingHyperparams,
    pub master_seed: u64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 4000,
            m: 200,
            k: 4,
            k_prime: 5,
            latent_scale: None,
            beta: BetaCondition::Constant(0.0),
            strategy: StrategyKind::EpsilonGreedy(0.1),
            seed_fraction: 0.001,
            realizations: 10,
            regenerate_teacher: true,
            hyperparams: TrainingHyperparams::default(),
            master_seed: 0,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("n", self.n),
            ("m", self.m),
            ("k", self.k),
            ("k_prime", self.k_prime),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.n > u32::MAX as usize || self.m > u32::MAX as usize {
            return Err(Error::config("n/m", "must fit in 32 bits"));
        }
        if !(0.0..1.0).contains(&self.seed_fraction) {
            return Err(Error::config(
                "seed_fraction",
                format!("{} is outside [0, 1)", self.seed_fraction),
            ));
        }
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if let Some(s) = self.latent_scale {
            if !(s.is_finite() && s >= 0.0 && s * s * self.k as f64 <= 1.0 + 1e-12) {
                return Err(Error::config(
                    "latent_scale",
                    format!("{s} must lie in [0, 1/sqrt(k)]"),
                ));
            }
        }
        self.beta.validate()?;
        self.strategy.validate()?;
        self.hyperparams.validate()
    }

    pub fn latent_scale(&self) -> f64 {
        self.latent_scale
            .unwrap_or_else(|| default_latent_scale(self.k))
    }

    pub fn seeds(&self, realization: usize) -> RealizationSeeds {
        RealizationSeeds::derive(self.master_seed, realization, !self.regenerate_teacher)
    }

    /// Mid-run snapshot timestep.
    pub fn midpoint(&self) -> usize {
        self.m / 2
    }
}

/// Per-realization output.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationResult {
    pub index: usize,
    pub seeds: RealizationSeeds,
    /// Brier of this timestep's recommendations (pre-retraining predictions);
    /// `None` when no agent had an item left. Index `t - 1`.
    pub brier: Vec<Option<f64>>,
    pub gini: Vec<f64>,
    pub mean_popularity: Vec<f64>,
    pub recommendations: Vec<u32>,
    pub choices: Vec<u32>,
    /// Cumulative popularity snapshots, index `t` for `t = 0..=m`.
    pub popularity: Vec<Vec<u32>>,
    /// Index 0 is the fit on the seeded data (when any), then one per timestep.
    pub train_reports: Vec<TrainReport>,
    pub expected_popularity: Vec<f64>,
    pub log: InteractionLog,
}

impl RealizationResult {
    pub fn timesteps(&self) -> usize {
        self.brier.len()
    }

    pub fn popularity_at(&self, t: usize) -> Result<&[u32]> {
        self.popularity
            .get(t)
            .map(Vec::as_slice)
            .ok_or(Error::TimestepOutOfRange {
                t,
                max: self.popularity.len().saturating_sub(1),
            })
    }

    /// Brier over every recommendation made up to and including each timestep.
    pub fn cumulative_brier(&self) -> Vec<Option<f64>> {
        let mut sum = 0.0;
        let mut count = 0u64;
        self.brier
            .iter()
            .zip(&self.recommendations)
            .map(|(b, &r)| {
                if let Some(b) = b {
                    sum += b * f64::from(r);
                    count += u64::from(r);
                }
                (count > 0).then(|| sum / count as f64)
            })
            .collect()
    }
}

/// State visible to an observer after the initial fit (`timestep == 0`) and
/// after each timestep's retraining.
pub struct StepView<'a> {
    pub timestep: usize,
    pub teacher: &'a TeacherModel,
    pub student: &'a StudentModel,
    pub log: &'a InteractionLog,
}

/// Mark `round(fraction · n · m)` distinct pairs, drawn uniformly without
/// replacement, as consumed at timestep 0 with teacher-sampled labels.
///
/// # Panics
///
/// Panics if `fraction` is outside `[0, 1)`.
pub fn seed_initial_data<R: rand::Rng + ?Sized>(
    teacher: &TeacherModel,
    fraction: f64,
    rng: &mut R,
) -> InteractionLog {
    assert!(
        (0.0..1.0).contains(&fraction),
        "seed fraction {fraction} outside [0, 1)"
    );
    let (n, m) = (teacher.n(), teacher.m());
    let mut log = InteractionLog::new(n, m);
    let count = (fraction * (n * m) as f64).round() as usize;
    let picks = index::sample(rng, n * m, count);
    for idx in picks.iter() {
        let (agent, item) = (idx / m, idx % m);
        let chosen = teacher.sample_choice(agent, item, rng);
        log.record(agent, item, 0, chosen);
    }
    log
}

/// The teacher realization `realization` would use.
pub fn build_teacher(config: &ExperimentConfig, realization: usize) -> Result<TeacherModel> {
    let seeds = config.seeds(realization);
    TeacherModel::generate_with_scale(
        config.n,
        config.m,
        config.k,
        config.beta,
        config.latent_scale(),
        &mut rng_from_seed(seeds.teacher),
    )
}

pub fn run_realization(config: &ExperimentConfig, realization: usize) -> Result<RealizationResult> {
    run_realization_observed(config, realization, &mut |_| {})
}

pub fn run_realization_observed(
    config: &ExperimentConfig,
    realization: usize,
    observer: &mut dyn FnMut(&StepView<'_>),
) -> Result<RealizationResult> {
    config.validate()?;
    simulate(config, realization, observer).map_err(|e| Error::Realization {
        realization,
        source: Box::new(e),
    })
}

fn simulate(
    config: &ExperimentConfig,
    realization: usize,
    observer: &mut dyn FnMut(&StepView<'_>),
) -> Result<RealizationResult> {
    let seeds = config.seeds(realization);
    let teacher = build_teacher(config, realization)?;
    let mut log = seed_initial_data(
        &teacher,
        config.seed_fraction,
        &mut rng_from_seed(seeds.seeding),
    );
    let mut student = StudentModel::init(
        config.n,
        config.m,
        config.k_prime,
        config.hyperparams.init_scale_for(config.k_prime),
        &mut rng_from_seed(seeds.student_init),
    )?;
    // The oracle's "student" is the teacher itself, so its factors are never fit.
    let trains = !matches!(config.strategy, StrategyKind::Oracle);
    let hp = &config.hyperparams;

    let m = config.m;
    let mut train_reports = Vec::with_capacity(m + 1);
    if trains && !log.dataset().is_empty() {
        train_reports.push(student.train(
            log.dataset(),
            hp,
            &mut rng_from_seed(seeds.training_at(0)),
        )?);
    }
    observer(&StepView {
        timestep: 0,
        teacher: &teacher,
        student: &student,
        log: &log,
    });

    let mut strategy_rng = rng_from_seed(seeds.strategy);
    let mut choice_rng = rng_from_seed(seeds.choices);
    let mut brier_series = Vec::with_capacity(m);
    let mut gini_series = Vec::with_capacity(m);
    let mut mean_pop = Vec::with_capacity(m);
    let mut recommendations = Vec::with_capacity(m);
    let mut choices = Vec::with_capacity(m);
    let mut popularity = Vec::with_capacity(m + 1);
    popularity.push(log.popularity().to_vec());

    for t in 1..=m {
        let slate = recommend(config.strategy, &student, &teacher, &log, &mut strategy_rng);
        let mut preds = Vec::with_capacity(slate.len());
        let mut labels = Vec::with_capacity(slate.len());
        for (agent, item) in slate.assignments() {
            let pred = if trains {
                student.predict_prob(agent, item)
            } else {
                teacher.prob(agent, item)
            };
            let chosen = teacher.sample_choice(agent, item, &mut choice_rng);
            log.record(agent, item, t as u32, chosen);
            preds.push(pred);
            labels.push(chosen);
        }
        brier_series.push(brier(&preds, &labels).ok());
        recommendations.push(labels.len() as u32);
        choices.push(labels.iter().filter(|&&c| c).count() as u32);

        if trains && !log.dataset().is_empty() {
            train_reports.push(student.train(
                log.dataset(),
                hp,
                &mut rng_from_seed(seeds.training_at(t)),
            )?);
        }

        let pop = log.popularity();
        gini_series.push(metrics::gini(pop));
        mean_pop.push(metrics::mean_popularity(pop));
        popularity.push(pop.to_vec());
        observer(&StepView {
            timestep: t,
            teacher: &teacher,
            student: &student,
            log: &log,
        });
    }

    Ok(RealizationResult {
        index: realization,
        seeds,
        brier: brier_series,
        gini: gini_series,
        mean_popularity: mean_pop,
        recommendations,
        choices,
        popularity,
        train_reports,
        expected_popularity: teacher.expected_item_popularity().to_vec(),
        log,
    })
}

/// Failure of one or more realizations in [`run_experiment`].
#[derive(Debug, thiserror::Error)]
#[error("{} of {} realizations failed; first: {}", failures.len(), partial.len(), failures[0].1)]
pub struct ExperimentError {
    /// Successful results by realization index; `None` where a run failed.
    pub partial: Vec<Option<RealizationResult>>,
    pub failures: Vec<(usize, Error)>,
}

/// Run every realization of `config` on `config.workers` threads. Results are
/// ordered by realization index and do not depend on the worker count.
pub fn run_experiment(
    config: &ExperimentConfig,
) -> std::result::Result<Vec<RealizationResult>, ExperimentError> {
    let fail = |e: Error| ExperimentError {
        partial: vec![None; config.realizations.max(1)],
        failures: vec![(0, e)],
    };
    config.validate().map_err(fail)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| fail(Error::config("workers", e.to_string())))?;
    let outcomes: Vec<Result<RealizationResult>> = pool.install(|| {
        (0..config.realizations)
            .into_par_iter()
            .map(|r| run_realization(config, r))
            .collect()
    });

    let mut partial = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => partial.push(Some(r)),
            Err(e) => {
                failures.push((i, e));
                partial.push(None);
            }
        }
    }
    if failures.is_empty() {
        Ok(partial
            .into_iter()
            .map(|r| r.expect("no failures"))
            .collect())
    } else {
        Err(ExperimentError { partial, failures })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(strategy: StrategyKind) -> ExperimentConfig {
        ExperimentConfig {
            n: 30,
            m: 8,
            k: 2,
            k_prime: 3,
            strategy,
            seed_fraction: 0.05,
            realizations: 3,
            master_seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn seeding_counts() {
        let t = TeacherModel::generate(
            4000,
            200,
            4,
            BetaCondition::Constant(0.0),
            &mut rng_from_seed(1),
        )
        .unwrap();
        let log = seed_initial_data(&t, 0.001, &mut rng_from_seed(2));
        assert_eq!(log.consumed_count(), 800);
        let empty = seed_initial_data(&t, 0.0, &mut rng_from_seed(2));
        assert_eq!(empty.consumed_count(), 0);
    }

    #[test]
    fn seeding_with_certain_choice() {
        let t = TeacherModel::generate(
            10,
            10,
            2,
            BetaCondition::Constant(1.0),
            &mut rng_from_seed(1),
        )
        .unwrap();
        let log = seed_initial_data(&t, 0.5, &mut rng_from_seed(3));
        assert_eq!(log.consumed_count(), 50);
        assert!(log.dataset().entries().iter().all(|o| o.label));
        assert!(log.dataset().entries().iter().all(|o| log
            .outcome(o.agent as usize, o.item as usize)
            .unwrap()
            .timestep
            == 0));
    }

    #[test]
    fn exhaustion_without_seeding() {
        let cfg = ExperimentConfig {
            n: 2,
            m: 3,
            seed_fraction: 0.0,
            ..tiny(StrategyKind::Greedy)
        };
        let r = run_realization(&cfg, 0).unwrap();
        assert!(r.log.all_consumed());
        assert_eq!(r.recommendations, vec![2, 2, 2]);
        assert_eq!(r.brier.len(), 3);
    }

    #[test]
    fn series_lengths_and_conservation() {
        for strategy in [
            StrategyKind::Greedy,
            StrategyKind::EpsilonGreedy(0.2),
            StrategyKind::Random,
            StrategyKind::Oracle,
        ] {
            let cfg = tiny(strategy);
            let r = run_realization(&cfg, 1).unwrap();
            assert_eq!(r.timesteps(), cfg.m);
            assert_eq!(r.gini.len(), cfg.m);
            assert_eq!(r.popularity.len(), cfg.m + 1);
            let seeded: u32 = r.popularity[0].iter().sum();
            let mut total = seeded;
            for t in 1..=cfg.m {
                total += r.choices[t - 1];
                assert_eq!(r.popularity[t].iter().sum::<u32>(), total);
                assert!(r.popularity[t]
                    .iter()
                    .zip(&r.popularity[t - 1])
                    .all(|(a, b)| a >= b));
                assert!((r.mean_popularity[t - 1] - f64::from(total) / cfg.m as f64).abs() < 1e-12);
            }
            assert!(r.log.all_consumed());
        }
    }

    #[test]
    fn realization_is_reproducible() {
        let cfg = tiny(StrategyKind::EpsilonGreedy(0.1));
        assert_eq!(
            run_realization(&cfg, 2).unwrap(),
            run_realization(&cfg, 2).unwrap()
        );
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = ExperimentConfig {
            realizations: 4,
            ..tiny(StrategyKind::Greedy)
        };
        let one = run_experiment(&ExperimentConfig {
            workers: 1,
            ..cfg.clone()
        })
        .unwrap();
        let four = run_experiment(&ExperimentConfig {
            workers: 4,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(one, four);
        assert_eq!(one[0], run_realization(&cfg, 0).unwrap());
    }

    #[test]
    fn shared_teacher_flag() {
        let cfg = ExperimentConfig {
            regenerate_teacher: false,
            ..tiny(StrategyKind::Random)
        };
        let rs = run_experiment(&cfg).unwrap();
        assert!(rs
            .windows(2)
            .all(|w| w[0].expected_popularity == w[1].expected_popularity));
        assert_eq!(
            build_teacher(&cfg, 0).unwrap(),
            build_teacher(&cfg, 2).unwrap()
        );

        let fresh = tiny(StrategyKind::Random);
        assert_ne!(
            build_teacher(&fresh, 0).unwrap(),
            build_teacher(&fresh, 1).unwrap()
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = ExperimentConfig {
            seed_fraction: 1.0,
            ..tiny(StrategyKind::Greedy)
        };
        assert!(matches!(
            bad.validate(),
            Err(Error::Config {
                field: "seed_fraction",
                ..
            })
        ));
        let bad = ExperimentConfig {
            realizations: 0,
            ..tiny(StrategyKind::Greedy)
        };
        assert!(run_experiment(&bad).is_err());
    }

    #[test]
    fn divergence_carries_realization_index() {
        let mut cfg = tiny(StrategyKind::Greedy);
        cfg.hyperparams.learning_rate = 1e6;
        cfg.hyperparams.init_scale = Some(10.0);
        cfg.seed_fraction = 0.5;
        let err = run_realization(&cfg, 2).unwrap_err();
        assert!(
            matches!(err, Error::Realization { realization: 2, .. }),
            "{err}"
        );
        let exp = run_experiment(&cfg).unwrap_err();
        assert_eq!(exp.failures.len(), 3);
    }

    #[test]
    fn cumulative_brier_weights_by_recommendations() {
        let cfg = tiny(StrategyKind::Random);
        let r = run_realization(&cfg, 0).unwrap();
        let cum = r.cumulative_brier();
        assert_eq!(cum[0], r.brier[0]);
        let manual = (r.brier[0].unwrap() * f64::from(r.recommendations[0])
            + r.brier[1].unwrap() * f64::from(r.recommendations[1]))
            / f64::from(r.recommendations[0] + r.recommendations[1]);
        assert!((cum[1].unwrap() - manual).abs() < 1e-12);
    }

    #[test]
    fn observer_sees_every_step() {
        let cfg = tiny(StrategyKind::Greedy);
        let mut steps = Vec::new();
        run_realization_observed(&cfg, 0, &mut |v| {
            steps.push((v.timestep, v.log.consumed_count()))
        })
        .unwrap();
        assert_eq!(steps.len(), cfg.m + 1);
        assert_eq!(steps[0].0, 0);
        assert_eq!(steps.last().unwrap().1, cfg.n * cfg.m);
    }
}
