//! The recommender's low-rank factorization `p_hat · q_hatᵀ`, fit by
//! per-example SGD on squared error with validation-based early stopping.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed entry of the user-item matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub agent: u32,
    pub item: u32,
    pub label: bool,
}

impl Observation {
    pub fn new(agent: usize, item: usize, label: bool) -> Self {
        Self {
            agent: agent as u32,
            item: item as u32,
            label,
        }
    }

    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Observed entries, at most one per (agent, item) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingDataset {
    entries: Vec<Observation>,
}

impl TrainingDataset {
    /// Rejects duplicate pairs.
    pub fn new(entries: Vec<Observation>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert((e.agent, e.item)) {
                return Err(Error::config(
                    "dataset",
                    format!("duplicate pair ({}, {})", e.agent, e.item),
                ));
            }
        }
        Ok(Self { entries })
    }

    /// Caller guarantees the pair is new.
    pub(crate) fn push_unchecked(&mut self, obs: Observation) {
        self.entries.push(obs);
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// How the validation subset is chosen on each `train` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutMode {
    /// Fresh uniform split on every call.
    #[default]
    Redraw,
    /// Each pair is assigned to validation by a fixed hash of its indices,
    /// so a pair stays on the same side across calls.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingHyperparams {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Upper bound of the uniform initialization; `None` means `1/√k′`.
    pub init_scale: Option<f64>,
    pub shuffle: bool,
    pub holdout: HoldoutMode,
}

impl Default for TrainingHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            max_epochs: 200,
            patience: 5,
            validation_fraction: 0.2,
            init_scale: None,
            shuffle: true,
            holdout: HoldoutMode::Redraw,
        }
    }
}

impl TrainingHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction", "must lie in (0, 1)"));
        }
        if let Some(s) = self.init_scale {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config("init_scale", "must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn init_scale_for(&self, k_prime: usize) -> f64 {
        self.init_scale
            .unwrap_or_else(|| 1.0 / (k_prime.max(1) as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_validation_brier: f64,
    pub train_brier: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    p_hat: Array2<f64>,
    q_hat: Array2<f64>,
}

impl StudentModel {
    /// Fresh factors with entries i.i.d. uniform on `[0, init_scale]`,
    /// drawn `p_hat` first, then `q_hat`, both row-major.
    pub fn init<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        k_prime: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if k_prime == 0 {
            return Err(Error::config("k_prime", "must be at least 1"));
        }
        if !(init_scale.is_finite() && init_scale >= 0.0) {
            return Err(Error::config("init_scale", "must be nonnegative"));
        }
        let p_hat = Array2::from_shape_simple_fn((n, k_prime), || rng.random::<f64>() * init_scale);
        let q_hat = Array2::from_shape_simple_fn((m, k_prime), || rng.random::<f64>() * init_scale);
        Ok(Self { p_hat, q_hat })
    }

    pub fn from_factors(p_hat: Array2<f64>, q_hat: Array2<f64>) -> Result<Self> {
        if p_hat.ncols() != q_hat.ncols() || p_hat.ncols() == 0 {
            return Err(Error::config("k_prime", "factor ranks differ or are zero"));
        }
        if p_hat.nrows() == 0 || q_hat.nrows() == 0 {
            return Err(Error::config("n/m", "factors must have at least one row"));
        }
        Ok(Self { p_hat, q_hat })
    }

    pub fn n(&self) -> usize {
        self.p_hat.nrows()
    }

    pub fn m(&self) -> usize {
        self.q_hat.nrows()
    }

    pub fn k_prime(&self) -> usize {
        self.p_hat.ncols()
    }

    pub fn p_hat(&self) -> &Array2<f64> {
        &self.p_hat
    }

    pub fn q_hat(&self) -> &Array2<f64> {
        &self.q_hat
    }

    /// Raw inner product of the agent and item factors (unclipped).
    ///
    /// # Panics
    ///
    /// Panics if `agent` or `item` is out of range.
    pub fn predict(&self, agent: usize, item: usize) -> f64 {
        assert!(
            agent < self.n() && item < self.m(),
            "index ({agent}, {item}) out of range for {}x{} student",
            self.n(),
            self.m()
        );
        self.p_hat.row(agent).dot(&self.q_hat.row(item))
    }

    /// [`predict`](Self::predict) clipped to a probability.
    pub fn predict_prob(&self, agent: usize, item: usize) -> f64 {
        self.predict(agent, item).clamp(0.0, 1.0)
    }

    /// Raw predictions for every item, for one agent.
    pub fn predict_row(&self, agent: usize) -> Array1<f64> {
        self.q_hat.dot(&self.p_hat.row(agent))
    }

    /// Brier score of the clipped predictions on `obs`.
    pub fn brier_on(&self, obs: &[Observation]) -> f64 {
        if obs.is_empty() {
            return 0.0;
        }
        let total: f64 = obs
            .iter()
            .map(|o| {
                let d = self.predict_prob(o.agent as usize, o.item as usize) - o.target();
                d * d
            })
            .sum();
        total / obs.len() as f64
    }

    /// Fit the factors in place on `data`, starting from the current weights.
    ///
    /// The input weights count as epoch zero, so the restored weights never
    /// score worse on the validation split than the weights passed in.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        data: &TrainingDataset,
        hp: &TrainingHyperparams,
        rng: &mut R,
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        hp.validate()?;
        for o in data.entries() {
            // Forces the bounds check before any mutation.
            let _ = self.predict(o.agent as usize, o.item as usize);
        }

        let (mut train, validation) = split(data.entries(), hp, rng);
        let validation: &[Observation] = if validation.is_empty() {
            &train
        } else {
            &validation
        };
        let validation = validation.to_vec();

        let mut best = self.brier_on(&validation);
        let mut best_weights = (self.p_hat.clone(), self.q_hat.clone());
        let mut since_best = 0;
        let mut epochs_run = 0;
        let mut stopped_early = false;

        for epoch in 1..=hp.max_epochs {
            if hp.shuffle {
                train.shuffle(rng);
            }
            let mut loss = 0.0;
            for o in &train {
                loss += self.sgd_step(o, hp.learning_rate);
            }
            epochs_run = epoch;
            let score = self.brier_on(&validation);
            if !loss.is_finite() || !score.is_finite() || !self.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            if score < best {
                best = score;
                best_weights = (self.p_hat.clone(), self.q_hat.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= hp.patience {
                    stopped_early = epoch < hp.max_epochs;
                    break;
                }
            }
        }

        (self.p_hat, self.q_hat) = best_weights;
        Ok(TrainReport {
            epochs_run,
            best_validation_brier: best,
            train_brier: self.brier_on(&train),
            stopped_early,
        })
    }

    /// One gradient step on a single example. Returns the squared error
    /// before the update.
    fn sgd_step(&mut self, o: &Observation, lr: f64) -> f64 {
        let mut p = self.p_hat.row_mut(o.agent as usize);
        let mut q = self.q_hat.row_mut(o.item as usize);
        let residual = p.dot(&q) - o.target();
        let scale = 2.0 * lr * residual;
        for (a, b) in p.iter_mut().zip(q.iter_mut()) {
            let a_old = *a;
            *a -= scale * *b;
            *b -= scale * a_old;
        }
        residual * residual
    }

    fn is_finite(&self) -> bool {
        self.p_hat
            .iter()
            .chain(self.q_hat.iter())
            .all(|x| x.is_finite())
    }
}

/// Gradient of `(p · q − target)²` with respect to `p` and `q`.
pub fn squared_error_gradient(
    p: ArrayView1<'_, f64>,
    q: ArrayView1<'_, f64>,
    target: f64,
) -> (Array1<f64>, Array1<f64>) {
    let residual = p.dot(&q) - target;
    (
        q.mapv(|x| 2.0 * residual * x),
        p.mapv(|x| 2.0 * residual * x),
    )
}

fn split<R: Rng + ?Sized>(
    entries: &[Observation],
    hp: &TrainingHyperparams,
    rng: &mut R,
) -> (Vec<Observation>, Vec<Observation>) {
    match hp.holdout {
        HoldoutMode::Redraw => {
            let mut all = entries.to_vec();
            all.shuffle(rng);
            let n_val = ((hp.validation_fraction * all.len() as f64).round() as usize)
                .min(all.len().saturating_sub(1));
            let train = all.split_off(n_val);
            (train, all)
        }
        HoldoutMode::Fixed => {
            let (validation, train): (Vec<_>, Vec<_>) = entries
                .iter()
                .partition(|o| pair_unit(o.agent, o.item) < hp.validation_fraction);
            if train.is_empty() {
                (validation, Vec::new())
            } else {
                (train, validation)
            }
        }
    }
}

fn pair_unit(agent: u32, item: u32) -> f64 {
    let key = (u64::from(agent) << 32) | u64::from(item);
    let h = crate::rng::derive_seed(0x005E_ED0F_0B5E_4AED, key);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Mean squared difference between predictions and binary labels.
pub fn brier(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let d = p - if y { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok(sum / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;

    fn student(p: Array2<f64>, q: Array2<f64>) -> StudentModel {
        StudentModel::from_factors(p, q).unwrap()
    }

    #[test]
    fn zero_init_predicts_zero() {
        let s = StudentModel::init(3, 4, 5, 0.0, &mut rng_from_seed(1)).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(s.predict(i, j), 0.0);
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = StudentModel::init(3, 2, 5, 0.4, &mut rng_from_seed(1)).unwrap();
        let b = StudentModel::init(3, 2, 5, 0.4, &mut rng_from_seed(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_mean_prediction_quarter() {
        let s = StudentModel::init(400, 300, 5, 1.0 / 5f64.sqrt(), &mut rng_from_seed(3)).unwrap();
        let mean = s.p_hat().dot(&s.q_hat().t()).mean().unwrap();
        assert!((mean - 0.25).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(StudentModel::init(0, 1, 1, 0.1, &mut rng_from_seed(0)).is_err());
        assert!(StudentModel::init(1, 1, 0, 0.1, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn predict_dot_products() {
        let s = student(
            array![[1.0, 0.0], [0.5, 0.5]],
            array![[1.0, 0.0], [0.2, 0.6], [0.0, 0.0]],
        );
        assert_eq!(s.predict(0, 0), 1.0);
        assert_eq!(s.predict(1, 2), 0.0);
        assert!((s.predict(1, 1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn predict_prob_clips() {
        let s = student(array![[1.0]], array![[1.7], [-0.3], [0.42]]);
        assert_eq!(s.predict_prob(0, 0), 1.0);
        assert_eq!(s.predict_prob(0, 1), 0.0);
        assert_eq!(s.predict_prob(0, 2), 0.42);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn predict_out_of_range_panics() {
        let s = student(array![[1.0]], array![[1.0]]);
        s.predict(0, 1);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[1.0, 0.0], &[true, false]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5], &[true]).unwrap(), 0.25);
        let b = brier(&[0.2, 0.9, 0.4], &[false, true, true]).unwrap();
        assert!((b - 0.41 / 3.0).abs() < 1e-12);
        assert!(matches!(
            brier(&[0.1], &[]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(brier(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn dataset_rejects_duplicates() {
        let o = Observation::new(0, 1, true);
        assert!(TrainingDataset::new(vec![o, Observation::new(0, 1, false)]).is_err());
        assert!(TrainingDataset::new(vec![o, Observation::new(1, 0, false)]).is_ok());
    }

    #[test]
    fn train_rejects_empty() {
        let mut s = StudentModel::init(2, 2, 1, 0.5, &mut rng_from_seed(0)).unwrap();
        let err = s
            .train(
                &TrainingDataset::default(),
                &TrainingHyperparams::default(),
                &mut rng_from_seed(0),
            )
            .unwrap_err();
        assert_eq!(err, Error::EmptyDataset);
    }

    #[test]
    fn single_epoch_bound() {
        let mut s = StudentModel::init(4, 4, 2, 0.5, &mut rng_from_seed(0)).unwrap();
        let data =
            TrainingDataset::new((0..4).map(|i| Observation::new(i, i, i % 2 == 0)).collect())
                .unwrap();
        let hp = TrainingHyperparams {
            patience: 0,
            max_epochs: 1,
            ..Default::default()
        };
        let report = s.train(&data, &hp, &mut rng_from_seed(1)).unwrap();
        assert_eq!(report.epochs_run, 1);
        assert!(!report.stopped_early);
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = student(
            Array2::from_elem((2, 2), 3.0),
            Array2::from_elem((2, 2), 3.0),
        );
        let data = TrainingDataset::new(vec![
            Observation::new(0, 0, false),
            Observation::new(1, 1, true),
            Observation::new(0, 1, false),
            Observation::new(1, 0, true),
        ])
        .unwrap();
        let hp = TrainingHyperparams {
            learning_rate: 10.0,
            max_epochs: 50,
            patience: 50,
            ..Default::default()
        };
        let err = s.train(&data, &hp, &mut rng_from_seed(2)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn fixed_holdout_is_stable_across_calls() {
        let entries: Vec<_> = (0..200)
            .map(|i| Observation::new(i % 20, i / 20, i % 3 == 0))
            .collect();
        let hp = TrainingHyperparams {
            holdout: HoldoutMode::Fixed,
            ..Default::default()
        };
        let (_, a) = split(&entries, &hp, &mut rng_from_seed(1));
        let (_, b) = split(&entries, &hp, &mut rng_from_seed(2));
        assert_eq!(a, b);
        assert!(a.len() > 20 && a.len() < 60, "{}", a.len());
    }

    #[test]
    fn redraw_split_sizes() {
        let entries: Vec<_> = (0..10).map(|i| Observation::new(i, 0, true)).collect();
        let (train, val) = split(
            &entries,
            &TrainingHyperparams::default(),
            &mut rng_from_seed(1),
        );
        assert_eq!((train.len(), val.len()), (8, 2));
        let (train, val) = split(
            &entries[..1],
            &TrainingHyperparams::default(),
            &mut rng_from_seed(1),
        );
        assert_eq!((train.len(), val.len()), (1, 0));
    }
}
