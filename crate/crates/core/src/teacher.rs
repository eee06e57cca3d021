//! Ground-truth model of agent choices.
//!
//! Each (agent, item) pair has a probability of being chosen when the item is
//! recommended: a bias term `beta` plus, with the remaining `1 - beta` mass, a
//! rank-`k` nonnegative preference term `p · qᵀ`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the bias matrix is filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaCondition {
    /// Every entry equals the given value.
    Constant(f64),
    /// Entries drawn i.i.d. uniform on [0, 1).
    UniformRandom,
}

impl BetaCondition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaCondition::Constant(b) if !(0.0..=1.0).contains(&b) => {
                Err(Error::config("beta", format!("{b} is outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Label used in manifests and cell ids.
    pub fn label(&self) -> String {
        match self {
            BetaCondition::Constant(b) => format!("{b}"),
            BetaCondition::UniformRandom => "uniform_random".to_string(),
        }
    }
}

/// Default bound of the latent entries. With entries uniform on `[0, s]` and
/// `s = 1/√k`, each product `p_i · q_j` has mean 1/4 and never exceeds 1.
pub fn default_latent_scale(k: usize) -> f64 {
    1.0 / (k as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    beta: Array2<f64>,
    p: Array2<f64>,
    q: Array2<f64>,
    probs: Array2<f64>,
}

impl TeacherModel {
    /// Draw a teacher with the default latent scale.
    pub fn generate<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        k: usize,
        beta: BetaCondition,
        rng: &mut R,
    ) -> Result<Self> {
        Self::generate_with_scale(n, m, k, beta, default_latent_scale(k.max(1)), rng)
    }

    /// Draw a teacher whose latent entries are uniform on `[0, scale]`.
    ///
    /// Draw order is fixed: `p` row-major, then `q` row-major, then `beta`
    /// (only for [`BetaCondition::UniformRandom`]).
    pub fn generate_with_scale<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        k: usize,
        beta: BetaCondition,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        beta.validate()?;
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::config(
                "latent_scale",
                format!("{scale} is not a nonnegative number"),
            ));
        }
        // Keeps every product p_i · q_j ≤ 1.
        if scale * scale * k as f64 > 1.0 + 1e-12 {
            return Err(Error::config(
                "latent_scale",
                format!("{scale} allows preference terms above 1 for k = {k}"),
            ));
        }

        let p = Array2::from_shape_simple_fn((n, k), || rng.random::<f64>() * scale);
        let q = Array2::from_shape_simple_fn((m, k), || rng.random::<f64>() * scale);
        let beta = match beta {
            BetaCondition::Constant(b) => Array2::from_elem((n, m), b),
            BetaCondition::UniformRandom => {
                Array2::from_shape_simple_fn((n, m), || rng.random::<f64>())
            }
        };
        Self::from_parts(beta, p, q)
    }

    /// Assemble a teacher from explicit matrices.
    pub fn from_parts(beta: Array2<f64>, p: Array2<f64>, q: Array2<f64>) -> Result<Self> {
        let (n, m) = beta.dim();
        if n == 0 || m == 0 {
            return Err(Error::config("beta", "matrix must be non-empty"));
        }
        if p.nrows() != n || q.nrows() != m || p.ncols() != q.ncols() {
            return Err(Error::config(
                "p/q",
                format!(
                    "shapes {:?} and {:?} do not fit a {n}x{m} bias matrix",
                    p.dim(),
                    q.dim()
                ),
            ));
        }
        if beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::config("beta", "entries must lie in [0, 1]"));
        }
        if p.iter()
            .chain(q.iter())
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return Err(Error::config(
                "p/q",
                "latent entries must be finite and nonnegative",
            ));
        }
        let latent = p.dot(&q.t());
        let probs = &beta + &((1.0 - &beta) * &latent);
        if probs.iter().any(|x| *x > 1.0 + 1e-12) {
            return Err(Error::config("p/q", "choice probabilities exceed 1"));
        }
        Ok(Self { beta, p, q, probs })
    }

    pub fn n(&self) -> usize {
        self.probs.nrows()
    }

    pub fn m(&self) -> usize {
        self.probs.ncols()
    }

    pub fn k(&self) -> usize {
        self.p.ncols()
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    /// # Panics
    ///
    /// Panics if `agent` or `item` is out of range.
    pub fn prob(&self, agent: usize, item: usize) -> f64 {
        self.check_index(agent, item);
        self.probs[[agent, item]]
    }

    /// Bernoulli draw of whether `agent` chooses `item` when it is recommended.
    ///
    /// Consumes exactly one `f64` from `rng`.
    ///
    /// # Panics
    ///
    /// Panics if `agent` or `item` is out of range.
    pub fn sample_choice<R: Rng + ?Sized>(&self, agent: usize, item: usize, rng: &mut R) -> bool {
        let p = self.prob(agent, item);
        rng.random::<f64>() < p
    }

    /// Expected number of agents choosing each item if every pair were offered.
    pub fn expected_item_popularity(&self) -> Array1<f64> {
        self.probs.sum_axis(Axis(0))
    }

    fn check_index(&self, agent: usize, item: usize) {
        assert!(
            agent < self.n() && item < self.m(),
            "index ({agent}, {item}) out of range for {}x{} teacher",
            self.n(),
            self.m()
        );
    }
}
