//! Popularity, inequality, correlation and significance measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::RealizationResult;
use crate::teacher::TeacherModel;

/// Gini coefficient `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 m² mean(x))`, evaluated on the
/// sorted values in `O(m log m)`. An all-zero (or empty) input yields 0.
pub fn gini<T: Copy + Into<f64>>(values: &[T]) -> f64 {
    let mut xs: Vec<f64> = values.iter().map(|&v| v.into()).collect();
    let total: f64 = xs.iter().sum();
    if xs.is_empty() || total <= 0.0 {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    // Σᵢ (2i − m − 1) x₍ᵢ₎ with 1-based ranks equals half the pairwise sum.
    let weighted: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - m - 1.0) * x)
        .sum();
    weighted / (m * total)
}

pub fn mean_popularity<T: Copy + Into<f64>>(values: &[T]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|&v| v.into()).sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    Spearman,
}

impl CorrelationKind {
    pub fn compute(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            CorrelationKind::Pearson => pearson(x, y),
            CorrelationKind::Spearman => spearman(x, y),
        }
    }
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    pearson(&ranks(x), &ranks(y))
}

/// 1-based ranks, ties receiving their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Correlation between popularity at timestep `t` and the teacher's expected
/// popularity under full sampling.
pub fn ground_truth_correlation(
    result: &RealizationResult,
    teacher: &TeacherModel,
    t: usize,
) -> Result<f64> {
    ground_truth_correlation_with(CorrelationKind::Pearson, result, teacher, t)
}

pub fn ground_truth_correlation_with(
    kind: CorrelationKind,
    result: &RealizationResult,
    teacher: &TeacherModel,
    t: usize,
) -> Result<f64> {
    let pop = to_f64(result.popularity_at(t)?);
    let expected = teacher.expected_item_popularity();
    kind.compute(&pop, expected.as_slice().expect("contiguous"))
}

/// Mean Pearson correlation of popularity at `t` over all unordered pairs of
/// realizations. Pairs with undefined correlation are left out.
pub fn inter_realization_correlation(results: &[RealizationResult], t: usize) -> Result<f64> {
    let vectors = results
        .iter()
        .map(|r| r.popularity_at(t).map(to_f64))
        .collect::<Result<Vec<_>>>()?;
    let pairs = pairwise_correlations(CorrelationKind::Pearson, &vectors)?;
    Ok(mean(&pairs))
}

/// All defined pairwise correlations `(i < j)` between the given vectors.
///
/// Errors when fewer than two vectors are given or every pair is undefined.
pub fn pairwise_correlations(kind: CorrelationKind, vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    if vectors.len() < 2 {
        return Err(Error::TooFewRealizations {
            needed: 2,
            got: vectors.len(),
        });
    }
    let mut out = Vec::new();
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            match kind.compute(&vectors[i], &vectors[j]) {
                Ok(c) => out.push(c),
                Err(Error::UndefinedCorrelation) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if out.is_empty() {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(out)
}

/// Significance of the difference in mean popularity between two sets of
/// realizations.
///
/// Each realization's series is averaged over timesteps; the difference of
/// the set means is divided by its standard error `√(s²_a/n_a + s²_b/n_b)`.
/// Positive values mean `a` is more popular than `b`.
pub fn popularity_difference_zscore(series_a: &[Vec<f64>], series_b: &[Vec<f64>]) -> Result<f64> {
    for set in [series_a, series_b] {
        if set.len() < 2 {
            return Err(Error::TooFewRealizations {
                needed: 2,
                got: set.len(),
            });
        }
    }
    let grid = series_a[0].len();
    if grid == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = series_a.iter().chain(series_b).find(|s| s.len() != grid) {
        return Err(Error::LengthMismatch {
            left: grid,
            right: bad.len(),
        });
    }
    let per_a: Vec<f64> = series_a.iter().map(|s| mean(s)).collect();
    let per_b: Vec<f64> = series_b.iter().map(|s| mean(s)).collect();
    let diff = mean(&per_a) - mean(&per_b);
    let se = (sample_variance(&per_a) / per_a.len() as f64
        + sample_variance(&per_b) / per_b.len() as f64)
        .sqrt();
    if diff == 0.0 {
        return Ok(0.0);
    }
    if se == 0.0 {
        return Ok(diff.signum() * f64::INFINITY);
    }
    Ok(diff / se)
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased (n − 1) variance; 0 for fewer than two values.
pub fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sample_sd(x: &[f64]) -> f64 {
    sample_variance(x).sqrt()
}

fn to_f64(v: &[u32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}
