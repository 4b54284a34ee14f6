//! Comparison policies that ignore the learned model.

use rand::Rng;

use crate::domain::{ImportanceMatrix, WeightVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Monitors every metric.
pub fn classical<T: Scalar>(metrics: usize) -> WeightVector<T> {
    WeightVector::clamped(vec![T::one(); metrics])
}

/// Independent uniform weight per metric, redrawn each slot.
pub fn random<T: Scalar, R: Rng + ?Sized>(metrics: usize, rng: &mut R) -> WeightVector<T> {
    WeightVector::clamped((0..metrics).map(|_| T::lit(rng.random::<f64>())))
}

/// Weight 1 on the `k` metrics with the highest mean importance across
/// activities, 0 elsewhere. Ties go to the lower metric index.
pub fn fixed<T: Scalar>(importance: &ImportanceMatrix<T>, k: usize) -> Result<WeightVector<T>> {
    let metrics = importance.metrics();
    if k > metrics {
        return Err(Error::invalid(format!(
            "fixed baseline asks for {k} metrics but only {metrics} exist"
        )));
    }
    let means = importance.column_means();
    let mut order: Vec<usize> = (0..metrics).collect();
    // stable sort keeps lower indices first among equal means
    order.sort_by(|&a, &b| {
        means[b]
            .partial_cmp(&means[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut beta = vec![T::zero(); metrics];
    for &m in &order[..k] {
        beta[m] = T::one();
    }
    Ok(WeightVector::clamped(beta))
}
