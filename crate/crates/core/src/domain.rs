//! Closed-form monitoring model: processing delay, device energy, weighted
//! cost, cosine relevance of a selection, threshold selection and the
//! per-slot utility that doubles as the learning reward.
//!
//! Every function here is pure and generic over [`Scalar`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of an activity in `[0, G)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivityId(pub usize);

/// Index of a health metric in `[0, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricId(pub usize);

/// Per-activity importance of every metric, stored row-major (`G x M`).
///
/// Entries lie in `[0, 1]` and every row has a strictly positive entry, so
/// the cosine relevance is always defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>", bound = "T: Scalar")]
pub struct ImportanceMatrix<T> {
    activities: usize,
    metrics: usize,
    values: Vec<T>,
}

impl<T: Scalar> ImportanceMatrix<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let activities = rows.len();
        if activities == 0 {
            return Err(Error::invalid(
                "importance matrix needs at least one activity",
            ));
        }
        let metrics = rows[0].len();
        if metrics == 0 {
            return Err(Error::invalid(
                "importance matrix needs at least one metric",
            ));
        }
        let mut values = Vec::with_capacity(activities * metrics);
        for (g, row) in rows.into_iter().enumerate() {
            if row.len() != metrics {
                return Err(Error::invalid(format!(
                    "importance row {g} has {} entries, expected {metrics}",
                    row.len()
                )));
            }
            if let Some((m, v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
            {
                return Err(Error::invalid(format!(
                    "importance[{g}][{m}] = {v} is outside [0, 1]"
                )));
            }
            if !row.iter().any(|v| *v > T::zero()) {
                return Err(Error::invalid(format!(
                    "importance row {g} has no positive entry"
                )));
            }
            values.extend(row);
        }
        Ok(Self {
            activities,
            metrics,
            values,
        })
    }

    /// Number of activities `G`.
    pub fn activities(&self) -> usize {
        self.activities
    }

    /// Number of metrics `M`.
    pub fn metrics(&self) -> usize {
        self.metrics
    }

    pub fn row(&self, activity: ActivityId) -> &[T] {
        let start = activity.0 * self.metrics;
        &self.values[start..start + self.metrics]
    }

    pub fn get(&self, activity: ActivityId, metric: MetricId) -> T {
        self.row(activity)[metric.0]
    }

    pub fn column_means(&self) -> Vec<T> {
        let count = T::lit(self.activities as f64);
        (0..self.metrics)
            .map(|m| {
                (0..self.activities)
                    .map(|g| self.values[g * self.metrics + m])
                    .sum::<T>()
                    / count
            })
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.values
            .chunks(self.metrics)
            .map(<[T]>::to_vec)
            .collect()
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for ImportanceMatrix<T> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl<T: Scalar> From<ImportanceMatrix<T>> for Vec<Vec<T>> {
    fn from(m: ImportanceMatrix<T>) -> Self {
        m.to_rows()
    }
}

/// Continuous per-metric weights `beta` in `[0, 1]`; the action of the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn new(beta: Vec<T>) -> Result<Self> {
        if let Some((m, v)) = beta
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::invalid(format!("beta[{m}] = {v} is outside [0, 1]")));
        }
        Ok(Self(beta))
    }

    /// Builds a weight vector by clamping each entry into `[0, 1]`.
    /// NaN entries become 0.
    pub fn clamped(beta: impl IntoIterator<Item = T>) -> Self {
        Self(
            beta.into_iter()
                .map(|v| {
                    if v.is_nan() {
                        T::zero()
                    } else {
                        v.max(T::zero()).min(T::one())
                    }
                })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Binary monitor/skip decision per metric.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionVector(Vec<bool>);

impl SelectionVector {
    pub fn new(alpha: Vec<bool>) -> Self {
        Self(alpha)
    }

    pub fn none(metrics: usize) -> Self {
        Self(vec![false; metrics])
    }

    pub fn all(metrics: usize) -> Self {
        Self(vec![true; metrics])
    }

    /// Decodes a bitmask where metric 0 is the least significant bit.
    pub fn from_mask(mask: u64, metrics: usize) -> Self {
        Self((0..metrics).map(|m| mask >> m & 1 == 1).collect())
    }

    /// Encodes the selection as a bitmask, metric 0 in the least significant bit.
    /// Only meaningful for at most 64 metrics.
    pub fn mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .fold(0u64, |acc, (m, _)| acc | 1u64 << m)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|s| **s).count()
    }

    pub fn is_selected(&self, metric: MetricId) -> bool {
        self.0[metric.0]
    }

    /// The selection as a `{0, 1}` weight vector.
    pub fn to_weights<T: Scalar>(&self) -> WeightVector<T> {
        WeightVector(
            self.0
                .iter()
                .map(|s| if *s { T::one() } else { T::zero() })
                .collect(),
        )
    }
}

/// Wearable compute characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DeviceSpec<T> {
    /// CPU frequency in cycles per second.
    pub f: T,
    /// Effective switched capacitance constant.
    pub rho: T,
    /// Frequency exponent of the power model.
    pub zeta: T,
    /// Energy versus delay balance of the cost.
    pub mu: T,
}

impl<T: Scalar> DeviceSpec<T> {
    pub fn new(f: T, rho: T, zeta: T, mu: T) -> Result<Self> {
        let dev = Self { f, rho, zeta, mu };
        dev.validate()?;
        Ok(dev)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > T::zero() && self.f.is_finite()) {
            return Err(Error::invalid(format!(
                "frequency must be positive, got {}",
                self.f
            )));
        }
        if !(self.rho > T::zero() && self.rho.is_finite()) {
            return Err(Error::invalid(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.zeta >= T::lit(2.0) && self.zeta.is_finite()) {
            return Err(Error::invalid(format!(
                "zeta must be at least 2, got {}",
                self.zeta
            )));
        }
        check_mu(self.mu)
    }
}

/// Per-slot computation demand of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TaskSpec<T> {
    /// Datasize per metric in bits.
    pub datasize: Vec<T>,
    /// CPU cycles needed per bit, per metric.
    pub cycles: Vec<T>,
}

impl<T: Scalar> TaskSpec<T> {
    pub fn new(datasize: Vec<T>, cycles: Vec<T>) -> Result<Self> {
        if datasize.len() != cycles.len() {
            return Err(Error::invalid(format!(
                "task has {} datasizes but {} cycle counts",
                datasize.len(),
                cycles.len()
            )));
        }
        if datasize.iter().chain(&cycles).any(|v| !(*v >= T::zero())) {
            return Err(Error::invalid("task entries must be non-negative"));
        }
        Ok(Self { datasize, cycles })
    }

    pub fn metrics(&self) -> usize {
        self.datasize.len()
    }
}

fn check_mu<T: Scalar>(mu: T) -> Result<()> {
    if mu >= T::zero() && mu <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("mu must lie in [0, 1], got {mu}")))
    }
}

/// Processing time in seconds of the selected metrics: `sum(alpha * D * c) / f`.
pub fn compute_delay<T: Scalar>(alpha: &SelectionVector, task: &TaskSpec<T>, f: T) -> Result<T> {
    if alpha.len() != task.datasize.len() || alpha.len() != task.cycles.len() {
        return Err(Error::invalid(format!(
            "selection has {} entries, task has {} datasizes and {} cycle counts",
            alpha.len(),
            task.datasize.len(),
            task.cycles.len()
        )));
    }
    if !(f > T::zero()) {
        return Err(Error::invalid(format!(
            "frequency must be positive, got {f}"
        )));
    }
    let cycles: T = alpha
        .as_slice()
        .iter()
        .zip(task.datasize.iter().zip(&task.cycles))
        .filter(|(s, _)| **s)
        .map(|(_, (d, c))| *d * *c)
        .sum();
    Ok(cycles / f)
}

/// Energy in joules spent computing for `t` seconds: `rho * f^zeta * t`.
pub fn compute_energy<T: Scalar>(dev: &DeviceSpec<T>, t: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(Error::invalid(format!(
            "delay must be non-negative, got {t}"
        )));
    }
    Ok(dev.rho * dev.f.powf(dev.zeta) * t)
}

/// Weighted cost `mu * ec + (1 - mu) * t`.
pub fn compute_cost<T: Scalar>(mu: T, ec: T, t: T) -> Result<T> {
    check_mu(mu)?;
    Ok(mu * ec + (T::one() - mu) * t)
}

/// Cosine similarity between an importance row and a selection.
///
/// An empty selection has relevance 0.
pub fn compute_relevance<T: Scalar>(importance: &[T], alpha: &SelectionVector) -> Result<T> {
    if importance.len() != alpha.len() {
        return Err(Error::invalid(format!(
            "importance has {} entries, selection has {}",
            importance.len(),
            alpha.len()
        )));
    }
    let norm_sq: T = importance.iter().map(|v| *v * *v).sum();
    if !(norm_sq > T::zero()) {
        return Err(Error::invalid("importance row has zero norm"));
    }
    let selected = alpha.count();
    if selected == 0 {
        return Ok(T::zero());
    }
    let dot: T = importance
        .iter()
        .zip(alpha.as_slice())
        .filter(|(_, s)| **s)
        .map(|(v, _)| *v)
        .sum();
    Ok(dot / (norm_sq.sqrt() * T::lit(selected as f64).sqrt()))
}

/// Selects metric `m` iff `beta[m] > theta` (strictly).
pub fn threshold_select<T: Scalar>(beta: &WeightVector<T>, theta: T) -> Result<SelectionVector> {
    if !(theta > T::zero() && theta < T::one()) {
        return Err(Error::invalid(format!(
            "threshold must lie in (0, 1), got {theta}"
        )));
    }
    Ok(SelectionVector(
        beta.as_slice().iter().map(|b| *b > theta).collect(),
    ))
}

/// One device's share of the objective: `relevance - lambda * cost`.
pub fn per_step_utility<T: Scalar>(relevance: T, cost: T, lambda: T) -> Result<T> {
    if !(lambda >= T::zero()) {
        return Err(Error::invalid(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    Ok(relevance - lambda * cost)
}

/// Every intermediate quantity of one evaluated selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityBreakdown<T> {
    pub relevance: T,
    pub delay: T,
    pub energy: T,
    pub cost: T,
    pub utility: T,
}

/// Chains delay, energy, cost, relevance and utility for one selection.
pub fn evaluate_selection<T: Scalar>(
    importance: &[T],
    alpha: &SelectionVector,
    task: &TaskSpec<T>,
    dev: &DeviceSpec<T>,
    lambda: T,
) -> Result<UtilityBreakdown<T>> {
    let delay = compute_delay(alpha, task, dev.f)?;
    let energy = compute_energy(dev, delay)?;
    let cost = compute_cost(dev.mu, energy, delay)?;
    let relevance = compute_relevance(importance, alpha)?;
    let utility = per_step_utility(relevance, cost, lambda)?;
    Ok(UtilityBreakdown {
        relevance,
        delay,
        energy,
        cost,
        utility,
    })
}
