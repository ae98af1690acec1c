//! Fuzzy c-means clustering.
//!
//! Minimizes `sum_i sum_j w_ij^m ||x_i - c_j||^2` by alternating the mean
//! update (weighted centroids) and the membership update until the
//! membership weights stop changing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Squared-distance threshold below which a point is considered to coincide
/// with a cluster mean (distance `< 1e-12`).
const COINCIDENT_SQ: f64 = 1e-24;

/// Total `w^m` mass below which a cluster is considered empty.
const EMPTY_MASS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FcmError {
    #[error("need at least {clusters} points to fit {clusters} clusters, got {points}")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("point coincides with {0} cluster means; membership is ambiguous")]
    AmbiguousMembership(usize),
    #[error("cluster {0} has zero total weight mass")]
    EmptyCluster(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = std::result::Result<T, FcmError>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FcmConfig {
    pub num_clusters: usize,
    /// Fuzziness exponent `m`, strictly greater than one.
    pub fuzziness: f64,
    /// Convergence threshold on the largest membership change per iteration.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub rng_seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            num_clusters: 2,
            fuzziness: 1.2,
            tolerance: 1e-5,
            max_iterations: 300,
            rng_seed: 0,
        }
    }
}

impl FcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 {
            return Err(FcmError::InvalidConfig("num_clusters must be positive"));
        }
        if !(self.fuzziness > 1.0) || !self.fuzziness.is_finite() {
            return Err(FcmError::InvalidConfig("fuzziness must be > 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(FcmError::InvalidConfig("tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(FcmError::InvalidConfig("max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Fitted cluster means.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmModel {
    pub means: Vec<Vec<f64>>,
    pub dimension: usize,
    pub final_cost: f64,
    pub iterations_used: usize,
}

/// Per-fit bookkeeping used to audit convergence behaviour.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    /// Cost after every (mean update, membership update) pair.
    pub cost_trace: Vec<f64>,
    /// Largest `|sum_j w_ij - 1|` seen over all points and iterations.
    pub max_weight_sum_error: f64,
    pub converged: bool,
    /// Number of times an empty cluster had to be re-seeded.
    pub rescued_clusters: usize,
    /// Final membership weights, one row per point.
    pub weights: Vec<Vec<f64>>,
}

impl FitDiagnostics {
    /// True when the cost trace never increases by more than `rel_tol`
    /// relative to the previous value.
    pub fn cost_is_monotone(&self, rel_tol: f64) -> bool {
        self.cost_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + rel_tol * w[0].abs().max(f64::MIN_POSITIVE))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_shapes<P: AsRef<[f64]>>(points: &[P], dim: usize) -> Result<()> {
    for p in points {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(FcmError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(FcmError::NonFinite);
        }
    }
    Ok(())
}

/// Membership weights from squared distances. A point sitting on several
/// means is an error unless `split_ties` is set, in which case the weight is
/// shared evenly between them (used inside `fit` when means collapse).
fn weights_from_sq_distances(sq: &[f64], fuzziness: f64, split_ties: bool) -> Result<Vec<f64>> {
    let coincident: Vec<usize> = (0..sq.len()).filter(|&j| sq[j] < COINCIDENT_SQ).collect();
    match coincident.len() {
        0 => {}
        1 => {
            let mut w = vec![0.0; sq.len()];
            w[coincident[0]] = 1.0;
            return Ok(w);
        }
        n if split_ties => {
            let mut w = vec![0.0; sq.len()];
            for &j in &coincident {
                w[j] = 1.0 / n as f64;
            }
            return Ok(w);
        }
        n => return Err(FcmError::AmbiguousMembership(n)),
    }
    // (d_min / d_k)^(2/(m-1)) evaluated on squared distances, then
    // normalized; algebraically identical to the ratio-sum form and immune
    // to overflow.
    let exponent = 1.0 / (fuzziness - 1.0);
    let d_min = sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let u: Vec<f64> = sq.iter().map(|&d| (d_min / d).powf(exponent)).collect();
    let total: f64 = u.iter().sum();
    Ok(u.into_iter().map(|v| v / total).collect())
}

/// Soft membership of one point against a set of means.
pub fn membership(point: &[f64], means: &[Vec<f64>], fuzziness: f64) -> Result<Vec<f64>> {
    if !(fuzziness > 1.0) {
        return Err(FcmError::InvalidConfig("fuzziness must be > 1"));
    }
    if means.is_empty() {
        return Err(FcmError::InvalidConfig("no cluster means"));
    }
    check_shapes(std::slice::from_ref(&point), point.len())?;
    check_shapes(means, point.len())?;
    let sq: Vec<f64> = means.iter().map(|c| squared_distance(point, c)).collect();
    weights_from_sq_distances(&sq, fuzziness, false)
}

/// Weighted-centroid mean update.
pub fn update_means<P: AsRef<[f64]>>(
    points: &[P],
    weights: &[Vec<f64>],
    fuzziness: f64,
) -> Result<Vec<Vec<f64>>> {
    let (sums, mass) = accumulate_means(points, weights, fuzziness)?;
    if let Some(j) = mass.iter().position(|&m| m < EMPTY_MASS) {
        return Err(FcmError::EmptyCluster(j));
    }
    Ok(finish_means(sums, &mass))
}

fn accumulate_means<P: AsRef<[f64]>>(
    points: &[P],
    weights: &[Vec<f64>],
    fuzziness: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if points.len() != weights.len() {
        return Err(FcmError::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let Some(first) = points.first() else {
        return Err(FcmError::TooFewPoints {
            points: 0,
            clusters: weights.first().map_or(1, Vec::len),
        });
    };
    let dim = first.as_ref().len();
    let k = weights[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut mass = vec![0.0; k];
    for (p, w) in points.iter().zip(weights) {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(FcmError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if w.len() != k {
            return Err(FcmError::DimensionMismatch {
                expected: k,
                found: w.len(),
            });
        }
        for j in 0..k {
            let wm = w[j].powf(fuzziness);
            if wm == 0.0 {
                continue;
            }
            mass[j] += wm;
            for (s, x) in sums[j].iter_mut().zip(p) {
                *s += wm * x;
            }
        }
    }
    Ok((sums, mass))
}

fn finish_means(mut sums: Vec<Vec<f64>>, mass: &[f64]) -> Vec<Vec<f64>> {
    for (s, &m) in sums.iter_mut().zip(mass) {
        for v in s.iter_mut() {
            *v /= m;
        }
    }
    sums
}

/// Fuzzy c-means objective.
pub fn cost<P: AsRef<[f64]>>(
    points: &[P],
    means: &[Vec<f64>],
    weights: &[Vec<f64>],
    fuzziness: f64,
) -> Result<f64> {
    if points.len() != weights.len() {
        return Err(FcmError::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let mut total = 0.0;
    for (p, w) in points.iter().zip(weights) {
        let p = p.as_ref();
        if w.len() != means.len() {
            return Err(FcmError::DimensionMismatch {
                expected: means.len(),
                found: w.len(),
            });
        }
        for (c, &wij) in means.iter().zip(w) {
            if c.len() != p.len() {
                return Err(FcmError::DimensionMismatch {
                    expected: p.len(),
                    found: c.len(),
                });
            }
            total += wij.powf(fuzziness) * squared_distance(p, c);
        }
    }
    Ok(total)
}

/// Random row-stochastic initial memberships.
pub fn initial_weights(num_points: usize, num_clusters: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_points)
        .map(|_| {
            let mut row: Vec<f64> = (0..num_clusters)
                .map(|_| rng.random::<f64>() + f64::EPSILON)
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

pub fn fit<P: AsRef<[f64]>>(points: &[P], config: &FcmConfig) -> Result<FcmModel> {
    fit_with_diagnostics(points, config).map(|(m, _)| m)
}

pub fn fit_with_diagnostics<P: AsRef<[f64]>>(
    points: &[P],
    config: &FcmConfig,
) -> Result<(FcmModel, FitDiagnostics)> {
    config.validate()?;
    let k = config.num_clusters;
    if points.len() < k {
        return Err(FcmError::TooFewPoints {
            points: points.len(),
            clusters: k,
        });
    }
    let dim = points[0].as_ref().len();
    if dim == 0 {
        return Err(FcmError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    check_shapes(points, dim)?;

    let m = config.fuzziness;
    let mut weights = initial_weights(points.len(), k, config.rng_seed);
    let mut diag = FitDiagnostics::default();
    let mut means = Vec::new();
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let (sums, mut mass) = accumulate_means(points, &weights, m)?;
        let mut next_means = finish_means(sums, &mass);
        for j in 0..k {
            if mass[j] < EMPTY_MASS {
                // Re-seed at the point that is least well explained.
                let worst = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (i, w.iter().cloned().fold(0.0, f64::max)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                next_means[j] = points[worst].as_ref().to_vec();
                mass[j] = 1.0;
                diag.rescued_clusters += 1;
            }
        }
        means = next_means;

        let mut max_delta: f64 = 0.0;
        for (p, w) in points.iter().zip(weights.iter_mut()) {
            let sq: Vec<f64> = means.iter().map(|c| squared_distance(p.as_ref(), c)).collect();
            let new_w = weights_from_sq_distances(&sq, m, true)?;
            let sum: f64 = new_w.iter().sum();
            diag.max_weight_sum_error = diag.max_weight_sum_error.max((sum - 1.0).abs());
            for (old, new) in w.iter().zip(&new_w) {
                max_delta = max_delta.max((old - new).abs());
            }
            *w = new_w;
        }
        diag.cost_trace.push(cost(points, &means, &weights, m)?);
        if max_delta < config.tolerance {
            diag.converged = true;
            break;
        }
    }

    let final_cost = diag.cost_trace.last().copied().unwrap_or(0.0);
    debug_assert!(diag.max_weight_sum_error <= 1e-9, "weights off by {}", diag.max_weight_sum_error);
    // Re-seeding an empty cluster is a deliberate jump in the cost.
    debug_assert!(diag.rescued_clusters > 0 || diag.cost_is_monotone(1e-12), "cost increased");
    diag.weights = weights;
    Ok((
        FcmModel {
            means,
            dimension: dim,
            final_cost,
            iterations_used: iterations,
        },
        diag,
    ))
}
