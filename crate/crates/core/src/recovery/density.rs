//! Density-based denoising of generated samples.
//!
//! For a point with neighbors `N_1..N_k` (Euclidean, original feature space),
//! its density is
//!
//! ```text
//! φ = ( 1 + Σ_q E(x, N_q) / (k + 1) )⁻¹            ∈ (0, 1]
//! ```
//!
//! and its density factor is the mean neighbor density over its own density:
//!
//! ```text
//! Ψ = ( Σ_q φ(N_q) ) / ( k · φ )                    > 0
//! ```
//!
//! Noise sits in sparse regions: Ψ well above 1. Denoising pools the
//! original and generated skewed-class data, computes Ψ for every generated
//! sample, takes the median as the threshold, and removes the highest-Ψ
//! generated samples until exactly `target_count` remain (continuing past
//! the median when the batch is still too large).
//!
//! Convention: a point's own neighbor search excludes itself, and when a
//! neighbor's density is computed for some query point's factor, the query
//! point is excluded from that neighbor's candidates.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::smote::GeneratedBatch;

fn euclidean(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `k` nearest pool rows to `row`, excluding `row` itself and every index in
/// `excluded`; ties broken by ascending index.
fn neighbors_excluding(
    pool: ArrayView2<'_, f64>,
    row: usize,
    k: usize,
    excluded: Option<usize>,
) -> Vec<(usize, f64)> {
    let anchor = pool.row(row);
    let mut candidates: Vec<(f64, usize)> = (0..pool.nrows())
        .filter(|&i| i != row && Some(i) != excluded)
        .map(|i| (euclidean(pool.row(i), anchor), i))
        .collect();
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    candidates.truncate(k);
    candidates.into_iter().map(|(d, i)| (i, d)).collect()
}

fn density_with_exclusion(
    pool: ArrayView2<'_, f64>,
    row: usize,
    k: usize,
    excluded: Option<usize>,
) -> (f64, Vec<usize>) {
    let neighbors = neighbors_excluding(pool, row, k, excluded);
    let distance_sum: f64 = neighbors.iter().map(|&(_, d)| d).sum();
    let phi = 1.0 / (1.0 + distance_sum / (k as f64 + 1.0));
    (phi, neighbors.into_iter().map(|(i, _)| i).collect())
}

/// Density of `pool[sample_idx]` among its `k` nearest same-class neighbors.
pub fn density(sample_idx: usize, pool: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    validate_pool(sample_idx, pool, k, k + 1)?;
    Ok(density_with_exclusion(pool, sample_idx, k, None).0)
}

/// Density factor of `pool[sample_idx]`: mean neighbor density over own
/// density. Needs `k + 2` pool rows so the neighbor-of-neighbor sets are
/// well-defined under the exclusion convention.
pub fn density_factor(sample_idx: usize, pool: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    validate_pool(sample_idx, pool, k, k + 2)?;
    Ok(factor_from_parts(pool, sample_idx, k).0)
}

fn factor_from_parts(pool: ArrayView2<'_, f64>, row: usize, k: usize) -> (f64, f64, Vec<usize>) {
    let (phi, neighbor_ids) = density_with_exclusion(pool, row, k, None);
    let neighbor_density_sum: f64 = neighbor_ids
        .iter()
        .map(|&q| density_with_exclusion(pool, q, k, Some(row)).0)
        .sum();
    let psi = neighbor_density_sum / (k as f64 * phi);
    (psi, phi, neighbor_ids)
}

fn validate_pool(sample_idx: usize, pool: ArrayView2<'_, f64>, k: usize, min_rows: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Validation("neighbor count k must be at least 1".into()));
    }
    if pool.nrows() < min_rows {
        return Err(Error::Validation(format!(
            "pool has {} rows but k = {k} requires at least {min_rows}",
            pool.nrows()
        )));
    }
    if sample_idx >= pool.nrows() {
        return Err(Error::Validation(format!(
            "sample index {sample_idx} out of range for pool of {}",
            pool.nrows()
        )));
    }
    Ok(())
}

/// Per-generated-sample density diagnostics and the removal decisions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityReport {
    pub entries: Vec<DensityEntry>,
    /// Median of the generated samples' density factors (the threshold).
    pub median_factor: f64,
    /// Layout of the pool the indices refer to: original rows first.
    pub original_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityEntry {
    /// Index of this generated sample within the batch.
    pub generated_index: usize,
    /// Row of this sample in the pooled (original + generated) matrix.
    pub pool_index: usize,
    pub phi: f64,
    pub psi: f64,
    /// Pool rows of this sample's `k` nearest neighbors.
    pub neighbor_ids: Vec<usize>,
    pub removed: bool,
}

/// Removes the highest-density-factor generated samples until exactly
/// `target_count` remain; returns the kept rows (original batch order) and
/// the full decision report.
pub fn denoise(
    batch: &GeneratedBatch,
    original_skew: ArrayView2<'_, f64>,
    denoise_k: usize,
    target_count: usize,
) -> Result<(Array2<f64>, DensityReport)> {
    let g = batch.len();
    if target_count > g {
        return Err(Error::Validation(format!(
            "target_count {target_count} exceeds the generated batch size {g}"
        )));
    }
    if original_skew.ncols() != batch.samples.ncols() {
        return Err(Error::shape(
            "denoise",
            format!("{} feature columns", batch.samples.ncols()),
            format!("{} feature columns", original_skew.ncols()),
        ));
    }
    let n_orig = original_skew.nrows();
    let pool_rows = n_orig + g;
    if denoise_k == 0 || pool_rows < denoise_k + 2 {
        return Err(Error::Validation(format!(
            "denoising pool of {pool_rows} rows cannot support k = {denoise_k}"
        )));
    }

    // Pool layout: originals first, generated after.
    let mut pool = Array2::zeros((pool_rows, batch.samples.ncols()));
    pool.slice_mut(ndarray::s![..n_orig, ..]).assign(&original_skew);
    pool.slice_mut(ndarray::s![n_orig.., ..]).assign(&batch.samples);

    let mut entries: Vec<DensityEntry> = (0..g)
        .map(|j| {
            let pool_index = n_orig + j;
            let (psi, phi, neighbor_ids) = factor_from_parts(pool.view(), pool_index, denoise_k);
            DensityEntry {
                generated_index: j,
                pool_index,
                phi,
                psi,
                neighbor_ids,
                removed: false,
            }
        })
        .collect();

    let median_factor = median(entries.iter().map(|e| e.psi));

    // Highest Ψ first; equal factors fall back to the highest generated
    // index. A single pass reaches target_count whether or not the Ψ > median
    // prefix covers the excess.
    let mut removal_order: Vec<usize> = (0..g).collect();
    removal_order.sort_by(|&a, &b| {
        entries[b]
            .psi
            .partial_cmp(&entries[a].psi)
            .unwrap()
            .then(b.cmp(&a))
    });
    for &j in removal_order.iter().take(g - target_count) {
        entries[j].removed = true;
    }

    let kept_rows: Vec<usize> = entries
        .iter()
        .filter(|e| !e.removed)
        .map(|e| e.generated_index)
        .collect();
    let kept = batch.samples.select(Axis(0), &kept_rows);

    Ok((
        kept,
        DensityReport {
            entries,
            median_factor,
            original_count: n_orig,
        },
    ))
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
