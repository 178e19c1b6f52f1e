//! Synthetic Gaussian-blob datasets: a fast desk-scale stand-in for image data.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Per class, draws `per_class` samples from an isotropic Gaussian around a
/// seeded random center in the unit cube, then min-max normalizes every
/// feature to `[0, 1]`. Deterministic per seed.
pub fn gen_synthetic(
    class_count: usize,
    per_class: usize,
    dim: usize,
    cluster_std: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if class_count == 0 || per_class == 0 || dim == 0 {
        return Err(Error::Validation(
            "class_count, per_class, and dim must all be positive".into(),
        ));
    }
    if cluster_std <= 0.0 || !cluster_std.is_finite() {
        return Err(Error::Validation(format!(
            "cluster_std must be positive and finite, got {cluster_std}"
        )));
    }

    let mut rng = rng_from(seed);
    let centers: Vec<Vec<f64>> = (0..class_count)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();

    let total = class_count * per_class;
    let mut features = Array2::zeros((total, dim));
    let mut labels = Vec::with_capacity(total);
    for (class, center) in centers.iter().enumerate() {
        for s in 0..per_class {
            let row = class * per_class + s;
            for (j, &c) in center.iter().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                features[[row, j]] = c + cluster_std * noise;
            }
            labels.push(class);
        }
    }

    min_max_normalize(&mut features);
    LabeledDataset::new(features, labels, class_count)
}

/// Like [`gen_synthetic`], but each class is a union of `modes_per_class`
/// scattered blobs instead of a single one.
///
/// Multi-modal classes make few-shot learning of a class genuinely hard —
/// a handful of samples cannot cover every mode — which is the regime the
/// skewed-recovery experiments need. `modes_per_class = 1` reduces to
/// [`gen_synthetic`].
pub fn gen_multimodal(
    class_count: usize,
    per_class: usize,
    modes_per_class: usize,
    dim: usize,
    cluster_std: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if modes_per_class == 0 {
        return Err(Error::Validation("modes_per_class must be positive".into()));
    }
    if modes_per_class == 1 {
        return gen_synthetic(class_count, per_class, dim, cluster_std, seed);
    }
    if !per_class.is_multiple_of(modes_per_class) {
        return Err(Error::Validation(format!(
            "per_class {per_class} must be divisible by modes_per_class {modes_per_class}"
        )));
    }
    let protos = class_count * modes_per_class;
    let per_proto = per_class / modes_per_class;
    let blobs = gen_synthetic(protos, per_proto, dim, cluster_std, seed)?;
    // Proto p becomes class p % class_count, interleaving modes across
    // classes so neighboring prototypes belong to different classes.
    let labels: Vec<usize> = blobs.labels().iter().map(|&p| p % class_count).collect();
    LabeledDataset::new(blobs.features().clone(), labels, class_count)
}

/// In-place per-feature min-max scaling to `[0, 1]`. Constant features map to 0.
pub(crate) fn min_max_normalize(features: &mut Array2<f64>) {
    for mut col in features.columns_mut() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        if range > 0.0 {
            col.mapv_inplace(|v| (v - lo) / range);
        } else {
            col.fill(0.0);
        }
    }
}
