//! Labelled tabular datasets: the synthetic checkerboard generator and
//! per-column standardization. CSV ingestion lives in the `weightscape` crate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{fnv1a_extend, rng_from_seed};

/// Mean and (population) standard deviation subtracted from / divided into a
/// column, expressed in the original units of the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub mean: f64,
    pub stddev: f64,
}

/// Immutable labelled dataset, one example per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    feature_names: Option<Vec<String>>,
    standardization: Option<Vec<ColumnScale>>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if let Some(pos) = features.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                index: pos / features.cols().max(1),
            });
        }
        Ok(Self {
            features,
            labels,
            feature_names: None,
            standardization: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "feature names",
                expected: self.dim(),
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn standardization(&self) -> Option<&[ColumnScale]> {
        self.standardization.as_deref()
    }

    /// Number of distinct classes implied by the labels (max label + 1).
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Checks every label is below `classes`.
    pub fn check_labels(&self, classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l >= classes) {
            Some(index) => Err(Error::LabelOutOfRange {
                index,
                label: self.labels[index],
                classes,
            }),
            None => Ok(()),
        }
    }

    /// Content hash over shape, feature bits and labels.
    pub fn digest(&self) -> u64 {
        let mut h = fnv1a_extend(
            crate::rng::fnv1a(b"dataset"),
            &(self.len() as u64).to_le_bytes(),
        );
        h = fnv1a_extend(h, &(self.dim() as u64).to_le_bytes());
        for x in self.features.as_slice() {
            h = fnv1a_extend(h, &x.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            h = fnv1a_extend(h, &(l as u64).to_le_bytes());
        }
        h
    }
}

/// Checkerboard parity label of a point in the unit square.
pub fn checkerboard_label(x: f64, y: f64, tiles_per_axis: usize) -> usize {
    let t = tiles_per_axis as f64;
    let cell = |v: f64| (libm::floor(v * t) as i64).clamp(0, tiles_per_axis as i64 - 1);
    ((cell(x) + cell(y)) % 2) as usize
}

/// Points uniform on `[0,1]^2`, labelled by tile parity, each label flipped
/// with probability `label_noise`.
pub fn gen_checkerboard(
    n_samples: usize,
    tiles_per_axis: usize,
    label_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if tiles_per_axis == 0 {
        return Err(Error::InvalidConfig(
            "tiles_per_axis must be at least 1".into(),
        ));
    }
    if n_samples == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..1.0).contains(&label_noise) {
        return Err(Error::InvalidConfig(format!(
            "label_noise {label_noise} outside [0, 1)"
        )));
    }
    if n_samples < 2 * tiles_per_axis * tiles_per_axis {
        log::warn!(
            "{n_samples} samples spread over {} tiles leaves some tiles nearly empty",
            tiles_per_axis * tiles_per_axis
        );
    }

    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(2 * n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        let mut label = checkerboard_label(x, y, tiles_per_axis);
        if label_noise > 0.0 && rng.gen::<f64>() < label_noise {
            label = 1 - label;
        }
        data.push(x);
        data.push(y);
        labels.push(label);
    }
    let features = Matrix::from_vec(n_samples, 2, data)?;
    Dataset::new(features, labels)?.with_feature_names(alloc::vec!["x".into(), "y".into()])
}

/// Per-column z-score with population standard deviation. Constant columns
/// become zero and record a stddev of 1. The stored transform is composed
/// with any earlier one so it always maps original units to the current ones.
pub fn standardize(dataset: &Dataset) -> Result<Dataset> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InvalidConfig(
            "standardize needs at least two rows".into(),
        ));
    }
    let d = dataset.dim();
    let mut features = dataset.features.clone();
    let mut scales = Vec::with_capacity(d);
    for j in 0..d {
        let col = features.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let mut stddev = libm::sqrt(var);
        if stddev <= f64::EPSILON * mean.abs().max(1.0) {
            stddev = 1.0;
            for i in 0..n {
                features[(i, j)] = 0.0;
            }
        } else {
            for i in 0..n {
                features[(i, j)] = (features[(i, j)] - mean) / stddev;
            }
        }
        scales.push(ColumnScale { mean, stddev });
    }

    let composed = match &dataset.standardization {
        Some(prev) => prev
            .iter()
            .zip(&scales)
            .map(|(p, s)| ColumnScale {
                mean: p.mean + p.stddev * s.mean,
                stddev: p.stddev * s.stddev,
            })
            .collect(),
        None => scales,
    };
    Ok(Dataset {
        features,
        labels: dataset.labels.clone(),
        feature_names: dataset.feature_names.clone(),
        standardization: Some(composed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_tile_is_all_zero() {
        let ds = gen_checkerboard(4, 1, 0.0, 3).unwrap();
        assert!(ds.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn parity_formula() {
        assert_eq!(checkerboard_label(0.1, 0.1, 2), 0);
        assert_eq!(checkerboard_label(0.1, 0.6, 2), 1);
        assert_eq!(checkerboard_label(0.6, 0.6, 2), 0);
        assert_eq!(checkerboard_label(1.0, 0.0, 4), 1);
    }

    #[test]
    fn zero_tiles_is_an_error() {
        assert!(matches!(
            gen_checkerboard(10, 0, 0.0, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn balanced_classes() {
        // 16 equal-area tiles, half of each parity; at n = 10^4 the binomial
        // standard error of the positive fraction is 0.005, so 0.48..0.52 is 4 sigma.
        for seed in [0, 1, 99] {
            let ds = gen_checkerboard(10_000, 4, 0.0, seed).unwrap();
            let frac = ds.labels().iter().filter(|&&l| l == 1).count() as f64 / 10_000.0;
            assert!((0.48..=0.52).contains(&frac), "seed {seed}: {frac}");
        }
    }

    #[test]
    fn generator_is_reproducible_and_noise_free_matches_parity() {
        let a = gen_checkerboard(500, 3, 0.0, 42).unwrap();
        let b = gen_checkerboard(500, 3, 0.0, 42).unwrap();
        assert_eq!(
            a.features()
                .as_slice()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>(),
            b.features()
                .as_slice()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        );
        assert_eq!(a.labels(), b.labels());
        for i in 0..a.len() {
            let r = a.features().row(i);
            assert_eq!(a.labels()[i], checkerboard_label(r[0], r[1], 3));
        }
    }

    #[test]
    fn label_noise_flips_some_labels() {
        let clean = gen_checkerboard(2000, 2, 0.0, 5).unwrap();
        let noisy = gen_checkerboard(2000, 2, 0.2, 5).unwrap();
        let flipped = (0..noisy.len())
            .filter(|&i| {
                let r = noisy.features().row(i);
                noisy.labels()[i] != checkerboard_label(r[0], r[1], 2)
            })
            .count();
        assert!(flipped > 300 && flipped < 500, "{flipped}");
        assert_eq!(clean.len(), noisy.len());
    }

    #[test]
    fn standardize_hand_computed() {
        let f = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let ds = standardize(&Dataset::new(f, vec![0, 1, 0]).unwrap()).unwrap();
        // population stddev of [1,2,3] is sqrt(2/3)
        let expect = [-1.224_744_871, 0.0, 1.224_744_871];
        for i in 0..3 {
            assert!((ds.features()[(i, 0)] - expect[i]).abs() < 1e-4);
            assert_eq!(ds.features()[(i, 1)], 0.0);
        }
        let s = ds.standardization().unwrap();
        assert_eq!(
            s[1],
            ColumnScale {
                mean: 5.0,
                stddev: 1.0
            }
        );
        assert!((s[0].stddev - libm::sqrt(2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn standardize_is_idempotent() {
        let ds = standardize(&gen_checkerboard(300, 2, 0.0, 1).unwrap()).unwrap();
        let again = standardize(&ds).unwrap();
        assert!(ds.features().max_abs_diff(again.features()) < 1e-9);
        let (a, b) = (
            ds.standardization().unwrap(),
            again.standardization().unwrap(),
        );
        for (x, y) in a.iter().zip(b) {
            assert!((x.mean - y.mean).abs() < 1e-9 && (x.stddev - y.stddev).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite_features() {
        let f = Matrix::from_rows(&[vec![1.0], vec![f64::NAN]]).unwrap();
        assert_eq!(
            Dataset::new(f, vec![0, 1]),
            Err(Error::NonFinite { index: 1 })
        );
    }
}
