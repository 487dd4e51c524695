//! Classification datasets: a seeded Gaussian-mixture generator and a CSV reader.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tekfac::optimizer::Split;
use tekfac::Matrix;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    /// `Split::Train` or `Split::Test` per row.
    splits: Vec<Split>,
}

impl Dataset {
    /// Builds a dataset with every row tagged as training data.
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let bad = |message: String| Err(HarnessError::Config(message));
        if features.nrows() != labels.len() {
            return bad(format!(
                "{} feature rows for {} labels",
                features.nrows(),
                labels.len()
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return bad(format!("label {l} outside [0, {class_count})"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return bad("features contain non-finite values".into());
        }
        let splits = vec![Split::Train; labels.len()];
        Ok(Self {
            features,
            labels,
            class_count,
            splits,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Re-tags rows with a stratified split: within each class, a seeded shuffle
    /// sends `round(fraction · count)` rows to the test set.
    pub fn with_stratified_split(mut self, test_fraction: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.splits = vec![Split::Train; self.len()];
        for class in 0..self.class_count {
            let mut rows: Vec<usize> = (0..self.len())
                .filter(|&i| self.labels[i] == class)
                .collect();
            rows.shuffle(&mut rng);
            let n_test = (test_fraction * rows.len() as f64).round() as usize;
            for &r in &rows[..n_test.min(rows.len())] {
                self.splits[r] = Split::Test;
            }
        }
        self
    }

    /// Rows of one split, in their original order.
    pub fn subset(&self, split: Split) -> (Matrix, Vec<usize>) {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect();
        (
            self.features.select_rows(&rows),
            rows.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Gaussian-mixture generator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub features: usize,
    pub samples: usize,
    pub separation: f64,
    pub noise: f64,
    /// Gaussian components per class.
    pub clusters_per_class: usize,
    /// Feature `j` of `d` is multiplied by `spread^(j / (d - 1))`; 1 keeps features isotropic.
    pub scale_spread: f64,
    pub test_fraction: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.samples < self.classes {
            return bad(format!(
                "samples ({}) must be >= classes ({})",
                self.samples, self.classes
            ));
        }
        if self.clusters_per_class == 0 {
            return bad("clusters_per_class must be >= 1".into());
        }
        if self.features == 0 {
            return bad("features must be >= 1".into());
        }
        if !(self.noise > 0.0 && self.noise.is_finite())
            || !(self.separation >= 0.0 && self.separation.is_finite())
        {
            return bad("noise must be > 0 and separation >= 0".into());
        }
        if !(self.scale_spread > 0.0 && self.scale_spread.is_finite()) {
            return bad(format!(
                "scale_spread must be > 0, got {}",
                self.scale_spread
            ));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!(
                "test_fraction must lie in [0, 1), got {}",
                self.test_fraction
            ));
        }
        Ok(())
    }
}

/// Each class is a mixture of `clusters_per_class` components. A component has
/// mean `separation · m / ‖m‖` with `m` standard normal and isotropic noise of
/// scale `noise`; features are then rescaled by `scale_spread`. Samples are
/// dealt to classes round-robin and to a class's components round-robin.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..spec.classes * spec.clusters_per_class)
        .map(|_| {
            let m: Vec<f64> = (0..spec.features)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let norm = m
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            m.iter().map(|v| v * spec.separation / norm).collect()
        })
        .collect();
    let labels: Vec<usize> = (0..spec.samples).map(|i| i % spec.classes).collect();
    let scales: Vec<f64> = (0..spec.features)
        .map(|j| match spec.features {
            1 => 1.0,
            d => spec.scale_spread.powf(j as f64 / (d - 1) as f64),
        })
        .collect();
    let mut features = Matrix::zeros(spec.samples, spec.features);
    for (i, &c) in labels.iter().enumerate() {
        let component = c * spec.clusters_per_class + (i / spec.classes) % spec.clusters_per_class;
        for j in 0..spec.features {
            let z: f64 = rng.sample(StandardNormal);
            features[(i, j)] = scales[j] * (means[component][j] + spec.noise * z);
        }
    }
    let split_seed = rng.random();
    Ok(Dataset::new(features, labels, spec.classes)?
        .with_stratified_split(spec.test_fraction, split_seed))
}

/// Reads `label,f0,f1,...` rows. The class count is `classes` when given
/// (labels outside it are errors), otherwise one more than the largest label.
pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |line: u64, message: String| HarnessError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = reader
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(HarnessError::Dataset {
            path: path.to_path_buf(),
            message: "file is empty".into(),
        });
    }
    if &header[0] != "label" || header.len() < 2 {
        return Err(csv_err(1, "header must be `label,f0,f1,...`".into()));
    }
    let width = header.len() - 1;

    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width + 1 {
            return Err(csv_err(
                line,
                format!("expected {} fields, found {}", width + 1, record.len()),
            ));
        }
        let label: usize = record[0].parse().map_err(|_| {
            csv_err(
                line,
                format!("label `{}` is not a non-negative integer", &record[0]),
            )
        })?;
        if let Some(k) = classes {
            if label >= k {
                return Err(csv_err(line, format!("label {label} outside [0, {k})")));
            }
        }
        labels.push(label);
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| csv_err(line, format!("feature f{j} `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(csv_err(line, format!("feature f{j} is not finite")));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(HarnessError::Dataset {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    let class_count = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let features = Matrix::from_row_slice(labels.len(), width, &values);
    Dataset::new(features, labels, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            classes: 3,
            features: 4,
            samples: 90,
            separation: 3.0,
            noise: 1.0,
            clusters_per_class: 1,
            scale_spread: 1.0,
            test_fraction: 0.2,
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(
            generate_synthetic(&spec(), 5).unwrap(),
            generate_synthetic(&spec(), 5).unwrap()
        );
        assert_ne!(
            generate_synthetic(&spec(), 5).unwrap(),
            generate_synthetic(&spec(), 6).unwrap()
        );
    }

    #[test]
    fn single_class_rejected() {
        let s = SyntheticSpec {
            classes: 1,
            ..spec()
        };
        assert!(matches!(
            generate_synthetic(&s, 0),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn split_is_stratified() {
        let d = generate_synthetic(&spec(), 1).unwrap();
        let (_, test) = d.subset(Split::Test);
        let (train_x, train) = d.subset(Split::Train);
        assert_eq!(test.len(), 18);
        assert_eq!(train_x.nrows(), 72);
        for c in 0..3 {
            assert_eq!(test.iter().filter(|&&l| l == c).count(), 6);
            assert_eq!(train.iter().filter(|&&l| l == c).count(), 24);
        }
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        let x = Matrix::zeros(2, 2);
        assert!(Dataset::new(x.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(x.clone(), vec![0], 2).is_err());
        let mut y = x;
        y[(0, 0)] = f64::NAN;
        assert!(Dataset::new(y, vec![0, 1], 2).is_err());
    }
}
