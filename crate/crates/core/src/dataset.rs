//! Dataset container, z-score normalization, stratified k-fold splitting and
//! the irrelevant-feature injection used by the robustness experiments.
//!
//! The CSV layout is a header row of feature names plus a final `label`
//! column whose values are `+1`/`-1`.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset needs at least 2 samples and 1 feature, got {n} x {j}")]
    TooSmall { n: usize, j: usize },
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("non-finite value in feature column {column} (row {row})")]
    NonFinite { column: usize, row: usize },
    #[error("label at row {row} must be +1 or -1, got {value}")]
    BadLabel { row: usize, value: String },
    #[error("duplicate feature name `{0}`")]
    DuplicateName(String),
    #[error("feature dimension mismatch: dataset has {data}, stats have {stats}")]
    DimensionMismatch { data: usize, stats: usize },
    #[error("cannot split {n} samples into {k} folds")]
    BadFoldCount { n: usize, k: usize },
    #[error("csv parse failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv has no `label` column (last header must be `label`)")]
    MissingLabelColumn,
}

/// N samples by J features with ±1 labels. The unit exchanged among modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<i8>,
    feature_names: Vec<String>,
    n_features: usize,
}

impl Dataset {
    /// Build from row-major features. Validates every invariant: shape,
    /// finite values, ±1 labels, distinct names.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<i8>,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let j = feature_names.len();
        let n = labels.len();
        if n < 2 || j < 1 {
            return Err(DatasetError::TooSmall { n, j });
        }
        if features.len() != n * j {
            return Err(DatasetError::RaggedRow {
                row: features.len() / j.max(1),
                got: features.len() % j.max(1),
                expected: j,
            });
        }
        for (idx, &v) in features.iter().enumerate() {
            if !v.is_finite() {
                return Err(DatasetError::NonFinite { column: idx % j, row: idx / j });
            }
        }
        for (row, &y) in labels.iter().enumerate() {
            if y != 1 && y != -1 {
                return Err(DatasetError::BadLabel { row, value: y.to_string() });
            }
        }
        for (i, name) in feature_names.iter().enumerate() {
            if feature_names[..i].contains(name) {
                return Err(DatasetError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { features, labels, feature_names, n_features: j })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.features[n * self.n_features..(n + 1) * self.n_features]
    }

    pub fn label(&self, n: usize) -> i8 {
        self.labels[n]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Extract the sub-dataset given by `indices` (kept in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset, DatasetError> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.feature_names.clone())
    }

    /// Class counts as (positives, negatives).
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (pos, self.labels.len() - pos)
    }
}

/// Per-column population mean and population standard deviation, always
/// computed from the training portion only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormalizationStats {
    /// Stats that leave data unchanged, for pipelines that normalized upstream.
    pub fn identity(j: usize) -> Self {
        Self { means: vec![0.0; j], stds: vec![1.0; j] }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Normalize a single raw row in place: l' = (l - mean)/std, std-zero
    /// columns map to 0.
    pub fn apply_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if self.stds[j] == 0.0 { 0.0 } else { (*v - self.means[j]) / self.stds[j] };
        }
    }
}

/// Assignment of each sample to one of k folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    /// Sample indices of fold `f`, ascending.
    pub fn fold(&self, f: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == f)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sample indices outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != f)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Population mean and standard deviation of every column.
pub fn zscore_fit(train: &Dataset) -> Result<NormalizationStats, DatasetError> {
    let n = train.n_samples() as f64;
    let j = train.n_features();
    let mut means = vec![0.0; j];
    for i in 0..train.n_samples() {
        for (m, &v) in means.iter_mut().zip(train.row(i)) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut vars = vec![0.0; j];
    for i in 0..train.n_samples() {
        for (c, (s, &v)) in vars.iter_mut().zip(train.row(i)).enumerate() {
            if !v.is_finite() {
                return Err(DatasetError::NonFinite { column: c, row: i });
            }
            let d = v - means[c];
            *s += d * d;
        }
    }
    let stds = vars.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(NormalizationStats { means, stds })
}

/// Replace every value l by (l - mean)/std; std-zero columns become 0.
pub fn zscore_apply(data: &Dataset, stats: &NormalizationStats) -> Result<Dataset, DatasetError> {
    if stats.dim() != data.n_features() {
        return Err(DatasetError::DimensionMismatch { data: data.n_features(), stats: stats.dim() });
    }
    let j = data.n_features();
    let mut features = Vec::with_capacity(data.n_samples() * j);
    for i in 0..data.n_samples() {
        let mut row = data.row(i).to_vec();
        stats.apply_row(&mut row);
        features.append(&mut row);
    }
    Dataset::new(features, data.labels.clone(), data.feature_names.clone())
}

/// Stratified k-fold assignment, deterministic for a given seed. Fold sizes
/// differ by at most one sample overall and per class.
pub fn kfold_split(data: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment, DatasetError> {
    let n = data.n_samples();
    if k < 2 || n < k {
        return Err(DatasetError::BadFoldCount { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![usize::MAX; n];
    let mut fold_loads = vec![0usize; k];
    for class in [1i8, -1] {
        let mut members: Vec<usize> =
            (0..n).filter(|&i| data.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        // Hand the class out round-robin over folds ordered by current load,
        // which keeps both the per-class and the overall spread within one.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&f| fold_loads[f]);
        for (pos, &sample) in members.iter().enumerate() {
            let fold = order[pos % k];
            assignment[sample] = fold;
            fold_loads[fold] += 1;
        }
    }
    Ok(FoldAssignment { k, assignment })
}

/// Append `count` i.i.d. standard-normal noise columns named `noise_###`.
/// Original columns and labels are untouched.
pub fn inject_irrelevant_features(
    data: &Dataset,
    count: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if count == 0 {
        return Ok(data.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.n_samples();
    let j = data.n_features();
    let mut features = Vec::with_capacity(n * (j + count));
    let mut noise = vec![0.0; n * count];
    for v in &mut noise {
        *v = rng.sample(StandardNormal);
    }
    for i in 0..n {
        features.extend_from_slice(data.row(i));
        features.extend_from_slice(&noise[i * count..(i + 1) * count]);
    }
    let mut names = data.feature_names.clone();
    for c in 0..count {
        let mut s = String::new();
        let _ = write!(s, "noise_{:03}", c + 1);
        names.push(s);
    }
    Dataset::new(features, data.labels.clone(), names)
}

/// Stratified train/test split; returns (train indices, test indices),
/// each ascending. `fraction` is the train share.
pub fn stratified_split(
    data: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    assert!(fraction > 0.0 && fraction < 1.0, "split fraction must be in (0,1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.n_samples();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [1i8, -1] {
        let mut members: Vec<usize> =
            (0..n).filter(|&i| data.labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * fraction).round() as usize;
        let n_train = n_train.min(members.len());
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Read the CSV dataset format: header of feature names plus final `label`.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().last() != Some("label") {
        return Err(DatasetError::MissingLabelColumn);
    }
    let j = headers.len() - 1;
    let feature_names: Vec<String> = headers.iter().take(j).map(str::to_owned).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != j + 1 {
            return Err(DatasetError::RaggedRow { row, got: record.len(), expected: j + 1 });
        }
        for (c, field) in record.iter().take(j).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| DatasetError::NonFinite { column: c, row })?;
            features.push(v);
        }
        let label = match record[j].trim() {
            "+1" | "1" => 1i8,
            "-1" => -1i8,
            other => return Err(DatasetError::BadLabel { row, value: other.to_string() }),
        };
        labels.push(label);
    }
    Dataset::new(features, labels, feature_names)
}

pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Dataset, DatasetError> {
    read_csv(std::fs::File::open(path)?)
}

/// Write the CSV dataset format. Floats use the shortest round-trip
/// representation, so identical datasets produce byte-identical files.
pub fn write_csv<W: Write>(data: &Dataset, mut writer: W) -> Result<(), DatasetError> {
    let mut header = data.feature_names().join(",");
    header.push_str(",label\n");
    writer.write_all(header.as_bytes())?;
    let mut line = String::new();
    for i in 0..data.n_samples() {
        line.clear();
        for v in data.row(i) {
            let _ = write!(line, "{v},");
        }
        let _ = write!(line, "{}\n", if data.label(i) == 1 { "+1" } else { "-1" });
        writer.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn write_csv_path<P: AsRef<Path>>(data: &Dataset, path: P) -> Result<(), DatasetError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(data, &mut file)?;
    file.flush()?;
    Ok(())
}
