//! Datasets, synthetic drifting credit data, SMOTE, and temporal partitioning.
//!
//! CSV schema (read and written): a header row, a `default_flag` column with
//! values 0/1, an integer `orig_period` column, and any number of numeric
//! feature columns. Feature columns keep their header order.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::sigmoid;
use crate::parallel::{map_indexed, Execution};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const LABEL_COLUMN: &str = "default_flag";
pub const TIME_COLUMN: &str = "orig_period";

/// Row id carried by rows SMOTE creates.
pub const SYNTHETIC_ROW: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<u8>,
    pub time_index: Vec<i64>,
    pub feature_names: Vec<String>,
    /// Position of each row in the originally loaded or generated data;
    /// [`SYNTHETIC_ROW`] for oversampled rows. Survives subsetting.
    pub row_ids: Vec<u64>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<u8>,
        time_index: Vec<i64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if features.shape().len() != 2 || features.rows() != n || time_index.len() != n {
            return Err(Error::shape(format!(
                "dataset: features {:?}, {} labels, {} time indices",
                features.shape(),
                n,
                time_index.len()
            )));
        }
        if features.cols() != feature_names.len() {
            return Err(Error::shape(format!(
                "dataset: {} feature columns but {} names",
                features.cols(),
                feature_names.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::argument(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self {
            features,
            labels,
            time_index,
            feature_names,
            row_ids: (0..n as u64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| y as f64).collect()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&y| y == label).count()
    }

    pub fn default_rate(&self) -> f64 {
        self.count_label(1) as f64 / self.len().max(1) as f64
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.n_features();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
        }
        Dataset {
            features: Tensor::matrix(indices.len(), d, data).expect("subset shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            time_index: indices.iter().map(|&i| self.time_index[i]).collect(),
            feature_names: self.feature_names.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    pub fn distinct_periods(&self) -> Vec<i64> {
        self.time_index.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> Result<()> {
        let mut header = self.feature_names.clone();
        header.push(LABEL_COLUMN.into());
        header.push(TIME_COLUMN.into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.features.row(i).iter().map(|v| format!("{v:?}")).collect();
            row.push(self.labels[i].to_string());
            row.push(self.time_index[i].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Reads a CSV in the documented schema. Rows keep file order; missing or
/// unparsable cells are errors.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err(format!("missing column `{name}`")))
    };
    let label_col = find(LABEL_COLUMN)?;
    let time_col = find(TIME_COLUMN)?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_col && c != time_col).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut times = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        let cell = |c: usize| -> Result<&str> {
            match rec.get(c) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(data_err(format!("line {line}: missing value for `{}`", &headers[c]))),
            }
        };
        for &c in &feature_cols {
            let s = cell(c)?;
            let v: f64 = s
                .parse()
                .map_err(|_| data_err(format!("line {line}: `{}` = `{s}` is not numeric", &headers[c])))?;
            if !v.is_finite() {
                return Err(data_err(format!("line {line}: `{}` is not finite", &headers[c])));
            }
            data.push(v);
        }
        let s = cell(label_col)?;
        labels.push(match s {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(Error::argument(format!(
                    "{}: line {line}: `{LABEL_COLUMN}` must be 0 or 1, got `{s}`",
                    path.display()
                )))
            }
        });
        let s = cell(time_col)?;
        times.push(
            s.parse::<i64>()
                .map_err(|_| data_err(format!("line {line}: `{TIME_COLUMN}` = `{s}` is not an integer")))?,
        );
    }
    if labels.is_empty() {
        return Err(data_err("no data rows".into()));
    }
    let n = labels.len();
    Dataset::new(
        Tensor::matrix(n, feature_names.len(), data)?,
        labels,
        times,
        feature_names,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub oot: Vec<usize>,
    pub val_cut: i64,
    pub oot_cut: i64,
}

/// `train`: time < `val_cut`; `validation`: `[val_cut, oot_cut)`; `oot`: ≥ `oot_cut`.
/// Index lists are ascending row positions.
pub fn temporal_split(ds: &Dataset, val_cut: i64, oot_cut: i64) -> Result<TemporalSplit> {
    if val_cut >= oot_cut {
        return Err(Error::argument(format!(
            "temporal_split: val_cut {val_cut} must be before oot_cut {oot_cut}"
        )));
    }
    let mut split = TemporalSplit {
        train: Vec::new(),
        validation: Vec::new(),
        oot: Vec::new(),
        val_cut,
        oot_cut,
    };
    for (i, &t) in ds.time_index.iter().enumerate() {
        if t < val_cut {
            split.train.push(i);
        } else if t < oot_cut {
            split.validation.push(i);
        } else {
            split.oot.push(i);
        }
    }
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("oot", &split.oot)] {
        if part.is_empty() {
            return Err(Error::argument(format!(
                "temporal_split: {name} partition is empty for cuts ({val_cut}, {oot_cut})"
            )));
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteConfig {
    #[serde(default = "SmoteConfig::default_k")]
    pub k_neighbors: usize,
    /// Minority/majority ratio after oversampling.
    #[serde(default = "SmoteConfig::default_ratio")]
    pub target_ratio: f64,
    /// Measure neighbor distance on z-scored features.
    #[serde(default = "SmoteConfig::default_standardize")]
    pub standardize: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SmoteConfig {
    fn default_k() -> usize {
        5
    }
    fn default_ratio() -> f64 {
        1.0
    }
    fn default_standardize() -> bool {
        true
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k_neighbors == 0 {
            out.push("smote.k_neighbors must be at least 1".to_string());
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            out.push(format!("smote.target_ratio must be in (0, 1], got {}", self.target_ratio));
        }
        out
    }
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: Self::default_k(),
            target_ratio: Self::default_ratio(),
            standardize: Self::default_standardize(),
            seed: 0,
        }
    }
}

/// Where a synthetic SMOTE row came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    /// Row (in the input dataset) being interpolated from.
    pub donor: usize,
    /// Minority neighbor interpolated towards.
    pub neighbor: usize,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    /// Input rows first (unchanged, same order), synthetic rows appended.
    pub dataset: Dataset,
    pub origins: Vec<SyntheticOrigin>,
}

/// SMOTE with the seed from `cfg`.
pub fn smote_oversample(train: &Dataset, cfg: &SmoteConfig) -> Result<Dataset> {
    smote_with_rng(train, cfg, &mut RngStream::new(cfg.seed), Execution::default()).map(|o| o.dataset)
}

/// SMOTE: the rarer class is grown to `target_ratio × majority` rows (rounded)
/// by `x_new = x_i + u·(x_nn − x_i)`, `u ~ U[0,1)`, where `x_nn` is one of the
/// `k` nearest minority neighbors of donor `x_i`. Donors are taken round-robin
/// over a seeded permutation of the minority rows. Synthetic rows copy the
/// donor's label and `time_index`. Neighbor search runs per row in parallel.
pub fn smote_with_rng(
    train: &Dataset,
    cfg: &SmoteConfig,
    rng: &mut RngStream,
    exec: Execution,
) -> Result<SmoteOutput> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let ones = train.count_label(1);
    let zeros = train.len() - ones;
    let (minority_label, n_min, n_maj) = if ones <= zeros { (1u8, ones, zeros) } else { (0u8, zeros, ones) };
    if n_min < 2 {
        return Err(Error::argument(format!(
            "smote: minority class has {n_min} rows, need at least 2"
        )));
    }
    if cfg.k_neighbors >= n_min {
        return Err(Error::argument(format!(
            "smote: k_neighbors = {} needs more than {n_min} minority rows",
            cfg.k_neighbors
        )));
    }
    let target = (cfg.target_ratio * n_maj as f64).round() as usize;
    let n_new = target.saturating_sub(n_min);
    if n_new == 0 {
        return Ok(SmoteOutput {
            dataset: train.clone(),
            origins: Vec::new(),
        });
    }

    let minority: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] == minority_label).collect();
    let d = train.n_features();
    let scale = if cfg.standardize {
        feature_scales(&train.features)
    } else {
        vec![1.0; d]
    };
    let point = |i: usize| -> Vec<f64> {
        train.features.row(i).iter().zip(&scale).map(|(v, s)| v / s).collect()
    };
    let scaled: Vec<Vec<f64>> = minority.iter().map(|&i| point(i)).collect();
    let k = cfg.k_neighbors;
    let neighbors: Vec<Vec<usize>> = map_indexed(exec, minority.len(), |a| {
        let mut dists: Vec<(f64, usize)> = (0..minority.len())
            .filter(|&b| b != a)
            .map(|b| {
                let dist: f64 = scaled[a].iter().zip(&scaled[b]).map(|(x, y)| (x - y).powi(2)).sum();
                (dist, b)
            })
            .collect();
        dists.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut nearest: Vec<(f64, usize)> = dists[..k].to_vec();
        nearest.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        nearest.into_iter().map(|(_, b)| b).collect()
    });

    let mut order: Vec<usize> = (0..minority.len()).collect();
    rng.shuffle(&mut order);
    let mut data = train.features.data().to_vec();
    data.reserve(n_new * d);
    let mut labels = train.labels.clone();
    let mut times = train.time_index.clone();
    let mut row_ids = train.row_ids.clone();
    let mut origins = Vec::with_capacity(n_new);
    for j in 0..n_new {
        let a = order[j % order.len()];
        let b = neighbors[a][rng.below(k)];
        let (donor, neighbor) = (minority[a], minority[b]);
        let gap = rng.next_f64();
        let xi = train.features.row(donor);
        let xn = train.features.row(neighbor);
        data.extend(xi.iter().zip(xn).map(|(x, y)| x + gap * (y - x)));
        labels.push(minority_label);
        times.push(train.time_index[donor]);
        row_ids.push(SYNTHETIC_ROW);
        origins.push(SyntheticOrigin { donor, neighbor, gap });
    }
    let n = labels.len();
    Ok(SmoteOutput {
        dataset: Dataset {
            features: Tensor::matrix(n, d, data)?,
            labels,
            time_index: times,
            feature_names: train.feature_names.clone(),
            row_ids,
        },
        origins,
    })
}

/// Per-column standard deviation, with 1 for constant columns.
fn feature_scales(x: &Tensor) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    (0..d)
        .map(|c| {
            let mean = (0..n).map(|r| x.row(r)[c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (x.row(r)[c] - mean).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPair {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Time-ordered expanding-window folds.
///
/// Rows are sorted by `(time_index, row position)` and cut into `k` contiguous
/// folds whose sizes differ by at most one (earlier folds take the remainder).
/// Pair `j` (`j = 1..k−1`) trains on folds `1..=j` and validates on fold `j+1`.
pub fn time_based_folds(ds: &Dataset, k: usize) -> Result<Vec<FoldPair>> {
    if k < 2 {
        return Err(Error::argument(format!("time_based_folds: K must be at least 2, got {k}")));
    }
    if ds.len() < k {
        return Err(Error::argument(format!(
            "time_based_folds: {} rows cannot fill {k} folds",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| (ds.time_index[i], i));
    let (base, extra) = (ds.len() / k, ds.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(&order[start..start + size]);
        start += size;
    }
    Ok((1..k)
        .map(|j| FoldPair {
            train: folds[..j].concat(),
            validation: folds[j].to_vec(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftGenConfig {
    pub n_rows: usize,
    pub n_features: usize,
    pub base_default_rate: f64,
    /// Rotation of the true coefficient vector, in radians per 12 months of
    /// performance horizon, accumulated across the full period range.
    pub drift_magnitude: f64,
    pub n_periods: usize,
    pub horizon_months: u32,
    /// Norm of the true coefficient vector; controls attainable AUC.
    #[serde(default = "DriftGenConfig::default_signal")]
    pub signal: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DriftGenConfig {
    pub const HORIZONS: [u32; 3] = [12, 36, 60];

    fn default_signal() -> f64 {
        2.0
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_rows == 0 {
            out.push("data.synthetic.n_rows must be at least 1".into());
        }
        if self.n_features < 2 {
            out.push("data.synthetic.n_features must be at least 2".into());
        }
        if !(self.base_default_rate > 0.0 && self.base_default_rate < 1.0) {
            out.push(format!(
                "data.synthetic.base_default_rate must be in (0, 1), got {}",
                self.base_default_rate
            ));
        }
        if !(self.drift_magnitude >= 0.0 && self.drift_magnitude.is_finite()) {
            out.push(format!(
                "data.synthetic.drift_magnitude must be >= 0, got {}",
                self.drift_magnitude
            ));
        }
        if self.n_periods == 0 || self.n_periods > self.n_rows.max(1) {
            out.push(format!(
                "data.synthetic.n_periods must be in 1..=n_rows, got {}",
                self.n_periods
            ));
        }
        if !Self::HORIZONS.contains(&self.horizon_months) {
            out.push(format!(
                "data.synthetic.horizon_months must be one of 12, 36, 60, got {}",
                self.horizon_months
            ));
        }
        if !(self.signal > 0.0 && self.signal.is_finite()) {
            out.push(format!("data.synthetic.signal must be > 0, got {}", self.signal));
        }
        out
    }

    /// Total rotation angle between the first and last period.
    pub fn total_rotation(&self) -> f64 {
        self.drift_magnitude * self.horizon_months as f64 / 12.0
    }
}

impl Default for DriftGenConfig {
    fn default() -> Self {
        Self {
            n_rows: 20_000,
            n_features: 8,
            base_default_rate: 0.2,
            drift_magnitude: 0.3,
            n_periods: 10,
            horizon_months: 12,
            signal: Self::default_signal(),
            seed: 0,
        }
    }
}

/// The coefficient vector and intercept used for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Synthetic credit data with concept drift.
///
/// Features are i.i.d. standard normal. Rows are spread evenly over periods
/// `0..n_periods` in time order. In period `t` the default probability is
/// `σ(w(t)·x + b(t))` where `w(t)` has norm `signal` and rotates in a fixed
/// random plane by `total_rotation · t/(n_periods−1)`; `b(t)` is bisected so
/// the mean default probability of that period's rows equals
/// `base_default_rate`. Labels are Bernoulli draws.
pub fn synthesize_credit_data(cfg: &DriftGenConfig) -> Result<Dataset> {
    synthesize_with_models(cfg).map(|(ds, _)| ds)
}

pub fn synthesize_with_models(cfg: &DriftGenConfig) -> Result<(Dataset, Vec<PeriodModel>)> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let root = RngStream::new(cfg.seed);
    let d = cfg.n_features;

    let mut dir_rng = root.derive(0);
    let mut u: Vec<f64> = (0..d).map(|_| dir_rng.standard_normal()).collect();
    normalize(&mut u);
    let mut w: Vec<f64> = (0..d).map(|_| dir_rng.standard_normal()).collect();
    let proj: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
    for (wi, ui) in w.iter_mut().zip(&u) {
        *wi -= proj * ui;
    }
    normalize(&mut w);

    let mut feat_rng = root.derive(1);
    let data: Vec<f64> = (0..cfg.n_rows * d).map(|_| feat_rng.standard_normal()).collect();
    let features = Tensor::matrix(cfg.n_rows, d, data)?;
    let time_index: Vec<i64> = (0..cfg.n_rows)
        .map(|r| (r * cfg.n_periods / cfg.n_rows) as i64)
        .collect();

    let mut label_rng = root.derive(2);
    let mut labels = vec![0u8; cfg.n_rows];
    let mut models = Vec::with_capacity(cfg.n_periods);
    for period in 0..cfg.n_periods {
        let frac = if cfg.n_periods > 1 {
            period as f64 / (cfg.n_periods - 1) as f64
        } else {
            0.0
        };
        let (s, c) = (cfg.total_rotation() * frac).sin_cos();
        let weights: Vec<f64> = u.iter().zip(&w).map(|(a, b)| cfg.signal * (c * a + s * b)).collect();
        let rows: Vec<usize> = (0..cfg.n_rows).filter(|&r| time_index[r] == period as i64).collect();
        let scores: Vec<f64> = rows
            .iter()
            .map(|&r| features.row(r).iter().zip(&weights).map(|(x, w)| x * w).sum())
            .collect();
        let intercept = bisect_intercept(&scores, cfg.base_default_rate);
        for (&r, &z) in rows.iter().zip(&scores) {
            labels[r] = u8::from(label_rng.bernoulli(sigmoid(z + intercept)));
        }
        models.push(PeriodModel { weights, intercept });
    }
    let names = (0..d).map(|i| format!("x{i}")).collect();
    Ok((Dataset::new(features, labels, time_index, names)?, models))
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= n;
    }
}

/// Intercept `b` with mean σ(score + b) = `rate`; the mean is monotone in `b`.
fn bisect_intercept(scores: &[f64], rate: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let mean = |b: f64| scores.iter().map(|&z| sigmoid(z + b)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(times: &[i64], labels: &[u8]) -> Dataset {
        let n = times.len();
        let data = (0..n * 2).map(|v| v as f64 * 0.5).collect();
        Dataset::new(
            Tensor::matrix(n, 2, data).unwrap(),
            labels.to_vec(),
            times.to_vec(),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn write_tmp(contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::File::create(&path).unwrap().write_all(contents.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn load_well_formed() {
        let (_d, p) = write_tmp("ltv,default_flag,fico,orig_period\n0.8,0,700,3\n0.95,1,610,3\n0.5,0,780,4\n");
        let ds = load_csv(&p).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_names, ["ltv", "fico"]);
        assert_eq!(ds.features.row(1), &[0.95, 610.0]);
        assert_eq!(ds.labels, [0, 1, 0]);
        assert_eq!(ds.time_index, [3, 3, 4]);
    }

    #[test]
    fn load_rejects_bad_files() {
        let (_d, p) = write_tmp("x,default_flag,orig_period\n1.0,2,1\n");
        assert!(matches!(load_csv(&p), Err(Error::Argument(_))));
        let (_d, p) = write_tmp("x,orig_period\n1.0,1\n");
        assert!(load_csv(&p).unwrap_err().to_string().contains("default_flag"));
        let (_d, p) = write_tmp("x,default_flag,orig_period\nabc,0,1\n");
        assert!(load_csv(&p).unwrap_err().to_string().contains("not numeric"));
        let (_d, p) = write_tmp("x,default_flag,orig_period\n,0,1\n");
        assert!(load_csv(&p).unwrap_err().to_string().contains("missing value"));
        let (_d, p) = write_tmp("x,default_flag,orig_period\n");
        assert!(load_csv(&p).is_err());
        let (_d, p) = write_tmp("");
        assert!(load_csv(&p).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = synthesize_credit_data(&DriftGenConfig {
            n_rows: 50,
            n_features: 3,
            ..DriftGenConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        ds.write_csv(&path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.feature_names, ds.feature_names);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.time_index, ds.time_index);
        for (a, b) in back.features.data().iter().zip(ds.features.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn split_by_definition() {
        let times: Vec<i64> = (1..=10).collect();
        let ds = toy(&times, &[0; 10]);
        let s = temporal_split(&ds, 5, 8).unwrap();
        assert_eq!(s.train, [0, 1, 2, 3]);
        assert_eq!(s.validation, [4, 5, 6]);
        assert_eq!(s.oot, [7, 8, 9]);
    }

    #[test]
    fn split_errors() {
        let ds = toy(&[3; 6], &[0; 6]);
        assert!(matches!(temporal_split(&ds, 2, 5), Err(Error::Argument(_))));
        assert!(temporal_split(&ds, 5, 5).is_err());
    }

    #[test]
    fn split_order_independent() {
        let times = [7, 2, 9, 5, 1, 8, 3, 6, 10, 4];
        let shuffled = toy(&times, &[0; 10]);
        let s = temporal_split(&shuffled, 5, 8).unwrap();
        let set = |ix: &[usize]| ix.iter().map(|&i| times[i]).collect::<BTreeSet<_>>();
        assert_eq!(set(&s.train), (1..=4).collect());
        assert_eq!(set(&s.validation), (5..=7).collect());
        assert_eq!(set(&s.oot), (8..=10).collect());
    }

    #[test]
    fn folds_by_definition() {
        let times: Vec<i64> = (1..=8).collect();
        let ds = toy(&times, &[0; 8]);
        let folds = time_based_folds(&ds, 4).unwrap();
        assert_eq!(folds.len(), 3);
        assert_eq!(folds[0].train, [0, 1]);
        assert_eq!(folds[0].validation, [2, 3]);
        assert_eq!(folds[2].train, [0, 1, 2, 3, 4, 5]);
        assert_eq!(folds[2].validation, [6, 7]);
    }

    #[test]
    fn folds_spread_remainder_early() {
        let ds = toy(&[0, 0, 1, 1, 2, 2, 3], &[0; 7]);
        let folds = time_based_folds(&ds, 3).unwrap();
        assert_eq!(folds[0].train.len(), 3);
        assert_eq!(folds[0].validation.len(), 2);
        assert_eq!(folds[1].validation.len(), 2);
        assert!(time_based_folds(&ds, 1).is_err());
        assert!(time_based_folds(&ds, 8).is_err());
    }

    fn two_plus_eight() -> Dataset {
        let mut data = vec![0.0, 0.0, 4.0, -2.0];
        for i in 0..8 {
            data.extend([i as f64, 10.0 + i as f64]);
        }
        let mut labels = vec![1, 1];
        labels.extend([0; 8]);
        Dataset::new(
            Tensor::matrix(10, 2, data).unwrap(),
            labels,
            vec![1, 2, 0, 0, 1, 1, 2, 2, 3, 3],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn smote_two_minority_points() {
        let ds = two_plus_eight();
        let cfg = SmoteConfig {
            k_neighbors: 1,
            seed: 3,
            ..SmoteConfig::default()
        };
        let out = smote_oversample(&ds, &cfg).unwrap();
        assert_eq!(out.len(), 16);
        assert_eq!(out.count_label(1), 8);
        assert_eq!(out.subset(&(0..10).collect::<Vec<_>>()).features, ds.features);
        for r in 10..16 {
            let x = out.features.row(r);
            // segment (0,0)–(4,−2): x1 = −x0/2 with x0 in [0,4]
            assert!((0.0..=4.0).contains(&x[0]));
            assert!((x[1] + 0.5 * x[0]).abs() < 1e-12);
            assert!(out.time_index[r] == 1 || out.time_index[r] == 2);
            assert_eq!(out.row_ids[r], SYNTHETIC_ROW);
        }
    }

    #[test]
    fn smote_identical_minority_rows() {
        let mut ds = two_plus_eight();
        ds.features.data_mut()[2] = 0.0;
        ds.features.data_mut()[3] = 0.0;
        let out = smote_oversample(&ds, &SmoteConfig { k_neighbors: 1, ..SmoteConfig::default() }).unwrap();
        for r in 10..out.len() {
            assert_eq!(out.features.row(r), &[0.0, 0.0]);
        }
    }

    #[test]
    fn smote_zero_gap_reproduces_donor() {
        let ds = two_plus_eight();
        let cfg = SmoteConfig { k_neighbors: 1, ..SmoteConfig::default() };
        // find a seed whose first gap draw rounds to exactly the donor is not
        // practical; check the recorded gap reconstructs every row instead
        let out = smote_with_rng(&ds, &cfg, &mut RngStream::new(9), Execution::Sequential).unwrap();
        for (j, o) in out.origins.iter().enumerate() {
            let xi = ds.features.row(o.donor);
            let xn = ds.features.row(o.neighbor);
            let row = out.dataset.features.row(10 + j);
            for c in 0..2 {
                assert_eq!(row[c], xi[c] + o.gap * (xn[c] - xi[c]));
                assert_eq!(xi[c] + 0.0 * (xn[c] - xi[c]), xi[c]);
            }
        }
    }

    #[test]
    fn smote_errors() {
        let ds = toy(&[0, 1, 2, 3], &[1, 0, 0, 0]);
        assert!(matches!(smote_oversample(&ds, &SmoteConfig::default()), Err(Error::Argument(_))));
        let ds = two_plus_eight();
        assert!(smote_oversample(&ds, &SmoteConfig { k_neighbors: 2, ..SmoteConfig::default() }).is_err());
        let bad = SmoteConfig { target_ratio: 1.5, ..SmoteConfig::default() };
        assert!(matches!(smote_oversample(&ds, &bad), Err(Error::Validation(_))));
    }

    #[test]
    fn smote_parallel_matches_sequential() {
        let ds = synthesize_credit_data(&DriftGenConfig {
            n_rows: 600,
            n_features: 4,
            ..DriftGenConfig::default()
        })
        .unwrap();
        let cfg = SmoteConfig::default();
        let a = smote_with_rng(&ds, &cfg, &mut RngStream::new(1), Execution::Sequential).unwrap();
        let b = smote_with_rng(&ds, &cfg, &mut RngStream::new(1), Execution::Parallel).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn generator_rates_and_determinism() {
        let cfg = DriftGenConfig {
            n_rows: 20_000,
            base_default_rate: 0.5,
            seed: 4,
            ..DriftGenConfig::default()
        };
        let ds = synthesize_credit_data(&cfg).unwrap();
        assert!((0.48..=0.52).contains(&ds.default_rate()), "{}", ds.default_rate());
        assert_eq!(ds, synthesize_credit_data(&cfg).unwrap());
        let low = synthesize_credit_data(&DriftGenConfig { base_default_rate: 0.1, ..cfg.clone() }).unwrap();
        assert!((low.default_rate() - 0.1).abs() <= 0.02);
        assert_eq!(ds.distinct_periods(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn generator_rotation_grows_with_horizon() {
        let mut angles = Vec::new();
        for h in DriftGenConfig::HORIZONS {
            let cfg = DriftGenConfig { horizon_months: h, n_rows: 200, ..DriftGenConfig::default() };
            let (_, models) = synthesize_with_models(&cfg).unwrap();
            let (a, b) = (&models[0].weights, &models.last().unwrap().weights);
            let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (cfg.signal * cfg.signal);
            angles.push(cos.clamp(-1.0, 1.0).acos());
        }
        assert!(angles[0] < angles[1] && angles[1] < angles[2]);
        let cfg = DriftGenConfig { drift_magnitude: 0.0, n_rows: 200, ..DriftGenConfig::default() };
        let (_, models) = synthesize_with_models(&cfg).unwrap();
        assert!(models.iter().all(|m| m.weights == models[0].weights));
    }
}
