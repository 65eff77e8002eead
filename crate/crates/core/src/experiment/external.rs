//! Scoring prediction files produced by other models.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};

fn data_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a two-column CSV `id,<value_column>` into an id-keyed map.
/// `value_column` may be any of `names`.
fn read_keyed(path: &Path, names: &[&str]) -> Result<BTreeMap<String, f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| data_err(path, e.to_string()))?;
    let header = r.headers().map_err(|e| data_err(path, e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let id_col = col("id").ok_or_else(|| data_err(path, "missing `id` column"))?;
    let val_col = names
        .iter()
        .find_map(|n| col(n))
        .ok_or_else(|| data_err(path, format!("missing value column (one of {names:?})")))?;
    let mut out = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| data_err(path, e.to_string()))?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let raw = rec.get(val_col).unwrap_or("").trim();
        let v: f64 = raw
            .parse()
            .map_err(|_| data_err(path, format!("row {}: cannot parse `{raw}`", line + 2)))?;
        if !v.is_finite() {
            return Err(data_err(path, format!("row {}: non-finite value", line + 2)));
        }
        if out.insert(id.clone(), v).is_some() {
            return Err(data_err(path, format!("duplicate id `{id}`")));
        }
    }
    if out.is_empty() {
        return Err(data_err(path, "no rows"));
    }
    Ok(out)
}

/// `id,score` file.
pub fn read_scores_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    read_keyed(path, &["score"])
}

/// `id,label` file (the label column may also be named `default_flag`).
pub fn read_labels_csv(path: &Path) -> Result<BTreeMap<String, u8>> {
    read_keyed(path, &["label", crate::data::LABEL_COLUMN])?
        .into_iter()
        .map(|(id, v)| match v {
            0.0 => Ok((id, 0)),
            1.0 => Ok((id, 1)),
            other => Err(Error::argument(format!(
                "{}: label {other} for id `{id}` is not 0 or 1",
                path.display()
            ))),
        })
        .collect()
}

/// Metrics for externally produced scores, joined to labels by id.
/// Both files must contain exactly the same ids; row order is irrelevant.
pub fn score_external(predictions: &Path, labels: &Path, threshold: f64) -> Result<MetricsReport> {
    let scores = read_scores_csv(predictions)?;
    let truth = read_labels_csv(labels)?;
    if let Some(id) = scores.keys().find(|id| !truth.contains_key(*id)) {
        return Err(data_err(labels, format!("no label for id `{id}`")));
    }
    if let Some(id) = truth.keys().find(|id| !scores.contains_key(*id)) {
        return Err(data_err(predictions, format!("no score for id `{id}`")));
    }
    let s: Vec<f64> = scores.values().copied().collect();
    let y: Vec<u8> = truth.values().copied().collect();
    let mut report = evaluate(&s, &y, threshold).map_err(|e| Error::argument(format!("scoring {}: {e}", predictions.display())))?;
    report.external = true;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn files(scores: &str, labels: &str) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let l = dir.path().join("l.csv");
        fs::write(&p, scores).unwrap();
        fs::write(&l, labels).unwrap();
        (dir, p, l)
    }

    #[test]
    fn scores_equal_to_labels_are_perfect() {
        let (_d, p, l) = files("id,score\na,1\nb,0\nc,1\n", "id,label\na,1\nb,0\nc,1\n");
        let r = score_external(&p, &l, 0.5).unwrap();
        assert!(r.external);
        assert_eq!(r.values(), [1.0; 5]);
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let (_d, p, l) = files("id,score\na,0.5\nb,0.5\nc,0.5\n", "id,label\na,1\nb,0\nc,1\n");
        assert_eq!(score_external(&p, &l, 0.5).unwrap().auc, 0.5);
    }

    #[test]
    fn alignment_is_by_id() {
        let (_d, p1, l) = files("id,score\na,0.9\nb,0.2\nc,0.6\nd,0.4\n", "id,label\nd,0\nc,1\nb,0\na,1\n");
        let (_d2, p2, _) = files("id,score\nc,0.6\nd,0.4\na,0.9\nb,0.2\n", "id,label\n");
        assert_eq!(score_external(&p1, &l, 0.5).unwrap(), score_external(&p2, &l, 0.5).unwrap());
    }

    #[test]
    fn id_mismatch_rejected() {
        let (_d, p, l) = files("id,score\na,0.9\nb,0.2\n", "id,label\na,1\nc,0\n");
        assert!(matches!(score_external(&p, &l, 0.5), Err(Error::Data { .. })));
        let (_d, p, l) = files("id,score\na,0.9\n", "id,label\na,1\nb,0\n");
        assert!(score_external(&p, &l, 0.5).is_err());
    }

    #[test]
    fn single_class_labels_rejected() {
        let (_d, p, l) = files("id,score\na,0.9\nb,0.2\n", "id,label\na,1\nb,1\n");
        assert!(matches!(score_external(&p, &l, 0.5), Err(Error::Argument(_))));
    }
}
