//! Dataset manifest loading with metadata-based quality filtering.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{Dataset, Label};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{file}: missing required column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("cannot read manifest {file}: {reason}")]
    UnreadableFile { file: String, reason: String },
    #[error("{file} row {row}: unknown label {value:?}")]
    UnknownLabel { file: String, row: usize, value: String },
    #[error("{file} row {row}: unknown dataset {value:?}")]
    UnknownDataset { file: String, row: usize, value: String },
    #[error("{file} row {row}: column {column} is not a number: {value:?}")]
    BadNumber {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub dataset: Dataset,
    pub label: Label,
    pub cough_detected: Option<f64>,
    pub snr_db: Option<f64>,
    pub expert_quality: Option<String>,
}

/// Header names of the manifest columns, so differing metadata exports can be
/// mapped without rewriting the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnNames {
    pub path: String,
    pub dataset: String,
    pub label: String,
    pub cough_detected: String,
    pub snr_db: String,
    pub expert_quality: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        Self {
            path: "path".into(),
            dataset: "dataset".into(),
            label: "label".into(),
            cough_detected: "cough_detected".into(),
            snr_db: "snr_db".into(),
            expert_quality: "expert_quality".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityFilter {
    pub enabled: bool,
    /// Applied only to rows that carry a cough_detected value.
    pub min_cough_detected: Option<f64>,
    /// Applied only to rows that carry an snr_db value.
    pub min_snr_db: Option<f64>,
    /// When non-empty, rows with an expert_quality outside this list are dropped.
    pub allowed_expert_quality: Vec<String>,
    pub columns: ColumnNames,
}

impl Default for QualityFilter {
    fn default() -> Self {
        Self {
            enabled: true,
            min_cough_detected: Some(0.8),
            min_snr_db: None,
            allowed_expert_quality: Vec::new(),
            columns: ColumnNames::default(),
        }
    }
}

/// Kept/dropped tallies; `kept + sum(dropped) == total`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub total: usize,
    pub kept: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl ManifestSummary {
    pub fn merge(&mut self, other: &ManifestSummary) {
        self.total += other.total;
        self.kept += other.kept;
        for (k, v) in &other.dropped {
            *self.dropped.entry(k.clone()).or_default() += v;
        }
    }
}

impl QualityFilter {
    fn rejection(&self, e: &ManifestEntry) -> Option<&'static str> {
        if !e.path.is_file() {
            return Some("missing_file");
        }
        if !self.enabled {
            return None;
        }
        if let (Some(min), Some(v)) = (self.min_cough_detected, e.cough_detected) {
            if v < min {
                return Some("cough_detected");
            }
        }
        if let (Some(min), Some(v)) = (self.min_snr_db, e.snr_db) {
            if v < min {
                return Some("snr_db");
            }
        }
        if !self.allowed_expert_quality.is_empty() {
            if let Some(q) = &e.expert_quality {
                if !self.allowed_expert_quality.iter().any(|a| a.eq_ignore_ascii_case(q)) {
                    return Some("expert_quality");
                }
            }
        }
        None
    }
}

/// Reads a manifest CSV (header required). Relative audio paths resolve
/// against the manifest's directory. Rows failing the filter, or whose audio
/// file is missing, are dropped and tallied by reason.
pub fn load_manifest(path: &Path, filter: &QualityFilter) -> Result<(Vec<ManifestEntry>, ManifestSummary), ManifestError> {
    let file = path.display().to_string();
    let unreadable = |reason: String| ManifestError::UnreadableFile { file: file.clone(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| unreadable(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| ManifestError::MissingColumn {
            file: file.clone(),
            column: name.to_string(),
        })
    };
    let cols = &filter.columns;
    let (i_path, i_dataset, i_label) = (require(&cols.path)?, require(&cols.dataset)?, require(&cols.label)?);
    let (i_cough, i_snr, i_quality) = (find(&cols.cough_detected), find(&cols.snr_db), find(&cols.expert_quality));
    let base = path.parent().unwrap_or(Path::new("."));

    let mut entries = Vec::new();
    let mut summary = ManifestSummary::default();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| unreadable(e.to_string()))?;
        let field = |i: Option<usize>| i.and_then(|i| rec.get(i)).filter(|v| !v.is_empty());
        let number = |i: Option<usize>, column: &str| -> Result<Option<f64>, ManifestError> {
            field(i)
                .map(|v| {
                    v.parse::<f64>().map_err(|_| ManifestError::BadNumber {
                        file: file.clone(),
                        row,
                        column: column.to_string(),
                        value: v.to_string(),
                    })
                })
                .transpose()
        };
        let label_text = rec.get(i_label).unwrap_or("");
        let label = label_text.parse().map_err(|_| ManifestError::UnknownLabel {
            file: file.clone(),
            row,
            value: label_text.to_string(),
        })?;
        let dataset_text = rec.get(i_dataset).unwrap_or("");
        let dataset = dataset_text.parse().map_err(|_| ManifestError::UnknownDataset {
            file: file.clone(),
            row,
            value: dataset_text.to_string(),
        })?;
        let entry = ManifestEntry {
            path: base.join(rec.get(i_path).unwrap_or("")),
            dataset,
            label,
            cough_detected: number(i_cough, &cols.cough_detected)?,
            snr_db: number(i_snr, &cols.snr_db)?,
            expert_quality: field(i_quality).map(str::to_string),
        };
        summary.total += 1;
        match filter.rejection(&entry) {
            Some(reason) => {
                log::info!("dropping {} ({reason})", entry.path.display());
                *summary.dropped.entry(reason.to_string()).or_default() += 1;
            }
            None => {
                summary.kept += 1;
                entries.push(entry);
            }
        }
    }
    Ok((entries, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn threshold_filter_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.wav", "b.wav", "c.wav"] {
            write(dir.path(), f, "");
        }
        let m = write(
            dir.path(),
            "m.csv",
            "path,dataset,label,cough_detected\na.wav,COUGHVID,positive,0.95\nb.wav,COUGHVID,negative,0.5\nc.wav,Virufy,negative,\n",
        );
        let (entries, summary) = load_manifest(&m, &QualityFilter::default()).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(summary.total, 3);
        assert_eq!(summary.dropped.get("cough_detected"), Some(&1));
        assert_eq!(summary.kept + summary.dropped.values().sum::<usize>(), summary.total);

        let off = QualityFilter {
            enabled: false,
            ..QualityFilter::default()
        };
        assert_eq!(load_manifest(&m, &off).unwrap().0.len(), 3);
    }

    #[test]
    fn error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "e.csv", "");
        assert!(matches!(
            load_manifest(&empty, &QualityFilter::default()),
            Err(ManifestError::MissingColumn { .. })
        ));
        let bad_label = write(dir.path(), "l.csv", "path,dataset,label\nx.wav,Virufy,maybe\n");
        assert!(matches!(
            load_manifest(&bad_label, &QualityFilter::default()),
            Err(ManifestError::UnknownLabel { .. })
        ));
        assert!(matches!(
            load_manifest(&dir.path().join("nope.csv"), &QualityFilter::default()),
            Err(ManifestError::UnreadableFile { .. })
        ));
    }

    #[test]
    fn renamed_columns_and_snr() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.wav", "");
        write(dir.path(), "b.wav", "");
        let m = write(
            dir.path(),
            "m.csv",
            "uuid_path,source,status,snr\na.wav,coughvid,COVID-19,12\nb.wav,coughvid,healthy,3\n",
        );
        let filter = QualityFilter {
            min_snr_db: Some(10.0),
            columns: ColumnNames {
                path: "uuid_path".into(),
                dataset: "source".into(),
                label: "status".into(),
                snr_db: "snr".into(),
                ..ColumnNames::default()
            },
            ..QualityFilter::default()
        };
        let (entries, summary) = load_manifest(&m, &filter).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].label, Label::Positive);
        assert_eq!(summary.dropped.get("snr_db"), Some(&1));
    }
}
