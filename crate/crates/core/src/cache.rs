//! Feature cache: one CSV per feature kind, one row per segment.
//!
//! Columns are `segment_id,dataset,label,kind,v0..v{d-1}`; values are written
//! with 17 significant digits so they parse back bit-exactly.

use std::path::Path;

use crate::features::{FeatureKind, FeatureVector};
use crate::{Error, Result};

pub fn cache_file_name(kind: FeatureKind) -> String {
    format!("features_{kind}.csv")
}

/// Scientific notation with 17 significant digits, enough for an exact f64 round trip.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_feature_cache(path: &Path, kind: FeatureKind, vectors: &[FeatureVector]) -> Result<()> {
    let cache_err = |e: csv::Error| Error::Cache(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(cache_err)?;
    let mut header = vec!["segment_id".to_string(), "dataset".into(), "label".into(), "kind".into()];
    header.extend((0..kind.dim()).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(cache_err)?;
    for fv in vectors {
        if fv.kind != kind || fv.values.len() != kind.dim() {
            return Err(Error::Cache(format!(
                "vector for {} is {} ({} values), cache holds {kind}",
                fv.segment_id,
                fv.kind,
                fv.values.len()
            )));
        }
        let mut rec = vec![
            fv.segment_id.clone(),
            fv.dataset.to_string(),
            fv.label.to_string(),
            kind.to_string(),
        ];
        rec.extend(fv.values.iter().map(|&v| format_value(v)));
        w.write_record(&rec).map_err(cache_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<Vec<FeatureVector>> {
    let cache_err = |msg: String| Error::Cache(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| cache_err(e.to_string()))?;
    let headers = r.headers().map_err(|e| cache_err(e.to_string()))?.clone();
    let fixed = ["segment_id", "dataset", "label", "kind"];
    if headers.len() < fixed.len() || headers.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(cache_err("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| cache_err(e.to_string()))?;
        let bad = |what: &str| cache_err(format!("row {}: bad {what}", line + 2));
        let kind: FeatureKind = rec[3].parse().map_err(|_| bad("kind"))?;
        let values = rec
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("value"))?;
        if values.len() != kind.dim() {
            return Err(bad("vector length"));
        }
        out.push(FeatureVector {
            values,
            kind,
            segment_id: rec[0].to_string(),
            dataset: rec[1].parse().map_err(|_| bad("dataset"))?,
            label: rec[2].parse().map_err(|_| bad("label"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{Dataset, Label};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn seventeen_digits_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = format_value(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(cache_file_name(FeatureKind::Contrast));
        let vectors: Vec<FeatureVector> = (0..3)
            .map(|i| FeatureVector {
                values: (0..7).map(|j| (i * 7 + j) as f64 / 3.0 - 1e-300).collect(),
                kind: FeatureKind::Contrast,
                segment_id: format!("clip {i}.wav#000"),
                dataset: if i == 0 { Dataset::Coughvid } else { Dataset::Virufy },
                label: if i == 1 { Label::Positive } else { Label::Negative },
            })
            .collect();
        write_feature_cache(&path, FeatureKind::Contrast, &vectors).unwrap();
        assert_eq!(read_feature_cache(&path).unwrap(), vectors);
        assert!(write_feature_cache(&path, FeatureKind::Mfcc, &vectors).is_err());
    }
}
