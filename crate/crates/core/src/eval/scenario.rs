use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion_metrics, roc_auc, MetricsReport, REPORT_FORMAT_VERSION};
use super::split::stratified_split;
use super::EvalError;
use crate::features::{FeatureKind, FeatureVector};
use crate::models::{MlpParams, ModelFamily, SvmParams, TrainedModel};
use crate::preprocess::Dataset;

/// Which recordings a side of a scenario draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "COUGHVID")]
    Coughvid,
    #[serde(rename = "Virufy")]
    Virufy,
    /// Every dataset present, synthetic included.
    Both,
}

impl Source {
    pub fn includes(self, dataset: Dataset) -> bool {
        match self {
            Source::Both => true,
            Source::Coughvid => dataset == Dataset::Coughvid,
            Source::Virufy => dataset == Dataset::Virufy,
        }
    }

    fn overlaps(self, other: Source, dataset: Dataset) -> bool {
        self.includes(dataset) && other.includes(dataset)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Coughvid => "COUGHVID",
            Source::Virufy => "Virufy",
            Source::Both => "COUGHVID & Virufy",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coughvid" | "c" => Ok(Source::Coughvid),
            "virufy" | "v" => Ok(Source::Virufy),
            "both" | "b" => Ok(Source::Both),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub train_source: Source,
    pub test_source: Source,
    pub split_fraction: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The six train/test pairs, numbered 1-6:
    /// (C,C), (V,V), (Both,V), (Both,C), (Both,Both), (C,V).
    pub fn standard(id: u8, seed: u64) -> Result<Self, EvalError> {
        use Source::*;
        let (train_source, test_source) = match id {
            1 => (Coughvid, Coughvid),
            2 => (Virufy, Virufy),
            3 => (Both, Virufy),
            4 => (Both, Coughvid),
            5 => (Both, Both),
            6 => (Coughvid, Virufy),
            other => return Err(EvalError::UnknownScenario(other)),
        };
        Ok(Self {
            id,
            train_source,
            test_source,
            split_fraction: 0.8,
            seed,
        })
    }

    pub fn all(seed: u64) -> Vec<Self> {
        (1..=6).map(|id| Self::standard(id, seed).unwrap()).collect()
    }

    pub fn describe(&self) -> String {
        format!("Training on {} and testing on {}", self.train_source, self.test_source)
    }

    /// Train/test indices into `data`. Datasets drawn by both sides are split
    /// (stratified, optionally grouped by recording); the rest go wholly to
    /// their side.
    pub fn partition(&self, data: &[FeatureVector], grouped: bool) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
        let shared: Vec<usize> = (0..data.len())
            .filter(|&i| self.train_source.overlaps(self.test_source, data[i].dataset))
            .collect();
        let mut train: Vec<usize> = (0..data.len())
            .filter(|&i| self.train_source.includes(data[i].dataset) && !self.test_source.includes(data[i].dataset))
            .collect();
        let mut test: Vec<usize> = (0..data.len())
            .filter(|&i| self.test_source.includes(data[i].dataset) && !self.train_source.includes(data[i].dataset))
            .collect();
        if !shared.is_empty() {
            let labels: Vec<_> = shared.iter().map(|&i| data[i].label).collect();
            let keys: Vec<&str> = shared.iter().map(|&i| data[i].group()).collect();
            let split = stratified_split(&labels, grouped.then_some(keys.as_slice()), self.split_fraction, self.seed)?;
            train.extend(split.train.iter().map(|&k| shared[k]));
            test.extend(split.test.iter().map(|&k| shared[k]));
        }
        train.sort_unstable();
        test.sort_unstable();
        if train.is_empty() || test.is_empty() {
            return Err(EvalError::InsufficientData(format!(
                "scenario {} has {} training and {} test segments",
                self.id,
                train.len(),
                test.len()
            )));
        }
        Ok((train, test))
    }
}

/// Classifier hyper-parameters for both families.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mlp: MlpParams,
    pub svm: SvmParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Keep all segments of a recording on one side of a split.
    pub group_by_recording: bool,
    /// Fit column-wise MinMax scaling on the training split.
    pub feature_scaling: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            group_by_recording: true,
            feature_scaling: true,
        }
    }
}

/// Trains one family on `train`, scores `test`, and computes metrics.
pub fn evaluate(
    train: &[FeatureVector],
    test: &[FeatureVector],
    family: ModelFamily,
    models: &ModelConfig,
    seed: u64,
    scale: bool,
) -> crate::Result<(TrainedModel, super::ConfusionReport, f64)> {
    let model = match family {
        ModelFamily::Mlp => TrainedModel::train_mlp(train, &MlpParams { seed, ..models.mlp.clone() }, scale)?,
        ModelFamily::Svm => TrainedModel::train_svm(train, &SvmParams { seed, ..models.svm.clone() }, scale)?,
    };
    let rows: Vec<Vec<f64>> = test.iter().map(|fv| fv.values.clone()).collect();
    let scored = model.score_batch(&rows)?;
    let truth: Vec<_> = test.iter().map(|fv| fv.label).collect();
    let preds: Vec<_> = scored.iter().map(|s| s.1).collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let confusion = confusion_metrics(&truth, &preds)?;
    let auc = roc_auc(&truth, &scores)?;
    Ok((model, confusion, auc))
}

/// Split, train, predict and score one scenario cell. `data` holds the
/// vectors of a single feature kind; all randomness derives from `spec.seed`.
pub fn run_scenario(
    spec: &ScenarioSpec,
    data: &[FeatureVector],
    family: ModelFamily,
    models: &ModelConfig,
    options: &RunOptions,
) -> crate::Result<MetricsReport> {
    let kind = data.first().map_or(FeatureKind::Mfcc, |fv| fv.kind);
    if data.iter().any(|fv| fv.kind != kind) {
        return Err(crate::Error::Config("run_scenario expects a single feature kind".into()));
    }
    let (train_idx, test_idx) = spec.partition(data, options.group_by_recording)?;
    let train: Vec<FeatureVector> = train_idx.iter().map(|&i| data[i].clone()).collect();
    let test: Vec<FeatureVector> = test_idx.iter().map(|&i| data[i].clone()).collect();
    let (_, confusion, auc) = evaluate(&train, &test, family, models, spec.seed, options.feature_scaling)?;
    Ok(MetricsReport {
        format_version: REPORT_FORMAT_VERSION,
        scenario_id: spec.id,
        scenario: spec.describe(),
        feature_kind: kind,
        model_family: family,
        seed: spec.seed,
        n_train: train.len(),
        n_test: test.len(),
        counts: confusion.counts,
        positive: confusion.positive,
        negative: confusion.negative,
        accuracy: confusion.accuracy,
        auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Label;

    fn fv(id: usize, dataset: Dataset, label: Label) -> FeatureVector {
        FeatureVector {
            values: vec![id as f64],
            kind: FeatureKind::Mfcc,
            segment_id: format!("{dataset}-{id}#000"),
            dataset,
            label,
        }
    }

    fn corpus() -> Vec<FeatureVector> {
        let mut v = Vec::new();
        for i in 0..40 {
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            v.push(fv(i, if i < 30 { Dataset::Coughvid } else { Dataset::Virufy }, label));
        }
        v
    }

    #[test]
    fn six_standard_scenarios() {
        let pairs: Vec<(Source, Source)> = ScenarioSpec::all(0)
            .iter()
            .map(|s| (s.train_source, s.test_source))
            .collect();
        use Source::*;
        assert_eq!(
            pairs,
            vec![
                (Coughvid, Coughvid),
                (Virufy, Virufy),
                (Both, Virufy),
                (Both, Coughvid),
                (Both, Both),
                (Coughvid, Virufy)
            ]
        );
        assert_eq!(ScenarioSpec::standard(7, 0), Err(EvalError::UnknownScenario(7)));
    }

    #[test]
    fn partitions_are_disjoint_and_respect_sources() {
        let data = corpus();
        for spec in ScenarioSpec::all(3) {
            let (train, test) = spec.partition(&data, true).unwrap();
            assert!(train.iter().all(|i| !test.contains(i)), "scenario {}", spec.id);
            assert!(train.iter().all(|&i| spec.train_source.includes(data[i].dataset)));
            assert!(test.iter().all(|&i| spec.test_source.includes(data[i].dataset)));
        }
        // (Both, Virufy): all of COUGHVID trains, Virufy is split 8/2.
        let (train, test) = ScenarioSpec::standard(3, 3).unwrap().partition(&data, true).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 38);
        // (C, V): no split at all.
        let (train, test) = ScenarioSpec::standard(6, 3).unwrap().partition(&data, true).unwrap();
        assert_eq!((train.len(), test.len()), (30, 10));
    }
}
