//! Classifiers: an MLP trained with Adam (or SGD / L-BFGS) and a kernel SVM
//! trained with SMO, plus the shared trained-model container.

pub mod grid;
pub mod mlp;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureKind, FeatureVector};
use crate::preprocess::Label;

pub use grid::{grid_search, GridCell, GridResult, MlpGrid, SvmGrid};
pub use mlp::{Activation, LearningRateSchedule, Mlp, MlpParams, Solver};
pub use svm::{Kernel, KernelKind, SvmModel, SvmParams};

/// Version written to, and required from, serialized model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in training data")]
    NonFiniteInput,
    #[error("need at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("expected a {expected} model")]
    WrongFamily { expected: ModelFamily },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model (de)serialization failed: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Mlp,
    Svm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 2] = [ModelFamily::Mlp, ModelFamily::Svm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Mlp => "mlp",
            ModelFamily::Svm => "svm",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Mlp => "MLP",
            ModelFamily::Svm => "SVM",
        })
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelFamily::Mlp),
            "svm" => Ok(ModelFamily::Svm),
            other => Err(format!("unknown model family {other:?}")),
        }
    }
}

/// Column-wise MinMax scaling fitted on a training split. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in rows {
            for j in 0..d {
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
        Self { min, range }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.range))
            .map(|(&v, (&lo, &r))| if r > 0.0 { (v - lo) / r } else { 0.0 })
            .collect()
    }
}

/// Training-set snapshot stored alongside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub n_examples: usize,
    pub train_accuracy: f64,
    /// Final mean cross-entropy (MLP) or dual objective (SVM).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelVariant {
    Mlp {
        activation: Activation,
        params: MlpParams,
        layers: Vec<LayerRecord>,
    },
    Svm {
        params: SvmParams,
        support_vectors: Vec<Vec<f64>>,
        alphas: Vec<f64>,
        labels: Vec<f64>,
        bias: f64,
    },
}

/// A trained classifier together with its provenance. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub feature_kind: FeatureKind,
    pub n_inputs: usize,
    pub training_seed: u64,
    pub scaler: Option<MinMaxScaler>,
    pub train_metrics: TrainMetrics,
    pub model: ModelVariant,
}

fn mlp_from_records(activation: Activation, layers: &[LayerRecord]) -> Mlp {
    Mlp {
        weights: layers
            .iter()
            .map(|l| Array2::from_shape_vec((l.rows, l.cols), l.weights.clone()).expect("layer shape"))
            .collect(),
        biases: layers.iter().map(|l| Array1::from(l.biases.clone())).collect(),
        activation,
    }
}

/// Training rows in model-ready form.
struct Prepared {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
    scaler: Option<MinMaxScaler>,
}

fn prepare(data: &[FeatureVector], scale: bool) -> Result<Prepared, ModelError> {
    if data.len() < 2 {
        return Err(ModelError::TooFewExamples { needed: 2, got: data.len() });
    }
    let d = data[0].values.len();
    for fv in data {
        if fv.values.len() != d {
            return Err(ModelError::DimensionMismatch { expected: d, got: fv.values.len() });
        }
        if fv.values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
    }
    let labels: Vec<Label> = data.iter().map(|fv| fv.label).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ModelError::SingleClassData);
    }
    let raw: Vec<Vec<f64>> = data.iter().map(|fv| fv.values.clone()).collect();
    let scaler = scale.then(|| MinMaxScaler::fit(&raw));
    let rows = match &scaler {
        Some(s) => raw.iter().map(|r| s.transform(r)).collect(),
        None => raw,
    };
    Ok(Prepared { rows, labels, scaler })
}

fn to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

impl TrainedModel {
    /// Trains an MLP on labelled vectors; with `scale`, a MinMax scaler is
    /// fitted on `data` and stored with the model.
    pub fn train_mlp(data: &[FeatureVector], params: &MlpParams, scale: bool) -> Result<Self, ModelError> {
        params.validate()?;
        let prep = prepare(data, scale)?;
        let x = to_matrix(&prep.rows);
        let y: Vec<usize> = prep.labels.iter().map(|l| l.index()).collect();
        let (net, report) = mlp::train(&x, &y, params);
        let layers = net
            .weights
            .iter()
            .zip(&net.biases)
            .map(|(w, b)| LayerRecord {
                rows: w.nrows(),
                cols: w.ncols(),
                weights: w.iter().copied().collect(),
                biases: b.to_vec(),
            })
            .collect();
        let mut model = TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            feature_kind: data[0].kind,
            n_inputs: x.ncols(),
            training_seed: params.seed,
            scaler: prep.scaler,
            train_metrics: TrainMetrics {
                n_examples: data.len(),
                train_accuracy: 0.0,
                objective: report.final_loss,
                iterations: report.epochs,
                converged: report.converged,
            },
            model: ModelVariant::Mlp {
                activation: params.activation,
                params: params.clone(),
                layers,
            },
        };
        model.train_metrics.train_accuracy = model.accuracy_on(data)?;
        Ok(model)
    }

    /// Trains an SVM with SMO. Labels map to +1 (positive) / -1 (negative).
    pub fn train_svm(data: &[FeatureVector], params: &SvmParams, scale: bool) -> Result<Self, ModelError> {
        params.validate()?;
        let prep = prepare(data, scale)?;
        let y: Vec<f64> = prep.labels.iter().map(|l| l.sign()).collect();
        let (svm, report) = svm::train(&prep.rows, &y, params);
        if !report.converged {
            log::warn!(
                "SMO stopped before convergence (max KKT violation {:.3e} after {} full passes)",
                report.max_kkt_violation,
                report.full_passes
            );
        }
        let mut model = TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            feature_kind: data[0].kind,
            n_inputs: prep.rows[0].len(),
            training_seed: params.seed,
            scaler: prep.scaler,
            train_metrics: TrainMetrics {
                n_examples: data.len(),
                train_accuracy: 0.0,
                objective: report.dual_objective,
                iterations: report.pair_updates,
                converged: report.converged,
            },
            model: ModelVariant::Svm {
                params: params.clone(),
                support_vectors: svm.support_vectors,
                alphas: svm.alphas,
                labels: svm.labels,
                bias: svm.bias,
            },
        };
        model.train_metrics.train_accuracy = model.accuracy_on(data)?;
        Ok(model)
    }

    pub fn family(&self) -> ModelFamily {
        match self.model {
            ModelVariant::Mlp { .. } => ModelFamily::Mlp,
            ModelVariant::Svm { .. } => ModelFamily::Svm,
        }
    }

    fn input(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.n_inputs {
            return Err(ModelError::DimensionMismatch { expected: self.n_inputs, got: x.len() });
        }
        Ok(match &self.scaler {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        })
    }

    pub fn mlp(&self) -> Option<Mlp> {
        match &self.model {
            ModelVariant::Mlp { activation, layers, .. } => Some(mlp_from_records(*activation, layers)),
            ModelVariant::Svm { .. } => None,
        }
    }

    pub fn svm(&self) -> Option<SvmModel> {
        match &self.model {
            ModelVariant::Svm {
                params,
                support_vectors,
                alphas,
                labels,
                bias,
            } => Some(SvmModel {
                kernel: params.kernel(),
                c: params.c,
                support_vectors: support_vectors.clone(),
                alphas: alphas.clone(),
                labels: labels.clone(),
                bias: *bias,
            }),
            ModelVariant::Mlp { .. } => None,
        }
    }

    /// Softmax output as (negative, positive) probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Result<(f64, f64), ModelError> {
        let net = self.mlp().ok_or(ModelError::WrongFamily { expected: ModelFamily::Mlp })?;
        let input = self.input(x)?;
        let p = net.predict_proba_batch(Array2::from_shape_vec((1, input.len()), input).unwrap().view());
        Ok((p[[0, 0]], p[[0, 1]]))
    }

    /// `sum_i alpha_i y_i K(x_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64, ModelError> {
        let svm = self.svm().ok_or(ModelError::WrongFamily { expected: ModelFamily::Svm })?;
        Ok(svm.decision(&self.input(x)?))
    }

    /// Positive-class scores (probability for MLP, decision value for SVM)
    /// and hard labels for a batch. Ties go to the negative class.
    pub fn score_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<(f64, Label)>, ModelError> {
        let inputs = rows.iter().map(|r| self.input(r)).collect::<Result<Vec<_>, _>>()?;
        match &self.model {
            ModelVariant::Mlp { activation, layers, .. } => {
                let net = mlp_from_records(*activation, layers);
                if inputs.is_empty() {
                    return Ok(Vec::new());
                }
                let p = net.predict_proba_batch(to_matrix(&inputs).view());
                Ok(p.rows()
                    .into_iter()
                    .map(|r| {
                        let label = if r[1] > r[0] { Label::Positive } else { Label::Negative };
                        (r[1], label)
                    })
                    .collect())
            }
            ModelVariant::Svm { .. } => {
                let svm = self.svm().unwrap();
                Ok(inputs
                    .iter()
                    .map(|x| {
                        let f = svm.decision(x);
                        (f, if f > 0.0 { Label::Positive } else { Label::Negative })
                    })
                    .collect())
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label, ModelError> {
        Ok(self.score_batch(&[x.to_vec()])?[0].1)
    }

    fn accuracy_on(&self, data: &[FeatureVector]) -> Result<f64, ModelError> {
        let rows: Vec<Vec<f64>> = data.iter().map(|fv| fv.values.clone()).collect();
        let scored = self.score_batch(&rows)?;
        let correct = scored.iter().zip(data).filter(|((_, l), fv)| *l == fv.label).count();
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string_pretty(self).map_err(|e| ModelError::Serialization(e.to_string()))
    }

    /// Parses a model file; rejects any `format_version` other than the current one.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Serialization(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| ModelError::Serialization("missing format_version".into()))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(ModelError::UnsupportedVersion(version as u32));
        }
        let model: TrainedModel =
            serde_json::from_value(value).map_err(|e| ModelError::Serialization(e.to_string()))?;
        if let ModelVariant::Mlp { layers, .. } = &model.model {
            let mut expected_rows = model.n_inputs;
            for l in layers {
                if l.rows != expected_rows || l.weights.len() != l.rows * l.cols || l.biases.len() != l.cols {
                    return Err(ModelError::Serialization("inconsistent layer shapes".into()));
                }
                expected_rows = l.cols;
            }
            if expected_rows != mlp::N_CLASSES {
                return Err(ModelError::Serialization("output layer must have 2 units".into()));
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Dataset;

    fn fv(values: Vec<f64>, label: Label) -> FeatureVector {
        FeatureVector {
            values,
            kind: FeatureKind::Mfcc,
            segment_id: "x#000".into(),
            dataset: Dataset::Synthetic,
            label,
        }
    }

    #[test]
    fn training_error_paths() {
        let one_class = vec![fv(vec![0.0], Label::Positive), fv(vec![1.0], Label::Positive)];
        assert!(matches!(
            TrainedModel::train_mlp(&one_class, &MlpParams::default(), false),
            Err(ModelError::SingleClassData)
        ));
        assert!(matches!(
            TrainedModel::train_svm(&one_class, &SvmParams::default(), false),
            Err(ModelError::SingleClassData)
        ));
        let ragged = vec![fv(vec![0.0], Label::Positive), fv(vec![1.0, 2.0], Label::Negative)];
        assert!(matches!(
            TrainedModel::train_mlp(&ragged, &MlpParams::default(), false),
            Err(ModelError::DimensionMismatch { .. })
        ));
        let nan = vec![fv(vec![f64::NAN], Label::Positive), fv(vec![1.0], Label::Negative)];
        assert!(matches!(
            TrainedModel::train_svm(&nan, &SvmParams::default(), false),
            Err(ModelError::NonFiniteInput)
        ));
    }

    #[test]
    fn scaler_maps_training_range_to_unit_interval() {
        let s = MinMaxScaler::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(s.transform(&[2.0, 5.0]), vec![0.5, 0.0]);
        assert_eq!(s.transform(&[3.0, 9.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_unknown_format_version() {
        let data = vec![fv(vec![0.0], Label::Negative), fv(vec![1.0], Label::Positive)];
        let m = TrainedModel::train_svm(&data, &SvmParams::default(), false).unwrap();
        let text = m.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(matches!(TrainedModel::from_json(&text), Err(ModelError::UnsupportedVersion(99))));
        let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn wrong_family_and_dimension() {
        let data = vec![fv(vec![0.0], Label::Negative), fv(vec![1.0], Label::Positive)];
        let m = TrainedModel::train_svm(&data, &SvmParams::default(), false).unwrap();
        assert!(matches!(m.predict_proba(&[0.0]), Err(ModelError::WrongFamily { .. })));
        assert!(matches!(m.decision(&[0.0, 1.0]), Err(ModelError::DimensionMismatch { .. })));
    }
}
