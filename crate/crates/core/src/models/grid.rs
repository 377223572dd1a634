//! Exhaustive hyper-parameter search over the classifier grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, LearningRateSchedule, MlpParams, Solver};
use super::svm::{KernelKind, SvmParams};
use crate::eval::scenario::evaluate;
use crate::eval::stratified_split;
use crate::eval::ModelConfig;
use crate::features::FeatureVector;

/// Gamma candidates 0.02, 0.04, ..., 1.0. Zero is left out: it is not a valid RBF width.
pub fn default_gammas() -> Vec<f64> {
    (1..=50).map(|k| k as f64 / 50.0).collect()
}

/// C candidates 1, 6, 11, ..., 96.
pub fn default_cs() -> Vec<f64> {
    (0..20).map(|k| 1.0 + 5.0 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmGrid {
    pub kernels: Vec<KernelKind>,
    pub gammas: Vec<f64>,
    pub cs: Vec<f64>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        Self {
            kernels: vec![KernelKind::Rbf],
            gammas: default_gammas(),
            cs: default_cs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpGrid {
    pub hidden_layers: Vec<Vec<usize>>,
    pub solvers: Vec<Solver>,
    pub learning_rates: Vec<LearningRateSchedule>,
    pub activations: Vec<Activation>,
}

impl Default for MlpGrid {
    fn default() -> Self {
        Self {
            hidden_layers: vec![
                vec![300],
                vec![128],
                vec![64],
                vec![300, 300],
                vec![128, 128],
                vec![64, 64],
                vec![300, 128],
                vec![300, 64],
                vec![128, 64],
                vec![300, 128, 64],
                vec![300, 128, 64, 2],
            ],
            solvers: Solver::ALL.to_vec(),
            learning_rates: LearningRateSchedule::ALL.to_vec(),
            activations: Activation::ALL.to_vec(),
        }
    }
}

/// Configuration of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CellParams {
    Mlp(MlpParams),
    Svm(SvmParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    /// Degenerate configuration, not evaluated.
    Skipped(String),
    /// Training or scoring failed; the cell scores 0.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub params: CellParams,
    pub accuracy: f64,
    /// Positive-class F1.
    pub f1: f64,
    pub auc: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Option<usize>,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Mlp(MlpGrid),
    Svm(SvmGrid),
}

impl Grid {
    /// Cells in grid order. Kernels that ignore gamma get a single gamma entry.
    pub fn cells(&self, base: &ModelConfig) -> Vec<CellParams> {
        match self {
            Grid::Svm(g) => {
                let mut out = Vec::new();
                for &kernel in &g.kernels {
                    let gammas: &[f64] = if kernel == KernelKind::Linear {
                        &g.gammas[..g.gammas.len().min(1)]
                    } else {
                        &g.gammas
                    };
                    for &gamma in gammas {
                        for &c in &g.cs {
                            out.push(CellParams::Svm(SvmParams {
                                kernel,
                                gamma,
                                c,
                                ..base.svm.clone()
                            }));
                        }
                    }
                }
                out
            }
            Grid::Mlp(g) => {
                let mut out = Vec::new();
                for hidden in &g.hidden_layers {
                    for &solver in &g.solvers {
                        for &learning_rate in &g.learning_rates {
                            for &activation in &g.activations {
                                out.push(CellParams::Mlp(MlpParams {
                                    hidden_layers: hidden.clone(),
                                    solver,
                                    learning_rate,
                                    activation,
                                    ..base.mlp.clone()
                                }));
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

fn complexity(params: &CellParams, n_inputs: usize) -> f64 {
    match params {
        CellParams::Svm(p) => p.c,
        CellParams::Mlp(p) => p.parameter_count(n_inputs) as f64,
    }
}

/// Evaluates every grid cell on one stratified 80/20 split of `data` (fixed
/// by `seed`) and picks the best by accuracy, then positive-class F1, then
/// smaller C or fewer network parameters, then grid order.
///
/// Cells run in parallel; results are kept in grid order.
pub fn grid_search(
    data: &[FeatureVector],
    grid: &Grid,
    base: &ModelConfig,
    seed: u64,
    scale: bool,
    grouped: bool,
) -> crate::Result<GridResult> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(crate::Error::Config("grid has no configurations".into()));
    }
    let labels: Vec<_> = data.iter().map(|fv| fv.label).collect();
    let keys: Vec<&str> = data.iter().map(FeatureVector::group).collect();
    let split = stratified_split(&labels, grouped.then_some(keys.as_slice()), 0.8, seed)?;
    let train: Vec<FeatureVector> = split.train.iter().map(|&i| data[i].clone()).collect();
    let test: Vec<FeatureVector> = split.test.iter().map(|&i| data[i].clone()).collect();

    let results: Vec<GridCell> = cells
        .into_par_iter()
        .enumerate()
        .map(|(index, params)| {
            let degenerate = match &params {
                CellParams::Svm(p) => p.validate().err(),
                CellParams::Mlp(p) => p.validate().err(),
            };
            if let Some(e) = degenerate {
                log::warn!("skipping grid cell {index}: {e}");
                return GridCell {
                    index,
                    params,
                    accuracy: 0.0,
                    f1: 0.0,
                    auc: 0.0,
                    status: CellStatus::Skipped(e.to_string()),
                };
            }
            let (family, cfg) = match &params {
                CellParams::Svm(p) => (super::ModelFamily::Svm, ModelConfig { svm: p.clone(), ..base.clone() }),
                CellParams::Mlp(p) => (super::ModelFamily::Mlp, ModelConfig { mlp: p.clone(), ..base.clone() }),
            };
            match evaluate(&train, &test, family, &cfg, seed, scale) {
                Ok((_, confusion, auc)) => GridCell {
                    index,
                    params,
                    accuracy: confusion.accuracy,
                    f1: confusion.positive.f1,
                    auc,
                    status: CellStatus::Ok,
                },
                Err(e) => GridCell {
                    index,
                    params,
                    accuracy: 0.0,
                    f1: 0.0,
                    auc: 0.0,
                    status: CellStatus::Failed(e.to_string()),
                },
            }
        })
        .collect();

    let n_inputs = data.first().map_or(0, |fv| fv.values.len());
    let best = results
        .iter()
        .filter(|c| c.status == CellStatus::Ok)
        .min_by(|a, b| {
            b.accuracy
                .total_cmp(&a.accuracy)
                .then(b.f1.total_cmp(&a.f1))
                .then(complexity(&a.params, n_inputs).total_cmp(&complexity(&b.params, n_inputs)))
                .then(a.index.cmp(&b.index))
        })
        .map(|c| c.index);
    Ok(GridResult { best, cells: results })
}
