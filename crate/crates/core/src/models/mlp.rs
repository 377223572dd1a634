//! Fully connected softmax classifier trained by backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Logistic,
    Tanh,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Logistic,
        Activation::Tanh,
        Activation::Relu,
    ];

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Logistic => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Adam,
    Sgd,
    Lbfgs,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Lbfgs, Solver::Sgd, Solver::Adam];
}

/// Step-size schedule; only the SGD solver consults it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningRateSchedule {
    Constant,
    Invscaling,
    Adaptive,
}

impl LearningRateSchedule {
    pub const ALL: [LearningRateSchedule; 3] = [
        LearningRateSchedule::Constant,
        LearningRateSchedule::Invscaling,
        LearningRateSchedule::Adaptive,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpParams {
    /// Hidden layer widths; the output layer always has two units.
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub solver: Solver,
    pub learning_rate: LearningRateSchedule,
    pub base_lr: f64,
    pub max_epochs: usize,
    /// Mini-batch size cap; the effective size is `min(batch_size, n)`.
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub momentum: f64,
    /// Minimum loss improvement counted as progress by early stopping.
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_layers: vec![300, 128, 64],
            activation: Activation::Relu,
            solver: Solver::Adam,
            learning_rate: LearningRateSchedule::Constant,
            base_lr: 1e-3,
            max_epochs: 200,
            batch_size: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.9,
            tol: 1e-4,
            n_iter_no_change: 10,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(ModelError::InvalidParams("layer widths must be >= 1".into()));
        }
        if !(self.base_lr > 0.0) || self.max_epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidParams(
                "base_lr, max_epochs and batch_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ModelError::InvalidParams("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Number of trainable weights and biases for a given input width.
    pub fn parameter_count(&self, n_inputs: usize) -> usize {
        let mut widths = vec![n_inputs];
        widths.extend(&self.hidden_layers);
        widths.push(N_CLASSES);
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Weights and biases of a trained or initialized network.
///
/// Layer `l` maps `weights[l].nrows()` inputs to `weights[l].ncols()`
/// outputs; the activation applies to hidden layers only and the final
/// layer feeds a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Lower bound on probabilities inside the log of the cross-entropy.
const PROB_FLOOR: f64 = 1e-300;

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn init(n_inputs: usize, hidden: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let mut widths = vec![n_inputs];
        widths.extend(hidden);
        widths.push(N_CLASSES);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let limit = (6.0 / w[0] as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || rng.gen_range(-limit..limit)));
            biases.push(Array1::zeros(w[1]));
        }
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn zeros(n_inputs: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut widths = vec![n_inputs];
        widths.extend(hidden);
        widths.push(N_CLASSES);
        Self {
            weights: widths.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: widths.windows(2).map(|w| Array1::zeros(w[1])).collect(),
            activation,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.n_inputs()];
        v.extend(self.weights.iter().map(|w| w.ncols()));
        v
    }

    /// Activations of every layer; the last entry holds softmax probabilities.
    fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.to_owned());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l == last {
                softmax_rows(&mut z);
            } else {
                self.activation.apply(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities, one row per input row.
    pub fn predict_proba_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_all(x).pop().expect("network has at least one layer")
    }

    /// Mean softmax cross-entropy and its gradient over a batch.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: &[usize]) -> (f64, Gradients) {
        let n = x.nrows() as f64;
        let acts = self.forward_all(x);
        let probs = acts.last().unwrap();
        let loss = -y
            .iter()
            .enumerate()
            .map(|(i, &c)| probs[[i, c]].max(PROB_FLOOR).ln())
            .sum::<f64>()
            / n;

        let mut delta = probs.clone();
        for (i, &c) in y.iter().enumerate() {
            delta[[i, c]] -= 1.0;
        }
        delta /= n;

        let n_layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            gw[l] = acts[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                back.zip_mut_with(&acts[l], |d, &a| *d *= self.activation.derivative_from_output(a));
                delta = back;
            }
        }
        (loss, Gradients { weights: gw, biases: gb })
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let probs = self.predict_proba_batch(x);
        -y.iter()
            .enumerate()
            .map(|(i, &c)| probs[[i, c]].max(PROB_FLOOR).ln())
            .sum::<f64>()
            / x.nrows() as f64
    }

    /// All parameters flattened layer by layer (weights row-major, then biases).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend(w.iter());
            v.extend(b.iter());
        }
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = flat[pos];
                pos += 1;
            }
        }
        assert_eq!(pos, flat.len(), "flat parameter length mismatch");
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend(w.iter());
            v.extend(b.iter());
        }
        v
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainingReport {
    pub final_loss: f64,
    pub epochs: usize,
    pub converged: bool,
    pub loss_curve: Vec<f64>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Tracks the best loss and counts epochs without `tol` improvement.
struct EarlyStop {
    best: f64,
    stale: usize,
    tol: f64,
}

impl EarlyStop {
    fn new(tol: f64) -> Self {
        Self {
            best: f64::INFINITY,
            stale: 0,
            tol,
        }
    }

    fn update(&mut self, loss: f64) {
        if loss > self.best - self.tol {
            self.stale += 1;
        } else {
            self.stale = 0;
        }
        self.best = self.best.min(loss);
    }
}

/// Trains a network on rows of `x` with class indices `y` (0 or 1).
///
/// Inputs must already be validated (finite, consistent width, both classes).
pub fn train(x: &Array2<f64>, y: &[usize], params: &MlpParams) -> (Mlp, MlpTrainingReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut net = Mlp::init(x.ncols(), &params.hidden_layers, params.activation, &mut rng);
    let report = match params.solver {
        Solver::Lbfgs => train_lbfgs(&mut net, x, y, params),
        Solver::Adam | Solver::Sgd => train_minibatch(&mut net, x, y, params, &mut rng),
    };
    (net, report)
}

fn train_minibatch(
    net: &mut Mlp,
    x: &Array2<f64>,
    y: &[usize],
    params: &MlpParams,
    rng: &mut ChaCha8Rng,
) -> MlpTrainingReport {
    let n = x.nrows();
    let batch = params.batch_size.min(n);
    let mut flat = net.flat_params();
    let mut adam = AdamState {
        m: vec![0.0; flat.len()],
        v: vec![0.0; flat.len()],
        t: 0,
    };
    let mut velocity = vec![0.0; flat.len()];
    let mut lr = params.base_lr;
    let mut samples_seen = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut stop = EarlyStop::new(params.tol);
    let mut curve = Vec::new();
    let mut converged = false;

    for _epoch in 0..params.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grads) = net.loss_and_gradients(xb.view(), &yb);
            epoch_loss += loss * chunk.len() as f64;
            samples_seen += chunk.len();
            let g = grads.flat();
            match params.solver {
                Solver::Adam => {
                    adam.t += 1;
                    let bc1 = 1.0 - params.beta1.powi(adam.t);
                    let bc2 = 1.0 - params.beta2.powi(adam.t);
                    let step = params.base_lr * bc2.sqrt() / bc1;
                    for i in 0..flat.len() {
                        adam.m[i] = params.beta1 * adam.m[i] + (1.0 - params.beta1) * g[i];
                        adam.v[i] = params.beta2 * adam.v[i] + (1.0 - params.beta2) * g[i] * g[i];
                        flat[i] -= step * adam.m[i] / (adam.v[i].sqrt() + params.epsilon);
                    }
                }
                _ => {
                    if params.learning_rate == LearningRateSchedule::Invscaling {
                        lr = params.base_lr / (samples_seen as f64 + 1.0).powf(0.5);
                    }
                    // Nesterov momentum.
                    for i in 0..flat.len() {
                        velocity[i] = params.momentum * velocity[i] - lr * g[i];
                        flat[i] += params.momentum * velocity[i] - lr * g[i];
                    }
                }
            }
            net.set_flat_params(&flat);
        }
        let epoch_loss = epoch_loss / n as f64;
        curve.push(epoch_loss);
        if !epoch_loss.is_finite() {
            break;
        }
        stop.update(epoch_loss);
        if stop.stale > params.n_iter_no_change {
            if params.solver == Solver::Sgd && params.learning_rate == LearningRateSchedule::Adaptive {
                if lr > 1e-6 {
                    lr /= 5.0;
                    stop.stale = 0;
                    continue;
                }
            }
            converged = true;
            break;
        }
    }
    MlpTrainingReport {
        final_loss: *curve.last().unwrap_or(&f64::NAN),
        epochs: curve.len(),
        converged,
        loss_curve: curve,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full-batch limited-memory BFGS with a backtracking Armijo line search.
fn train_lbfgs(net: &mut Mlp, x: &Array2<f64>, y: &[usize], params: &MlpParams) -> MlpTrainingReport {
    const MEMORY: usize = 10;
    let mut w = net.flat_params();
    let (mut loss, g) = net.loss_and_gradients(x.view(), y);
    let mut g = g.flat();
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut curve = vec![loss];
    let mut stop = EarlyStop::new(params.tol);
    let mut converged = false;

    for _ in 0..params.max_epochs {
        // Two-loop recursion for the search direction -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .last()
            .map_or(1.0 / dot(&g, &g).sqrt().max(1e-12), |(s, yv, _)| dot(s, yv) / dot(yv, yv));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        let dir = if slope >= 0.0 {
            history.clear();
            slope = -dot(&g, &g);
            g.iter().map(|v| -v).collect()
        } else {
            dir
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(wi, di)| wi + step * di).collect();
            net.set_flat_params(&trial);
            let trial_loss = net.loss(x.view(), y);
            if trial_loss.is_finite() && trial_loss <= loss + 1e-4 * step * slope {
                accepted = Some((trial, trial_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((new_w, new_loss)) = accepted else {
            net.set_flat_params(&w);
            converged = true;
            break;
        };
        net.set_flat_params(&new_w);
        let (_, new_g) = net.loss_and_gradients(x.view(), y);
        let new_g = new_g.flat();
        let s: Vec<f64> = new_w.iter().zip(&w).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = new_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            history.push((s, yv, 1.0 / sy));
            if history.len() > MEMORY {
                history.remove(0);
            }
        }
        w = new_w;
        g = new_g;
        loss = new_loss;
        curve.push(loss);
        stop.update(loss);
        if stop.stale > params.n_iter_no_change || dot(&g, &g).sqrt() < 1e-10 {
            converged = true;
            break;
        }
    }
    MlpTrainingReport {
        final_loss: loss,
        epochs: curve.len() - 1,
        converged,
        loss_curve: curve,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_is_uniform() {
        let net = Mlp::zeros(3, &[4], Activation::Relu);
        let p = net.predict_proba_batch(array![[1.0, -2.0, 3.0]].view());
        assert_eq!(p, array![[0.5, 0.5]]);
    }

    #[test]
    fn parameter_count_matches_layout() {
        let p = MlpParams::default();
        // 13*300+300 + 300*128+128 + 128*64+64 + 64*2+2
        assert_eq!(p.parameter_count(13), 4200 + 38528 + 8256 + 130);
        let net = Mlp::zeros(13, &p.hidden_layers, Activation::Relu);
        assert_eq!(net.flat_params().len(), p.parameter_count(13));
        assert_eq!(net.layer_sizes(), vec![13, 300, 128, 64, 2]);
    }

    #[test]
    fn solvers_reduce_loss() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.1, 0.9], [0.9, 0.1]];
        let y = [0, 1, 1, 0, 1, 1];
        for solver in Solver::ALL {
            for schedule in LearningRateSchedule::ALL {
                let params = MlpParams {
                    hidden_layers: vec![8],
                    solver,
                    learning_rate: schedule,
                    base_lr: if solver == Solver::Sgd { 0.05 } else { 1e-2 },
                    max_epochs: 50,
                    ..MlpParams::default()
                };
                let (_, rep) = train(&x, &y, &params);
                assert!(rep.final_loss.is_finite());
                assert!(
                    rep.final_loss < rep.loss_curve[0],
                    "{solver:?}/{schedule:?} did not reduce loss"
                );
            }
        }
    }
}
