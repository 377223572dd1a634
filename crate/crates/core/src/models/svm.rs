//! Soft-margin kernel SVM trained by Platt's sequential minimal optimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
    Sigmoid,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Linear,
        KernelKind::Poly,
        KernelKind::Rbf,
        KernelKind::Sigmoid,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    pub kernel: KernelKind,
    pub gamma: f64,
    pub c: f64,
    /// Offset for the poly and sigmoid kernels.
    pub coef0: f64,
    pub degree: u32,
    /// KKT tolerance.
    pub tol: f64,
    /// Cap on full sweeps over the training set.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            gamma: 0.4,
            c: 20.0,
            coef0: 0.0,
            degree: 3,
            tol: 1e-3,
            max_passes: 10,
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ModelError::InvalidParams(format!("C must be positive, got {}", self.c)));
        }
        if self.kernel != KernelKind::Linear && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "gamma must be positive for the {:?} kernel, got {}",
                self.kernel, self.gamma
            )));
        }
        if !(self.tol > 0.0) || self.max_passes == 0 {
            return Err(ModelError::InvalidParams("tol and max_passes must be positive".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Kernel {
        Kernel {
            kind: self.kernel,
            gamma: self.gamma,
            coef0: self.coef0,
            degree: self.degree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub coef0: f64,
    pub degree: u32,
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            gamma,
            coef0: 0.0,
            degree: 3,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            gamma: 1.0,
            coef0: 0.0,
            degree: 1,
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot = || a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        match self.kind {
            KernelKind::Linear => dot(),
            KernelKind::Poly => (self.gamma * dot() + self.coef0).powi(self.degree as i32),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Sigmoid => (self.gamma * dot() + self.coef0).tanh(),
        }
    }
}

/// Trained decision function `f(x) = sum_i coef_i K(sv_i, x) + bias`, where
/// `coef_i = alpha_i y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
}

impl SvmModel {
    pub fn n_inputs(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (a, y))| a * y * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoReport {
    pub pair_updates: usize,
    pub full_passes: usize,
    /// False when the sweep or update budget ran out before the KKT conditions held.
    pub converged: bool,
    pub max_kkt_violation: f64,
    pub dual_objective: f64,
}

/// Full solution over the training set, before pruning to support vectors.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub report: SmoReport,
    /// Dual objective after every successful pair update (only when tracing).
    pub objective_trace: Vec<f64>,
}

struct Smo<'a> {
    gram: Vec<f64>,
    n: usize,
    y: &'a [f64],
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    /// g_i = sum_j alpha_j y_j K_ij
    g: Vec<f64>,
    b: f64,
    rng: ChaCha8Rng,
    trace: Option<Vec<f64>>,
    updates: usize,
}

/// Minimum relative change of an alpha that counts as progress.
const ALPHA_EPS: f64 = 1e-12;

impl Smo<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n + j]
    }

    fn error(&self, i: usize) -> f64 {
        self.g[i] + self.b - self.y[i]
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn objective(&self) -> f64 {
        self.alpha.iter().sum::<f64>()
            - 0.5
                * (0..self.n)
                    .map(|i| self.alpha[i] * self.y[i] * self.g[i])
                    .sum::<f64>()
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.error(i1), self.error(i2));
        let s = y1 * y2;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), (self.c + a2 - a1).min(self.c))
        } else {
            ((a1 + a2 - self.c).max(0.0), (a1 + a2).min(self.c))
        };
        if lo >= hi {
            return false;
        }
        let (k11, k12, k22) = (self.k(i1, i1), self.k(i1, i2), self.k(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        // Dual objective gain of moving alpha2 by t along the constraint line.
        let gain = |t: f64| t * y2 * (e1 - e2) - 0.5 * eta * t * t;
        let mut new_a2 = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            let (g_lo, g_hi) = (gain(lo - a2), gain(hi - a2));
            if g_lo > g_hi + ALPHA_EPS {
                lo
            } else if g_hi > g_lo + ALPHA_EPS {
                hi
            } else {
                a2
            }
        };
        if new_a2 < 1e-12 * self.c {
            new_a2 = 0.0;
        } else if new_a2 > self.c * (1.0 - 1e-12) {
            new_a2 = self.c;
        }
        if (new_a2 - a2).abs() < ALPHA_EPS * (new_a2 + a2 + ALPHA_EPS) {
            return false;
        }
        let mut new_a1 = a1 + s * (a2 - new_a2);
        if new_a1 < 1e-12 * self.c {
            new_a1 = 0.0;
        } else if new_a1 > self.c * (1.0 - 1e-12) {
            new_a1 = self.c;
        }

        let (d1, d2) = (y1 * (new_a1 - a1), y2 * (new_a2 - a2));
        let b1 = self.b - e1 - d1 * k11 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2 * k22;
        self.alpha[i1] = new_a1;
        self.alpha[i2] = new_a2;
        self.b = if self.is_free(i1) {
            b1
        } else if self.is_free(i2) {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        for k in 0..self.n {
            self.g[k] += d1 * self.gram[i1 * self.n + k] + d2 * self.gram[i2 * self.n + k];
        }
        self.updates += 1;
        if self.trace.is_some() {
            let w = self.objective();
            self.trace.as_mut().unwrap().push(w);
        }
        true
    }

    fn violates_kkt(&self, i: usize) -> bool {
        let r = self.error(i) * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates_kkt(i2) {
            return false;
        }
        let e2 = self.error(i2);
        let free: Vec<usize> = (0..self.n).filter(|&i| self.is_free(i)).collect();
        if free.len() > 1 {
            let best = free
                .iter()
                .copied()
                .max_by(|&a, &b| (self.error(a) - e2).abs().total_cmp(&(self.error(b) - e2).abs()));
            if let Some(i1) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        if !free.is_empty() {
            let start = self.rng.gen_range(0..free.len());
            for k in 0..free.len() {
                if self.take_step(free[(start + k) % free.len()], i2) {
                    return true;
                }
            }
        }
        let start = self.rng.gen_range(0..self.n);
        for k in 0..self.n {
            if self.take_step((start + k) % self.n, i2) {
                return true;
            }
        }
        false
    }

    /// Bias from the final alphas: mean over free vectors, else the midpoint
    /// of the interval allowed by the bound vectors.
    fn final_bias(&self) -> f64 {
        let free: Vec<f64> = (0..self.n)
            .filter(|&i| self.is_free(i))
            .map(|i| self.y[i] - self.g[i])
            .collect();
        if !free.is_empty() {
            return free.iter().sum::<f64>() / free.len() as f64;
        }
        let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..self.n {
            let v = self.y[i] - self.g[i];
            let at_upper = self.alpha[i] >= self.c;
            // y=+1 at 0 or y=-1 at C bound b from below; the other two from above.
            if (self.y[i] > 0.0) != at_upper {
                lower = lower.max(v);
            } else {
                upper = upper.min(v);
            }
        }
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    }

    fn max_violation(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let r = self.error(i) * self.y[i];
                let mut v: f64 = 0.0;
                if self.alpha[i] < self.c {
                    v = v.max(-r);
                }
                if self.alpha[i] > 0.0 {
                    v = v.max(r);
                }
                v
            })
            .fold(0.0, f64::max)
    }
}

/// Solves the soft-margin dual over `x` with targets `y` in {-1, +1}.
pub fn smo_solve(x: &[Vec<f64>], y: &[f64], params: &SvmParams, trace: bool) -> SmoSolution {
    let n = x.len();
    let kernel = params.kernel();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&x[i], &x[j]);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let mut smo = Smo {
        gram,
        n,
        y,
        c: params.c,
        tol: params.tol,
        alpha: vec![0.0; n],
        g: vec![0.0; n],
        b: 0.0,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        trace: trace.then(Vec::new),
        updates: 0,
    };
    let max_updates = 1000 * n.max(100);
    let mut full_passes = 0;
    let mut examine_all = true;
    let mut finished = false;
    while smo.updates < max_updates {
        let mut changed = 0;
        if examine_all {
            if full_passes == params.max_passes {
                break;
            }
            full_passes += 1;
            for i in 0..n {
                changed += smo.examine(i) as usize;
            }
        } else {
            for i in 0..n {
                if smo.is_free(i) {
                    changed += smo.examine(i) as usize;
                }
            }
        }
        if examine_all && changed == 0 {
            finished = true;
            break;
        }
        examine_all = changed == 0;
    }
    smo.b = smo.final_bias();
    let max_kkt_violation = smo.max_violation();
    SmoSolution {
        bias: smo.b,
        report: SmoReport {
            pair_updates: smo.updates,
            full_passes,
            converged: finished && max_kkt_violation <= params.tol,
            max_kkt_violation,
            dual_objective: smo.objective(),
        },
        objective_trace: smo.trace.take().unwrap_or_default(),
        alphas: smo.alpha,
    }
}

/// Trains and prunes to the vectors with non-zero alpha.
pub fn train(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> (SvmModel, SmoReport) {
    let sol = smo_solve(x, y, params, false);
    let keep: Vec<usize> = (0..x.len()).filter(|&i| sol.alphas[i] > 0.0).collect();
    let model = SvmModel {
        kernel: params.kernel(),
        c: params.c,
        support_vectors: keep.iter().map(|&i| x[i].clone()).collect(),
        alphas: keep.iter().map(|&i| sol.alphas[i]).collect(),
        labels: keep.iter().map(|&i| y[i]).collect(),
        bias: sol.bias,
    };
    (model, sol.report)
}
