//! ε-support-vector regression with an RBF kernel, trained by sequential
//! pairwise coordinate optimization (maximal-violating-pair selection).
//!
//! The dual is solved in the doubled variable space θ = (α, α*) with the
//! box 0 ≤ θ ≤ C and the single equality Σα − Σα* = 0. Training
//! materializes the full n×n kernel matrix, so it is meant for corpus
//! sizes in the thousands, not millions.

use serde::{Deserialize, Serialize};

use super::TrainingSample;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

const FEATURE_COUNT: usize = 10;

/// Convergence threshold on the maximal KKT violation.
const SVR_TOL: f64 = 1e-3;
/// Guard for the pair curvature when two identical points are paired.
const CURVATURE_FLOOR: f64 = 1e-12;
/// Hard cap on pair updates; hitting it leaves a feasible, near-optimal
/// model and logs a warning.
const MAX_ITER: usize = 1_000_000;

/// SVR hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    /// Box constraint on the dual coefficients.
    pub c: f64,
    /// RBF kernel width: K(x, z) = exp(−gamma·‖x−z‖²).
    pub gamma: f64,
    /// Half-width of the insensitive tube around the regression function.
    pub epsilon: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 100.0,
            gamma: 0.5,
            epsilon: 0.2,
        }
    }
}

/// A trained ε-SVR: only points with a nonzero dual coefficient are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_points: Vec<[f64; FEATURE_COUNT]>,
    /// β_i = α_i − α*_i per support point, in (−C, 0) ∪ (0, C].
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub params: SvrParams,
}

/// RBF kernel between feature arrays.
fn rbf(gamma: f64, a: &[f64; FEATURE_COUNT], b: &[f64; FEATURE_COUNT]) -> f64 {
    let mut d2 = 0.0;
    for c in 0..FEATURE_COUNT {
        let d = a[c] - b[c];
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

/// The working state of the doubled-variable dual problem. Index t < n is
/// α_t (sign +1), index t ≥ n is α*_{t−n} (sign −1).
struct Solver {
    n: usize,
    kernel: Vec<f64>,
    theta: Vec<f64>,
    grad: Vec<f64>,
    c: f64,
}

impl Solver {
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    /// −sign_t · ∇f_t, the quantity whose spread measures KKT violation
    /// and whose value at free coordinates equals the bias.
    fn m(&self, t: usize) -> f64 {
        -self.sign(t) * self.grad[t]
    }

    fn in_up(&self, t: usize) -> bool {
        if t < self.n {
            self.theta[t] < self.c
        } else {
            self.theta[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if t < self.n {
            self.theta[t] > 0.0
        } else {
            self.theta[t] < self.c
        }
    }

    /// Maximal violating pair: argmax of m over the up-set and argmin
    /// over the low-set. First index wins ties, keeping runs bit-stable.
    fn select_pair(&self) -> ((usize, f64), (usize, f64)) {
        let mut up = (usize::MAX, f64::NEG_INFINITY);
        let mut low = (usize::MAX, f64::INFINITY);
        for t in 0..2 * self.n {
            let m = self.m(t);
            if self.in_up(t) && m > up.1 {
                up = (t, m);
            }
            if self.in_low(t) && m < low.1 {
                low = (t, m);
            }
        }
        (up, low)
    }

    /// Optimizes the two coordinates along the equality constraint and
    /// refreshes the gradient.
    fn update_pair(&mut self, i: usize, j: usize, gap: f64) {
        let (pi, pj) = (i % self.n, j % self.n);
        let kij = self.kernel[pi * self.n + pj];
        let a = (self.kernel[pi * self.n + pi] + self.kernel[pj * self.n + pj] - 2.0 * kij)
            .max(CURVATURE_FLOOR);
        let mut step = gap / a;

        let cap_i = if i < self.n {
            self.c - self.theta[i]
        } else {
            self.theta[i]
        };
        let cap_j = if j < self.n {
            self.theta[j]
        } else {
            self.c - self.theta[j]
        };
        step = step.min(cap_i).min(cap_j);

        let ni = (self.theta[i] + self.sign(i) * step).clamp(0.0, self.c);
        let nj = (self.theta[j] - self.sign(j) * step).clamp(0.0, self.c);
        // Δβ contributions of the two moved coordinates.
        let di = self.sign(i) * (ni - self.theta[i]);
        let dj = self.sign(j) * (nj - self.theta[j]);
        self.theta[i] = ni;
        self.theta[j] = nj;

        for u in 0..self.n {
            let g = self.kernel[u * self.n + pi] * di + self.kernel[u * self.n + pj] * dj;
            self.grad[u] += g;
            self.grad[u + self.n] -= g;
        }
    }
}

/// Trains the ε-SVR. Deterministic: ties in pair selection are broken by
/// index, so a fixed sample list always yields the same model.
pub fn train_svr(samples: &[TrainingSample], params: SvrParams) -> Result<SvrModel> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let n = samples.len();
    let xs: Vec<[f64; FEATURE_COUNT]> = samples.iter().map(|s| s.features.to_array()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.target).collect();

    let mut kernel = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = rbf(params.gamma, &xs[i], &xs[j]);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    // θ = 0 is feasible; there ∇f equals the linear term (ε−y, ε+y).
    let mut grad = vec![0.0f64; 2 * n];
    for i in 0..n {
        grad[i] = params.epsilon - ys[i];
        grad[i + n] = params.epsilon + ys[i];
    }
    let mut solver = Solver {
        n,
        kernel,
        theta: vec![0.0; 2 * n],
        grad,
        c: params.c,
    };

    let mut iterations = 0usize;
    loop {
        let ((i, m_up), (j, m_low)) = solver.select_pair();
        if m_up - m_low < SVR_TOL {
            break;
        }
        solver.update_pair(i, j, m_up - m_low);
        iterations += 1;
        if iterations >= MAX_ITER {
            log::warn!("svr training stopped after {MAX_ITER} pair updates before full convergence");
            break;
        }
    }

    // Bias: average of m over free coordinates, else the midpoint of the
    // bound-derived interval.
    let free: Vec<usize> = (0..2 * n)
        .filter(|&t| solver.theta[t] > 0.0 && solver.theta[t] < params.c)
        .collect();
    let bias = if free.is_empty() {
        let ((_, m_up), (_, m_low)) = solver.select_pair();
        (m_up + m_low) / 2.0
    } else {
        free.iter().map(|&t| solver.m(t)).sum::<f64>() / free.len() as f64
    };

    let mut support_points = Vec::new();
    let mut dual_coeffs = Vec::new();
    for i in 0..n {
        let beta = solver.theta[i] - solver.theta[i + n];
        if beta != 0.0 {
            support_points.push(xs[i]);
            dual_coeffs.push(beta);
        }
    }

    Ok(SvrModel {
        support_points,
        dual_coeffs,
        bias,
        params,
    })
}

/// Decision function: Σ_i β_i·K(s_i, x) + bias.
pub fn predict_svr(model: &SvrModel, x: &FeatureVector) -> f64 {
    let x = x.to_array();
    let mut sum = model.bias;
    for (s, beta) in model.support_points.iter().zip(&model.dual_coeffs) {
        sum += beta * rbf(model.params.gamma, s, &x);
    }
    sum
}
