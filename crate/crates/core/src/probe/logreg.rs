//! Binary L2-regularized logistic regression fitted by Newton's method.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeConfig {
    /// Penalty `l2 / 2 * |w|^2` added to the summed log-loss; the bias is not penalized.
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2: 1.0,
            max_iter: 1000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    pub l2: f64,
    pub seed: u64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem {
    /// Features with a trailing column of ones.
    xa: DMatrix<f64>,
    y: DVector<f64>,
    l2: f64,
}

impl Problem {
    fn new(x: &DMatrix<f64>, y: &[bool], l2: f64) -> Self {
        let (n, d) = x.shape();
        let mut xa = DMatrix::from_element(n, d + 1, 1.0);
        xa.columns_mut(0, d).copy_from(x);
        Problem {
            xa,
            y: DVector::from_iterator(n, y.iter().map(|&b| if b { 1.0 } else { 0.0 })),
            l2,
        }
    }

    fn dim(&self) -> usize {
        self.xa.ncols() - 1
    }

    fn loss(&self, theta: &DVector<f64>) -> f64 {
        let d = self.dim();
        let z = &self.xa * theta;
        let data: f64 = z.iter().zip(self.y.iter()).map(|(&z, &y)| softplus(z) - y * z).sum();
        data + 0.5 * self.l2 * theta.rows(0, d).norm_squared()
    }

    fn gradient_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let z = &self.xa * theta;
        let p = z.map(sigmoid);
        let mut g = self.xa.tr_mul(&(&p - &self.y));
        let mut scaled = self.xa.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= p[i] * (1.0 - p[i]);
        }
        let mut h = self.xa.tr_mul(&scaled);
        for j in 0..d {
            g[j] += self.l2 * theta[j];
            h[(j, j)] += self.l2;
        }
        // keeps the system solvable once the fit saturates
        for j in 0..=d {
            h[(j, j)] += 1e-10;
        }
        (g, h)
    }
}

/// Fit a probe on rows of `x` (`N x D`). Initialization is zero, so the result
/// depends only on the inputs; the seed is recorded for provenance.
pub fn train_probe(x: &DMatrix<f64>, y: &[bool], config: &ProbeConfig) -> Result<Probe> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::Input(format!("{n} samples but {} labels", y.len())));
    }
    if n < 2 {
        return Err(Error::Input(format!("{n} samples, need at least 2")));
    }
    if !y.iter().any(|&b| b) || y.iter().all(|&b| b) {
        return Err(Error::DegenerateLabels("both classes must be present".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("features contain non-finite values".into()));
    }
    let problem = Problem::new(x, y, config.l2);
    let mut theta = DVector::zeros(d + 1);
    let mut loss = problem.loss(&theta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let (g, h) = problem.gradient_hessian(&theta);
        if g.norm() <= config.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => h
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::Numerical("singular Hessian".into()))?,
        };
        let slope = g.dot(&step);
        if slope <= 1e-10 * (1.0 + loss.abs()) {
            // close enough that the loss cannot resolve progress; take the full step
            theta -= &step;
            loss = problem.loss(&theta);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let candidate = &theta - &step * t;
            let l = problem.loss(&candidate);
            if l <= loss - 1e-4 * t * slope {
                theta = candidate;
                loss = l;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further decrease at machine precision
            converged = g.norm() <= config.tol.max(1e-8 * (1.0 + loss));
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("probe weights diverged".into()));
    }
    Ok(Probe {
        weights: theta.rows(0, d).iter().copied().collect(),
        bias: theta[d],
        iterations,
        converged,
        l2: config.l2,
        seed: config.seed,
    })
}

impl Probe {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn predict_row(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<bool> {
        x.row_iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().copied().collect();
                self.predict_row(&v)
            })
            .collect()
    }

    pub fn accuracy(&self, x: &DMatrix<f64>, y: &[bool]) -> f64 {
        let pred = self.predict(x);
        let hits = pred.iter().zip(y).filter(|(p, y)| p == y).count();
        hits as f64 / y.len().max(1) as f64
    }
}
