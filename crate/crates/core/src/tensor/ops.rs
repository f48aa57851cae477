//! Forward and backward rules for the primitives used by the network.
//!
//! Every forward returns whatever its backward needs; nothing here holds
//! state between calls.

use serde::{Deserialize, Serialize};

use super::{Matrix, Mode, RngState};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// `y = x·W + bias`, bias broadcast over rows.
pub fn affine(x: &Matrix, weight: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if bias.len() != weight.cols() {
        return Err(Error::Dimension(format!(
            "bias has {} entries but weight has {} columns",
            bias.len(),
            weight.cols()
        )));
    }
    let mut y = x.matmul(weight)?;
    for r in 0..y.rows() {
        for (v, b) in y.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dx: Matrix,
    pub dweight: Matrix,
    pub dbias: Vec<f64>,
}

pub fn affine_backward(x: &Matrix, weight: &Matrix, dy: &Matrix) -> Result<AffineGrads> {
    if dy.rows() != x.rows() || dy.cols() != weight.cols() {
        return Err(Error::Dimension(format!(
            "upstream gradient is {}x{}, expected {}x{}",
            dy.rows(),
            dy.cols(),
            x.rows(),
            weight.cols()
        )));
    }
    Ok(AffineGrads {
        dx: dy.matmul_nt(weight)?,
        dweight: x.matmul_tn(dy)?,
        dbias: dy.column_sums(),
    })
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `dy` where the forward input (or, equivalently, output) is
/// strictly positive.
pub fn relu_backward(x: &Matrix, dy: &Matrix) -> Result<Matrix> {
    if x.shape() != dy.shape() {
        return Err(Error::Dimension("relu upstream shape mismatch".into()));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Matrix::from_vec_unchecked(x.rows(), x.cols(), data))
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Per-feature running mean and variance used in eval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(features: usize) -> Self {
        Self {
            mean: vec![0.0; features],
            var: vec![1.0; features],
        }
    }

    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        for (m, b) in self.mean.iter_mut().zip(&batch.mean) {
            *m = (1.0 - momentum) * *m + momentum * b;
        }
        for (v, b) in self.var.iter_mut().zip(&batch.var) {
            *v = (1.0 - momentum) * *v + momentum * b;
        }
    }
}

/// Mean and population variance of one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

/// Train-mode batch normalization. Returns the output, the backward cache
/// and the batch statistics (the caller owns the running-stat update).
pub fn batchnorm_train(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
) -> Result<(Matrix, BatchNormCache, BatchStats)> {
    let (b, m) = x.shape();
    if b < 2 {
        return Err(Error::BatchSize(format!(
            "batch normalization in train mode needs at least 2 samples, got {b}"
        )));
    }
    check_bn_params(m, gamma, beta)?;
    let n = b as f64;
    let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; m];
    for row in x.row_iter() {
        for ((v, x), mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - mu;
            *v += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let mut xhat = x.clone();
    let mut y = Matrix::zeros(b, m);
    for r in 0..b {
        let xr = xhat.row_mut(r);
        for c in 0..m {
            xr[c] = (xr[c] - mean[c]) * inv_std[c];
        }
        let yr = y.row_mut(r);
        for c in 0..m {
            yr[c] = gamma[c] * xhat.get(r, c) + beta[c];
        }
    }
    Ok((
        y,
        BatchNormCache { xhat, inv_std },
        BatchStats { mean, var },
    ))
}

pub fn batchnorm_eval(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    running: &RunningStats,
) -> Result<Matrix> {
    let m = x.cols();
    check_bn_params(m, gamma, beta)?;
    if running.mean.len() != m || running.var.len() != m {
        return Err(Error::Dimension(
            "running statistics length mismatch".into(),
        ));
    }
    let scale: Vec<f64> = (0..m)
        .map(|c| gamma[c] / (running.var[c] + BN_EPS).sqrt())
        .collect();
    let mut y = x.clone();
    for r in 0..y.rows() {
        for (c, v) in y.row_mut(r).iter_mut().enumerate() {
            *v = (*v - running.mean[c]) * scale[c] + beta[c];
        }
    }
    Ok(y)
}

/// Mode-dispatching batch normalization that also applies the running-stat
/// update in train mode.
pub fn batchnorm(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    running: &mut RunningStats,
    mode: Mode,
) -> Result<(Matrix, Option<BatchNormCache>)> {
    match mode {
        Mode::Train => {
            let (y, cache, stats) = batchnorm_train(x, gamma, beta)?;
            running.update(&stats, BN_MOMENTUM);
            Ok((y, Some(cache)))
        }
        Mode::Eval => Ok((batchnorm_eval(x, gamma, beta, running)?, None)),
    }
}

fn check_bn_params(m: usize, gamma: &[f64], beta: &[f64]) -> Result<()> {
    if gamma.len() != m || beta.len() != m {
        return Err(Error::Dimension(format!(
            "batch norm over {m} features got gamma {} / beta {}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &[f64],
    dy: &Matrix,
) -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
    let (b, m) = cache.xhat.shape();
    if dy.shape() != (b, m) {
        return Err(Error::Dimension(
            "batch norm upstream shape mismatch".into(),
        ));
    }
    let n = b as f64;
    let dbeta = dy.column_sums();
    let mut dgamma = vec![0.0; m];
    for r in 0..b {
        for ((g, d), xh) in dgamma.iter_mut().zip(dy.row(r)).zip(cache.xhat.row(r)) {
            *g += d * xh;
        }
    }
    // dx = γ·inv_std/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
    let mut dx = Matrix::zeros(b, m);
    for r in 0..b {
        let xh = cache.xhat.row(r);
        let d = dy.row(r);
        let out = dx.row_mut(r);
        for c in 0..m {
            out[c] = gamma[c] * cache.inv_std[c] / n * (n * d[c] - dbeta[c] - xh[c] * dgamma[c]);
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Per-entry multipliers of an inverted-dropout pass; `None` is the identity.
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn kept_fraction(&self) -> Option<f64> {
        self.0
            .as_ref()
            .map(|m| m.iter().filter(|&&v| v != 0.0).count() as f64 / m.len().max(1) as f64)
    }
}

pub fn dropout(
    x: &Matrix,
    p: f64,
    rng: &mut RngState,
    mode: Mode,
) -> Result<(Matrix, DropoutMask)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), DropoutMask::identity()));
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.as_slice().len())
        .map(|_| if rng.uniform() >= p { scale } else { 0.0 })
        .collect();
    let y = x.as_slice().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((
        Matrix::from_vec_unchecked(x.rows(), x.cols(), y),
        DropoutMask(Some(mask)),
    ))
}

pub fn dropout_backward(mask: &DropoutMask, dy: &Matrix) -> Matrix {
    match &mask.0 {
        None => dy.clone(),
        Some(m) => {
            assert_eq!(m.len(), dy.as_slice().len(), "dropout mask shape mismatch");
            let data = dy.as_slice().iter().zip(m).map(|(g, m)| g * m).collect();
            Matrix::from_vec_unchecked(dy.rows(), dy.cols(), data)
        }
    }
}
