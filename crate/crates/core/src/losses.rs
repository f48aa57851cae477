//! Training objectives and the attention diagnostic.
//!
//! All losses are means over the batch and return their gradient with
//! respect to the input they were given.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops::sigmoid;
use crate::tensor::Matrix;

/// Guard for cosine denominators.
pub const COSINE_EPS: f64 = 1e-12;
/// Probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]` before taking logs.
pub const P_CLAMP: f64 = 1e-12;

/// Response and domain labels of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLabels {
    /// 1 = sensitive, 0 = resistant.
    pub response: Vec<u8>,
    pub domain: Vec<usize>,
}

impl BatchLabels {
    pub fn new(response: Vec<u8>, domain: Vec<usize>, domains: usize) -> Result<Self> {
        if response.len() != domain.len() {
            return Err(Error::Dimension(format!(
                "{} response labels but {} domain labels",
                response.len(),
                domain.len()
            )));
        }
        check_binary(&response)?;
        if let Some(&d) = domain.iter().find(|&&d| d >= domains) {
            return Err(Error::Label(format!(
                "domain index {d} outside 0..{domains}"
            )));
        }
        Ok(Self { response, domain })
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }
}

fn check_binary(labels: &[u8]) -> Result<()> {
    match labels.iter().find(|&&y| y > 1) {
        Some(y) => Err(Error::Label(format!("response label {y} is not 0 or 1"))),
        None => Ok(()),
    }
}

/// The weighted sum of the three training terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_asy: f64,
    pub l_adv: f64,
    pub l_cls: f64,
    pub total: f64,
}

pub fn total_loss(l_asy: f64, l_adv: f64, l_cls: f64, lambda1: f64, lambda2: f64) -> LossBreakdown {
    LossBreakdown {
        l_asy,
        l_adv,
        l_cls,
        total: l_adv + lambda1 * l_asy + lambda2 * l_cls,
    }
}

#[derive(Debug, Clone)]
pub struct AsymmetricLoss {
    pub value: f64,
    pub grad: Matrix,
    /// Set when the batch had no positive anchor, or some anchor lacked
    /// positive partners or negatives.
    pub degenerate: bool,
}

/// Asymmetric cosine loss over frequency-domain features.
///
/// Every sensitive sample acts as an anchor: its mean cosine to the other
/// sensitive samples is rewarded and its mean cosine to the resistant
/// samples is penalized. Resistant samples are never compared with each
/// other. The loss is the mean over anchors; a missing partner set
/// contributes zero.
pub fn asymmetric_loss(z: &Matrix, response: &[u8]) -> Result<AsymmetricLoss> {
    let b = z.rows();
    if response.len() != b {
        return Err(Error::Dimension(format!(
            "{b} feature rows but {} labels",
            response.len()
        )));
    }
    check_binary(response)?;
    let positives: Vec<usize> = (0..b).filter(|&i| response[i] == 1).collect();
    let negatives: Vec<usize> = (0..b).filter(|&i| response[i] == 0).collect();
    let (np, nn) = (positives.len(), negatives.len());
    let degenerate = np == 0 || np == 1 || nn == 0;
    if np == 0 {
        return Ok(AsymmetricLoss {
            value: 0.0,
            grad: Matrix::zeros(b, z.cols()),
            degenerate,
        });
    }

    let norms: Vec<f64> = z
        .row_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt().max(COSINE_EPS))
        .collect();
    let mut unit = z.clone();
    for (i, n) in norms.iter().enumerate() {
        unit.row_mut(i).iter_mut().for_each(|v| *v /= n);
    }

    // loss = Σ_ij coef_ij · cos(i, j)
    let mut coef = Matrix::zeros(b, b);
    let pos_w = if np > 1 {
        -1.0 / (np as f64 * (np - 1) as f64)
    } else {
        0.0
    };
    let neg_w = if nn > 0 {
        1.0 / (np as f64 * nn as f64)
    } else {
        0.0
    };
    for &i in &positives {
        for &j in &positives {
            if i != j {
                coef.set(i, j, pos_w);
            }
        }
        for &k in &negatives {
            coef.set(i, k, neg_w);
        }
    }
    let gram = unit.matmul_nt(&unit)?;
    let value: f64 = coef
        .as_slice()
        .iter()
        .zip(gram.as_slice())
        .map(|(c, g)| c * g)
        .sum();

    let mut sym = coef.clone();
    sym.add_assign(&coef.transpose())?;
    let dunit = sym.matmul(&unit)?;
    let mut grad = Matrix::zeros(b, z.cols());
    for (i, &norm) in norms.iter().enumerate() {
        let u = unit.row(i);
        let du = dunit.row(i);
        let radial: f64 = u.iter().zip(du).map(|(a, g)| a * g).sum();
        let raw_norm = norm > COSINE_EPS;
        for ((g, &d), &uv) in grad.row_mut(i).iter_mut().zip(du).zip(u) {
            *g = if raw_norm {
                (d - radial * uv) / norm
            } else {
                d / norm
            };
        }
    }
    Ok(AsymmetricLoss {
        value,
        grad,
        degenerate,
    })
}

/// Mean softmax cross-entropy against domain labels, with gradient
/// `(softmax − onehot) / b` on the logits.
pub fn domain_adversarial_loss(logits: &Matrix, domain: &[usize]) -> Result<(f64, Matrix)> {
    let (b, m) = logits.shape();
    if m < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 domains, got {m}"
        )));
    }
    if domain.len() != b {
        return Err(Error::Dimension(format!(
            "{b} logit rows but {} domain labels",
            domain.len()
        )));
    }
    if let Some(&d) = domain.iter().find(|&&d| d >= m) {
        return Err(Error::Label(format!("domain index {d} outside 0..{m}")));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(b, m);
    for (i, &label) in domain.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (row[c] - log_z).exp();
            *g = (p - if c == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Mean binary cross-entropy of predicted sensitivity probabilities, with
/// gradient on the (clamped) probabilities.
pub fn classification_loss(p: &[f64], response: &[u8]) -> Result<(f64, Vec<f64>)> {
    if p.len() != response.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities but {} labels",
            p.len(),
            response.len()
        )));
    }
    check_binary(response)?;
    let b = p.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&p, &y) in p.iter().zip(response) {
        let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
        let y = y as f64;
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push((-y / p + (1.0 - y) / (1.0 - p)) / b);
    }
    Ok((loss / b, grad))
}

/// Scaled dot-product similarities `z_iᵀz_j / √d`, for inspection only.
pub fn attention_diagnostic(z: &Matrix) -> Result<Matrix> {
    let scale = 1.0 / (z.cols() as f64).sqrt();
    Ok(z.matmul_nt(z)?.scale(scale))
}

/// Logistic link used by the response head.
pub fn response_probabilities(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&v| sigmoid(v)).collect()
}
