//! Finite-difference check of the full backward pass on a small model.

use super::{batch_objective, network_for, Batch, TrainConfig};
use crate::error::Result;
use crate::model::{Architecture, ModelParams, Upstream, Weights};
use crate::tensor::{grad_check, GradCheckReport, Matrix, Mode, RngState};

pub const TENSOR_NAMES: [&str; 14] = [
    "encoder1.weight",
    "encoder1.bias",
    "norm1.gamma",
    "norm1.beta",
    "encoder2.weight",
    "encoder2.bias",
    "norm2.gamma",
    "norm2.beta",
    "classifier.weight",
    "classifier.bias",
    "disc_hidden.weight",
    "disc_hidden.bias",
    "disc_out.weight",
    "disc_out.bias",
];

const STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: &'static str,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone)]
pub struct GradSuiteReport {
    /// One entry per trainable tensor.
    pub tensors: Vec<TensorCheck>,
    /// Encoder gradient arriving through the reversal layer alone, compared
    /// with `−c` times the finite-difference gradient of the adversarial loss.
    pub reversal: GradCheckReport,
    pub max_rel_err: f64,
}

struct Problem {
    cfg: TrainConfig,
    params: ModelParams,
    x: Matrix,
    response: Vec<u8>,
    domain: Vec<usize>,
}

impl Problem {
    fn batch(&self) -> Batch<'_> {
        Batch {
            x: &self.x,
            response: &self.response,
            domain: &self.domain,
        }
    }
}

fn problem(seed: u64) -> Result<Problem> {
    let cfg = TrainConfig {
        lambda1: 0.7,
        lambda2: 1.3,
        grl_coefficient: 0.8,
        dropout_p: 0.0,
        hidden: 10,
        latent: 8,
        disc_hidden: 6,
        seed,
        ..Default::default()
    };
    let arch = Architecture {
        genes: 12,
        hidden: 10,
        d: 8,
        disc_hidden: 6,
        domains: 3,
    };
    let mut rng = RngState::new(seed);
    let genes = (0..arch.genes).map(|j| format!("g{j}")).collect();
    let mut params = ModelParams::init(arch, genes, &mut rng)?;
    // move batch-norm affine parameters and biases off their trivial init
    for t in params.weights.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.2 * rng.normal();
        }
    }
    let data: Vec<f64> = (0..6 * 12).map(|_| rng.normal()).collect();
    Ok(Problem {
        cfg,
        params,
        x: Matrix::new(6, 12, data)?,
        response: vec![1, 0, 1, 1, 0, 0],
        domain: vec![0, 1, 2, 2, 0, 1],
    })
}

/// Runs the gradient suite on the reduced model (12 genes, widths 10 and 8,
/// three domains, batch of six, dropout off).
///
/// Head parameters are checked against the total objective. Encoder
/// parameters see the adversarial term through the reversal layer, so
/// their reference objective is `λ1·l_asy + λ2·l_cls − c·l_adv`.
pub fn reduced_model_gradcheck(seed: u64) -> Result<GradSuiteReport> {
    let p = problem(seed)?;
    let network = network_for(&p.cfg)?;
    let c = p.cfg.grl_coefficient;
    let mut rng = RngState::new(0);

    let obj = batch_objective(
        &network,
        &p.params,
        p.batch(),
        &p.cfg,
        Mode::Train,
        &mut rng,
    )?;
    let grads = network.backward(&p.params, obj.forward.tape.expect("tape"), &obj.upstream)?;

    let evaluate = |weights: &Weights| -> Result<(f64, f64, f64)> {
        let params = ModelParams {
            weights: weights.clone(),
            ..p.params.clone()
        };
        let o = batch_objective(
            &network,
            &params,
            p.batch(),
            &p.cfg,
            Mode::Train,
            &mut RngState::new(0),
        )?;
        Ok((
            o.losses.total,
            o.losses.l_adv,
            o.losses.total - o.losses.l_adv,
        ))
    };

    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    let analytic = grads.tensors();
    for (k, name) in TENSOR_NAMES.iter().enumerate() {
        let encoder = k < Weights::ENCODER_TENSORS;
        let x0 = p.params.weights.tensors()[k].to_vec();
        let f = |x: &[f64]| {
            let mut w = p.params.weights.clone();
            w.tensors_mut()[k].copy_from_slice(x);
            let (total, l_adv, rest) = evaluate(&w).expect("objective on a valid model");
            if encoder {
                rest - c * l_adv
            } else {
                total
            }
        };
        tensors.push(TensorCheck {
            name,
            report: grad_check(f, &x0, analytic[k], STEP)?,
        });
    }

    // reversal alone: only the domain logits carry gradient
    let obj = batch_objective(
        &network,
        &p.params,
        p.batch(),
        &p.cfg,
        Mode::Train,
        &mut rng,
    )?;
    let adv_only = Upstream {
        dz: None,
        dp: vec![0.0; p.x.rows()],
        dlogits: obj.upstream.dlogits.clone(),
    };
    let reversed = network.backward(&p.params, obj.forward.tape.expect("tape"), &adv_only)?;
    let x0 = p.params.weights.flatten();
    let n_enc: usize = p.params.weights.tensors()[..Weights::ENCODER_TENSORS]
        .iter()
        .map(|t| t.len())
        .sum();
    let f = |x: &[f64]| {
        let mut w = p.params.weights.clone();
        let mut full = x0.clone();
        full[..n_enc].copy_from_slice(x);
        w.assign_flat(&full);
        evaluate(&w).expect("objective on a valid model").1
    };
    let plain = crate::tensor::central_difference(f, &x0[..n_enc], STEP)?;
    let expected: Vec<f64> = plain.iter().map(|g| -c * g).collect();
    let got = reversed.flatten()[..n_enc].to_vec();
    let reversal = compare(&got, &expected);

    let max_rel_err = tensors
        .iter()
        .map(|t| t.report.max_rel_err)
        .fold(reversal.max_rel_err, f64::max);
    Ok(GradSuiteReport {
        tensors,
        reversal,
        max_rel_err,
    })
}

fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = (a - n).abs() / 1f64.max(a.abs()).max(n.abs());
        if rel > report.max_rel_err {
            report = GradCheckReport {
                max_rel_err: rel,
                worst_index: i,
                analytic_at_worst: a,
                numeric_at_worst: n,
            };
        }
    }
    report
}
