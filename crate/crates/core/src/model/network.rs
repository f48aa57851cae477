use serde::{Deserialize, Serialize};

use super::params::{Dense, ModelParams, Weights};
use crate::error::{Error, Result};
use crate::fourier::FourierBasis;
use crate::losses::P_CLAMP;
use crate::tensor::ops::{self, BatchStats};
use crate::tensor::tape::{GradTape, Record, Site};
use crate::tensor::{Matrix, Mode, RngState};

/// Gradient reversal between the features and the domain discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrlConfig {
    pub coefficient: f64,
}

impl Default for GrlConfig {
    fn default() -> Self {
        Self { coefficient: 1.0 }
    }
}

impl GrlConfig {
    pub fn new(coefficient: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient >= 0.0) {
            return Err(Error::Parameter(format!(
                "GRL coefficient must be finite and non-negative, got {coefficient}"
            )));
        }
        Ok(Self { coefficient })
    }
}

/// Backward rule of the reversal layer; its forward is the identity.
pub fn grl_backward(upstream: &Matrix, coefficient: f64) -> Matrix {
    upstream.map(|v| -coefficient * v)
}

/// Output of one forward pass.
#[derive(Debug)]
pub struct Forward {
    /// Encoder output.
    pub h: Matrix,
    /// Fourier coefficients of `h`.
    pub z: Matrix,
    /// Pre-sigmoid response scores; same order as `p_response` but never
    /// tied by floating-point saturation, so preferred for ranking.
    pub response_logit: Vec<f64>,
    /// Probability of the sensitive class, kept inside [1e-12, 1 − 1e-12].
    pub p_response: Vec<f64>,
    pub domain_logits: Matrix,
    /// Present in train mode only.
    pub tape: Option<GradTape>,
    /// Batch statistics of both batch-norm layers (train mode only); the
    /// caller folds them into the running statistics.
    pub norm_stats: Option<(BatchStats, BatchStats)>,
}

/// Loss gradients arriving at the network outputs.
#[derive(Debug, Clone)]
pub struct Upstream {
    /// Gradient on `z` from losses applied directly to the features.
    pub dz: Option<Matrix>,
    pub dp: Vec<f64>,
    pub dlogits: Matrix,
}

/// Encoder G, Fourier projection, response head P and domain head D.
///
/// Holds only the constant pieces (basis, dropout rate, reversal
/// coefficient); parameters are passed in so that forward passes never
/// mutate them.
#[derive(Debug, Clone)]
pub struct Network {
    basis: FourierBasis,
    grl: GrlConfig,
    dropout_p: f64,
}

impl Network {
    pub fn new(d: usize, grl: GrlConfig, dropout_p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::Parameter(format!(
                "dropout probability must lie in [0, 1), got {dropout_p}"
            )));
        }
        Ok(Self {
            basis: FourierBasis::new(d)?,
            grl: GrlConfig::new(grl.coefficient)?,
            dropout_p,
        })
    }

    pub fn basis(&self) -> &FourierBasis {
        &self.basis
    }

    pub fn grl(&self) -> GrlConfig {
        self.grl
    }

    fn check_input(&self, x: &Matrix, params: &ModelParams) -> Result<()> {
        if x.cols() != params.arch.genes {
            return Err(Error::Dimension(format!(
                "input has {} genes, model expects {}",
                x.cols(),
                params.arch.genes
            )));
        }
        if params.arch.d != self.basis.dim() {
            return Err(Error::Dimension(format!(
                "model latent width {} does not match basis dimension {}",
                params.arch.d,
                self.basis.dim()
            )));
        }
        Ok(())
    }

    /// `h = Drop(ReLU(BN(Linear2(Drop(ReLU(BN(Linear1(x))))))))`
    pub fn encode(
        &self,
        x: &Matrix,
        params: &ModelParams,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<Matrix> {
        self.check_input(x, params)?;
        Ok(self.encode_inner(x, params, mode, rng, None)?.0)
    }

    fn encode_inner(
        &self,
        x: &Matrix,
        params: &ModelParams,
        mode: Mode,
        rng: &mut RngState,
        mut tape: Option<&mut GradTape>,
    ) -> Result<(Matrix, Option<(BatchStats, BatchStats)>)> {
        let w = &params.weights;
        let layers = [
            (
                &w.encoder1,
                &w.norm1,
                &params.norm1_stats,
                [Site::Encoder1, Site::Norm1, Site::Act1, Site::Drop1],
            ),
            (
                &w.encoder2,
                &w.norm2,
                &params.norm2_stats,
                [Site::Encoder2, Site::Norm2, Site::Act2, Site::Drop2],
            ),
        ];
        let mut stats = Vec::with_capacity(2);
        let mut cur = x.clone();
        for (dense, norm, running, sites) in layers {
            let a = ops::affine(&cur, &dense.weight, &dense.bias)?;
            if let Some(t) = tape.as_deref_mut() {
                t.push(sites[0], Record::Affine { input: cur });
            }
            let n = match mode {
                Mode::Train => {
                    let (n, cache, s) = ops::batchnorm_train(&a, &norm.gamma, &norm.beta)?;
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(sites[1], Record::BatchNorm { cache });
                    }
                    stats.push(s);
                    n
                }
                Mode::Eval => ops::batchnorm_eval(&a, &norm.gamma, &norm.beta, running)?,
            };
            let r = ops::relu(&n);
            let (out, mask) = ops::dropout(&r, self.dropout_p, rng, mode)?;
            if let Some(t) = tape.as_deref_mut() {
                t.push(sites[2], Record::Relu { output: r });
                t.push(sites[3], Record::Dropout { mask });
            }
            cur = out;
        }
        let stats = match mode {
            Mode::Train => {
                let s2 = stats.pop().expect("two layers");
                let s1 = stats.pop().expect("two layers");
                Some((s1, s2))
            }
            Mode::Eval => None,
        };
        Ok((cur, stats))
    }

    /// Full forward pass. In train mode the returned [`Forward`] carries a
    /// tape for [`backward`](Self::backward).
    pub fn forward(
        &self,
        x: &Matrix,
        params: &ModelParams,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<Forward> {
        self.check_input(x, params)?;
        let mut tape = (mode == Mode::Train).then(GradTape::new);
        let (h, norm_stats) = self.encode_inner(x, params, mode, rng, tape.as_mut())?;
        let z = self.basis.project(&h)?;
        let w = &params.weights;

        let logit = ops::affine(&z, &w.classifier.weight, &w.classifier.bias)?;
        let response_logit = logit.into_vec();
        let p_response: Vec<f64> = response_logit
            .iter()
            .map(|&v| ops::sigmoid(v).clamp(P_CLAMP, 1.0 - P_CLAMP))
            .collect();

        let hidden = ops::affine(&z, &w.disc_hidden.weight, &w.disc_hidden.bias)?;
        let act = ops::relu(&hidden);
        let domain_logits = ops::affine(&act, &w.disc_out.weight, &w.disc_out.bias)?;

        if let Some(t) = tape.as_mut() {
            t.push(Site::Project, Record::Project);
            t.push(Site::Classifier, Record::Affine { input: z.clone() });
            t.push(
                Site::Sigmoid,
                Record::Sigmoid {
                    output: p_response.clone(),
                },
            );
            t.push(
                Site::Reversal,
                Record::Reversal {
                    coefficient: self.grl.coefficient,
                },
            );
            t.push(Site::DiscHidden, Record::Affine { input: z.clone() });
            t.push(
                Site::DiscAct,
                Record::Relu {
                    output: act.clone(),
                },
            );
            t.push(Site::DiscOut, Record::Affine { input: act });
        }

        Ok(Forward {
            h,
            z,
            response_logit,
            p_response,
            domain_logits,
            tape,
            norm_stats,
        })
    }

    /// Gradients of all trainable tensors. The discriminator receives the
    /// plain gradient of its loss; everything upstream of the reversal
    /// layer receives it negated and scaled by the GRL coefficient.
    pub fn backward(
        &self,
        params: &ModelParams,
        mut tape: GradTape,
        upstream: &Upstream,
    ) -> Result<Weights> {
        let w = &params.weights;
        let mut grads = w.zeros_like();

        let mut d = upstream.dlogits.clone();
        d = affine_back(
            &mut tape,
            Site::DiscOut,
            &w.disc_out,
            &d,
            &mut grads.disc_out,
        )?;
        d = relu_back(&mut tape, Site::DiscAct, &d)?;
        d = affine_back(
            &mut tape,
            Site::DiscHidden,
            &w.disc_hidden,
            &d,
            &mut grads.disc_hidden,
        )?;
        let dz_adv = match tape.pop(Site::Reversal)? {
            Record::Reversal { coefficient } => grl_backward(&d, coefficient),
            other => return Err(unexpected(Site::Reversal, &other)),
        };

        let p = match tape.pop(Site::Sigmoid)? {
            Record::Sigmoid { output } => output,
            other => return Err(unexpected(Site::Sigmoid, &other)),
        };
        if upstream.dp.len() != p.len() {
            return Err(Error::Dimension("response gradient length mismatch".into()));
        }
        let dlogit: Vec<f64> = p
            .iter()
            .zip(&upstream.dp)
            .map(|(p, g)| g * p * (1.0 - p))
            .collect();
        let dlogit = Matrix::from_vec_unchecked(p.len(), 1, dlogit);
        let mut dz = affine_back(
            &mut tape,
            Site::Classifier,
            &w.classifier,
            &dlogit,
            &mut grads.classifier,
        )?;
        dz.add_assign(&dz_adv)?;
        if let Some(extra) = &upstream.dz {
            dz.add_assign(extra)?;
        }

        match tape.pop(Site::Project)? {
            Record::Project => {}
            other => return Err(unexpected(Site::Project, &other)),
        }
        let mut d = self.basis.project_backward(&dz)?;

        d = dropout_back(&mut tape, Site::Drop2, &d)?;
        d = relu_back(&mut tape, Site::Act2, &d)?;
        d = norm_back(&mut tape, Site::Norm2, &w.norm2.gamma, &d, &mut grads.norm2)?;
        d = affine_back(
            &mut tape,
            Site::Encoder2,
            &w.encoder2,
            &d,
            &mut grads.encoder2,
        )?;
        d = dropout_back(&mut tape, Site::Drop1, &d)?;
        d = relu_back(&mut tape, Site::Act1, &d)?;
        d = norm_back(&mut tape, Site::Norm1, &w.norm1.gamma, &d, &mut grads.norm1)?;
        match tape.pop(Site::Encoder1)? {
            Record::Affine { input } => {
                grads.encoder1.weight = input.matmul_tn(&d)?;
                grads.encoder1.bias = d.column_sums();
            }
            other => return Err(unexpected(Site::Encoder1, &other)),
        }
        debug_assert!(tape.is_empty());
        Ok(grads)
    }
}

fn unexpected(site: Site, record: &Record) -> Error {
    Error::Evaluation(format!(
        "tape record at {site:?} has the wrong kind: {record:?}"
    ))
}

fn affine_back(
    tape: &mut GradTape,
    site: Site,
    layer: &Dense,
    dy: &Matrix,
    grad: &mut Dense,
) -> Result<Matrix> {
    match tape.pop(site)? {
        Record::Affine { input } => {
            let g = ops::affine_backward(&input, &layer.weight, dy)?;
            grad.weight = g.dweight;
            grad.bias = g.dbias;
            Ok(g.dx)
        }
        other => Err(unexpected(site, &other)),
    }
}

fn relu_back(tape: &mut GradTape, site: Site, dy: &Matrix) -> Result<Matrix> {
    match tape.pop(site)? {
        Record::Relu { output } => ops::relu_backward(&output, dy),
        other => Err(unexpected(site, &other)),
    }
}

fn dropout_back(tape: &mut GradTape, site: Site, dy: &Matrix) -> Result<Matrix> {
    match tape.pop(site)? {
        Record::Dropout { mask } => Ok(ops::dropout_backward(&mask, dy)),
        other => Err(unexpected(site, &other)),
    }
}

fn norm_back(
    tape: &mut GradTape,
    site: Site,
    gamma: &[f64],
    dy: &Matrix,
    grad: &mut super::params::Norm,
) -> Result<Matrix> {
    match tape.pop(site)? {
        Record::BatchNorm { cache } => {
            let (dx, dgamma, dbeta) = ops::batchnorm_backward(&cache, gamma, dy)?;
            grad.gamma = dgamma;
            grad.beta = dbeta;
            Ok(dx)
        }
        other => Err(unexpected(site, &other)),
    }
}
