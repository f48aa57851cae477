//! Mini-batch adversarial training, prediction and training logs.

mod adam;
mod config;
mod gradcheck;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{self, DomainIndex, GeneMatrix, NormStats, SampleMeta};
use crate::error::{Error, Result};
use crate::eval::auroc;
use crate::losses::{self, LossBreakdown};
use crate::model::{
    Architecture, Checkpoint, Forward, GrlConfig, ModelParams, Network, Upstream, Weights,
};
use crate::tensor::ops::{BatchStats, BN_MOMENTUM};
use crate::tensor::{Matrix, Mode, RngState};

pub use adam::Adam;
pub use config::TrainConfig;
pub use gradcheck::{reduced_model_gradcheck, GradSuiteReport, TensorCheck};

const STREAM_INIT: u64 = 0;
const STREAM_BATCHES: u64 = 1 << 32;
const STREAM_DROPOUT: u64 = 2 << 32;

/// Standardized inputs with integer labels, ready for [`fit`].
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub x: Matrix,
    pub response: Vec<u8>,
    pub domain: Vec<usize>,
    pub domain_names: Vec<String>,
    pub gene_list: Vec<String>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }
}

/// Inputs with response labels, used only for monitoring.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub x: Matrix,
    pub response: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Means over the epoch's batches.
    pub losses: LossBreakdown,
    /// AUROC of the train-mode predictions made during the epoch.
    pub train_auc: Option<f64>,
    /// AUROC on the validation set after the epoch, in eval mode.
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub logs: Vec<EpochLog>,
}

/// Shuffles `0..n` and cuts it into batches of `batch_size`. A trailing
/// batch with fewer than two samples is merged into the one before it.
pub fn make_batches(n: usize, batch_size: usize, rng: &mut RngState) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut batches: Vec<Vec<usize>> = order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

/// Loss values of one batch together with what [`Network::backward`] needs.
pub struct BatchObjective {
    pub losses: LossBreakdown,
    pub forward: Forward,
    pub upstream: Upstream,
    /// Whether the asymmetric loss saw a degenerate batch.
    pub degenerate: bool,
}

/// Inputs and labels of one mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a Matrix,
    pub response: &'a [u8],
    pub domain: &'a [usize],
}

/// Forward pass plus the weighted objective
/// `l_adv + λ1·l_asy + λ2·l_cls` and its gradients at the network outputs.
pub fn batch_objective(
    network: &Network,
    params: &ModelParams,
    batch: Batch<'_>,
    cfg: &TrainConfig,
    mode: Mode,
    rng: &mut RngState,
) -> Result<BatchObjective> {
    let Batch {
        x,
        response,
        domain,
    } = batch;
    let forward = network.forward(x, params, mode, rng)?;
    let (l_cls, dp) = losses::classification_loss(&forward.p_response, response)?;
    let (l_adv, dlogits) = losses::domain_adversarial_loss(&forward.domain_logits, domain)?;
    let (l_asy, dz, degenerate) = if cfg.faac_active() {
        let a = losses::asymmetric_loss(&forward.z, response)?;
        (a.value, Some(a.grad.scale(cfg.lambda1)), a.degenerate)
    } else {
        (0.0, None, false)
    };
    let losses = losses::total_loss(l_asy, l_adv, l_cls, cfg.lambda1, cfg.lambda2);
    let upstream = Upstream {
        dz,
        dp: dp.into_iter().map(|g| g * cfg.lambda2).collect(),
        dlogits,
    };
    Ok(BatchObjective {
        losses,
        forward,
        upstream,
        degenerate,
    })
}

fn check_training_set(train: &TrainingSet) -> Result<()> {
    let n = train.len();
    if train.x.rows() != n || train.domain.len() != n {
        return Err(Error::Dimension(format!(
            "{} input rows, {} responses, {} domains",
            train.x.rows(),
            n,
            train.domain.len()
        )));
    }
    if train.x.cols() != train.gene_list.len() {
        return Err(Error::Dimension(
            "gene list does not match input columns".into(),
        ));
    }
    if n < 2 {
        return Err(Error::Config("need at least 2 training samples".into()));
    }
    let present: std::collections::BTreeSet<usize> = train.domain.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::Config(
            "training data spans a single domain; the domain adversary needs at least 2".into(),
        ));
    }
    if train.domain_names.len() < 2 || present.iter().any(|&d| d >= train.domain_names.len()) {
        return Err(Error::Config(
            "domain indices do not match domain names".into(),
        ));
    }
    let positives = train.response.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::Config(
            "training data must contain both response classes".into(),
        ));
    }
    Ok(())
}

pub fn architecture_for(cfg: &TrainConfig, genes: usize, domains: usize) -> Architecture {
    Architecture {
        genes,
        hidden: cfg.hidden,
        d: cfg.latent,
        disc_hidden: cfg.disc_hidden,
        domains,
    }
}

pub fn network_for(cfg: &TrainConfig) -> Result<Network> {
    Network::new(
        cfg.latent,
        GrlConfig::new(cfg.grl_coefficient)?,
        cfg.dropout_p,
    )
}

/// Trains a fresh model. Fully determined by `cfg.seed` and the data.
pub fn fit(
    train: &TrainingSet,
    cfg: &TrainConfig,
    validation: Option<&EvalSet>,
) -> Result<FitResult> {
    cfg.validate()?;
    check_training_set(train)?;
    let root = RngState::new(cfg.seed);
    let arch = architecture_for(cfg, train.x.cols(), train.domain_names.len());
    let mut params =
        ModelParams::init(arch, train.gene_list.clone(), &mut root.derive(STREAM_INIT))?;
    let network = network_for(cfg)?;
    let mut adam = Adam::new(&params.weights, cfg.lr);
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut batch_rng = root.derive(STREAM_BATCHES + epoch as u64);
        let mut dropout_rng = root.derive(STREAM_DROPOUT + epoch as u64);
        let batches = make_batches(train.len(), cfg.batch_size, &mut batch_rng);
        let mut sum = LossBreakdown::default();
        let mut epoch_scores = vec![0.0; train.len()];
        for idx in &batches {
            let x = train.x.select_rows(idx);
            let response: Vec<u8> = idx.iter().map(|&i| train.response[i]).collect();
            let domain: Vec<usize> = idx.iter().map(|&i| train.domain[i]).collect();
            let obj = batch_objective(
                &network,
                &params,
                Batch {
                    x: &x,
                    response: &response,
                    domain: &domain,
                },
                cfg,
                Mode::Train,
                &mut dropout_rng,
            )?;
            for (&i, &v) in idx.iter().zip(&obj.forward.response_logit) {
                epoch_scores[i] = v;
            }
            let tape = obj.forward.tape.expect("train mode records a tape");
            let grads = network.backward(&params, tape, &obj.upstream)?;
            adam.step(&mut params.weights, &grads);
            let (s1, s2) = obj.forward.norm_stats.expect("train mode batch stats");
            update_running(&mut params, &s1, &s2);
            sum.l_asy += obj.losses.l_asy;
            sum.l_adv += obj.losses.l_adv;
            sum.l_cls += obj.losses.l_cls;
            sum.total += obj.losses.total;
        }
        if !params.weights.is_finite() {
            return Err(Error::Evaluation(format!(
                "parameters diverged in epoch {}",
                epoch + 1
            )));
        }
        let nb = batches.len() as f64;
        let losses = LossBreakdown {
            l_asy: sum.l_asy / nb,
            l_adv: sum.l_adv / nb,
            l_cls: sum.l_cls / nb,
            total: sum.total / nb,
        };
        let train_auc = Some(auroc(&epoch_scores, &train.response)?);
        let val_auc = match validation {
            Some(v) if v.response.contains(&0) && v.response.contains(&1) => Some(auroc(
                &predict_matrix(&network, &params, &v.x)?.logit,
                &v.response,
            )?),
            _ => None,
        };
        logs.push(EpochLog {
            epoch: epoch + 1,
            losses,
            train_auc,
            val_auc,
        });
    }
    Ok(FitResult { params, logs })
}

fn update_running(params: &mut ModelParams, s1: &BatchStats, s2: &BatchStats) {
    params.norm1_stats.update(s1, BN_MOMENTUM);
    params.norm2_stats.update(s2, BN_MOMENTUM);
}

/// Eval-mode outputs of the response head.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Probability of the sensitive class.
    pub probability: Vec<f64>,
    /// Pre-sigmoid scores, used for ranking metrics.
    pub logit: Vec<f64>,
}

/// Eval-mode predictions for standardized, aligned inputs.
pub fn predict_matrix(network: &Network, params: &ModelParams, x: &Matrix) -> Result<Prediction> {
    const CHUNK: usize = 512;
    let mut out = Prediction {
        probability: Vec::with_capacity(x.rows()),
        logit: Vec::with_capacity(x.rows()),
    };
    let mut rng = RngState::new(0);
    let rows: Vec<usize> = (0..x.rows()).collect();
    for chunk in rows.chunks(CHUNK) {
        let f = network.forward(&x.select_rows(chunk), params, Mode::Eval, &mut rng)?;
        out.probability.extend(f.p_response);
        out.logit.extend(f.response_logit);
    }
    Ok(out)
}

/// Scores raw expression data with a trained checkpoint: genes are aligned
/// to the checkpoint, standardized with its statistics and passed through
/// the network in eval mode.
pub fn predict(gm: &GeneMatrix, checkpoint: &Checkpoint) -> Result<Vec<f64>> {
    Ok(predict_detailed(gm, checkpoint)?.probability)
}

/// [`predict`] together with the pre-sigmoid scores.
pub fn predict_detailed(gm: &GeneMatrix, checkpoint: &Checkpoint) -> Result<Prediction> {
    let x = checkpoint_inputs(gm, checkpoint)?;
    let network = checkpoint.network()?;
    predict_matrix(&network, &checkpoint.params, &x)
}

fn checkpoint_inputs(gm: &GeneMatrix, checkpoint: &Checkpoint) -> Result<Matrix> {
    let aligned = data::align_genes(gm, &checkpoint.gene_list)?;
    Ok(checkpoint.normalization.apply(&aligned)?.values().clone())
}

/// Learned encoder features `h` of raw expression data.
pub fn encode_features(gm: &GeneMatrix, checkpoint: &Checkpoint) -> Result<Matrix> {
    let x = checkpoint_inputs(gm, checkpoint)?;
    checkpoint
        .network()?
        .encode(&x, &checkpoint.params, Mode::Eval, &mut RngState::new(0))
}

/// Gene selection, standardization and label indexing for a training split.
#[derive(Debug, Clone)]
pub struct PreparedTraining {
    pub set: TrainingSet,
    pub stats: NormStats,
}

/// Selects the `hvg` most variable genes (all genes when `hvg` is 0 or
/// exceeds the gene count), fits z-scores and indexes domains, all from
/// `gm` alone.
pub fn prepare_training(
    gm: &GeneMatrix,
    metas: &[SampleMeta],
    hvg: usize,
) -> Result<PreparedTraining> {
    let metas = data::resolve_responses(&data::match_meta(gm, metas)?)?;
    let k = if hvg == 0 {
        gm.n_genes()
    } else {
        hvg.min(gm.n_genes())
    };
    let selected = data::select_hvg(gm, k)?;
    let (standardized, stats) = data::zscore_fit_apply(&selected, None)?;
    let domains = DomainIndex::build(&metas);
    Ok(PreparedTraining {
        set: TrainingSet {
            x: standardized.values().clone(),
            response: metas
                .iter()
                .map(|m| m.response.expect("resolved"))
                .collect(),
            domain: domains.of_sample,
            domain_names: domains.names,
            gene_list: standardized.gene_names().to_vec(),
        },
        stats,
    })
}

/// Aligns and standardizes held-out data with training statistics.
pub fn prepare_eval(gm: &GeneMatrix, metas: &[SampleMeta], stats: &NormStats) -> Result<EvalSet> {
    let metas = data::resolve_responses(&data::match_meta(gm, metas)?)?;
    let aligned = data::align_genes(gm, &stats.genes)?;
    Ok(EvalSet {
        x: stats.apply(&aligned)?.values().clone(),
        response: metas
            .iter()
            .map(|m| m.response.expect("resolved"))
            .collect(),
    })
}

/// Preprocesses, trains and packages a checkpoint.
pub fn train_checkpoint(
    gm: &GeneMatrix,
    metas: &[SampleMeta],
    cfg: &TrainConfig,
    hvg: usize,
    validation: Option<(&GeneMatrix, &[SampleMeta])>,
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    cfg.validate()?;
    let prepared = prepare_training(gm, metas, hvg)?;
    let val = validation
        .map(|(g, m)| prepare_eval(g, m, &prepared.stats))
        .transpose()?;
    let result = fit(&prepared.set, cfg, val.as_ref())?;
    let checkpoint = Checkpoint::new(
        result.params,
        prepared.set.domain_names,
        prepared.stats,
        cfg.clone(),
    )?;
    Ok((checkpoint, result.logs))
}

pub const LOG_HEADER: [&str; 7] = [
    "epoch",
    "l_asy",
    "l_adv",
    "l_cls",
    "total",
    "train_auc",
    "val_auc",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_log(path: impl AsRef<Path>, logs: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| data_io(path, e))?;
    w.write_record(LOG_HEADER).map_err(|e| data_io(path, e))?;
    for l in logs {
        w.write_record([
            l.epoch.to_string(),
            l.losses.l_asy.to_string(),
            l.losses.l_adv.to_string(),
            l.losses.l_cls.to_string(),
            l.losses.total.to_string(),
            opt(l.train_auc),
            opt(l.val_auc),
        ])
        .map_err(|e| data_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn data_io(path: &Path, e: csv::Error) -> Error {
    crate::data::csv_io(path, e)
}

/// Gradient tensors of the encoder only (first layers of [`Weights::tensors`]).
pub fn encoder_gradient(grads: &Weights) -> Vec<f64> {
    grads.tensors()[..Weights::ENCODER_TENSORS].concat()
}
