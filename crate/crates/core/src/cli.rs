//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{self, GeneMatrix, SampleMeta};
use crate::error::{Error, Result};
use crate::eval::{self, LodoConfig};
use crate::model::Checkpoint;
use crate::synth::{self, SynthConfig};
use crate::train::{self, TrainConfig};

/// Environment variable consulted when no `--seed` flag is given.
pub const SEED_ENV: &str = "FOURIERDG_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "fourierdg",
    version,
    about = "Domain-generalized drug response prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic multi-domain dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint and per-epoch log.
    Train(TrainArgs),
    /// Score expression data with a checkpoint.
    Predict(PredictArgs),
    /// Leave-one-domain-out evaluation.
    Lodo(LodoArgs),
    /// Leave-one-domain-out with and without the asymmetric constraint.
    Ablate(AblateArgs),
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON file with generator settings; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_expr: PathBuf,
    #[arg(long)]
    out_meta: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    expr: PathBuf,
    #[arg(long)]
    meta: PathBuf,
}

#[derive(Debug, Args)]
struct Hyper {
    /// Number of highly variable genes kept (capped at the gene count).
    #[arg(long, default_value_t = 3000)]
    hvg: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 8e-5)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the asymmetric Fourier constraint.
    #[arg(long)]
    no_faac: bool,
    #[arg(long, default_value_t = 1.0)]
    grl: f64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 1024)]
    hidden: usize,
    /// Width of the feature layer (even).
    #[arg(long, default_value_t = 740)]
    latent: usize,
    #[arg(long, default_value_t = 256)]
    disc_hidden: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    out_checkpoint: PathBuf,
    #[arg(long)]
    out_log: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    expr: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out_scores: PathBuf,
    /// Metadata with responses; enables AUROC reporting and the ROC and
    /// embedding outputs.
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long, requires = "meta")]
    out_roc: Option<PathBuf>,
    /// 2-D projection of the learned features.
    #[arg(long, requires = "meta")]
    out_embedding: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LodoFlags {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long, default_value_t = 3)]
    min_test_per_class: usize,
    /// Folds trained in parallel; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct LodoArgs {
    #[command(flatten)]
    lodo: LodoFlags,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    lodo: LodoFlags,
    /// Comma-separated seeds.
    #[arg(long, default_value = "1,2,3,4,5")]
    seeds: String,
    #[arg(long)]
    out_table: PathBuf,
    /// Per-domain and per-seed means and deltas.
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for invalid input, 2 for failures during computation.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}: not a non-negative integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn train_config(h: &Hyper) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        lambda1: h.lambda1,
        lambda2: h.lambda2,
        lr: h.lr,
        batch_size: h.batch,
        epochs: h.epochs,
        seed: resolve_seed(h.seed)?,
        faac_enabled: !h.no_faac,
        grl_coefficient: h.grl,
        dropout_p: h.dropout,
        hidden: h.hidden,
        latent: h.latent,
        disc_hidden: h.disc_hidden,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn lodo_config(f: &LodoFlags) -> Result<LodoConfig> {
    if f.jobs == 0 {
        return Err(Error::Config("jobs: must be at least 1".into()));
    }
    Ok(LodoConfig {
        train: train_config(&f.hyper)?,
        hvg: f.hyper.hvg,
        min_test_per_class: f.min_test_per_class,
        jobs: f.jobs,
    })
}

fn load_data(d: &DataArgs) -> Result<(GeneMatrix, Vec<SampleMeta>)> {
    Ok((data::load_expression(&d.expr)?, data::load_meta(&d.meta)?))
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("seeds: {s:?} is not a non-negative integer")))
        })
        .collect()
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Synth(a) => synth_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Lodo(a) => lodo_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    }
}

fn synth_cmd(a: SynthArgs) -> Result<i32> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if a.seed.is_some() || a.config.is_none() {
        cfg.seed = resolve_seed(a.seed)?;
    }
    cfg.validate()?;
    println!(
        "synth: {}",
        serde_json::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?
    );
    let (gm, metas) = synth::generate(&cfg)?;
    data::write_expression(&a.out_expr, &gm)?;
    data::write_meta(&a.out_meta, &metas)?;
    println!("wrote {} samples x {} genes", gm.n_samples(), gm.n_genes());
    Ok(0)
}

fn train_cmd(a: TrainArgs) -> Result<i32> {
    let cfg = train_config(&a.hyper)?;
    println!("train: hvg={} {cfg}", a.hyper.hvg);
    let (gm, metas) = load_data(&a.data)?;
    let (checkpoint, logs) = train::train_checkpoint(&gm, &metas, &cfg, a.hyper.hvg, None)?;
    for l in &logs {
        println!(
            "epoch {} total={:.6} l_asy={:.6} l_adv={:.6} l_cls={:.6} train_auc={}",
            l.epoch,
            l.losses.total,
            l.losses.l_asy,
            l.losses.l_adv,
            l.losses.l_cls,
            l.train_auc.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    checkpoint.save(&a.out_checkpoint)?;
    train::write_log(&a.out_log, &logs)?;
    Ok(0)
}

fn write_scores(path: &Path, ids: &[String], scores: &[f64]) -> Result<()> {
    let err = |e| data::csv_io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["sample_id", "score"]).map_err(err)?;
    for (id, s) in ids.iter().zip(scores) {
        w.write_record([id.clone(), s.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn predict_cmd(a: PredictArgs) -> Result<i32> {
    println!(
        "predict: expr={} checkpoint={}",
        a.expr.display(),
        a.checkpoint.display()
    );
    let gm = data::load_expression(&a.expr)?;
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let prediction = train::predict_detailed(&gm, &checkpoint)?;
    write_scores(&a.out_scores, gm.sample_ids(), &prediction.probability)?;
    if let Some(meta) = &a.meta {
        let metas = data::resolve_responses(&data::match_meta(&gm, &data::load_meta(meta)?)?)?;
        let labels: Vec<u8> = metas
            .iter()
            .map(|m| m.response.expect("resolved"))
            .collect();
        let roc = eval::roc_points(&prediction.logit, &labels)?;
        println!("auroc={}", roc.auroc);
        if let Some(path) = &a.out_roc {
            eval::write_roc(path, &roc)?;
        }
        if let Some(path) = &a.out_embedding {
            let features = train::encode_features(&gm, &checkpoint)?;
            let coords = eval::embed_2d(&features)?;
            eval::write_embedding(path, gm.sample_ids(), &coords, &labels)?;
        }
    }
    Ok(0)
}

fn lodo_cmd(a: LodoArgs) -> Result<i32> {
    let cfg = lodo_config(&a.lodo)?;
    println!(
        "lodo: hvg={} min_test_per_class={} jobs={} {}",
        cfg.hvg, cfg.min_test_per_class, cfg.jobs, cfg.train
    );
    let (gm, metas) = load_data(&a.lodo.data)?;
    let report = eval::lodo_run(&gm, &metas, &cfg)?;
    for e in &report.entries {
        println!(
            "held out {}: n={} auroc={:.4}",
            e.domain, e.n_test, e.roc.auroc
        );
    }
    for d in &report.skipped {
        println!("held out {d}: skipped (too few samples per class)");
    }
    println!("mean_auroc={}", report.mean_auroc);
    report.write_csv(&a.out_report)?;
    Ok(0)
}

fn ablate_cmd(a: AblateArgs) -> Result<i32> {
    let cfg = lodo_config(&a.lodo)?;
    let seeds = parse_seeds(&a.seeds)?;
    println!(
        "ablate: seeds={} hvg={} min_test_per_class={} jobs={} {}",
        a.seeds, cfg.hvg, cfg.min_test_per_class, cfg.jobs, cfg.train
    );
    let (gm, metas) = load_data(&a.lodo.data)?;
    let table = eval::ablate_faac(&gm, &metas, &cfg, &seeds)?;
    for (seed, on, off) in &table.per_seed {
        println!("seed {seed}: on={on:.4} off={off:.4} delta={:.4}", on - off);
    }
    println!(
        "mean_on={} mean_off={} delta={}",
        table.mean_on, table.mean_off, table.delta
    );
    table.write_csv(&a.out_table)?;
    if let Some(path) = &a.out_summary {
        table.write_summary_csv(path)?;
    }
    Ok(0)
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<i32> {
    println!(
        "gradcheck: genes=12 hidden=10 latent=8 domains=3 batch=6 dropout=0 seed={}",
        a.seed
    );
    let report = train::reduced_model_gradcheck(a.seed)?;
    for t in &report.tensors {
        println!("{:<20} {:.3e}", t.name, t.report.max_rel_err);
    }
    println!("{:<20} {:.3e}", "reversal", report.reversal.max_rel_err);
    println!("max_rel_err={:e}", report.max_rel_err);
    Ok(if report.max_rel_err <= 1e-4 { 0 } else { 2 })
}
