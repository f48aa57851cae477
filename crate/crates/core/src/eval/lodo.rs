use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{roc_points, RocResult};
use crate::data::{self, GeneMatrix, NormStats, SampleMeta};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::{self, EpochLog, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LodoConfig {
    pub train: TrainConfig,
    /// Number of highly variable genes; 0 keeps every gene.
    pub hvg: usize,
    pub min_test_per_class: usize,
    /// Worker threads for independent folds.
    pub jobs: usize,
}

impl Default for LodoConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hvg: 3000,
            min_test_per_class: 3,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodoEntry {
    pub domain: String,
    pub n_test: usize,
    pub n_sensitive: usize,
    pub n_resistant: usize,
    pub roc: RocResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodoReport {
    pub entries: Vec<LodoEntry>,
    /// Domains used only for training because a class was too small.
    pub skipped: Vec<String>,
    pub mean_auroc: f64,
}

impl LodoReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e| data::csv_io(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["domain", "n_test", "n_sensitive", "n_resistant", "auroc"])
            .map_err(err)?;
        for e in &self.entries {
            w.write_record([
                e.domain.clone(),
                e.n_test.to_string(),
                e.n_sensitive.to_string(),
                e.n_resistant.to_string(),
                e.roc.auroc.to_string(),
            ])
            .map_err(err)?;
        }
        let total: usize = self.entries.iter().map(|e| e.n_test).sum();
        let sens: usize = self.entries.iter().map(|e| e.n_sensitive).sum();
        w.write_record([
            "mean".to_string(),
            total.to_string(),
            sens.to_string(),
            (total - sens).to_string(),
            self.mean_auroc.to_string(),
        ])
        .map_err(err)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Everything one held-out fold produced.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub entry: LodoEntry,
    pub stats: NormStats,
    pub params: ModelParams,
    pub logs: Vec<EpochLog>,
    /// Held-out probabilities of the sensitive class.
    pub scores: Vec<f64>,
}

fn resolved(gm: &GeneMatrix, metas: &[SampleMeta]) -> Result<Vec<SampleMeta>> {
    data::resolve_responses(&data::match_meta(gm, metas)?)
}

/// Domains with at least `min_per_class` samples of each response class,
/// in sorted order, and the remaining domains.
pub fn eligible_domains(metas: &[SampleMeta], min_per_class: usize) -> (Vec<String>, Vec<String>) {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for m in metas {
        let c = counts.entry(m.domain.as_str()).or_default();
        match m.response {
            Some(1) => c.0 += 1,
            Some(_) => c.1 += 1,
            None => {}
        }
    }
    let (mut eligible, mut skipped) = (Vec::new(), Vec::new());
    for (d, (pos, neg)) in counts {
        if pos >= min_per_class && neg >= min_per_class && pos > 0 && neg > 0 {
            eligible.push(d.to_string());
        } else {
            skipped.push(d.to_string());
        }
    }
    (eligible, skipped)
}

/// Trains on every domain except `held_out` and scores `held_out`.
/// Gene selection and standardization are fitted on the training domains
/// only.
pub fn lodo_fold(
    gm: &GeneMatrix,
    metas: &[SampleMeta],
    held_out: &str,
    cfg: &LodoConfig,
) -> Result<FoldOutcome> {
    let metas = resolved(gm, metas)?;
    fold_on_resolved(gm, &metas, held_out, &cfg.train, cfg.hvg)
}

fn fold_on_resolved(
    gm: &GeneMatrix,
    metas: &[SampleMeta],
    held_out: &str,
    train_cfg: &TrainConfig,
    hvg: usize,
) -> Result<FoldOutcome> {
    let (train_idx, test_idx) = data::lodo_split(metas, held_out)?;
    let pick =
        |idx: &[usize]| -> Vec<SampleMeta> { idx.iter().map(|&i| metas[i].clone()).collect() };
    let (train_gm, train_metas) = (gm.select_samples(&train_idx), pick(&train_idx));
    let (test_gm, test_metas) = (gm.select_samples(&test_idx), pick(&test_idx));

    let prepared = train::prepare_training(&train_gm, &train_metas, hvg)?;
    let test = train::prepare_eval(&test_gm, &test_metas, &prepared.stats)?;
    let fit = train::fit(&prepared.set, train_cfg, Some(&test))?;
    let network = train::network_for(train_cfg)?;
    let prediction = train::predict_matrix(&network, &fit.params, &test.x)?;
    let roc = roc_points(&prediction.logit, &test.response)?;
    let n_sensitive = test.response.iter().filter(|&&y| y == 1).count();
    Ok(FoldOutcome {
        entry: LodoEntry {
            domain: held_out.to_string(),
            n_test: test.response.len(),
            n_sensitive,
            n_resistant: test.response.len() - n_sensitive,
            roc,
        },
        stats: prepared.stats,
        params: fit.params,
        logs: fit.logs,
        scores: prediction.probability,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))
}

struct Plan {
    metas: Vec<SampleMeta>,
    eligible: Vec<String>,
    skipped: Vec<String>,
}

fn plan(gm: &GeneMatrix, metas: &[SampleMeta], cfg: &LodoConfig) -> Result<Plan> {
    cfg.train.validate()?;
    let metas = resolved(gm, metas)?;
    let domains: std::collections::BTreeSet<&str> =
        metas.iter().map(|m| m.domain.as_str()).collect();
    if domains.len() < 2 {
        return Err(Error::Config(format!(
            "leave-one-domain-out needs at least 2 domains, found {}",
            domains.len()
        )));
    }
    let (eligible, skipped) = eligible_domains(&metas, cfg.min_test_per_class);
    if eligible.is_empty() {
        return Err(Error::Report(format!(
            "no domain has {} samples of each response class",
            cfg.min_test_per_class
        )));
    }
    Ok(Plan {
        metas,
        eligible,
        skipped,
    })
}

fn report(entries: Vec<LodoEntry>, skipped: Vec<String>) -> LodoReport {
    let mean_auroc = entries.iter().map(|e| e.roc.auroc).sum::<f64>() / entries.len() as f64;
    LodoReport {
        entries,
        skipped,
        mean_auroc,
    }
}

/// Leave-one-domain-out evaluation over every eligible domain. Folds are
/// independent, so their results do not depend on `jobs`.
pub fn lodo_run(gm: &GeneMatrix, metas: &[SampleMeta], cfg: &LodoConfig) -> Result<LodoReport> {
    let plan = plan(gm, metas, cfg)?;
    let folds: Vec<Result<LodoEntry>> = pool(cfg.jobs)?.install(|| {
        plan.eligible
            .par_iter()
            .map(|d| fold_on_resolved(gm, &plan.metas, d, &cfg.train, cfg.hvg).map(|f| f.entry))
            .collect()
    });
    Ok(report(
        folds.into_iter().collect::<Result<_>>()?,
        plan.skipped,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: u64,
    pub faac: bool,
    pub domain: String,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDelta {
    pub domain: String,
    pub mean_on: f64,
    pub mean_off: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    /// One row per seed × toggle × eligible domain.
    pub rows: Vec<AblationRow>,
    pub per_domain: Vec<DomainDelta>,
    /// (seed, mean AUROC with the constraint, mean AUROC without).
    pub per_seed: Vec<(u64, f64, f64)>,
    pub mean_on: f64,
    pub mean_off: f64,
    pub delta: f64,
}

impl AblationTable {
    fn from_rows(rows: Vec<AblationRow>, seeds: &[u64], domains: &[String]) -> Self {
        let mean = |f: &dyn Fn(&AblationRow) -> bool| {
            let v: Vec<f64> = rows.iter().filter(|r| f(r)).map(|r| r.auroc).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let per_domain = domains
            .iter()
            .map(|d| {
                let on = mean(&|r| r.faac && &r.domain == d);
                let off = mean(&|r| !r.faac && &r.domain == d);
                DomainDelta {
                    domain: d.clone(),
                    mean_on: on,
                    mean_off: off,
                    delta: on - off,
                }
            })
            .collect();
        let per_seed: Vec<(u64, f64, f64)> = seeds
            .iter()
            .map(|&s| {
                (
                    s,
                    mean(&|r| r.faac && r.seed == s),
                    mean(&|r| !r.faac && r.seed == s),
                )
            })
            .collect();
        let n = per_seed.len() as f64;
        let mean_on = per_seed.iter().map(|s| s.1).sum::<f64>() / n;
        let mean_off = per_seed.iter().map(|s| s.2).sum::<f64>() / n;
        Self {
            rows,
            per_domain,
            per_seed,
            mean_on,
            mean_off,
            delta: mean_on - mean_off,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e| data::csv_io(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["seed", "faac", "domain", "auroc"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.seed.to_string(),
                r.faac.to_string(),
                r.domain.clone(),
                r.auroc.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e| data::csv_io(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["scope", "name", "mean_on", "mean_off", "delta"])
            .map_err(err)?;
        for d in &self.per_domain {
            w.write_record([
                "domain".into(),
                d.domain.clone(),
                d.mean_on.to_string(),
                d.mean_off.to_string(),
                d.delta.to_string(),
            ])
            .map_err(err)?;
        }
        for (s, on, off) in &self.per_seed {
            w.write_record([
                "seed".into(),
                s.to_string(),
                on.to_string(),
                off.to_string(),
                (on - off).to_string(),
            ])
            .map_err(err)?;
        }
        w.write_record([
            "overall".into(),
            "mean".into(),
            self.mean_on.to_string(),
            self.mean_off.to_string(),
            self.delta.to_string(),
        ])
        .map_err(err)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Leave-one-domain-out with and without the asymmetric constraint for
/// every seed. All other settings are shared between the two arms.
pub fn ablate_faac(
    gm: &GeneMatrix,
    metas: &[SampleMeta],
    cfg: &LodoConfig,
    seeds: &[u64],
) -> Result<AblationTable> {
    if seeds.len() < 2 {
        return Err(Error::Parameter(format!(
            "ablation needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let plan = plan(gm, metas, cfg)?;
    let mut tasks = Vec::new();
    for &seed in seeds {
        for faac in [true, false] {
            for d in &plan.eligible {
                tasks.push((seed, faac, d.clone()));
            }
        }
    }
    let results: Vec<Result<AblationRow>> = pool(cfg.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|(seed, faac, d)| {
                let train_cfg = TrainConfig {
                    seed: *seed,
                    faac_enabled: *faac,
                    ..cfg.train.clone()
                };
                let fold = fold_on_resolved(gm, &plan.metas, d, &train_cfg, cfg.hvg)?;
                Ok(AblationRow {
                    seed: *seed,
                    faac: *faac,
                    domain: d.clone(),
                    auroc: fold.entry.roc.auroc,
                })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(AblationTable::from_rows(rows, seeds, &plan.eligible))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eligibility_filter() {
        let mut metas = Vec::new();
        for (d, pos, neg) in [("a", 3, 3), ("b", 2, 5), ("c", 4, 4)] {
            for i in 0..pos {
                metas.push(SampleMeta::labeled(format!("{d}p{i}"), d, 1));
            }
            for i in 0..neg {
                metas.push(SampleMeta::labeled(format!("{d}n{i}"), d, 0));
            }
        }
        let (e, s) = eligible_domains(&metas, 3);
        assert_eq!(e, vec!["a", "c"]);
        assert_eq!(s, vec!["b"]);
        let (e, _) = eligible_domains(&metas, 4);
        assert_eq!(e, vec!["c"]);
        let (e, _) = eligible_domains(&metas, 0);
        assert_eq!(e.len(), 3);
    }

    #[test]
    fn summary_means() {
        let rows = vec![
            AblationRow {
                seed: 1,
                faac: true,
                domain: "a".into(),
                auroc: 0.9,
            },
            AblationRow {
                seed: 1,
                faac: false,
                domain: "a".into(),
                auroc: 0.8,
            },
            AblationRow {
                seed: 2,
                faac: true,
                domain: "a".into(),
                auroc: 0.7,
            },
            AblationRow {
                seed: 2,
                faac: false,
                domain: "a".into(),
                auroc: 0.8,
            },
        ];
        let t = AblationTable::from_rows(rows, &[1, 2], &["a".into()]);
        assert!((t.mean_on - 0.8).abs() < 1e-12);
        assert!((t.mean_off - 0.8).abs() < 1e-12);
        assert!(t.delta.abs() < 1e-12);
        assert_eq!(t.per_seed.len(), 2);
    }
}
