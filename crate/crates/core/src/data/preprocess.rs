use std::cmp::Ordering;
use std::collections::HashMap;

use super::{GeneMatrix, NormStats, SampleMeta};
use crate::error::{Error, Result};

/// Keeps the `k` genes with the largest population variance, breaking ties
/// by ascending gene name. Kept genes stay in their input order.
pub fn select_hvg(gm: &GeneMatrix, k: usize) -> Result<GeneMatrix> {
    if k > gm.n_genes() {
        return Err(Error::Parameter(format!(
            "cannot select {k} genes from {}",
            gm.n_genes()
        )));
    }
    let (_, variance) = super::column_mean_var(gm.values());
    let names = gm.gene_names();
    let mut order: Vec<usize> = (0..gm.n_genes()).collect();
    order.sort_by(|&a, &b| {
        variance[b]
            .partial_cmp(&variance[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| names[a].cmp(&names[b]))
    });
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(gm.select_genes(&keep))
}

/// Labels every sample sensitive (1) when its IC50 is below the cohort mean
/// and resistant (0) otherwise, including exact ties.
pub fn binarize_ic50(metas: &[SampleMeta]) -> Result<Vec<SampleMeta>> {
    if metas.is_empty() {
        return Err(Error::Parameter("cannot binarize an empty cohort".into()));
    }
    let values: Vec<f64> = metas
        .iter()
        .map(|m| {
            m.ic50.ok_or_else(|| {
                Error::Parameter(format!("sample {} has no IC50 value", m.sample_id))
            })
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(metas
        .iter()
        .zip(&values)
        .map(|(m, &v)| SampleMeta {
            response: Some(u8::from(v < mean)),
            ..m.clone()
        })
        .collect())
}

/// Fills missing responses from IC50 using the mean over every sample that
/// has an IC50; explicitly supplied responses are kept.
pub fn resolve_responses(metas: &[SampleMeta]) -> Result<Vec<SampleMeta>> {
    if metas.iter().all(|m| m.response.is_some()) {
        return Ok(metas.to_vec());
    }
    let with_ic50: Vec<SampleMeta> = metas.iter().filter(|m| m.ic50.is_some()).cloned().collect();
    let labeled = binarize_ic50(&with_ic50)?;
    let derived: HashMap<&str, u8> = labeled
        .iter()
        .map(|m| (m.sample_id.as_str(), m.response.expect("binarized")))
        .collect();
    metas
        .iter()
        .map(|m| match m.response {
            Some(_) => Ok(m.clone()),
            None => derived
                .get(m.sample_id.as_str())
                .map(|&r| SampleMeta {
                    response: Some(r),
                    ..m.clone()
                })
                .ok_or_else(|| {
                    Error::Parameter(format!(
                        "sample {} has neither response nor IC50",
                        m.sample_id
                    ))
                }),
        })
        .collect()
}

/// Standardizes each gene. Without `stats` the statistics are fitted on
/// `gm`; with `stats` they are applied as given.
pub fn zscore_fit_apply(
    gm: &GeneMatrix,
    stats: Option<&NormStats>,
) -> Result<(GeneMatrix, NormStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats::fit(gm),
    };
    let out = stats.apply(gm)?;
    Ok((out, stats))
}

/// Reorders and subsets columns to exactly `gene_list`.
pub fn align_genes(gm: &GeneMatrix, gene_list: &[String]) -> Result<GeneMatrix> {
    let position: HashMap<&str, usize> = gm
        .gene_names()
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut indices = Vec::with_capacity(gene_list.len());
    let mut missing = Vec::new();
    for g in gene_list {
        match position.get(g.as_str()) {
            Some(&i) => indices.push(i),
            None => missing.push(g.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Alignment(format!(
            "{} genes missing from expression data: {}",
            missing.len(),
            missing
                .iter()
                .take(10)
                .cloned()
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    Ok(gm.select_genes(&indices))
}

/// Indices of the samples outside / inside `held_out`.
pub fn lodo_split(metas: &[SampleMeta], held_out: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let domains: std::collections::BTreeSet<&str> =
        metas.iter().map(|m| m.domain.as_str()).collect();
    if domains.len() < 2 {
        return Err(Error::Parameter(format!(
            "leave-one-domain-out needs at least 2 domains, found {}",
            domains.len()
        )));
    }
    if !domains.contains(held_out) {
        return Err(Error::Parameter(format!("unknown domain \"{held_out}\"")));
    }
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..metas.len()).partition(|&i| metas[i].domain == held_out);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use proptest::prelude::*;

    fn gm(genes: &[&str], rows: &[Vec<f64>]) -> GeneMatrix {
        GeneMatrix::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            genes.iter().map(|g| g.to_string()).collect(),
            Matrix::from_rows(rows).unwrap(),
        )
        .unwrap()
    }

    fn ic50(values: &[f64]) -> Vec<SampleMeta> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| SampleMeta {
                sample_id: format!("s{i}"),
                domain: "A".into(),
                ic50: Some(v),
                response: None,
            })
            .collect()
    }

    fn responses(m: &[SampleMeta]) -> Vec<u8> {
        m.iter().map(|m| m.response.unwrap()).collect()
    }

    /// Variances g1 = 0, g2 = 5, g3 = 1 (population).
    pub(crate) fn three_gene_fixture() -> GeneMatrix {
        let s5 = 5f64.sqrt();
        gm(
            &["g1", "g2", "g3"],
            &[vec![2.0, s5, 1.0], vec![2.0, -s5, -1.0]],
        )
    }

    #[test]
    fn hvg_keeps_most_variable() {
        let m = select_hvg(&three_gene_fixture(), 2).unwrap();
        assert_eq!(m.gene_names(), &["g2", "g3"]);
    }

    #[test]
    fn hvg_identity_and_errors() {
        let f = three_gene_fixture();
        assert_eq!(select_hvg(&f, 3).unwrap(), f);
        assert!(matches!(select_hvg(&f, 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn hvg_ties_break_by_name_and_keep_order() {
        let m = gm(
            &["b", "a", "c"],
            &[vec![1.0, 1.0, 0.0], vec![-1.0, -1.0, 0.0]],
        );
        let s = select_hvg(&m, 1).unwrap();
        assert_eq!(s.gene_names(), &["a"]);
        let s = select_hvg(&m, 2).unwrap();
        assert_eq!(s.gene_names(), &["b", "a"]);
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(
            responses(&binarize_ic50(&ic50(&[1.0, 2.0, 3.0, 6.0])).unwrap()),
            vec![1, 1, 0, 0]
        );
        assert_eq!(
            responses(&binarize_ic50(&ic50(&[2.0, 2.0, 2.0])).unwrap()),
            vec![0, 0, 0]
        );
        assert_eq!(responses(&binarize_ic50(&ic50(&[-3.0])).unwrap()), vec![0]);
        assert!(matches!(binarize_ic50(&[]), Err(Error::Parameter(_))));
    }

    #[test]
    fn resolve_keeps_given_responses() {
        let mut metas = ic50(&[1.0, 2.0, 3.0, 6.0]);
        metas[0].response = Some(0);
        let r = resolve_responses(&metas).unwrap();
        assert_eq!(responses(&r), vec![0, 1, 0, 0]);
        let all = vec![SampleMeta::labeled("x", "A", 1)];
        assert_eq!(resolve_responses(&all).unwrap(), all);
    }

    #[test]
    fn zscore_examples() {
        let m = gm(&["g"], &[vec![1.0], vec![3.0]]);
        let (z, stats) = zscore_fit_apply(&m, None).unwrap();
        assert_eq!(z.values().as_slice(), &[-1.0, 1.0]);
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.std, vec![1.0]);

        let c = gm(&["g"], &[vec![5.0], vec![5.0]]);
        let (z, stats) = zscore_fit_apply(&c, None).unwrap();
        assert_eq!(z.values().as_slice(), &[0.0, 0.0]);
        assert_eq!(stats.std, vec![NormStats::STD_FLOOR]);

        let other = gm(&["h"], &[vec![1.0]]);
        assert!(matches!(
            zscore_fit_apply(&other, Some(&stats)),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn align_examples() {
        let m = gm(&["a", "b", "c"], &[vec![1.0, 2.0, 3.0]]);
        let names: Vec<String> = m.gene_names().to_vec();
        assert_eq!(align_genes(&m, &names).unwrap(), m);
        let rev: Vec<String> = names.iter().rev().cloned().collect();
        assert_eq!(
            align_genes(&m, &rev).unwrap().values().as_slice(),
            &[3.0, 2.0, 1.0]
        );
        let err = align_genes(&m, &["a".into(), "gX".into()]).unwrap_err();
        assert!(err.to_string().contains("gX"));
    }

    #[test]
    fn lodo_examples() {
        let metas: Vec<SampleMeta> = ["A", "A", "B", "C"]
            .iter()
            .enumerate()
            .map(|(i, d)| SampleMeta::labeled(format!("s{i}"), *d, 0))
            .collect();
        assert_eq!(lodo_split(&metas, "B").unwrap(), (vec![0, 1, 3], vec![2]));
        assert_eq!(lodo_split(&metas, "A").unwrap().1.len(), 2);
        assert!(matches!(lodo_split(&metas, "Z"), Err(Error::Parameter(_))));
        assert!(lodo_split(&metas[..2], "A").is_err());
    }

    proptest! {
        #[test]
        fn hvg_is_idempotent(seed in 0u64..1000, k in 1usize..6) {
            let mut rng = crate::tensor::RngState::new(seed);
            let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.normal()).collect()).collect();
            let m = gm(&["a", "b", "c", "d", "e", "f"], &rows);
            let once = select_hvg(&m, k).unwrap();
            prop_assert_eq!(select_hvg(&once, k).unwrap(), once.clone());
            prop_assert_eq!(select_hvg(&m, k).unwrap(), once);
        }

        #[test]
        fn maximum_ic50_is_always_resistant(values in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            let r = binarize_ic50(&ic50(&values)).unwrap();
            let (imax, _) = values.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            prop_assert_eq!(r[imax].response, Some(0));
        }

        #[test]
        fn lodo_covers_every_sample_once(domains in proptest::collection::vec(0u8..4, 2..30)) {
            let metas: Vec<SampleMeta> = domains.iter().enumerate()
                .map(|(i, d)| SampleMeta::labeled(format!("s{i}"), format!("D{d}"), 0)).collect();
            let names: std::collections::BTreeSet<String> = metas.iter().map(|m| m.domain.clone()).collect();
            prop_assume!(names.len() >= 2);
            let mut count = vec![0; metas.len()];
            for d in &names {
                let (train, test) = lodo_split(&metas, d).unwrap();
                prop_assert_eq!(train.len() + test.len(), metas.len());
                for i in test { count[i] += 1; }
            }
            prop_assert!(count.iter().all(|&c| c == 1));
        }

        #[test]
        fn zscore_round_trip(seed in 0u64..1000) {
            let mut rng = crate::tensor::RngState::new(seed);
            let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| 5.0 * rng.normal() + 2.0).collect()).collect();
            let m = gm(&["a", "b", "c"], &rows);
            let (z, stats) = zscore_fit_apply(&m, None).unwrap();
            let back = stats.invert(&z).unwrap();
            prop_assert!(back.values().max_abs_diff(m.values()) <= 1e-9);
        }
    }
}
