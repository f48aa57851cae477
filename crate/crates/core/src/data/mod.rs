//! Expression matrices, sample metadata and preprocessing.

mod io;
mod preprocess;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub(crate) use io::csv_io;
pub use io::{load_expression, load_meta, write_expression, write_meta};
pub use preprocess::{
    align_genes, binarize_ic50, lodo_split, resolve_responses, select_hvg, zscore_fit_apply,
};

/// Samples × genes expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneMatrix {
    sample_ids: Vec<String>,
    gene_names: Vec<String>,
    values: Matrix,
}

impl GeneMatrix {
    pub fn new(sample_ids: Vec<String>, gene_names: Vec<String>, values: Matrix) -> Result<Self> {
        if values.rows() != sample_ids.len() || values.cols() != gene_names.len() {
            return Err(Error::Dimension(format!(
                "{} samples × {} genes do not match a {}x{} matrix",
                sample_ids.len(),
                gene_names.len(),
                values.rows(),
                values.cols()
            )));
        }
        if let Some(dup) = first_duplicate(&sample_ids) {
            return Err(Error::Parameter(format!("duplicate sample id \"{dup}\"")));
        }
        if let Some(dup) = first_duplicate(&gene_names) {
            return Err(Error::Parameter(format!("duplicate gene name \"{dup}\"")));
        }
        if !values.is_finite() {
            return Err(Error::Parameter("expression values must be finite".into()));
        }
        Ok(Self {
            sample_ids,
            gene_names,
            values,
        })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_names.len()
    }

    pub fn select_samples(&self, indices: &[usize]) -> GeneMatrix {
        GeneMatrix {
            sample_ids: indices
                .iter()
                .map(|&i| self.sample_ids[i].clone())
                .collect(),
            gene_names: self.gene_names.clone(),
            values: self.values.select_rows(indices),
        }
    }

    pub(crate) fn select_genes(&self, indices: &[usize]) -> GeneMatrix {
        GeneMatrix {
            sample_ids: self.sample_ids.clone(),
            gene_names: indices
                .iter()
                .map(|&i| self.gene_names[i].clone())
                .collect(),
            values: self.values.select_cols(indices),
        }
    }

    /// Same samples and genes, new values.
    pub fn with_values(&self, values: Matrix) -> Result<GeneMatrix> {
        if values.shape() != self.values.shape() {
            return Err(Error::Dimension(
                "replacement values have a different shape".into(),
            ));
        }
        Ok(GeneMatrix {
            sample_ids: self.sample_ids.clone(),
            gene_names: self.gene_names.clone(),
            values,
        })
    }
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(names.len());
    names
        .iter()
        .find(|n| !seen.insert(n.as_str()))
        .map(String::as_str)
}

/// Per-sample labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    /// Cancer type.
    pub domain: String,
    /// Log-scale IC50 as supplied.
    pub ic50: Option<f64>,
    /// 1 = sensitive, 0 = resistant.
    pub response: Option<u8>,
}

impl SampleMeta {
    pub fn labeled(sample_id: impl Into<String>, domain: impl Into<String>, response: u8) -> Self {
        Self {
            sample_id: sample_id.into(),
            domain: domain.into(),
            ic50: None,
            response: Some(response),
        }
    }
}

/// Per-gene standardization statistics from a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub genes: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub const STD_FLOOR: f64 = 1e-8;

    pub fn fit(gm: &GeneMatrix) -> Self {
        let (mean, var) = column_mean_var(gm.values());
        let std = var
            .into_iter()
            .map(|v| v.sqrt().max(Self::STD_FLOOR))
            .collect();
        Self {
            genes: gm.gene_names().to_vec(),
            mean,
            std,
        }
    }

    pub fn apply(&self, gm: &GeneMatrix) -> Result<GeneMatrix> {
        if gm.gene_names() != self.genes.as_slice() {
            return Err(Error::Alignment(
                "expression genes do not match the normalization statistics".into(),
            ));
        }
        let mut values = gm.values().clone();
        for r in 0..values.rows() {
            for (c, v) in values.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        gm.with_values(values)
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(&self, gm: &GeneMatrix) -> Result<GeneMatrix> {
        if gm.gene_names() != self.genes.as_slice() {
            return Err(Error::Alignment(
                "expression genes do not match the normalization statistics".into(),
            ));
        }
        let mut values = gm.values().clone();
        for r in 0..values.rows() {
            for (c, v) in values.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        gm.with_values(values)
    }
}

/// Per-column mean and population variance.
pub(crate) fn column_mean_var(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows().max(1) as f64;
    let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; x.cols()];
    for row in x.row_iter() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Sorted, de-duplicated domain names and the index of each sample's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainIndex {
    pub names: Vec<String>,
    pub of_sample: Vec<usize>,
}

impl DomainIndex {
    pub fn build(metas: &[SampleMeta]) -> Self {
        let names: Vec<String> = metas
            .iter()
            .map(|m| m.domain.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let of_sample = metas
            .iter()
            .map(|m| names.binary_search(&m.domain).expect("domain present"))
            .collect();
        Self { names, of_sample }
    }
}

/// Metadata rows reordered to follow the expression matrix's samples.
pub fn match_meta(gm: &GeneMatrix, metas: &[SampleMeta]) -> Result<Vec<SampleMeta>> {
    let by_id: std::collections::HashMap<&str, &SampleMeta> =
        metas.iter().map(|m| (m.sample_id.as_str(), m)).collect();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(gm.n_samples());
    for id in gm.sample_ids() {
        match by_id.get(id.as_str()) {
            Some(m) => out.push((*m).clone()),
            None => missing.push(id.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Alignment(format!(
            "{} samples have no metadata, e.g. {}",
            missing.len(),
            missing
                .iter()
                .take(10)
                .cloned()
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    Ok(out)
}
