use std::fs;
use std::path::Path;

use super::{GeneMatrix, SampleMeta};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const META_HEADER: [&str; 4] = ["sample_id", "domain", "ic50", "response"];

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a samples × genes CSV or TSV. The header is `sample_id` followed
/// by gene names; tab is used as the delimiter when the header contains one.
pub fn load_expression(path: impl AsRef<Path>) -> Result<GeneMatrix> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut rdr = reader(&text);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(parse_error(
            path,
            1,
            "header needs a sample column and at least one gene",
        ));
    }
    let genes: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut ids = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut data = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let id = record[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_error(
                path,
                line,
                format!("duplicate sample id \"{id}\""),
            ));
        }
        for (field, gene) in record.iter().skip(1).zip(&genes) {
            let v: f64 = field.parse().map_err(|_| {
                parse_error(
                    path,
                    line,
                    format!("non-numeric value \"{field}\" for gene {gene}"),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    line,
                    format!("non-finite value for gene {gene}"),
                ));
            }
            data.push(v);
        }
        ids.push(id);
    }
    let values = Matrix::new(ids.len(), genes.len(), data)?;
    GeneMatrix::new(ids, genes, values).map_err(|e| parse_error(path, 1, e.to_string()))
}

pub fn write_expression(path: impl AsRef<Path>, gm: &GeneMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(gm.gene_names().iter().cloned());
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (id, row) in gm.sample_ids().iter().zip(gm.values().row_iter()) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(id.clone());
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Evaluation(format!("writing {}: {other:?}", path.display())),
    }
}

/// Reads `sample_id,domain,ic50,response`. Either of the last two may be
/// empty, but not both.
pub fn load_meta(path: impl AsRef<Path>) -> Result<Vec<SampleMeta>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut rdr = reader(&text);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != META_HEADER {
        return Err(parse_error(
            path,
            1,
            format!("header must be {}", META_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_error(
                path,
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let sample_id = record[0].to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(parse_error(
                path,
                line,
                format!("duplicate sample id \"{sample_id}\""),
            ));
        }
        let ic50 = match &record[2] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(path, line, format!("invalid ic50 \"{s}\"")))?,
            ),
        };
        let response = match &record[3] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            s => {
                return Err(parse_error(
                    path,
                    line,
                    format!("response must be 0 or 1, got \"{s}\""),
                ))
            }
        };
        if ic50.is_none() && response.is_none() {
            return Err(parse_error(path, line, "ic50 and response are both empty"));
        }
        out.push(SampleMeta {
            sample_id,
            domain: record[1].to_string(),
            ic50,
            response,
        });
    }
    Ok(out)
}

pub fn write_meta(path: impl AsRef<Path>, metas: &[SampleMeta]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(META_HEADER).map_err(|e| csv_io(path, e))?;
    for m in metas {
        w.write_record([
            m.sample_id.clone(),
            m.domain.clone(),
            m.ic50.map(|v| v.to_string()).unwrap_or_default(),
            m.response.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
