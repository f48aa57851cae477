use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Ridge added to the normal equations of every linear fit.
pub const RIDGE: f64 = 1e-8;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 20_000;

fn centered(x: &Matrix) -> (Matrix, Vec<f64>) {
    let n = x.rows() as f64;
    let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n).collect();
    let mut c = x.clone();
    for r in 0..c.rows() {
        for (v, m) in c.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    (c, mean)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn remove_component(v: &mut [f64], u: &[f64]) {
    let a = dot(v, u);
    v.iter_mut().zip(u).for_each(|(x, y)| *x -= a * y);
}

fn matvec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.row_iter().map(|row| dot(row, v)).collect()
}

/// Leading eigenvector of the symmetric matrix `c`, restricted to the
/// orthogonal complement of `exclude`.
fn power_iteration(c: &Matrix, exclude: Option<&[f64]>) -> Vec<f64> {
    let p = c.rows();
    let mut v: Vec<f64> = (0..p).map(|j| 1.0 + (j as f64 + 1.0) / p as f64).collect();
    if let Some(u) = exclude {
        remove_component(&mut v, u);
    }
    normalize(&mut v);
    for _ in 0..POWER_MAX_ITERS {
        let mut next = matvec(c, &v);
        if let Some(u) = exclude {
            remove_component(&mut next, u);
        }
        if normalize(&mut next) <= f64::MIN_POSITIVE {
            // no variance left in this subspace; any unit direction will do
            break;
        }
        let diff: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if diff < POWER_TOL {
            break;
        }
    }
    // fix the sign so the largest-magnitude entry is positive
    let lead = v
        .iter()
        .copied()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Projection of mean-centered rows onto the top two principal axes of the
/// sample covariance, found by power iteration with deflation.
pub fn embed_2d(features: &Matrix) -> Result<Matrix> {
    let b = features.rows();
    if b < 3 {
        return Err(Error::Parameter(format!(
            "embedding needs at least 3 samples, got {b}"
        )));
    }
    if features.cols() < 2 {
        return Err(Error::Parameter(
            "embedding needs at least 2 feature columns".into(),
        ));
    }
    let (xc, _) = centered(features);
    let cov = xc.matmul_tn(&xc)?.scale(1.0 / (b as f64 - 1.0));
    let v1 = power_iteration(&cov, None);
    let lambda1 = dot(&v1, &matvec(&cov, &v1));
    let mut deflated = cov.clone();
    for r in 0..deflated.rows() {
        for (c, x) in deflated.row_mut(r).iter_mut().enumerate() {
            *x -= lambda1 * v1[r] * v1[c];
        }
    }
    let mut v2 = power_iteration(&deflated, Some(&v1));
    remove_component(&mut v2, &v1);
    normalize(&mut v2);
    let mut out = Matrix::zeros(b, 2);
    for (i, row) in xc.row_iter().enumerate() {
        out.set(i, 0, dot(row, &v1));
        out.set(i, 1, dot(row, &v2));
    }
    Ok(out)
}

pub fn write_embedding(
    path: impl AsRef<Path>,
    sample_ids: &[String],
    coords: &Matrix,
    labels: &[u8],
) -> Result<()> {
    let path = path.as_ref();
    if sample_ids.len() != coords.rows() || labels.len() != coords.rows() || coords.cols() != 2 {
        return Err(Error::Dimension(
            "embedding rows, ids and labels must agree".into(),
        ));
    }
    let err = |e| crate::data::csv_io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["sample_id", "x", "y", "label"])
        .map_err(err)?;
    for (i, id) in sample_ids.iter().enumerate() {
        w.write_record([
            id.clone(),
            coords.get(i, 0).to_string(),
            coords.get(i, 1).to_string(),
            labels[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Linear model `y ≈ x·coef + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coef.len() {
            return Err(Error::Dimension(format!(
                "model has {} coefficients, input has {} columns",
                self.coef.len(),
                x.cols()
            )));
        }
        Ok(x.row_iter()
            .map(|r| dot(r, &self.coef) + self.intercept)
            .collect())
    }
}

/// Least squares with intercept via the normal equations of the centered
/// design, regularized by `ridge`.
pub fn ridge_fit(x: &Matrix, y: &[f64], ridge: f64) -> Result<RidgeFit> {
    if x.rows() != y.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Dimension("empty design matrix".into()));
    }
    let n = y.len() as f64;
    let (xc, xmean) = centered(x);
    let ymean = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - ymean).collect();
    let p = x.cols();
    let gram = xc.matmul_tn(&xc)?;
    let mut a = DMatrix::from_row_slice(p, p, gram.as_slice());
    for j in 0..p {
        a[(j, j)] += ridge;
    }
    let rhs: Vec<f64> = (0..p)
        .map(|j| xc.row_iter().zip(&yc).map(|(r, t)| r[j] * t).sum())
        .collect();
    let rhs = DVector::from_vec(rhs);
    let coef = match a.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Metric("normal equations are singular".into()))?,
    };
    let coef: Vec<f64> = coef.iter().copied().collect();
    let intercept = ymean - dot(&xmean, &coef);
    Ok(RidgeFit { coef, intercept })
}

/// In-sample coefficient of determination of a linear fit of IC50 on the
/// learned features.
pub fn feature_ic50_r2(features: &Matrix, ic50: &[f64]) -> Result<f64> {
    if ic50.iter().any(|v| !v.is_finite()) {
        return Err(Error::Metric("IC50 values must be finite".into()));
    }
    let n = ic50.len() as f64;
    let mean = ic50.iter().sum::<f64>() / n;
    let ss_tot: f64 = ic50.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot <= 0.0 || ic50.is_empty() {
        return Err(Error::Metric("IC50 values have zero variance".into()));
    }
    let fit = ridge_fit(features, ic50, RIDGE)?;
    let pred = fit.predict(features)?;
    let ss_res: f64 = pred.iter().zip(ic50).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Scores `test` with a ridge regression of 0/1 labels fitted on `train`.
pub fn linear_probe(train: &Matrix, labels: &[u8], test: &Matrix, ridge: f64) -> Result<Vec<f64>> {
    let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
    ridge_fit(train, &y, ridge)?.predict(test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RngState;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = RngState::new(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
    }

    #[test]
    fn rank_one_data_has_no_second_component() {
        let dir = [0.3, -1.0, 2.0, 0.5, 0.1];
        let mut rng = RngState::new(1);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let t = rng.normal();
                dir.iter().map(|d| 4.0 + t * d).collect()
            })
            .collect();
        let e = embed_2d(&Matrix::from_rows(&rows).unwrap()).unwrap();
        assert!(variance(&e.column(1)) <= 1e-9);
        assert!(variance(&e.column(0)) > 1.0);
    }

    #[test]
    fn components_are_ordered_and_orthogonal() {
        let mut x = random(40, 6, 2);
        for r in 0..40 {
            let row = x.row_mut(r);
            row[0] *= 5.0;
            row[3] *= 2.0;
        }
        let (xc, _) = centered(&x);
        let cov = xc.matmul_tn(&xc).unwrap().scale(1.0 / 39.0);
        let v1 = power_iteration(&cov, None);
        let mut deflated = cov.clone();
        let l1 = dot(&v1, &matvec(&cov, &v1));
        for r in 0..6 {
            for c in 0..6 {
                deflated.set(r, c, deflated.get(r, c) - l1 * v1[r] * v1[c]);
            }
        }
        let v2 = power_iteration(&deflated, Some(&v1));
        assert!(dot(&v1, &v2).abs() <= 1e-8);
        let e = embed_2d(&x).unwrap();
        assert!(variance(&e.column(0)) >= variance(&e.column(1)));
        // columns of the projection are uncorrelated
        let c01: f64 = e
            .column(0)
            .iter()
            .zip(e.column(1))
            .map(|(a, b)| a * b)
            .sum();
        assert!(c01.abs() < 1e-6, "{c01}");
    }

    #[test]
    fn matches_symmetric_eigendecomposition() {
        let x = random(30, 4, 3);
        let (xc, _) = centered(&x);
        let cov = xc.matmul_tn(&xc).unwrap().scale(1.0 / 29.0);
        let eig = nalgebra::SymmetricEigen::new(DMatrix::from_row_slice(4, 4, cov.as_slice()));
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        let e = embed_2d(&x).unwrap();
        assert!((variance(&e.column(0)) - vals[0]).abs() < 1e-8);
        assert!((variance(&e.column(1)) - vals[1]).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            embed_2d(&random(2, 4, 0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn exact_linear_target() {
        let x = random(50, 4, 4);
        let y: Vec<f64> = x.row_iter().map(|r| 2.0 * r[2] - 1.0).collect();
        assert!(feature_ic50_r2(&x, &y).unwrap() >= 1.0 - 1e-9);
    }

    #[test]
    fn independent_target_has_small_r2() {
        let x = random(500, 5, 5);
        let mut rng = RngState::new(6);
        let y: Vec<f64> = (0..500).map(|_| rng.normal()).collect();
        let r2 = feature_ic50_r2(&x, &y).unwrap();
        assert!((0.0..0.2).contains(&r2), "{r2}");
    }

    #[test]
    fn duplicated_columns_are_fine() {
        let base = random(30, 2, 7);
        let x = Matrix::from_rows(
            &base
                .row_iter()
                .map(|r| vec![r[0], r[1], r[0]])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = base.row_iter().map(|r| r[0] + 0.5 * r[1]).collect();
        let r2 = feature_ic50_r2(&x, &y).unwrap();
        assert!(r2.is_finite() && r2 > 0.999_999);
    }

    #[test]
    fn constant_target_is_rejected() {
        assert!(matches!(
            feature_ic50_r2(&random(10, 2, 8), &[3.0; 10]),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn embedding_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let coords = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        write_embedding(&p, &["a".into(), "b".into()], &coords, &[1, 0]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "sample_id,x,y,label\na,1,2,1\nb,0.5,-1,0\n"
        );
    }
}
