use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic − fd| / max(1, |analytic|, |fd|)
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Central differences `(f(x+h·e) − f(x−h·e)) / 2h` for every coordinate.
pub fn central_difference<F>(mut f: F, x0: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("step must be positive, got {h}")));
    }
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(x0.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(format!(
                "function is not finite around coordinate {i}"
            )));
        }
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Compares an analytic gradient of `f` at `x0` against central differences.
pub fn grad_check<F>(f: F, x0: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != x0.len() {
        return Err(Error::Dimension(format!(
            "analytic gradient has {} entries for {} coordinates",
            analytic.len(),
            x0.len()
        )));
    }
    let numeric = central_difference(f, x0, h)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic_at_worst: analytic.first().copied().unwrap_or(0.0),
        numeric_at_worst: numeric.first().copied().unwrap_or(0.0),
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
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
    Ok(report)
}
