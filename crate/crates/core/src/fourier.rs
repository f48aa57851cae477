//! Fixed real-Fourier basis of the encoder output space.
//!
//! Rows are packed in the usual real-DFT order for even `d`: the constant
//! (DC) row, then `cos(2πkj/d)` / `sin(2πkj/d)` pairs for `k = 1..d/2−1`,
//! then the alternating Nyquist row `(−1)^j`. Rows are orthogonal but not
//! normalized: DC and Nyquist rows have squared norm `d`, the others `d/2`.
//! Projecting onto this basis therefore changes angles between vectors,
//! which is what makes a cosine loss on the coefficients differ from one on
//! the raw features.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    d: usize,
    basis: Matrix,
    norms_sq: Vec<f64>,
}

impl FourierBasis {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 || !d.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "Fourier dimension must be even and at least 2, got {d}"
            )));
        }
        let mut basis = Matrix::zeros(d, d);
        let mut norms_sq = vec![d as f64 / 2.0; d];
        norms_sq[0] = d as f64;
        norms_sq[d - 1] = d as f64;

        basis.row_mut(0).fill(1.0);
        for k in 1..d / 2 {
            for j in 0..d {
                // reduce k·j mod d first so large products keep full precision
                let angle = 2.0 * PI * ((k * j) % d) as f64 / d as f64;
                basis.set(2 * k - 1, j, angle.cos());
                basis.set(2 * k, j, angle.sin());
            }
        }
        for (j, v) in basis.row_mut(d - 1).iter_mut().enumerate() {
            *v = if j % 2 == 0 { 1.0 } else { -1.0 };
        }
        Ok(Self { d, basis, norms_sq })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Row `r` is the basis vector `b_r`.
    pub fn matrix(&self) -> &Matrix {
        &self.basis
    }

    pub fn norms_sq(&self) -> &[f64] {
        &self.norms_sq
    }

    /// Coefficients `z[i][r] = ⟨h_i, b_r⟩`, i.e. `z = h·Bᵀ`.
    pub fn project(&self, h: &Matrix) -> Result<Matrix> {
        self.check_cols(h, "project")?;
        h.matmul_nt(&self.basis)
    }

    /// Gradient of [`project`](Self::project): `dH = dZ·B`.
    pub fn project_backward(&self, dz: &Matrix) -> Result<Matrix> {
        self.check_cols(dz, "project backward")?;
        dz.matmul(&self.basis)
    }

    /// Inverse expansion `h_i = Σ_r (z_ir / ‖b_r‖²)·b_r`.
    pub fn reconstruct(&self, z: &Matrix) -> Result<Matrix> {
        self.check_cols(z, "reconstruct")?;
        let mut scaled = z.clone();
        for r in 0..scaled.rows() {
            for (v, n) in scaled.row_mut(r).iter_mut().zip(&self.norms_sq) {
                *v /= n;
            }
        }
        scaled.matmul(&self.basis)
    }

    /// Copy of the basis with every row scaled to unit length, an orthogonal
    /// (angle-preserving) transform.
    pub fn unit_rows(&self) -> Matrix {
        let mut m = self.basis.clone();
        for r in 0..self.d {
            let s = 1.0 / self.norms_sq[r].sqrt();
            m.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        m
    }

    fn check_cols(&self, m: &Matrix, what: &str) -> Result<()> {
        if m.cols() != self.d {
            return Err(Error::Dimension(format!(
                "{what}: input has {} columns, basis dimension is {}",
                m.cols(),
                self.d
            )));
        }
        Ok(())
    }
}
