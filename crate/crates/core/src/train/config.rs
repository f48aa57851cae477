use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the asymmetric Fourier constraint.
    pub lambda1: f64,
    /// Weight of the response classification loss.
    pub lambda2: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub faac_enabled: bool,
    pub grl_coefficient: f64,
    pub dropout_p: f64,
    pub hidden: usize,
    pub latent: usize,
    pub disc_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lr: 8e-5,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            faac_enabled: true,
            grl_coefficient: 1.0,
            dropout_p: 0.1,
            hidden: 1024,
            latent: 740,
            disc_hidden: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |flag: &str, msg: String| Err(Error::Config(format!("{flag}: {msg}")));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr", format!("must be positive, got {}", self.lr));
        }
        if self.batch_size < 2 {
            return fail(
                "batch",
                format!("must be at least 2, got {}", self.batch_size),
            );
        }
        if self.epochs < 1 {
            return fail("epochs", format!("must be at least 1, got {}", self.epochs));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("grl", self.grl_coefficient),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(name, format!("must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(
                "dropout",
                format!("must lie in [0, 1), got {}", self.dropout_p),
            );
        }
        if self.latent < 2 || !self.latent.is_multiple_of(2) {
            return fail(
                "latent",
                format!("must be even and at least 2, got {}", self.latent),
            );
        }
        if self.hidden == 0 || self.disc_hidden == 0 {
            return fail("hidden", "layer widths must be positive".into());
        }
        Ok(())
    }

    /// Whether the asymmetric constraint is evaluated at all. A zero weight
    /// switches it off exactly like the flag does.
    pub fn faac_active(&self) -> bool {
        self.faac_enabled && self.lambda1 != 0.0
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lambda1={} lambda2={} lr={:e} batch={} epochs={} seed={} faac={} grl={} dropout={} hidden={} latent={} disc_hidden={}",
            self.lambda1,
            self.lambda2,
            self.lr,
            self.batch_size,
            self.epochs,
            self.seed,
            self.faac_enabled,
            self.grl_coefficient,
            self.dropout_p,
            self.hidden,
            self.latent,
            self.disc_hidden
        )
    }
}
