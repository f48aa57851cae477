use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops::RunningStats;
use crate::tensor::{Matrix, RngState};

/// Layer widths of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub genes: usize,
    pub hidden: usize,
    /// Encoder output width and Fourier dimension.
    pub d: usize,
    pub disc_hidden: usize,
    pub domains: usize,
}

impl Architecture {
    pub const HIDDEN: usize = 1024;
    pub const LATENT: usize = 740;
    pub const DISC_HIDDEN: usize = 256;

    /// Encoder 1024 → 740, discriminator hidden layer 256.
    pub fn standard(genes: usize, domains: usize) -> Self {
        Self {
            genes,
            hidden: Self::HIDDEN,
            d: Self::LATENT,
            disc_hidden: Self::DISC_HIDDEN,
            domains,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.genes == 0 || self.hidden == 0 || self.disc_hidden == 0 {
            return Err(Error::Parameter(format!(
                "layer widths must be positive: {self:?}"
            )));
        }
        if self.d < 2 || !self.d.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "latent width must be even and at least 2, got {}",
                self.d
            )));
        }
        if self.domains < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 domains, got {}",
                self.domains
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in × out`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Self {
            weight: Matrix::from_vec_unchecked(fan_in, fan_out, data),
            bias: vec![0.0; fan_out],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Learnable scale and shift of a batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Norm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            gamma: vec![0.0; self.gamma.len()],
            beta: vec![0.0; self.beta.len()],
        }
    }
}

/// All trainable tensors. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub encoder1: Dense,
    pub norm1: Norm,
    pub encoder2: Dense,
    pub norm2: Norm,
    pub classifier: Dense,
    pub disc_hidden: Dense,
    pub disc_out: Dense,
}

impl Weights {
    pub fn init(arch: &Architecture, rng: &mut RngState) -> Self {
        Self {
            encoder1: Dense::glorot(arch.genes, arch.hidden, rng),
            norm1: Norm::new(arch.hidden),
            encoder2: Dense::glorot(arch.hidden, arch.d, rng),
            norm2: Norm::new(arch.d),
            classifier: Dense::glorot(arch.d, 1, rng),
            disc_hidden: Dense::glorot(arch.d, arch.disc_hidden, rng),
            disc_out: Dense::glorot(arch.disc_hidden, arch.domains, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder1: self.encoder1.zeros_like(),
            norm1: self.norm1.zeros_like(),
            encoder2: self.encoder2.zeros_like(),
            norm2: self.norm2.zeros_like(),
            classifier: self.classifier.zeros_like(),
            disc_hidden: self.disc_hidden.zeros_like(),
            disc_out: self.disc_out.zeros_like(),
        }
    }

    /// Every tensor as a flat slice, in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 14] {
        [
            self.encoder1.weight.as_slice(),
            &self.encoder1.bias,
            &self.norm1.gamma,
            &self.norm1.beta,
            self.encoder2.weight.as_slice(),
            &self.encoder2.bias,
            &self.norm2.gamma,
            &self.norm2.beta,
            self.classifier.weight.as_slice(),
            &self.classifier.bias,
            self.disc_hidden.weight.as_slice(),
            &self.disc_hidden.bias,
            self.disc_out.weight.as_slice(),
            &self.disc_out.bias,
        ]
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 14] {
        [
            self.encoder1.weight.as_mut_slice(),
            &mut self.encoder1.bias,
            &mut self.norm1.gamma,
            &mut self.norm1.beta,
            self.encoder2.weight.as_mut_slice(),
            &mut self.encoder2.bias,
            &mut self.norm2.gamma,
            &mut self.norm2.beta,
            self.classifier.weight.as_mut_slice(),
            &mut self.classifier.bias,
            self.disc_hidden.weight.as_mut_slice(),
            &mut self.disc_hidden.bias,
            self.disc_out.weight.as_mut_slice(),
            &mut self.disc_out.bias,
        ]
    }

    /// Number of leading tensors in [`tensors`](Self::tensors) that belong
    /// to the encoder.
    pub const ENCODER_TENSORS: usize = 8;

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Trainable weights plus batch-norm running statistics and the input gene
/// order they were trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub gene_list: Vec<String>,
    pub weights: Weights,
    pub norm1_stats: RunningStats,
    pub norm2_stats: RunningStats,
}

impl ModelParams {
    pub fn init(arch: Architecture, gene_list: Vec<String>, rng: &mut RngState) -> Result<Self> {
        arch.validate()?;
        if gene_list.len() != arch.genes {
            return Err(Error::Parameter(format!(
                "gene list has {} names but the architecture expects {} genes",
                gene_list.len(),
                arch.genes
            )));
        }
        Ok(Self {
            weights: Weights::init(&arch, rng),
            norm1_stats: RunningStats::new(arch.hidden),
            norm2_stats: RunningStats::new(arch.d),
            arch,
            gene_list,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let a = &self.arch;
        let w = &self.weights;
        let shapes = [
            (
                "encoder1",
                w.encoder1.weight.shape(),
                (a.genes, a.hidden),
                w.encoder1.bias.len(),
            ),
            (
                "encoder2",
                w.encoder2.weight.shape(),
                (a.hidden, a.d),
                w.encoder2.bias.len(),
            ),
            (
                "classifier",
                w.classifier.weight.shape(),
                (a.d, 1),
                w.classifier.bias.len(),
            ),
            (
                "disc_hidden",
                w.disc_hidden.weight.shape(),
                (a.d, a.disc_hidden),
                w.disc_hidden.bias.len(),
            ),
            (
                "disc_out",
                w.disc_out.weight.shape(),
                (a.disc_hidden, a.domains),
                w.disc_out.bias.len(),
            ),
        ];
        for (name, got, want, bias) in shapes {
            if got != want || bias != want.1 {
                return Err(Error::Checkpoint(format!(
                    "{name} is {}x{} (+{bias} bias), expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        let norm_ok = w.norm1.gamma.len() == a.hidden
            && w.norm1.beta.len() == a.hidden
            && w.norm2.gamma.len() == a.d
            && w.norm2.beta.len() == a.d
            && self.norm1_stats.mean.len() == a.hidden
            && self.norm1_stats.var.len() == a.hidden
            && self.norm2_stats.mean.len() == a.d
            && self.norm2_stats.var.len() == a.d;
        if !norm_ok {
            return Err(Error::Checkpoint(
                "batch-norm parameter lengths do not match".into(),
            ));
        }
        if self.gene_list.len() != a.genes {
            return Err(Error::Checkpoint(format!(
                "gene list has {} names, expected {}",
                self.gene_list.len(),
                a.genes
            )));
        }
        if !w.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(())
    }
}
