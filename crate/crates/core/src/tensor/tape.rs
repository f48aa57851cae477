//! Ordered record of forward primitive applications.
//!
//! The network pushes one [`Record`] per primitive during a train-mode
//! forward pass and its backward pass pops them. Popping checks the site
//! label, so a backward that walks the graph in any order other than the
//! exact reverse of the forward fails loudly. The tape is consumed by value,
//! so each forward feeds at most one backward.

use super::ops::{BatchNormCache, DropoutMask};
use super::Matrix;
use crate::error::{Error, Result};

/// Where in the network a record was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Encoder1,
    Norm1,
    Act1,
    Drop1,
    Encoder2,
    Norm2,
    Act2,
    Drop2,
    Project,
    Classifier,
    Sigmoid,
    Reversal,
    DiscHidden,
    DiscAct,
    DiscOut,
}

#[derive(Debug, Clone)]
pub enum Record {
    Affine { input: Matrix },
    BatchNorm { cache: BatchNormCache },
    Relu { output: Matrix },
    Dropout { mask: DropoutMask },
    Project,
    Sigmoid { output: Vec<f64> },
    Reversal { coefficient: f64 },
}

#[derive(Debug, Default)]
pub struct GradTape {
    records: Vec<(Site, Record)>,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, site: Site, record: Record) {
        self.records.push((site, record));
    }

    /// Pops the most recent record, which must come from `site`.
    pub fn pop(&mut self, site: Site) -> Result<Record> {
        match self.records.pop() {
            Some((s, r)) if s == site => Ok(r),
            Some((s, _)) => Err(Error::Evaluation(format!(
                "backward expected {site:?} but the tape holds {s:?}"
            ))),
            None => Err(Error::Evaluation(format!(
                "backward expected {site:?} but the tape is empty"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.records.iter().map(|(s, _)| *s)
    }
}
