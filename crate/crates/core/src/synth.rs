//! Synthetic multi-domain benchmark.
//!
//! Sensitive samples share one signature direction; resistant samples each
//! follow one of several unrelated mechanism directions. Every domain adds
//! its own shift vector, and isotropic Gaussian noise is added on top:
//!
//! ```text
//! sensitive  = β_d·δ_m + β_s·s      + σ·ε
//! resistant  = β_d·δ_m + β_r·r_c(i) + σ·ε
//! ```
//!
//! `s`, `r_c` and `δ_m` are random unit vectors drawn from the seed.

use serde::{Deserialize, Serialize};

use crate::data::{GeneMatrix, SampleMeta};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub domains: usize,
    pub genes: usize,
    pub samples_per_domain: usize,
    pub sensitive_fraction: f64,
    pub mechanisms: usize,
    pub signature_strength: f64,
    pub mechanism_strength: f64,
    pub domain_shift: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            domains: 6,
            genes: 200,
            samples_per_domain: 100,
            sensitive_fraction: 0.5,
            mechanisms: 4,
            signature_strength: 3.0,
            mechanism_strength: 3.0,
            domain_shift: 2.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.domains < 2 {
            return bad(format!("domains must be at least 2, got {}", self.domains));
        }
        if self.mechanisms < 2 {
            return bad(format!(
                "mechanisms must be at least 2, got {}",
                self.mechanisms
            ));
        }
        if self.genes == 0 || self.samples_per_domain == 0 {
            return bad("genes and samples_per_domain must be positive".into());
        }
        if !(self.sensitive_fraction > 0.0 && self.sensitive_fraction < 1.0) {
            return bad(format!(
                "sensitive_fraction must lie in (0, 1), got {}",
                self.sensitive_fraction
            ));
        }
        let strengths = [
            ("signature_strength", self.signature_strength),
            ("mechanism_strength", self.mechanism_strength),
            ("domain_shift", self.domain_shift),
            ("noise", self.noise),
        ];
        for (name, v) in strengths {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Sensitive samples per domain.
    pub fn sensitive_per_domain(&self) -> usize {
        (self.sensitive_fraction * self.samples_per_domain as f64).round() as usize
    }

    pub fn domain_name(&self, m: usize) -> String {
        let width = (self.domains - 1).to_string().len();
        format!("domain_{m:0width$}")
    }
}

fn unit_vector(dim: usize, rng: &mut RngState) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// The generated data plus the hidden directions, for tests.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub expression: GeneMatrix,
    pub metas: Vec<SampleMeta>,
    pub signature: Vec<f64>,
    pub mechanisms: Vec<Vec<f64>>,
    pub shifts: Vec<Vec<f64>>,
    /// Mechanism index of each resistant sample (`None` for sensitive).
    pub mechanism_of: Vec<Option<usize>>,
}

pub fn generate(cfg: &SynthConfig) -> Result<(GeneMatrix, Vec<SampleMeta>)> {
    let d = generate_detailed(cfg)?;
    Ok((d.expression, d.metas))
}

pub fn generate_detailed(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let g = cfg.genes;
    let mut rng = RngState::new(cfg.seed);
    let signature = unit_vector(g, &mut rng);
    let mechanisms: Vec<Vec<f64>> = (0..cfg.mechanisms)
        .map(|_| unit_vector(g, &mut rng))
        .collect();
    let shifts: Vec<Vec<f64>> = (0..cfg.domains).map(|_| unit_vector(g, &mut rng)).collect();

    let n = cfg.samples_per_domain;
    let n_sensitive = cfg.sensitive_per_domain();
    let total = cfg.domains * n;
    let mut values = Vec::with_capacity(total * g);
    let mut ids = Vec::with_capacity(total);
    let mut metas = Vec::with_capacity(total);
    let mut mechanism_of = Vec::with_capacity(total);

    for (m, shift) in shifts.iter().enumerate() {
        let domain = cfg.domain_name(m);
        let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_sensitive)).collect();
        rng.shuffle(&mut labels);
        for (i, &label) in labels.iter().enumerate() {
            let (direction, strength, mech) = if label == 1 {
                (&signature, cfg.signature_strength, None)
            } else {
                let c = rng.index(cfg.mechanisms);
                (&mechanisms[c], cfg.mechanism_strength, Some(c))
            };
            for j in 0..g {
                let noise = rng.normal();
                values.push(
                    cfg.domain_shift * shift[j] + strength * direction[j] + cfg.noise * noise,
                );
            }
            let id = format!("{domain}_s{i:03}");
            ids.push(id.clone());
            metas.push(SampleMeta::labeled(id, domain.clone(), label));
            mechanism_of.push(mech);
        }
    }
    let genes = (0..g).map(|j| format!("gene_{j:04}")).collect();
    let expression = GeneMatrix::new(ids, genes, Matrix::new(total, g, values)?)?;
    Ok(SynthData {
        expression,
        metas,
        signature,
        mechanisms,
        shifts,
        mechanism_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: 10,
            ..Default::default()
        };
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn label_balance_per_domain() {
        let cfg = SynthConfig {
            samples_per_domain: 37,
            sensitive_fraction: 0.3,
            ..Default::default()
        };
        let (_, metas) = generate(&cfg).unwrap();
        for m in 0..cfg.domains {
            let name = cfg.domain_name(m);
            let pos = metas
                .iter()
                .filter(|s| s.domain == name && s.response == Some(1))
                .count();
            assert_eq!(pos, (0.3f64 * 37.0).round() as usize);
        }
    }

    #[test]
    fn noiseless_limit() {
        let cfg = SynthConfig {
            noise: 0.0,
            domain_shift: 0.0,
            samples_per_domain: 40,
            ..Default::default()
        };
        let d = generate_detailed(&cfg).unwrap();
        let x = d.expression.values();
        let sensitive: Vec<usize> = (0..x.rows())
            .filter(|&i| d.metas[i].response == Some(1))
            .collect();
        for &i in &sensitive[1..] {
            assert_eq!(x.row(i), x.row(sensitive[0]));
            assert!((cosine(x.row(i), x.row(sensitive[0])) - 1.0).abs() < 1e-12);
        }
        let mut distinct: Vec<Vec<u64>> = (0..x.rows())
            .filter(|&i| d.metas[i].response == Some(0))
            .map(|i| x.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), cfg.mechanisms);
    }

    #[test]
    fn mechanisms_are_nearly_orthogonal() {
        let mut failures = 0;
        let mut pairs = 0;
        for seed in 0..100 {
            let cfg = SynthConfig {
                seed,
                noise: 0.0,
                domain_shift: 0.0,
                samples_per_domain: 2,
                domains: 2,
                ..Default::default()
            };
            let d = generate_detailed(&cfg).unwrap();
            for a in 0..cfg.mechanisms {
                for b in a + 1..cfg.mechanisms {
                    pairs += 1;
                    if cosine(&d.mechanisms[a], &d.mechanisms[b]).abs() >= 0.5 {
                        failures += 1;
                    }
                }
            }
        }
        assert!(failures as f64 <= 0.01 * pairs as f64, "{failures}/{pairs}");
    }

    #[test]
    fn each_domain_has_its_own_shift() {
        let d = generate_detailed(&SynthConfig::default()).unwrap();
        for a in 0..d.shifts.len() {
            for b in a + 1..d.shifts.len() {
                assert_ne!(d.shifts[a], d.shifts[b]);
            }
        }
    }

    #[test]
    fn rejects_invalid_config() {
        for cfg in [
            SynthConfig {
                domains: 1,
                ..Default::default()
            },
            SynthConfig {
                mechanisms: 1,
                ..Default::default()
            },
            SynthConfig {
                sensitive_fraction: 1.0,
                ..Default::default()
            },
            SynthConfig {
                noise: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::Parameter(_))));
        }
    }
}
