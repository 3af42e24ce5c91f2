//! Service fidelity: representation accuracy (f1), transmission completeness
//! (f2), understanding accuracy (f3), and their weighted combination.
//!
//! The default scorer is an analytic surrogate with the monotonicities the
//! optimization problem relies on: fidelity rises with kappa and falls with
//! BER. Any scorer with those properties and range [0, 1] can replace it
//! through [`FidelityModel`]; real similarity scoring is injected via the
//! bridge module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Component weights; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawWeights")]
pub struct FidelityWeights {
    w1: f64,
    w2: f64,
    w3: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    w1: f64,
    w2: f64,
    w3: f64,
}

impl TryFrom<RawWeights> for FidelityWeights {
    type Error = Error;
    fn try_from(raw: RawWeights) -> Result<Self> {
        FidelityWeights::new(raw.w1, raw.w2, raw.w3)
    }
}

impl FidelityWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        for (name, w) in [("w1", w1), ("w2", w2), ("w3", w3)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParameter(format!("{name}={w} outside [0,1]")));
            }
        }
        if ((w1 + w2 + w3) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "fidelity weights must sum to 1, got {}",
                w1 + w2 + w3
            )));
        }
        Ok(Self { w1, w2, w3 })
    }

    pub fn w1(&self) -> f64 { self.w1 }
    pub fn w2(&self) -> f64 { self.w2 }
    pub fn w3(&self) -> f64 { self.w3 }
}

impl Default for FidelityWeights {
    fn default() -> Self {
        Self { w1: 0.4, w2: 0.3, w3: 0.3 }
    }
}

/// Shape parameters of the synthetic scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityModelConfig {
    /// Curvature of f1 = kappa^beta1.
    pub beta1: f64,
    /// Essential-token prioritization exponent p in f2's retention factor.
    pub retention_exp: f64,
    pub beta3: f64,
    pub gamma3: f64,
}

impl Default for FidelityModelConfig {
    fn default() -> Self {
        Self { beta1: 0.1, retention_exp: 6.0, beta3: 0.5, gamma3: 0.5 }
    }
}

impl FidelityModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0) || !(self.beta3 > 0.0) || !(self.gamma3 > 0.0) {
            return Err(Error::InvalidParameter("fidelity exponents must be > 0".into()));
        }
        if !(self.retention_exp >= 1.0) {
            return Err(Error::InvalidParameter("retention_exp must be >= 1".into()));
        }
        Ok(())
    }
}

/// All three components plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f: f64,
}

/// Representation accuracy of the compressed prompt: f1 = kappa^beta1.
pub fn f1_representation(kappa: f64, cfg: &FidelityModelConfig) -> f64 {
    kappa.powf(cfg.beta1).clamp(0.0, 1.0)
}

/// Transmission completeness: essential-token retention under prioritized
/// compression, times the fraction of bits surviving the channel.
pub fn f2_completeness(kappa: f64, ber: f64, cfg: &FidelityModelConfig) -> f64 {
    let retention = 1.0 - (1.0 - kappa).powf(cfg.retention_exp);
    (retention * (1.0 - ber)).clamp(0.0, 1.0)
}

/// Understanding accuracy of the receiving LLM: f3 = f1^beta3 * (1-ber)^gamma3.
pub fn f3_understanding(f1: f64, ber: f64, cfg: &FidelityModelConfig) -> f64 {
    (f1.powf(cfg.beta3) * (1.0 - ber).powf(cfg.gamma3)).clamp(0.0, 1.0)
}

/// Weighted combination f = w1*f1 + w2*f2 + w3*f3.
pub fn combine(f1: f64, f2: f64, f3: f64, weights: &FidelityWeights) -> FidelityReport {
    FidelityReport {
        f1,
        f2,
        f3,
        f: weights.w1 * f1 + weights.w2 * f2 + weights.w3 * f3,
    }
}

/// Scoring strategy used by the environment. Implementations must map into
/// [0, 1], be non-decreasing in kappa, and non-increasing in BER.
pub trait FidelityModel {
    fn score(&self, kappa: f64, ber: f64, weights: &FidelityWeights) -> FidelityReport;
}

/// The default analytic surrogate.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticFidelity {
    pub cfg: FidelityModelConfig,
}

impl FidelityModel for SyntheticFidelity {
    fn score(&self, kappa: f64, ber: f64, weights: &FidelityWeights) -> FidelityReport {
        let f1 = f1_representation(kappa, &self.cfg);
        let f2 = f2_completeness(kappa, ber, &self.cfg);
        let f3 = f3_understanding(f1, ber, &self.cfg);
        combine(f1, f2, f3, weights)
    }
}
