//! Prompt-size, energy, and latency accounting for a single service request,
//! plus the discrete action grid (compression level x power level).

use serde::{Deserialize, Serialize};

use crate::channel::LinkState;
use crate::error::{Error, Result};

pub const NUM_COMPRESSION_LEVELS: u8 = 5;
pub const NUM_POWER_LEVELS: u8 = 10;
pub const NUM_ACTIONS: usize = (NUM_COMPRESSION_LEVELS as usize) * (NUM_POWER_LEVELS as usize);

/// Token lengths of the three prompt parts: instruction, demonstrations,
/// question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptProfile {
    pub len_instruction: u32,
    pub len_demos: u32,
    pub len_question: u32,
}

impl PromptProfile {
    pub fn total_tokens(&self) -> u32 {
        self.len_instruction + self.len_demos + self.len_question
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_tokens() == 0 {
            return Err(Error::InvalidParameter("prompt must have >= 1 token".into()));
        }
        Ok(())
    }
}

/// Compute-side coefficients: per-token times for the compressing SLM and
/// the serving LLM, fixed LLM overhead, assumed response length, and the
/// GPU counts / thermal design powers of both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeProfile {
    pub slm_time_per_token_s: f64,
    pub llm_time_per_token_s: f64,
    pub llm_fixed_overhead_s: f64,
    pub output_tokens: u32,
    pub slm_gpu_count: u32,
    pub slm_gpu_power_w: f64,
    pub llm_gpu_count: u32,
    pub llm_gpu_power_w: f64,
}

impl ComputeProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.slm_time_per_token_s > 0.0) || !(self.llm_time_per_token_s > 0.0) {
            return Err(Error::InvalidParameter("per-token times must be > 0".into()));
        }
        if !(self.llm_fixed_overhead_s >= 0.0) {
            return Err(Error::InvalidParameter("llm_fixed_overhead_s must be >= 0".into()));
        }
        if self.output_tokens == 0 {
            return Err(Error::InvalidParameter("output_tokens must be >= 1".into()));
        }
        if self.slm_gpu_count == 0 || self.llm_gpu_count == 0 {
            return Err(Error::InvalidParameter("gpu counts must be >= 1".into()));
        }
        if !(self.slm_gpu_power_w > 0.0) || !(self.llm_gpu_power_w > 0.0) {
            return Err(Error::InvalidParameter("gpu powers must be > 0".into()));
        }
        Ok(())
    }
}

/// Joint action: compression level 0..=4 and power level 0..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub compression_level: u8,
    pub power_level: u8,
}

impl Action {
    pub fn new(compression_level: u8, power_level: u8) -> Result<Self> {
        if compression_level >= NUM_COMPRESSION_LEVELS {
            return Err(Error::InvalidAction(format!(
                "compression_level {compression_level} out of range 0..{NUM_COMPRESSION_LEVELS}"
            )));
        }
        if power_level >= NUM_POWER_LEVELS {
            return Err(Error::InvalidAction(format!(
                "power_level {power_level} out of range 0..{NUM_POWER_LEVELS}"
            )));
        }
        Ok(Self { compression_level, power_level })
    }

    /// Joint index in [0, 49]: compression_level * 10 + power_level.
    pub fn index(&self) -> usize {
        self.compression_level as usize * NUM_POWER_LEVELS as usize + self.power_level as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= NUM_ACTIONS {
            return Err(Error::InvalidAction(format!("action index {index} out of range")));
        }
        Ok(Self {
            compression_level: (index / NUM_POWER_LEVELS as usize) as u8,
            power_level: (index % NUM_POWER_LEVELS as usize) as u8,
        })
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..NUM_ACTIONS).map(|i| Action::from_index(i).unwrap())
    }
}

/// Per-request cost breakdown; both sum decompositions hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub kappa: f64,
    pub tx_bits: u64,
    pub energy_encode_j: f64,
    pub energy_tx_j: f64,
    pub energy_total_j: f64,
    pub time_slm_s: f64,
    pub time_llm_s: f64,
    pub time_tx_s: f64,
    pub time_total_s: f64,
}

/// Constraint thresholds of the optimization problem: energy, power,
/// latency, and minimum fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    pub energy_max_j: f64,
    pub power_max_w: f64,
    pub latency_max_s: f64,
    pub fidelity_min: f64,
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy_max_j > 0.0) || !(self.power_max_w > 0.0) || !(self.latency_max_s > 0.0) {
            return Err(Error::InvalidParameter("constraint thresholds must be > 0".into()));
        }
        if !(self.fidelity_min >= 0.0 && self.fidelity_min < 1.0) {
            return Err(Error::InvalidParameter("fidelity_min must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Compression ratio for a discrete level: kappa = 1 / (level + 1),
/// so level 0 is uncompressed and level 3 realizes 4x compression.
pub fn kappa_of_level(compression_level: u8) -> Result<f64> {
    if compression_level >= NUM_COMPRESSION_LEVELS {
        return Err(Error::InvalidAction(format!(
            "compression_level {compression_level} out of range"
        )));
    }
    Ok(1.0 / (compression_level as f64 + 1.0))
}

/// Transmit power for a discrete level: 0.5 W steps, 0.5 W to 5.0 W.
pub fn power_of_level(power_level: u8) -> Result<f64> {
    if power_level >= NUM_POWER_LEVELS {
        return Err(Error::InvalidAction(format!("power_level {power_level} out of range")));
    }
    Ok(0.5 * (power_level as f64 + 1.0))
}

/// Bit length of the compressed prompt: ceil(kappa * tokens) * bits_per_token.
pub fn compressed_bits(profile: &PromptProfile, kappa: f64, bits_per_token: u32) -> u64 {
    let tokens = (kappa * profile.total_tokens() as f64).ceil() as u64;
    tokens.max(1) * bits_per_token as u64
}

/// SLM and LLM encode times. The SLM reads the whole original prompt, so its
/// time is independent of kappa, and it is skipped entirely at kappa = 1.
/// The LLM time is affine in compressed-input-plus-output tokens.
pub fn encode_times(profile: &PromptProfile, kappa: f64, compute: &ComputeProfile) -> (f64, f64) {
    let total = profile.total_tokens() as f64;
    let t_slm = if kappa >= 1.0 {
        0.0
    } else {
        compute.slm_time_per_token_s * total
    };
    let compressed_tokens = (kappa * total).ceil();
    let t_llm = compute.llm_fixed_overhead_s
        + compute.llm_time_per_token_s * (compressed_tokens + compute.output_tokens as f64);
    (t_slm, t_llm)
}

/// Encoding energy: t_slm * n_gpu_slm * P_gpu_slm + t_llm * n_gpu_llm * P_gpu_llm.
pub fn energy_encode(t_slm_s: f64, t_llm_s: f64, compute: &ComputeProfile) -> f64 {
    t_slm_s * compute.slm_gpu_count as f64 * compute.slm_gpu_power_w
        + t_llm_s * compute.llm_gpu_count as f64 * compute.llm_gpu_power_w
}

/// Transmission energy and delay: t_t = s / R, E_t = t_t * P_T.
/// A zero rate means the link is in outage under the current power.
pub fn energy_and_time_tx(tx_bits: u64, p_tx_w: f64, rate_bps: f64) -> Result<(f64, f64)> {
    if !(rate_bps > 0.0) {
        return Err(Error::Outage);
    }
    let t_t = tx_bits as f64 / rate_bps;
    Ok((t_t * p_tx_w, t_t))
}

/// Full per-request cost for one action at the given link state.
pub fn total_cost(
    profile: &PromptProfile,
    action: Action,
    link: &LinkState,
    compute: &ComputeProfile,
    bits_per_token: u32,
) -> Result<CostBreakdown> {
    let kappa = kappa_of_level(action.compression_level)?;
    let p_tx = power_of_level(action.power_level)?;
    let tx_bits = compressed_bits(profile, kappa, bits_per_token);
    let (t_slm, t_llm) = encode_times(profile, kappa, compute);
    let e_encode = energy_encode(t_slm, t_llm, compute);
    let (e_tx, t_tx) = energy_and_time_tx(tx_bits, p_tx, link.rate_bps)?;
    Ok(CostBreakdown {
        kappa,
        tx_bits,
        energy_encode_j: e_encode,
        energy_tx_j: e_tx,
        energy_total_j: e_encode + e_tx,
        time_slm_s: t_slm,
        time_llm_s: t_llm,
        time_tx_s: t_tx,
        time_total_s: t_slm + t_llm + t_tx,
    })
}
