//! Wireless link model: Rayleigh block fading, SNR, Shannon rate, and an
//! uncoded-BPSK bit error rate, all as functions of transmit power.
//!
//! One fading gain is drawn per service request (block fading); within a
//! request the link is static.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static link parameters: bandwidth W, distance d, path-loss exponent,
/// noise power, and the bit width used to serialize prompt tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    pub distance_m: f64,
    pub pathloss_exp: f64,
    pub noise_power_w: f64,
    pub bits_per_token: u32,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidParameter("bandwidth_hz must be > 0".into()));
        }
        if !(self.distance_m > 0.0) {
            return Err(Error::InvalidParameter("distance_m must be > 0".into()));
        }
        if !(self.pathloss_exp >= 2.0) {
            return Err(Error::InvalidParameter("pathloss_exp must be >= 2".into()));
        }
        if !(self.noise_power_w > 0.0) {
            return Err(Error::InvalidParameter("noise_power_w must be > 0".into()));
        }
        if self.bits_per_token == 0 {
            return Err(Error::InvalidParameter("bits_per_token must be >= 1".into()));
        }
        Ok(())
    }
}

/// Instantaneous link state for one request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub fading_gain: f64,
    pub snr: f64,
    pub rate_bps: f64,
    pub ber: f64,
}

/// Draws a Rayleigh-fading power gain, exponentially distributed with unit
/// mean. Deterministic given the caller's seeded rng.
pub fn sample_fading<R: Rng>(rng: &mut R) -> f64 {
    // Inverse-CDF transform; 1 - u in (0, 1] avoids ln(0).
    let u: f64 = rng.gen::<f64>();
    -(1.0 - u).ln()
}

/// SNR at the receiver: gamma = P_T * g * d^-alpha / sigma^2.
pub fn snr(p_tx_w: f64, fading_gain: f64, params: &ChannelParams) -> Result<f64> {
    if !(p_tx_w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "transmit power must be > 0, got {p_tx_w}"
        )));
    }
    Ok(p_tx_w * fading_gain * params.distance_m.powf(-params.pathloss_exp)
        / params.noise_power_w)
}

/// Shannon rate R = W * log2(1 + gamma) in bit/s.
pub fn rate(snr: f64, params: &ChannelParams) -> f64 {
    params.bandwidth_hz * (1.0 + snr).log2()
}

/// Pluggable BER strategy. The default is uncoded BPSK on the
/// instantaneous-SNR channel: eta = erfc(sqrt(gamma)) / 2.
pub trait BerModel {
    fn ber(&self, snr: f64) -> f64;
}

/// Uncoded BPSK over the instantaneous channel, no error correction coding.
#[derive(Debug, Clone, Copy, Default)]
pub struct BpskBer;

impl BerModel for BpskBer {
    fn ber(&self, snr: f64) -> f64 {
        ber(snr)
    }
}

/// eta = erfc(sqrt(gamma)) / 2, clamped to [0, 0.5].
pub fn ber(snr: f64) -> f64 {
    let eta = 0.5 * libm::erfc(snr.max(0.0).sqrt());
    eta.clamp(0.0, 0.5)
}

/// Evaluates the full link for one request at the given power and fading.
pub fn link_state(p_tx_w: f64, fading_gain: f64, params: &ChannelParams) -> Result<LinkState> {
    let g = fading_gain.max(0.0);
    let snr = snr(p_tx_w, g, params)?;
    Ok(LinkState {
        fading_gain: g,
        snr,
        rate_bps: rate(snr, params),
        ber: ber(snr),
    })
}
