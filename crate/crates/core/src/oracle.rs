//! Brute-force ground truth: exact expected-reward maximization over the
//! 50-action grid, conditioned on the reference SNR the agent observes.
//!
//! Everything here re-derives the cost, rate, error, and fidelity arithmetic
//! from scratch instead of calling the service/fidelity/env modules, so
//! agreement between oracle and environment is itself a test of both.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::EnvConfig;
use crate::env::{Env, StateVec};
use crate::error::{Error, Result};
use crate::service::{Action, NUM_ACTIONS};

/// Independent per-request evaluation at a known fading gain. Mirrors the
/// environment's scoring by construction, not by code sharing.
#[derive(Debug, Clone, Copy)]
pub struct OracleEval {
    pub reward: f64,
    pub fidelity: f64,
    pub ber: f64,
    pub p_tx_w: f64,
    pub energy_total_j: f64,
    pub time_total_s: f64,
    pub violations: usize,
}

/// Re-derivation of the full request economics for one (prompt, fading,
/// action) triple.
pub fn evaluate(config: &EnvConfig, total_tokens: u32, fading: f64, action: Action) -> OracleEval {
    let level = action.compression_level as f64;
    let kappa = 1.0 / (level + 1.0);
    let p_tx = 0.5 * (action.power_level as f64 + 1.0);

    let ch = &config.channel;
    let gamma = p_tx * fading * ch.distance_m.powf(-ch.pathloss_exp) / ch.noise_power_w;
    let rate = ch.bandwidth_hz * (1.0 + gamma).log2();
    let eta = (0.5 * libm::erfc(gamma.max(0.0).sqrt())).clamp(0.0, 0.5);

    let tokens = total_tokens as f64;
    let comp = &config.compute;
    let compressed_tokens = (kappa * tokens).ceil();
    let tx_bits = (compressed_tokens.max(1.0)) * ch.bits_per_token as f64;
    let t_slm = if kappa >= 1.0 { 0.0 } else { comp.slm_time_per_token_s * tokens };
    let t_llm = comp.llm_fixed_overhead_s
        + comp.llm_time_per_token_s * (compressed_tokens + comp.output_tokens as f64);
    let e_encode = t_slm * comp.slm_gpu_count as f64 * comp.slm_gpu_power_w
        + t_llm * comp.llm_gpu_count as f64 * comp.llm_gpu_power_w;

    let outage = !(rate > 0.0);
    let (t_tx, e_tx, eta_eff) = if outage {
        (f64::INFINITY, 0.0, 0.5)
    } else {
        let t = tx_bits / rate;
        (t, t * p_tx, eta)
    };
    let energy = e_encode + e_tx;
    let time = t_slm + t_llm + t_tx;

    let fid = &config.fidelity_model;
    let f1 = kappa.powf(fid.beta1).clamp(0.0, 1.0);
    let f2 = ((1.0 - (1.0 - kappa).powf(fid.retention_exp)) * (1.0 - eta_eff)).clamp(0.0, 1.0);
    let f3 = (f1.powf(fid.beta3) * (1.0 - eta_eff).powf(fid.gamma3)).clamp(0.0, 1.0);
    let w = &config.fidelity_weights;
    let f = w.w1() * f1 + w.w2() * f2 + w.w3() * f3;

    let c = &config.constraints;
    let mut violations = 0;
    if energy > c.energy_max_j {
        violations += 1;
    }
    if p_tx > c.power_max_w {
        violations += 1;
    }
    if time > c.latency_max_s {
        violations += 1;
    }
    if f <= c.fidelity_min {
        violations += 1;
    }

    let r = &config.reward;
    let reward = r.w_fidelity * f
        - r.w_ber * eta_eff
        - r.w_power * (p_tx / c.power_max_w)
        - r.violation_penalty * violations as f64;

    OracleEval {
        reward,
        fidelity: f,
        ber: eta_eff,
        p_tx_w: p_tx,
        energy_total_j: energy,
        time_total_s: time,
        violations,
    }
}

/// Ratio between the reference SNR the agent observes and the fading gain.
pub fn reference_snr_per_gain(config: &EnvConfig) -> f64 {
    let p_ref = 0.5 * (config.reference_power_level as f64 + 1.0);
    p_ref * config.channel.distance_m.powf(-config.channel.pathloss_exp)
        / config.channel.noise_power_w
}

/// Expected evaluation of one action over the configured prompt mix at a
/// fixed fading gain. Exact (no sampling).
pub fn expected_eval_at_fading(config: &EnvConfig, fading: f64, action: Action) -> OracleEval {
    let total_w: f64 = config.prompts.iter().map(|p| p.weight).sum();
    let mut acc = OracleEval {
        reward: 0.0,
        fidelity: 0.0,
        ber: 0.0,
        p_tx_w: 0.0,
        energy_total_j: 0.0,
        time_total_s: 0.0,
        violations: 0,
    };
    let mut expected_violations = 0.0;
    for p in &config.prompts {
        let w = p.weight / total_w;
        if w == 0.0 {
            continue;
        }
        let e = evaluate(config, p.profile.total_tokens(), fading, action);
        acc.reward += w * e.reward;
        acc.fidelity += w * e.fidelity;
        acc.ber += w * e.ber;
        acc.p_tx_w = e.p_tx_w;
        acc.energy_total_j += w * e.energy_total_j;
        acc.time_total_s += w * e.time_total_s;
        expected_violations += w * e.violations as f64;
    }
    acc.violations = expected_violations.round() as usize;
    acc
}

/// Monte Carlo estimate of an action's expected reward with the fading gain
/// restricted to a reference-SNR interval; the conditional law is a
/// truncated unit-mean exponential. Returns (mean, standard error). With
/// `mc_samples == 1` or a degenerate interval this is the midpoint
/// evaluation with zero error.
pub fn expected_reward_in_bin(
    config: &EnvConfig,
    snr_lo: f64,
    snr_hi: f64,
    action: Action,
    mc_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if mc_samples == 0 {
        return Err(Error::InvalidParameter("mc_samples must be >= 1".into()));
    }
    let k_ref = reference_snr_per_gain(config);
    let (g_lo, g_hi) = (snr_lo / k_ref, snr_hi / k_ref);
    if let Some(g) = config.fixed_fading {
        // Deterministic-channel mode: exact, sampling is moot.
        let e = expected_eval_at_fading(config, g, action);
        return Ok((e.reward, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf_lo = 1.0 - (-g_lo).exp();
    let cdf_hi = 1.0 - (-g_hi).exp();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc_samples {
        let u: f64 = rng.gen();
        let cdf = cdf_lo + u * (cdf_hi - cdf_lo);
        let g = -(1.0 - cdf).ln();
        let r = expected_eval_at_fading(config, g, action).reward;
        sum += r;
        sum_sq += r * r;
    }
    let n = mc_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let std_err = if mc_samples > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    Ok((mean, std_err))
}

/// One row of the oracle policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBin {
    pub snr_lo: f64,
    pub snr_hi: f64,
    pub best_action: Action,
    pub expected_reward: f64,
    pub std_err: f64,
}

/// Best action per reference-SNR bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub bins: Vec<PolicyBin>,
}

/// Log-spaced bin edges over [snr_min, snr_max].
pub fn log_spaced_edges(snr_min: f64, snr_max: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = (snr_min.ln(), snr_max.ln());
    (0..=bins)
        .map(|i| (lo + (hi - lo) * i as f64 / bins as f64).exp())
        .collect()
}

/// Exhaustive argmax of expected reward over all 50 actions, per bin.
/// Ties go to the lowest joint action index.
pub fn optimal_policy(
    config: &EnvConfig,
    snr_min: f64,
    snr_max: f64,
    bins: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<PolicyTable> {
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be >= 1".into()));
    }
    let edges = log_spaced_edges(snr_min, snr_max, bins);
    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let (lo, hi) = (edges[b], edges[b + 1]);
        let mut best: Option<PolicyBin> = None;
        for idx in 0..NUM_ACTIONS {
            let action = Action::from_index(idx)?;
            // One fixed substream per (bin, action): embarrassingly
            // parallel and reproducible.
            let sub_seed = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((b * NUM_ACTIONS + idx) as u64);
            let (mean, std_err) =
                expected_reward_in_bin(config, lo, hi, action, mc_samples, sub_seed)?;
            let better = match &best {
                None => true,
                Some(cur) => mean > cur.expected_reward,
            };
            if better {
                best = Some(PolicyBin {
                    snr_lo: lo,
                    snr_hi: hi,
                    best_action: action,
                    expected_reward: mean,
                    std_err,
                });
            }
        }
        out.push(best.unwrap());
    }
    Ok(PolicyTable { bins: out })
}

impl PolicyTable {
    /// Bin lookup by raw reference SNR; out-of-range values clamp to the
    /// edge bins.
    pub fn action_for_snr(&self, snr: f64) -> Action {
        for bin in &self.bins {
            if snr < bin.snr_hi {
                return bin.best_action;
            }
        }
        self.bins.last().unwrap().best_action
    }

    /// Plain tabular text serialization, diffable across runs.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# llmlink policy table v1\n");
        s.push_str("# snr_lo\tsnr_hi\tcompression_level\tpower_level\texpected_reward\tstd_err\n");
        for b in &self.bins {
            writeln!(
                s,
                "{:.12e}\t{:.12e}\t{}\t{}\t{:.12e}\t{:.12e}",
                b.snr_lo,
                b.snr_hi,
                b.best_action.compression_level,
                b.best_action.power_level,
                b.expected_reward,
                b.std_err
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut bins = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::Config(format!(
                    "policy table line {}: expected 6 fields, got {}",
                    ln + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("policy table line {}: {e}", ln + 1)))
            };
            bins.push(PolicyBin {
                snr_lo: parse(fields[0])?,
                snr_hi: parse(fields[1])?,
                best_action: Action::new(
                    parse(fields[2])? as u8,
                    parse(fields[3])? as u8,
                )?,
                expected_reward: parse(fields[4])?,
                std_err: parse(fields[5])?,
            });
        }
        if bins.is_empty() {
            return Err(Error::Config("policy table has no bins".into()));
        }
        Ok(Self { bins })
    }
}

/// Anything that maps a per-user observation to an action.
pub trait Policy {
    fn act(&self, user_state: &[f64]) -> Result<Action>;
}

impl Policy for PolicyTable {
    fn act(&self, user_state: &[f64]) -> Result<Action> {
        let snr_norm = user_state[1];
        let snr = snr_norm / (1.0 - snr_norm).max(1e-300);
        Ok(self.action_for_snr(snr))
    }
}

impl Policy for crate::agent::QNetwork {
    fn act(&self, user_state: &[f64]) -> Result<Action> {
        let q = self.forward(user_state)?;
        Action::from_index(crate::agent::argmax(&q))
    }
}

/// Greedy rollout of an arbitrary policy; same episode seeding scheme as
/// the trainer so two policies under the same seed face identical channel
/// and prompt draws.
pub fn rollout(
    env: &mut Env,
    policy: &dyn Policy,
    episodes: u32,
    seed: u64,
) -> Result<Vec<crate::env::UserStepRecord>> {
    let horizon = env.config().horizon;
    let num_users = env.config().num_users as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for _ in 0..episodes {
        let episode_seed = rng.gen::<u64>();
        let mut state: StateVec = env.reset(episode_seed)?;
        for _ in 0..horizon {
            let mut actions = Vec::with_capacity(num_users);
            for user in 0..num_users {
                actions.push(policy.act(state.user(user))?);
            }
            let outcome = env.step(&actions)?;
            records.extend(outcome.users.iter().cloned());
            state = outcome.next_state;
        }
    }
    Ok(records)
}

/// Regret report of a policy against the oracle table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretReport {
    pub mean_reward_policy: f64,
    pub mean_reward_oracle: f64,
    /// Oracle-minus-policy mean reward.
    pub reward_gap: f64,
    /// Fraction of states where the policy picked the oracle action.
    pub action_agreement: f64,
}

/// Runs paired greedy rollouts (identical draws) of the policy under test
/// and the oracle table, and compares them state by state.
///
/// The oracle treats steps as independent given the observed SNR; any
/// cross-step structure a learned policy exploits is outside this
/// comparison.
pub fn regret(
    policy_under_test: &dyn Policy,
    table: &PolicyTable,
    config: &EnvConfig,
    eval_episodes: u32,
    seed: u64,
) -> Result<RegretReport> {
    let mut env = Env::new(config.clone())?;
    let policy_records = rollout(&mut env, policy_under_test, eval_episodes, seed)?;
    let mut env = Env::new(config.clone())?;
    let oracle_records = rollout(&mut env, table, eval_episodes, seed)?;
    if policy_records.is_empty() {
        return Err(Error::EmptyBatch);
    }

    let n = policy_records.len() as f64;
    let mean_policy = policy_records.iter().map(|r| r.reward).sum::<f64>() / n;
    let mean_oracle = oracle_records.iter().map(|r| r.reward).sum::<f64>() / n;
    let agree = policy_records
        .iter()
        .zip(oracle_records.iter())
        .filter(|(p, o)| p.action == o.action)
        .count() as f64
        / n;
    Ok(RegretReport {
        mean_reward_policy: mean_policy,
        mean_reward_oracle: mean_oracle,
        reward_gap: mean_oracle - mean_policy,
        action_agreement: agree,
    })
}
