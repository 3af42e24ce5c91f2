//! The joint compression/power decision process: per-step observation,
//! action application, cost and fidelity evaluation, constraint checks, and
//! reward emission for N independent users.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, LinkState};
use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::fidelity::{FidelityModel, FidelityReport, SyntheticFidelity};
use crate::service::{
    self, Action, CostBreakdown, PromptProfile, NUM_ACTIONS,
};

pub const STATE_DIM_PER_USER: usize = 3;

/// Per-user observation: last fidelity, bounded SNR, and BER, where the
/// channel entries are measured at the neutral reference action so they
/// describe the fading draw the next action will face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    values: Vec<f64>,
}

impl StateVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % STATE_DIM_PER_USER != 0 || values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: STATE_DIM_PER_USER,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state contains non-finite entry".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn num_users(&self) -> usize {
        self.values.len() / STATE_DIM_PER_USER
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// The 3-entry sub-state of one user.
    pub fn user(&self, user: usize) -> &[f64] {
        &self.values[user * STATE_DIM_PER_USER..(user + 1) * STATE_DIM_PER_USER]
    }

    pub fn fidelity(&self, user: usize) -> f64 {
        self.user(user)[0]
    }

    pub fn snr_norm(&self, user: usize) -> f64 {
        self.user(user)[1]
    }

    pub fn ber(&self, user: usize) -> f64 {
        self.user(user)[2]
    }

    /// Recovers the raw reference SNR from its bounded form g/(1+g).
    pub fn snr_raw(&self, user: usize) -> f64 {
        let s = self.snr_norm(user);
        s / (1.0 - s).max(1e-300)
    }
}

/// Constraint tags of the four budget conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintTag {
    Energy,
    Power,
    Latency,
    Fidelity,
}

/// Everything observable about one user's step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStepRecord {
    pub action: Action,
    pub kappa: f64,
    pub p_tx_w: f64,
    pub link: LinkState,
    pub cost: CostBreakdown,
    pub fidelity: FidelityReport,
    pub violated: Vec<ConstraintTag>,
    pub reward: f64,
}

/// Result of one environment step across all users.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateVec,
    pub users: Vec<UserStepRecord>,
    /// Mean reward across users.
    pub reward: f64,
}

/// Per-user channel/prompt context for the in-flight request.
#[derive(Debug, Clone)]
struct UserContext {
    fading: f64,
    prompt: PromptProfile,
}

pub struct Env {
    config: EnvConfig,
    fidelity_model: SyntheticFidelity,
    rng: ChaCha8Rng,
    contexts: Vec<UserContext>,
    state: Option<StateVec>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let fidelity_model = SyntheticFidelity { cfg: config.fidelity_model };
        Ok(Self {
            config,
            fidelity_model,
            rng: ChaCha8Rng::seed_from_u64(0),
            contexts: Vec::new(),
            state: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    fn draw_fading(&mut self) -> f64 {
        match self.config.fixed_fading {
            Some(g) => g,
            None => channel::sample_fading(&mut self.rng),
        }
    }

    fn draw_prompt(&mut self) -> PromptProfile {
        let total: f64 = self.config.prompts.iter().map(|p| p.weight).sum();
        let mut pick = self.rng.gen::<f64>() * total;
        for entry in &self.config.prompts {
            pick -= entry.weight;
            if pick <= 0.0 {
                return entry.profile;
            }
        }
        self.config.prompts.last().unwrap().profile
    }

    /// Reference observation of a fading draw: kappa = 1 at the neutral
    /// power level, so the SNR entry is a pure channel measurement.
    fn observe(&self, fading: f64, last_fidelity: f64) -> Result<[f64; 3]> {
        let p_ref = service::power_of_level(self.config.reference_power_level)?;
        let link = channel::link_state(p_ref, fading, &self.config.channel)?;
        Ok([last_fidelity, link.snr / (1.0 + link.snr), link.ber])
    }

    /// Starts an episode. Deterministic given the seed.
    pub fn reset(&mut self, seed: u64) -> Result<StateVec> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.contexts.clear();
        let mut values = Vec::with_capacity(self.config.num_users as usize * STATE_DIM_PER_USER);
        for _ in 0..self.config.num_users {
            let fading = self.draw_fading();
            let prompt = self.draw_prompt();
            // Initial fidelity entry: score of the neutral reference action
            // on this draw.
            let obs_ref = self.observe(fading, 0.0)?;
            let report =
                self.fidelity_model
                    .score(1.0, obs_ref[2], &self.config.fidelity_weights);
            let obs = self.observe(fading, report.f)?;
            values.extend_from_slice(&obs);
            self.contexts.push(UserContext { fading, prompt });
        }
        let state = StateVec::new(values)?;
        self.state = Some(state.clone());
        Ok(state)
    }

    /// Applies one joint action per user to the in-flight request, then
    /// draws the next request's fading and prompt.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if self.state.is_none() {
            return Err(Error::NotReset);
        }
        if actions.len() != self.config.num_users as usize {
            return Err(Error::DimensionMismatch {
                expected: self.config.num_users as usize,
                got: actions.len(),
            });
        }

        let mut users = Vec::with_capacity(actions.len());
        let mut next_values = Vec::with_capacity(actions.len() * STATE_DIM_PER_USER);
        for (user, &action) in actions.iter().enumerate() {
            let ctx = self.contexts[user].clone();
            let record = evaluate_request(
                &self.config,
                &self.fidelity_model,
                &ctx.prompt,
                ctx.fading,
                action,
            )?;

            // Next request: fresh block-fading draw and prompt.
            let fading = self.draw_fading();
            let prompt = self.draw_prompt();
            let obs = self.observe(fading, record.fidelity.f)?;
            next_values.extend_from_slice(&obs);
            self.contexts[user] = UserContext { fading, prompt };
            users.push(record);
        }

        let next_state = StateVec::new(next_values)?;
        self.state = Some(next_state.clone());
        let reward = users.iter().map(|u| u.reward).sum::<f64>() / users.len() as f64;
        Ok(StepOutcome { next_state, users, reward })
    }

    /// The prompt the given user's in-flight request carries.
    pub fn current_prompt(&self, user: usize) -> Option<&PromptProfile> {
        self.contexts.get(user).map(|c| &c.prompt)
    }

    /// The fading gain of the given user's in-flight request.
    pub fn current_fading(&self, user: usize) -> Option<f64> {
        self.contexts.get(user).map(|c| c.fading)
    }
}

/// Scores one request under a known fading gain. Shared by the environment
/// step and by baseline/latency comparisons; the brute-force oracle
/// deliberately re-derives this arithmetic on its own.
pub fn evaluate_request(
    config: &EnvConfig,
    fidelity_model: &impl FidelityModel,
    prompt: &PromptProfile,
    fading: f64,
    action: Action,
) -> Result<UserStepRecord> {
    let kappa = service::kappa_of_level(action.compression_level)?;
    let p_tx = service::power_of_level(action.power_level)?;
    let link = channel::link_state(p_tx, fading, &config.channel)?;

    let (cost, violated, fidelity) = match service::total_cost(
        prompt,
        action,
        &link,
        &config.compute,
        config.channel.bits_per_token,
    ) {
        Ok(cost) => {
            let fidelity = fidelity_model.score(kappa, link.ber, &config.fidelity_weights);
            let mut violated = Vec::new();
            if cost.energy_total_j > config.constraints.energy_max_j {
                violated.push(ConstraintTag::Energy);
            }
            if p_tx > config.constraints.power_max_w {
                violated.push(ConstraintTag::Power);
            }
            if cost.time_total_s > config.constraints.latency_max_s {
                violated.push(ConstraintTag::Latency);
            }
            if fidelity.f <= config.constraints.fidelity_min {
                violated.push(ConstraintTag::Fidelity);
            }
            (cost, violated, fidelity)
        }
        Err(Error::Outage) => {
            // Zero-rate link: treat as a constraint-violating step with
            // nothing delivered.
            let (t_slm, t_llm) = service::encode_times(prompt, kappa, &config.compute);
            let e_enc = service::energy_encode(t_slm, t_llm, &config.compute);
            let cost = CostBreakdown {
                kappa,
                tx_bits: service::compressed_bits(prompt, kappa, config.channel.bits_per_token),
                energy_encode_j: e_enc,
                energy_tx_j: 0.0,
                energy_total_j: e_enc,
                time_slm_s: t_slm,
                time_llm_s: t_llm,
                time_tx_s: f64::INFINITY,
                time_total_s: f64::INFINITY,
            };
            let fidelity = fidelity_model.score(kappa, 0.5, &config.fidelity_weights);
            let mut violated = vec![ConstraintTag::Latency];
            if e_enc > config.constraints.energy_max_j {
                violated.push(ConstraintTag::Energy);
            }
            if fidelity.f <= config.constraints.fidelity_min {
                violated.push(ConstraintTag::Fidelity);
            }
            (cost, violated, fidelity)
        }
        Err(e) => return Err(e),
    };

    let reward = reward_of(config, fidelity.f, link.ber, p_tx, violated.len());
    Ok(UserStepRecord {
        action,
        kappa,
        p_tx_w: p_tx,
        link,
        cost,
        fidelity,
        violated,
        reward,
    })
}

/// reward = w_f * f - w_ber * eta - w_power * (P_T / P_th) - penalty * |violated|
pub fn reward_of(config: &EnvConfig, f: f64, ber: f64, p_tx_w: f64, violations: usize) -> f64 {
    let r = &config.reward;
    r.w_fidelity * f
        - r.w_ber * ber
        - r.w_power * (p_tx_w / config.constraints.power_max_w)
        - r.violation_penalty * violations as f64
}

/// Screens the action grid against the deterministic cost components:
/// actions that cannot satisfy the budgets even under best-case fading
/// (zero transmission cost) are dropped.
pub fn feasible_actions(config: &EnvConfig) -> Result<Vec<Action>> {
    config.validate()?;
    // Screen against the expected prompt mix: an action survives if it is
    // deterministically feasible for every positive-weight prompt.
    let mut feasible = Vec::with_capacity(NUM_ACTIONS);
    for action in Action::all() {
        let kappa = service::kappa_of_level(action.compression_level)?;
        let p_tx = service::power_of_level(action.power_level)?;
        if p_tx > config.constraints.power_max_w {
            continue;
        }
        let mut ok = true;
        for entry in config.prompts.iter().filter(|p| p.weight > 0.0) {
            let (t_slm, t_llm) = service::encode_times(&entry.profile, kappa, &config.compute);
            let e_enc = service::energy_encode(t_slm, t_llm, &config.compute);
            if e_enc > config.constraints.energy_max_j
                || t_slm + t_llm > config.constraints.latency_max_s
            {
                ok = false;
                break;
            }
        }
        if ok {
            feasible.push(action);
        }
    }
    if feasible.is_empty() {
        return Err(Error::EmptyFeasibleSet(
            "no action satisfies the deterministic cost budgets".into(),
        ));
    }
    Ok(feasible)
}
