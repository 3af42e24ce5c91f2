//! Tabular Q-learning reference learner, used to cross-validate the update
//! rule on tiny discrete problems.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Q-table over (state, action) keys.
#[derive(Debug, Clone, Default)]
pub struct QTable {
    values: HashMap<(usize, usize), f64>,
    num_actions: usize,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let mut values = HashMap::new();
        for s in 0..num_states {
            for a in 0..num_actions {
                values.insert((s, a), 0.0);
            }
        }
        Self { values, num_actions }
    }

    pub fn get(&self, state: usize, action: usize) -> Result<f64> {
        self.values
            .get(&(state, action))
            .copied()
            .ok_or_else(|| Error::UnknownKey(format!("({state}, {action})")))
    }

    pub fn max_over_actions(&self, state: usize) -> Result<f64> {
        (0..self.num_actions)
            .map(|a| self.get(state, a))
            .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v)))
    }

    /// Q(s,a) += lr * (r + discount * max_a' Q(s',a') - Q(s,a)).
    pub fn update(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next_state: usize,
        learning_rate: f64,
        discount: f64,
    ) -> Result<()> {
        let best_next = self.max_over_actions(next_state)?;
        let q = self.get(state, action)?;
        let updated = q + learning_rate * (reward + discount * best_next - q);
        self.values.insert((state, action), updated);
        Ok(())
    }
}
