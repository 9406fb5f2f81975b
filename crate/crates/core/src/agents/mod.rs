//! Learners for association, trajectory, power and subchannel allocation,
//! plus the protocol policies that wrap them.

mod actor_critic;
mod bandit;
mod dqn;
mod joint;
mod mlp;
mod policies;
mod qtable;

pub use actor_critic::{
    ac_select_power, ac_update, power_features, ActorCriticState, PowerSample, POWER_FEATURES,
};
pub use bandit::{bandit_select, bandit_update, BanditState};
pub use dqn::{
    dqn_select, dqn_step, enumerate_allocations, ActionEnumeration, DqnConfig, DqnState,
    ReplayBuffer, Transition,
};
pub use joint::{om_expected_value, JointAction, JointLearner, JointState, OpponentStats};
pub use mlp::Mlp;
pub use policies::{
    cell_delivery_probability, ActorCriticPower, BanditAssociation, DqnAllocation,
    JointQTrajectory, JointVariant, SingleAgentQTrajectory, StateScope,
};
pub use qtable::{q_select, q_update, QEntry, SparseQTable};

use serde::{Deserialize, Serialize};

/// Step-size schedule as a function of how often a table entry was updated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearningRate {
    Constant {
        alpha: f64,
    },
    /// `alpha / visits^exponent`.
    Power {
        alpha: f64,
        exponent: f64,
    },
}

impl LearningRate {
    pub fn inverse_sqrt(alpha: f64) -> Self {
        LearningRate::Power {
            alpha,
            exponent: 0.5,
        }
    }

    /// Step size for the `visits`-th update (1-based).
    pub fn at(&self, visits: u64) -> f64 {
        match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::Power { alpha, exponent } => {
                alpha / (visits.max(1) as f64).powf(exponent)
            }
        }
    }
}

/// Exponential interpolation from `start` to `end` over `horizon` steps,
/// linear when either end is zero, then constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Self {
            start: v,
            end: v,
            horizon: 1,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if self.horizon == 0 || step >= self.horizon {
            return self.end;
        }
        let frac = step as f64 / self.horizon as f64;
        if self.start > 0.0 && self.end > 0.0 {
            self.start * (self.end / self.start).powf(frac)
        } else {
            self.start + (self.end - self.start) * frac
        }
    }
}

/// Learner hyperparameters, settable from the `[run.agents]` config table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub alpha: f64,
    /// Exponent of the visit-count decay of `alpha`; 0 keeps it constant.
    pub alpha_decay_exponent: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Cycles over which exploration decays; defaults to the run length.
    pub epsilon_horizon: Option<u64>,
    pub bandit_epsilon_start: f64,
    pub bandit_epsilon_end: f64,
    pub actor_step: f64,
    pub critic_step: f64,
    pub actor_std_start_db: f64,
    pub actor_std_end_db: f64,
    pub dqn_hidden: usize,
    pub dqn_buffer: usize,
    pub dqn_batch: usize,
    pub dqn_target_sync: u64,
    pub dqn_step: f64,
    pub dqn_epsilon_start: f64,
    pub dqn_epsilon_end: f64,
    /// State of the single-agent trajectory learner.
    pub single_q_state: StateScope,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            alpha_decay_exponent: 0.5,
            epsilon_start: 0.5,
            epsilon_end: 0.01,
            epsilon_horizon: None,
            bandit_epsilon_start: 0.3,
            bandit_epsilon_end: 0.01,
            actor_step: 0.01,
            critic_step: 0.05,
            actor_std_start_db: 3.0,
            actor_std_end_db: 0.3,
            dqn_hidden: 64,
            dqn_buffer: 10_000,
            dqn_batch: 64,
            dqn_target_sync: 200,
            dqn_step: 1e-3,
            dqn_epsilon_start: 1.0,
            dqn_epsilon_end: 0.05,
            single_q_state: StateScope::Own,
        }
    }
}

impl AgentParams {
    pub fn learning_rate(&self) -> LearningRate {
        if self.alpha_decay_exponent == 0.0 {
            LearningRate::Constant { alpha: self.alpha }
        } else {
            LearningRate::Power {
                alpha: self.alpha,
                exponent: self.alpha_decay_exponent,
            }
        }
    }

    pub fn epsilon(&self, run_cycles: u64) -> Schedule {
        Schedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            horizon: self.epsilon_horizon.unwrap_or(run_cycles),
        }
    }

    pub fn bandit_epsilon(&self, run_cycles: u64) -> Schedule {
        Schedule {
            start: self.bandit_epsilon_start,
            end: self.bandit_epsilon_end,
            horizon: self.epsilon_horizon.unwrap_or(run_cycles),
        }
    }

    pub fn actor_std(&self, run_cycles: u64) -> Schedule {
        Schedule {
            start: self.actor_std_start_db,
            end: self.actor_std_end_db,
            horizon: self.epsilon_horizon.unwrap_or(run_cycles),
        }
    }

    pub fn dqn_epsilon(&self, run_cycles: u64) -> Schedule {
        Schedule {
            start: self.dqn_epsilon_start,
            end: self.dqn_epsilon_end,
            horizon: self.epsilon_horizon.unwrap_or(run_cycles),
        }
    }
}
