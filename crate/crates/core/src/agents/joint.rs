use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::qtable::{greedy_or_explore, SparseQTable};
use super::LearningRate;
use crate::error::{Error, Result};
use crate::world::{LatticeIndex, Move, UavId};

/// Positions of the UAVs a learner conditions on, sorted by UAV id. The
/// learner's own entry is included.
pub type JointState = Vec<(UavId, LatticeIndex)>;

/// Own move plus one move per opponent, opponents in id order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction {
    pub own: Move,
    pub others: Vec<Move>,
}

/// Per-state action counts of every opponent.
#[derive(Clone, Debug, Default)]
pub struct OpponentStats {
    counts: HashMap<JointState, BTreeMap<UavId, BTreeMap<Move, u64>>>,
}

impl OpponentStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, s: &JointState, opponent: UavId, action: Move) {
        *self
            .counts
            .entry(s.clone())
            .or_default()
            .entry(opponent)
            .or_default()
            .entry(action)
            .or_default() += 1;
    }

    pub fn count(&self, s: &JointState, opponent: UavId, action: Move) -> u64 {
        self.counts
            .get(s)
            .and_then(|m| m.get(&opponent))
            .and_then(|m| m.get(&action))
            .copied()
            .unwrap_or(0)
    }

    /// Empirical action frequencies of `opponent` at `s`; uniform over
    /// `support` before the first observation.
    pub fn frequencies(
        &self,
        s: &JointState,
        opponent: UavId,
        support: &[Move],
    ) -> BTreeMap<Move, f64> {
        match self.counts.get(s).and_then(|m| m.get(&opponent)) {
            Some(c) if c.values().any(|&n| n > 0) => {
                let total: u64 = c.values().sum();
                c.iter()
                    .map(|(&a, &n)| (a, n as f64 / total as f64))
                    .collect()
            }
            _ => {
                let w = 1.0 / support.len().max(1) as f64;
                support.iter().map(|&a| (a, w)).collect()
            }
        }
    }

    pub fn snapshot(&self) -> serde_json::Value {
        let mut rows: Vec<(JointState, UavId, Move, u64)> = self
            .counts
            .iter()
            .flat_map(|(s, per)| {
                per.iter()
                    .flat_map(move |(&o, c)| c.iter().map(move |(&a, &n)| (s.clone(), o, a, n)))
            })
            .collect();
        rows.sort_by(|x, y| (&x.0, x.1, x.2).cmp(&(&y.0, y.1, y.2)));
        serde_json::to_value(rows).expect("opponent stats serialize")
    }

    pub fn restore(v: &serde_json::Value) -> Result<Self> {
        let rows: Vec<(JointState, UavId, Move, u64)> =
            serde_json::from_value(v.clone()).map_err(|e| Error::Snapshot(e.to_string()))?;
        let mut stats = Self::new();
        for (s, o, a, n) in rows {
            *stats
                .counts
                .entry(s)
                .or_default()
                .entry(o)
                .or_default()
                .entry(a)
                .or_default() += n;
        }
        Ok(stats)
    }
}

/// Expected joint-action value of every own action that has a stored entry
/// at `s`, weighting opponent moves by the product of their marginal
/// frequencies. Unvisited joint actions contribute 0.
fn om_values(
    q: &SparseQTable<JointState, JointAction>,
    stats: &OpponentStats,
    s: &JointState,
    opponents: &[(UavId, Vec<Move>)],
) -> BTreeMap<Move, f64> {
    let freqs: Vec<BTreeMap<Move, f64>> = opponents
        .iter()
        .map(|(id, support)| stats.frequencies(s, *id, support))
        .collect();
    let mut out: BTreeMap<Move, f64> = BTreeMap::new();
    for (a, e) in q.actions_at(s) {
        if a.others.len() != freqs.len() {
            continue;
        }
        let mut w = 1.0;
        for (m, f) in a.others.iter().zip(&freqs) {
            w *= f.get(m).copied().unwrap_or(0.0);
            if w == 0.0 {
                break;
            }
        }
        *out.entry(a.own).or_default() += w * e.value;
    }
    out
}

/// `Σ_{a_-i} Q(s, own, a_-i) Π_j freq_j(a_j)`; `opponents` lists every
/// opponent with the action set used for its prior.
pub fn om_expected_value(
    q: &SparseQTable<JointState, JointAction>,
    stats: &OpponentStats,
    s: &JointState,
    own: Move,
    opponents: &[(UavId, Vec<Move>)],
) -> f64 {
    om_values(q, stats, s, opponents)
        .get(&own)
        .copied()
        .unwrap_or(0.0)
}

/// Joint-action learner of one UAV: a Q-table over (joint state, joint
/// action) and the opponents' action statistics.
#[derive(Clone, Debug)]
pub struct JointLearner {
    pub q: SparseQTable<JointState, JointAction>,
    pub stats: OpponentStats,
}

impl JointLearner {
    pub fn new(learning_rate: LearningRate, discount: f64) -> Self {
        Self {
            q: SparseQTable::new(learning_rate, discount),
            stats: OpponentStats::new(),
        }
    }

    pub fn value(&self, s: &JointState, own: Move, opponents: &[(UavId, Vec<Move>)]) -> f64 {
        om_expected_value(&self.q, &self.stats, s, own, opponents)
    }

    /// `max_{a ∈ own_actions}` of the expected value at `s`.
    pub fn best_value(
        &self,
        s: &JointState,
        own_actions: &[Move],
        opponents: &[(UavId, Vec<Move>)],
    ) -> Result<f64> {
        if own_actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let values = om_values(&self.q, &self.stats, s, opponents);
        Ok(own_actions
            .iter()
            .map(|a| values.get(a).copied().unwrap_or(0.0))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// ε-greedy over the expected values; ties go to the smallest move.
    pub fn select<R: Rng + ?Sized>(
        &self,
        s: &JointState,
        own_actions: &[Move],
        opponents: &[(UavId, Vec<Move>)],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Move> {
        let values = om_values(&self.q, &self.stats, s, opponents);
        greedy_or_explore(own_actions, epsilon, rng, |a| {
            values.get(a).copied().unwrap_or(0.0)
        })
    }

    /// Records the opponents' moves at `s`, then moves `Q(s, action)` toward
    /// `reward + γ max_{a'} E[Q(next, a', ·)]`.
    pub fn update(
        &mut self,
        s: &JointState,
        action: JointAction,
        opponent_ids: &[UavId],
        reward: f64,
        next: &JointState,
        next_own_actions: &[Move],
        next_opponents: &[(UavId, Vec<Move>)],
    ) -> Result<()> {
        if opponent_ids.len() != action.others.len() {
            return Err(Error::Protocol(format!(
                "{} opponents but {} opponent moves",
                opponent_ids.len(),
                action.others.len()
            )));
        }
        for (&id, &m) in opponent_ids.iter().zip(&action.others) {
            self.stats.observe(s, id, m);
        }
        let target =
            reward + self.q.discount * self.best_value(next, next_own_actions, next_opponents)?;
        self.q.blend(s, action, target);
        Ok(())
    }
}
