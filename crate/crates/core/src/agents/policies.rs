//! Protocol policies backed by the learners in this module.

use std::collections::BTreeMap;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::actor_critic::{
    ac_select_power, ac_update, power_features, ActorCriticState, PowerSample,
};
use super::bandit::{bandit_select, bandit_update, BanditState};
use super::dqn::{
    dqn_select, dqn_step, enumerate_allocations, ActionEnumeration, DqnConfig, DqnState, Transition,
};
use super::joint::{JointAction, JointLearner, JointState, OpponentStats};
use super::qtable::{q_select, q_update, SparseQTable};
use super::{LearningRate, Schedule};
use crate::channel::{dbm_to_mw, success_prob_mw};
use crate::error::{Error, Result};
use crate::oracle::{delivery_prob, AllocationRule, DeliveryQuery, QueryUav};
use crate::protocol::{
    AllocationPolicy, AssociationPolicy, Beacon, CellView, Feedback, FrameOutcome, FrameView,
    PowerPolicy, TrajectoryPolicy,
};
use crate::rng::SimRng;
use crate::world::{
    feasible_actions, reduce_actions, to_position, BsId, LatticeIndex, LatticeSpec, Move,
    ScenarioConfig, UavId,
};

fn snapshot_error(e: serde_json::Error) -> Error {
    Error::Snapshot(e.to_string())
}

fn moves(lattice: &LatticeSpec, at: LatticeIndex) -> Result<Vec<Move>> {
    Ok(feasible_actions(lattice, at)?
        .into_iter()
        .map(|n| Move::between(at, n).expect("feasible actions are one step away"))
        .collect())
}

/// Moves toward or on the plane through `bs` and the UAV's target.
fn reduced_moves(
    config: &ScenarioConfig,
    uav: UavId,
    bs: BsId,
    at: LatticeIndex,
) -> Result<Vec<Move>> {
    let lattice = &config.lattice;
    let bs_pos = config
        .bs(bs)
        .ok_or_else(|| Error::Protocol(format!("unknown bs {bs}")))?
        .position;
    let target = config
        .target_of(uav)
        .ok_or_else(|| Error::Config(format!("uav {uav} has no target")))?
        .position;
    let all = feasible_actions(lattice, at)?;
    Ok(reduce_actions(lattice, at, &all, &bs_pos, &target)?
        .into_iter()
        .map(|n| Move::between(at, n).expect("feasible actions are one step away"))
        .collect())
}

/// What the trajectory learners condition on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateScope {
    /// The UAV's own position only.
    Own,
    /// Positions of every active UAV attached to the same BS.
    #[default]
    Cell,
}

/// (id, position, bs, active) of every UAV, in id order.
type Roster = Vec<(UavId, LatticeIndex, BsId, bool)>;

fn beacon_roster(beacon: &Beacon) -> Roster {
    beacon
        .uavs
        .iter()
        .map(|u| (u.id, u.index, u.bs, u.active))
        .collect()
}

fn feedback_roster(fb: &Feedback) -> Roster {
    fb.uavs
        .iter()
        .map(|u| (u.id, u.action, u.bs, u.active))
        .collect()
}

fn state_of(roster: &Roster, uav: UavId, scope: StateScope) -> Result<JointState> {
    let &(_, at, bs, _) = roster
        .iter()
        .find(|r| r.0 == uav)
        .ok_or_else(|| Error::Protocol(format!("unknown uav {uav}")))?;
    Ok(match scope {
        StateScope::Own => vec![(uav, at)],
        StateScope::Cell => roster
            .iter()
            .filter(|r| r.0 == uav || (r.2 == bs && r.3))
            .map(|r| (r.0, r.1))
            .collect(),
    })
}

/// Independent Q-learner per UAV over its own moves, rewarded with the
/// binary valid-delivery outcome.
#[derive(Clone, Debug)]
pub struct SingleAgentQTrajectory {
    tables: BTreeMap<UavId, SparseQTable<JointState, Move>>,
    learning_rate: LearningRate,
    discount: f64,
    epsilon: Schedule,
    scope: StateScope,
    pending: BTreeMap<UavId, (JointState, Move)>,
}

impl SingleAgentQTrajectory {
    pub fn new(
        learning_rate: LearningRate,
        discount: f64,
        epsilon: Schedule,
        scope: StateScope,
    ) -> Self {
        Self {
            tables: BTreeMap::new(),
            learning_rate,
            discount,
            epsilon,
            scope,
            pending: BTreeMap::new(),
        }
    }

    pub fn table(&self, uav: UavId) -> Option<&SparseQTable<JointState, Move>> {
        self.tables.get(&uav)
    }
}

impl TrajectoryPolicy for SingleAgentQTrajectory {
    fn select(&mut self, beacon: &Beacon, uav: UavId, rng: &mut SimRng) -> Result<LatticeIndex> {
        let roster = beacon_roster(beacon);
        let s = state_of(&roster, uav, self.scope)?;
        let at = beacon.uav(uav).expect("roster checked").index;
        let actions = moves(&beacon.config.lattice, at)?;
        let (lr, g) = (self.learning_rate, self.discount);
        let q = self
            .tables
            .entry(uav)
            .or_insert_with(|| SparseQTable::new(lr, g));
        let m = q_select(q, &s, &actions, self.epsilon.at(beacon.cycle), rng)?;
        self.pending.insert(uav, (s, m));
        Ok(m.apply(at))
    }

    fn learn(&mut self, fb: &Feedback) -> Result<()> {
        let roster = feedback_roster(fb);
        for (uav, (s, m)) in std::mem::take(&mut self.pending) {
            let f = fb
                .uav(uav)
                .ok_or_else(|| Error::Protocol(format!("no feedback for uav {uav}")))?;
            let next = state_of(&roster, uav, self.scope)?;
            let next_actions = moves(&fb.config.lattice, f.action)?;
            let q = self.tables.get_mut(&uav).expect("selected before learning");
            q_update(q, &s, m, f64::from(f.reward), &next, &next_actions)?;
        }
        Ok(())
    }

    fn snapshot(&self) -> serde_json::Value {
        let tables: BTreeMap<String, serde_json::Value> = self
            .tables
            .iter()
            .map(|(k, t)| (k.to_string(), t.snapshot()))
            .collect();
        serde_json::json!({ "tables": tables })
    }

    fn restore(&mut self, v: &serde_json::Value) -> Result<()> {
        let tables: BTreeMap<String, serde_json::Value> =
            serde_json::from_value(v["tables"].clone()).map_err(snapshot_error)?;
        self.tables.clear();
        for (k, t) in tables {
            let id: UavId = k
                .parse()
                .map_err(|_| Error::Snapshot(format!("bad uav key {k}")))?;
            self.tables.insert(id, SparseQTable::restore(&t)?);
        }
        self.pending.clear();
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointVariant {
    /// Joint-action learning over same-cell states with opponent statistics
    /// and the sampled binary reward.
    OpponentModeling,
    /// Opponent modeling with moves restricted toward the BS-target plane and
    /// the exact delivery probability as reward.
    Enhanced,
}

#[derive(Clone, Debug)]
struct JointDecision {
    state: JointState,
    own: Move,
    opponents: Vec<UavId>,
}

/// Joint-action Q-learning trajectory control for every UAV.
#[derive(Clone, Debug)]
pub struct JointQTrajectory {
    variant: JointVariant,
    learners: BTreeMap<UavId, JointLearner>,
    learning_rate: LearningRate,
    discount: f64,
    epsilon: Schedule,
    pending: BTreeMap<UavId, JointDecision>,
}

impl JointQTrajectory {
    pub fn new(
        variant: JointVariant,
        learning_rate: LearningRate,
        discount: f64,
        epsilon: Schedule,
    ) -> Self {
        Self {
            variant,
            learners: BTreeMap::new(),
            learning_rate,
            discount,
            epsilon,
            pending: BTreeMap::new(),
        }
    }

    pub fn variant(&self) -> JointVariant {
        self.variant
    }

    pub fn learner(&self, uav: UavId) -> Option<&JointLearner> {
        self.learners.get(&uav)
    }

    fn action_set(
        &self,
        config: &ScenarioConfig,
        roster: &Roster,
        uav: UavId,
    ) -> Result<Vec<Move>> {
        let &(_, at, bs, _) = roster
            .iter()
            .find(|r| r.0 == uav)
            .ok_or_else(|| Error::Protocol(format!("unknown uav {uav}")))?;
        match self.variant {
            JointVariant::OpponentModeling => moves(&config.lattice, at),
            JointVariant::Enhanced => reduced_moves(config, uav, bs, at),
        }
    }

    fn opponent_sets(
        &self,
        config: &ScenarioConfig,
        roster: &Roster,
        s: &JointState,
        uav: UavId,
    ) -> Result<Vec<(UavId, Vec<Move>)>> {
        s.iter()
            .filter(|(id, _)| *id != uav)
            .map(|&(id, _)| Ok((id, self.action_set(config, roster, id)?)))
            .collect()
    }
}

/// Probability that `uav` delivers valid data in the cycle just played,
/// given the post-move positions and channels of its cell and the power
/// levels used. Cells on separate bands do not interact, so interference
/// is not modeled here.
pub fn cell_delivery_probability(fb: &Feedback, uav: UavId) -> Result<f64> {
    let config = fb.config;
    let me = fb
        .uav(uav)
        .ok_or_else(|| Error::Protocol(format!("no feedback for uav {uav}")))?;
    let bs = config
        .bs(me.bs)
        .ok_or_else(|| Error::Protocol(format!("unknown bs {}", me.bs)))?;
    let mut uavs = Vec::new();
    for f in fb.uavs.iter().filter(|f| f.active && f.bs == me.bs) {
        let link = fb
            .link(f.id, me.bs)
            .ok_or_else(|| Error::Protocol(format!("no link for uav {}", f.id)))?;
        let target = config
            .target_of(f.id)
            .ok_or_else(|| Error::Config(format!("uav {} has no target", f.id)))?;
        uavs.push(QueryUav {
            id: f.id,
            position: to_position(&config.lattice, f.action)?,
            target: target.position,
            q: success_prob_mw(
                link.mean_gain,
                dbm_to_mw(f.tx_power_dbm),
                0.0,
                &config.channel,
            ),
        });
    }
    let Some(slot) = uavs.iter().position(|u| u.id == uav) else {
        return Ok(0.0);
    };
    let query = DeliveryQuery {
        uavs,
        sensing_lambda: config.sensing_lambda,
        frames: config.frames_per_cycle,
        subchannels: bs.subchannels,
        rule: AllocationRule::MaxSuccess,
    };
    // Only consulted when the cell is too large for the exact computation.
    let mut rng = SimRng::seed_from_u64(fb.cycle ^ (u64::from(uav) << 40));
    Ok(delivery_prob(&query, &mut rng)?[slot])
}

impl TrajectoryPolicy for JointQTrajectory {
    fn select(&mut self, beacon: &Beacon, uav: UavId, rng: &mut SimRng) -> Result<LatticeIndex> {
        let roster = beacon_roster(beacon);
        let s = state_of(&roster, uav, StateScope::Cell)?;
        let own = self.action_set(beacon.config, &roster, uav)?;
        let opponents = self.opponent_sets(beacon.config, &roster, &s, uav)?;
        let (lr, g) = (self.learning_rate, self.discount);
        let learner = self
            .learners
            .entry(uav)
            .or_insert_with(|| JointLearner::new(lr, g));
        let m = learner.select(&s, &own, &opponents, self.epsilon.at(beacon.cycle), rng)?;
        let at = beacon.uav(uav).expect("roster checked").index;
        self.pending.insert(
            uav,
            JointDecision {
                opponents: opponents.iter().map(|o| o.0).collect(),
                state: s,
                own: m,
            },
        );
        Ok(m.apply(at))
    }

    fn learn(&mut self, fb: &Feedback) -> Result<()> {
        let roster = feedback_roster(fb);
        for (uav, d) in std::mem::take(&mut self.pending) {
            let f = fb
                .uav(uav)
                .ok_or_else(|| Error::Protocol(format!("no feedback for uav {uav}")))?;
            let others = d
                .opponents
                .iter()
                .map(|o| {
                    let of = fb
                        .uav(*o)
                        .ok_or_else(|| Error::Protocol(format!("no feedback for uav {o}")))?;
                    Move::between(of.from, of.action)
                        .ok_or_else(|| Error::Protocol(format!("uav {o} moved more than one step")))
                })
                .collect::<Result<Vec<Move>>>()?;
            let reward = match self.variant {
                JointVariant::OpponentModeling => f64::from(f.reward),
                JointVariant::Enhanced => cell_delivery_probability(fb, uav)?,
            };
            let next = state_of(&roster, uav, StateScope::Cell)?;
            let next_own = self.action_set(fb.config, &roster, uav)?;
            let next_opponents = self.opponent_sets(fb.config, &roster, &next, uav)?;
            let learner = self
                .learners
                .get_mut(&uav)
                .expect("selected before learning");
            learner.update(
                &d.state,
                JointAction { own: d.own, others },
                &d.opponents,
                reward,
                &next,
                &next_own,
                &next_opponents,
            )?;
        }
        Ok(())
    }

    fn snapshot(&self) -> serde_json::Value {
        let learners: BTreeMap<String, serde_json::Value> = self
            .learners
            .iter()
            .map(|(k, l)| {
                (
                    k.to_string(),
                    serde_json::json!({ "q": l.q.snapshot(), "stats": l.stats.snapshot() }),
                )
            })
            .collect();
        serde_json::json!({ "variant": self.variant, "learners": learners })
    }

    fn restore(&mut self, v: &serde_json::Value) -> Result<()> {
        let variant: JointVariant =
            serde_json::from_value(v["variant"].clone()).map_err(snapshot_error)?;
        if variant != self.variant {
            return Err(Error::Snapshot(format!(
                "snapshot is for {variant:?}, policy is {:?}",
                self.variant
            )));
        }
        let learners: BTreeMap<String, serde_json::Value> =
            serde_json::from_value(v["learners"].clone()).map_err(snapshot_error)?;
        self.learners.clear();
        for (k, l) in learners {
            let id: UavId = k
                .parse()
                .map_err(|_| Error::Snapshot(format!("bad uav key {k}")))?;
            self.learners.insert(
                id,
                JointLearner {
                    q: SparseQTable::restore(&l["q"])?,
                    stats: OpponentStats::restore(&l["stats"])?,
                },
            );
        }
        self.pending.clear();
        Ok(())
    }
}

/// ε-greedy bandit over BSs per UAV, rewarded when the data gets through.
#[derive(Clone, Debug)]
pub struct BanditAssociation {
    states: BTreeMap<UavId, BanditState>,
    epsilon: Schedule,
    pending: BTreeMap<UavId, BsId>,
}

impl BanditAssociation {
    pub fn new(epsilon: Schedule) -> Self {
        Self {
            states: BTreeMap::new(),
            epsilon,
            pending: BTreeMap::new(),
        }
    }

    pub fn state(&self, uav: UavId) -> Option<&BanditState> {
        self.states.get(&uav)
    }
}

impl AssociationPolicy for BanditAssociation {
    fn select(&mut self, beacon: &Beacon, uav: UavId, rng: &mut SimRng) -> Result<BsId> {
        let eps = self.epsilon.at(beacon.cycle);
        let b = self.states.entry(uav).or_insert_with(|| {
            BanditState::new(beacon.config.bss.iter().map(|b| b.id).collect(), eps)
        });
        b.epsilon = eps;
        let arm = bandit_select(b, rng)?;
        self.pending.insert(uav, arm);
        Ok(arm)
    }

    fn learn(&mut self, fb: &Feedback) -> Result<()> {
        for (uav, arm) in std::mem::take(&mut self.pending) {
            let f = fb
                .uav(uav)
                .ok_or_else(|| Error::Protocol(format!("no feedback for uav {uav}")))?;
            let b = self.states.get_mut(&uav).expect("selected before learning");
            bandit_update(b, arm, f64::from(u8::from(f.delivered)))?;
        }
        Ok(())
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(&self.states).expect("bandit state serializes")
    }

    fn restore(&mut self, v: &serde_json::Value) -> Result<()> {
        self.states = serde_json::from_value(v.clone()).map_err(snapshot_error)?;
        self.pending.clear();
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PowerDecision {
    features: Vec<f64>,
    sample: PowerSample,
    /// Set once the cycle's reward is known; the update then waits for the
    /// next beacon's features.
    reward: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PowerLearner {
    acs: ActorCriticState,
    steps: u64,
    pending: Option<PowerDecision>,
}

/// Gaussian actor-critic power control per UAV. The state is the loss to
/// the serving BS and the remaining battery fraction; the reward is 1 when
/// the data gets through. A UAV whose battery can no longer cover a cycle
/// ends its episode.
#[derive(Clone, Debug)]
pub struct ActorCriticPower {
    learners: BTreeMap<UavId, PowerLearner>,
    std: Schedule,
    actor_step: f64,
    critic_step: f64,
    discount: f64,
    frozen: bool,
}

impl ActorCriticPower {
    pub fn new(std: Schedule, actor_step: f64, critic_step: f64, discount: f64) -> Self {
        Self {
            learners: BTreeMap::new(),
            std,
            actor_step,
            critic_step,
            discount,
            frozen: false,
        }
    }

    /// Stops learning and fixes the exploration spread at its final value.
    pub fn freeze(&mut self) {
        self.frozen = true;
        for l in self.learners.values_mut() {
            l.pending = None;
            l.acs.std_db = self.std.end;
        }
    }

    pub fn state(&self, uav: UavId) -> Option<&ActorCriticState> {
        self.learners.get(&uav).map(|l| &l.acs)
    }

    fn features(beacon: &Beacon, uav: UavId) -> Result<Vec<f64>> {
        let u = beacon
            .uav(uav)
            .ok_or_else(|| Error::Protocol(format!("unknown uav {uav}")))?;
        let link = beacon
            .link(uav, u.bs)
            .ok_or_else(|| Error::Protocol(format!("no link for uav {uav}")))?;
        let capacity = beacon
            .config
            .uav(uav)
            .ok_or_else(|| Error::Protocol(format!("unknown uav {uav}")))?
            .battery_j;
        Ok(power_features(link.loss_db(), u.battery_j / capacity).to_vec())
    }
}

impl PowerPolicy for ActorCriticPower {
    fn select(&mut self, beacon: &Beacon, uav: UavId, rng: &mut SimRng) -> Result<f64> {
        let features = Self::features(beacon, uav)?;
        let ch = &beacon.config.channel;
        let l = self.learners.entry(uav).or_insert_with(|| {
            let mut acs = ActorCriticState::new(
                features.len(),
                ch.tx_power_min_dbm,
                ch.tx_power_max_dbm,
                self.std.start,
                self.discount,
            );
            acs.actor_step = self.actor_step;
            acs.critic_step = self.critic_step;
            PowerLearner {
                acs,
                steps: 0,
                pending: None,
            }
        });
        if !self.frozen {
            if let Some(PowerDecision {
                features: prev,
                sample,
                reward: Some(r),
            }) = l.pending.take()
            {
                ac_update(&mut l.acs, &prev, sample, r, &features, false)?;
            }
            l.acs.std_db = self.std.at(l.steps);
        }
        let sample = ac_select_power(&l.acs, &features, rng)?;
        l.steps += 1;
        if !self.frozen {
            l.pending = Some(PowerDecision {
                features,
                sample,
                reward: None,
            });
        }
        Ok(sample.clipped)
    }

    fn learn(&mut self, fb: &Feedback) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        let propulsion = fb.config.energy.propulsion_j;
        for (uav, l) in self.learners.iter_mut() {
            let Some(mut d) = l.pending.take() else {
                continue;
            };
            if d.reward.is_some() {
                // Selected in an earlier cycle but not in this one.
                continue;
            }
            let f = fb
                .uav(*uav)
                .ok_or_else(|| Error::Protocol(format!("no feedback for uav {uav}")))?;
            let r = f64::from(u8::from(f.delivered));
            if f.battery_after_j < propulsion {
                ac_update(&mut l.acs, &d.features, d.sample, r, &d.features, true)?;
            } else {
                d.reward = Some(r);
                l.pending = Some(d);
            }
        }
        Ok(())
    }

    fn snapshot(&self) -> serde_json::Value {
        let learners: BTreeMap<String, &PowerLearner> = self
            .learners
            .iter()
            .map(|(k, l)| (k.to_string(), l))
            .collect();
        serde_json::json!({ "frozen": self.frozen, "learners": learners })
    }

    fn restore(&mut self, v: &serde_json::Value) -> Result<()> {
        let learners: BTreeMap<String, PowerLearner> =
            serde_json::from_value(v["learners"].clone()).map_err(snapshot_error)?;
        self.learners.clear();
        for (k, l) in learners {
            let id: UavId = k
                .parse()
                .map_err(|_| Error::Snapshot(format!("bad uav key {k}")))?;
            self.learners.insert(id, l);
        }
        self.frozen = v["frozen"].as_bool().unwrap_or(false);
        Ok(())
    }
}

/// One DQN agent per frequency band, shared by the BSs of that band.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct BandAgent {
    /// UAVs of the band in id order; fixes the feature layout.
    roster: Vec<UavId>,
    enumeration: ActionEnumeration,
    dqn: DqnState,
    /// (features, action index) of the decision awaiting its outcome.
    open: Option<(Vec<f64>, usize)>,
    transitions: Vec<Transition>,
}

fn band_cells(view: &FrameView) -> BTreeMap<u32, Vec<&CellView>> {
    let mut bands: BTreeMap<u32, Vec<&CellView>> = BTreeMap::new();
    for c in &view.cells {
        bands.entry(c.band).or_default().push(c);
    }
    bands
}

/// `[pending, q]` per roster UAV.
fn band_features(
    roster: &[UavId],
    cells: &[&CellView],
    pending_override: Option<&[UavId]>,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * roster.len());
    for id in roster {
        let u = cells
            .iter()
            .flat_map(|c| c.uavs.iter())
            .find(|u| u.id == *id);
        let (pending, q) = match u {
            Some(u) => {
                let still = pending_override.is_none_or(|done| !done.contains(id));
                (u.pending && still, u.q)
            }
            None => (false, 0.0),
        };
        out.push(f64::from(u8::from(pending)));
        out.push(q);
    }
    out
}

/// Frame-level subchannel allocation learned by a DQN per band. Actions
/// are the enumerated joint assignments of the band's BSs; the executed
/// allocation keeps only UAVs that are still pending. The reward of a
/// frame is its number of successful transmissions.
#[derive(Clone, Debug)]
pub struct DqnAllocation {
    bands: BTreeMap<u32, BandAgent>,
    config: DqnConfig,
    epsilon: Schedule,
    seed: u64,
    frozen: bool,
}

impl DqnAllocation {
    pub fn new(config: DqnConfig, epsilon: Schedule, seed: u64) -> Self {
        Self {
            bands: BTreeMap::new(),
            config,
            epsilon,
            seed,
            frozen: false,
        }
    }

    /// Stops training and exploration.
    pub fn freeze(&mut self) {
        self.frozen = true;
        for b in self.bands.values_mut() {
            b.dqn.epsilon = 0.0;
        }
    }

    /// Greedy effective allocation for a band given its pending UAVs.
    pub fn greedy_allocation(
        &self,
        band: u32,
        features: &[f64],
    ) -> Result<Option<Vec<(BsId, Vec<UavId>)>>> {
        let Some(agent) = self.bands.get(&band) else {
            return Ok(None);
        };
        let idx = agent.dqn.greedy(features)?;
        Ok(Some(effective(
            &agent.enumeration.actions[idx],
            &agent.roster,
            features,
        )))
    }

    pub fn roster(&self, band: u32) -> Option<&[UavId]> {
        self.bands.get(&band).map(|b| b.roster.as_slice())
    }
}

/// Chosen subsets restricted to UAVs flagged pending in `features`.
fn effective(
    action: &[(BsId, Vec<UavId>)],
    roster: &[UavId],
    features: &[f64],
) -> Vec<(BsId, Vec<UavId>)> {
    action
        .iter()
        .map(|(bs, ids)| {
            let kept = ids
                .iter()
                .copied()
                .filter(|id| {
                    roster
                        .iter()
                        .position(|r| r == id)
                        .is_some_and(|i| features[2 * i] > 0.5)
                })
                .collect();
            (*bs, kept)
        })
        .collect()
}

impl AllocationPolicy for DqnAllocation {
    fn allocate(
        &mut self,
        view: &FrameView,
        rng: &mut SimRng,
    ) -> Result<BTreeMap<BsId, Vec<UavId>>> {
        let mut out = BTreeMap::new();
        for (band, cells) in band_cells(view) {
            let roster: Vec<UavId> = {
                let mut r: Vec<UavId> = cells
                    .iter()
                    .flat_map(|c| c.uavs.iter().map(|u| u.id))
                    .collect();
                r.sort_unstable();
                r
            };
            let agent = match self.bands.get_mut(&band) {
                Some(a) => {
                    if a.roster != roster {
                        return Err(Error::Protocol(format!(
                            "band {band}: DQN allocation needs a fixed set of UAVs per band"
                        )));
                    }
                    a
                }
                None => {
                    let layout: Vec<(BsId, Vec<UavId>, usize)> = cells
                        .iter()
                        .map(|c| (c.bs, c.uavs.iter().map(|u| u.id).collect(), c.subchannels))
                        .collect();
                    let enumeration = enumerate_allocations(&layout);
                    let mut init = SimRng::seed_from_u64(self.seed ^ (u64::from(band) << 32));
                    let dqn = DqnState::new(
                        2 * roster.len(),
                        enumeration.actions.len(),
                        self.config,
                        &mut init,
                    );
                    self.bands.entry(band).or_insert(BandAgent {
                        roster: roster.clone(),
                        enumeration,
                        dqn,
                        open: None,
                        transitions: Vec::new(),
                    })
                }
            };
            let features = band_features(&agent.roster, &cells, None);
            if !features.chunks(2).any(|c| c[0] > 0.5) {
                continue;
            }
            agent.dqn.epsilon = if self.frozen {
                0.0
            } else {
                self.epsilon.at(view.cycle)
            };
            let idx = dqn_select(&agent.dqn, &features, rng)?;
            for (bs, ids) in effective(&agent.enumeration.actions[idx], &agent.roster, &features) {
                out.insert(bs, ids);
            }
            agent.open = Some((features, idx));
        }
        Ok(out)
    }

    fn frame_feedback(&mut self, view: &FrameView, outcomes: &[(UavId, FrameOutcome)]) {
        if self.frozen {
            for agent in self.bands.values_mut() {
                agent.open = None;
            }
            return;
        }
        let succeeded: Vec<UavId> = outcomes
            .iter()
            .filter(|(_, o)| *o == FrameOutcome::Success)
            .map(|(id, _)| *id)
            .collect();
        for (band, cells) in band_cells(view) {
            let Some(agent) = self.bands.get_mut(&band) else {
                continue;
            };
            let Some((state, action)) = agent.open.take() else {
                continue;
            };
            let reward = agent
                .roster
                .iter()
                .filter(|id| succeeded.contains(id))
                .count() as f64;
            let next_state = band_features(&agent.roster, &cells, Some(&succeeded));
            let terminal =
                view.frame + 1 == view.frames || !next_state.chunks(2).any(|c| c[0] > 0.5);
            agent.transitions.push(Transition {
                state,
                action,
                reward,
                next_state,
                terminal,
            });
        }
    }

    fn learn(&mut self, _fb: &Feedback, rng: &mut SimRng) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        for agent in self.bands.values_mut() {
            for t in std::mem::take(&mut agent.transitions) {
                dqn_step(&mut agent.dqn, t, rng)?;
            }
        }
        Ok(())
    }

    fn snapshot(&self) -> serde_json::Value {
        let bands: BTreeMap<String, &BandAgent> =
            self.bands.iter().map(|(k, b)| (k.to_string(), b)).collect();
        serde_json::json!({ "frozen": self.frozen, "bands": bands })
    }

    fn restore(&mut self, v: &serde_json::Value) -> Result<()> {
        let bands: BTreeMap<String, BandAgent> =
            serde_json::from_value(v["bands"].clone()).map_err(snapshot_error)?;
        self.bands.clear();
        for (k, b) in bands {
            let band: u32 = k
                .parse()
                .map_err(|_| Error::Snapshot(format!("bad band key {k}")))?;
            self.bands.insert(band, b);
        }
        self.frozen = v["frozen"].as_bool().unwrap_or(false);
        Ok(())
    }
}
