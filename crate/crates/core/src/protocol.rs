//! The sense-and-send cycle engine.
//!
//! A cycle runs three phases in order:
//!
//! 1. **Beaconing.** Links are realized for the current positions and the
//!    previous cycle's state is broadcast. Association, trajectory and power
//!    policies decide from that [`Beacon`] alone.
//! 2. **Sensing.** Each active UAV flies to its chosen lattice point and
//!    senses its target. The validity flag stays inside the engine until the
//!    BS decodes the data.
//! 3. **Transmission.** `F` frames. In each frame the allocation policy hands
//!    at most `K` subchannels per BS to UAVs that have not yet succeeded, and
//!    every allocated UAV succeeds with its per-frame probability.
//!
//! Policies see a cycle's outcome only through [`Feedback`], after the cycle.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, dbm_to_mw, dbm_to_w, LinkDraw, LinkRealization};
use crate::error::{Error, Result};
use crate::rng::{Purpose, SimRng, Streams};
use crate::sensing::{sample_sensing, sensing_success_prob};
use crate::world::{
    feasible_actions, to_position, BsId, LatticeIndex, Position, ScenarioConfig, UavId,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: UavId,
    pub index: LatticeIndex,
    pub battery_j: f64,
    pub bs: BsId,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Index of the next cycle to run.
    pub cycle: u64,
    /// Sorted by UAV id.
    pub uavs: Vec<UavState>,
    /// Beacon-time links of the last completed cycle, `[uav][bs]` in config order.
    pub links: Vec<Vec<LinkRealization>>,
}

impl WorldState {
    /// Start-of-episode state. UAVs attach to their home BS, or to the
    /// nearest BS when none is configured.
    pub fn initial(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut uavs: Vec<UavState> = config
            .uavs
            .iter()
            .map(|u| {
                let bs = match u.home_bs {
                    Some(b) => b,
                    None => {
                        let p = to_position(&config.lattice, u.start)?;
                        nearest_bs(config, &p)
                    }
                };
                Ok(UavState {
                    id: u.id,
                    index: u.start,
                    battery_j: u.battery_j,
                    bs,
                    active: true,
                })
            })
            .collect::<Result<_>>()?;
        uavs.sort_by_key(|u| u.id);
        Ok(Self {
            cycle: 0,
            uavs,
            links: Vec::new(),
        })
    }

    pub fn uav(&self, id: UavId) -> Option<&UavState> {
        self.uavs.iter().find(|u| u.id == id)
    }

    fn check(&self, config: &ScenarioConfig) -> Result<()> {
        if self.uavs.len() != config.uavs.len() {
            return Err(Error::Config(
                "world and config disagree on the UAV set".into(),
            ));
        }
        for u in &self.uavs {
            if config.uav(u.id).is_none() {
                return Err(Error::Config(format!("world has unknown uav {}", u.id)));
            }
            config.lattice.check(u.index)?;
            if config.bs(u.bs).is_none() {
                return Err(Error::Config(format!(
                    "uav {} attached to unknown bs {}",
                    u.id, u.bs
                )));
            }
            if u.battery_j < 0.0 {
                return Err(Error::Config(format!("uav {} has negative battery", u.id)));
            }
        }
        Ok(())
    }
}

fn nearest_bs(config: &ScenarioConfig, p: &Position) -> BsId {
    let mut best = &config.bss[0];
    for b in &config.bss[1..] {
        let (d, db) = (
            p.ground_distance(&b.position),
            p.ground_distance(&best.position),
        );
        if d < db || (d == db && b.id < best.id) {
            best = b;
        }
    }
    best.id
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameOutcome {
    NoSubchannel,
    Failed,
    Success,
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavReport {
    pub id: UavId,
    pub action: LatticeIndex,
    pub position: Position,
    pub tx_power_dbm: f64,
    pub bs: BsId,
    pub active: bool,
    pub sensing_valid: bool,
    pub outcomes: Vec<FrameOutcome>,
    pub delivered: bool,
    pub reward: u8,
    pub frames_used: usize,
    pub tx_energy_j: f64,
    pub battery_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: u64,
    pub uavs: Vec<UavReport>,
}

impl CycleReport {
    pub fn total_reward(&self) -> u32 {
        self.uavs.iter().map(|u| u32::from(u.reward)).sum()
    }
}

/// What every UAV and BS knows at the end of the beaconing phase: the state
/// reported for the previous cycle plus this cycle's channel conditions.
#[derive(Clone, Copy, Debug)]
pub struct Beacon<'a> {
    pub cycle: u64,
    pub config: &'a ScenarioConfig,
    pub uavs: &'a [UavState],
    /// `[uav][bs]`, UAVs in id order, BSs in config order.
    pub links: &'a [Vec<LinkRealization>],
}

impl<'a> Beacon<'a> {
    pub fn uav(&self, id: UavId) -> Option<&'a UavState> {
        self.uavs.iter().find(|u| u.id == id)
    }

    pub fn link(&self, uav: UavId, bs: BsId) -> Option<&'a LinkRealization> {
        let u = self.uavs.iter().position(|u| u.id == uav)?;
        let b = self.config.bs_index(bs)?;
        self.links.get(u).and_then(|row| row.get(b))
    }

    /// Active UAVs attached to `bs`, in id order.
    pub fn cell(&self, bs: BsId) -> Vec<&'a UavState> {
        self.uavs
            .iter()
            .filter(|u| u.bs == bs && u.active)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PendingUav {
    pub id: UavId,
    pub pending: bool,
    /// Interference-free per-frame success probability.
    pub q: f64,
    /// Pathloss plus shadowing to the serving BS, dB.
    pub loss_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellView {
    pub bs: BsId,
    pub band: u32,
    pub subchannels: usize,
    /// Active UAVs of the cell in id order.
    pub uavs: Vec<PendingUav>,
}

impl CellView {
    pub fn pending(&self) -> Vec<(UavId, f64)> {
        self.uavs
            .iter()
            .filter(|u| u.pending)
            .map(|u| (u.id, u.q))
            .collect()
    }
}

/// Allocation input for one frame: outcomes up to the previous frame only.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameView {
    pub cycle: u64,
    pub frame: usize,
    pub frames: usize,
    pub cells: Vec<CellView>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavFeedback {
    pub id: UavId,
    pub active: bool,
    pub bs: BsId,
    pub from: LatticeIndex,
    pub action: LatticeIndex,
    pub tx_power_dbm: f64,
    pub delivered: bool,
    pub reward: u8,
    pub frames_used: usize,
    pub tx_frames: usize,
    pub battery_before_j: f64,
    pub battery_after_j: f64,
}

/// Post-cycle information returned to the learners. Sensing validity is only
/// visible through `reward`.
#[derive(Clone, Copy, Debug)]
pub struct Feedback<'a> {
    pub cycle: u64,
    pub config: &'a ScenarioConfig,
    pub uavs: &'a [UavFeedback],
    /// Links after the move, `[uav][bs]` like [`Beacon::links`].
    pub links: &'a [Vec<LinkRealization>],
}

impl<'a> Feedback<'a> {
    pub fn uav(&self, id: UavId) -> Option<&'a UavFeedback> {
        self.uavs.iter().find(|u| u.id == id)
    }

    pub fn link(&self, uav: UavId, bs: BsId) -> Option<&'a LinkRealization> {
        let u = self.uavs.iter().position(|u| u.id == uav)?;
        let b = self.config.bs_index(bs)?;
        self.links.get(u).and_then(|row| row.get(b))
    }
}

pub trait AssociationPolicy: Send {
    fn select(&mut self, beacon: &Beacon, uav: UavId, rng: &mut SimRng) -> Result<BsId>;
    fn learn(&mut self, _fb: &Feedback) -> Result<()> {
        Ok(())
    }
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn restore(&mut self, _v: &serde_json::Value) -> Result<()> {
        Ok(())
    }
}

pub trait TrajectoryPolicy: Send {
    fn select(&mut self, beacon: &Beacon, uav: UavId, rng: &mut SimRng) -> Result<LatticeIndex>;
    fn learn(&mut self, _fb: &Feedback) -> Result<()> {
        Ok(())
    }
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn restore(&mut self, _v: &serde_json::Value) -> Result<()> {
        Ok(())
    }
}

pub trait PowerPolicy: Send {
    fn select(&mut self, beacon: &Beacon, uav: UavId, rng: &mut SimRng) -> Result<f64>;
    fn learn(&mut self, _fb: &Feedback) -> Result<()> {
        Ok(())
    }
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn restore(&mut self, _v: &serde_json::Value) -> Result<()> {
        Ok(())
    }
}

pub trait AllocationPolicy: Send {
    /// Subchannel holders per BS for this frame.
    fn allocate(
        &mut self,
        view: &FrameView,
        rng: &mut SimRng,
    ) -> Result<BTreeMap<BsId, Vec<UavId>>>;
    /// Outcomes of the frame just played, in UAV id order.
    fn frame_feedback(&mut self, _view: &FrameView, _outcomes: &[(UavId, FrameOutcome)]) {}
    fn learn(&mut self, _fb: &Feedback, _rng: &mut SimRng) -> Result<()> {
        Ok(())
    }
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn restore(&mut self, _v: &serde_json::Value) -> Result<()> {
        Ok(())
    }
}

/// Attach to the BS with the largest mean gain in the beacon.
#[derive(Clone, Debug, Default)]
pub struct StrongestGain;

impl AssociationPolicy for StrongestGain {
    fn select(&mut self, beacon: &Beacon, uav: UavId, _rng: &mut SimRng) -> Result<BsId> {
        let mut best: Option<(BsId, f64)> = None;
        for bs in &beacon.config.bss {
            let g = beacon
                .link(uav, bs.id)
                .ok_or_else(|| Error::Protocol(format!("no link for uav {uav}")))?
                .mean_gain;
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((bs.id, g));
            }
        }
        Ok(best.expect("config has at least one BS").0)
    }
}

/// Keep the configured home BS (or the current one when none is set).
#[derive(Clone, Debug, Default)]
pub struct FixedAssociation;

impl AssociationPolicy for FixedAssociation {
    fn select(&mut self, beacon: &Beacon, uav: UavId, _rng: &mut SimRng) -> Result<BsId> {
        let current = beacon
            .uav(uav)
            .ok_or_else(|| Error::Protocol(format!("unknown uav {uav}")))?
            .bs;
        Ok(beacon
            .config
            .uav(uav)
            .and_then(|u| u.home_bs)
            .unwrap_or(current))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Hover;

impl TrajectoryPolicy for Hover {
    fn select(&mut self, beacon: &Beacon, uav: UavId, _rng: &mut SimRng) -> Result<LatticeIndex> {
        Ok(beacon
            .uav(uav)
            .ok_or_else(|| Error::Protocol(format!("unknown uav {uav}")))?
            .index)
    }
}

#[derive(Clone, Debug, Default)]
pub struct MaxPower;

impl PowerPolicy for MaxPower {
    fn select(&mut self, beacon: &Beacon, _uav: UavId, _rng: &mut SimRng) -> Result<f64> {
        Ok(beacon.config.channel.tx_power_max_dbm)
    }
}

/// Give each BS's subchannels to its pending UAVs with the highest success
/// probability.
#[derive(Clone, Debug, Default)]
pub struct MaxSuccessAllocation;

impl AllocationPolicy for MaxSuccessAllocation {
    fn allocate(
        &mut self,
        view: &FrameView,
        _rng: &mut SimRng,
    ) -> Result<BTreeMap<BsId, Vec<UavId>>> {
        Ok(view
            .cells
            .iter()
            .map(|c| (c.bs, allocate_max_success(&c.pending(), c.subchannels)))
            .collect())
    }
}

/// The `min(k, len)` entries with the largest success probability; ties go
/// to the lower UAV id. Returned in selection order.
pub fn allocate_max_success(pending: &[(UavId, f64)], k: usize) -> Vec<UavId> {
    let mut sorted: Vec<(UavId, f64)> = pending.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.into_iter().take(k).map(|(id, _)| id).collect()
}

pub struct PolicyBundle {
    pub association: Box<dyn AssociationPolicy>,
    pub trajectory: Box<dyn TrajectoryPolicy>,
    pub power: Box<dyn PowerPolicy>,
    pub allocation: Box<dyn AllocationPolicy>,
}

impl PolicyBundle {
    /// Strongest-gain association, hovering, maximum power, top-probability
    /// allocation.
    pub fn baseline() -> Self {
        Self {
            association: Box::new(StrongestGain),
            trajectory: Box::new(Hover),
            power: Box::new(MaxPower),
            allocation: Box::new(MaxSuccessAllocation),
        }
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "association": self.association.snapshot(),
            "trajectory": self.trajectory.snapshot(),
            "power": self.power.snapshot(),
            "allocation": self.allocation.snapshot(),
        })
    }

    pub fn restore(&mut self, v: &serde_json::Value) -> Result<()> {
        self.association.restore(&v["association"])?;
        self.trajectory.restore(&v["trajectory"])?;
        self.power.restore(&v["power"])?;
        self.allocation.restore(&v["allocation"])
    }
}

fn link_draws(
    streams: &Streams,
    cycle: u64,
    config: &ScenarioConfig,
    uavs: &[UavState],
) -> Vec<Vec<LinkDraw>> {
    uavs.iter()
        .map(|u| {
            config
                .bss
                .iter()
                .map(|b| LinkDraw::sample(&mut streams.rng(cycle, Purpose::Link, u.id, b.id)))
                .collect()
        })
        .collect()
}

fn realize_all(
    draws: &[Vec<LinkDraw>],
    positions: &[Position],
    config: &ScenarioConfig,
) -> Result<Vec<Vec<LinkRealization>>> {
    draws
        .iter()
        .zip(positions)
        .map(|(row, p)| {
            row.iter()
                .zip(&config.bss)
                .map(|(d, b)| channel::realize_with(*d, p, &b.position, &config.channel))
                .collect()
        })
        .collect()
}

/// Runs one sense-and-send cycle and hands feedback to every policy.
pub fn run_cycle(
    world: &WorldState,
    policies: &mut PolicyBundle,
    config: &ScenarioConfig,
    streams: &Streams,
) -> Result<(WorldState, CycleReport)> {
    world.check(config)?;
    let cycle = world.cycle;
    let n = world.uavs.len();
    let energy = config.energy;
    let ch = &config.channel;

    // Beaconing.
    let draws = link_draws(streams, cycle, config, &world.uavs);
    let before_pos: Vec<Position> = world
        .uavs
        .iter()
        .map(|u| to_position(&config.lattice, u.index))
        .collect::<Result<_>>()?;
    let beacon_links = realize_all(&draws, &before_pos, config)?;
    let beacon = Beacon {
        cycle,
        config,
        uavs: &world.uavs,
        links: &beacon_links,
    };

    let mut next: Vec<UavState> = world.uavs.clone();
    let mut power = vec![ch.tx_power_min_dbm; n];
    for (i, u) in world.uavs.iter().enumerate() {
        if !u.active || u.battery_j < energy.propulsion_j {
            next[i].active = false;
            continue;
        }
        let bs = policies.association.select(
            &beacon,
            u.id,
            &mut streams.rng(cycle, Purpose::Association, u.id, 0),
        )?;
        if config.bs(bs).is_none() {
            return Err(Error::Protocol(format!(
                "uav {} associated with unknown bs {bs}",
                u.id
            )));
        }
        let dest = policies.trajectory.select(
            &beacon,
            u.id,
            &mut streams.rng(cycle, Purpose::Trajectory, u.id, 0),
        )?;
        if !feasible_actions(&config.lattice, u.index)?.contains(&dest) {
            return Err(Error::Protocol(format!(
                "uav {} cannot reach {dest:?} from {:?} in one cycle",
                u.id, u.index
            )));
        }
        let p = policies.power.select(
            &beacon,
            u.id,
            &mut streams.rng(cycle, Purpose::Power, u.id, 0),
        )?;
        ch.check_power(p)?;
        next[i].bs = bs;
        next[i].index = dest;
        power[i] = p;
    }

    // Sensing.
    let after_pos: Vec<Position> = next
        .iter()
        .map(|u| to_position(&config.lattice, u.index))
        .collect::<Result<_>>()?;
    let mut valid = vec![false; n];
    for (i, u) in next.iter().enumerate() {
        if !u.active {
            continue;
        }
        let target = config
            .target_of(u.id)
            .ok_or_else(|| Error::Config(format!("uav {} has no target", u.id)))?;
        let p = sensing_success_prob(
            after_pos[i].distance(&target.position),
            config.sensing_lambda,
        )?;
        valid[i] = sample_sensing(&mut streams.rng(cycle, Purpose::Sensing, u.id, 0), p);
    }

    // Transmission.
    let links = realize_all(&draws, &after_pos, config)?;
    let bs_slot: Vec<usize> = next
        .iter()
        .map(|u| config.bs_index(u.bs).expect("association checked"))
        .collect();
    let tx_mw: Vec<f64> = power.iter().map(|&p| dbm_to_mw(p)).collect();
    let q_free: Vec<f64> = (0..n)
        .map(|i| channel::success_prob_mw(links[i][bs_slot[i]].mean_gain, tx_mw[i], 0.0, ch))
        .collect();
    let mut fading: Vec<SimRng> = next
        .iter()
        .map(|u| streams.rng(cycle, Purpose::Fading, u.id, 0))
        .collect();

    let frames = config.frames_per_cycle;
    let mut pending: Vec<bool> = next.iter().map(|u| u.active).collect();
    let mut outcomes: Vec<Vec<FrameOutcome>> = vec![Vec::with_capacity(frames); n];
    let mut tx_frames = vec![0usize; n];
    let mut first_success: Vec<Option<usize>> = vec![None; n];
    let mut alloc_rng = streams.rng(cycle, Purpose::Allocation, 0, 0);

    for f in 0..frames {
        let view = FrameView {
            cycle,
            frame: f,
            frames,
            cells: config
                .bss
                .iter()
                .map(|b| CellView {
                    bs: b.id,
                    band: b.band,
                    subchannels: b.subchannels,
                    uavs: (0..n)
                        .filter(|&i| next[i].active && next[i].bs == b.id)
                        .map(|i| PendingUav {
                            id: next[i].id,
                            pending: pending[i],
                            q: q_free[i],
                            loss_db: links[i][bs_slot[i]].loss_db(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let alloc = policies.allocation.allocate(&view, &mut alloc_rng)?;

        // slot[i] = subchannel index held by UAV i in this frame.
        let mut slot: Vec<Option<usize>> = vec![None; n];
        for cell in &view.cells {
            let Some(chosen) = alloc.get(&cell.bs) else {
                continue;
            };
            if chosen.len() > cell.subchannels {
                return Err(Error::Protocol(format!(
                    "bs {} allocated {} UAVs on {} subchannels",
                    cell.bs,
                    chosen.len(),
                    cell.subchannels
                )));
            }
            let mut ids = chosen.clone();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() != chosen.len() {
                return Err(Error::Protocol(format!(
                    "bs {} allocated a UAV twice",
                    cell.bs
                )));
            }
            for (s, id) in ids.iter().enumerate() {
                let i = next.iter().position(|u| u.id == *id);
                match i {
                    Some(i) if pending[i] && next[i].bs == cell.bs => slot[i] = Some(s),
                    _ => {
                        return Err(Error::Protocol(format!(
                            "bs {} allocated uav {id}, which is not pending in its cell",
                            cell.bs
                        )))
                    }
                }
            }
        }
        for bs in alloc.keys() {
            if config.bs(*bs).is_none() {
                return Err(Error::Protocol(format!("allocation for unknown bs {bs}")));
            }
        }

        let mut frame_out = Vec::with_capacity(n);
        for i in 0..n {
            let draw: f64 = fading[i].random();
            let outcome = if first_success[i].is_some() {
                FrameOutcome::Idle
            } else if let Some(s) = slot[i] {
                let b = bs_slot[i];
                let band = config.bss[b].band;
                let interference: f64 = (0..n)
                    .filter(|&j| {
                        j != i
                            && slot[j] == Some(s)
                            && bs_slot[j] != b
                            && config.bss[bs_slot[j]].band == band
                    })
                    .map(|j| tx_mw[j] * links[j][b].mean_gain)
                    .sum();
                let q = channel::success_prob_mw(links[i][b].mean_gain, tx_mw[i], interference, ch);
                tx_frames[i] += 1;
                if draw < q {
                    first_success[i] = Some(f);
                    FrameOutcome::Success
                } else {
                    FrameOutcome::Failed
                }
            } else {
                FrameOutcome::NoSubchannel
            };
            outcomes[i].push(outcome);
            frame_out.push((next[i].id, outcome));
        }
        for i in 0..n {
            if first_success[i].is_some() {
                pending[i] = false;
            }
        }
        policies.allocation.frame_feedback(&view, &frame_out);
    }

    // Bookkeeping.
    let mut reports = Vec::with_capacity(n);
    let mut feedback = Vec::with_capacity(n);
    for i in 0..n {
        let u = &mut next[i];
        let before = world.uavs[i].battery_j;
        let tx_energy = dbm_to_w(power[i]) * energy.frame_duration_s * tx_frames[i] as f64;
        if u.active {
            u.battery_j = (u.battery_j - energy.propulsion_j - tx_energy).max(0.0);
        }
        let delivered = first_success[i].is_some();
        let reward = u8::from(delivered && valid[i]);
        let frames_used = first_success[i].map_or(frames, |f| f + 1);
        reports.push(UavReport {
            id: u.id,
            action: u.index,
            position: after_pos[i],
            tx_power_dbm: power[i],
            bs: u.bs,
            active: u.active,
            sensing_valid: valid[i],
            outcomes: std::mem::take(&mut outcomes[i]),
            delivered,
            reward,
            frames_used,
            tx_energy_j: tx_energy,
            battery_j: u.battery_j,
        });
        feedback.push(UavFeedback {
            id: u.id,
            active: u.active,
            bs: u.bs,
            from: world.uavs[i].index,
            action: u.index,
            tx_power_dbm: power[i],
            delivered,
            reward,
            frames_used,
            tx_frames: tx_frames[i],
            battery_before_j: before,
            battery_after_j: u.battery_j,
        });
    }

    let fb = Feedback {
        cycle,
        config,
        uavs: &feedback,
        links: &links,
    };
    policies.association.learn(&fb)?;
    policies.trajectory.learn(&fb)?;
    policies.power.learn(&fb)?;
    policies
        .allocation
        .learn(&fb, &mut streams.rng(cycle, Purpose::Learner, 0, 0))?;

    Ok((
        WorldState {
            cycle: cycle + 1,
            uavs: next,
            links: beacon_links,
        },
        CycleReport {
            cycle,
            uavs: reports,
        },
    ))
}

/// Runs `cycles` consecutive cycles, passing each report to `sink`.
/// Returns the final world state.
pub fn run_episode(
    initial: WorldState,
    policies: &mut PolicyBundle,
    cycles: u64,
    config: &ScenarioConfig,
    streams: &Streams,
    mut sink: impl FnMut(CycleReport) -> Result<()>,
) -> Result<WorldState> {
    if cycles < 1 {
        return Err(Error::Config("an episode needs at least one cycle".into()));
    }
    let mut world = initial;
    for _ in 0..cycles {
        let (w, report) = run_cycle(&world, policies, config, streams)?;
        world = w;
        sink(report)?;
    }
    Ok(world)
}
