//! Experiment plumbing shared by the command-line runner and the tests:
//! algorithm selection, per-seed runs with CSV output and checkpoints, the
//! target-distance sweep, and the self-test suite.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::agents::{
    q_select, ActorCriticPower, AgentParams, BanditAssociation, DqnAllocation, DqnConfig,
    JointQTrajectory, JointVariant, SingleAgentQTrajectory, SparseQTable,
};
use crate::channel::{ChannelParams, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::oracle::{
    delivery_prob_mc, value_iteration, AllocationRule, DeliveryQuery, Mdp, QueryUav,
};
use crate::protocol::{
    run_cycle, CycleReport, FixedAssociation, Hover, MaxPower, MaxSuccessAllocation, PolicyBundle,
    WorldState,
};
use crate::rng::{SimRng, Streams};
use crate::world::{
    BsId, BsSpec, EnergyParams, LatticeIndex, LatticeSpec, Position, ScenarioConfig, TargetSpec,
    UavSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    SingleQ,
    OpponentQ,
    EnhancedQ,
    BanditAssoc,
    ActorCriticPower,
    DqnAlloc,
    Baseline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::SingleQ,
        Algorithm::OpponentQ,
        Algorithm::EnhancedQ,
        Algorithm::BanditAssoc,
        Algorithm::ActorCriticPower,
        Algorithm::DqnAlloc,
        Algorithm::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SingleQ => "single-q",
            Algorithm::OpponentQ => "opponent-q",
            Algorithm::EnhancedQ => "enhanced-q",
            Algorithm::BanditAssoc => "bandit-assoc",
            Algorithm::ActorCriticPower => "actor-critic-power",
            Algorithm::DqnAlloc => "dqn-alloc",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!(
                    "unknown algorithm '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Builds the policies for `algorithm`. `horizon` is the number of cycles
/// over which exploration decays unless the config fixes it.
pub fn build_policies(
    algorithm: Algorithm,
    config: &ScenarioConfig,
    horizon: u64,
    seed: u64,
) -> PolicyBundle {
    let a = &config.agents;
    let lr = a.learning_rate();
    let trajectory = |t: Box<dyn crate::protocol::TrajectoryPolicy>| PolicyBundle {
        association: Box::new(FixedAssociation),
        trajectory: t,
        power: Box::new(MaxPower),
        allocation: Box::new(MaxSuccessAllocation),
    };
    match algorithm {
        Algorithm::SingleQ => trajectory(Box::new(SingleAgentQTrajectory::new(
            lr,
            config.discount,
            a.epsilon(horizon),
            a.single_q_state,
        ))),
        Algorithm::OpponentQ => trajectory(Box::new(JointQTrajectory::new(
            JointVariant::OpponentModeling,
            lr,
            config.discount,
            a.epsilon(horizon),
        ))),
        Algorithm::EnhancedQ => trajectory(Box::new(JointQTrajectory::new(
            JointVariant::Enhanced,
            lr,
            config.discount,
            a.epsilon(horizon),
        ))),
        Algorithm::BanditAssoc => PolicyBundle {
            association: Box::new(BanditAssociation::new(a.bandit_epsilon(horizon))),
            trajectory: Box::new(Hover),
            power: Box::new(MaxPower),
            allocation: Box::new(MaxSuccessAllocation),
        },
        Algorithm::ActorCriticPower => PolicyBundle {
            association: Box::new(FixedAssociation),
            trajectory: Box::new(Hover),
            power: Box::new(ActorCriticPower::new(
                a.actor_std(horizon),
                a.actor_step,
                a.critic_step,
                config.discount,
            )),
            allocation: Box::new(MaxSuccessAllocation),
        },
        Algorithm::DqnAlloc => PolicyBundle {
            association: Box::new(FixedAssociation),
            trajectory: Box::new(Hover),
            power: Box::new(MaxPower),
            allocation: Box::new(DqnAllocation::new(
                dqn_config(config),
                a.dqn_epsilon(horizon),
                seed,
            )),
        },
        Algorithm::Baseline => PolicyBundle::baseline(),
    }
}

pub fn dqn_config(config: &ScenarioConfig) -> DqnConfig {
    let a = &config.agents;
    DqnConfig {
        hidden: a.dqn_hidden,
        buffer: a.dqn_buffer,
        batch: a.dqn_batch,
        target_sync: a.dqn_target_sync,
        step: a.dqn_step,
        discount: config.discount,
    }
}

pub const CSV_HEADER: &str =
    "run_id,seed,algorithm,cycle,uav_id,x_m,y_m,z_m,associated_bs,tx_power_dbm,\
sensing_valid,delivered,frames_used,reward,avg_reward_window";

pub const DEFAULT_WINDOW: usize = 100;

/// Per-UAV moving average of the reward over the last `window` cycles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardWindows {
    window: usize,
    recent: BTreeMap<u32, VecDeque<u8>>,
}

impl RewardWindows {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: BTreeMap::new(),
        }
    }

    /// Records `reward` for `uav` and returns the updated average.
    pub fn push(&mut self, uav: u32, reward: u8) -> f64 {
        let q = self.recent.entry(uav).or_default();
        if q.len() == self.window {
            q.pop_front();
        }
        q.push_back(reward);
        q.iter().map(|&r| f64::from(r)).sum::<f64>() / q.len() as f64
    }
}

pub fn run_id(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}-s{seed}")
}

/// Appends the CSV rows of one cycle.
pub fn write_rows(
    out: &mut impl Write,
    algorithm: Algorithm,
    seed: u64,
    report: &CycleReport,
    windows: &mut RewardWindows,
) -> std::io::Result<()> {
    let id = run_id(algorithm, seed);
    for u in &report.uavs {
        let avg = windows.push(u.id, u.reward);
        writeln!(
            out,
            "{id},{seed},{algorithm},{},{},{:.6},{:.6},{:.6},{},{:.6},{},{},{},{},{:.6}",
            report.cycle,
            u.id,
            u.position.x,
            u.position.y,
            u.position.z,
            u.bs,
            u.tx_power_dbm,
            u8::from(u.sensing_valid),
            u8::from(u.delivered),
            u.frames_used,
            u.reward,
            avg,
        )?;
    }
    Ok(())
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedCheckpoint {
    pub world: WorldState,
    pub policies: serde_json::Value,
    pub windows: RewardWindows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub algorithm: Algorithm,
    /// Exploration horizon the policies were built with.
    pub horizon: u64,
    pub seeds: BTreeMap<u64, SeedCheckpoint>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))
    }
}

/// Runs `cycles` cycles of one seed, either fresh or from `resume`, handing
/// every report to `sink`. Returns the state at the end.
pub fn run_seed(
    config: &ScenarioConfig,
    algorithm: Algorithm,
    seed: u64,
    cycles: u64,
    horizon: u64,
    window: usize,
    resume: Option<&SeedCheckpoint>,
    mut sink: impl FnMut(&CycleReport, &mut RewardWindows) -> Result<()>,
) -> Result<SeedCheckpoint> {
    if cycles < 1 {
        return Err(Error::Config("cycles must be >= 1".into()));
    }
    let mut policies = build_policies(algorithm, config, horizon, seed);
    let streams = Streams::new(seed);
    let (mut world, mut windows) = match resume {
        Some(c) => {
            policies.restore(&c.policies)?;
            (c.world.clone(), c.windows.clone())
        }
        None => (WorldState::initial(config)?, RewardWindows::new(window)),
    };
    for _ in 0..cycles {
        let (next, report) = run_cycle(&world, &mut policies, config, &streams)?;
        world = next;
        sink(&report, &mut windows)?;
    }
    Ok(SeedCheckpoint {
        world,
        policies: policies.snapshot(),
        windows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub config: ScenarioConfig,
    pub algorithm: Algorithm,
    pub cycles: u64,
    pub seeds: Vec<u64>,
    pub window: usize,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cycles < 1 {
            return Err(Error::Config("cycles must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        self.config.validate()
    }
}

/// Runs every seed in order, writing the header and all rows to `out`.
/// With `resume`, every seed continues from its checkpoint.
pub fn cmd_run(
    spec: &RunSpec,
    resume: Option<&Checkpoint>,
    out: &mut impl Write,
) -> Result<Checkpoint> {
    spec.validate()?;
    let horizon = match resume {
        Some(c) => {
            if c.algorithm != spec.algorithm {
                return Err(Error::Snapshot(format!(
                    "checkpoint was written by {}, not {}",
                    c.algorithm, spec.algorithm
                )));
            }
            c.horizon
        }
        None => spec.cycles,
    };
    let io = |e: std::io::Error| Error::Config(format!("writing CSV: {e}"));
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    let mut seeds = BTreeMap::new();
    for &seed in &spec.seeds {
        let from = match resume {
            Some(c) => Some(
                c.seeds
                    .get(&seed)
                    .ok_or_else(|| Error::Snapshot(format!("checkpoint has no seed {seed}")))?,
            ),
            None => None,
        };
        let state = run_seed(
            &spec.config,
            spec.algorithm,
            seed,
            spec.cycles,
            horizon,
            spec.window,
            from,
            |report, windows| write_rows(out, spec.algorithm, seed, report, windows).map_err(io),
        )?;
        seeds.insert(seed, state);
    }
    out.flush().map_err(io)?;
    Ok(Checkpoint {
        algorithm: spec.algorithm,
        horizon,
        seeds,
    })
}

pub const SWEEP_HEADER: &str = "algorithm,distance_m,seed,final_reward";

/// Moves every target along its BS-target direction so that it lies
/// `distance` meters (ground) from the home BS of the UAV sensing it.
pub fn with_target_distance(config: &ScenarioConfig, distance: f64) -> Result<ScenarioConfig> {
    if !(distance > 0.0) {
        return Err(Error::Config(format!(
            "target distance must be positive, got {distance} (a target under its BS has no BS-target plane)"
        )));
    }
    let mut c = config.clone();
    for t in &mut c.targets {
        let owner = config
            .uavs
            .iter()
            .find(|u| u.target == t.id)
            .ok_or_else(|| Error::Config(format!("target {} has no UAV", t.id)))?;
        let bs_id = owner.home_bs.ok_or_else(|| {
            Error::Config(format!(
                "uav {} needs a home_bs for a distance sweep",
                owner.id
            ))
        })?;
        let bs = config
            .bs(bs_id)
            .ok_or_else(|| Error::Config(format!("unknown bs {bs_id}")))?
            .position;
        let (dx, dy) = (t.position.x - bs.x, t.position.y - bs.y);
        let len = dx.hypot(dy);
        if len == 0.0 {
            return Err(Error::DegeneratePlane);
        }
        let p = Position::new(
            bs.x + dx / len * distance,
            bs.y + dy / len * distance,
            t.position.z,
        );
        if !config.lattice.covers_ground(&p) {
            return Err(Error::Config(format!(
                "target {} at {distance} m from bs {bs_id} falls outside the flying region",
                t.id
            )));
        }
        t.position = p;
    }
    c.validate()?;
    Ok(c)
}

/// Average reward per UAV per cycle over the last `window` cycles.
pub fn final_window_reward(totals: &[u32], uavs: usize, window: usize) -> f64 {
    let tail = &totals[totals.len().saturating_sub(window)..];
    tail.iter().map(|&t| f64::from(t)).sum::<f64>() / (tail.len() * uavs.max(1)) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub distance: f64,
    pub seed: u64,
    pub final_reward: f64,
}

/// Trains every algorithm at every distance and seed, returning the
/// final-window reward of each run in (distance, algorithm, seed) order.
pub fn sweep_distance(
    config: &ScenarioConfig,
    algorithms: &[Algorithm],
    distances: &[f64],
    seeds: &[u64],
    cycles: u64,
    window: usize,
) -> Result<Vec<SweepRow>> {
    let scenarios: Vec<ScenarioConfig> = distances
        .iter()
        .map(|&d| with_target_distance(config, d))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (&d, scenario) in distances.iter().zip(&scenarios) {
        for &algorithm in algorithms {
            for &seed in seeds {
                let mut totals = Vec::with_capacity(cycles as usize);
                run_seed(
                    scenario,
                    algorithm,
                    seed,
                    cycles,
                    cycles,
                    window,
                    None,
                    |r, _| {
                        totals.push(r.total_reward());
                        Ok(())
                    },
                )?;
                rows.push(SweepRow {
                    algorithm,
                    distance: d,
                    seed,
                    final_reward: final_window_reward(&totals, scenario.uavs.len(), window),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep(out: &mut impl Write, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{},{:.6}",
            r.algorithm, r.distance, r.seed, r.final_reward
        )?;
    }
    out.flush()
}

/// Ground distance between each target and its UAV's home BS in the
/// two-cell trajectory scenario.
pub const DEFAULT_TARGET_DISTANCE_M: f64 = 200.0;

/// Two BSs 200 m apart on separate bands with two subchannels each, and
/// three UAVs: two attached to the first BS, one to the second. Each UAV
/// starts above its BS at the lowest altitude; its target lies
/// `target_distance` meters from the BS along the y axis (the two UAVs of
/// the first BS look in opposite directions).
///
/// The lattice is coarser than the library default (100 m) and exploration
/// is held at a constant 0.2 so that every learner can make visible progress
/// within a couple of thousand cycles.
pub fn two_cell_scenario(target_distance: f64) -> ScenarioConfig {
    let lattice = LatticeSpec {
        center: Position::new(0.0, 0.0, 0.0),
        radius: 420.0,
        h_min: 50.0,
        h_max: 150.0,
        spacing: 100.0,
    };
    let cells: [(BsId, f64, &[f64]); 2] = [(1, -100.0, &[1.0, -1.0]), (2, 100.0, &[1.0])];
    let mut bss = Vec::new();
    let mut uavs = Vec::new();
    let mut targets = Vec::new();
    for (bs_id, x, directions) in cells {
        bss.push(BsSpec {
            id: bs_id,
            position: Position::new(x, 0.0, 25.0),
            subchannels: 2,
            band: bs_id,
        });
        for (n, dy) in directions.iter().enumerate() {
            let id = bs_id * 10 + n as u32 + 1;
            targets.push(TargetSpec {
                id,
                position: Position::new(x, dy * target_distance, 0.0),
            });
            uavs.push(UavSpec {
                id,
                start: LatticeIndex::new((x / lattice.spacing).round() as i32, 0, 0),
                target: id,
                battery_j: 1.0e9,
                home_bs: Some(bs_id),
            });
        }
    }
    let agents = AgentParams {
        alpha: 1.0,
        alpha_decay_exponent: 0.5,
        epsilon_start: 0.2,
        epsilon_end: 0.2,
        ..AgentParams::default()
    };
    ScenarioConfig {
        lattice,
        bss,
        uavs,
        targets,
        frames_per_cycle: 10,
        discount: 0.9,
        channel: Default::default(),
        sensing_lambda: 0.004,
        rng_seed: 1,
        energy: Default::default(),
        agents,
    }
}

/// Loss in dB (pathloss plus shadowing) at which a lone link succeeds in a
/// frame with probability `q` at maximum transmit power.
pub fn loss_for_success_prob(q: f64, ch: &ChannelParams) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!(
            "success probability {q} outside (0, 1)"
        )));
    }
    Ok(ch.tx_power_max_dbm - ch.noise_dbm - ch.sinr_threshold_db + 10.0 * (-q.ln()).log10())
}

/// A channel without randomness in the mean gain: no shadowing and the same
/// excess loss with or without line of sight.
pub fn deterministic_channel() -> ChannelParams {
    ChannelParams {
        eta_los_db: 20.0,
        eta_nlos_db: 20.0,
        shadow_sigma_los_db: 0.0,
        shadow_sigma_nlos_db: 0.0,
        ..ChannelParams::default()
    }
}

/// Ground distance from a BS at `bs_height` to a UAV at `uav_height` at which
/// the deterministic channel loses `loss_db`.
fn ground_distance_for_loss(
    loss_db: f64,
    ch: &ChannelParams,
    uav_height: f64,
    bs_height: f64,
) -> Result<f64> {
    let wavelength = SPEED_OF_LIGHT / ch.carrier_hz;
    let d =
        wavelength / (4.0 * std::f64::consts::PI) * 10f64.powf((loss_db - ch.eta_los_db) / 20.0);
    let dz = uav_height - bs_height;
    if d <= dz {
        return Err(Error::Config(format!(
            "a loss of {loss_db:.2} dB needs a link shorter than the {dz} m height difference"
        )));
    }
    Ok((d * d - dz * dz).sqrt())
}

/// One UAV hovering at the origin and two BSs on separate bands, one
/// subchannel each, with a deterministic channel and one frame per cycle.
/// BS 1 sits on the negative x axis and BS 2 on the positive one, at the
/// distances where the UAV's per-cycle success probability through them is
/// `q_first` and `q_second`.
pub fn bandit_scenario(q_first: f64, q_second: f64) -> Result<ScenarioConfig> {
    let lattice = LatticeSpec::default();
    let channel = deterministic_channel();
    let bs_height = 25.0;
    let mut bss = Vec::new();
    for (id, q, side) in [(1, q_first, -1.0), (2, q_second, 1.0)] {
        let loss = loss_for_success_prob(q, &channel)?;
        let x = side * ground_distance_for_loss(loss, &channel, lattice.h_min, bs_height)?;
        bss.push(BsSpec {
            id,
            position: Position::new(x, 0.0, bs_height),
            subchannels: 1,
            band: id,
        });
    }
    Ok(ScenarioConfig {
        lattice,
        bss,
        uavs: vec![UavSpec {
            id: 1,
            start: LatticeIndex::new(0, 0, 0),
            target: 1,
            battery_j: 1.0e9,
            home_bs: None,
        }],
        targets: vec![TargetSpec {
            id: 1,
            position: Position::new(0.0, 0.0, 0.0),
        }],
        frames_per_cycle: 1,
        discount: 0.9,
        channel,
        sensing_lambda: 0.001,
        rng_seed: 1,
        energy: Default::default(),
        agents: AgentParams::default(),
    })
}

/// Power decisions over which the actor's exploration spread of
/// [`power_scenario`] shrinks, about sixty battery lifetimes.
pub const POWER_TRAINING_DECISIONS: u64 = 30_000;

/// One UAV hovering 200 m (ground) from a single BS on a small battery.
/// Hovering is cheap and the power range reaches 30 dBm, so the energy spent
/// transmitting decides how many cycles the battery lasts. The small actor
/// step and the 1 dB floor on exploration keep the power mean from running
/// into either end of the range during training.
pub fn power_scenario() -> ScenarioConfig {
    let lattice = LatticeSpec::default();
    ScenarioConfig {
        bss: vec![BsSpec {
            id: 1,
            position: Position::new(0.0, 0.0, 25.0),
            subchannels: 1,
            band: 1,
        }],
        uavs: vec![UavSpec {
            id: 1,
            start: LatticeIndex::new(4, 0, 0),
            target: 1,
            battery_j: 10.0,
            home_bs: Some(1),
        }],
        targets: vec![TargetSpec {
            id: 1,
            position: Position::new(4.0 * lattice.spacing, 0.0, 0.0),
        }],
        lattice,
        frames_per_cycle: 1,
        discount: 0.995,
        channel: ChannelParams {
            tx_power_max_dbm: 30.0,
            ..ChannelParams::default()
        },
        sensing_lambda: 0.001,
        rng_seed: 1,
        energy: EnergyParams {
            frame_duration_s: 0.1,
            propulsion_j: 0.01,
        },
        agents: AgentParams {
            actor_step: 3.0e-4,
            actor_std_end_db: 1.0,
            epsilon_horizon: Some(POWER_TRAINING_DECISIONS),
            ..AgentParams::default()
        },
    }
}

/// Two BSs sharing one band, one subchannel each, and one hovering UAV per
/// BS over a deterministic channel. UAV 2 hovers between the BSs, closer to
/// BS 1 than to its own BS 2, so scheduling it next to UAV 1 costs UAV 1
/// much more than it gains.
pub fn dqn_toy_scenario() -> ScenarioConfig {
    let lattice = LatticeSpec::default();
    let bss = vec![
        BsSpec {
            id: 1,
            position: Position::new(0.0, 0.0, 25.0),
            subchannels: 1,
            band: 1,
        },
        BsSpec {
            id: 2,
            position: Position::new(750.0, 0.0, 25.0),
            subchannels: 1,
            band: 1,
        },
    ];
    let placements = [(1, -4), (2, 5)];
    let uavs = placements
        .iter()
        .map(|&(id, i)| UavSpec {
            id,
            start: LatticeIndex::new(i, 0, 0),
            target: id,
            battery_j: 1.0e9,
            home_bs: Some(id),
        })
        .collect();
    let targets = placements
        .iter()
        .map(|&(id, i)| TargetSpec {
            id,
            position: Position::new(f64::from(i) * lattice.spacing, 0.0, 0.0),
        })
        .collect();
    ScenarioConfig {
        lattice,
        bss,
        uavs,
        targets,
        frames_per_cycle: 2,
        discount: 0.9,
        channel: deterministic_channel(),
        sensing_lambda: 0.001,
        rng_seed: 1,
        energy: Default::default(),
        agents: AgentParams::default(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Random query with up to `max_uavs` UAVs and up to `max_frames` frames.
pub fn random_query<R: Rng + ?Sized>(
    rng: &mut R,
    max_uavs: usize,
    max_frames: usize,
) -> DeliveryQuery {
    let m = rng.random_range(1..=max_uavs);
    let uavs = (0..m)
        .map(|i| QueryUav {
            id: i as u32 + 1,
            position: Position::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                100.0,
            ),
            target: Position::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                0.0,
            ),
            q: if rng.random::<f64>() < 0.1 {
                0.0
            } else {
                rng.random()
            },
        })
        .collect();
    DeliveryQuery {
        uavs,
        sensing_lambda: 0.005,
        frames: rng.random_range(1..=max_frames),
        subchannels: rng.random_range(0..=3),
        rule: AllocationRule::MaxSuccess,
    }
}

/// Standard errors beyond which an exact value and a Monte Carlo estimate
/// are said to disagree.
pub const AGREEMENT_Z: f64 = 3.0;

/// Outcome of comparing the exact delivery oracle with Monte Carlo.
#[derive(Clone, Debug, PartialEq)]
pub struct Agreement {
    pub queries: usize,
    /// Per-UAV comparisons made.
    pub comparisons: usize,
    /// Comparisons with |dp - mc| above 3 reported standard errors.
    pub outside_reported: usize,
    pub worst_reported_z: f64,
    /// Comparisons with |dp - mc| above 3 standard errors of a binomial
    /// estimate whose true mean is the exact value.
    pub outside_null: usize,
    pub worst_null_z: f64,
    /// Comparisons outside 3 standard errors at the first stage that stay
    /// outside when re-estimated from a fresh, larger sample.
    pub confirmed: usize,
    /// z-scores of the re-estimates, one per first-stage miss.
    pub confirm_z: Vec<f64>,
}

impl Agreement {
    /// Under a correct oracle about 0.27% of comparisons miss at the first
    /// stage by chance; a biased oracle misses again on re-estimation.
    pub fn passed(&self) -> bool {
        self.confirmed == 0
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn null_z(exact: f64, estimate: f64, samples: usize) -> f64 {
    z_score(
        (exact - estimate).abs(),
        (exact * (1.0 - exact) / samples as f64).sqrt(),
    )
}

/// Compares `dp` against [`delivery_prob_mc`] on `queries` random queries
/// (up to 8 UAVs, up to 12 frames). A zero standard error requires exact
/// agreement. Every comparison outside 3 standard errors is re-estimated
/// from an independent stream with `confirm_samples` samples.
pub fn dp_mc_agreement(
    dp: impl Fn(&DeliveryQuery) -> Result<Vec<f64>>,
    queries: usize,
    samples: usize,
    confirm_samples: usize,
    seed: u64,
) -> Result<Agreement> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut confirm_rng = SimRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = Agreement {
        queries,
        comparisons: 0,
        outside_reported: 0,
        worst_reported_z: 0.0,
        outside_null: 0,
        worst_null_z: 0.0,
        confirmed: 0,
        confirm_z: Vec::new(),
    };
    for _ in 0..queries {
        let query = random_query(&mut rng, 8, 12);
        let exact = dp(&query)?;
        let est = delivery_prob_mc(&query, &mut rng, samples)?;
        let mut retry = None;
        for (i, (p, e)) in exact.iter().zip(&est).enumerate() {
            let reported = z_score((p - e.p).abs(), e.std_err);
            let null = null_z(*p, e.p, samples);
            out.comparisons += 1;
            out.outside_reported += usize::from(reported > AGREEMENT_Z);
            out.worst_reported_z = out.worst_reported_z.max(reported);
            out.worst_null_z = out.worst_null_z.max(null);
            if null > AGREEMENT_Z {
                out.outside_null += 1;
                if retry.is_none() {
                    retry = Some(delivery_prob_mc(&query, &mut confirm_rng, confirm_samples)?);
                }
                let again = retry.as_ref().expect("re-estimated")[i].p;
                let z = null_z(*p, again, confirm_samples);
                out.confirm_z.push(z);
                out.confirmed += usize::from(z > AGREEMENT_Z);
            }
        }
    }
    Ok(out)
}

/// Runs the oracle and learner self-checks. `dp` is the delivery oracle
/// under test.
pub fn selftest(dp: impl Fn(&DeliveryQuery) -> Result<Vec<f64>>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        out.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        })
    };

    match dp_mc_agreement(&dp, 40, 20_000, 400_000, 7) {
        Ok(a) => push(
            "oracle: exact DP agrees with Monte Carlo",
            a.passed(),
            format!(
                "{} of {} per-UAV comparisons outside 3 SE (worst |z| = {:.2}), {} still outside on re-estimation",
                a.outside_null, a.comparisons, a.worst_null_z, a.confirmed
            ),
        ),
        Err(e) => push("oracle: exact DP agrees with Monte Carlo", false, e.to_string()),
    }

    let closed_form = dp(&DeliveryQuery {
        uavs: vec![QueryUav {
            id: 1,
            position: Position::new(0.0, 0.0, 50.0),
            target: Position::new(0.0, 0.0, 50.0),
            q: 0.5,
        }],
        sensing_lambda: 0.01,
        frames: 2,
        subchannels: 1,
        rule: AllocationRule::MaxSuccess,
    });
    match closed_form {
        Ok(p) => push(
            "oracle: single UAV matches 1 - (1 - q)^F",
            (p[0] - 0.75).abs() < 1e-12,
            format!("got {:.12}", p[0]),
        ),
        Err(e) => push(
            "oracle: single UAV matches 1 - (1 - q)^F",
            false,
            e.to_string(),
        ),
    }

    // Value iteration on a single absorbing state with reward 1.
    let mdp = Mdp {
        transitions: vec![vec![vec![1.0]]],
        rewards: vec![vec![1.0]],
    };
    match value_iteration(&mdp, 0.9, 1e-10) {
        Ok(vi) => {
            let contracting = vi.sweep_deltas.windows(2).all(|w| w[1] <= w[0] + 1e-15);
            push(
                "value iteration: geometric series and contraction",
                (vi.q[0][0] - 10.0).abs() < 1e-8 && contracting,
                format!("Q = {:.10}, {} sweeps", vi.q[0][0], vi.sweep_deltas.len()),
            )
        }
        Err(e) => push(
            "value iteration: geometric series and contraction",
            false,
            e.to_string(),
        ),
    }

    // ε-greedy law on a four-action table.
    let mut q: SparseQTable<u32, u32> =
        SparseQTable::new(crate::agents::LearningRate::Constant { alpha: 0.1 }, 0.9);
    q.set(&0, 2, 1.0);
    let mut rng = SimRng::seed_from_u64(11);
    let n = 100_000;
    let eps = 0.3;
    let hits = (0..n)
        .filter(|_| q_select(&q, &0, &[0, 1, 2, 3], eps, &mut rng).ok() == Some(2))
        .count();
    let freq = hits as f64 / n as f64;
    let expected = 1.0 - eps + eps / 4.0;
    push(
        "epsilon-greedy: greedy frequency is (1 - eps) + eps/|A|",
        (freq - expected).abs() <= 0.01,
        format!("observed {freq:.4}, expected {expected:.4}"),
    );
    out
}
