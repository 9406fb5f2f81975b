//! Flying-space geometry: the cylindrical lattice, per-cycle moves, the
//! BS-target plane, and the static scenario description.

use serde::{Deserialize, Serialize};

use crate::agents::AgentParams;
use crate::channel::ChannelParams;
use crate::error::{Error, Result};

pub type BsId = u32;
pub type UavId = u32;
pub type TargetId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    pub fn ground_distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Cylinder of lattice points around `center`, with altitude layers
/// `h_min, h_min + spacing, ..., h_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub center: Position,
    pub radius: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub spacing: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            center: Position::new(0.0, 0.0, 0.0),
            radius: 500.0,
            h_min: 50.0,
            h_max: 150.0,
            spacing: 50.0,
        }
    }
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidLattice(msg.to_string()));
        if !(self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !(self.spacing > 0.0) {
            return bad("spacing must be positive");
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_max) {
            return bad("altitudes must satisfy 0 < h_min < h_max");
        }
        let layers = (self.h_max - self.h_min) / self.spacing;
        if (layers - layers.round()).abs() > 1e-9 {
            return bad("h_max - h_min must be an integer multiple of spacing");
        }
        Ok(())
    }

    /// Number of altitude layers.
    pub fn layers(&self) -> i32 {
        ((self.h_max - self.h_min) / self.spacing).round() as i32 + 1
    }

    fn horizontal_steps(&self) -> i32 {
        (self.radius / self.spacing).floor() as i32
    }

    pub fn check(&self, idx: LatticeIndex) -> Result<()> {
        let invalid = |bound| {
            Err(Error::InvalidIndex {
                i: idx.i,
                j: idx.j,
                k: idx.k,
                bound,
            })
        };
        if idx.k < 0 {
            return invalid("minimum altitude");
        }
        if idx.k >= self.layers() {
            return invalid("maximum altitude");
        }
        let h = self.spacing * (f64::from(idx.i).hypot(f64::from(idx.j)));
        if h > self.radius {
            return invalid("cylinder radius");
        }
        Ok(())
    }

    pub fn contains(&self, idx: LatticeIndex) -> bool {
        self.check(idx).is_ok()
    }

    /// Every valid lattice point, in index order.
    pub fn points(&self) -> Vec<LatticeIndex> {
        let n = self.horizontal_steps();
        let mut out = Vec::new();
        for i in -n..=n {
            for j in -n..=n {
                for k in 0..self.layers() {
                    let idx = LatticeIndex::new(i, j, k);
                    if self.contains(idx) {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }

    /// Nearest lattice index to `p`, without validity checks.
    pub fn quantize(&self, p: &Position) -> LatticeIndex {
        LatticeIndex::new(
            ((p.x - self.center.x) / self.spacing).round() as i32,
            ((p.y - self.center.y) / self.spacing).round() as i32,
            ((p.z - self.h_min) / self.spacing).round() as i32,
        )
    }

    /// Whether a ground point lies inside the cylinder's footprint.
    pub fn covers_ground(&self, p: &Position) -> bool {
        (p.x - self.center.x).hypot(p.y - self.center.y) <= self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeIndex {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl LatticeIndex {
    pub const fn new(i: i32, j: i32, k: i32) -> Self {
        Self { i, j, k }
    }

    pub fn chebyshev(&self, other: &LatticeIndex) -> i32 {
        (self.i - other.i)
            .abs()
            .max((self.j - other.j).abs())
            .max((self.k - other.k).abs())
    }
}

/// One axis of a per-cycle move. The declaration order makes `Stay` the
/// smallest key, so greedy ties resolve to hovering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Step {
    Stay,
    Plus,
    Minus,
}

impl Step {
    const ALL: [Step; 3] = [Step::Stay, Step::Plus, Step::Minus];

    pub fn delta(self) -> i32 {
        match self {
            Step::Stay => 0,
            Step::Plus => 1,
            Step::Minus => -1,
        }
    }

    fn from_delta(d: i32) -> Option<Step> {
        match d {
            0 => Some(Step::Stay),
            1 => Some(Step::Plus),
            -1 => Some(Step::Minus),
            _ => None,
        }
    }
}

/// Action key of the trajectory learners: a displacement of at most one
/// lattice step per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Move {
    pub x: Step,
    pub y: Step,
    pub z: Step,
}

impl Move {
    pub const HOVER: Move = Move {
        x: Step::Stay,
        y: Step::Stay,
        z: Step::Stay,
    };

    /// All 27 moves in key order.
    pub fn all() -> impl Iterator<Item = Move> {
        Step::ALL.into_iter().flat_map(|x| {
            Step::ALL
                .into_iter()
                .flat_map(move |y| Step::ALL.into_iter().map(move |z| Move { x, y, z }))
        })
    }

    pub fn between(from: LatticeIndex, to: LatticeIndex) -> Option<Move> {
        Some(Move {
            x: Step::from_delta(to.i - from.i)?,
            y: Step::from_delta(to.j - from.j)?,
            z: Step::from_delta(to.k - from.k)?,
        })
    }

    pub fn apply(self, idx: LatticeIndex) -> LatticeIndex {
        LatticeIndex::new(
            idx.i + self.x.delta(),
            idx.j + self.y.delta(),
            idx.k + self.z.delta(),
        )
    }
}

pub fn to_position(spec: &LatticeSpec, idx: LatticeIndex) -> Result<Position> {
    spec.check(idx)?;
    Ok(Position::new(
        spec.center.x + spec.spacing * f64::from(idx.i),
        spec.center.y + spec.spacing * f64::from(idx.j),
        spec.h_min + spec.spacing * f64::from(idx.k),
    ))
}

/// Valid lattice points within one step on every axis, hover included,
/// in `Move` key order.
pub fn feasible_actions(spec: &LatticeSpec, idx: LatticeIndex) -> Result<Vec<LatticeIndex>> {
    spec.check(idx)?;
    Ok(Move::all()
        .map(|m| m.apply(idx))
        .filter(|&n| spec.contains(n))
        .collect())
}

/// Horizontal distance from `p` to the vertical plane through `bs` and `target`.
pub fn plane_distance(p: &Position, bs: &Position, target: &Position) -> Result<f64> {
    let (dx, dy) = (target.x - bs.x, target.y - bs.y);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return Err(Error::DegeneratePlane);
    }
    let cross = dx * (p.y - bs.y) - dy * (p.x - bs.x);
    Ok(cross.abs() / len)
}

/// Keeps the actions that end no farther from the BS-target plane than
/// `current` is. Hover always survives.
pub fn reduce_actions(
    spec: &LatticeSpec,
    current: LatticeIndex,
    actions: &[LatticeIndex],
    bs: &Position,
    target: &Position,
) -> Result<Vec<LatticeIndex>> {
    let here = plane_distance(&to_position(spec, current)?, bs, target)?;
    let mut out = Vec::with_capacity(actions.len());
    for &a in actions {
        if plane_distance(&to_position(spec, a)?, bs, target)? <= here {
            out.push(a);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsSpec {
    pub id: BsId,
    pub position: Position,
    pub subchannels: usize,
    pub band: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavSpec {
    pub id: UavId,
    pub start: LatticeIndex,
    pub target: TargetId,
    pub battery_j: f64,
    /// BS the UAV is attached to when association is not learned.
    pub home_bs: Option<BsId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: TargetId,
    pub position: Position,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub frame_duration_s: f64,
    pub propulsion_j: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            frame_duration_s: 0.1,
            propulsion_j: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub lattice: LatticeSpec,
    pub bss: Vec<BsSpec>,
    pub uavs: Vec<UavSpec>,
    pub targets: Vec<TargetSpec>,
    pub frames_per_cycle: usize,
    pub discount: f64,
    pub channel: ChannelParams,
    pub sensing_lambda: f64,
    pub rng_seed: u64,
    pub energy: EnergyParams,
    pub agents: AgentParams,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        self.lattice.validate()?;
        self.channel.validate()?;
        if self.frames_per_cycle < 1 {
            return cfg("frames_per_cycle must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.discount) {
            return cfg(format!("discount {} outside [0, 1)", self.discount));
        }
        if !(self.sensing_lambda > 0.0) {
            return cfg("sensing_lambda must be positive".into());
        }
        if self.energy.frame_duration_s < 0.0 || self.energy.propulsion_j < 0.0 {
            return cfg("energy parameters must be non-negative".into());
        }
        if self.bss.is_empty() {
            return cfg("at least one BS is required".into());
        }
        if !unique(self.bss.iter().map(|b| b.id)) {
            return cfg("duplicate BS id".into());
        }
        if !unique(self.uavs.iter().map(|u| u.id)) {
            return cfg("duplicate UAV id".into());
        }
        if !unique(self.targets.iter().map(|t| t.id)) {
            return cfg("duplicate target id".into());
        }
        for u in &self.uavs {
            self.lattice
                .check(u.start)
                .map_err(|e| Error::Config(format!("uav {}: {e}", u.id)))?;
            if !(u.battery_j > 0.0) {
                return cfg(format!("uav {}: battery must be positive", u.id));
            }
            if self.target(u.target).is_none() {
                return cfg(format!("uav {}: unknown target {}", u.id, u.target));
            }
            if let Some(bs) = u.home_bs {
                if self.bs(bs).is_none() {
                    return cfg(format!("uav {}: unknown home_bs {bs}", u.id));
                }
            }
        }
        for bs in &self.bss {
            if self.lattice.h_min <= bs.position.z {
                return cfg(format!(
                    "bs {}: antenna height must be below the minimum flying altitude",
                    bs.id
                ));
            }
            for t in &self.targets {
                if bs.position.ground_distance(&t.position) == 0.0 {
                    return cfg(format!(
                        "target {} lies directly under bs {}: degenerate BS-target plane",
                        t.id, bs.id
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn bs(&self, id: BsId) -> Option<&BsSpec> {
        self.bss.iter().find(|b| b.id == id)
    }

    pub fn uav(&self, id: UavId) -> Option<&UavSpec> {
        self.uavs.iter().find(|u| u.id == id)
    }

    pub fn target(&self, id: TargetId) -> Option<&TargetSpec> {
        self.targets.iter().find(|t| t.id == id)
    }

    pub fn target_of(&self, uav: UavId) -> Option<&TargetSpec> {
        self.uav(uav).and_then(|u| self.target(u.target))
    }

    pub fn bs_index(&self, id: BsId) -> Option<usize> {
        self.bss.iter().position(|b| b.id == id)
    }
}

fn unique<T: Ord>(ids: impl Iterator<Item = T>) -> bool {
    let mut v: Vec<T> = ids.collect();
    let n = v.len();
    v.sort();
    v.dedup();
    v.len() == n
}
