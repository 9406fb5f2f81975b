//! TOML scenario files.
//!
//! ```toml
//! [lattice]            # cylinder of flying points, meters
//! center_x_m = 0.0
//! center_y_m = 0.0
//! radius_m = 500.0
//! h_min_m = 50.0
//! h_max_m = 150.0
//! spacing_m = 50.0
//!
//! [channel]            # every key optional, defaults shown in ChannelParams
//! carrier_hz = 2.0e9
//! tx_power_max_dbm = 23.0
//!
//! [[bss]]
//! id = 1
//! x_m = -300.0
//! y_m = 0.0
//! z_m = 25.0
//! subchannels = 2
//! band = 1
//!
//! [[targets]]
//! id = 1
//! x_m = -100.0
//! y_m = 0.0
//! z_m = 0.0
//!
//! [[uavs]]
//! id = 1
//! start = [-6, 0, 0]   # lattice index (i, j, k)
//! target = 1
//! battery_j = 1.0e6
//! home_bs = 1          # optional
//!
//! [run]
//! frames_per_cycle = 10
//! discount = 0.9
//! sensing_lambda_per_m = 0.01
//! seed = 1
//! frame_duration_s = 0.1
//! propulsion_j = 50.0
//!
//! [run.agents]         # learner hyperparameters, see AgentParams
//! alpha = 0.1
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::AgentParams;
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::world::{
    BsId, BsSpec, EnergyParams, LatticeIndex, LatticeSpec, Position, ScenarioConfig, TargetId,
    TargetSpec, UavId, UavSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeFile {
    #[serde(default)]
    pub center_x_m: f64,
    #[serde(default)]
    pub center_y_m: f64,
    pub radius_m: f64,
    pub h_min_m: f64,
    pub h_max_m: f64,
    pub spacing_m: f64,
}

impl Default for LatticeFile {
    fn default() -> Self {
        let d = LatticeSpec::default();
        Self {
            center_x_m: d.center.x,
            center_y_m: d.center.y,
            radius_m: d.radius,
            h_min_m: d.h_min,
            h_max_m: d.h_max,
            spacing_m: d.spacing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelFile {
    pub carrier_hz: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub los_a: f64,
    pub los_b_per_deg: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    pub noise_dbm: f64,
    pub sinr_threshold_db: f64,
    pub tx_power_min_dbm: f64,
    pub tx_power_max_dbm: f64,
}

impl Default for ChannelFile {
    fn default() -> Self {
        ChannelParams::default().into()
    }
}

impl From<ChannelParams> for ChannelFile {
    fn from(c: ChannelParams) -> Self {
        Self {
            carrier_hz: c.carrier_hz,
            eta_los_db: c.eta_los_db,
            eta_nlos_db: c.eta_nlos_db,
            los_a: c.los_a,
            los_b_per_deg: c.los_b,
            shadow_sigma_los_db: c.shadow_sigma_los_db,
            shadow_sigma_nlos_db: c.shadow_sigma_nlos_db,
            noise_dbm: c.noise_dbm,
            sinr_threshold_db: c.sinr_threshold_db,
            tx_power_min_dbm: c.tx_power_min_dbm,
            tx_power_max_dbm: c.tx_power_max_dbm,
        }
    }
}

impl From<&ChannelFile> for ChannelParams {
    fn from(c: &ChannelFile) -> Self {
        Self {
            carrier_hz: c.carrier_hz,
            eta_los_db: c.eta_los_db,
            eta_nlos_db: c.eta_nlos_db,
            los_a: c.los_a,
            los_b: c.los_b_per_deg,
            shadow_sigma_los_db: c.shadow_sigma_los_db,
            shadow_sigma_nlos_db: c.shadow_sigma_nlos_db,
            noise_dbm: c.noise_dbm,
            sinr_threshold_db: c.sinr_threshold_db,
            tx_power_min_dbm: c.tx_power_min_dbm,
            tx_power_max_dbm: c.tx_power_max_dbm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsFile {
    pub id: BsId,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub subchannels: usize,
    #[serde(default)]
    pub band: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    pub id: TargetId,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default)]
    pub z_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavFile {
    pub id: UavId,
    pub start: [i32; 3],
    pub target: TargetId,
    pub battery_j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_bs: Option<BsId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub frames_per_cycle: usize,
    pub discount: f64,
    pub sensing_lambda_per_m: f64,
    pub seed: u64,
    pub frame_duration_s: f64,
    pub propulsion_j: f64,
    pub agents: AgentParams,
}

impl Default for RunFile {
    fn default() -> Self {
        let e = EnergyParams::default();
        Self {
            frames_per_cycle: 10,
            discount: 0.9,
            sensing_lambda_per_m: 0.01,
            seed: 1,
            frame_duration_s: e.frame_duration_s,
            propulsion_j: e.propulsion_j,
            agents: AgentParams::default(),
        }
    }
}

/// On-disk layout of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub lattice: LatticeFile,
    #[serde(default)]
    pub channel: ChannelFile,
    pub bss: Vec<BsFile>,
    pub targets: Vec<TargetFile>,
    pub uavs: Vec<UavFile>,
    #[serde(default)]
    pub run: RunFile,
}

impl ScenarioFile {
    pub fn to_config(&self) -> Result<ScenarioConfig> {
        let l = &self.lattice;
        let config = ScenarioConfig {
            lattice: LatticeSpec {
                center: Position::new(l.center_x_m, l.center_y_m, 0.0),
                radius: l.radius_m,
                h_min: l.h_min_m,
                h_max: l.h_max_m,
                spacing: l.spacing_m,
            },
            bss: self
                .bss
                .iter()
                .map(|b| BsSpec {
                    id: b.id,
                    position: Position::new(b.x_m, b.y_m, b.z_m),
                    subchannels: b.subchannels,
                    band: b.band,
                })
                .collect(),
            uavs: self
                .uavs
                .iter()
                .map(|u| UavSpec {
                    id: u.id,
                    start: LatticeIndex::new(u.start[0], u.start[1], u.start[2]),
                    target: u.target,
                    battery_j: u.battery_j,
                    home_bs: u.home_bs,
                })
                .collect(),
            targets: self
                .targets
                .iter()
                .map(|t| TargetSpec {
                    id: t.id,
                    position: Position::new(t.x_m, t.y_m, t.z_m),
                })
                .collect(),
            frames_per_cycle: self.run.frames_per_cycle,
            discount: self.run.discount,
            channel: (&self.channel).into(),
            sensing_lambda: self.run.sensing_lambda_per_m,
            rng_seed: self.run.seed,
            energy: EnergyParams {
                frame_duration_s: self.run.frame_duration_s,
                propulsion_j: self.run.propulsion_j,
            },
            agents: self.run.agents.clone(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_config(c: &ScenarioConfig) -> Self {
        Self {
            lattice: LatticeFile {
                center_x_m: c.lattice.center.x,
                center_y_m: c.lattice.center.y,
                radius_m: c.lattice.radius,
                h_min_m: c.lattice.h_min,
                h_max_m: c.lattice.h_max,
                spacing_m: c.lattice.spacing,
            },
            channel: c.channel.into(),
            bss: c
                .bss
                .iter()
                .map(|b| BsFile {
                    id: b.id,
                    x_m: b.position.x,
                    y_m: b.position.y,
                    z_m: b.position.z,
                    subchannels: b.subchannels,
                    band: b.band,
                })
                .collect(),
            targets: c
                .targets
                .iter()
                .map(|t| TargetFile {
                    id: t.id,
                    x_m: t.position.x,
                    y_m: t.position.y,
                    z_m: t.position.z,
                })
                .collect(),
            uavs: c
                .uavs
                .iter()
                .map(|u| UavFile {
                    id: u.id,
                    start: [u.start.i, u.start.j, u.start.k],
                    target: u.target,
                    battery_j: u.battery_j,
                    home_bs: u.home_bs,
                })
                .collect(),
            run: RunFile {
                frames_per_cycle: c.frames_per_cycle,
                discount: c.discount,
                sensing_lambda_per_m: c.sensing_lambda,
                seed: c.rng_seed,
                frame_duration_s: c.energy.frame_duration_s,
                propulsion_j: c.energy.propulsion_j,
                agents: c.agents.clone(),
            },
        }
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.to_config()
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn to_toml(config: &ScenarioConfig) -> String {
    toml::to_string(&ScenarioFile::from_config(config)).expect("scenario serializes to TOML")
}
