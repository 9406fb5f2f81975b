use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lattice index ({i}, {j}, {k}) violates {bound}")]
    InvalidIndex {
        i: i32,
        j: i32,
        k: i32,
        bound: &'static str,
    },

    #[error("invalid lattice spec: {0}")]
    InvalidLattice(String),

    #[error("BS and target share a ground projection; the BS-target plane is undefined")]
    DegeneratePlane,

    #[error("UAV altitude {uav_z} m is not above the BS antenna at {bs_z} m")]
    BelowBs { uav_z: f64, bs_z: f64 },

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("sensing distance must be non-negative, got {0}")]
    NegativeDistance(f64),

    #[error("transmit power {power} dBm outside [{min}, {max}] dBm")]
    PowerOutOfRange { power: f64, min: f64, max: f64 },

    #[error("empty action set")]
    EmptyActionSet,

    #[error("unknown arm {0}")]
    UnknownArm(u32),

    #[error("feature vector has length {got}, expected {expected}")]
    FeatureLength { expected: usize, got: usize },

    #[error("{uavs} UAVs exceed the exact DP limit of {limit}; use the Monte Carlo estimator")]
    TooManyUavs { uavs: usize, limit: usize },

    #[error("transition row for state {state}, action {action} is not a probability distribution")]
    NotStochastic { state: usize, action: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("policy violated the protocol: {0}")]
    Protocol(String),

    #[error("snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
