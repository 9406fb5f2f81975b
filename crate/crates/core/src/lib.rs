//! Simulation of sensing UAVs reporting over a cellular network: geometry and channel models,
//! the synchronized sense-and-send protocol, reinforcement learners for
//! association, trajectory, power and subchannel allocation, and exact
//! reference computations used to check them.

pub mod agents;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod sensing;
pub mod world;

pub use error::{Error, Result};
