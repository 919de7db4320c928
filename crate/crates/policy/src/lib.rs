//! Recurrent policy and value networks, the binary parameter format, and
//! PPO training against the engagement simulator.

pub mod controller;
pub mod dist;
pub mod gradcheck;
pub mod error;
pub mod network;
pub mod params;
pub mod ppo;
pub mod rollout;
pub mod train;

pub use dist::{ActionDistribution, SampleMode};
pub use error::{PolicyError, Result};
pub use network::{NetSizes, RecurrentNet};
pub use params::{NetworkParams, ObsScaler};
pub use ppo::{Optimizer, PpoConfig, RolloutBatch};
pub use rollout::{Environment, EvalStats};
pub use train::{TrainConfig, Trainer, UpdateLog};
