//! Actor-critic learner with replay and target networks.

pub mod adam;
pub mod checkpoint;
pub mod ddpg;
pub mod nn;
pub mod policy;
pub mod replay;
pub mod train;

pub use checkpoint::Checkpoint;
pub use ddpg::{explore, Ddpg, DdpgConfig};
pub use nn::{Mlp, OutputActivation};
pub use policy::{AgentController, Normalizer, Policy};
pub use replay::{Batch, Experience, ReplayBuffer};
pub use train::{convergence_episode, final_mean, train, train_with, StoredAction, TrainConfig, TrainOutcome, TrainStart};
