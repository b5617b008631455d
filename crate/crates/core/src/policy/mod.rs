//! Action-chunking policy runtime: weight bundles, inference, squashing and
//! scheduling.

pub mod action;
pub mod bundle;
pub mod golden;
pub mod model;
pub mod schedule;

pub use action::{axis_angle, rodrigues, squash_compliance, Action, ActionChunk, ArmAction, PERIOD};
pub use bundle::{Architecture, Tensor, WeightBundle, ACTION_DIM};
pub use model::{ArmObservation, Observation, Policy};
pub use schedule::{ensemble_step, ensemble_tick, ChunkScheduler, DEFAULT_DECAY};
