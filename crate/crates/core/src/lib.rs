//! Scenario parameterization harness.
//!
//! Mines cut-in, cut-out and lead-vehicle-deceleration scenarios from
//! trajectory recordings, replays them (recorded and parameterized) against
//! four longitudinal driver reference models, and measures how often the
//! parameterized replay agrees with the recorded one on three pass/fail
//! criteria.

pub mod criteria;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod kinematics;
pub mod mining;
pub mod models;
pub mod param;
pub mod sim;
pub mod svd;
pub mod synth;

pub use criteria::{CriterionKind, CriterionResult};
pub use error::{Error, Result};
pub use eval::{ConfusionCounts, Metrics, MetricsReport};
pub use ingest::{EgoView, Recording, Sample, VehicleClass, VehicleTrack};
pub use mining::{Category, ScenarioInstance, Tag, TagConfig, TagKind};
pub use models::{ModelKind, ModelParams, ModelState};
pub use param::{ParameterVector, ParameterizationId, Variant};
pub use sim::{SimConfig, SimOutcome};
pub use svd::SvdBasis;
pub use synth::PlantSpec;
