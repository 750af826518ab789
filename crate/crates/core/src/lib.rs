//! Wind-turbine drive-train and equivalent-grid frequency dynamics with
//! conventional, time-shaped and feedback-linearizing virtual inertia
//! controllers.

// `!(x > 0.0)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controllers;
pub mod engine;
pub mod error;
pub mod gains;
pub mod plant;
pub mod scenario;
pub mod units;

pub use analysis::RunMetrics;
pub use controllers::{ControllerKind, ControllerSpec, ConventionalVicParams, ShapingF, ShapingG};
pub use engine::{run_scenario, ScenarioConfig, TimeSeries};
pub use error::{Error, Result};
pub use gains::{LqrWeights, OhftGains};
pub use plant::{GridParams, Plant, SystemState, WtgParams, WtgState};
pub use units::{AngularBase, PowerBase};
