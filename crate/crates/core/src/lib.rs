//! Reactive path tracking for a car-like robot.
//!
//! A discrete-action neural controller observes a seven-element feature
//! vector built from the cross-track error to a waypoint path, the speed
//! error, heading alignment, the previous controls and a ray-cast scan of a
//! vehicle-centred occupancy grid. It is trained with proximal policy
//! optimisation against a kinematic bicycle simulator and validated with
//! four trajectory KPIs.
//!
//! Module map:
//!
//! * [`path`]: waypoints, reference-segment selection, cross-track error.
//! * [`grid`]: obstacle rasterisation and the ray-casting range finder.
//! * [`vehicle`]: the 11×11 control grid and bicycle dynamics.
//! * [`env`]: observation, reward, episode lifecycle.
//! * [`net`]: dense tanh networks with exact backpropagation.
//! * [`ppo`]: rollouts, GAE, the clipped surrogate update, training loop.
//! * [`eval`]: recorded policy rollouts and KPI reports.
//! * [`kpi`]: κ₂, κ_reach, κ_dist and κ_danger over episode traces.
//! * [`scenario`]: scenario files and the figure-8 benchmark.

pub mod env;
pub mod eval;
pub mod error;
pub mod geom;
pub mod grid;
pub mod kpi;
pub mod net;
pub mod path;
pub mod ppo;
pub mod scenario;
pub mod vehicle;

pub use env::{Env, EnvParams, Observation, RewardParams, StepResult, Termination};
pub use error::{Error, Result};
pub use geom::Vec2;
pub use grid::{GridSpec, Obstacle, OccupancyGrid, RangeScan, SensorParams};
pub use kpi::{EpisodeTrace, KpiSet};
pub use net::{DenseNet, Head};
pub use path::{Path, ReferenceSegment, Waypoint};
pub use eval::ActionMode;
pub use ppo::{Curriculum, PpoConfig, TrainOutcome, TrainingScenarios};
pub use scenario::Scenario;
pub use vehicle::{Control, VehicleParams, VehicleState};
