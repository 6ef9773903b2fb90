//! Core of the virtual-barrier simulator.
//!
//! A 6-DOF arm follows user-programmed waypoint sub-paths while a
//! person-following cylinder and user-placed obstacle barriers can
//! invalidate those sub-paths at runtime. A periodic monitor decides whether
//! the robot must stop and replan its current motion or whether upcoming
//! sub-paths can be replanned while it keeps moving.
//!
//! Module map:
//! - [`arm`]: kinematic chain, forward kinematics, Jacobian, numerical IK.
//! - [`collision`]: capsule vs. barrier signed distances and path validity.
//! - [`barriers`]: versioned barrier registry and immutable world snapshots.
//! - [`planner`]: RRT-Connect sub-path planning, shortcutting, timing.
//! - [`mission`]: waypoint workflow, sub-path lifecycle, validity monitor.
//! - [`sim`]: fixed-step simulation loop, ground-truth audit, metrics.
//! - [`scenario`]: scenario files and their validation.

pub mod arm;
pub mod barriers;
pub mod cancel;
pub mod collision;
pub mod geometry;
pub mod mission;
pub mod planner;
pub mod scenario;
pub mod sim;

pub use arm::{ArmDescription, ArmError, IkOptions, JointConfig};
pub use barriers::{Barrier, BarrierId, BarrierKind, BarrierRegistry, PersonState, WorldSnapshot};
pub use cancel::CancelToken;
pub use collision::{BarrierShape, CapsuleShape, ValidityReport};
pub use geometry::Pose;
pub use mission::{MissionState, MonitorAction, MonitorConfig, Phase, SubPathStatus};
pub use planner::{JointPath, PlanError, PlanRequest, PlannerConfig, Trajectory};
pub use scenario::ScenarioSpec;
pub use sim::{MetricsLog, Simulation};
