//! Energy-efficient UAV trajectory and scheduling for uplink data collection.
//!
//! A fixed-wing UAV flies a closed loop of period `T` over ground nodes and
//! shares each time slot between them. The planner maximizes the common
//! (max-min) throughput per joule of propulsion energy, either over the
//! whole period at once or with a receding horizon of short windows.

pub mod bench;
pub mod comms;
pub mod convex;
pub mod energy;
pub mod error;
pub mod geom;
pub mod io;
pub mod kinematics;
pub mod planner;
pub mod scenario;

pub use comms::{Fading, Schedule};
pub use error::{Error, Result};
pub use geom::Vec2;
pub use kinematics::TrajectoryPlan;
pub use planner::{solve_conventional, solve_rho, Method, PlannerSettings, SolveReport};
pub use scenario::{RhoConfig, Scenario, ScenarioFile};
