//! Convex subproblems and the conic solver backend.

mod program;
mod schedule;
mod surrogate;

pub use program::{
    solve, Affine, Block, ConeKind, ConicProgram, Solution, SolveStatus, SolverSettings, Var,
};
pub use schedule::{
    build_schedule_program, build_schedule_program_from_rates, solve_schedule, ScheduleProgram,
    ScheduleSolution,
};
pub use surrogate::{
    build_projection, build_trajectory_surrogate, EndCondition, Projection, StartCondition,
    SurrogateModel, SurrogateOptions, TrajectorySubproblem, WindowContext,
};

/// Size of the joint problem over `slots` slots and `nodes` nodes: waypoints,
/// velocities and accelerations (two components each), one schedule share per
/// node and slot, plus the max-min variable.
pub fn nominal_variable_count(slots: usize, nodes: usize) -> usize {
    (6 + nodes) * slots + 1
}
