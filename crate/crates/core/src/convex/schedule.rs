//! Max-min time-allocation LP for a fixed trajectory.

use std::ops::Range;

use super::program::{Affine, ConicProgram, SolverSettings, Var};
use super::{nominal_variable_count, solve, SolveStatus};
use crate::comms::{rate_table, Schedule};
use crate::error::{Error, Result};
use crate::kinematics::TrajectoryPlan;
use crate::scenario::Scenario;

#[derive(Debug, Clone)]
pub struct ScheduleProgram {
    pub program: ConicProgram,
    eta: Var,
    rho: Range<usize>,
    slots: usize,
    nodes: usize,
    /// Bits per unit of the scaled `eta` variable.
    bits_scale: f64,
    pub nominal_variables: usize,
}

impl ScheduleProgram {
    fn rho_var(&self, n: usize, l: usize) -> Var {
        Var(self.rho.start + n * self.nodes + l)
    }
}

/// Builds `max η s.t. carry_l + Σ_n dt_n ρ_l[n] R_l[n] ≥ η, Σ_l ρ_l[n] ≤ 1, ρ ≥ 0`
/// from the full-slot rate table `rates[n][l]`.
pub fn build_schedule_program_from_rates(
    rates: &[Vec<f64>],
    durations: &[f64],
    carry: &[f64],
) -> ScheduleProgram {
    let slots = rates.len();
    let nodes = carry.len();
    let totals: Vec<f64> = (0..nodes)
        .map(|l| carry[l] + (0..slots).map(|n| durations[n] * rates[n][l]).sum::<f64>())
        .collect();
    let bits_scale = totals.iter().copied().fold(0.0, f64::max).max(1.0);

    let mut p = ConicProgram::new();
    let eta = p.add_var("eta");
    let rho = p.add_vars("rho", slots * nodes);
    p.objective[eta.0] = -1.0;
    let sp = ScheduleProgram {
        program: ConicProgram::default(),
        eta,
        rho: rho.clone(),
        slots,
        nodes,
        bits_scale,
        nominal_variables: nominal_variable_count(slots, nodes),
    };
    for l in 0..nodes {
        let mut row = Affine::constant(carry[l] / bits_scale).plus(eta, -1.0);
        for n in 0..slots {
            let c = durations[n] * rates[n][l] / bits_scale;
            if c != 0.0 {
                row = row.plus(sp.rho_var(n, l), c);
            }
        }
        p.nonneg("throughput", row);
    }
    for n in 0..slots {
        let mut row = Affine::constant(1.0);
        for l in 0..nodes {
            row = row.plus(sp.rho_var(n, l), -1.0);
        }
        p.nonneg("simplex", row);
    }
    for j in rho {
        p.nonneg("rho>=0", Affine::var(Var(j)));
    }
    p.normalize_rows();
    ScheduleProgram { program: p, ..sp }
}

pub fn build_schedule_program(plan: &TrajectoryPlan, scenario: &Scenario, carry: &[f64]) -> ScheduleProgram {
    let rates = rate_table(plan, scenario);
    let durations: Vec<f64> = plan.grid.durations().collect();
    build_schedule_program_from_rates(&rates, &durations, carry)
}

#[derive(Debug, Clone)]
pub struct ScheduleSolution {
    pub schedule: Schedule,
    /// Optimal max-min throughput in bits.
    pub eta_bits: f64,
    pub status: SolveStatus,
    pub iterations: u32,
}

pub fn solve_schedule(sp: &ScheduleProgram, settings: &SolverSettings) -> Result<ScheduleSolution> {
    let sol = solve(&sp.program, settings);
    if sol.status != SolveStatus::Optimal {
        return Err(match sol.status {
            SolveStatus::Infeasible => Error::Infeasible {
                block: "schedule",
                window: None,
            },
            s => Error::Solver {
                block: "schedule",
                status: s.to_string(),
            },
        });
    }
    let mut schedule = Schedule {
        rho: (0..sp.slots)
            .map(|n| (0..sp.nodes).map(|l| sol.x[sp.rho_var(n, l).0]).collect())
            .collect(),
    };
    schedule.clamp_to_simplex();
    Ok(ScheduleSolution {
        schedule,
        eta_bits: sol.x[sp.eta.0] * sp.bits_scale,
        status: sol.status,
        iterations: sol.iterations,
    })
}
