//! Block-coordinate ascent over schedule and trajectory, and the two drivers
//! built on it: a single full-period solve and the receding-horizon solve.

mod bcd;
mod rho;

use serde::{Deserialize, Serialize};

pub use bcd::{bcd_solve, evaluate_window, BcdOutcome, WindowEval};
pub use rho::{solve_conventional, solve_rho, PlanSolution, WindowState};

use crate::convex::SolverSettings;
use crate::energy::EnergyBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSettings {
    /// Stop when an outer round improves EE by less than this fraction.
    pub bcd_tol: f64,
    pub max_outer: usize,
    /// SCA/Dinkelbach steps per trajectory block.
    pub max_inner: usize,
    /// Dinkelbach stop: `η − λẼ < dinkelbach_tol · λẼ`.
    pub dinkelbach_tol: f64,
    /// Initial trust radius in multiples of `Δ1`.
    pub trust_factor: f64,
    /// Give up shrinking below this many multiples of `Δ1`.
    pub min_trust_factor: f64,
    /// Relative tolerance for accepting a plan as feasible.
    pub feasibility_tol: f64,
    pub solver: SolverSettings,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        PlannerSettings {
            bcd_tol: 1e-4,
            max_outer: 30,
            max_inner: 3,
            dinkelbach_tol: 1e-6,
            trust_factor: 10.0,
            min_trust_factor: 1e-3,
            feasibility_tol: 1e-6,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Conventional,
    Rho,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Conventional => "conventional",
            Method::Rho => "rho",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub k: usize,
    pub n1: usize,
    pub n2: usize,
    /// Outer BCD rounds.
    pub iters: usize,
    /// Conic solves (schedule and trajectory).
    pub solves: usize,
    /// Interior-point iterations summed over all solves.
    pub ipm_iters: usize,
    /// Window EE after the initial schedule step and after every round.
    pub ee_trace: Vec<f64>,
    pub committed_slots: usize,
    /// Warm start needed the projection step.
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    pub init_s: f64,
    pub schedule_s: f64,
    pub trajectory_s: f64,
    pub windows_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub period_s: f64,
    pub delta1_m: f64,
    pub delta2_m: f64,
    pub execute_s: f64,
    pub window_s: f64,
    pub settings: PlannerSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub ee_bpj: f64,
    pub min_bits: f64,
    pub per_node_bits: Vec<f64>,
    pub energy: EnergyBreakdown,
    /// EE of the circular start with its optimal schedule.
    pub init_ee_bpj: f64,
    pub windows: Vec<WindowReport>,
    pub config_echo: ConfigEcho,
    /// Wall-clock measurements; the only non-deterministic fields.
    pub timing: Timing,
}

impl SolveReport {
    /// Total outer rounds over all windows.
    pub fn iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iters).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with `timing` removed, for reproducibility comparisons.
    pub fn to_json_without_timing(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timing");
        }
        serde_json::to_string_pretty(&value).expect("report serializes")
    }
}
