//! Python bindings: scenarios, the two solvers, plan checks and the power,
//! throughput and Monte-Carlo evaluators.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use rhotraj_core::comms::{monte_carlo_throughput, throughput};
use rhotraj_core::energy::{instantaneous_power, plan_energy};
use rhotraj_core::io::{read_schedule_from, read_trajectory_from, write_schedule_to, write_trajectory_to};
use rhotraj_core::kinematics::check_feasibility;
use rhotraj_core::scenario::{load_scenario, reference_scenario};
use rhotraj_core::{
    Error, Fading, PlannerSettings, RhoConfig, Schedule as CoreSchedule, ScenarioFile, TrajectoryPlan, Vec2,
};

create_exception!(rhotraj, RhoTrajError, PyException, "Planner failure; args are (code, message).");

fn to_py(err: Error) -> PyErr {
    RhoTrajError::new_err((err.code(), err.to_string()))
}

/// Nodes, channel, airframe and period, plus an optional receding-horizon section.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: ScenarioFile,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_scenario(path).map(|inner| PyScenario { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ScenarioFile::from_json_str(text, Path::new("<string>"))
            .map(|inner| PyScenario { inner })
            .map_err(to_py)
    }

    /// Default airframe and channel with nodes at `positions`.
    #[staticmethod]
    fn reference(positions: Vec<(f64, f64)>, period_s: f64) -> PyResult<Self> {
        let nodes = positions.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
        let inner = ScenarioFile {
            scenario: reference_scenario(nodes, period_s),
            rho: None,
        };
        inner.validate().map_err(to_py)?;
        Ok(PyScenario { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    #[getter]
    fn period_s(&self) -> f64 {
        self.inner.scenario.period_s
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.scenario.num_nodes()
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.scenario.nodes.iter().map(|n| (n.position.x, n.position.y)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(nodes={}, period_s={})",
            self.inner.scenario.num_nodes(),
            self.inner.scenario.period_s
        )
    }
}

/// A trajectory with its per-slot time shares.
#[pyclass(name = "Plan", from_py_object)]
#[derive(Clone)]
struct PyPlan {
    plan: TrajectoryPlan,
    schedule: CoreSchedule,
}

fn pairs(v: &[Vec2]) -> Vec<(f64, f64)> {
    v.iter().map(|p| (p.x, p.y)).collect()
}

#[pymethods]
impl PyPlan {
    /// Reads the CSV text written by `trajectory_csv` / `schedule_csv`.
    #[staticmethod]
    fn from_csv(trajectory: &str, schedule: &str) -> PyResult<Self> {
        let plan = read_trajectory_from(trajectory.as_bytes(), Path::new("<trajectory>")).map_err(to_py)?;
        let schedule = read_schedule_from(schedule.as_bytes(), Path::new("<schedule>")).map_err(to_py)?;
        Ok(PyPlan { plan, schedule })
    }

    #[getter]
    fn slots(&self) -> usize {
        self.plan.len()
    }

    /// Knot positions, `slots + 1` pairs.
    #[getter]
    fn q(&self) -> Vec<(f64, f64)> {
        pairs(&self.plan.q)
    }

    #[getter]
    fn v(&self) -> Vec<(f64, f64)> {
        pairs(&self.plan.v)
    }

    #[getter]
    fn a(&self) -> Vec<(f64, f64)> {
        pairs(&self.plan.a)
    }

    #[getter]
    fn dt(&self) -> Vec<f64> {
        self.plan.grid.durations().collect()
    }

    #[getter]
    fn rho(&self) -> Vec<Vec<f64>> {
        self.schedule.rho.clone()
    }

    fn trajectory_csv(&self) -> String {
        let mut buf = Vec::new();
        write_trajectory_to(&self.plan, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }

    fn schedule_csv(&self) -> String {
        let mut buf = Vec::new();
        write_schedule_to(&self.schedule, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }

    /// Limit violations as `(slot, kind, value, limit)`; empty when feasible.
    #[pyo3(signature = (scenario, tol = 1e-6))]
    fn violations(&self, scenario: &PyScenario, tol: f64) -> Vec<(usize, String, f64, f64)> {
        check_feasibility(&self.plan, &scenario.inner.scenario.uav, tol)
            .violations
            .iter()
            .map(|v| (v.index, format!("{:?}", v.kind), v.value, v.limit))
            .collect()
    }

    /// Per-node bits over the plan.
    fn throughput(&self, scenario: &PyScenario) -> PyResult<Vec<f64>> {
        let s = &scenario.inner.scenario;
        throughput(&self.plan, &self.schedule, s, &vec![0.0; s.num_nodes()])
            .map(|t| t.per_node_bits)
            .map_err(to_py)
    }

    fn energy_j(&self, scenario: &PyScenario) -> PyResult<f64> {
        plan_energy(&self.plan, &scenario.inner.scenario.uav, 0.0)
            .map(|e| e.total_j)
            .map_err(to_py)
    }

    /// Min-over-nodes bits per joule.
    fn ee(&self, scenario: &PyScenario) -> PyResult<f64> {
        let bits = self.throughput(scenario)?;
        let min = bits.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(min / self.energy_j(scenario)?)
    }

    /// Empirical mean and standard error of per-node bits under fading
    /// (`"none"`, `"rayleigh"` or `"rician:K"`).
    #[pyo3(signature = (scenario, fading = "rayleigh", samples = 10_000, seed = 0))]
    fn monte_carlo(
        &self,
        scenario: &PyScenario,
        fading: &str,
        samples: usize,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let f = parse_fading(fading)?;
        let r = monte_carlo_throughput(&self.plan, &self.schedule, &scenario.inner.scenario, f, samples, seed)
            .map_err(to_py)?;
        Ok((r.mean_bits, r.stderr_bits))
    }

    fn __repr__(&self) -> String {
        format!("Plan(slots={}, nodes={})", self.plan.len(), self.schedule.nodes())
    }
}

fn parse_fading(s: &str) -> PyResult<Fading> {
    match s {
        "none" => Ok(Fading::None),
        "rayleigh" => Ok(Fading::Rayleigh),
        _ => s
            .strip_prefix("rician:")
            .and_then(|k| k.parse::<f64>().ok())
            .map(|k| Fading::Rician { k })
            .ok_or_else(|| PyValueError::new_err(format!("unknown fading `{s}`"))),
    }
}

/// Full-period solve. Returns the plan and the report as JSON text.
#[pyfunction]
#[pyo3(signature = (scenario, delta1_m = 30.0))]
fn solve_conventional(py: Python<'_>, scenario: &PyScenario, delta1_m: f64) -> PyResult<(PyPlan, String)> {
    let s = scenario.inner.scenario.clone();
    let sol = py
        .detach(move || rhotraj_core::solve_conventional(&s, delta1_m, &PlannerSettings::default()))
        .map_err(to_py)?;
    Ok((
        PyPlan {
            plan: sol.plan,
            schedule: sol.schedule,
        },
        sol.report.to_json(),
    ))
}

/// Receding-horizon solve. Returns the plan and the report as JSON text.
#[pyfunction]
#[pyo3(signature = (scenario, delta1_m, delta2_m, window_s, execute_s))]
fn solve_rho(
    py: Python<'_>,
    scenario: &PyScenario,
    delta1_m: f64,
    delta2_m: f64,
    window_s: f64,
    execute_s: f64,
) -> PyResult<(PyPlan, String)> {
    let s = scenario.inner.scenario.clone();
    let cfg = RhoConfig {
        delta1_m,
        delta2_m,
        window_s,
        execute_s,
    };
    let sol = py
        .detach(move || rhotraj_core::solve_rho(&s, &cfg, &PlannerSettings::default()))
        .map_err(to_py)?;
    Ok((
        PyPlan {
            plan: sol.plan,
            schedule: sol.schedule,
        },
        sol.report.to_json(),
    ))
}

/// Propulsion power in watts at velocity `v` and acceleration `a`.
#[pyfunction]
fn power(scenario: &PyScenario, v: (f64, f64), a: (f64, f64)) -> PyResult<f64> {
    instantaneous_power(Vec2::new(v.0, v.1), Vec2::new(a.0, a.1), &scenario.inner.scenario.uav).map_err(to_py)
}

#[pymodule]
fn rhotraj(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(solve_conventional, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rho, m)?)?;
    m.add_function(wrap_pyfunction!(power, m)?)?;
    m.add("RhoTrajError", m.py().get_type::<RhoTrajError>())?;
    Ok(())
}
