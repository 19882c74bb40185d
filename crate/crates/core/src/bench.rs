//! Wall-clock comparison of the two solvers over a list of periods.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::planner::{solve_conventional, solve_rho, Method, PlannerSettings};
use crate::scenario::{RhoConfig, Scenario};

pub const BENCH_HEADER: [&str; 8] = [
    "t_s", "method", "te_s", "window_s", "wall_s", "ee_bpj", "iters", "status",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub t_s: f64,
    pub method: Method,
    pub te_s: f64,
    pub window_s: f64,
    pub wall_s: f64,
    /// NaN when the cell failed.
    pub ee_bpj: f64,
    pub iters: usize,
    /// `ok` or the error code of a failed cell.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub periods: Vec<f64>,
    pub methods: Vec<Method>,
    /// Window settings for RHO cells; conventional cells use `delta1_m` only.
    pub rho: RhoConfig,
    pub reps: usize,
    pub settings: PlannerSettings,
}

/// Runs every (period, method, repetition) cell in order, one at a time so
/// that timings do not compete for cores. A failing cell is recorded and the
/// run continues.
pub fn run_bench(template: &Scenario, plan: &BenchPlan) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &t in &plan.periods {
        let scenario = Scenario {
            period_s: t,
            ..template.clone()
        };
        for &method in &plan.methods {
            for _ in 0..plan.reps {
                let (te, window) = match method {
                    Method::Conventional => (t, t),
                    Method::Rho => (plan.rho.execute_s, plan.rho.window_s),
                };
                let clock = std::time::Instant::now();
                let result = match method {
                    Method::Conventional => solve_conventional(&scenario, plan.rho.delta1_m, &plan.settings),
                    Method::Rho => solve_rho(&scenario, &plan.rho, &plan.settings),
                };
                let wall = clock.elapsed().as_secs_f64();
                let row = match result {
                    Ok(sol) => BenchRow {
                        t_s: t,
                        method,
                        te_s: te,
                        window_s: window,
                        wall_s: sol.report.timing.total_s,
                        ee_bpj: sol.report.ee_bpj,
                        iters: sol.report.iterations(),
                        status: "ok".into(),
                    },
                    Err(e) => {
                        log::warn!("bench cell T={t} {method} failed: {e}");
                        BenchRow {
                            t_s: t,
                            method,
                            te_s: te,
                            window_s: window,
                            wall_s: wall,
                            ee_bpj: f64::NAN,
                            iters: 0,
                            status: e.code().into(),
                        }
                    }
                };
                rows.push(row);
            }
        }
    }
    rows
}

pub fn write_bench_csv_to<W: Write>(rows: &[BenchRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        let ee = if r.ee_bpj.is_finite() {
            r.ee_bpj.to_string()
        } else {
            String::new()
        };
        w.write_record([
            r.t_s.to_string(),
            r.method.to_string(),
            r.te_s.to_string(),
            r.window_s.to_string(),
            r.wall_s.to_string(),
            ee,
            r.iters.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()
}

pub fn write_bench_csv(path: impl AsRef<Path>, rows: &[BenchRow]) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    write_bench_csv_to(rows, std::io::BufWriter::new(f))?;
    Ok(())
}
