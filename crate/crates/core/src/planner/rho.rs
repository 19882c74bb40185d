use std::time::Instant;

use log::{debug, info, warn};

use super::{bcd_solve, ConfigEcho, Method, PlannerSettings, SolveReport, Timing, WindowReport};
use crate::comms::{throughput, Schedule};
use crate::convex::{
    build_projection, solve, EndCondition, SolveStatus, StartCondition, WindowContext,
};
use crate::energy::plan_energy;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::kinematics::{
    check_feasibility, circular_init, close_terminal, resample, Grid, TrajectoryPlan, WindowLayout,
};
use crate::scenario::{RhoConfig, Scenario};

/// What window `k` inherits from windows `1..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    /// Committed bits per node.
    pub accumulated_bits: Vec<f64>,
    pub accumulated_energy_j: f64,
    /// Last committed knot `(q, v)`.
    pub next_start: Option<(Vec2, Vec2)>,
    /// First knot of window 1, where the loop must close.
    pub anchor: Option<(Vec2, Vec2)>,
    pub executed: Option<(TrajectoryPlan, Schedule)>,
}

impl WindowState {
    pub fn new(nodes: usize) -> Self {
        WindowState {
            accumulated_bits: vec![0.0; nodes],
            accumulated_energy_j: 0.0,
            next_start: None,
            anchor: None,
            executed: None,
        }
    }

    /// Boundary and carries for the next window: periodic before anything
    /// is committed, pinned at both ends afterwards.
    pub fn context(&self) -> WindowContext {
        let (start, end) = match (self.next_start, self.anchor) {
            (Some((q0, v0)), Some((qa, va))) => (
                StartCondition::Pinned { q: q0, v: v0 },
                EndCondition::Pinned { q: qa, v: va },
            ),
            _ => (StartCondition::Free, EndCondition::Periodic),
        };
        WindowContext {
            carry_bits: self.accumulated_bits.clone(),
            carry_energy_j: self.accumulated_energy_j,
            start,
            end,
        }
    }

    /// Executes the first `n` slots of a window solution.
    pub fn commit(
        &mut self,
        plan: &TrajectoryPlan,
        schedule: &Schedule,
        n: usize,
        scenario: &Scenario,
    ) -> Result<()> {
        let head = plan.prefix(n);
        let rows = schedule.prefix(n);
        let tp = throughput(&head, &rows, scenario, &self.accumulated_bits)?;
        let e = plan_energy(&head, &scenario.uav, self.accumulated_energy_j)?;
        self.accumulated_bits = tp.per_node_bits;
        self.accumulated_energy_j = e.total_j;
        if self.anchor.is_none() {
            self.anchor = Some(head.start());
        }
        self.next_start = Some(head.end());
        match &mut self.executed {
            None => self.executed = Some((head, rows)),
            Some((p, s)) => {
                p.extend(&head);
                s.rho.extend(rows.rho);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlanSolution {
    pub plan: TrajectoryPlan,
    pub schedule: Schedule,
    pub report: SolveReport,
}

/// One BCD solve over the uniform grid with a periodic boundary.
pub fn solve_conventional(
    scenario: &Scenario,
    delta1_m: f64,
    settings: &PlannerSettings,
) -> Result<PlanSolution> {
    let cfg = RhoConfig::full_horizon(scenario.period_s, delta1_m);
    run(scenario, &cfg, settings, Method::Conventional)
}

/// Receding-horizon solve: window after window, executing the first `Te`
/// seconds of each and carrying throughput, energy and position forward.
pub fn solve_rho(scenario: &Scenario, cfg: &RhoConfig, settings: &PlannerSettings) -> Result<PlanSolution> {
    run(scenario, cfg, settings, Method::Rho)
}

fn label(err: Error, k: usize) -> Error {
    match err {
        Error::Infeasible { block, window: None } => Error::Infeasible {
            block,
            window: Some(k),
        },
        e => e,
    }
}

/// Previous window's solution resampled onto `grid`, closed onto the anchor
/// and, when that breaks a limit, projected back onto the feasible set.
fn warm_start(
    previous: &TrajectoryPlan,
    grid: &Grid,
    ctx: &WindowContext,
    scenario: &Scenario,
    settings: &PlannerSettings,
) -> Result<(TrajectoryPlan, bool)> {
    let (StartCondition::Pinned { q: q0, v: v0 }, EndCondition::Pinned { q: qa, v: va }) =
        (ctx.start, ctx.end)
    else {
        unreachable!("warm starts only follow a committed window");
    };
    let raw = resample(previous, grid, q0, v0);
    let mut plan = raw.clone();
    close_terminal(&mut plan, qa, va);
    if check_feasibility(&plan, &scenario.uav, 0.0).passed() {
        return Ok((plan, false));
    }
    // project the unclosed resample: its velocities are the better guide
    let proj = build_projection(&raw, ctx, &scenario.uav);
    let sol = solve(&proj.program, &settings.solver);
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Infeasible {
            block: "warm_start",
            window: None,
        });
    }
    let fixed = proj.extract(&sol.x);
    if !check_feasibility(&fixed, &scenario.uav, settings.feasibility_tol).passed() {
        return Err(Error::Infeasible {
            block: "warm_start",
            window: None,
        });
    }
    Ok((fixed, true))
}

fn run(scenario: &Scenario, cfg: &RhoConfig, settings: &PlannerSettings, method: Method) -> Result<PlanSolution> {
    scenario.validate()?;
    cfg.validate(scenario.period_s)?;
    let clock = Instant::now();
    let uav = &scenario.uav;
    let layout = WindowLayout::new(scenario.period_s, cfg, uav.v_max);
    let windows = layout.window_count();
    info!("{method}: {windows} window(s), {} fine slots", layout.total_fine);

    let mut state = WindowState::new(scenario.num_nodes());
    let mut timing = Timing::default();
    let mut reports = Vec::with_capacity(windows);
    let mut previous: Option<TrajectoryPlan> = None;
    let mut init_ee = f64::NAN;
    for k in 1..=windows {
        let t_window = Instant::now();
        let grid = layout.grid(k)?;
        let ctx = state.context();
        let t_init = Instant::now();
        let (init, projected) = match &previous {
            None => (circular_init(scenario, &grid)?, false),
            Some(prev) => warm_start(prev, &grid, &ctx, scenario, settings).map_err(|e| label(e, k))?,
        };
        timing.init_s += t_init.elapsed().as_secs_f64();
        let out = bcd_solve(&init, &ctx, scenario, settings).map_err(|e| label(e, k))?;
        if k == 1 {
            init_ee = out.trace[0];
        }
        let n_e = layout.committed(k);
        state.commit(&out.plan, &out.schedule, n_e, scenario)?;
        let (n1, n2) = layout.slot_counts(k);
        debug!(
            "window {k}/{windows}: n1={n1} n2={n2} rounds={} ee={:.6e}",
            out.iters, out.eval.ee
        );
        reports.push(WindowReport {
            k,
            n1,
            n2,
            iters: out.iters,
            solves: out.solves,
            ipm_iters: out.ipm_iters,
            ee_trace: out.trace,
            committed_slots: n_e,
            projected,
        });
        timing.schedule_s += out.schedule_s;
        timing.trajectory_s += out.trajectory_s;
        timing.windows_s.push(t_window.elapsed().as_secs_f64());
        previous = Some(out.plan);
    }

    let (plan, schedule) = state.executed.take().expect("at least one window");
    // recompute from scratch rather than trusting the carried totals
    let tp = throughput(&plan, &schedule, scenario, &vec![0.0; scenario.num_nodes()])?;
    let energy = plan_energy(&plan, uav, 0.0)?;
    let ee = tp.min_bits / energy.total_j;
    let carried = state.accumulated_bits.iter().copied().fold(f64::INFINITY, f64::min)
        / state.accumulated_energy_j;
    if (carried - ee).abs() > 1e-9 * ee.abs() {
        warn!("carried EE {carried:.12e} differs from recomputed {ee:.12e}");
    }
    let report = check_feasibility(&plan, uav, settings.feasibility_tol);
    if !report.passed() {
        warn!("stitched plan violates limits: {:?}", report.violations.first());
    }
    timing.total_s = clock.elapsed().as_secs_f64();
    info!("{method}: ee {ee:.6e} bits/J in {:.2} s", timing.total_s);

    Ok(PlanSolution {
        report: SolveReport {
            method,
            ee_bpj: ee,
            min_bits: tp.min_bits,
            per_node_bits: tp.per_node_bits,
            energy,
            init_ee_bpj: init_ee,
            windows: reports,
            config_echo: ConfigEcho {
                period_s: scenario.period_s,
                delta1_m: cfg.delta1_m,
                delta2_m: cfg.delta2_m,
                execute_s: cfg.execute_s,
                window_s: cfg.window_s,
                settings: *settings,
            },
            timing,
        },
        plan,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;

    fn desk() -> Scenario {
        reference_scenario(
            vec![Vec2::new(-250.0, 150.0), Vec2::new(300.0, -100.0), Vec2::new(50.0, 300.0)],
            120.0,
        )
    }

    #[test]
    fn conventional_is_one_periodic_window() {
        let s = desk();
        let sol = solve_conventional(&s, 30.0, &PlannerSettings::default()).unwrap();
        assert_eq!(sol.report.windows.len(), 1);
        assert_eq!(sol.plan.len(), 120);
        assert!(sol.report.ee_bpj > sol.report.init_ee_bpj);
        assert!(sol.plan.max_dynamics_residual() <= 1e-9);
        let (q0, v0) = sol.plan.start();
        let (q1, v1) = sol.plan.end();
        assert!((q1 - q0).norm() < 1e-9 && (v1 - v0).norm() < 1e-9);
    }

    #[test]
    fn rho_commits_and_closes() {
        let s = desk();
        let cfg = RhoConfig {
            delta1_m: 30.0,
            delta2_m: 120.0,
            window_s: 60.0,
            execute_s: 30.0,
        };
        let sol = solve_rho(&s, &cfg, &PlannerSettings::default()).unwrap();
        // K = ⌈(120 − 60)/30⌉ + 1
        assert_eq!(sol.report.windows.len(), 3);
        let committed: Vec<usize> = sol.report.windows.iter().map(|w| w.committed_slots).collect();
        assert_eq!(committed, vec![30, 30, 60]);
        assert_eq!(sol.plan.len(), 120);
        assert_eq!(sol.schedule.slots(), 120);
        assert!(check_feasibility(&sol.plan, &s.uav, 1e-6).passed());
        let (q0, v0) = sol.plan.start();
        let (q1, v1) = sol.plan.end();
        assert!((q1 - q0).norm() <= 30.0);
        assert!((v1 - v0).norm() <= 1e-6 * s.uav.v_max);
    }

    #[test]
    fn commit_accounting() {
        let s = desk();
        let g = Grid::new(0.0, 10, 1.0, 0, 1.0);
        let plan = crate::kinematics::propagate(
            Vec2::ZERO,
            Vec2::new(20.0, 0.0),
            &[Vec2::ZERO; 10],
            &g,
        )
        .unwrap();
        let sched = Schedule::uniform(10, 3);
        let mut st = WindowState::new(3);
        st.commit(&plan, &sched, 4, &s).unwrap();
        let first = st.accumulated_bits.clone();
        let ctx = st.context();
        assert!(matches!(ctx.start, StartCondition::Pinned { .. }));
        assert_eq!(st.next_start.unwrap().0, plan.q[4]);
        assert_eq!(st.anchor.unwrap().0, plan.q[0]);
        let tail = TrajectoryPlan {
            q: plan.q[4..].to_vec(),
            v: plan.v[4..].to_vec(),
            a: plan.a[4..].to_vec(),
            grid: Grid::new(4.0, 6, 1.0, 0, 1.0),
        };
        st.commit(&tail, &Schedule::uniform(6, 3), 3, &s).unwrap();
        let expect = throughput(&tail.prefix(3), &Schedule::uniform(3, 3), &s, &[0.0; 3]).unwrap();
        for l in 0..3 {
            let d = st.accumulated_bits[l] - first[l];
            assert!((d - expect.per_node_bits[l]).abs() <= 1e-9 * d);
        }
        let (p, sch) = st.executed.as_ref().unwrap();
        assert_eq!(p.len(), 7);
        assert_eq!(sch.slots(), 7);
        assert!(st.accumulated_energy_j > 0.0);
    }
}
