use std::time::Instant;

use log::{debug, trace};

use super::PlannerSettings;
use crate::comms::{throughput, Schedule};
use crate::convex::{
    build_schedule_program, build_trajectory_surrogate, solve, solve_schedule, SolveStatus,
    SurrogateOptions, WindowContext,
};
use crate::energy::plan_energy;
use crate::error::Result;
use crate::kinematics::{check_feasibility, TrajectoryPlan};
use crate::scenario::Scenario;

/// True (not surrogate) value of a window plan, carries included.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEval {
    pub ee: f64,
    pub min_bits: f64,
    pub per_node_bits: Vec<f64>,
    pub energy_j: f64,
}

pub fn evaluate_window(
    plan: &TrajectoryPlan,
    schedule: &Schedule,
    ctx: &WindowContext,
    scenario: &Scenario,
) -> Result<WindowEval> {
    let tp = throughput(plan, schedule, scenario, &ctx.carry_bits)?;
    let e = plan_energy(plan, &scenario.uav, ctx.carry_energy_j)?;
    Ok(WindowEval {
        ee: tp.min_bits / e.total_j,
        min_bits: tp.min_bits,
        per_node_bits: tp.per_node_bits,
        energy_j: e.total_j,
    })
}

#[derive(Debug, Clone)]
pub struct BcdOutcome {
    pub plan: TrajectoryPlan,
    pub schedule: Schedule,
    pub eval: WindowEval,
    /// EE after the first schedule step, then after every outer round.
    pub trace: Vec<f64>,
    pub iters: usize,
    pub solves: usize,
    pub ipm_iters: usize,
    pub schedule_s: f64,
    pub trajectory_s: f64,
}

#[derive(Debug, Default)]
struct Stats {
    solves: usize,
    ipm_iters: usize,
    schedule_s: f64,
    trajectory_s: f64,
}

fn schedule_step(
    plan: &TrajectoryPlan,
    ctx: &WindowContext,
    scenario: &Scenario,
    settings: &PlannerSettings,
    stats: &mut Stats,
) -> Result<Schedule> {
    let t = Instant::now();
    let sp = build_schedule_program(plan, scenario, &ctx.carry_bits);
    let sol = solve_schedule(&sp, &settings.solver);
    stats.schedule_s += t.elapsed().as_secs_f64();
    stats.solves += 1;
    let sol = sol?;
    stats.ipm_iters += sol.iterations as usize;
    Ok(sol.schedule)
}

/// Dinkelbach loop over SCA surrogates with the schedule fixed. Only steps
/// that keep the plan feasible and do not lower the true EE are accepted;
/// anything else halves the trust radius.
#[allow(clippy::too_many_arguments)]
fn trajectory_block(
    plan: &TrajectoryPlan,
    schedule: &Schedule,
    current: &WindowEval,
    ctx: &WindowContext,
    scenario: &Scenario,
    settings: &PlannerSettings,
    trust: &mut f64,
    trust_bounds: (f64, f64),
    stats: &mut Stats,
) -> Result<(TrajectoryPlan, WindowEval)> {
    let t = Instant::now();
    let mut best_plan = plan.clone();
    let mut best = current.clone();
    let (min_trust, max_trust) = trust_bounds;
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < settings.max_inner && attempts < 4 * settings.max_inner {
        attempts += 1;
        let opts = SurrogateOptions {
            lambda: best.ee,
            trust_radius_m: *trust,
        };
        let sub = build_trajectory_surrogate(&best_plan, schedule, ctx, scenario, &opts)?;
        let sol = solve(&sub.program, &settings.solver);
        stats.solves += 1;
        stats.ipm_iters += sol.iterations as usize;
        if sol.status != SolveStatus::Optimal {
            debug!("trajectory surrogate {} at radius {:.3e} m", sol.status, *trust);
            *trust *= 0.5;
            if *trust < min_trust {
                break;
            }
            continue;
        }
        let gap = sub.gap_bits(sol.objective);
        let converged = gap <= settings.dinkelbach_tol * best.min_bits;
        let cand = sub.extract(&sol.x);
        let feasible = check_feasibility(&cand, &scenario.uav, settings.feasibility_tol).passed();
        let eval = if feasible {
            evaluate_window(&cand, schedule, ctx, scenario).ok()
        } else {
            None
        };
        match eval {
            Some(e) if e.ee >= best.ee => {
                trace!("accepted step: ee {:.6e} -> {:.6e}, gap {:.3e} bits", best.ee, e.ee, gap);
                best_plan = cand;
                best = e;
                accepted += 1;
                *trust = (*trust * 2.0).min(max_trust);
                if converged {
                    break;
                }
            }
            _ => {
                trace!("rejected step at radius {:.3e} m (feasible: {feasible})", *trust);
                *trust *= 0.5;
                if converged || *trust < min_trust {
                    break;
                }
            }
        }
    }
    stats.trajectory_s += t.elapsed().as_secs_f64();
    Ok((best_plan, best))
}

/// Alternates the schedule LP and the trajectory block from `init` until the
/// relative EE gain of a round drops below `bcd_tol` or `max_outer` rounds
/// have run. The returned trace never decreases.
pub fn bcd_solve(
    init: &TrajectoryPlan,
    ctx: &WindowContext,
    scenario: &Scenario,
    settings: &PlannerSettings,
) -> Result<BcdOutcome> {
    let mut stats = Stats::default();
    let delta1 = init.grid.fine_duration() * scenario.uav.v_max;
    let max_trust = settings.trust_factor * delta1;
    let min_trust = settings.min_trust_factor * delta1;
    let mut trust = max_trust;

    let mut plan = init.clone();
    let mut schedule = schedule_step(&plan, ctx, scenario, settings, &mut stats)?;
    let mut eval = evaluate_window(&plan, &schedule, ctx, scenario)?;
    let mut trace = vec![eval.ee];
    let mut iters = 0;
    for round in 1..=settings.max_outer {
        iters = round;
        let before = eval.ee;
        let (p, e) = trajectory_block(
            &plan,
            &schedule,
            &eval,
            ctx,
            scenario,
            settings,
            &mut trust,
            (min_trust, max_trust),
            &mut stats,
        )?;
        plan = p;
        eval = e;
        let next = schedule_step(&plan, ctx, scenario, settings, &mut stats)?;
        let e = evaluate_window(&plan, &next, ctx, scenario)?;
        if e.ee >= eval.ee {
            schedule = next;
            eval = e;
        }
        trace.push(eval.ee);
        debug!("round {round}: ee {:.6e} bits/J, radius {:.3e} m", eval.ee, trust);
        if eval.ee - before < settings.bcd_tol * before.abs() {
            break;
        }
    }
    Ok(BcdOutcome {
        plan,
        schedule,
        eval,
        trace,
        iters,
        solves: stats.solves,
        ipm_iters: stats.ipm_iters,
        schedule_s: stats.schedule_s,
        trajectory_s: stats.trajectory_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::kinematics::{build_uniform_grid, circular_init};
    use crate::scenario::reference_scenario;

    #[test]
    fn trace_is_monotone_and_improves_on_the_circle() {
        let s = reference_scenario(
            vec![Vec2::new(-250.0, 150.0), Vec2::new(300.0, -100.0), Vec2::new(50.0, 300.0)],
            120.0,
        );
        let g = build_uniform_grid(120.0, 30.0, 30.0);
        let init = circular_init(&s, &g).unwrap();
        let ctx = WindowContext::periodic(3);
        let out = bcd_solve(&init, &ctx, &s, &PlannerSettings::default()).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs());
        }
        assert!(out.eval.ee > out.trace[0]);
        assert!(check_feasibility(&out.plan, &s.uav, 1e-6).passed());
        let (dq, dv) = ctx.boundary_error(&out.plan);
        assert!(dq < 1e-9 && dv < 1e-9);
    }

    #[test]
    fn symmetric_pair_gets_equal_throughput() {
        let s = reference_scenario(vec![Vec2::new(-300.0, 0.0), Vec2::new(300.0, 0.0)], 120.0);
        let g = build_uniform_grid(120.0, 30.0, 30.0);
        let init = circular_init(&s, &g).unwrap();
        let out = bcd_solve(&init, &WindowContext::periodic(2), &s, &PlannerSettings::default()).unwrap();
        let b = &out.eval.per_node_bits;
        assert!((b[0] - b[1]).abs() <= 0.01 * b[0].max(b[1]), "{b:?}");
    }

    #[test]
    fn single_node_is_approached() {
        let w = Vec2::new(400.0, 0.0);
        let mut s = reference_scenario(vec![w], 300.0);
        s.nodes[0].position = w;
        let g = build_uniform_grid(300.0, 30.0, 30.0);
        let init = circular_init(&s, &g).unwrap();
        let out = bcd_solve(&init, &WindowContext::periodic(1), &s, &PlannerSettings::default()).unwrap();
        let closest = |p: &TrajectoryPlan| p.q.iter().map(|q| (*q - w).norm()).fold(f64::INFINITY, f64::min);
        assert!(closest(&out.plan) <= closest(&init));
    }
}
