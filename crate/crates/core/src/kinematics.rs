//! Time grids, discrete double-integrator dynamics, feasibility checks and
//! the circular initial trajectory.
//!
//! A plan over a grid of `N` slots stores `N + 1` knots for position and
//! velocity (the state at the start of every slot plus the terminal state)
//! and `N` accelerations, one per slot. Slot `n` advances the state with its
//! own duration `dt_n`:
//!
//! ```text
//! v[n+1] = v[n] + a[n] dt_n
//! q[n+1] = q[n] + v[n] dt_n + a[n] dt_n² / 2
//! ```

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scenario::{RhoConfig, Scenario, UavParams};

/// Relative slack used when turning real-valued slot counts into integers.
const COUNT_EPS: f64 = 1e-9;

/// Default relative tolerance on the discrete dynamics residual.
pub const DYNAMICS_TOL: f64 = 1e-9;

pub(crate) fn ceil_count(x: f64) -> usize {
    let c = (x - COUNT_EPS * x.abs().max(1.0)).ceil();
    c.max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub start_s: f64,
    pub duration_s: f64,
    pub coarse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    slots: Vec<Slot>,
    n_fine: usize,
    n_coarse: usize,
    fine_s: f64,
    coarse_s: f64,
}

impl Grid {
    /// `n_fine` slots of `fine_s` followed by `n_coarse` slots of `coarse_s`,
    /// starting at `start_s`.
    pub fn new(start_s: f64, n_fine: usize, fine_s: f64, n_coarse: usize, coarse_s: f64) -> Self {
        let mut slots = Vec::with_capacity(n_fine + n_coarse);
        for i in 0..n_fine {
            slots.push(Slot {
                start_s: start_s + i as f64 * fine_s,
                duration_s: fine_s,
                coarse: false,
            });
        }
        let coarse_start = start_s + n_fine as f64 * fine_s;
        for i in 0..n_coarse {
            slots.push(Slot {
                start_s: coarse_start + i as f64 * coarse_s,
                duration_s: coarse_s,
                coarse: true,
            });
        }
        Grid {
            slots,
            n_fine,
            n_coarse,
            fine_s,
            coarse_s,
        }
    }

    /// Rebuilds a grid from per-slot durations, e.g. a trajectory file.
    /// The longer duration class (if two are present) is the coarse one.
    pub fn from_durations(start_s: f64, durations: &[f64]) -> Result<Self> {
        let Some(&fine_s) = durations.first() else {
            return Ok(Grid::new(start_s, 0, 1.0, 0, 1.0));
        };
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        let n_fine = durations.iter().take_while(|&&d| same(d, fine_s)).count();
        let rest = &durations[n_fine..];
        if durations.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("dt_s", "slot durations must be positive"));
        }
        let coarse_s = rest.first().copied().unwrap_or(fine_s);
        // the final coarse slot may be cut short
        let (body, last) = match rest.split_last() {
            Some((&last, body)) if !body.is_empty() && last < coarse_s => (body, Some(last)),
            _ => (rest, None),
        };
        if body.iter().any(|&d| !same(d, coarse_s)) {
            return Err(Error::Dimension(
                "slot durations must be a fine run followed by a coarse run".into(),
            ));
        }
        let grid = Grid::new(start_s, n_fine, fine_s, rest.len(), coarse_s);
        Ok(match last {
            Some(d) => grid.with_last_duration(d),
            None => grid,
        })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn fine_duration(&self) -> f64 {
        self.fine_s
    }

    pub fn coarse_duration(&self) -> f64 {
        self.coarse_s
    }

    pub fn dt(&self, n: usize) -> f64 {
        self.slots[n].duration_s
    }

    pub fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.slots.iter().map(|s| s.duration_s)
    }

    pub fn start_s(&self) -> f64 {
        self.slots.first().map_or(0.0, |s| s.start_s)
    }

    pub fn total_duration(&self) -> f64 {
        self.durations().sum()
    }

    /// Time of knot `n` (`0..=len`).
    pub fn knot_time(&self, n: usize) -> f64 {
        if n < self.slots.len() {
            self.slots[n].start_s
        } else {
            self.slots
                .last()
                .map_or(0.0, |s| s.start_s + s.duration_s)
        }
    }

    /// The first `n` slots.
    pub fn prefix(&self, n: usize) -> Grid {
        let fine = n.min(self.n_fine);
        Grid {
            slots: self.slots[..n].to_vec(),
            n_fine: fine,
            n_coarse: n - fine,
            fine_s: self.fine_s,
            coarse_s: self.coarse_s,
        }
    }

    /// Shortens the final slot to `duration_s` so the grid ends on time.
    fn with_last_duration(mut self, duration_s: f64) -> Self {
        if let Some(last) = self.slots.last_mut() {
            last.duration_s = duration_s;
        }
        self
    }
}

/// `N = ⌈T·v_max/Δ1⌉` slots of `δ1 = Δ1/v_max`.
pub fn build_uniform_grid(period_s: f64, delta1_m: f64, v_max: f64) -> Grid {
    let fine_s = delta1_m / v_max;
    let n = ceil_count(period_s * v_max / delta1_m);
    Grid::new(0.0, n, fine_s, 0, fine_s)
}

/// Window bookkeeping for receding-horizon optimization, in units of fine
/// slots so that windows tile the horizon exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLayout {
    /// Fine slots covering the whole horizon.
    pub total_fine: usize,
    /// Fine slots per window (`⌈T̄/δ1⌉`).
    pub window_fine: usize,
    /// Slots committed per window (`N_e = Te/δ1`).
    pub execute_fine: usize,
    /// `N_Δ = Δ2/Δ1`.
    pub coarse_factor: usize,
    pub fine_s: f64,
    pub coarse_s: f64,
}

impl WindowLayout {
    pub fn new(period_s: f64, cfg: &RhoConfig, v_max: f64) -> Self {
        let fine_s = cfg.delta1_m / v_max;
        let total_fine = ceil_count(period_s / fine_s).max(1);
        let window_fine = ceil_count(cfg.window_s / fine_s).clamp(1, total_fine);
        let execute_fine = ceil_count(cfg.execute_s / fine_s).clamp(1, window_fine);
        let coarse_factor = cfg.coarse_factor().max(1);
        WindowLayout {
            total_fine,
            window_fine,
            execute_fine,
            coarse_factor,
            fine_s,
            coarse_s: fine_s * coarse_factor as f64,
        }
    }

    /// `K = ⌈(T − T̄)/Te⌉ + 1`.
    pub fn window_count(&self) -> usize {
        let tail = self.total_fine - self.window_fine;
        tail.div_ceil(self.execute_fine) + 1
    }

    /// Index of the first fine slot of window `k` (1-based).
    pub fn start_slot(&self, k: usize) -> usize {
        (k - 1) * self.execute_fine
    }

    /// `(N1, N2)` for window `k`; the last window's fine horizon covers the
    /// whole remainder and has no coarse tail. When the remainder is not a
    /// whole number of coarse slots, the final coarse slot is shorter.
    pub fn slot_counts(&self, k: usize) -> (usize, usize) {
        let remaining = self.total_fine - self.start_slot(k);
        let n1 = self.window_fine.min(remaining);
        let n2 = (remaining - n1).div_ceil(self.coarse_factor);
        (n1, n2)
    }

    pub fn is_last(&self, k: usize) -> bool {
        k == self.window_count()
    }

    /// Slots actually executed from window `k`.
    pub fn committed(&self, k: usize) -> usize {
        if self.is_last(k) {
            self.slot_counts(k).0
        } else {
            self.execute_fine
        }
    }

    pub fn grid(&self, k: usize) -> Result<Grid> {
        let windows = self.window_count();
        if k == 0 || k > windows {
            return Err(Error::WindowOutOfRange { k, windows });
        }
        let (n1, n2) = self.slot_counts(k);
        let start = self.start_slot(k) as f64 * self.fine_s;
        let grid = Grid::new(start, n1, self.fine_s, n2, self.coarse_s);
        if n2 == 0 {
            return Ok(grid);
        }
        // the coarse tail stops exactly at the horizon end
        let tail = self.total_fine - self.start_slot(k) - n1;
        let last = tail - (n2 - 1) * self.coarse_factor;
        Ok(grid.with_last_duration(last as f64 * self.fine_s))
    }
}

/// Grid of window `k` (1-based): `N1` fine slots then `N2` coarse slots.
pub fn build_window_grid(k: usize, period_s: f64, cfg: &RhoConfig, v_max: f64) -> Result<Grid> {
    WindowLayout::new(period_s, cfg, v_max).grid(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    /// Knot positions, `len + 1` entries.
    pub q: Vec<Vec2>,
    /// Knot velocities, `len + 1` entries.
    pub v: Vec<Vec2>,
    /// Per-slot accelerations, `len` entries.
    pub a: Vec<Vec2>,
    pub grid: Grid,
}

impl TrajectoryPlan {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn start(&self) -> (Vec2, Vec2) {
        (self.q[0], self.v[0])
    }

    pub fn end(&self) -> (Vec2, Vec2) {
        (*self.q.last().unwrap(), *self.v.last().unwrap())
    }

    /// The first `n` slots and their `n + 1` knots.
    pub fn prefix(&self, n: usize) -> TrajectoryPlan {
        TrajectoryPlan {
            q: self.q[..=n].to_vec(),
            v: self.v[..=n].to_vec(),
            a: self.a[..n].to_vec(),
            grid: self.grid.prefix(n),
        }
    }

    /// Appends `next`, whose first knot must coincide with this plan's last.
    pub fn extend(&mut self, next: &TrajectoryPlan) {
        self.q.extend_from_slice(&next.q[1..]);
        self.v.extend_from_slice(&next.v[1..]);
        self.a.extend_from_slice(&next.a);
        let mut durations: Vec<f64> = self.grid.durations().collect();
        durations.extend(next.grid.durations());
        let start = self.grid.start_s();
        self.grid = Grid::from_durations(start, &durations)
            .unwrap_or_else(|_| concat_grids(&self.grid, &next.grid));
    }

    fn dynamics_error(&self, n: usize) -> (f64, f64) {
        let dt = self.grid.dt(n);
        let (q, v, a) = (self.q[n], self.v[n], self.a[n]);
        let v_next = v + a * dt;
        let q_next = q + v * dt + a * (0.5 * dt * dt);
        let eq = (self.q[n + 1] - q_next).norm() / self.q[n + 1].norm().max(1.0);
        let ev = (self.v[n + 1] - v_next).norm() / self.v[n + 1].norm().max(1.0);
        (eq, ev)
    }

    /// Largest relative dynamics residual over all slots.
    pub fn max_dynamics_residual(&self) -> f64 {
        (0..self.len())
            .map(|n| {
                let (eq, ev) = self.dynamics_error(n);
                eq.max(ev)
            })
            .fold(0.0, f64::max)
    }
}

/// Concatenation that does not fit the fine-then-coarse shape; slot class
/// flags are taken from the parts.
fn concat_grids(head: &Grid, tail: &Grid) -> Grid {
    let mut slots = head.slots.clone();
    let mut t = head.knot_time(head.len());
    for s in tail.slots() {
        slots.push(Slot {
            start_s: t,
            duration_s: s.duration_s,
            coarse: s.coarse,
        });
        t += s.duration_s;
    }
    let n_coarse = slots.iter().filter(|s| s.coarse).count();
    Grid {
        n_fine: slots.len() - n_coarse,
        n_coarse,
        slots,
        fine_s: head.fine_s,
        coarse_s: tail.coarse_s.max(head.coarse_s),
    }
}

/// Rolls the discrete dynamics forward from `(q0, v0)`.
pub fn propagate(q0: Vec2, v0: Vec2, a: &[Vec2], grid: &Grid) -> Result<TrajectoryPlan> {
    if a.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} accelerations for {} slots",
            a.len(),
            grid.len()
        )));
    }
    let mut q = Vec::with_capacity(a.len() + 1);
    let mut v = Vec::with_capacity(a.len() + 1);
    q.push(q0);
    v.push(v0);
    for (n, &an) in a.iter().enumerate() {
        let dt = grid.dt(n);
        let (qn, vn) = (q[n], v[n]);
        v.push(vn + an * dt);
        q.push(qn + vn * dt + an * (0.5 * dt * dt));
    }
    Ok(TrajectoryPlan {
        q,
        v,
        a: a.to_vec(),
        grid: grid.clone(),
    })
}

/// Accelerations reproducing a knot-velocity sequence exactly.
pub fn accelerations_from_velocities(v: &[Vec2], grid: &Grid) -> Vec<Vec2> {
    (0..grid.len())
        .map(|n| (v[n + 1] - v[n]) * (1.0 / grid.dt(n)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    SpeedAboveMax,
    SpeedBelowMin,
    AccelAboveMax,
    Dynamics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    /// Knot index for speed violations, slot index otherwise.
    pub index: usize,
    pub kind: ViolationKind,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    pub max_speed: f64,
    pub min_speed: f64,
    pub max_accel: f64,
    pub max_dynamics_residual: f64,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn first(&self, kind: ViolationKind) -> Option<&Violation> {
        self.violations.iter().find(|v| v.kind == kind)
    }
}

/// Checks speed and acceleration bounds (relative tolerance `tol`) and the
/// discrete dynamics (relative tolerance [`DYNAMICS_TOL`]).
pub fn check_feasibility(plan: &TrajectoryPlan, uav: &UavParams, tol: f64) -> FeasibilityReport {
    let mut violations = Vec::new();
    let (mut max_speed, mut min_speed, mut max_accel) = (0.0f64, f64::INFINITY, 0.0f64);
    for (n, v) in plan.v.iter().enumerate() {
        let s = v.norm();
        max_speed = max_speed.max(s);
        min_speed = min_speed.min(s);
        if s > uav.v_max * (1.0 + tol) {
            violations.push(Violation {
                index: n,
                kind: ViolationKind::SpeedAboveMax,
                value: s,
                limit: uav.v_max,
            });
        }
        if s < uav.v_min * (1.0 - tol) {
            violations.push(Violation {
                index: n,
                kind: ViolationKind::SpeedBelowMin,
                value: s,
                limit: uav.v_min,
            });
        }
    }
    for (n, a) in plan.a.iter().enumerate() {
        let m = a.norm();
        max_accel = max_accel.max(m);
        if m > uav.a_max * (1.0 + tol) {
            violations.push(Violation {
                index: n,
                kind: ViolationKind::AccelAboveMax,
                value: m,
                limit: uav.a_max,
            });
        }
    }
    let mut max_res = 0.0f64;
    for n in 0..plan.len() {
        let (eq, ev) = plan.dynamics_error(n);
        let r = eq.max(ev);
        max_res = max_res.max(r);
        if r > DYNAMICS_TOL {
            violations.push(Violation {
                index: n,
                kind: ViolationKind::Dynamics,
                value: r,
                limit: DYNAMICS_TOL,
            });
        }
    }
    FeasibilityReport {
        violations,
        max_speed,
        min_speed,
        max_accel,
        max_dynamics_residual: max_res,
    }
}

/// Speed for the circular initial trajectory: the minimum-power speed clamped
/// to the speed range, lowered if the centripetal acceleration `2πV/P` of a
/// loop with period `P` would exceed the limit.
pub fn circle_speed(uav: &UavParams, period_s: f64) -> Result<f64> {
    let mut speed = uav.min_power_speed().clamp(uav.v_min, uav.v_max);
    let accel = TAU * speed / period_s;
    if accel > uav.a_max {
        speed = uav.a_max * period_s / TAU;
    }
    if speed < uav.v_min {
        return Err(Error::NoCircularInit(format!(
            "a loop of {period_s} s at the minimum speed {} m/s needs {:.3} m/s² > a_max {}",
            uav.v_min,
            TAU * uav.v_min / period_s,
            uav.a_max
        )));
    }
    Ok(speed)
}

/// One full revolution around the node centroid over the grid's duration.
///
/// Velocities rotate at the constant rate `2π/P`; a small constant velocity
/// offset removes the discrete closure error so that the terminal knot
/// coincides with the first one for any fine/coarse grid.
pub fn circular_init(scenario: &Scenario, grid: &Grid) -> Result<TrajectoryPlan> {
    if grid.is_empty() {
        return Err(Error::Dimension("empty grid".into()));
    }
    let uav = &scenario.uav;
    let period = grid.total_duration();
    let speed = circle_speed(uav, period)?;
    let radius = speed * period / TAU;
    let omega = TAU / period;
    let t0 = grid.start_s();

    let mut v: Vec<Vec2> = (0..=grid.len())
        .map(|n| {
            let theta = omega * (grid.knot_time(n) - t0);
            Vec2::new(-theta.sin(), theta.cos()) * speed
        })
        .collect();
    *v.last_mut().unwrap() = v[0];
    let drift = (0..grid.len()).fold(Vec2::ZERO, |acc, n| {
        acc + (v[n] + v[n + 1]) * (0.5 * grid.dt(n))
    }) * (1.0 / period);
    for vn in v.iter_mut() {
        *vn -= drift;
    }
    let a = accelerations_from_velocities(&v, grid);
    let mut plan = propagate(Vec2::new(radius, 0.0), v[0], &a, grid)?;
    // centre the time-weighted mean position on the node centroid
    let mean = (0..grid.len()).fold(Vec2::ZERO, |acc, n| acc + plan.q[n] * grid.dt(n)) * (1.0 / period);
    let shift = scenario.centroid() - mean;
    for q in plan.q.iter_mut() {
        *q += shift;
    }
    let report = check_feasibility(&plan, uav, 1e-9);
    if !report.passed() {
        return Err(Error::NoCircularInit(format!(
            "circle of radius {radius:.1} m violates limits: {:?}",
            report.violations.first()
        )));
    }
    Ok(plan)
}

/// Warm start on a new grid: the knot velocities of `previous` are linearly
/// interpolated at the new knot times (held constant past its ends), the
/// first knot is pinned to `(q0, v0)`, and positions follow from the
/// dynamics.
pub fn resample(previous: &TrajectoryPlan, grid: &Grid, q0: Vec2, v0: Vec2) -> TrajectoryPlan {
    let times: Vec<f64> = (0..=previous.len())
        .map(|n| previous.grid.knot_time(n))
        .collect();
    let sample = |t: f64| -> Vec2 {
        if t <= times[0] {
            return previous.v[0];
        }
        match times.iter().position(|&tk| tk >= t) {
            None => *previous.v.last().unwrap(),
            Some(j) => {
                let (t0, t1) = (times[j - 1], times[j]);
                let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                previous.v[j - 1].lerp(previous.v[j], w)
            }
        }
    };
    let mut v: Vec<Vec2> = (0..=grid.len()).map(|n| sample(grid.knot_time(n))).collect();
    v[0] = v0;
    let a = accelerations_from_velocities(&v, grid);
    propagate(q0, v0, &a, grid).expect("lengths match by construction")
}

/// Adjusts the last two accelerations so that the terminal knot equals
/// `(q_end, v_end)` exactly. With a single slot only the velocity is matched.
pub fn close_terminal(plan: &mut TrajectoryPlan, q_end: Vec2, v_end: Vec2) {
    let n = plan.len();
    if n == 0 {
        return;
    }
    let (q_now, v_now) = plan.end();
    let (dq, dv) = (q_end - q_now, v_end - v_now);
    if n == 1 {
        plan.a[0] += dv * (1.0 / plan.grid.dt(0));
    } else {
        // Δv = d1 x1 + d2 x2 ; Δq = (d1 d2 + d1²/2) x1 + (d2²/2) x2
        let (d1, d2) = (plan.grid.dt(n - 2), plan.grid.dt(n - 1));
        let (m11, m12, m21, m22) = (d1, d2, d1 * d2 + 0.5 * d1 * d1, 0.5 * d2 * d2);
        let det = m11 * m22 - m12 * m21;
        let solve = |bv: f64, bq: f64| {
            let x1 = (bv * m22 - m12 * bq) / det;
            let x2 = (m11 * bq - m21 * bv) / det;
            (x1, x2)
        };
        let (x1, x2) = solve(dv.x, dq.x);
        let (y1, y2) = solve(dv.y, dq.y);
        plan.a[n - 2] += Vec2::new(x1, y1);
        plan.a[n - 1] += Vec2::new(x2, y2);
    }
    let repl = propagate(plan.q[0], plan.v[0], &plan.a, &plan.grid).expect("same grid");
    *plan = repl;
    // Rounding leaves the last knot a few ulps away; pin it.
    let last = plan.len();
    plan.q[last] = q_end;
    plan.v[last] = v_end;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uniform(n: usize, dt: f64) -> Grid {
        Grid::new(0.0, n, dt, 0, dt)
    }

    #[test]
    fn uniform_grid_counts() {
        let g = build_uniform_grid(500.0, 10.0, 30.0);
        assert_eq!(g.len(), 1500);
        let g = build_uniform_grid(120.0, 30.0, 30.0);
        assert_eq!(g.len(), 120);
        assert_relative_eq!(g.fine_duration(), 1.0);
        let g = build_uniform_grid(1.0, 30.0, 30.0);
        assert_eq!(g.len(), 1);
        // 120 / (1/3) is not exactly 360 in floating point
        assert_eq!(build_uniform_grid(120.0, 10.0, 30.0).len(), 360);
    }

    fn fig3_cfg() -> RhoConfig {
        RhoConfig {
            delta1_m: 30.0,
            delta2_m: 120.0,
            window_s: 120.0,
            execute_s: 80.0,
        }
    }

    #[test]
    fn window_grid_counts() {
        let layout = WindowLayout::new(600.0, &fig3_cfg(), 30.0);
        assert_eq!(layout.window_count(), 7);
        let g = layout.grid(1).unwrap();
        assert_eq!((g.n_fine(), g.n_coarse()), (120, 120));
        assert_relative_eq!(g.fine_duration(), 1.0);
        assert_relative_eq!(g.coarse_duration(), 4.0);
        let last = layout.grid(7).unwrap();
        assert_eq!((last.n_fine(), last.n_coarse()), (120, 0));
        assert_relative_eq!(last.start_s(), 480.0);
        assert!(matches!(
            layout.grid(8),
            Err(Error::WindowOutOfRange { k: 8, windows: 7 })
        ));
        assert!(layout.grid(0).is_err());
    }

    #[test]
    fn short_tail_window() {
        // T=100, T̄=40, Te=25, δ1=1: K = ⌈60/25⌉+1 = 4, last window covers 25 s
        let cfg = RhoConfig {
            delta1_m: 30.0,
            delta2_m: 60.0,
            window_s: 40.0,
            execute_s: 25.0,
        };
        let layout = WindowLayout::new(100.0, &cfg, 30.0);
        assert_eq!(layout.window_count(), 4);
        assert_eq!(layout.slot_counts(3), (40, 5));
        assert_eq!(layout.slot_counts(4), (25, 0));
        assert_eq!(layout.committed(4), 25);
        let committed: usize = (1..=4).map(|k| layout.committed(k)).sum();
        assert_eq!(committed, 100);
    }

    #[test]
    fn coarse_tail_ends_on_the_horizon() {
        // T=120, T̄=60, Te=30, N_Δ=4: window 2 has a 30 s tail, 7 full coarse slots and one of 2 s
        let cfg = RhoConfig {
            delta1_m: 30.0,
            delta2_m: 120.0,
            window_s: 60.0,
            execute_s: 30.0,
        };
        let layout = WindowLayout::new(120.0, &cfg, 30.0);
        let g = layout.grid(2).unwrap();
        assert_eq!((g.n_fine(), g.n_coarse()), (60, 8));
        assert_relative_eq!(g.dt(66), 4.0);
        assert_relative_eq!(g.dt(67), 2.0);
        for k in 1..=layout.window_count() {
            let g = layout.grid(k).unwrap();
            assert_relative_eq!(g.knot_time(g.len()), 120.0, max_relative = 1e-12);
        }
        let durations: Vec<f64> = g.durations().collect();
        assert_eq!(Grid::from_durations(30.0, &durations).unwrap(), g);
        assert_eq!(g.prefix(67).knot_time(67), g.knot_time(67));
    }

    #[test]
    fn full_window_matches_uniform_grid() {
        for &(t, d1) in &[(120.0, 30.0), (120.0, 10.0), (500.0, 10.0), (77.0, 13.0)] {
            let cfg = RhoConfig::full_horizon(t, d1);
            let layout = WindowLayout::new(t, &cfg, 30.0);
            assert_eq!(layout.window_count(), 1);
            assert_eq!(layout.grid(1).unwrap(), build_uniform_grid(t, d1, 30.0));
        }
    }

    #[test]
    fn propagate_uniform_motion() {
        let g = uniform(10, 1.0);
        let p = propagate(Vec2::ZERO, Vec2::new(20.0, 0.0), &[Vec2::ZERO; 10], &g).unwrap();
        assert_eq!(p.q.len(), 11);
        assert_eq!(p.q[10], Vec2::new(200.0, 0.0));
    }

    #[test]
    fn propagate_single_step() {
        let g = uniform(1, 1.0);
        let p = propagate(Vec2::ZERO, Vec2::new(20.0, 0.0), &[Vec2::new(0.0, 3.0)], &g).unwrap();
        assert_eq!(p.v[1], Vec2::new(20.0, 3.0));
        assert_eq!(p.q[1], Vec2::new(20.0, 1.5));
    }

    #[test]
    fn propagate_mixed_grid_displacement() {
        let g = Grid::new(0.0, 7, 1.0, 5, 4.0);
        let v0 = Vec2::new(12.0, -5.0);
        let p = propagate(Vec2::ZERO, v0, &vec![Vec2::ZERO; 12], &g).unwrap();
        let end = p.end().0;
        assert_relative_eq!(end.x, v0.x * 27.0, max_relative = 1e-14);
        assert_relative_eq!(end.y, v0.y * 27.0, max_relative = 1e-14);
    }

    #[test]
    fn propagate_rejects_length_mismatch() {
        let g = uniform(3, 1.0);
        assert!(matches!(
            propagate(Vec2::ZERO, Vec2::ZERO, &[Vec2::ZERO; 2], &g),
            Err(Error::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn constant_acceleration_is_exactly_quadratic(
            ax in -3.0..3.0f64, ay in -3.0..3.0f64,
            vx in -30.0..30.0f64, vy in -30.0..30.0f64,
            n_fine in 1usize..40, n_coarse in 0usize..10,
        ) {
            let g = Grid::new(0.0, n_fine, 1.0 / 3.0, n_coarse, 4.0 / 3.0);
            let a = Vec2::new(ax, ay);
            let v0 = Vec2::new(vx, vy);
            let p = propagate(Vec2::ZERO, v0, &vec![a; g.len()], &g).unwrap();
            for n in 0..=g.len() {
                let t = g.knot_time(n);
                let q = v0 * t + a * (0.5 * t * t);
                let scale = q.norm().max(1.0);
                prop_assert!((p.q[n] - q).norm() / scale < 1e-12);
                prop_assert!((p.v[n] - (v0 + a * t)).norm() / (v0 + a * t).norm().max(1.0) < 1e-12);
            }
            prop_assert!(p.max_dynamics_residual() <= DYNAMICS_TOL);
        }

        #[test]
        fn slot_length_bound_holds(t in 10.0..900.0f64, w in 0.1..1.0f64, e in 0.1..1.0f64, nd in 1usize..6) {
            let cfg = RhoConfig {
                delta1_m: 30.0,
                delta2_m: 30.0 * nd as f64,
                window_s: t * w,
                execute_s: t * w * e,
            };
            let layout = WindowLayout::new(t, &cfg, 30.0);
            for k in 1..=layout.window_count() {
                let g = layout.grid(k).unwrap();
                for s in g.slots() {
                    let bound = if s.coarse { cfg.delta2_m } else { cfg.delta1_m };
                    prop_assert!(s.duration_s * 30.0 <= bound * (1.0 + 1e-12));
                }
            }
            let committed: usize = (1..=layout.window_count()).map(|k| layout.committed(k)).sum();
            prop_assert_eq!(committed, layout.total_fine);
        }
    }

    #[test]
    fn feasibility_pass_and_failures() {
        let uav = reference_scenario(vec![Vec2::ZERO], 100.0).uav;
        let g = uniform(10, 1.0);
        let mut p = propagate(Vec2::ZERO, Vec2::new(20.0, 0.0), &[Vec2::ZERO; 10], &g).unwrap();
        assert!(check_feasibility(&p, &uav, 1e-6).passed());

        let mut fast = p.clone();
        fast.v[4] = Vec2::new(31.0, 0.0);
        let r = check_feasibility(&fast, &uav, 1e-6);
        assert_eq!(r.first(ViolationKind::SpeedAboveMax).unwrap().index, 4);

        p.q[5].y += 1.0;
        let r = check_feasibility(&p, &uav, 1e-6);
        let dyn_slots: Vec<usize> = r
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::Dynamics)
            .map(|v| v.index)
            .collect();
        // q[5] is the output of slot 4 and the input of slot 5
        assert_eq!(dyn_slots, vec![4, 5]);
    }

    #[test]
    fn circular_init_geometry() {
        let s = reference_scenario(vec![Vec2::new(100.0, 0.0), Vec2::new(-100.0, 50.0)], 600.0);
        let g = build_uniform_grid(600.0, 30.0, 30.0);
        let p = circular_init(&s, &g).unwrap();
        let speed = s.uav.min_power_speed();
        let radius = speed * 600.0 / TAU;
        assert_relative_eq!(radius, 1073.99, max_relative = 1e-4);
        assert!(speed * speed / radius < 0.12);
        let c = s.centroid();
        for q in &p.q {
            assert!(((*q - c).norm() - radius).abs() < 1.0);
        }
        let (q_end, v_end) = p.end();
        assert!((q_end - p.q[0]).norm() <= g.fine_duration() * speed);
        assert!((v_end - p.v[0]).norm() < 1e-9);
        let r = check_feasibility(&p, &s.uav, 1e-9);
        assert!(r.passed());
        assert!((r.max_speed - speed).abs() < 1e-3);
    }

    #[test]
    fn circular_init_closes_on_mixed_grid() {
        let s = reference_scenario(vec![Vec2::ZERO], 600.0);
        let layout = WindowLayout::new(600.0, &fig3_cfg(), 30.0);
        let g = layout.grid(1).unwrap();
        let p = circular_init(&s, &g).unwrap();
        let (q_end, v_end) = p.end();
        assert!((q_end - p.q[0]).norm() < 1e-8);
        assert!((v_end - p.v[0]).norm() < 1e-10);
    }

    #[test]
    fn circular_init_infeasible_for_tiny_period() {
        let s = reference_scenario(vec![Vec2::ZERO], 10.0);
        let g = uniform(10, 1.0);
        // 2π·5/10 ≈ 3.14 > 3
        assert!(matches!(circular_init(&s, &g), Err(Error::NoCircularInit(_))));
    }

    #[test]
    fn close_terminal_is_exact() {
        let s = reference_scenario(vec![Vec2::ZERO], 120.0);
        let g = build_uniform_grid(120.0, 30.0, 30.0);
        let mut p = circular_init(&s, &g).unwrap();
        let (q0, v0) = p.start();
        let target_q = q0 + Vec2::new(0.3, -0.2);
        close_terminal(&mut p, target_q, v0 + Vec2::new(0.01, 0.0));
        assert!(p.max_dynamics_residual() < 1e-12);
        assert!((p.end().0 - target_q).norm() < 1e-9);
    }

    #[test]
    fn resample_pins_start_and_tracks_velocity() {
        let s = reference_scenario(vec![Vec2::ZERO], 600.0);
        let layout = WindowLayout::new(600.0, &fig3_cfg(), 30.0);
        let prev = circular_init(&s, &layout.grid(1).unwrap()).unwrap();
        let ne = layout.committed(1);
        let next = layout.grid(2).unwrap();
        let warm = resample(&prev, &next, prev.q[ne], prev.v[ne]);
        assert_eq!(warm.len(), next.len());
        assert_eq!(warm.q[0], prev.q[ne]);
        assert!(warm.max_dynamics_residual() < 1e-12);
        // fine parts coincide in time, so velocities match there
        for n in 0..(layout.window_fine - ne) {
            assert!((warm.v[n] - prev.v[ne + n]).norm() < 1e-9);
        }
    }
}
