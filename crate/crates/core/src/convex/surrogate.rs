//! Convex surrogate of the windowed trajectory problem for a fixed schedule,
//! and the feasibility projection used to repair warm starts.
//!
//! Non-convex pieces are replaced around a reference plan:
//!
//! * rate: `log2(1 + γ x^-α)` is convex in the squared distance
//!   `x = H² + ‖q − w‖²`, so its tangent at `x_r` is a global lower bound;
//!   with a non-positive slope it is concave in `q`;
//! * minimum speed: `‖v‖² >= ‖v_r‖² + 2v_rᵀ(v − v_r)` (tangent of a convex
//!   function) turns `‖v‖ >= v_min` into a linear restriction;
//! * `c2/‖v‖`: a slack `τ² <= ‖v_r‖² + 2v_rᵀ(v − v_r)` satisfies `τ <= ‖v‖`,
//!   so `c2(1 + ‖a‖²/g²)/τ` over-estimates the true term and is jointly
//!   convex (quadratic over linear);
//! * `c1‖v‖³` is kept exactly through an epigraph variable in a power cone.
//!
//! Internally positions are in units of the altitude `H`, velocities in
//! units of `v_max` and accelerations in units of `a_max`.

use std::ops::Range;

use super::program::{Affine, ConeKind, ConicProgram, Var};
use super::nominal_variable_count;
use crate::comms::{spectral_efficiency, Schedule};
use crate::energy::power_at_speed;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::kinematics::{close_terminal, propagate, Grid, TrajectoryPlan};
use crate::scenario::{Scenario, UavParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartCondition {
    Free,
    Pinned { q: Vec2, v: Vec2 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndCondition {
    /// Terminal knot equals the first knot.
    Periodic,
    Pinned { q: Vec2, v: Vec2 },
}

/// What a window problem inherits from the windows before it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowContext {
    pub carry_bits: Vec<f64>,
    pub carry_energy_j: f64,
    pub start: StartCondition,
    pub end: EndCondition,
}

impl WindowContext {
    /// A full-period problem: nothing carried, periodic boundary.
    pub fn periodic(nodes: usize) -> Self {
        WindowContext {
            carry_bits: vec![0.0; nodes],
            carry_energy_j: 0.0,
            start: StartCondition::Free,
            end: EndCondition::Periodic,
        }
    }

    /// Largest boundary mismatch of `plan` in meters and m/s.
    pub fn boundary_error(&self, plan: &TrajectoryPlan) -> (f64, f64) {
        let (q0, v0) = plan.start();
        let (q1, v1) = plan.end();
        let mut eq = 0.0f64;
        let mut ev = 0.0f64;
        if let StartCondition::Pinned { q, v } = self.start {
            eq = eq.max((q0 - q).norm());
            ev = ev.max((v0 - v).norm());
        }
        let (qt, vt) = match self.end {
            EndCondition::Periodic => (q0, v0),
            EndCondition::Pinned { q, v } => (q, v),
        };
        (eq.max((q1 - qt).norm()), ev.max((v1 - vt).norm()))
    }

    /// Change in kinetic energy across the window when both ends are fixed
    /// (zero for a periodic window).
    pub fn kinetic_delta_j(&self, uav: &UavParams) -> f64 {
        match (self.start, self.end) {
            (StartCondition::Pinned { v: v0, .. }, EndCondition::Pinned { v: v1, .. }) => {
                0.5 * uav.mass_kg * (v1.norm_sq() - v0.norm_sq())
            }
            _ => 0.0,
        }
    }
}

/// Tangent-plane data around a reference plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub q_ref: Vec<Vec2>,
    pub v_ref: Vec<Vec2>,
    /// `rate_intercept[n][l] + rate_slope[n][l]·(H² + ‖q − w_l‖²)` in bps.
    pub rate_intercept: Vec<Vec<f64>>,
    pub rate_slope: Vec<Vec<f64>>,
    nodes: Vec<Vec2>,
    altitude_sq: f64,
    uav: UavParams,
}

impl SurrogateModel {
    pub fn new(reference: &TrajectoryPlan, scenario: &Scenario) -> Self {
        let b = scenario.channel.bandwidth_hz;
        let alpha = scenario.channel.distance_exponent();
        let h2 = scenario.uav.altitude_m.powi(2);
        let snr = scenario.snr();
        let nodes: Vec<Vec2> = scenario.nodes.iter().map(|n| n.position).collect();
        let mut intercept = Vec::with_capacity(reference.len());
        let mut slope = Vec::with_capacity(reference.len());
        for n in 0..reference.len() {
            let q = reference.q[n];
            let (mut i_row, mut s_row) = (Vec::new(), Vec::new());
            for (l, w) in nodes.iter().enumerate() {
                let x = h2 + (q - *w).norm_sq();
                let g = snr[l];
                let f = spectral_efficiency(g, alpha, x);
                let df = -alpha * g / (std::f64::consts::LN_2 * x * (x.powf(alpha) + g));
                i_row.push(b * (f - df * x));
                s_row.push(b * df);
            }
            intercept.push(i_row);
            slope.push(s_row);
        }
        SurrogateModel {
            q_ref: reference.q.clone(),
            v_ref: reference.v.clone(),
            rate_intercept: intercept,
            rate_slope: slope,
            nodes,
            altitude_sq: h2,
            uav: scenario.uav,
        }
    }

    /// Lower bound on the full-slot rate of node `l` at slot `n` if the UAV is at `q`.
    pub fn rate(&self, n: usize, l: usize, q: Vec2) -> f64 {
        let x = self.altitude_sq + (q - self.nodes[l]).norm_sq();
        self.rate_intercept[n][l] + self.rate_slope[n][l] * x
    }

    pub fn rate_gradient(&self, n: usize, l: usize, q: Vec2) -> Vec2 {
        (q - self.nodes[l]) * (2.0 * self.rate_slope[n][l])
    }

    /// Tangent lower bound on `‖v‖²` at knot `n`.
    pub fn speed_sq_lower(&self, n: usize, v: Vec2) -> f64 {
        let r = self.v_ref[n];
        2.0 * r.dot(v) - r.norm_sq()
    }

    /// Upper bound on the propulsion power at slot `n`, with the epigraph
    /// variables at their tightest values; `None` where the slack is undefined.
    pub fn power(&self, n: usize, v: Vec2, a: Vec2) -> Option<f64> {
        let ell = self.speed_sq_lower(n, v);
        if ell <= 0.0 {
            return None;
        }
        let u = &self.uav;
        let tau = ell.sqrt();
        Some(u.c1 * v.norm().powi(3) + u.c2 / tau * (1.0 + a.norm_sq() / (u.gravity * u.gravity)))
    }

    /// Gradient of [`Self::power`] with respect to `v`.
    pub fn power_gradient_v(&self, n: usize, v: Vec2, a: Vec2) -> Vec2 {
        let u = &self.uav;
        let ell = self.speed_sq_lower(n, v);
        let k = 1.0 + a.norm_sq() / (u.gravity * u.gravity);
        // d/dv c1‖v‖³ = 3c1‖v‖v ; d/dv ℓ^{-1/2} = −ℓ^{-3/2} v_r
        v * (3.0 * u.c1 * v.norm()) - self.v_ref[n] * (u.c2 * k * ell.powf(-1.5))
    }

    /// True power at the reference point, for tightness checks.
    pub fn reference_power(&self, n: usize, a: Vec2) -> f64 {
        power_at_speed(self.v_ref[n].norm(), a.norm_sq(), &self.uav)
    }
}

#[derive(Debug, Clone)]
struct KinematicVars {
    qx: Range<usize>,
    qy: Range<usize>,
    vx: Range<usize>,
    vy: Range<usize>,
    ax: Range<usize>,
    ay: Range<usize>,
}

impl KinematicVars {
    fn q(&self, n: usize) -> (Var, Var) {
        (Var(self.qx.start + n), Var(self.qy.start + n))
    }
    fn v(&self, n: usize) -> (Var, Var) {
        (Var(self.vx.start + n), Var(self.vy.start + n))
    }
    fn a(&self, n: usize) -> (Var, Var) {
        (Var(self.ax.start + n), Var(self.ay.start + n))
    }
}

#[derive(Debug, Clone, Copy)]
struct Units {
    length: f64,
    speed: f64,
    accel: f64,
}

impl Units {
    fn new(uav: &UavParams) -> Self {
        Units {
            length: uav.altitude_m,
            speed: uav.v_max,
            accel: uav.a_max,
        }
    }
}

/// Variables, dynamics, speed/acceleration limits, the linearized minimum
/// speed and the boundary conditions shared by both program families.
fn add_kinematics(
    p: &mut ConicProgram,
    grid: &Grid,
    v_ref: &[Vec2],
    ctx: &WindowContext,
    uav: &UavParams,
    units: Units,
) -> KinematicVars {
    let ns = grid.len();
    let kv = KinematicVars {
        qx: p.add_vars("qx", ns + 1),
        qy: p.add_vars("qy", ns + 1),
        vx: p.add_vars("vx", ns + 1),
        vy: p.add_vars("vy", ns + 1),
        ax: p.add_vars("ax", ns),
        ay: p.add_vars("ay", ns),
    };
    for n in 0..ns {
        let dt = grid.dt(n);
        let (qx0, qy0) = kv.q(n);
        let (qx1, qy1) = kv.q(n + 1);
        let (vx0, vy0) = kv.v(n);
        let (vx1, vy1) = kv.v(n + 1);
        let (ax, ay) = kv.a(n);
        let cv = units.speed * dt / units.length;
        let ca = 0.5 * units.accel * dt * dt / units.length;
        let cva = units.accel * dt / units.speed;
        for (q1, q0, v0, a) in [(qx1, qx0, vx0, ax), (qy1, qy0, vy0, ay)] {
            p.equal(
                "dyn_q",
                Affine::var(q1).plus(q0, -1.0).plus(v0, -cv).plus(a, -ca),
            );
        }
        for (v1, v0, a) in [(vx1, vx0, ax), (vy1, vy0, ay)] {
            p.equal("dyn_v", Affine::var(v1).plus(v0, -1.0).plus(a, -cva));
        }
        p.soc(
            "accel",
            vec![Affine::constant(1.0), Affine::var(ax), Affine::var(ay)],
        );
    }
    let vmin_sq = (uav.v_min / units.speed).powi(2);
    for n in 0..=ns {
        let (vx, vy) = kv.v(n);
        p.soc(
            "vmax",
            vec![Affine::constant(1.0), Affine::var(vx), Affine::var(vy)],
        );
        p.nonneg("vmin", speed_sq_lower(v_ref[n], units, vx, vy).plus_const(-vmin_sq));
    }
    let pin = |p: &mut ConicProgram, n: usize, q: Vec2, v: Vec2, label| {
        let (qx, qy) = kv.q(n);
        let (vx, vy) = kv.v(n);
        p.equal(label, Affine::var(qx).plus_const(-q.x / units.length));
        p.equal(label, Affine::var(qy).plus_const(-q.y / units.length));
        p.equal(label, Affine::var(vx).plus_const(-v.x / units.speed));
        p.equal(label, Affine::var(vy).plus_const(-v.y / units.speed));
    };
    if let StartCondition::Pinned { q, v } = ctx.start {
        pin(p, 0, q, v, "start");
    }
    match ctx.end {
        EndCondition::Pinned { q, v } => pin(p, ns, q, v, "end"),
        EndCondition::Periodic => {
            let pairs = [(kv.q(ns), kv.q(0)), (kv.v(ns), kv.v(0))];
            for ((x1, y1), (x0, y0)) in pairs {
                p.equal("periodic", Affine::var(x1).plus(x0, -1.0));
                p.equal("periodic", Affine::var(y1).plus(y0, -1.0));
            }
        }
    }
    kv
}

/// `2ṽ_rᵀṽ − ‖ṽ_r‖²` in scaled velocity units.
fn speed_sq_lower(v_ref: Vec2, units: Units, vx: Var, vy: Var) -> Affine {
    let r = v_ref * (1.0 / units.speed);
    Affine::constant(-r.norm_sq())
        .plus(vx, 2.0 * r.x)
        .plus(vy, 2.0 * r.y)
}

fn check_reference(reference: &TrajectoryPlan, uav: &UavParams) -> Result<()> {
    if let Some(n) = reference
        .v
        .iter()
        .position(|v| v.norm() < uav.v_min * (1.0 - 1e-6))
    {
        return Err(Error::invalid(
            "reference",
            format!("speed {:.6} below v_min at knot {n}", reference.v[n].norm()),
        ));
    }
    Ok(())
}

fn read_plan(
    x: &[f64],
    kv: &KinematicVars,
    grid: &Grid,
    ctx: &WindowContext,
    units: Units,
) -> TrajectoryPlan {
    let (q0, v0) = match ctx.start {
        StartCondition::Pinned { q, v } => (q, v),
        StartCondition::Free => {
            let (qx, qy) = kv.q(0);
            let (vx, vy) = kv.v(0);
            (
                Vec2::new(x[qx.0], x[qy.0]) * units.length,
                Vec2::new(x[vx.0], x[vy.0]) * units.speed,
            )
        }
    };
    let a: Vec<Vec2> = (0..grid.len())
        .map(|n| {
            let (ax, ay) = kv.a(n);
            Vec2::new(x[ax.0], x[ay.0]) * units.accel
        })
        .collect();
    let mut plan = propagate(q0, v0, &a, grid).expect("lengths match");
    let (qt, vt) = match ctx.end {
        EndCondition::Periodic => (q0, v0),
        EndCondition::Pinned { q, v } => (q, v),
    };
    close_terminal(&mut plan, qt, vt);
    plan
}

#[derive(Debug, Clone)]
struct EnergyVars {
    u: Range<usize>,
    s: Range<usize>,
    tau: Range<usize>,
    p: Range<usize>,
}

/// Options for one surrogate build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateOptions {
    /// Dinkelbach parameter λ in bits per joule.
    pub lambda: f64,
    /// Largest per-axis waypoint move from the reference, meters.
    pub trust_radius_m: f64,
}

/// `max η − λ·Ẽ_sur` over a window for a fixed schedule.
#[derive(Debug, Clone)]
pub struct TrajectorySubproblem {
    pub program: ConicProgram,
    pub model: SurrogateModel,
    pub nominal_variables: usize,
    pub lambda: f64,
    eta: Var,
    kin: KinematicVars,
    en: EnergyVars,
    grid: Grid,
    ctx: WindowContext,
    units: Units,
    bits_scale: f64,
    kappa: f64,
}

pub fn build_trajectory_surrogate(
    reference: &TrajectoryPlan,
    schedule: &Schedule,
    ctx: &WindowContext,
    scenario: &Scenario,
    opts: &SurrogateOptions,
) -> Result<TrajectorySubproblem> {
    let uav = &scenario.uav;
    let ns = reference.len();
    let nodes = scenario.num_nodes();
    if schedule.slots() != ns || schedule.nodes() != nodes || ctx.carry_bits.len() != nodes {
        return Err(Error::Dimension(format!(
            "surrogate needs {ns} x {nodes} schedule and {nodes} carries"
        )));
    }
    if !(opts.lambda >= 0.0) {
        return Err(Error::invalid("lambda", "must be >= 0"));
    }
    check_reference(reference, uav)?;
    let model = SurrogateModel::new(reference, scenario);
    let units = Units::new(uav);
    let grid = reference.grid.clone();

    // bits per unit of scaled η: the largest reference throughput
    let totals: Vec<f64> = (0..nodes)
        .map(|l| {
            ctx.carry_bits[l]
                + (0..ns)
                    .map(|n| grid.dt(n) * schedule.rho[n][l] * model.rate(n, l, reference.q[n]))
                    .sum::<f64>()
        })
        .collect();
    let bits_scale = totals.iter().copied().fold(0.0, f64::max).max(1.0);

    let mut p = ConicProgram::new();
    let eta = p.add_var("eta");
    let kin = add_kinematics(&mut p, &grid, &reference.v, ctx, uav, units);
    let en = EnergyVars {
        u: p.add_vars("u", ns),
        s: p.add_vars("s", ns),
        tau: p.add_vars("tau", ns),
        p: p.add_vars("p", ns),
    };
    let kappa = uav.a_max / uav.gravity;

    // objective: −η̃ + (λ/S_b)(E_carry + Σ dt (c1 v_max³ s̃ + (c2/v_max) p̃))
    p.objective[eta.0] = -1.0;
    let w = opts.lambda / bits_scale;
    p.objective_constant = w * (ctx.carry_energy_j + ctx.kinetic_delta_j(uav));
    for n in 0..ns {
        let dt = grid.dt(n);
        let (vx, vy) = kin.v(n);
        let (ax, ay) = kin.a(n);
        let (u, s, tau, pp) = (
            Var(en.u.start + n),
            Var(en.s.start + n),
            Var(en.tau.start + n),
            Var(en.p.start + n),
        );
        p.objective[s.0] = w * dt * uav.c1 * units.speed.powi(3);
        p.objective[pp.0] = w * dt * uav.c2 / units.speed;

        p.soc("speed", vec![Affine::var(u), Affine::var(vx), Affine::var(vy)]);
        p.push(
            ConeKind::Power(1.0 / 3.0),
            "cube",
            vec![Affine::var(s), Affine::constant(1.0), Affine::var(u)],
        );
        let ell = speed_sq_lower(reference.v[n], units, vx, vy);
        p.soc(
            "tau",
            vec![
                ell.clone().plus_const(1.0),
                Affine::term(tau, 2.0),
                ell.plus_const(-1.0),
            ],
        );
        p.soc(
            "inv_speed",
            vec![
                Affine::var(pp).plus(tau, 1.0),
                Affine::constant(2.0),
                Affine::term(ax, 2.0 * kappa),
                Affine::term(ay, 2.0 * kappa),
                Affine::var(pp).plus(tau, -1.0),
            ],
        );
    }

    // Σ_n κ_n ‖q̃_n − w̃‖² <= K_l − η̃ as a rotated cone
    let h2 = uav.altitude_m.powi(2);
    for l in 0..nodes {
        let w_l = scenario.nodes[l].position * (1.0 / units.length);
        let mut k_l = ctx.carry_bits[l];
        let mut tail = Vec::new();
        for n in 0..ns {
            let rho = schedule.rho[n][l];
            if rho <= 0.0 {
                continue;
            }
            let dt = grid.dt(n);
            k_l += dt * rho * (model.rate_intercept[n][l] + model.rate_slope[n][l] * h2);
            let kappa_n = -dt * rho * model.rate_slope[n][l] * units.length.powi(2) / bits_scale;
            if kappa_n > 0.0 {
                let c = 2.0 * kappa_n.sqrt();
                let (qx, qy) = kin.q(n);
                tail.push(Affine::term(qx, c).plus_const(-c * w_l.x));
                tail.push(Affine::term(qy, c).plus_const(-c * w_l.y));
            }
        }
        let z = Affine::constant(k_l / bits_scale).plus(eta, -1.0);
        if tail.is_empty() {
            p.nonneg("throughput", z);
        } else {
            let mut rows = vec![z.clone().plus_const(1.0)];
            rows.extend(tail);
            rows.push(z.plus_const(-1.0));
            p.soc("throughput", rows);
        }
    }

    // trust region on waypoints
    let radius = opts.trust_radius_m / units.length;
    let fixed_start = matches!(ctx.start, StartCondition::Pinned { .. });
    for n in 0..=ns {
        if n == 0 && fixed_start {
            continue;
        }
        let (qx, qy) = kin.q(n);
        let r = reference.q[n] * (1.0 / units.length);
        for (var, c) in [(qx, r.x), (qy, r.y)] {
            p.nonneg("trust", Affine::constant(radius + c).plus(var, -1.0));
            p.nonneg("trust", Affine::constant(radius - c).plus(var, 1.0));
        }
    }
    p.normalize_rows();

    Ok(TrajectorySubproblem {
        program: p,
        model,
        nominal_variables: nominal_variable_count(ns, nodes),
        lambda: opts.lambda,
        eta,
        kin,
        en,
        grid,
        ctx: ctx.clone(),
        units,
        bits_scale,
        kappa,
    })
}

impl TrajectorySubproblem {
    /// Plan encoded by a solution vector; dynamics are re-propagated from the
    /// accelerations and the boundary is closed exactly.
    pub fn extract(&self, x: &[f64]) -> TrajectoryPlan {
        read_plan(x, &self.kin, &self.grid, &self.ctx, self.units)
    }

    /// `η − λẼ` in bits for a program objective value.
    pub fn gap_bits(&self, objective: f64) -> f64 {
        -objective * self.bits_scale
    }

    /// Embeds `plan` (on this subproblem's grid) as a solution vector with
    /// the epigraph variables at their tightest values.
    pub fn embed(&self, plan: &TrajectoryPlan, schedule: &Schedule) -> Vec<f64> {
        let u = self.units;
        let mut x = vec![0.0; self.program.num_vars()];
        for n in 0..=plan.len() {
            let (qx, qy) = self.kin.q(n);
            let (vx, vy) = self.kin.v(n);
            x[qx.0] = plan.q[n].x / u.length;
            x[qy.0] = plan.q[n].y / u.length;
            x[vx.0] = plan.v[n].x / u.speed;
            x[vy.0] = plan.v[n].y / u.speed;
        }
        let nodes = self.model.rate_slope.first().map_or(0, Vec::len);
        let mut bits = self.ctx.carry_bits.clone();
        for n in 0..plan.len() {
            let (ax, ay) = self.kin.a(n);
            x[ax.0] = plan.a[n].x / u.accel;
            x[ay.0] = plan.a[n].y / u.accel;
            let v = plan.v[n] * (1.0 / u.speed);
            let speed = v.norm();
            let tau = self.model.speed_sq_lower(n, plan.v[n]).max(0.0).sqrt() / u.speed;
            let a2 = (plan.a[n] * (1.0 / u.accel)).norm_sq();
            x[self.en.u.start + n] = speed;
            x[self.en.s.start + n] = speed.powi(3);
            x[self.en.tau.start + n] = tau;
            x[self.en.p.start + n] = (1.0 + self.kappa * self.kappa * a2) / tau;
            for (l, b) in bits.iter_mut().enumerate().take(nodes) {
                *b += self.grid.dt(n) * schedule.rho[n][l] * self.model.rate(n, l, plan.q[n]);
            }
        }
        let eta = bits.iter().copied().fold(f64::INFINITY, f64::min);
        x[self.eta.0] = eta / self.bits_scale;
        x
    }
}

/// Closest plan (in knot velocities) to `candidate` that satisfies the
/// dynamics, the speed and acceleration limits (minimum speed linearized at
/// the candidate) and the window boundary.
pub fn build_projection(candidate: &TrajectoryPlan, ctx: &WindowContext, uav: &UavParams) -> Projection {
    let units = Units::new(uav);
    let mut p = ConicProgram::new();
    // keep the linearization point away from zero
    let v_ref: Vec<Vec2> = candidate
        .v
        .iter()
        .map(|v| {
            let s = v.norm();
            if s < uav.v_min {
                if s > 0.0 {
                    *v * (uav.v_min / s)
                } else {
                    Vec2::new(uav.v_min, 0.0)
                }
            } else {
                *v
            }
        })
        .collect();
    let kin = add_kinematics(&mut p, &candidate.grid, &v_ref, ctx, uav, units);
    // ½ Σ ‖ṽ − ṽ_c‖² plus a light pull on positions
    for n in 0..=candidate.len() {
        let (vx, vy) = kin.v(n);
        let c = candidate.v[n] * (1.0 / units.speed);
        for (var, target, w) in [(vx, c.x, 1.0), (vy, c.y, 1.0)] {
            p.quadratic[var.0] = w;
            p.objective[var.0] = -w * target;
        }
        let (qx, qy) = kin.q(n);
        let cq = candidate.q[n] * (1.0 / units.length);
        for (var, target) in [(qx, cq.x), (qy, cq.y)] {
            p.quadratic[var.0] = 1e-3;
            p.objective[var.0] = -1e-3 * target;
        }
    }
    p.normalize_rows();
    Projection {
        program: p,
        kin,
        grid: candidate.grid.clone(),
        ctx: ctx.clone(),
        units,
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub program: ConicProgram,
    kin: KinematicVars,
    grid: Grid,
    ctx: WindowContext,
    units: Units,
}

impl Projection {
    pub fn extract(&self, x: &[f64]) -> TrajectoryPlan {
        read_plan(x, &self.kin, &self.grid, &self.ctx, self.units)
    }
}
