//! Fixed-wing propulsion power and plan energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::kinematics::TrajectoryPlan;
use crate::scenario::UavParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Fine-slot propulsion energy.
    pub propulsion_j: f64,
    pub kinetic_delta_j: f64,
    /// Energy already spent before the plan starts.
    pub carry_j: f64,
    /// Coarse-slot propulsion energy.
    pub coarse_tail_j: f64,
    pub total_j: f64,
}

/// `c1‖v‖³ + (c2/‖v‖)(1 + ‖a‖²/g²)` in watts.
pub fn instantaneous_power(v: Vec2, a: Vec2, uav: &UavParams) -> Result<f64> {
    let speed = v.norm();
    if !(speed > 0.0) {
        return Err(Error::ZeroSpeed { slot: 0 });
    }
    Ok(power_at_speed(speed, a.norm_sq(), uav))
}

pub(crate) fn power_at_speed(speed: f64, accel_sq: f64, uav: &UavParams) -> f64 {
    uav.c1 * speed.powi(3) + uav.c2 / speed * (1.0 + accel_sq / (uav.gravity * uav.gravity))
}

/// Slot-weighted propulsion energy of `plan` plus `carry_j`. Fine slots go to
/// `propulsion_j`, coarse slots to `coarse_tail_j`; the kinetic term uses the
/// configured mass and the plan's first and last knot velocities.
pub fn plan_energy(plan: &TrajectoryPlan, uav: &UavParams, carry_j: f64) -> Result<EnergyBreakdown> {
    let mut fine = 0.0;
    let mut coarse = 0.0;
    for (n, slot) in plan.grid.slots().iter().enumerate() {
        let speed = plan.v[n].norm();
        if !(speed > 0.0) {
            return Err(Error::ZeroSpeed { slot: n });
        }
        let e = slot.duration_s * power_at_speed(speed, plan.a[n].norm_sq(), uav);
        if slot.coarse {
            coarse += e;
        } else {
            fine += e;
        }
    }
    let (v_start, v_end) = (plan.v[0], *plan.v.last().unwrap());
    let kinetic = 0.5 * uav.mass_kg * (v_end.norm_sq() - v_start.norm_sq());
    Ok(EnergyBreakdown {
        propulsion_j: fine,
        kinetic_delta_j: kinetic,
        carry_j,
        coarse_tail_j: coarse,
        total_j: carry_j + fine + coarse + kinetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{propagate, Grid};
    use crate::scenario::reference_scenario;
    use approx::assert_relative_eq;

    fn uav() -> UavParams {
        reference_scenario(vec![Vec2::ZERO], 1.0).uav
    }

    #[test]
    fn level_flight_power() {
        let p = instantaneous_power(Vec2::new(20.0, 0.0), Vec2::ZERO, &uav()).unwrap();
        assert_eq!(p, 325.0);
    }

    #[test]
    fn turning_power() {
        let p = instantaneous_power(Vec2::new(20.0, 0.0), Vec2::new(0.0, 3.0), &uav()).unwrap();
        assert_relative_eq!(p, 250.0 + 75.0 * (1.0 + 9.0 / 96.04), max_relative = 1e-14);
        assert_relative_eq!(p, 332.028, max_relative = 1e-5);
    }

    #[test]
    fn zero_speed_rejected() {
        assert!(matches!(
            instantaneous_power(Vec2::ZERO, Vec2::ZERO, &uav()),
            Err(Error::ZeroSpeed { .. })
        ));
    }

    #[test]
    fn minimum_power_speed_by_bracketing() {
        let u = uav();
        let v_star = u.min_power_speed();
        let p_star = power_at_speed(v_star, 0.0, &u);
        assert_relative_eq!(v_star, (1500.0f64 / 0.09375).powf(0.25), max_relative = 1e-12);
        assert_relative_eq!(p_star, 177.8, max_relative = 1e-3);
        // grid search: unique minimum, bracketed by neighbours
        let speeds: Vec<f64> = (1..=4000).map(|i| i as f64 * 0.01).collect();
        let powers: Vec<f64> = speeds.iter().map(|&s| power_at_speed(s, 0.0, &u)).collect();
        let best = (0..powers.len()).min_by(|&i, &j| powers[i].total_cmp(&powers[j])).unwrap();
        assert!((speeds[best] - v_star).abs() <= 0.01);
        for i in 1..powers.len() {
            if speeds[i] <= v_star {
                assert!(powers[i] < powers[i - 1]);
            } else if speeds[i - 1] >= v_star {
                assert!(powers[i] > powers[i - 1]);
            }
        }
    }

    #[test]
    fn power_is_convex_in_squared_acceleration() {
        let u = uav();
        for &speed in &[5.0, 11.0, 20.0, 30.0] {
            let f = |x: f64| power_at_speed(speed, x, &u);
            for i in 1..50 {
                let x = i as f64 * 0.2;
                let h = 0.1;
                // affine in ‖a‖²: zero second difference; strictly convex in ‖a‖
                let d2 = f(x + h) - 2.0 * f(x) + f(x - h);
                assert!(d2.abs() <= 1e-9 * f(x));
                let g = |m: f64| power_at_speed(speed, m * m, &u);
                let m = x.sqrt();
                assert!(g(m + h) - 2.0 * g(m) + g(m - h) > 0.0);
            }
        }
    }

    fn constant_plan(n: usize) -> TrajectoryPlan {
        let g = Grid::new(0.0, n, 1.0, 0, 1.0);
        propagate(Vec2::ZERO, Vec2::new(20.0, 0.0), &vec![Vec2::ZERO; n], &g).unwrap()
    }

    #[test]
    fn constant_speed_energy() {
        let e = plan_energy(&constant_plan(100), &uav(), 0.0).unwrap();
        assert_relative_eq!(e.total_j, 32_500.0, max_relative = 1e-12);
        assert_eq!(e.kinetic_delta_j, 0.0);
    }

    #[test]
    fn periodic_plan_has_no_kinetic_term() {
        let mut u = uav();
        u.mass_kg = 9.65;
        let e = plan_energy(&constant_plan(10), &u, 0.0).unwrap();
        assert_eq!(e.kinetic_delta_j, 0.0);
        let g = Grid::new(0.0, 2, 1.0, 0, 1.0);
        let p = propagate(Vec2::ZERO, Vec2::new(10.0, 0.0), &[Vec2::new(1.0, 0.0); 2], &g).unwrap();
        let e = plan_energy(&p, &u, 0.0).unwrap();
        assert_relative_eq!(e.kinetic_delta_j, 0.5 * 9.65 * (144.0 - 100.0), max_relative = 1e-12);
    }

    #[test]
    fn carry_is_additive() {
        let base = plan_energy(&constant_plan(10), &uav(), 0.0).unwrap();
        let e = plan_energy(&constant_plan(10), &uav(), 1000.0).unwrap();
        assert_relative_eq!(e.total_j, 1000.0 + base.propulsion_j, max_relative = 1e-14);
    }

    #[test]
    fn coarse_slots_go_to_the_tail() {
        let g = Grid::new(0.0, 3, 1.0, 2, 4.0);
        let p = propagate(Vec2::ZERO, Vec2::new(20.0, 0.0), &[Vec2::ZERO; 5], &g).unwrap();
        let e = plan_energy(&p, &uav(), 0.0).unwrap();
        assert_relative_eq!(e.propulsion_j, 3.0 * 325.0, max_relative = 1e-14);
        assert_relative_eq!(e.coarse_tail_j, 8.0 * 325.0, max_relative = 1e-14);
    }

    #[test]
    fn energy_additive_over_partition() {
        let g = Grid::new(0.0, 40, 0.5, 0, 0.5);
        let a: Vec<Vec2> = (0..40).map(|i| Vec2::new(0.1 * (i as f64).sin(), 0.2 * (i as f64 * 0.3).cos())).collect();
        let p = propagate(Vec2::ZERO, Vec2::new(15.0, 3.0), &a, &g).unwrap();
        let whole = plan_energy(&p, &uav(), 0.0).unwrap();
        let head = plan_energy(&p.prefix(17), &uav(), 0.0).unwrap();
        let tail_plan = TrajectoryPlan {
            q: p.q[17..].to_vec(),
            v: p.v[17..].to_vec(),
            a: p.a[17..].to_vec(),
            grid: Grid::new(8.5, 23, 0.5, 0, 0.5),
        };
        let tail = plan_energy(&tail_plan, &uav(), 0.0).unwrap();
        assert_relative_eq!(head.total_j + tail.total_j, whole.total_j, max_relative = 1e-9);
    }
}
