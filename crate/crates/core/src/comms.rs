//! Expected-rate link model, per-node throughput accounting and a
//! Monte-Carlo fading simulator used to check the expected-rate upper bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::kinematics::TrajectoryPlan;
use crate::scenario::{GroundNode, Scenario};

/// Time-share fractions `rho[n][l]` of slot `n` given to node `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub rho: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleViolation {
    Negative { slot: usize, node: usize, value: f64 },
    OverFull { slot: usize, total: f64 },
}

impl Schedule {
    pub fn zeros(slots: usize, nodes: usize) -> Self {
        Schedule {
            rho: vec![vec![0.0; nodes]; slots],
        }
    }

    /// Every slot split equally between all nodes.
    pub fn uniform(slots: usize, nodes: usize) -> Self {
        Schedule {
            rho: vec![vec![1.0 / nodes as f64; nodes]; slots],
        }
    }

    pub fn slots(&self) -> usize {
        self.rho.len()
    }

    pub fn nodes(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    /// Violations of `rho >= 0` and `sum_l rho <= 1`, with absolute slack `tol`.
    pub fn violations(&self, tol: f64) -> Vec<ScheduleViolation> {
        let mut out = Vec::new();
        for (n, row) in self.rho.iter().enumerate() {
            for (l, &r) in row.iter().enumerate() {
                if r < -tol || !r.is_finite() {
                    out.push(ScheduleViolation::Negative { slot: n, node: l, value: r });
                }
            }
            let total: f64 = row.iter().sum();
            if total > 1.0 + tol {
                out.push(ScheduleViolation::OverFull { slot: n, total });
            }
        }
        out
    }

    pub fn prefix(&self, n: usize) -> Schedule {
        Schedule {
            rho: self.rho[..n].to_vec(),
        }
    }

    /// Clips tiny solver overshoots back onto the simplex.
    pub fn clamp_to_simplex(&mut self) {
        for row in &mut self.rho {
            for r in row.iter_mut() {
                *r = r.max(0.0);
            }
            let total: f64 = row.iter().sum();
            if total > 1.0 {
                for r in row.iter_mut() {
                    *r /= total;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub per_node_bits: Vec<f64>,
    pub min_bits: f64,
    pub binding_node: usize,
}

impl ThroughputReport {
    pub fn from_bits(per_node_bits: Vec<f64>) -> Self {
        let (binding_node, min_bits) = per_node_bits
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (l, b)| if b < best.1 { (l, b) } else { best });
        ThroughputReport {
            per_node_bits,
            min_bits,
            binding_node,
        }
    }
}

/// `log2(1 + γ / x^α)` for the squared distance `x = H² + ‖q − w‖²`.
pub fn spectral_efficiency(gamma: f64, alpha: f64, sq_dist: f64) -> f64 {
    (gamma / sq_dist.powf(alpha)).ln_1p() / std::f64::consts::LN_2
}

/// Expected-rate bound in bps for a slot fully given to `node`.
pub fn slot_rate(q: Vec2, node: &GroundNode, scenario: &Scenario) -> f64 {
    let gamma = crate::scenario::reference_snr(node, &scenario.channel);
    let h = scenario.uav.altitude_m;
    let x = h * h + (q - node.position).norm_sq();
    scenario.channel.bandwidth_hz * spectral_efficiency(gamma, scenario.channel.distance_exponent(), x)
}

/// `rates[n][l]`: full-slot rate of node `l` at the start knot of slot `n`.
pub fn rate_table(plan: &TrajectoryPlan, scenario: &Scenario) -> Vec<Vec<f64>> {
    (0..plan.len())
        .map(|n| {
            scenario
                .nodes
                .iter()
                .map(|node| slot_rate(plan.q[n], node, scenario))
                .collect()
        })
        .collect()
}

fn check_dims(plan: &TrajectoryPlan, schedule: &Schedule, scenario: &Scenario, carry: &[f64]) -> Result<()> {
    if schedule.slots() != plan.len() {
        return Err(Error::Dimension(format!(
            "schedule has {} slots, plan has {}",
            schedule.slots(),
            plan.len()
        )));
    }
    let l = scenario.num_nodes();
    if schedule.rho.iter().any(|row| row.len() != l) || carry.len() != l {
        return Err(Error::Dimension(format!("expected {l} nodes")));
    }
    Ok(())
}

/// `carry[l] + Σ_n dt_n ρ_l[n] R_l(q[n])`, with its minimum and argmin.
pub fn throughput(
    plan: &TrajectoryPlan,
    schedule: &Schedule,
    scenario: &Scenario,
    carry: &[f64],
) -> Result<ThroughputReport> {
    check_dims(plan, schedule, scenario, carry)?;
    let mut bits = carry.to_vec();
    for n in 0..plan.len() {
        let dt = plan.grid.dt(n);
        for (l, node) in scenario.nodes.iter().enumerate() {
            let rho = schedule.rho[n][l];
            if rho != 0.0 {
                bits[l] += dt * rho * slot_rate(plan.q[n], node, scenario);
            }
        }
    }
    Ok(ThroughputReport::from_bits(bits))
}

/// Small-scale fading power `|h̃|²`, always with unit mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fading {
    /// `|h̃|² ≡ 1`.
    None,
    /// Unit-mean exponential power.
    Rayleigh,
    /// Rician with line-of-sight to scattered power ratio `k`.
    Rician { k: f64 },
}

impl Fading {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Fading::None => 1.0,
            Fading::Rayleigh => Exp1.sample(rng),
            Fading::Rician { k } => {
                let los = (k / (k + 1.0)).sqrt();
                let s = (0.5 / (k + 1.0)).sqrt();
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                (los + s * re).powi(2) + (s * im).powi(2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub fading: Fading,
    pub samples: usize,
    pub seed: u64,
    pub mean_bits: Vec<f64>,
    pub stderr_bits: Vec<f64>,
}

/// Realizations per independently seeded stream.
const MC_CHUNK: usize = 1024;

/// Empirical mean and standard error of the per-node throughput under
/// i.i.d. per-slot fading. Results depend only on `(inputs, samples, seed)`:
/// each chunk of realizations draws from its own ChaCha stream.
pub fn monte_carlo_throughput(
    plan: &TrajectoryPlan,
    schedule: &Schedule,
    scenario: &Scenario,
    fading: Fading,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    let nodes = scenario.num_nodes();
    check_dims(plan, schedule, scenario, &vec![0.0; nodes])?;
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least two samples"));
    }
    let b = scenario.channel.bandwidth_hz;
    let alpha = scenario.channel.distance_exponent();
    let h2 = scenario.uav.altitude_m.powi(2);
    let snr = scenario.snr();
    // (node, weight = B ρ dt, mean SNR at the slot) for every active pair
    let terms: Vec<(usize, f64, f64)> = (0..plan.len())
        .flat_map(|n| {
            let dt = plan.grid.dt(n);
            let q = plan.q[n];
            let rho = &schedule.rho[n];
            let snr = &snr;
            scenario.nodes.iter().enumerate().filter_map(move |(l, node)| {
                (rho[l] > 0.0).then(|| {
                    let x = h2 + (q - node.position).norm_sq();
                    (l, b * rho[l] * dt, snr[l] / x.powf(alpha))
                })
            })
        })
        .collect();

    let chunks = samples.div_ceil(MC_CHUNK);
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut s = vec![0.0; nodes];
            let mut s2 = vec![0.0; nodes];
            let mut bits = vec![0.0; nodes];
            for _ in 0..count {
                bits.iter_mut().for_each(|x| *x = 0.0);
                for &(l, w, mean_snr) in &terms {
                    let g = fading.sample(&mut rng);
                    bits[l] += w * (mean_snr * g).ln_1p() / std::f64::consts::LN_2;
                }
                for l in 0..nodes {
                    s[l] += bits[l];
                    s2[l] += bits[l] * bits[l];
                }
            }
            (s, s2)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((vec![0.0; nodes], vec![0.0; nodes]), |(mut a, mut a2), (s, s2)| {
            for l in 0..nodes {
                a[l] += s[l];
                a2[l] += s2[l];
            }
            (a, a2)
        });

    let n = samples as f64;
    let mean_bits: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr_bits = (0..nodes)
        .map(|l| {
            let var = ((sum_sq[l] - n * mean_bits[l].powi(2)) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(MonteCarloReport {
        fading,
        samples,
        seed,
        mean_bits,
        stderr_bits,
    })
}
