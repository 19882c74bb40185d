//! Physical and problem parameters, derived channel constants and scenario
//! file ingestion.
//!
//! The on-disk format is JSON with top-level keys `nodes`, `channel`, `uav`,
//! `horizon` and an optional `rho` section:
//!
//! ```json
//! {
//!   "nodes": [{ "x_m": 0.0, "y_m": 0.0, "tx_power_w": 0.01 }],
//!   "channel": { "beta0_db": -40, "noise_psd_dbm_per_hz": -169, "gamma_db": 0,
//!                "alpha": 2, "bandwidth_hz": 1e6 },
//!   "uav": { "h_m": 100, "vmin_mps": 5, "vmax_mps": 30, "amax_mps2": 3,
//!            "c1": 0.03125, "c2": 1500, "mass_kg": 0, "g": 9.8 },
//!   "horizon": { "t_s": 600 },
//!   "rho": { "delta1_m": 30, "delta2_m": 120, "window_s": 120, "execute_s": 80 }
//! }
//! ```
//!
//! `gamma_db`, `mass_kg` and `g` are optional (defaults 0 dB, 0 kg, 9.8 m/s²).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

pub const DEFAULT_GRAVITY: f64 = 9.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundNode {
    pub position: Vec2,
    /// Transmit power in watts.
    pub transmit_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Channel power at the 1 m reference distance, dB.
    pub beta0_db: f64,
    pub noise_psd_dbm_per_hz: f64,
    /// Capacity gap Γ in dB.
    pub capacity_gap_db: f64,
    /// Path-loss exponent α̃ (the distance exponent in the rate is α̃/2).
    pub pathloss_exponent: f64,
    pub bandwidth_hz: f64,
}

impl ChannelParams {
    /// Total receiver noise power over the bandwidth, in watts.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_psd_dbm_per_hz + 10.0 * self.bandwidth_hz.log10();
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn beta0(&self) -> f64 {
        10f64.powf(self.beta0_db / 10.0)
    }

    pub fn capacity_gap(&self) -> f64 {
        10f64.powf(self.capacity_gap_db / 10.0)
    }

    /// Exponent applied to the squared distance `H² + ‖q − w‖²`.
    pub fn distance_exponent(&self) -> f64 {
        self.pathloss_exponent / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavParams {
    pub altitude_m: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub mass_kg: f64,
    pub gravity: f64,
}

impl UavParams {
    /// Speed minimizing level-flight propulsion power, `(c2 / 3c1)^(1/4)`.
    pub fn min_power_speed(&self) -> f64 {
        (self.c2 / (3.0 * self.c1)).powf(0.25)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub nodes: Vec<GroundNode>,
    pub channel: ChannelParams,
    pub uav: UavParams,
    /// Trajectory period T in seconds.
    pub period_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoConfig {
    pub delta1_m: f64,
    pub delta2_m: f64,
    /// Window length T̄.
    pub window_s: f64,
    /// Executed (committed) portion Te of each window.
    pub execute_s: f64,
}

/// Reference SNR γ_l = P_l β0 / (σ² Γ), linear scale.
pub fn reference_snr(node: &GroundNode, channel: &ChannelParams) -> f64 {
    node.transmit_power * channel.beta0() / (channel.noise_power_w() * channel.capacity_gap())
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {value}")))
    }
}

impl GroundNode {
    pub fn validate(&self, index: usize) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::invalid(format!("nodes[{index}].position"), "must be finite"));
        }
        positive(&format!("nodes[{index}].tx_power_w"), self.transmit_power)
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        positive("channel.alpha", self.pathloss_exponent)?;
        positive("channel.bandwidth_hz", self.bandwidth_hz)?;
        if !(self.capacity_gap_db.is_finite() && self.capacity_gap_db >= 0.0) {
            return Err(Error::invalid("channel.gamma_db", "capacity gap must be >= 0 dB"));
        }
        for (field, v) in [
            ("channel.beta0_db", self.beta0_db),
            ("channel.noise_psd_dbm_per_hz", self.noise_psd_dbm_per_hz),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        Ok(())
    }
}

impl UavParams {
    pub fn validate(&self) -> Result<()> {
        positive("uav.h_m", self.altitude_m)?;
        positive("uav.vmin_mps", self.v_min)?;
        positive("uav.vmax_mps", self.v_max)?;
        if self.v_min >= self.v_max {
            return Err(Error::invalid("uav.vmin_mps", "must be < vmax_mps"));
        }
        positive("uav.amax_mps2", self.a_max)?;
        positive("uav.c1", self.c1)?;
        positive("uav.c2", self.c2)?;
        positive("uav.g", self.gravity)?;
        if !(self.mass_kg.is_finite() && self.mass_kg >= 0.0) {
            return Err(Error::invalid("uav.mass_kg", "must be >= 0"));
        }
        Ok(())
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("nodes", "at least one ground node is required"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            n.validate(i)?;
        }
        self.channel.validate()?;
        self.uav.validate()?;
        positive("horizon.t_s", self.period_s)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn snr(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| reference_snr(n, &self.channel))
            .collect()
    }

    pub fn centroid(&self) -> Vec2 {
        let sum = self
            .nodes
            .iter()
            .fold(Vec2::ZERO, |acc, n| acc + n.position);
        sum * (1.0 / self.nodes.len() as f64)
    }
}

impl RhoConfig {
    /// Checks the config against a horizon of `period_s` seconds.
    pub fn validate(&self, period_s: f64) -> Result<()> {
        positive("rho.delta1_m", self.delta1_m)?;
        positive("rho.delta2_m", self.delta2_m)?;
        positive("rho.execute_s", self.execute_s)?;
        positive("rho.window_s", self.window_s)?;
        let ratio = self.delta2_m / self.delta1_m;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::invalid(
                "rho.delta2_m",
                format!(
                    "must be an integer multiple of delta1_m ({} / {} = {ratio})",
                    self.delta2_m, self.delta1_m
                ),
            ));
        }
        if self.execute_s > self.window_s {
            return Err(Error::invalid("rho.execute_s", "must be <= window_s"));
        }
        if self.window_s > period_s {
            return Err(Error::invalid("rho.window_s", "must be <= horizon.t_s"));
        }
        Ok(())
    }

    /// N_Δ = Δ2 / Δ1.
    pub fn coarse_factor(&self) -> usize {
        (self.delta2_m / self.delta1_m).round() as usize
    }

    /// The configuration under which receding-horizon optimization reduces
    /// to a single full-horizon solve.
    pub fn full_horizon(period_s: f64, delta1_m: f64) -> Self {
        RhoConfig {
            delta1_m,
            delta2_m: delta1_m,
            window_s: period_s,
            execute_s: period_s,
        }
    }
}

/// A validated scenario plus the optional receding-horizon section of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub rho: Option<RhoConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    x_m: f64,
    y_m: f64,
    tx_power_w: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelDoc {
    beta0_db: f64,
    noise_psd_dbm_per_hz: f64,
    #[serde(default)]
    gamma_db: f64,
    alpha: f64,
    bandwidth_hz: f64,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UavDoc {
    h_m: f64,
    vmin_mps: f64,
    vmax_mps: f64,
    amax_mps2: f64,
    c1: f64,
    c2: f64,
    #[serde(default)]
    mass_kg: f64,
    #[serde(default = "default_gravity")]
    g: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonDoc {
    t_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    nodes: Vec<NodeDoc>,
    channel: ChannelDoc,
    uav: UavDoc,
    horizon: HorizonDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<RhoConfig>,
}

impl From<ScenarioDoc> for ScenarioFile {
    fn from(doc: ScenarioDoc) -> Self {
        let scenario = Scenario {
            nodes: doc
                .nodes
                .into_iter()
                .map(|n| GroundNode {
                    position: Vec2::new(n.x_m, n.y_m),
                    transmit_power: n.tx_power_w,
                })
                .collect(),
            channel: ChannelParams {
                beta0_db: doc.channel.beta0_db,
                noise_psd_dbm_per_hz: doc.channel.noise_psd_dbm_per_hz,
                capacity_gap_db: doc.channel.gamma_db,
                pathloss_exponent: doc.channel.alpha,
                bandwidth_hz: doc.channel.bandwidth_hz,
            },
            uav: UavParams {
                altitude_m: doc.uav.h_m,
                v_min: doc.uav.vmin_mps,
                v_max: doc.uav.vmax_mps,
                a_max: doc.uav.amax_mps2,
                c1: doc.uav.c1,
                c2: doc.uav.c2,
                mass_kg: doc.uav.mass_kg,
                gravity: doc.uav.g,
            },
            period_s: doc.horizon.t_s,
        };
        ScenarioFile {
            scenario,
            rho: doc.rho,
        }
    }
}

impl From<&ScenarioFile> for ScenarioDoc {
    fn from(file: &ScenarioFile) -> Self {
        let s = &file.scenario;
        ScenarioDoc {
            nodes: s
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    x_m: n.position.x,
                    y_m: n.position.y,
                    tx_power_w: n.transmit_power,
                })
                .collect(),
            channel: ChannelDoc {
                beta0_db: s.channel.beta0_db,
                noise_psd_dbm_per_hz: s.channel.noise_psd_dbm_per_hz,
                gamma_db: s.channel.capacity_gap_db,
                alpha: s.channel.pathloss_exponent,
                bandwidth_hz: s.channel.bandwidth_hz,
            },
            uav: UavDoc {
                h_m: s.uav.altitude_m,
                vmin_mps: s.uav.v_min,
                vmax_mps: s.uav.v_max,
                amax_mps2: s.uav.a_max,
                c1: s.uav.c1,
                c2: s.uav.c2,
                mass_kg: s.uav.mass_kg,
                g: s.uav.gravity,
            },
            horizon: HorizonDoc { t_s: s.period_s },
            rho: file.rho,
        }
    }
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if let Some(rho) = &self.rho {
            rho.validate(self.scenario.period_s)?;
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|source| Error::Parse {
            path: origin.to_path_buf(),
            source,
        })?;
        let file = ScenarioFile::from(doc);
        file.validate()?;
        Ok(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ScenarioDoc::from(self)).expect("scenario serializes")
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ScenarioNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    ScenarioFile::from_json_str(&text, path)
}

pub fn save_scenario(path: impl AsRef<Path>, file: &ScenarioFile) -> Result<()> {
    fs::write(path, file.to_json_string())?;
    Ok(())
}

/// Simulation constants used throughout the examples and tests: five nodes,
/// 100 m altitude, 5–30 m/s speed range, 3 m/s² acceleration limit,
/// c1 = 0.03125, c2 = 1500, 1 MHz bandwidth, β0 = −40 dB, 10 mW per node.
pub fn reference_scenario(nodes: Vec<Vec2>, period_s: f64) -> Scenario {
    Scenario {
        nodes: nodes
            .into_iter()
            .map(|position| GroundNode {
                position,
                transmit_power: 0.01,
            })
            .collect(),
        channel: ChannelParams {
            beta0_db: -40.0,
            noise_psd_dbm_per_hz: -169.0,
            capacity_gap_db: 0.0,
            pathloss_exponent: 2.0,
            bandwidth_hz: 1e6,
        },
        uav: UavParams {
            altitude_m: 100.0,
            v_min: 5.0,
            v_max: 30.0,
            a_max: 3.0,
            c1: 0.03125,
            c2: 1500.0,
            mass_kg: 0.0,
            gravity: DEFAULT_GRAVITY,
        },
        period_s,
    }
}

/// `count` nodes drawn uniformly from a square of side `side_m` centred at the origin.
pub fn random_layout(count: usize, side_m: f64, seed: u64) -> Vec<Vec2> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            Vec2::new(
                rng.gen_range(-0.5..0.5) * side_m,
                rng.gen_range(-0.5..0.5) * side_m,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SAMPLE_FILE: &str = r#"{
        "nodes": [
            {"x_m": 0, "y_m": 0, "tx_power_w": 0.01},
            {"x_m": 1000, "y_m": 0, "tx_power_w": 0.01},
            {"x_m": 0, "y_m": 1000, "tx_power_w": 0.01},
            {"x_m": -800, "y_m": 300, "tx_power_w": 0.01},
            {"x_m": 500, "y_m": -1200, "tx_power_w": 0.01}
        ],
        "channel": {"beta0_db": -40, "noise_psd_dbm_per_hz": -169, "alpha": 2, "bandwidth_hz": 1e6},
        "uav": {"h_m": 100, "vmin_mps": 5, "vmax_mps": 30, "amax_mps2": 3, "c1": 0.03125, "c2": 1500},
        "horizon": {"t_s": 600},
        "rho": {"delta1_m": 30, "delta2_m": 120, "window_s": 120, "execute_s": 80}
    }"#;

    fn parse(text: &str) -> Result<ScenarioFile> {
        ScenarioFile::from_json_str(text, Path::new("inline.json"))
    }

    #[test]
    fn loads_reference_parameters() {
        let file = parse(SAMPLE_FILE).unwrap();
        let s = &file.scenario;
        assert_eq!(s.num_nodes(), 5);
        assert_eq!(s.uav.altitude_m, 100.0);
        assert_eq!(s.uav.gravity, 9.8);
        assert_eq!(s.uav.mass_kg, 0.0);
        assert_eq!(s.channel.capacity_gap_db, 0.0);
        assert_eq!(file.rho.unwrap().coarse_factor(), 4);
    }

    #[test]
    fn rejects_zero_min_speed() {
        let text = SAMPLE_FILE.replace("\"vmin_mps\": 5", "\"vmin_mps\": 0");
        match parse(&text) {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "uav.vmin_mps"),
            other => panic!("expected invalid vmin, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_integer_coarse_ratio() {
        let text = SAMPLE_FILE.replace("\"delta2_m\": 120", "\"delta2_m\": 100");
        match parse(&text) {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "rho.delta2_m"),
            other => panic!("expected invalid delta2, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_location() {
        let text = SAMPLE_FILE.replace("\"x_m\": 1000,", "");
        let err = parse(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x_m") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_scenario("/nonexistent/scenario.json").unwrap_err();
        assert_eq!(err.code(), "scenario_not_found");
    }

    #[test]
    fn reference_snr_matches_direct_evaluation() {
        let s = reference_scenario(vec![Vec2::ZERO], 100.0);
        let gamma = reference_snr(&s.nodes[0], &s.channel);
        // 0.01 W * 1e-4 / 10^((-109 - 30)/10) W
        let expected = 1e-6 / 10f64.powf(-13.9);
        assert_relative_eq!(gamma, expected, max_relative = 1e-12);
        assert_relative_eq!(gamma, 7.943e7, max_relative = 1e-4);
        assert_relative_eq!(10.0 * gamma.log10(), 79.0, max_relative = 1e-9);
    }

    #[test]
    fn reference_snr_scales_linearly() {
        let s = reference_scenario(vec![Vec2::ZERO], 100.0);
        let base = reference_snr(&s.nodes[0], &s.channel);
        let mut ch = s.channel;
        ch.capacity_gap_db = 10.0 * 2f64.log10();
        assert_relative_eq!(reference_snr(&s.nodes[0], &ch), base / 2.0, max_relative = 1e-12);
        let mut node = s.nodes[0];
        node.transmit_power *= 2.0;
        assert_relative_eq!(reference_snr(&node, &s.channel), base * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn reference_snr_monotone_on_grid() {
        let s = reference_scenario(vec![Vec2::ZERO], 100.0);
        let eval = |p: f64, b: f64, g: f64, n: f64| {
            let node = GroundNode { position: Vec2::ZERO, transmit_power: p };
            let ch = ChannelParams {
                beta0_db: b,
                capacity_gap_db: g,
                noise_psd_dbm_per_hz: n,
                ..s.channel
            };
            reference_snr(&node, &ch)
        };
        for &p in &[0.001, 0.01, 0.1] {
            for &b in &[-50.0, -40.0, -30.0] {
                for &g in &[0.0, 3.0, 6.0] {
                    for &n in &[-174.0, -169.0, -160.0] {
                        let base = eval(p, b, g, n);
                        assert!(eval(p * 1.5, b, g, n) > base);
                        assert!(eval(p, b + 1.0, g, n) > base);
                        assert!(eval(p, b, g + 1.0, n) < base);
                        assert!(eval(p, b, g, n + 1.0) < base);
                    }
                }
            }
        }
    }

    #[test]
    fn min_power_speed_value() {
        let s = reference_scenario(vec![Vec2::ZERO], 100.0);
        assert_relative_eq!(s.uav.min_power_speed(), 11.2468, max_relative = 1e-4);
    }

    #[test]
    fn save_load_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut file = parse(SAMPLE_FILE).unwrap();
        // values without short decimal representations
        file.scenario.nodes[0].position = Vec2::new(0.1 + 0.2, 1.0 / 3.0);
        file.scenario.uav.c1 = std::f64::consts::PI / 100.0;
        file.scenario.uav.mass_kg = 9.65;
        save_scenario(&path, &file).unwrap();
        let back = load_scenario(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(
            back.scenario.nodes[0].position.x.to_bits(),
            file.scenario.nodes[0].position.x.to_bits()
        );
    }
}
