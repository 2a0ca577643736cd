//! Traffic-jam approach scenario.
//!
//! An ego vehicle approaches the slow tail of a traffic jam that sits in a
//! left-hand curve. Both vehicles are points on the curve centreline, the
//! gap between them is measured as arc length. The ego radar sees the target
//! once the target's bearing relative to the ego heading falls inside half the
//! aperture; on a circle of radius `R` that happens when the arc gap is at most
//! `R * aperture_rad`. After a fixed reaction delay the ego brakes at constant
//! deceleration until it has matched the target speed.
//!
//! [`simulate`] integrates this model in time; [`oracle`] evaluates the
//! closed-form stopping-gap condition and serves as an independent check.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const KMH_TO_MS: f64 = 1.0 / 3.6;

/// Default upper aperture bound (deg), used when validating a [`PhysicsConfig`].
pub const DEFAULT_APERTURE_MAX_DEG: f64 = 25.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("simulation exceeded {max_sim_time} s without collision or speed match for {params}")]
    NonTermination {
        params: ScenarioParams,
        max_sim_time: f64,
    },
    #[error("invalid physics config: {0}")]
    InvalidConfig(String),
    #[error("failed to read physics config {path}: {message}")]
    ConfigFile { path: String, message: String },
}

/// One point of the scenario parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Ego vehicle speed, km/h.
    pub speed_ego: f64,
    /// Speed of the last vehicle in the jam, km/h.
    pub speed_target: f64,
    /// Full cone angle of the ego radar, degrees.
    pub aperture_angle: f64,
}

impl ScenarioParams {
    pub fn new(speed_ego: f64, speed_target: f64, aperture_angle: f64) -> Self {
        Self {
            speed_ego,
            speed_target,
            aperture_angle,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.speed_ego, self.speed_target, self.aperture_angle]
    }

    /// Builds params from a 3-element coordinate slice in
    /// `(speed_ego, speed_target, aperture_angle)` order.
    pub fn from_slice(coords: &[f64]) -> Option<Self> {
        match coords {
            [e, t, a] => Some(Self::new(*e, *t, *a)),
            _ => None,
        }
    }

    /// Closing speed in m/s.
    pub fn closing_speed(&self) -> f64 {
        (self.speed_ego - self.speed_target) * KMH_TO_MS
    }
}

impl fmt::Display for ScenarioParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(speed_ego={} km/h, speed_target={} km/h, aperture={} deg)",
            self.speed_ego, self.speed_target, self.aperture_angle
        )
    }
}

/// Vehicle, sensor and integrator constants of the simulated scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Radius of the curve, m.
    pub curve_radius: f64,
    /// Braking deceleration, m/s².
    pub decel: f64,
    /// Delay between detection and braking onset, s.
    pub reaction_time: f64,
    /// Maximum radar range, m.
    pub radar_max_range: f64,
    /// Arc distance from ego to target at t = 0, m.
    pub initial_gap: f64,
    /// Integrator step, s.
    pub dt: f64,
    /// Simulation horizon, s.
    pub max_sim_time: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            curve_radius: 50.0,
            decel: 6.0,
            reaction_time: 0.5,
            radar_max_range: 150.0,
            initial_gap: 100.0,
            dt: 0.01,
            max_sim_time: 60.0,
        }
    }
}

impl PhysicsConfig {
    /// Checks field positivity, the step bound, and that the initial gap lies
    /// outside the widest detection arc of the default box.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fields = [
            ("curve_radius", self.curve_radius),
            ("decel", self.decel),
            ("reaction_time", self.reaction_time),
            ("radar_max_range", self.radar_max_range),
            ("initial_gap", self.initial_gap),
            ("dt", self.dt),
            ("max_sim_time", self.max_sim_time),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScenarioError::InvalidConfig(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if self.dt > 0.1 {
            return Err(ScenarioError::InvalidConfig(format!(
                "dt must be <= 0.1 s, got {}",
                self.dt
            )));
        }
        let widest = self.curve_radius * DEFAULT_APERTURE_MAX_DEG.to_radians();
        if self.initial_gap <= widest {
            return Err(ScenarioError::InvalidConfig(format!(
                "initial_gap {} m must exceed the widest detection arc {widest:.4} m",
                self.initial_gap
            )));
        }
        Ok(())
    }

    /// Loads a config from JSON (`.json` extension or a leading `{`) or from
    /// flat `key = value` lines. Missing keys keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let is_json = path.extension().is_some_and(|ext| ext == "json")
            || text.trim_start().starts_with('{');
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            Self::parse_key_values(&text)
        };
        let config = parsed.map_err(|message| ScenarioError::ConfigFile {
            path: path.display().to_string(),
            message,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Parses `key = value` (or `key: value`) lines; `#` starts a comment.
    pub fn parse_key_values(text: &str) -> Result<Self, String> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
            let slot = match key.trim() {
                "curve_radius" => &mut config.curve_radius,
                "decel" => &mut config.decel,
                "reaction_time" => &mut config.reaction_time,
                "radar_max_range" => &mut config.radar_max_range,
                "initial_gap" => &mut config.initial_gap,
                "dt" => &mut config.dt,
                "max_sim_time" => &mut config.max_sim_time,
                other => return Err(format!("line {}: unknown key `{other}`", lineno + 1)),
            };
            *slot = value;
        }
        Ok(config)
    }
}

/// Binary scenario outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Collision,
    NoCollision,
}

impl Outcome {
    /// Classifier label: +1 for collision, -1 otherwise.
    pub fn label(self) -> f64 {
        match self {
            Outcome::Collision => 1.0,
            Outcome::NoCollision => -1.0,
        }
    }

    pub fn from_label(y: f64) -> Self {
        if y > 0.0 {
            Outcome::Collision
        } else {
            Outcome::NoCollision
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Collision => "collision",
            Outcome::NoCollision => "no_collision",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "collision" => Ok(Outcome::Collision),
            "no_collision" => Ok(Outcome::NoCollision),
            other => Err(format!(
                "unknown outcome `{other}` (expected collision or no_collision)"
            )),
        }
    }
}

/// Result of one simulated episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub outcome: Outcome,
    /// Arc gap at the detection instant, `None` if the target was never seen.
    pub detection_gap: Option<f64>,
    /// Smallest arc gap reached, clamped at zero.
    pub min_gap: f64,
    /// Time of collision or of the speed match, s.
    pub time_to_outcome: f64,
}

/// Arc distance at which the radar first sees the target.
pub fn detection_distance(p: &ScenarioParams, c: &PhysicsConfig) -> f64 {
    let arc = c.curve_radius * p.aperture_angle.to_radians();
    arc.min(c.radar_max_range)
}

/// Gap consumed from detection until the ego has matched the target speed.
pub fn required_gap(p: &ScenarioParams, c: &PhysicsConfig) -> f64 {
    let dv = p.closing_speed();
    if dv <= 0.0 {
        return 0.0;
    }
    dv * c.reaction_time + dv * dv / (2.0 * c.decel)
}

/// Signed stopping margin `detection_distance - required_gap`; negative means collision.
pub fn oracle_margin(p: &ScenarioParams, c: &PhysicsConfig) -> f64 {
    detection_distance(p, c) - required_gap(p, c)
}

/// Closed-form outcome of the constant-deceleration model.
pub fn oracle(p: &ScenarioParams, c: &PhysicsConfig) -> Outcome {
    if detection_distance(p, c) < required_gap(p, c) {
        Outcome::Collision
    } else {
        Outcome::NoCollision
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Cruise,
    Reaction { brake_at: f64 },
    Braking,
}

/// Time-stepped simulation of one episode.
///
/// The relative state (arc gap, ego speed) is advanced in steps of `c.dt`.
/// Steps are split at the detection crossing, at braking onset and at the
/// speed match so that each sub-step has constant acceleration.
pub fn simulate(p: &ScenarioParams, c: &PhysicsConfig) -> Result<SimTrace, ScenarioError> {
    if !crate::sampling::ParameterBox::scenario_default().contains(&p.as_array()) {
        log::warn!("simulating {p} outside the default parameter box");
    }

    let detect = detection_distance(p, c);
    let v_target = p.speed_target * KMH_TO_MS;
    let mut v_ego = p.speed_ego * KMH_TO_MS;
    let mut gap = c.initial_gap;
    let mut min_gap = gap;
    let mut t = 0.0_f64;
    let mut detection_gap = None;
    let mut phase = Phase::Cruise;

    if gap <= detect {
        detection_gap = Some(gap);
        phase = Phase::Reaction {
            brake_at: c.reaction_time,
        };
    }

    let mut step: u64 = 0;
    loop {
        if v_ego <= v_target {
            return Ok(SimTrace {
                outcome: Outcome::NoCollision,
                detection_gap,
                min_gap,
                time_to_outcome: t,
            });
        }
        if t >= c.max_sim_time {
            return Err(ScenarioError::NonTermination {
                params: *p,
                max_sim_time: c.max_sim_time,
            });
        }

        step += 1;
        let step_end = (step as f64 * c.dt).min(c.max_sim_time);
        let gap_before = gap;
        let t_before = t;

        while t < step_end {
            let mut h = step_end - t;
            let closing = v_ego - v_target;
            match phase {
                Phase::Cruise => {
                    let to_detect = (gap - detect) / closing;
                    if to_detect <= h {
                        h = to_detect.max(0.0);
                        gap = detect;
                        t += h;
                        detection_gap = Some(gap);
                        phase = Phase::Reaction {
                            brake_at: t + c.reaction_time,
                        };
                        continue;
                    }
                    gap -= closing * h;
                }
                Phase::Reaction { brake_at } => {
                    if brake_at <= t + h {
                        h = (brake_at - t).max(0.0);
                        phase = Phase::Braking;
                    }
                    gap -= closing * h;
                }
                Phase::Braking => {
                    let to_match = closing / c.decel;
                    if to_match <= h {
                        h = to_match;
                        gap -= closing * h - 0.5 * c.decel * h * h;
                        v_ego = v_target;
                        t += h;
                        break;
                    }
                    gap -= closing * h - 0.5 * c.decel * h * h;
                    v_ego -= c.decel * h;
                }
            }
            t += h;
        }

        if gap <= 0.0 {
            // Gap decreases monotonically within the step; locate the crossing linearly.
            let frac = gap_before / (gap_before - gap);
            let hit = t_before + frac * (t - t_before);
            return Ok(SimTrace {
                outcome: Outcome::Collision,
                detection_gap,
                min_gap: 0.0,
                time_to_outcome: hit,
            });
        }
        min_gap = min_gap.min(gap);
    }
}
