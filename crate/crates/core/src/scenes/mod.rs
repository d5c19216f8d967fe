//! Cavity scenes: geometry, emission, flow path and run constants.
//!
//! Scenes are stored as TOML. A scene file must carry `schema_version`,
//! the `container` box, an `[emission]` table and a `flow_path` with at
//! least two vertices; every other field has a default. See
//! `docs/scene-schema.md` for the full schema.

mod presets;
mod sweep;

use serde::{Deserialize, Serialize};

pub use presets::{preset, PRESET_NAMES};
pub use sweep::{emission_sweep, EmissionSweep};

use crate::control::NozzleBounds;
use crate::error::ConfigError;
use crate::fluid::boundary::{Aabb, Boundary};
use crate::fluid::emission::EmissionSpec;
use crate::math::Vec3;

pub const SCHEMA_VERSION: u32 = 1;

fn default_up() -> Vec3 {
    Vec3::new(0.0, 1.0, 0.0)
}
fn default_gravity() -> Vec3 {
    Vec3::new(0.0, -981.0, 0.0)
}
fn default_warmup() -> usize {
    200
}
fn default_y_goal() -> f64 {
    10.0
}
fn default_capacity() -> usize {
    2000
}
fn default_rest_spacing() -> f64 {
    0.5
}
fn default_nozzle_height() -> f64 {
    1.0
}
fn default_nozzle_floor_clearance() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Direction of the suction lift (unit length).
    #[serde(default = "default_up")]
    pub up: Vec3,
    /// cm/s².
    #[serde(default = "default_gravity")]
    pub gravity: Vec3,
    /// Emission-only steps before the nozzle acts.
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    /// Removal height (cm).
    #[serde(default = "default_y_goal")]
    pub y_goal: f64,
    /// Maximum number of particles ever emitted.
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    /// Lattice spacing used to calibrate the rest density (cm).
    #[serde(default = "default_rest_spacing")]
    pub rest_spacing: f64,
    /// Height of the nozzle for the hand-crafted policies (cm).
    #[serde(default = "default_nozzle_height")]
    pub nozzle_height: f64,
    /// Lowest nozzle height above the floor allowed to the optimizer (cm).
    #[serde(default = "default_nozzle_floor_clearance")]
    pub nozzle_floor_clearance: f64,
    /// Polyline from the emission point along the main flow; its last
    /// vertex is the "end" of the flow and its arc-length midpoint the
    /// "middle".
    pub flow_path: Vec<Vec3>,
    pub container: Aabb,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
    pub emission: EmissionSpec,
}

impl Scene {
    /// Checks every scene invariant, naming the first one violated.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion { found: self.schema_version, expected: SCHEMA_VERSION });
        }
        if !self.container.is_valid() {
            return invalid("container: min must be below max on every axis");
        }
        for (k, ob) in self.obstacles.iter().enumerate() {
            if !ob.is_valid() {
                return invalid(&format!("obstacles[{k}]: min must be below max on every axis"));
            }
            if !self.container.contains_box(ob) {
                return invalid(&format!("obstacles[{k}]: must lie inside the container"));
            }
        }
        if ((self.up.norm() - 1.0).abs()) > 1e-9 {
            return invalid("up: must have unit length");
        }
        if !crate::math::is_finite(&self.gravity) {
            return invalid("gravity: must be finite");
        }
        let e = &self.emission;
        if !self.container.contains_strict(&e.point) || self.obstacles.iter().any(|ob| ob.contains(&e.point)) {
            return invalid("emission: point must lie strictly inside the container and outside every obstacle");
        }
        if (e.direction.norm() - 1.0).abs() > 1e-9 {
            return invalid("emission: direction must have unit length");
        }
        if ![e.rate, e.speed, e.jitter].iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return invalid("emission: rate, speed and jitter must be finite and >= 0");
        }
        if self.flow_path.len() < 2 {
            return invalid("flow_path: needs at least two vertices");
        }
        if !(self.y_goal.is_finite() && self.y_goal > self.container.min.y) {
            return invalid("y_goal: must lie above the container floor");
        }
        if !(self.rest_spacing > 0.0) {
            return invalid("rest_spacing: must be > 0");
        }
        if self.capacity == 0 {
            return invalid("capacity: must be > 0");
        }
        let lo = self.container.min.y + self.nozzle_floor_clearance;
        if !(self.nozzle_floor_clearance >= 0.0 && lo <= self.y_goal) {
            return invalid("nozzle_floor_clearance: must be >= 0 and leave room below y_goal");
        }
        Ok(())
    }

    pub fn boundary(&self, margin: f64) -> Boundary {
        Boundary { container: self.container, obstacles: self.obstacles.clone(), margin }
    }

    /// Region the optimized nozzle is kept in: inside the container walls
    /// horizontally, between the floor clearance and `y_goal` vertically.
    pub fn nozzle_bounds(&self) -> NozzleBounds {
        NozzleBounds {
            min: Vec3::new(self.container.min.x, self.container.min.y + self.nozzle_floor_clearance, self.container.min.z),
            max: Vec3::new(self.container.max.x, self.y_goal, self.container.max.z),
        }
    }

    fn at_nozzle_height(&self, p: &Vec3) -> Vec3 {
        Vec3::new(p.x, self.container.min.y + self.nozzle_height, p.z)
    }

    /// Nozzle position above the emission point.
    pub fn emission_nozzle_point(&self) -> Vec3 {
        self.at_nozzle_height(&self.emission.point)
    }

    /// Nozzle position above the end of the flow path.
    pub fn flow_end_point(&self) -> Vec3 {
        self.at_nozzle_height(self.flow_path.last().expect("validated flow path"))
    }

    /// Nozzle position above the arc-length midpoint of the flow path.
    pub fn flow_middle_point(&self) -> Vec3 {
        let lens: Vec<f64> = self.flow_path.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let half = lens.iter().sum::<f64>() * 0.5;
        let mut walked = 0.0;
        for (w, len) in self.flow_path.windows(2).zip(&lens) {
            if walked + len >= half && *len > 0.0 {
                let t = (half - walked) / len;
                return self.at_nozzle_height(&(w[0] + (w[1] - w[0]) * t));
            }
            walked += len;
        }
        self.flow_end_point()
    }

    /// Same scene with a different emission.
    pub fn with_emission(&self, emission: EmissionSpec) -> Scene {
        Scene { emission, ..self.clone() }
    }
}

/// Parses and validates a scene file.
pub fn load_scene(text: &str) -> Result<Scene, ConfigError> {
    let scene: Scene = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    scene.validate()?;
    Ok(scene)
}

/// Serializes a scene to TOML that [`load_scene`] reads back unchanged.
pub fn save_scene(scene: &Scene) -> String {
    toml::to_string(scene).expect("scene is always representable as TOML")
}
