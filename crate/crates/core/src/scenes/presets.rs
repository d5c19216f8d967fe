use super::{load_scene, Scene};
use crate::error::ConfigError;

pub const PRESET_NAMES: [&str; 2] = ["case1", "case2"];

const CASE1: &str = include_str!("../../scenes/case1.toml");
const CASE2: &str = include_str!("../../scenes/case2.toml");

/// Built-in scenes. Both share the cavity and differ only in emission and
/// the flow path that follows from it.
pub fn preset(name: &str) -> Result<Scene, ConfigError> {
    let text = match name {
        "case1" => CASE1,
        "case2" => CASE2,
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    load_scene(text)
}
