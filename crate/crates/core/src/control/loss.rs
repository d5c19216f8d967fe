use crate::fluid::particles::ParticleSystem;
use crate::math::Vec3;

/// `½(y_goal − y)²` below the goal, zero at or above it.
#[inline]
pub fn particle_loss(x: &Vec3, y_goal: f64) -> f64 {
    if x.y < y_goal {
        let d = y_goal - x.y;
        0.5 * d * d
    } else {
        0.0
    }
}

/// Loss of one state, summed over active particles.
pub fn system_loss(system: &ParticleSystem, y_goal: f64) -> f64 {
    system
        .positions
        .iter()
        .zip(&system.active)
        .filter(|(_, &a)| a)
        .map(|(x, _)| particle_loss(x, y_goal))
        .sum()
}

/// Loss summed over a sequence of states.
pub fn total_loss(states: &[ParticleSystem], y_goal: f64) -> f64 {
    states.iter().map(|s| system_loss(s, y_goal)).sum()
}
