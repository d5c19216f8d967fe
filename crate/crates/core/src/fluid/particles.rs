use crate::math::Vec3;

/// Fluid particle state.
///
/// Slots are append-only: emission pushes new particles and removal only
/// clears the `active` flag, so a slot index identifies one particle for the
/// whole run. `capacity` bounds the total number of slots ever emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub active: Vec<bool>,
    pub capacity: usize,
}

impl ParticleSystem {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            positions: Vec::with_capacity(capacity),
            velocities: Vec::with_capacity(capacity),
            active: Vec::with_capacity(capacity),
            capacity,
        }
    }

    /// Builds a system whose particles are all active and at rest.
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        let n = positions.len();
        Self {
            velocities: vec![Vec3::zeros(); n],
            active: vec![true; n],
            positions,
            capacity: n,
        }
    }

    /// Number of slots in use (active or not).
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    /// Appends an active particle. Returns false when the system is full.
    pub fn push(&mut self, position: Vec3, velocity: Vec3) -> bool {
        if self.len() >= self.capacity {
            return false;
        }
        self.positions.push(position);
        self.velocities.push(velocity);
        self.active.push(true);
        true
    }

    /// Copy holding only the active particles, in slot order.
    pub fn compacted(&self) -> Self {
        let idx = self.active_indices();
        Self {
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            velocities: idx.iter().map(|&i| self.velocities[i]).collect(),
            active: vec![true; idx.len()],
            capacity: idx.len(),
        }
    }

    /// Number of active particles strictly below `y_goal`.
    pub fn count_below(&self, y_goal: f64) -> usize {
        (0..self.len())
            .filter(|&i| self.active[i] && self.positions[i].y < y_goal)
            .count()
    }
}

/// Deactivates every active particle with `y ≥ y_goal` and returns how many
/// were removed.
pub fn deactivate_lifted(system: &mut ParticleSystem, y_goal: f64) -> usize {
    let mut removed = 0;
    for (pos, active) in system.positions.iter().zip(system.active.iter_mut()) {
        if *active && pos.y >= y_goal {
            *active = false;
            removed += 1;
        }
    }
    removed
}
