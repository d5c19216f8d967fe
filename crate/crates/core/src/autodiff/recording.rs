use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use super::tape::{NodeId, Op, StateRef, Tape, TapeContext, Value};
use crate::error::TapeError;
use crate::fluid::boundary::ClampMask;
use crate::fluid::neighbors::NeighborTable;
use crate::fluid::particles::ParticleSystem;
use crate::fluid::solver::DensityCache;
use crate::math::Vec3;

/// A tape being filled by successive [`crate::fluid::step`] calls, plus the
/// node handles of the current particle state.
#[derive(Clone, Debug)]
pub struct Recording {
    tape: Tape,
    x: NodeId,
    v: NodeId,
    p: NodeId,
    nozzle: Option<NodeId>,
    active: Rc<[usize]>,
    controls: Vec<NodeId>,
    states: Vec<StateRef>,
}

impl Recording {
    pub fn new(ctx: TapeContext, system: &ParticleSystem) -> Result<Self, TapeError> {
        Self::with_tape(Tape::new(ctx), system)
    }

    pub fn with_tape(mut tape: Tape, system: &ParticleSystem) -> Result<Self, TapeError> {
        let x = tape.leaf(Value::Particles(system.positions.clone()))?;
        let v = tape.leaf(Value::Particles(system.velocities.clone()))?;
        Ok(Self {
            tape,
            x,
            v,
            p: x,
            nozzle: None,
            active: system.active_indices().into(),
            controls: Vec::new(),
            states: Vec::new(),
        })
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    /// Nozzle leaf of every recorded step that had suction on.
    pub fn controls(&self) -> &[NodeId] {
        &self.controls
    }

    /// Positions after each recorded step.
    pub fn states(&self) -> &[StateRef] {
        &self.states
    }

    /// Appends the rollout loss over all recorded states.
    pub fn push_loss(&mut self) -> Result<NodeId, TapeError> {
        let y_goal = self.tape.context().y_goal;
        let states = self.states.clone();
        self.tape.push_loss(&states, y_goal)
    }

    pub(crate) fn begin_step(&mut self, nozzle: Option<Vec3>, active: Rc<[usize]>) -> Result<(), TapeError> {
        self.active = active;
        self.nozzle = match nozzle {
            Some(e) => {
                let id = self.tape.leaf(Value::Point(e))?;
                self.controls.push(id);
                Some(id)
            }
            None => None,
        };
        Ok(())
    }

    pub(crate) fn record_predict(&mut self, v1: &[Vec3], p0: &[Vec3]) -> Result<(), TapeError> {
        let active = self.active.clone();
        let v1 = self.tape.push(Op::Gravity { v: self.v, active: active.clone() }, Value::Particles(v1.to_vec()))?;
        self.p = self.tape.push(Op::Predict { x: self.x, v: v1, active }, Value::Particles(p0.to_vec()))?;
        Ok(())
    }

    pub(crate) fn record_iteration(
        &mut self,
        neighbors: &Rc<NeighborTable>,
        dx: Vec<Vec3>,
        cache: DensityCache,
        suction: Option<Vec<Vec3>>,
        next: &[Vec3],
        masks: Vec<ClampMask>,
    ) -> Result<(), TapeError> {
        let active = self.active.clone();
        let dx = self.tape.push(
            Op::Density { p: self.p, active: active.clone(), neighbors: neighbors.clone(), cache },
            Value::Particles(dx),
        )?;
        let s = match (suction, self.nozzle) {
            (Some(s), Some(nozzle)) => Some(
                self.tape
                    .push(Op::Suction { p: self.p, nozzle, active: active.clone() }, Value::Particles(s))?,
            ),
            _ => None,
        };
        self.p = self.tape.push(
            Op::Update { p: self.p, dx, s, active, masks },
            Value::Particles(next.to_vec()),
        )?;
        Ok(())
    }

    pub(crate) fn end_step(&mut self, velocities: &[Vec3], active_after: Rc<[usize]>) -> Result<(), TapeError> {
        let v = self.tape.push(
            Op::Velocity { p: self.p, x: self.x, active: self.active.clone() },
            Value::Particles(velocities.to_vec()),
        )?;
        self.x = self.p;
        self.v = v;
        self.states.push(StateRef { positions: self.p, active: active_after.clone() });
        self.active = active_after;
        Ok(())
    }

    /// Hash of every discrete choice made during the rollout: neighbor
    /// lists, boundary clamps, active sets and the loss branch of each
    /// particle. Two rollouts with equal signatures are on the same smooth
    /// piece of the loss.
    pub fn signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for k in 0..self.tape.len() {
            let node = self.tape.node(NodeId(k)).expect("in range");
            match &node.op {
                Op::Density { neighbors, active, .. } => {
                    neighbors.to_lists().hash(&mut h);
                    active.hash(&mut h);
                }
                Op::Update { masks, .. } => masks.hash(&mut h),
                _ => {}
            }
        }
        let y_goal = self.tape.context().y_goal;
        for s in &self.states {
            s.active.hash(&mut h);
            let pos = self.tape.value(s.positions).expect("state").as_particles().expect("particles");
            for &i in s.active.iter() {
                (pos[i].y < y_goal).hash(&mut h);
            }
        }
        h.finish()
    }
}
