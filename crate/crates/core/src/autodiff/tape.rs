//! Computation graph of a forward rollout.
//!
//! Nodes are whole sub-steps (gravity, prediction, one density pass, one
//! suction evaluation, one update-and-project, the velocity update, the
//! loss) rather than scalar operations, so a tape grows with
//! `steps × particles`. Each node keeps its output and the per-particle
//! intermediates its reverse pass needs. Neighbor lists, clamp masks and
//! active sets are recorded as constants.

use std::rc::Rc;

use crate::error::TapeError;
use crate::fluid::boundary::{Boundary, ClampMask};
use crate::fluid::neighbors::NeighborTable;
use crate::fluid::params::FluidParams;
use crate::fluid::solver::{density_pass, density_pass_backward, DensityCache};
use crate::fluid::step::{apply_gravity, predict, suction_pass, update_and_project, velocity_update, StepEnv};
use crate::math::{is_finite, Vec3};
use crate::suction::{attraction_jacobian, upward_displacement_grad, SuctionParams};

/// Handle of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Particles(Vec<Vec3>),
    Point(Vec3),
    Scalar(f64),
}

impl Value {
    fn byte_size(&self) -> usize {
        match self {
            Value::Particles(v) => v.len() * std::mem::size_of::<Vec3>(),
            Value::Point(_) => 24,
            Value::Scalar(_) => 8,
        }
    }

    fn zeros_like(&self) -> Value {
        match self {
            Value::Particles(v) => Value::Particles(vec![Vec3::zeros(); v.len()]),
            Value::Point(_) => Value::Point(Vec3::zeros()),
            Value::Scalar(_) => Value::Scalar(0.0),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Particles(v) => v.iter().all(is_finite),
            Value::Point(p) => is_finite(p),
            Value::Scalar(s) => s.is_finite(),
        }
    }

    fn bits_eq(&self, other: &Value) -> bool {
        let vb = |v: &Vec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        match (self, other) {
            (Value::Particles(a), Value::Particles(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| vb(x) == vb(y))
            }
            (Value::Point(a), Value::Point(b)) => vb(a) == vb(b),
            (Value::Scalar(a), Value::Scalar(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }

    pub fn as_particles(&self) -> Option<&[Vec3]> {
        match self {
            Value::Particles(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<Vec3> {
        match self {
            Value::Point(p) => Some(*p),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(s) => Some(*s),
            _ => None,
        }
    }

    fn particles_mut(&mut self) -> &mut Vec<Vec3> {
        match self {
            Value::Particles(v) => v,
            _ => unreachable!("particle adjoint expected"),
        }
    }
}

/// Particle positions after a step together with the particles still active.
#[derive(Clone, Debug)]
pub struct StateRef {
    pub positions: NodeId,
    pub active: Rc<[usize]>,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Gravity { v: NodeId, active: Rc<[usize]> },
    Predict { x: NodeId, v: NodeId, active: Rc<[usize]> },
    Density { p: NodeId, active: Rc<[usize]>, neighbors: Rc<NeighborTable>, cache: DensityCache },
    Suction { p: NodeId, nozzle: NodeId, active: Rc<[usize]> },
    Update { p: NodeId, dx: NodeId, s: Option<NodeId>, active: Rc<[usize]>, masks: Vec<ClampMask> },
    Velocity { p: NodeId, x: NodeId, active: Rc<[usize]> },
    Loss { states: Vec<StateRef>, y_goal: f64 },
    WeightedSum { terms: Vec<(f64, NodeId)> },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Gravity { v, .. } => vec![*v],
            Op::Predict { x, v, .. } => vec![*x, *v],
            Op::Density { p, .. } => vec![*p],
            Op::Suction { p, nozzle, .. } => vec![*p, *nozzle],
            Op::Update { p, dx, s, .. } => {
                let mut v = vec![*p, *dx];
                v.extend(*s);
                v
            }
            Op::Velocity { p, x, .. } => vec![*p, *x],
            Op::Loss { states, .. } => states.iter().map(|s| s.positions).collect(),
            Op::WeightedSum { terms } => terms.iter().map(|t| t.1).collect(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Gravity { .. } => "gravity",
            Op::Predict { .. } => "predict",
            Op::Density { .. } => "density",
            Op::Suction { .. } => "suction",
            Op::Update { .. } => "update",
            Op::Velocity { .. } => "velocity",
            Op::Loss { .. } => "loss",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }

    fn extra_bytes(&self) -> usize {
        match self {
            Op::Density { cache, .. } => cache.byte_size(),
            Op::Update { masks, .. } => masks.len() * 3,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub(crate) op: Op,
    value: Value,
    adjoint: Option<Value>,
}

impl Node {
    pub fn kind(&self) -> &'static str {
        self.op.kind()
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    /// Adjoint left by the last [`Tape::backward`] call, if the node was
    /// reached.
    pub fn adjoint(&self) -> Option<&Value> {
        self.adjoint.as_ref()
    }
}

/// Constants the recorded operations were evaluated with.
#[derive(Clone, Debug)]
pub struct TapeContext {
    pub fluid: FluidParams,
    pub suction: SuctionParams,
    pub boundary: Boundary,
    pub up: Vec3,
    pub y_goal: f64,
}

impl TapeContext {
    pub fn from_env(env: &StepEnv) -> Self {
        Self {
            fluid: env.fluid.clone(),
            suction: env.suction.clone(),
            boundary: env.boundary.clone(),
            up: env.up,
            y_goal: env.y_goal,
        }
    }

    pub fn env(&self) -> StepEnv<'_> {
        StepEnv {
            fluid: &self.fluid,
            suction: &self.suction,
            boundary: &self.boundary,
            up: self.up,
            y_goal: self.y_goal,
        }
    }
}

/// Default cap on recorded bytes (512 MiB).
pub const DEFAULT_TAPE_LIMIT: usize = 512 << 20;

#[derive(Clone, Debug)]
pub struct Tape {
    ctx: TapeContext,
    nodes: Vec<Node>,
    bytes: usize,
    limit: usize,
    adjoint_fault: f64,
    last_table: Option<Rc<NeighborTable>>,
}

impl Tape {
    pub fn new(ctx: TapeContext) -> Self {
        Self::with_limit(ctx, DEFAULT_TAPE_LIMIT)
    }

    pub fn with_limit(ctx: TapeContext, limit: usize) -> Self {
        Self { ctx, nodes: Vec::new(), bytes: 0, limit, adjoint_fault: 1.0, last_table: None }
    }

    pub fn context(&self) -> &TapeContext {
        &self.ctx
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by recorded values and caches.
    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TapeError> {
        self.nodes.get(id.0).ok_or(TapeError::UnknownNode(id.0))
    }

    pub fn value(&self, id: NodeId) -> Result<&Value, TapeError> {
        Ok(&self.node(id)?.value)
    }

    /// Scales the suction contribution to nozzle adjoints. Used only to
    /// check that gradient verification catches a broken adjoint.
    #[doc(hidden)]
    pub fn set_adjoint_fault(&mut self, factor: f64) {
        self.adjoint_fault = factor;
    }

    pub(crate) fn push(&mut self, op: Op, value: Value) -> Result<NodeId, TapeError> {
        let extra = match &op {
            Op::Density { neighbors, .. }
                if !self.last_table.as_ref().is_some_and(|t| Rc::ptr_eq(t, neighbors)) =>
            {
                neighbors.pair_count() * 8 + neighbors.len() * 8
            }
            _ => 0,
        };
        let needed = self.bytes + value.byte_size() + op.extra_bytes() + extra;
        if needed > self.limit {
            return Err(TapeError::MemoryCap { limit: self.limit, needed });
        }
        debug_assert!(op.inputs().iter().all(|i| i.0 < self.nodes.len()));
        self.bytes = needed;
        if let Op::Density { neighbors, .. } = &op {
            self.last_table = Some(neighbors.clone());
        }
        self.nodes.push(Node { op, value, adjoint: None });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Value) -> Result<NodeId, TapeError> {
        self.push(Op::Leaf, value)
    }

    /// Appends `Σ_t Σ_i ½(y_goal − y)²` over the given states, counting
    /// only active particles below the goal.
    pub fn push_loss(&mut self, states: &[StateRef], y_goal: f64) -> Result<NodeId, TapeError> {
        let mut total = 0.0;
        for s in states {
            let pos = self.value(s.positions)?.as_particles().ok_or(TapeError::UnknownNode(s.positions.0))?;
            total += s.active.iter().map(|&i| crate::control::particle_loss(&pos[i], y_goal)).sum::<f64>();
        }
        self.push(Op::Loss { states: states.to_vec(), y_goal }, Value::Scalar(total))
    }

    /// Appends `Σ_k a_k · L_k` over scalar nodes.
    pub fn push_weighted_sum(&mut self, terms: &[(f64, NodeId)]) -> Result<NodeId, TapeError> {
        let mut total = 0.0;
        for &(a, id) in terms {
            total += a * self.value(id)?.as_scalar().ok_or(TapeError::NotScalar(id.0))?;
        }
        self.push(Op::WeightedSum { terms: terms.to_vec() }, Value::Scalar(total))
    }

    /// Re-evaluates every node from its recorded inputs and checks that the
    /// outputs match bit for bit.
    pub fn replay(&self) -> Result<(), TapeError> {
        let env = self.ctx.env();
        let particles = |id: &NodeId| -> &[Vec3] { self.nodes[id.0].value.as_particles().unwrap() };
        for (k, node) in self.nodes.iter().enumerate() {
            let value = match &node.op {
                Op::Leaf => continue,
                Op::Gravity { v, active } => Value::Particles(apply_gravity(particles(v), active, env.fluid)),
                Op::Predict { x, v, active } => {
                    Value::Particles(predict(particles(x), particles(v), active, env.fluid.dt))
                }
                Op::Density { p, active, neighbors, cache } => {
                    let (dx, c) = density_pass(particles(p), active, neighbors, env.fluid);
                    if c != *cache {
                        return Err(TapeError::ReplayMismatch(k));
                    }
                    Value::Particles(dx)
                }
                Op::Suction { p, nozzle, active } => {
                    let e = self.nodes[nozzle.0].value.as_point().unwrap();
                    Value::Particles(suction_pass(particles(p), active, &e, &env))
                }
                Op::Update { p, dx, s, active, masks } => {
                    let (out, m) = update_and_project(
                        particles(p),
                        particles(dx),
                        s.as_ref().map(particles),
                        active,
                        env.boundary,
                    );
                    if m != *masks {
                        return Err(TapeError::ReplayMismatch(k));
                    }
                    Value::Particles(out)
                }
                Op::Velocity { p, x, active } => {
                    Value::Particles(velocity_update(particles(p), particles(x), active, env.fluid.dt))
                }
                Op::Loss { states, y_goal } => {
                    let mut total = 0.0;
                    for s in states {
                        let pos = particles(&s.positions);
                        total += s.active.iter().map(|&i| crate::control::particle_loss(&pos[i], *y_goal)).sum::<f64>();
                    }
                    Value::Scalar(total)
                }
                Op::WeightedSum { terms } => Value::Scalar(
                    terms.iter().map(|&(a, id)| a * self.nodes[id.0].value.as_scalar().unwrap()).sum(),
                ),
            };
            if !value.bits_eq(&node.value) {
                return Err(TapeError::ReplayMismatch(k));
            }
        }
        Ok(())
    }

    /// Reverse-mode sweep from the scalar node `loss`. Afterwards every node
    /// that influences `loss` carries its adjoint `∂loss/∂node`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TapeError> {
        let root = self.node(loss)?;
        if root.value.as_scalar().is_none() {
            return Err(TapeError::NotScalar(loss.0));
        }
        let mut adj: Vec<Option<Value>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Value::Scalar(1.0));
        let ctx = &self.ctx;
        let fluid = &ctx.fluid;

        for k in (0..=loss.0).rev() {
            let (before, rest) = adj.split_at_mut(k);
            let Some(out_adj) = rest[0].as_ref() else { continue };
            let nodes = &self.nodes;
            macro_rules! acc {
                ($id:expr) => {
                    accumulator(&mut *before, nodes, $id)
                };
            }
            let particles = |id: &NodeId| -> &[Vec3] { nodes[id.0].value.as_particles().unwrap() };

            match &nodes[k].op {
                Op::Leaf => {}
                Op::Gravity { v, active } => {
                    let g = out_adj.as_particles().unwrap();
                    let gv = acc!(*v).particles_mut();
                    for &i in active.iter() {
                        gv[i] += g[i];
                    }
                }
                Op::Predict { x, v, active } => {
                    let g = out_adj.as_particles().unwrap();
                    {
                        let gx = acc!(*x).particles_mut();
                        for &i in active.iter() {
                            gx[i] += g[i];
                        }
                    }
                    let gv = acc!(*v).particles_mut();
                    for &i in active.iter() {
                        gv[i] += g[i] * fluid.dt;
                    }
                }
                Op::Density { p, active, neighbors, cache } => {
                    let g = out_adj.as_particles().unwrap();
                    let pos = particles(p);
                    let gp = acc!(*p).particles_mut();
                    density_pass_backward(pos, active, neighbors, fluid, cache, g, gp);
                }
                Op::Suction { p, nozzle, active } => {
                    let g = out_adj.as_particles().unwrap();
                    let pos = particles(p);
                    let e = nodes[nozzle.0].value.as_point().unwrap();
                    let mut ge = Vec3::zeros();
                    {
                        let gp = acc!(*p).particles_mut();
                        for &i in active.iter() {
                            let (_, grad_lift) = upward_displacement_grad(&pos[i], &e, &ctx.suction);
                            let jac = attraction_jacobian(&pos[i], &e, &ctx.suction);
                            let lift_adj = ctx.up.dot(&g[i]);
                            let pull_adj = jac * g[i];
                            gp[i] += grad_lift * lift_adj - pull_adj;
                            ge += -grad_lift * lift_adj + pull_adj;
                        }
                    }
                    if let Value::Point(a) = acc!(*nozzle) {
                        *a += ge * self.adjoint_fault;
                    }
                }
                Op::Update { p, dx, s, active, masks } => {
                    let g = out_adj.as_particles().unwrap();
                    let masked: Vec<(usize, Vec3)> = active
                        .iter()
                        .map(|&i| {
                            let mut q = g[i];
                            for a in 0..3 {
                                if masks[i][a] {
                                    q[a] = 0.0;
                                }
                            }
                            (i, q)
                        })
                        .collect();
                    let targets: Vec<NodeId> = [Some(*p), Some(*dx), *s].into_iter().flatten().collect();
                    for t in targets {
                        let gt = acc!(t).particles_mut();
                        for &(i, q) in &masked {
                            gt[i] += q;
                        }
                    }
                }
                Op::Velocity { p, x, active } => {
                    let g = out_adj.as_particles().unwrap();
                    let inv_dt = 1.0 / fluid.dt;
                    {
                        let gp = acc!(*p).particles_mut();
                        for &i in active.iter() {
                            gp[i] += g[i] * inv_dt;
                        }
                    }
                    let gx = acc!(*x).particles_mut();
                    for &i in active.iter() {
                        gx[i] -= g[i] * inv_dt;
                    }
                }
                Op::Loss { states, y_goal } => {
                    let scale = out_adj.as_scalar().unwrap();
                    for s in states {
                        let pos = particles(&s.positions);
                        let gp = acc!(s.positions).particles_mut();
                        for &i in s.active.iter() {
                            if pos[i].y < *y_goal {
                                gp[i].y -= scale * (y_goal - pos[i].y);
                            }
                        }
                    }
                }
                Op::WeightedSum { terms } => {
                    let scale = out_adj.as_scalar().unwrap();
                    for &(a, id) in terms {
                        if let Value::Scalar(s) = acc!(id) {
                            *s += a * scale;
                        }
                    }
                }
            }
        }

        for (k, (node, a)) in self.nodes.iter_mut().zip(adj).enumerate() {
            if let Some(a) = &a {
                if !a.is_finite() {
                    return Err(TapeError::NonFiniteAdjoint(k));
                }
            }
            node.adjoint = a;
        }
        Ok(())
    }

}

fn accumulator<'a>(before: &'a mut [Option<Value>], nodes: &[Node], id: NodeId) -> &'a mut Value {
    before[id.0].get_or_insert_with(|| nodes[id.0].value.zeros_like())
}

impl Tape {
    /// Adjoint of a point-valued node (zero if it was not reached).
    pub fn point_adjoint(&self, id: NodeId) -> Result<Vec3, TapeError> {
        let node = self.node(id)?;
        Ok(node.adjoint.as_ref().and_then(Value::as_point).unwrap_or_else(Vec3::zeros))
    }
}
