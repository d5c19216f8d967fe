//! Density constraint projection and its adjoint.
//!
//! For particle `i` with neighbors `j`:
//!
//! ```text
//! ρ_i  = W(0) + Σ_j W(x_i − x_j)
//! C_i  = ρ_i / ρ0 − 1
//! λ_i  = −C_i / (|∇_i C_i|² + Σ_j |∇_j C_i|² + ε)
//! Δx_i = (1/ρ0) Σ_j (λ_i + λ_j + s_corr(x_i − x_j)) ∇W(x_i − x_j)
//! ```
//!
//! The reverse pass walks the same pairs and pushes adjoints through the
//! three routes by which positions reach `Δx`: the multipliers, the
//! artificial pressure and the kernel gradient itself. Pairwise quantities
//! are recomputed from the cached positions instead of being stored.

use super::kernel::Kernel;
use super::neighbors::NeighborTable;
use super::params::FluidParams;
use crate::math::Vec3;

/// Per-particle quantities of one density pass needed by the reverse pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensityCache {
    pub density: Vec<f64>,
    pub constraint: Vec<f64>,
    /// `∇_i C_i`.
    pub self_gradient: Vec<Vec3>,
    /// `Σ_k |∇_k C_i|²`.
    pub gradient_norm: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl DensityCache {
    pub(crate) fn byte_size(&self) -> usize {
        self.density.len() * (4 * 8 + 24)
    }
}

/// Constants of the artificial pressure term.
#[derive(Clone, Copy, Debug)]
struct Scorr {
    k: f64,
    n: i32,
    inv_w_dq: f64,
}

impl Scorr {
    fn new(params: &FluidParams, kernel: &Kernel) -> Self {
        let dq = Vec3::new(params.scorr_dq_ratio * params.kernel_radius, 0.0, 0.0);
        Self { k: params.scorr_k, n: params.scorr_n, inv_w_dq: 1.0 / kernel.poly6(&dq) }
    }

    #[inline]
    fn value(&self, w: f64) -> f64 {
        -self.k * (w * self.inv_w_dq).powi(self.n)
    }

    /// Gradient given `W(r)` and `∇W(r)`.
    #[inline]
    fn gradient(&self, w: f64, grad_w: &Vec3) -> Vec3 {
        if self.n == 0 {
            return Vec3::zeros();
        }
        let ratio = w * self.inv_w_dq;
        grad_w * (-self.k * self.n as f64 * ratio.powi(self.n - 1) * self.inv_w_dq)
    }
}

/// Artificial pressure `−k (W(r)/W(Δq))ⁿ`.
pub fn scorr(r: &Vec3, params: &FluidParams) -> f64 {
    let kernel = params.kernel();
    Scorr::new(params, &kernel).value(kernel.poly6(r))
}

/// `(ρ_i, C_i, ∇_i C_i, Σ_k |∇_k C_i|²)` for one particle.
#[inline]
fn constraint_terms(
    i: usize,
    positions: &[Vec3],
    neighbors: &NeighborTable,
    kernel: &Kernel,
    params: &FluidParams,
) -> (f64, f64, Vec3, f64) {
    let inv_rho0 = 1.0 / params.rest_density;
    let xi = positions[i];
    let mut rho = kernel.poly6(&Vec3::zeros());
    let mut grad_sum = Vec3::zeros();
    let mut sq = 0.0;
    for &j in neighbors.of(i) {
        let r = xi - positions[j];
        rho += kernel.poly6(&r);
        let g = kernel.spiky_gradient(&r);
        grad_sum += g;
        sq += g.norm_squared();
    }
    let self_grad = grad_sum * inv_rho0;
    let norm = self_grad.norm_squared() + sq * inv_rho0 * inv_rho0;
    (rho, rho / params.rest_density - 1.0, self_grad, norm)
}

/// Density constraint multiplier `λ_i`.
pub fn compute_lambda(
    i: usize,
    positions: &[Vec3],
    neighbors: &NeighborTable,
    params: &FluidParams,
) -> f64 {
    let kernel = params.kernel();
    let (_, c, _, norm) = constraint_terms(i, positions, neighbors, &kernel, params);
    -c / (norm + params.cfm_epsilon)
}

/// Position corrections from precomputed multipliers. Slots with no
/// neighbors, and inactive slots, get zero.
pub fn solve_density_constraint(
    positions: &[Vec3],
    neighbors: &NeighborTable,
    lambda: &[f64],
    params: &FluidParams,
) -> Vec<Vec3> {
    let kernel = params.kernel();
    let sc = Scorr::new(params, &kernel);
    let inv_rho0 = 1.0 / params.rest_density;
    (0..positions.len())
        .map(|i| {
            let xi = positions[i];
            let mut acc = Vec3::zeros();
            for &j in neighbors.of(i) {
                let r = xi - positions[j];
                let w = lambda[i] + lambda[j] + sc.value(kernel.poly6(&r));
                acc += kernel.spiky_gradient(&r) * w;
            }
            acc * inv_rho0
        })
        .collect()
}

/// One constraint projection: multipliers for every active slot followed by
/// the corrections. Returns the corrections and the reverse-pass cache.
pub fn density_pass(
    positions: &[Vec3],
    active: &[usize],
    neighbors: &NeighborTable,
    params: &FluidParams,
) -> (Vec<Vec3>, DensityCache) {
    let n = positions.len();
    let kernel = params.kernel();
    let mut cache = DensityCache {
        density: vec![0.0; n],
        constraint: vec![0.0; n],
        self_gradient: vec![Vec3::zeros(); n],
        gradient_norm: vec![0.0; n],
        lambda: vec![0.0; n],
    };
    for &i in active {
        let (rho, c, g, norm) = constraint_terms(i, positions, neighbors, &kernel, params);
        cache.density[i] = rho;
        cache.constraint[i] = c;
        cache.self_gradient[i] = g;
        cache.gradient_norm[i] = norm;
        cache.lambda[i] = -c / (norm + params.cfm_epsilon);
    }
    let dx = solve_density_constraint(positions, neighbors, &cache.lambda, params);
    (dx, cache)
}

/// Reverse pass of [`density_pass`]: accumulates `∂L/∂x` into `grad_x`
/// given `∂L/∂Δx` in `grad_dx`.
pub fn density_pass_backward(
    positions: &[Vec3],
    active: &[usize],
    neighbors: &NeighborTable,
    params: &FluidParams,
    cache: &DensityCache,
    grad_dx: &[Vec3],
    grad_x: &mut [Vec3],
) {
    let n = positions.len();
    let kernel = params.kernel();
    let sc = Scorr::new(params, &kernel);
    let inv_rho0 = 1.0 / params.rest_density;
    let lambda = &cache.lambda;

    // Route through the corrections: Δx_i = (1/ρ0) Σ_j w_ij g_ij.
    let mut grad_lambda = vec![0.0; n];
    for &i in active {
        let xi = positions[i];
        let di = grad_dx[i];
        for &j in neighbors.of(i) {
            let r = xi - positions[j];
            let w_pair = kernel.poly6(&r);
            let g = kernel.spiky_gradient(&r);
            let weight = lambda[i] + lambda[j] + sc.value(w_pair);
            let t = di.dot(&g) * inv_rho0;
            grad_lambda[i] += t;
            grad_lambda[j] += t;
            let grad_r = sc.gradient(w_pair, &kernel.poly6_gradient(&r)) * t
                + kernel.spiky_hessian(&r) * di * (weight * inv_rho0);
            grad_x[i] += grad_r;
            grad_x[j] -= grad_r;
        }
    }

    // Route through the multipliers: λ_i = −C_i / (S_i + ε).
    for &i in active {
        let gl = grad_lambda[i];
        if gl == 0.0 {
            continue;
        }
        let denom = cache.gradient_norm[i] + params.cfm_epsilon;
        let grad_c = -gl / denom;
        let grad_s = -gl * lambda[i] / denom;
        let grad_rho = grad_c * inv_rho0;
        let grad_self = cache.self_gradient[i] * (2.0 * grad_s);
        let xi = positions[i];
        for &j in neighbors.of(i) {
            let r = xi - positions[j];
            let g = kernel.spiky_gradient(&r);
            let grad_g = grad_self * inv_rho0 + g * (2.0 * grad_s * inv_rho0 * inv_rho0);
            let grad_r = kernel.poly6_gradient(&r) * grad_rho + kernel.spiky_hessian(&r) * grad_g;
            grad_x[i] += grad_r;
            grad_x[j] -= grad_r;
        }
    }
}
