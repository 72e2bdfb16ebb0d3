//! Fields derived from a state (rho, S): current/osmotic/drift velocities,
//! the quantum kinetic, and loop circulations with winding classification.
//!
//! Differential stencils read raw neighbor values even next to masked
//! nodes (the values are finite there; only ratios against the vanishing
//! density are ill-defined), and the node mask gates outputs and norms.
//! This keeps the discrete quantum kinetic identical to the eigensolver
//! stencil on every unmasked node.

use std::sync::Arc;

use crate::constants::PhysicalConstants;
use crate::error::{CoreError, Result};
use crate::field::{ComplexField, NodeMask, ScalarField, VectorField};
use crate::grid::Neighbor;
use crate::numerics::{self, laplacian_at};
use crate::phase::PhaseField;

/// Relative density floor below which nodes are masked.
/// Velocities diverge at density zeros; trajectories provably avoid them,
/// so masked cells are unreachable and their field values are never used.
pub const DEFAULT_NODE_FLOOR: f64 = 1e-9;

/// Split a complex amplitude into density and phase.
///
/// Nodes with `|psi|^2 < node_floor * max` are masked and excluded from
/// phase edges. Returns the density (not renormalized) and the phase field.
pub fn polar_decompose(
    psi: &ComplexField,
    node_floor: f64,
    k: &PhysicalConstants,
) -> Result<(ScalarField, PhaseField)> {
    let rho = psi.density();
    let phase = PhaseField::from_complex(psi, node_floor, k.hbar)?;
    Ok((rho, phase))
}

/// Gradient of the phase from its edge increments, one component per axis,
/// in physical units. Central where both edges exist, second-order
/// one-sided at boundaries and against the mask.
pub fn phase_gradient(s: &PhaseField) -> Result<VectorField> {
    let grid = s.grid().clone();
    let n = grid.num_nodes();
    let d = grid.ndim();
    let mut comps = vec![vec![0.0; n]; d];
    for idx in 0..n {
        if s.mask().is_masked(idx) {
            continue;
        }
        for (axis, comp) in comps.iter_mut().enumerate() {
            let h = grid.physical_spacing(axis, idx);
            let plus = s.increment(axis, idx);
            let minus = match grid.neighbor(idx, axis, -1) {
                Neighbor::Node(nb) => s.increment(axis, nb),
                _ => f64::NAN,
            };
            comp[idx] = match (minus.is_nan(), plus.is_nan()) {
                (false, false) => (minus + plus) / (2.0 * h),
                (true, false) => one_sided_from_increments(s, axis, idx, 1, h),
                (false, true) => one_sided_from_increments(s, axis, idx, -1, h),
                (true, true) => 0.0,
            };
        }
    }
    VectorField::new(grid, comps)
}

fn one_sided_from_increments(s: &PhaseField, axis: usize, idx: usize, dir: i64, h: f64) -> f64 {
    let grid = s.grid();
    // First increment leaving idx in `dir`.
    let (i1, next) = if dir > 0 {
        match grid.neighbor(idx, axis, 1) {
            Neighbor::Node(nb) => (s.increment(axis, idx), nb),
            _ => return 0.0,
        }
    } else {
        match grid.neighbor(idx, axis, -1) {
            Neighbor::Node(nb) => (-s.increment(axis, nb), nb),
            _ => return 0.0,
        }
    };
    if i1.is_nan() {
        return 0.0;
    }
    // Second increment continuing in the same direction.
    let i2 = if dir > 0 {
        s.increment(axis, next)
    } else {
        match grid.neighbor(next, axis, -1) {
            Neighbor::Node(nb2) => -s.increment(axis, nb2),
            _ => f64::NAN,
        }
    };
    // Increments were measured stepping along `dir`; the derivative along
    // the +axis direction carries the sign of the step.
    if i2.is_nan() {
        dir as f64 * i1 / h
    } else {
        dir as f64 * (3.0 * i1 - i2) / (2.0 * h)
    }
}

/// Current velocity v = (grad S - (e/c) A_ext) / m.
pub fn current_velocity(
    s: &PhaseField,
    a_ext: Option<&VectorField>,
    k: &PhysicalConstants,
) -> Result<VectorField> {
    let mut grad = phase_gradient(s)?;
    let inv_m = 1.0 / k.mass;
    let coupling = k.charge / k.light_speed;
    if let Some(a) = a_ext {
        numerics::ensure_same_grid(s.grid(), a.grid(), "phase", "vector potential")?;
        for axis in 0..grad.ndim() {
            let a_comp: Vec<f64> = a.component(axis).to_vec();
            for (idx, g) in grad.component_mut(axis).iter_mut().enumerate() {
                if s.mask().is_masked(idx) {
                    *g = 0.0;
                } else {
                    *g = (*g - coupling * a_comp[idx]) * inv_m;
                }
            }
        }
    } else {
        for axis in 0..grad.ndim() {
            for g in grad.component_mut(axis).iter_mut() {
                *g *= inv_m;
            }
        }
    }
    Ok(grad)
}

/// Osmotic velocity u = (hbar/2m) grad(rho)/rho with the default floor.
pub fn osmotic_velocity(
    rho: &ScalarField,
    k: &PhysicalConstants,
) -> Result<(VectorField, NodeMask)> {
    osmotic_velocity_with_floor(rho, k, DEFAULT_NODE_FLOOR)
}

/// Osmotic velocity with an explicit relative node floor.
pub fn osmotic_velocity_with_floor(
    rho: &ScalarField,
    k: &PhysicalConstants,
    node_floor: f64,
) -> Result<(VectorField, NodeMask)> {
    let grid = rho.grid().clone();
    let mask = rho.relative_floor_mask(node_floor);
    let n = grid.num_nodes();
    let nu = k.diffusion;
    let mut comps = vec![vec![0.0; n]; grid.ndim()];
    for idx in 0..n {
        if mask.is_masked(idx) {
            continue;
        }
        for (axis, comp) in comps.iter_mut().enumerate() {
            let drho = numerics::partial(rho.values(), &grid, None, axis, idx);
            comp[idx] = nu * drho / rho.at(idx);
        }
    }
    Ok((VectorField::new(grid, comps)?, mask))
}

/// Quantum kinetic -(hbar^2/2m) lap(sqrt(rho)) / sqrt(rho).
pub fn quantum_kinetic(
    rho: &ScalarField,
    k: &PhysicalConstants,
) -> Result<(ScalarField, NodeMask)> {
    quantum_kinetic_with_floor(rho, k, DEFAULT_NODE_FLOOR)
}

pub fn quantum_kinetic_with_floor(
    rho: &ScalarField,
    k: &PhysicalConstants,
    node_floor: f64,
) -> Result<(ScalarField, NodeMask)> {
    let grid = rho.grid().clone();
    let mask = rho.relative_floor_mask(node_floor);
    let sqrt_rho: Vec<f64> = rho.values().iter().map(|&v| v.max(0.0).sqrt()).collect();
    let coeff = -k.hbar * k.hbar / (2.0 * k.mass);
    let n = grid.num_nodes();
    let mut out = vec![0.0; n];
    for (idx, o) in out.iter_mut().enumerate() {
        if mask.is_masked(idx) {
            continue;
        }
        let lap = laplacian_at(&sqrt_rho, &grid, None, idx);
        *o = coeff * lap / sqrt_rho[idx];
    }
    Ok((ScalarField::new(grid, out)?, mask))
}

/// The four velocity fields of a state, with the drift identities
/// b = v + u and b* = v - u holding node-wise by construction.
#[derive(Debug, Clone)]
pub struct KinematicFields {
    pub current: VectorField,
    pub osmotic: VectorField,
    pub forward_drift: VectorField,
    pub backward_drift: VectorField,
    pub mask: NodeMask,
}

impl KinematicFields {
    pub fn from_state(
        rho: &ScalarField,
        s: &PhaseField,
        a_ext: Option<&VectorField>,
        k: &PhysicalConstants,
        node_floor: f64,
    ) -> Result<KinematicFields> {
        numerics::ensure_same_grid(rho.grid(), s.grid(), "density", "phase")?;
        let v = current_velocity(s, a_ext, k)?;
        let (u, mask_u) = osmotic_velocity_with_floor(rho, k, node_floor)?;
        let mask = mask_u.or(s.mask());
        let b = v.combine(&u, 1.0, 1.0)?;
        let b_star = v.combine(&u, 1.0, -1.0)?;
        Ok(KinematicFields {
            current: v,
            osmotic: u,
            forward_drift: b,
            backward_drift: b_star,
            mask,
        })
    }
}

/// Outcome of a loop-circulation evaluation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WindingReport {
    /// The node loop that was integrated.
    pub loop_nodes: Vec<usize>,
    /// Circulation of dS around the loop (action units).
    pub circulation: f64,
    /// Nearest integer multiple of h.
    pub nearest_integer: i64,
    /// |circulation - n h|.
    pub residual: f64,
    /// residual <= tolerance (action units) supplied at call time.
    pub accepted: bool,
    /// (e/c) * loop integral of A_ext (the enclosed-flux term); zero
    /// without a vector potential.
    pub flux_correction: f64,
    /// Kinetic circulation: loop integral of m v = circulation - flux term.
    pub kinetic_circulation: f64,
}

/// Circulation of the phase around a closed node loop.
///
/// The loop is an ordered node cycle on lattice edges; the closing edge
/// from the last node back to the first is implicit. Crossing a masked
/// node is an error naming the offending node.
pub fn circulation(
    s: &PhaseField,
    loop_nodes: &[usize],
    a_ext: Option<&VectorField>,
    k: &PhysicalConstants,
    tolerance: f64,
) -> Result<WindingReport> {
    if loop_nodes.len() < 3 {
        return Err(CoreError::Loop("loop needs at least 3 nodes".into()));
    }
    for &nd in loop_nodes {
        if s.mask().is_masked(nd) {
            return Err(CoreError::Loop(format!("loop crosses masked node {nd}")));
        }
    }
    let m = loop_nodes.len();
    let mut circ = 0.0;
    for e in 0..m {
        let a = loop_nodes[e];
        let b = loop_nodes[(e + 1) % m];
        circ += s.directed_increment(a, b)?;
    }
    let h = s.planck();
    let n = (circ / h).round();
    let residual = (circ - n * h).abs();

    let flux_correction = match a_ext {
        None => 0.0,
        Some(a) => {
            numerics::ensure_same_grid(s.grid(), a.grid(), "phase", "vector potential")?;
            // By the discrete Stokes identity this line integral equals the
            // sum of plaquette curls of A over the enclosed region.
            k.charge / k.light_speed * numerics::loop_line_integral(a, loop_nodes)?
        }
    };

    Ok(WindingReport {
        loop_nodes: loop_nodes.to_vec(),
        circulation: circ,
        nearest_integer: n as i64,
        residual,
        accepted: residual <= tolerance,
        flux_correction,
        kinetic_circulation: circ - flux_correction,
    })
}

/// The full node cycle of a ring grid.
pub fn ring_loop(grid: &Arc<crate::grid::Grid>) -> Vec<usize> {
    (0..grid.num_nodes()).collect()
}

/// The angular loop of a polar grid at radial index `i`.
pub fn polar_angular_loop(grid: &Arc<crate::grid::Grid>, i: usize) -> Vec<usize> {
    let (_, nphi) = grid.dims();
    (0..nphi).map(|j| grid.flat(i, j)).collect()
}
