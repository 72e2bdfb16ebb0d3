//! Finite-difference operators.
//!
//! Second-order central stencils everywhere; one-sided (still second-order)
//! first derivatives at reflecting boundaries; ghost-zero values past
//! absorbing boundaries; periodic axes wrap. Every operator takes an
//! optional node mask: masked nodes produce zero output, and differences
//! never read masked values (the stencil falls back to one-sided or marks
//! the output node as undefined, which callers treat via the same mask).

use std::sync::Arc;

use crate::error::Result;
use crate::field::{NodeMask, ScalarField, VectorField};
use crate::grid::{Grid, Neighbor, Topology};

/// Value one step along `axis`, honoring boundary ghosts.
#[inline]
fn sample(values: &[f64], grid: &Grid, idx: usize, axis: usize, dir: i64) -> Option<f64> {
    match grid.neighbor(idx, axis, dir) {
        Neighbor::Node(n) => Some(values[n]),
        Neighbor::GhostZero => Some(0.0),
        Neighbor::GhostMirror(n) => Some(values[n]),
    }
}

#[inline]
fn masked_at(mask: Option<&NodeMask>, idx: usize) -> bool {
    mask.map(|m| m.is_masked(idx)).unwrap_or(false)
}

/// Whether the neighbor sample in `dir` is usable (unmasked or a ghost).
#[inline]
fn neighbor_ok(grid: &Grid, mask: Option<&NodeMask>, idx: usize, axis: usize, dir: i64) -> bool {
    match grid.neighbor(idx, axis, dir) {
        Neighbor::Node(n) => !masked_at(mask, n),
        Neighbor::GhostZero | Neighbor::GhostMirror(_) => true,
    }
}

/// First derivative along `axis` in physical length units.
///
/// Central where both neighbors exist; second-order one-sided at
/// reflecting/bounded node-centered boundaries and next to masked nodes;
/// zero (and conceptually undefined) where no stencil fits.
pub fn partial(
    values: &[f64],
    grid: &Grid,
    mask: Option<&NodeMask>,
    axis: usize,
    idx: usize,
) -> f64 {
    if masked_at(mask, idx) {
        return 0.0;
    }
    let h = grid.physical_spacing(axis, idx);
    let ax = grid.axis(axis);
    let (i, j) = grid.unflat(idx);
    let pos = if axis == 0 { i } else { j };

    // Reflecting node-centered boundaries use one-sided differences.
    let at_lo =
        pos == 0 && ax.bc == crate::grid::BoundaryCondition::Reflecting && !ax.cell_centered;
    let at_hi =
        pos == ax.n - 1 && ax.bc == crate::grid::BoundaryCondition::Reflecting && !ax.cell_centered;

    let minus_ok = !at_lo && neighbor_ok(grid, mask, idx, axis, -1);
    let plus_ok = !at_hi && neighbor_ok(grid, mask, idx, axis, 1);

    match (minus_ok, plus_ok) {
        (true, true) => {
            let vm = sample(values, grid, idx, axis, -1).unwrap();
            let vp = sample(values, grid, idx, axis, 1).unwrap();
            (vp - vm) / (2.0 * h)
        }
        (false, true) => one_sided(values, grid, mask, axis, idx, 1, h),
        (true, false) => one_sided(values, grid, mask, axis, idx, -1, h),
        (false, false) => 0.0,
    }
}

fn one_sided(
    values: &[f64],
    grid: &Grid,
    mask: Option<&NodeMask>,
    axis: usize,
    idx: usize,
    dir: i64,
    h: f64,
) -> f64 {
    let v0 = values[idx];
    let n1 = match grid.neighbor(idx, axis, dir) {
        Neighbor::Node(n) if !masked_at(mask, n) => n,
        _ => return 0.0,
    };
    let v1 = values[n1];
    let n2_ok = neighbor_ok(grid, mask, n1, axis, dir);
    if n2_ok {
        if let Neighbor::Node(n2) = grid.neighbor(n1, axis, dir) {
            let v2 = values[n2];
            return dir as f64 * (-3.0 * v0 + 4.0 * v1 - v2) / (2.0 * h);
        }
    }
    dir as f64 * (v1 - v0) / h
}

/// Plain second derivative along `axis` (chart spacing folded to physical).
pub fn second_partial(
    values: &[f64],
    grid: &Grid,
    mask: Option<&NodeMask>,
    axis: usize,
    idx: usize,
) -> f64 {
    if masked_at(mask, idx) {
        return 0.0;
    }
    if !neighbor_ok(grid, mask, idx, axis, -1) || !neighbor_ok(grid, mask, idx, axis, 1) {
        return 0.0;
    }
    let h = grid.physical_spacing(axis, idx);
    let vm = sample(values, grid, idx, axis, -1).unwrap();
    let vp = sample(values, grid, idx, axis, 1).unwrap();
    (vp - 2.0 * values[idx] + vm) / (h * h)
}

/// Gradient of a scalar as a physical-component vector field.
pub fn gradient(f: &ScalarField, mask: Option<&NodeMask>) -> Result<VectorField> {
    let grid = f.grid().clone();
    let n = grid.num_nodes();
    let mut comps = vec![vec![0.0; n]; grid.ndim()];
    for idx in 0..n {
        for (axis, comp) in comps.iter_mut().enumerate() {
            comp[idx] = partial(f.values(), &grid, mask, axis, idx);
        }
    }
    VectorField::new(grid, comps)
}

/// Scalar Laplacian with the topology's metric terms.
pub fn laplacian(f: &ScalarField, mask: Option<&NodeMask>) -> Result<ScalarField> {
    let grid = f.grid().clone();
    let n = grid.num_nodes();
    let mut out = vec![0.0; n];
    for (idx, o) in out.iter_mut().enumerate() {
        *o = laplacian_at(f.values(), &grid, mask, idx);
    }
    ScalarField::new(grid, out)
}

/// Laplacian at one node; shared by field ops and Hamiltonian assembly.
pub fn laplacian_at(values: &[f64], grid: &Grid, mask: Option<&NodeMask>, idx: usize) -> f64 {
    if masked_at(mask, idx) {
        return 0.0;
    }
    match grid.topology {
        Topology::Line | Topology::Plane | Topology::Ring => (0..grid.ndim())
            .map(|axis| second_partial(values, grid, mask, axis, idx))
            .sum(),
        Topology::DiskPolar => {
            let (i, _) = grid.unflat(idx);
            let r = grid.axis(0).coord(i);
            let d2r = second_partial(values, grid, mask, 0, idx);
            let dr = radial_partial_plain(values, grid, mask, idx);
            let d2phi = second_partial(values, grid, mask, 1, idx);
            d2r + dr / r + d2phi
        }
    }
}

/// Central radial derivative with ghost-zero ends, matching the radial
/// eigensolver stencil (no one-sided fallback).
fn radial_partial_plain(values: &[f64], grid: &Grid, mask: Option<&NodeMask>, idx: usize) -> f64 {
    if !neighbor_ok(grid, mask, idx, 0, -1) || !neighbor_ok(grid, mask, idx, 0, 1) {
        return 0.0;
    }
    let h = grid.axis(0).spacing();
    let vm = sample(values, grid, idx, 0, -1).unwrap();
    let vp = sample(values, grid, idx, 0, 1).unwrap();
    (vp - vm) / (2.0 * h)
}

/// Divergence of a physical-component vector field.
pub fn divergence(v: &VectorField, mask: Option<&NodeMask>) -> Result<ScalarField> {
    let grid = v.grid().clone();
    let n = grid.num_nodes();
    let mut out = vec![0.0; n];
    match grid.topology {
        Topology::Line | Topology::Plane | Topology::Ring => {
            for (idx, o) in out.iter_mut().enumerate() {
                *o = (0..grid.ndim())
                    .map(|axis| partial(v.component(axis), &grid, mask, axis, idx))
                    .sum();
            }
        }
        Topology::DiskPolar => {
            // (1/r) d(r v_r)/dr + (1/r) d v_phi / dphi
            let r_vr: Vec<f64> = (0..n)
                .map(|idx| {
                    let (i, _) = grid.unflat(idx);
                    grid.axis(0).coord(i) * v.at(0, idx)
                })
                .collect();
            for (idx, o) in out.iter_mut().enumerate() {
                if masked_at(mask, idx) {
                    continue;
                }
                let (i, _) = grid.unflat(idx);
                let r = grid.axis(0).coord(i);
                let ddr = partial(&r_vr, &grid, mask, 0, idx);
                let ddphi = partial(v.component(1), &grid, mask, 1, idx);
                *o = ddr / r + ddphi;
            }
        }
    }
    ScalarField::new(grid, out)
}

/// Advection (a . grad) b for physical-component vector fields, including
/// the polar curvature terms.
pub fn advect(a: &VectorField, b: &VectorField, mask: Option<&NodeMask>) -> Result<VectorField> {
    let grid = a.grid().clone();
    let n = grid.num_nodes();
    let d = grid.ndim();
    let mut comps = vec![vec![0.0; n]; d];
    for idx in 0..n {
        if masked_at(mask, idx) {
            continue;
        }
        match grid.topology {
            Topology::Line | Topology::Plane | Topology::Ring => {
                for (k, comp) in comps.iter_mut().enumerate() {
                    comp[idx] = (0..d)
                        .map(|axis| {
                            a.at(axis, idx) * partial(b.component(k), &grid, mask, axis, idx)
                        })
                        .sum();
                }
            }
            Topology::DiskPolar => {
                let (i, _) = grid.unflat(idx);
                let r = grid.axis(0).coord(i);
                let ar = a.at(0, idx);
                let ap = a.at(1, idx);
                let br = b.at(0, idx);
                let bp = b.at(1, idx);
                let dbr_dr = partial(b.component(0), &grid, mask, 0, idx);
                let dbr_dp = partial(b.component(0), &grid, mask, 1, idx);
                let dbp_dr = partial(b.component(1), &grid, mask, 0, idx);
                let dbp_dp = partial(b.component(1), &grid, mask, 1, idx);
                comps[0][idx] = ar * dbr_dr + ap * dbr_dp - ap * bp / r;
                comps[1][idx] = ar * dbp_dr + ap * dbp_dp + ap * br / r;
            }
        }
    }
    VectorField::new(grid, comps)
}

/// Vector Laplacian (component-wise in Cartesian charts; polar adds the
/// curvature coupling terms).
pub fn vector_laplacian(v: &VectorField, mask: Option<&NodeMask>) -> Result<VectorField> {
    let grid = v.grid().clone();
    let n = grid.num_nodes();
    let d = grid.ndim();
    let mut comps = vec![vec![0.0; n]; d];
    for idx in 0..n {
        if masked_at(mask, idx) {
            continue;
        }
        match grid.topology {
            Topology::Line | Topology::Plane | Topology::Ring => {
                for (k, comp) in comps.iter_mut().enumerate() {
                    comp[idx] = laplacian_at(v.component(k), &grid, mask, idx);
                }
            }
            Topology::DiskPolar => {
                let (i, _) = grid.unflat(idx);
                let r = grid.axis(0).coord(i);
                let lap_r = laplacian_at(v.component(0), &grid, mask, idx);
                let lap_p = laplacian_at(v.component(1), &grid, mask, idx);
                let dvr_dp = partial(v.component(0), &grid, mask, 1, idx);
                let dvp_dp = partial(v.component(1), &grid, mask, 1, idx);
                comps[0][idx] = lap_r - v.at(0, idx) / (r * r) - 2.0 * dvp_dp / r;
                comps[1][idx] = lap_p - v.at(1, idx) / (r * r) + 2.0 * dvr_dp / r;
            }
        }
    }
    VectorField::new(grid, comps)
}

/// Scalar curl (z-component) of a 2-D vector field.
pub fn curl_z(v: &VectorField, mask: Option<&NodeMask>) -> Result<ScalarField> {
    let grid = v.grid().clone();
    let n = grid.num_nodes();
    let mut out = vec![0.0; n];
    match grid.topology {
        Topology::Plane => {
            for (idx, o) in out.iter_mut().enumerate() {
                *o = partial(v.component(1), &grid, mask, 0, idx)
                    - partial(v.component(0), &grid, mask, 1, idx);
            }
        }
        Topology::DiskPolar => {
            let r_vp: Vec<f64> = (0..n)
                .map(|idx| {
                    let (i, _) = grid.unflat(idx);
                    grid.axis(0).coord(i) * v.at(1, idx)
                })
                .collect();
            for (idx, o) in out.iter_mut().enumerate() {
                if masked_at(mask, idx) {
                    continue;
                }
                let (i, _) = grid.unflat(idx);
                let r = grid.axis(0).coord(i);
                *o = partial(&r_vp, &grid, mask, 0, idx) / r
                    - partial(v.component(0), &grid, mask, 1, idx);
            }
        }
        _ => {
            return Err(crate::error::CoreError::Unsupported(
                "curl requires a two-dimensional grid".into(),
            ))
        }
    }
    ScalarField::new(grid, out)
}

/// Quadrature-weighted L2 and plain max norms off the mask.
pub fn norms_off_mask(values: &[f64], grid: &Grid, mask: Option<&NodeMask>) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for (idx, &v) in values.iter().enumerate() {
        if masked_at(mask, idx) {
            continue;
        }
        l2 += grid.weight(idx) * v * v;
        linf = linf.max(v.abs());
    }
    (l2.sqrt(), linf)
}

/// Line integral of a vector field along a closed grid-node loop
/// (trapezoid per edge, physical edge lengths).
pub fn loop_line_integral(v: &VectorField, loop_nodes: &[usize]) -> Result<f64> {
    let grid = v.grid();
    let m = loop_nodes.len();
    let mut total = 0.0;
    for e in 0..m {
        let a = loop_nodes[e];
        let b = loop_nodes[(e + 1) % m];
        let (axis, dir) = edge_between(grid, a, b)?;
        let h = 0.5 * (grid.physical_spacing(axis, a) + grid.physical_spacing(axis, b));
        let tangential = 0.5 * (v.at(axis, a) + v.at(axis, b)) * dir as f64;
        total += tangential * h;
    }
    Ok(total)
}

/// Identify the axis and direction of the lattice edge from `a` to `b`.
pub fn edge_between(grid: &Grid, a: usize, b: usize) -> Result<(usize, i64)> {
    for axis in 0..grid.ndim() {
        for dir in [1i64, -1] {
            if grid.neighbor(a, axis, dir) == Neighbor::Node(b) {
                return Ok((axis, dir));
            }
        }
    }
    Err(crate::error::CoreError::Loop(format!(
        "nodes {a} and {b} are not lattice neighbors"
    )))
}

/// Convert a polar-chart vector at a Cartesian position into Cartesian
/// components (identity on Cartesian grids).
pub fn to_cartesian_components(grid: &Grid, pos: [f64; 2], v: [f64; 2]) -> [f64; 2] {
    match grid.topology {
        Topology::DiskPolar => {
            let r = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
            if r == 0.0 {
                return [0.0, 0.0];
            }
            let (c, s) = (pos[0] / r, pos[1] / r);
            [v[0] * c - v[1] * s, v[0] * s + v[1] * c]
        }
        _ => v,
    }
}

/// Shared grid check with descriptive names.
pub fn ensure_same_grid(a: &Arc<Grid>, b: &Arc<Grid>, left: &str, right: &str) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(crate::error::CoreError::GridMismatch {
            left: left.into(),
            right: right.into(),
        })
    }
}
