//! Uniform structured grids on the four domains the lab uses: a bounded
//! line, a ring, a bounded plane, and a polar disk (annulus-indexed,
//! cell-centered in radius so no node sits on the coordinate singularity).
//!
//! Coordinates are stored in "chart" variables (x, theta, r, phi); all
//! derivative and quadrature operations convert through per-node metric
//! factors so downstream code works in physical lengths.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{CoreError, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Line,
    Ring,
    Plane,
    DiskPolar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Periodic,
    Reflecting,
    Absorbing,
}

/// One coordinate axis with uniform spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub n: usize,
    pub bc: BoundaryCondition,
    /// Cell-centered axes place nodes at `min + (i + 1/2) dx` (polar radius);
    /// node-centered bounded axes at `min + i dx` with `dx = L/(n-1)`.
    pub cell_centered: bool,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        let len = self.max - self.min;
        match (self.bc, self.cell_centered) {
            (BoundaryCondition::Periodic, _) => len / self.n as f64,
            (_, true) => len / self.n as f64,
            (_, false) => len / (self.n - 1) as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        let dx = self.spacing();
        if self.cell_centered {
            self.min + (i as f64 + 0.5) * dx
        } else {
            self.min + i as f64 * dx
        }
    }

    fn validate(&self, which: &str) -> Result<()> {
        if self.n < 8 {
            return Err(CoreError::Grid(format!(
                "axis `{which}` needs at least 8 nodes, got {}",
                self.n
            )));
        }
        if !(self.max - self.min).is_finite() || self.max <= self.min {
            return Err(CoreError::Grid(format!(
                "axis `{which}` has non-positive extent [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// What lies one step along an axis from a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    /// A real node (interior step or periodic wrap).
    Node(usize),
    /// Ghost holding value zero (absorbing boundary).
    GhostZero,
    /// Ghost mirroring the given interior node (reflecting boundary).
    GhostMirror(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub topology: Topology,
    axes: Vec<Axis>,
    /// Ring radius; 1.0 for non-ring topologies.
    ring_radius: f64,
}

impl Grid {
    /// Bounded 1-D segment; `bc` applies at both ends.
    pub fn line(n: usize, x0: f64, x1: f64, bc: BoundaryCondition) -> Result<Arc<Grid>> {
        if bc == BoundaryCondition::Periodic {
            return Err(CoreError::Grid(
                "periodic 1-D domains use the ring topology".into(),
            ));
        }
        let g = Grid {
            topology: Topology::Line,
            axes: vec![Axis {
                name: "x".into(),
                min: x0,
                max: x1,
                n,
                bc,
                cell_centered: false,
            }],
            ring_radius: 1.0,
        };
        g.validate()?;
        Ok(Arc::new(g))
    }

    /// Circle of the given radius, coordinate theta in [0, 2pi).
    pub fn ring(n: usize, radius: f64) -> Result<Arc<Grid>> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(CoreError::Grid(format!(
                "ring radius must be positive, got {radius}"
            )));
        }
        let g = Grid {
            topology: Topology::Ring,
            axes: vec![Axis {
                name: "theta".into(),
                min: 0.0,
                max: TWO_PI,
                n,
                bc: BoundaryCondition::Periodic,
                cell_centered: false,
            }],
            ring_radius: radius,
        };
        g.validate()?;
        Ok(Arc::new(g))
    }

    /// Bounded (or per-axis periodic) Cartesian rectangle.
    pub fn plane(
        nx: usize,
        ny: usize,
        x_range: (f64, f64),
        y_range: (f64, f64),
        bc_x: BoundaryCondition,
        bc_y: BoundaryCondition,
    ) -> Result<Arc<Grid>> {
        let g = Grid {
            topology: Topology::Plane,
            axes: vec![
                Axis {
                    name: "x".into(),
                    min: x_range.0,
                    max: x_range.1,
                    n: nx,
                    bc: bc_x,
                    cell_centered: false,
                },
                Axis {
                    name: "y".into(),
                    min: y_range.0,
                    max: y_range.1,
                    n: ny,
                    bc: bc_y,
                    cell_centered: false,
                },
            ],
            ring_radius: 1.0,
        };
        g.validate()?;
        Ok(Arc::new(g))
    }

    /// Polar disk of radius `r_max`: cell-centered radial axis (nodes at
    /// `(i+1/2) dr`, absorbing ghosts at both ends) and periodic angle.
    pub fn disk_polar(nr: usize, nphi: usize, r_max: f64) -> Result<Arc<Grid>> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(CoreError::Grid(format!(
                "disk radius must be positive, got {r_max}"
            )));
        }
        let g = Grid {
            topology: Topology::DiskPolar,
            axes: vec![
                Axis {
                    name: "r".into(),
                    min: 0.0,
                    max: r_max,
                    n: nr,
                    bc: BoundaryCondition::Absorbing,
                    cell_centered: true,
                },
                Axis {
                    name: "phi".into(),
                    min: 0.0,
                    max: TWO_PI,
                    n: nphi,
                    bc: BoundaryCondition::Periodic,
                    cell_centered: false,
                },
            ],
            ring_radius: 1.0,
        };
        g.validate()?;
        Ok(Arc::new(g))
    }

    fn validate(&self) -> Result<()> {
        for ax in &self.axes {
            ax.validate(&ax.name)?;
            if !(ax.spacing() > 0.0) {
                return Err(CoreError::Grid(format!(
                    "axis `{}` spacing must be positive",
                    ax.name
                )));
            }
        }
        match self.topology {
            Topology::Ring => {
                if self.axes[0].bc != BoundaryCondition::Periodic {
                    return Err(CoreError::Grid("ring axis must be periodic".into()));
                }
            }
            Topology::DiskPolar if self.axes[1].bc != BoundaryCondition::Periodic => {
                return Err(CoreError::Grid("polar angle axis must be periodic".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    /// Node counts `(n0, n1)`; `n1 = 1` in one dimension.
    pub fn dims(&self) -> (usize, usize) {
        match self.axes.len() {
            1 => (self.axes[0].n, 1),
            _ => (self.axes[0].n, self.axes[1].n),
        }
    }

    pub fn num_nodes(&self) -> usize {
        let (n0, n1) = self.dims();
        n0 * n1
    }

    pub fn ring_radius(&self) -> f64 {
        self.ring_radius
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        let (n0, _) = self.dims();
        i + n0 * j
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize) {
        let (n0, _) = self.dims();
        (idx % n0, idx / n0)
    }

    /// Chart coordinates of a node (second entry 0 in one dimension).
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.unflat(idx);
        match self.axes.len() {
            1 => (self.axes[0].coord(i), 0.0),
            _ => (self.axes[0].coord(i), self.axes[1].coord(j)),
        }
    }

    /// Physical length per unit chart coordinate along `axis` at a node.
    ///
    /// Ring: `ds = R dtheta`; polar angle: `ds = r dphi`; all others 1.
    pub fn metric(&self, axis: usize, idx: usize) -> f64 {
        match (self.topology, axis) {
            (Topology::Ring, 0) => self.ring_radius,
            (Topology::DiskPolar, 1) => {
                let (i, _) = self.unflat(idx);
                self.axes[0].coord(i)
            }
            _ => 1.0,
        }
    }

    /// Physical spacing along `axis` at a node.
    #[inline]
    pub fn physical_spacing(&self, axis: usize, idx: usize) -> f64 {
        self.axes[axis].spacing() * self.metric(axis, idx)
    }

    /// One step along `axis` in direction `dir` (+1/-1).
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i64) -> Neighbor {
        let (i, j) = self.unflat(idx);
        let ax = &self.axes[axis];
        let pos = if axis == 0 { i } else { j } as i64;
        let target = pos + dir;
        let n = ax.n as i64;
        let wrapped = if target < 0 || target >= n {
            match ax.bc {
                BoundaryCondition::Periodic => target.rem_euclid(n),
                BoundaryCondition::Absorbing => return Neighbor::GhostZero,
                BoundaryCondition::Reflecting => {
                    // Mirror about the boundary node: x_{-1} -> x_1.
                    let m = if target < 0 {
                        -target
                    } else {
                        2 * (n - 1) - target
                    };
                    if !(0..n).contains(&m) {
                        return Neighbor::GhostZero;
                    }
                    let (mi, mj) = if axis == 0 {
                        (m as usize, j)
                    } else {
                        (i, m as usize)
                    };
                    return Neighbor::GhostMirror(self.flat(mi, mj));
                }
            }
        } else {
            target
        };
        let (ni, nj) = if axis == 0 {
            (wrapped as usize, j)
        } else {
            (i, wrapped as usize)
        };
        Neighbor::Node(self.flat(ni, nj))
    }

    /// Quadrature weight of a node: rectangle rule on periodic or
    /// cell-centered axes, trapezoid on bounded node-centered axes, with the
    /// polar/ring metric folded in.
    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j) = self.unflat(idx);
        let mut w = 1.0;
        for (axis, ax) in self.axes.iter().enumerate() {
            let pos = if axis == 0 { i } else { j };
            let dx = ax.spacing() * self.metric(axis, idx);
            let trapezoid_end = ax.bc != BoundaryCondition::Periodic
                && !ax.cell_centered
                && (pos == 0 || pos == ax.n - 1);
            w *= if trapezoid_end { 0.5 * dx } else { dx };
        }
        w
    }

    /// Quadrature of nodal samples over the whole domain.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.num_nodes());
        values
            .iter()
            .enumerate()
            .map(|(idx, v)| v * self.weight(idx))
            .sum()
    }

    /// Lower-left corners (i, j) of the elementary plaquettes. Empty for
    /// one-dimensional grids.
    pub fn plaquettes(&self) -> Vec<(usize, usize)> {
        if self.ndim() != 2 {
            return Vec::new();
        }
        let (n0, n1) = self.dims();
        let m0 = if self.axes[0].bc == BoundaryCondition::Periodic {
            n0
        } else {
            n0 - 1
        };
        let m1 = if self.axes[1].bc == BoundaryCondition::Periodic {
            n1
        } else {
            n1 - 1
        };
        let mut out = Vec::with_capacity(m0 * m1);
        for j in 0..m1 {
            for i in 0..m0 {
                out.push((i, j));
            }
        }
        out
    }

    /// The four nodes of plaquette (i, j) in circulation order.
    pub fn plaquette_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        let (n0, n1) = self.dims();
        let ip = (i + 1) % n0;
        let jp = (j + 1) % n1;
        [
            self.flat(i, j),
            self.flat(ip, j),
            self.flat(ip, jp),
            self.flat(i, jp),
        ]
    }

    // ---- particle-space helpers -------------------------------------------

    /// Dimension of the particle coordinate space (ring particles live on
    /// the angle; disk particles live in the Cartesian plane).
    pub fn particle_dim(&self) -> usize {
        match self.topology {
            Topology::Line | Topology::Ring => 1,
            Topology::Plane | Topology::DiskPolar => 2,
        }
    }

    /// Chart coordinates of a particle position (identity except on the
    /// disk, where Cartesian positions map to (r, phi)).
    pub fn chart_of_position(&self, pos: [f64; 2]) -> [f64; 2] {
        match self.topology {
            Topology::DiskPolar => {
                let r = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
                let phi = pos[1].atan2(pos[0]).rem_euclid(TWO_PI);
                [r, phi]
            }
            _ => pos,
        }
    }

    /// Apply boundary conditions to a particle position.
    /// Returns the corrected position, or `None` if the particle left
    /// through an absorbing boundary.
    pub fn apply_boundary(&self, pos: [f64; 2]) -> Option<[f64; 2]> {
        match self.topology {
            Topology::Ring => Some([pos[0].rem_euclid(TWO_PI), 0.0]),
            Topology::Line => {
                let ax = &self.axes[0];
                Some([reflect_or_absorb(pos[0], ax)?, 0.0])
            }
            Topology::Plane => {
                let x = wrap_reflect_absorb(pos[0], &self.axes[0])?;
                let y = wrap_reflect_absorb(pos[1], &self.axes[1])?;
                Some([x, y])
            }
            Topology::DiskPolar => {
                let r_max = self.axes[0].max;
                let r = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
                if r <= r_max {
                    return Some(pos);
                }
                match self.axes[0].bc {
                    BoundaryCondition::Absorbing => None,
                    _ => {
                        // Radial reflection about the rim.
                        let rr = (2.0 * r_max - r).max(0.0);
                        let scale = if r > 0.0 { rr / r } else { 0.0 };
                        Some([pos[0] * scale, pos[1] * scale])
                    }
                }
            }
        }
    }

    /// Bilinear interpolation stencil at a particle position: up to four
    /// (node, weight) pairs. Positions beyond the outermost node centers
    /// clamp to the edge values.
    pub fn interp_stencil(&self, pos: [f64; 2]) -> [(usize, f64); 4] {
        let chart = self.chart_of_position(pos);
        let (n0, n1) = self.dims();
        let (i0, i1, t0) = axis_locate(&self.axes[0], chart[0]);
        if self.ndim() == 1 {
            return [
                (self.flat(i0, 0), 1.0 - t0),
                (self.flat(i1, 0), t0),
                (0, 0.0),
                (0, 0.0),
            ];
        }
        let (j0, j1, t1) = axis_locate(&self.axes[1], chart[1]);
        debug_assert!(i0 < n0 && j0 < n1);
        [
            (self.flat(i0, j0), (1.0 - t0) * (1.0 - t1)),
            (self.flat(i1, j0), t0 * (1.0 - t1)),
            (self.flat(i0, j1), (1.0 - t0) * t1),
            (self.flat(i1, j1), t0 * t1),
        ]
    }

    /// Node nearest to a particle position.
    pub fn nearest_node(&self, pos: [f64; 2]) -> usize {
        let st = self.interp_stencil(pos);
        st.iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|&(idx, _)| idx)
            .unwrap()
    }
}

fn reflect_or_absorb(x: f64, ax: &Axis) -> Option<f64> {
    match ax.bc {
        BoundaryCondition::Absorbing => {
            if x < ax.min || x > ax.max {
                None
            } else {
                Some(x)
            }
        }
        BoundaryCondition::Reflecting => {
            let len = ax.max - ax.min;
            let mut t = (x - ax.min).rem_euclid(2.0 * len);
            if t > len {
                t = 2.0 * len - t;
            }
            Some(ax.min + t)
        }
        BoundaryCondition::Periodic => Some(ax.min + (x - ax.min).rem_euclid(ax.max - ax.min)),
    }
}

fn wrap_reflect_absorb(x: f64, ax: &Axis) -> Option<f64> {
    reflect_or_absorb(x, ax)
}

/// Locate `x` on an axis: bracketing node indices and interpolation weight.
fn axis_locate(ax: &Axis, x: f64) -> (usize, usize, f64) {
    let dx = ax.spacing();
    let n = ax.n;
    if ax.bc == BoundaryCondition::Periodic {
        let t = (x - ax.min).rem_euclid(ax.max - ax.min) / dx;
        let i = t.floor() as usize % n;
        let frac = t - t.floor();
        return (i, (i + 1) % n, frac);
    }
    let origin = if ax.cell_centered {
        ax.min + 0.5 * dx
    } else {
        ax.min
    };
    let t = (x - origin) / dx;
    if t <= 0.0 {
        return (0, 0, 0.0);
    }
    if t >= (n - 1) as f64 {
        return (n - 1, n - 1, 0.0);
    }
    let i = t.floor() as usize;
    (i, i + 1, t - i as f64)
}
