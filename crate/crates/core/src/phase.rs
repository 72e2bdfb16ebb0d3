//! Multi-valued velocity potentials.
//!
//! A [`PhaseField`] keeps the principal value of S (mod Planck's constant h)
//! at every node together with the exact phase increment along every lattice
//! edge. The increments are the fundamental object: loop circulations are
//! edge sums, so integer windings are detected in integers instead of
//! floating comparisons, and genuinely non-integer circulations (which no
//! single-valued sampling can represent) survive intact.
//!
//! Fields derived from a complex amplitude get their increments from
//! principal-branch differences, which is exact whenever the state is
//! resolved (less than half a phase turn per edge). Analytic multi-valued
//! potentials supply their increments directly.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::field::{ComplexField, NodeMask, ScalarField};
use crate::grid::{Grid, Neighbor, Topology};

/// Map a phase difference to the principal branch (-h/2, h/2].
#[inline]
pub fn principal_branch(x: f64, h: f64) -> f64 {
    let r = x.rem_euclid(h);
    if r > 0.5 * h {
        r - h
    } else {
        r
    }
}

#[derive(Debug, Clone)]
pub struct PhaseField {
    grid: Arc<Grid>,
    /// Planck constant h = 2 pi hbar (action units of S).
    planck: f64,
    /// Principal values in [0, h).
    principal: Vec<f64>,
    /// increments[axis][idx]: phase change along the edge from `idx` to its
    /// +1 neighbor on `axis`; NaN where the edge is absent or masked.
    increments: Vec<Vec<f64>>,
    mask: NodeMask,
    /// Winding integer per plaquette (aligned with `grid.plaquettes()`),
    /// and whether the plaquette had all edges defined.
    plaquette_windings: Vec<i64>,
    plaquette_defined: Vec<bool>,
    /// Connected-component label per node (masked nodes get usize::MAX).
    components: Vec<usize>,
    num_components: usize,
}

impl PhaseField {
    /// Decompose a complex amplitude into its phase, masking nodes where
    /// the density falls below `node_floor * max(|psi|^2)`.
    pub fn from_complex(psi: &ComplexField, node_floor: f64, hbar: f64) -> Result<PhaseField> {
        if node_floor < 0.0 {
            return Err(CoreError::invalid("node_floor", "must be non-negative"));
        }
        let grid = psi.grid().clone();
        let n = grid.num_nodes();
        let h = 2.0 * std::f64::consts::PI * hbar;
        let rho_max = psi
            .values()
            .iter()
            .fold(0.0_f64, |m, z| m.max(z.norm_sqr()));
        if rho_max == 0.0 {
            return Err(CoreError::FieldData {
                node: 0,
                reason: "amplitude is identically zero".into(),
            });
        }
        let cutoff = node_floor * rho_max;
        let mask = NodeMask::from_vec(psi.values().iter().map(|z| z.norm_sqr() < cutoff).collect());
        let principal: Vec<f64> = psi
            .values()
            .iter()
            .map(|z| (hbar * z.arg()).rem_euclid(h))
            .collect();

        let mut increments = vec![vec![f64::NAN; n]; grid.ndim()];
        for idx in 0..n {
            if mask.is_masked(idx) {
                continue;
            }
            for (axis, inc) in increments.iter_mut().enumerate() {
                if let Neighbor::Node(nb) = grid.neighbor(idx, axis, 1) {
                    if !mask.is_masked(nb) {
                        inc[idx] = principal_branch(principal[nb] - principal[idx], h);
                    }
                }
            }
        }
        Self::assemble(grid, h, principal, increments, mask)
    }

    /// Build from single-valued samples of S (any units of action).
    /// Edge increments come from principal-branch differences, so the
    /// samples must vary by less than h/2 per edge.
    pub fn from_samples(s: &ScalarField, hbar: f64, mask: Option<NodeMask>) -> Result<PhaseField> {
        let grid = s.grid().clone();
        let n = grid.num_nodes();
        let h = 2.0 * std::f64::consts::PI * hbar;
        let mask = mask.unwrap_or_else(|| NodeMask::none(n));
        let principal: Vec<f64> = s.values().iter().map(|&v| v.rem_euclid(h)).collect();
        let mut increments = vec![vec![f64::NAN; n]; grid.ndim()];
        for idx in 0..n {
            if mask.is_masked(idx) {
                continue;
            }
            for (axis, inc) in increments.iter_mut().enumerate() {
                if let Neighbor::Node(nb) = grid.neighbor(idx, axis, 1) {
                    if !mask.is_masked(nb) {
                        inc[idx] = principal_branch(principal[nb] - principal[idx], h);
                    }
                }
            }
        }
        Self::assemble(grid, h, principal, increments, mask)
    }

    /// Phase linear in the angular chart coordinate: S = slope * angle.
    ///
    /// The edge increments along the angle are exact (`slope * dphi`), so
    /// circulations of genuinely multi-valued potentials (non-integer total
    /// winding) are represented faithfully. Works on rings (axis 0) and
    /// polar disks (axis 1).
    pub fn from_linear_angle(
        grid: Arc<Grid>,
        slope: f64,
        hbar: f64,
        mask: Option<NodeMask>,
    ) -> Result<PhaseField> {
        let n = grid.num_nodes();
        let h = 2.0 * std::f64::consts::PI * hbar;
        let mask = mask.unwrap_or_else(|| NodeMask::none(n));
        let angle_axis = match grid.topology {
            Topology::Ring => 0,
            Topology::DiskPolar => 1,
            _ => {
                return Err(CoreError::Unsupported(
                    "linear-angle phases need a ring or polar grid".into(),
                ))
            }
        };
        let principal: Vec<f64> = (0..n)
            .map(|idx| {
                let (a, b) = grid.coords(idx);
                let angle = if angle_axis == 0 { a } else { b };
                (slope * angle).rem_euclid(h)
            })
            .collect();
        let dphi = grid.axis(angle_axis).spacing();
        let mut increments = vec![vec![f64::NAN; n]; grid.ndim()];
        for idx in 0..n {
            if mask.is_masked(idx) {
                continue;
            }
            for (axis, inc) in increments.iter_mut().enumerate() {
                if let Neighbor::Node(nb) = grid.neighbor(idx, axis, 1) {
                    if !mask.is_masked(nb) {
                        inc[idx] = if axis == angle_axis {
                            slope * dphi
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
        Self::assemble(grid, h, principal, increments, mask)
    }

    fn assemble(
        grid: Arc<Grid>,
        h: f64,
        principal: Vec<f64>,
        increments: Vec<Vec<f64>>,
        mask: NodeMask,
    ) -> Result<PhaseField> {
        let plaquettes = grid.plaquettes();
        let mut windings = Vec::with_capacity(plaquettes.len());
        let mut defined = Vec::with_capacity(plaquettes.len());
        for &(i, j) in &plaquettes {
            let nodes = grid.plaquette_nodes(i, j);
            let mut sum = 0.0;
            let mut ok = true;
            // Edges: n0 -> n1 (+axis0), n1 -> n2 (+axis1), n2 -> n3 (-axis0),
            // n3 -> n0 (-axis1). Increment arrays store the +direction edge.
            let e0 = increments[0][nodes[0]];
            let e1 = increments[1][nodes[1]];
            let e2 = increments[0][nodes[3]];
            let e3 = increments[1][nodes[0]];
            for (sgn, e) in [(1.0, e0), (1.0, e1), (-1.0, e2), (-1.0, e3)] {
                if e.is_nan() {
                    ok = false;
                    break;
                }
                sum += sgn * e;
            }
            if ok {
                windings.push((sum / h).round() as i64);
            } else {
                windings.push(0);
            }
            defined.push(ok);
        }

        let (components, num_components) = label_components(&grid, &mask);

        Ok(PhaseField {
            grid,
            planck: h,
            principal,
            increments,
            mask,
            plaquette_windings: windings,
            plaquette_defined: defined,
            components,
            num_components,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Planck constant h used for branch arithmetic.
    pub fn planck(&self) -> f64 {
        self.planck
    }

    pub fn principal(&self) -> &[f64] {
        &self.principal
    }

    pub fn mask(&self) -> &NodeMask {
        &self.mask
    }

    pub fn plaquette_windings(&self) -> &[i64] {
        &self.plaquette_windings
    }

    pub fn plaquette_defined(&self) -> &[bool] {
        &self.plaquette_defined
    }

    /// True when the node mask splits the domain into more than one
    /// connected region (per-region phases are then independent).
    pub fn is_disconnected(&self) -> bool {
        self.num_components > 1
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn component_labels(&self) -> &[usize] {
        &self.components
    }

    /// Increment along the +axis edge leaving `idx` (NaN if undefined).
    #[inline]
    pub fn increment(&self, axis: usize, idx: usize) -> f64 {
        self.increments[axis][idx]
    }

    /// Directed increment from `a` to its lattice neighbor `b`.
    pub fn directed_increment(&self, a: usize, b: usize) -> Result<f64> {
        let (axis, dir) = crate::numerics::edge_between(&self.grid, a, b)?;
        let inc = if dir > 0 {
            self.increments[axis][a]
        } else {
            -self.increments[axis][b]
        };
        if inc.is_nan() {
            return Err(CoreError::Loop(format!(
                "edge {a}->{b} crosses the node mask"
            )));
        }
        Ok(inc)
    }

    /// Unwrapped S per connected component: spanning-tree accumulation of
    /// edge increments from the lowest-index node of each component.
    /// Masked nodes return NaN.
    pub fn unwrapped(&self) -> Vec<f64> {
        let n = self.grid.num_nodes();
        let mut out = vec![f64::NAN; n];
        let mut visited = vec![false; n];
        for root in 0..n {
            if visited[root] || self.mask.is_masked(root) {
                continue;
            }
            out[root] = self.principal[root];
            visited[root] = true;
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(cur) = queue.pop_front() {
                for axis in 0..self.grid.ndim() {
                    for dir in [1i64, -1] {
                        if let Neighbor::Node(nb) = self.grid.neighbor(cur, axis, dir) {
                            if visited[nb] || self.mask.is_masked(nb) {
                                continue;
                            }
                            let inc = if dir > 0 {
                                self.increments[axis][cur]
                            } else {
                                -self.increments[axis][nb]
                            };
                            if inc.is_nan() {
                                continue;
                            }
                            out[nb] = out[cur] + inc;
                            visited[nb] = true;
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        out
    }

    /// Reconstruct the complex phase factor e^{iS/hbar} scaled by the given
    /// amplitude samples.
    pub fn recompose(&self, amplitude: &ScalarField) -> Result<ComplexField> {
        crate::numerics::ensure_same_grid(&self.grid, amplitude.grid(), "phase", "amplitude")?;
        let hbar = self.planck / (2.0 * std::f64::consts::PI);
        let values = amplitude
            .values()
            .iter()
            .zip(&self.principal)
            .map(|(&a, &s)| num_complex::Complex64::from_polar(a, s / hbar))
            .collect();
        ComplexField::new(self.grid.clone(), values)
    }
}

fn label_components(grid: &Grid, mask: &NodeMask) -> (Vec<usize>, usize) {
    let n = grid.num_nodes();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start] != usize::MAX || mask.is_masked(start) {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        labels[start] = next;
        while let Some(cur) = queue.pop_front() {
            for axis in 0..grid.ndim() {
                for dir in [1i64, -1] {
                    if let Neighbor::Node(nb) = grid.neighbor(cur, axis, dir) {
                        if labels[nb] == usize::MAX && !mask.is_masked(nb) {
                            labels[nb] = next;
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        next += 1;
    }
    (labels, next)
}
