//! External potentials. Scalar parts are stored in energy units (the
//! gravitational and electric pieces arrive pre-multiplied by m and e, the
//! one consistent convention the equations need); the magnetic field is
//! always derived from the vector potential, never stored alongside it.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::constants::PhysicalConstants;
use crate::error::Result;
use crate::field::{ScalarField, VectorField};
use crate::grid::{Grid, Topology};
use crate::numerics;

/// Closed-form scalar potentials, used both to fill grids and to evaluate
/// the potential exactly at off-grid points (displaced-path quadratures).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum ScalarSpec {
    Zero,
    /// (m omega^2 / 2) |q|^2 about the origin.
    Harmonic {
        omega: f64,
    },
    /// strength / r^2 (positive strength).
    InverseSquare {
        strength: f64,
    },
    /// Harmonic plus inverse-square, the effective central form.
    HarmonicPlusInverseSquare {
        omega: f64,
        strength: f64,
    },
}

impl ScalarSpec {
    /// Evaluate at a radius (all supported forms are central).
    pub fn eval_radial(&self, k: &PhysicalConstants, r: f64) -> f64 {
        match *self {
            ScalarSpec::Zero => 0.0,
            ScalarSpec::Harmonic { omega } => 0.5 * k.mass * omega * omega * r * r,
            ScalarSpec::InverseSquare { strength } => strength / (r * r),
            ScalarSpec::HarmonicPlusInverseSquare { omega, strength } => {
                0.5 * k.mass * omega * omega * r * r + strength / (r * r)
            }
        }
    }

    /// Evaluate at a particle position (chart-aware).
    pub fn eval(&self, k: &PhysicalConstants, grid: &Grid, pos: [f64; 2]) -> f64 {
        let r = match grid.topology {
            Topology::Line => pos[0].abs(),
            Topology::Ring => grid.ring_radius(),
            Topology::Plane | Topology::DiskPolar => (pos[0] * pos[0] + pos[1] * pos[1]).sqrt(),
        };
        self.eval_radial(k, r)
    }

    /// Add an inverse-square term.
    pub fn plus_inverse_square(&self, strength: f64) -> ScalarSpec {
        match *self {
            ScalarSpec::Zero => ScalarSpec::InverseSquare { strength },
            ScalarSpec::Harmonic { omega } => {
                ScalarSpec::HarmonicPlusInverseSquare { omega, strength }
            }
            ScalarSpec::InverseSquare { strength: s0 } => ScalarSpec::InverseSquare {
                strength: s0 + strength,
            },
            ScalarSpec::HarmonicPlusInverseSquare {
                omega,
                strength: s0,
            } => ScalarSpec::HarmonicPlusInverseSquare {
                omega,
                strength: s0 + strength,
            },
        }
    }
}

/// External potentials on a grid.
#[derive(Debug, Clone)]
pub struct Potentials {
    grid: Arc<Grid>,
    /// Mechanical potential V (energy).
    pub scalar: Option<ScalarField>,
    /// Gravitational term, stored as m * Phi_g (energy).
    pub gravitational: Option<ScalarField>,
    /// Electric term, stored as e * Phi_e (energy).
    pub electric: Option<ScalarField>,
    /// Magnetic vector potential A_ext.
    pub vector: Option<VectorField>,
    /// Closed form of the total scalar part, when one exists.
    pub analytic: Option<ScalarSpec>,
}

impl Potentials {
    pub fn free(grid: Arc<Grid>) -> Self {
        Potentials {
            grid,
            scalar: None,
            gravitational: None,
            electric: None,
            vector: None,
            analytic: Some(ScalarSpec::Zero),
        }
    }

    /// Fill the mechanical scalar from a closed form.
    pub fn from_spec(grid: Arc<Grid>, spec: ScalarSpec, k: &PhysicalConstants) -> Result<Self> {
        let field = match grid.topology {
            Topology::Line => {
                ScalarField::from_fn(grid.clone(), |x, _| spec.eval_radial(k, x.abs()))?
            }
            Topology::Ring => {
                let r = grid.ring_radius();
                ScalarField::from_fn(grid.clone(), |_, _| spec.eval_radial(k, r))?
            }
            Topology::Plane => ScalarField::from_fn(grid.clone(), |x, y| {
                spec.eval_radial(k, (x * x + y * y).sqrt())
            })?,
            Topology::DiskPolar => {
                ScalarField::from_fn(grid.clone(), |r, _| spec.eval_radial(k, r))?
            }
        };
        Ok(Potentials {
            grid,
            scalar: Some(field),
            gravitational: None,
            electric: None,
            vector: None,
            analytic: Some(spec),
        })
    }

    pub fn with_scalar_field(grid: Arc<Grid>, v: ScalarField) -> Result<Self> {
        numerics::ensure_same_grid(&grid, v.grid(), "potentials", "scalar field")?;
        Ok(Potentials {
            grid,
            scalar: Some(v),
            gravitational: None,
            electric: None,
            vector: None,
            analytic: None,
        })
    }

    pub fn with_vector(mut self, a: VectorField) -> Result<Self> {
        numerics::ensure_same_grid(&self.grid, a.grid(), "potentials", "vector potential")?;
        self.vector = Some(a);
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn has_vector(&self) -> bool {
        self.vector.is_some()
    }

    /// Total scalar energy V + m Phi_g + e Phi_e at one node.
    pub fn total_scalar_at(&self, idx: usize) -> f64 {
        let mut v = 0.0;
        if let Some(f) = &self.scalar {
            v += f.at(idx);
        }
        if let Some(f) = &self.gravitational {
            v += f.at(idx);
        }
        if let Some(f) = &self.electric {
            v += f.at(idx);
        }
        v
    }

    /// Total scalar energy as a field.
    pub fn total_scalar(&self) -> Result<ScalarField> {
        let vals = (0..self.grid.num_nodes())
            .map(|i| self.total_scalar_at(i))
            .collect();
        ScalarField::new(self.grid.clone(), vals)
    }

    /// Magnetic field B = curl A, derived on demand.
    pub fn magnetic_field(&self) -> Result<Option<ScalarField>> {
        match &self.vector {
            None => Ok(None),
            Some(a) => Ok(Some(numerics::curl_z(a, None)?)),
        }
    }

    /// Exact off-grid evaluation when a closed form is attached.
    pub fn eval_analytic(&self, k: &PhysicalConstants, pos: [f64; 2]) -> Option<f64> {
        self.analytic.map(|s| s.eval(k, &self.grid, pos))
    }
}

/// Piecewise-constant-in-time potential frames.
#[derive(Debug, Clone)]
pub struct PotentialFrames {
    frames: Vec<(f64, Arc<Potentials>)>,
}

impl PotentialFrames {
    pub fn new(mut frames: Vec<(f64, Arc<Potentials>)>) -> Self {
        frames.sort_by(|a, b| a.0.total_cmp(&b.0));
        PotentialFrames { frames }
    }

    /// The frame in effect at time `t` (latest frame with start <= t).
    pub fn at(&self, t: f64) -> &Arc<Potentials> {
        let mut current = &self.frames[0].1;
        for (start, pot) in &self.frames {
            if *start <= t {
                current = pot;
            } else {
                break;
            }
        }
        current
    }

    pub fn frames(&self) -> &[(f64, Arc<Potentials>)] {
        &self.frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;

    #[test]
    fn harmonic_fill_matches_closed_form() {
        let k = PhysicalConstants::natural();
        let g = Grid::line(64, -3.0, 3.0, BoundaryCondition::Reflecting).unwrap();
        let pot =
            Potentials::from_spec(g.clone(), ScalarSpec::Harmonic { omega: 2.0 }, &k).unwrap();
        for idx in 0..g.num_nodes() {
            let (x, _) = g.coords(idx);
            assert!((pot.total_scalar_at(idx) - 2.0 * x * x).abs() < 1e-14);
        }
        assert_eq!(pot.eval_analytic(&k, [1.5, 0.0]), Some(0.5 * 4.0 * 2.25));
    }

    #[test]
    fn piecewise_frames_select_by_time() {
        let k = PhysicalConstants::natural();
        let g = Grid::ring(16, 1.0).unwrap();
        let p0 = Arc::new(Potentials::free(g.clone()));
        let p1 =
            Arc::new(Potentials::from_spec(g, ScalarSpec::Harmonic { omega: 1.0 }, &k).unwrap());
        let frames = PotentialFrames::new(vec![(0.0, p0.clone()), (1.0, p1.clone())]);
        assert!(frames.at(0.5).scalar.is_none());
        assert!(frames.at(1.5).scalar.is_some());
    }
}
