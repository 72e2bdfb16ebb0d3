//! Discretized fields on a [`Grid`]: real scalars, physical-component
//! vectors, and complex amplitudes, plus their CSV and binary exports.
//!
//! Construction rejects non-finite entries; every operation that produces a
//! field keeps the invariant that the value array length matches the grid.

use num_complex::Complex64;
use std::io::Write;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::Grid;

/// Nodes excluded from differentiation and norms (density below the node
/// floor, or unreachable ghost regions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMask {
    masked: Vec<bool>,
    count: usize,
}

impl NodeMask {
    pub fn none(n: usize) -> Self {
        NodeMask {
            masked: vec![false; n],
            count: 0,
        }
    }

    pub fn from_vec(masked: Vec<bool>) -> Self {
        let count = masked.iter().filter(|&&m| m).count();
        NodeMask { masked, count }
    }

    #[inline]
    pub fn is_masked(&self, idx: usize) -> bool {
        self.masked[idx]
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.count
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.masked
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    /// Union of two masks.
    pub fn or(&self, other: &NodeMask) -> NodeMask {
        NodeMask::from_vec(
            self.masked
                .iter()
                .zip(&other.masked)
                .map(|(&a, &b)| a || b)
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(CoreError::Grid(format!(
                "scalar field length {} does not match grid node count {}",
                values.len(),
                grid.num_nodes()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::FieldData {
                node,
                reason: format!("non-finite value {}", values[node]),
            });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.num_nodes();
        ScalarField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.num_nodes())
            .map(|idx| {
                let (a, b) = grid.coords(idx);
                f(a, b)
            })
            .collect();
        ScalarField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation at a particle position.
    pub fn interpolate(&self, pos: [f64; 2]) -> f64 {
        self.grid
            .interp_stencil(pos)
            .iter()
            .map(|&(idx, w)| w * self.values[idx])
            .sum()
    }

    /// Mask of nodes where the value falls below `floor * max`.
    pub fn relative_floor_mask(&self, floor: f64) -> NodeMask {
        let cutoff = floor * self.max_abs();
        NodeMask::from_vec(self.values.iter().map(|&v| v < cutoff).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        ScalarField::new(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Vector field stored by physical components along the grid axes
/// (line/ring: 1; plane: x,y; disk: r,phi).
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.ndim() {
            return Err(CoreError::Grid(format!(
                "vector field has {} components on a {}-D grid",
                components.len(),
                grid.ndim()
            )));
        }
        for comp in &components {
            if comp.len() != grid.num_nodes() {
                return Err(CoreError::Grid(
                    "vector component length does not match grid".into(),
                ));
            }
            if let Some(node) = comp.iter().position(|v| !v.is_finite()) {
                return Err(CoreError::FieldData {
                    node,
                    reason: "non-finite vector component".into(),
                });
            }
        }
        Ok(VectorField { grid, components })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.num_nodes();
        let d = grid.ndim();
        VectorField {
            grid,
            components: vec![vec![0.0; n]; d],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn ndim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.components[k]
    }

    #[inline]
    pub fn at(&self, k: usize, idx: usize) -> f64 {
        self.components[k][idx]
    }

    /// Node-wise Euclidean magnitude squared.
    pub fn magnitude_sq(&self, idx: usize) -> f64 {
        self.components.iter().map(|c| c[idx] * c[idx]).sum()
    }

    /// Interpolated physical components at a particle position.
    pub fn interpolate(&self, pos: [f64; 2]) -> [f64; 2] {
        let st = self.grid.interp_stencil(pos);
        let mut out = [0.0; 2];
        for (k, comp) in self.components.iter().enumerate() {
            out[k] = st.iter().map(|&(idx, w)| w * comp[idx]).sum();
        }
        out
    }

    /// Linear combination `a*self + b*other`.
    pub fn combine(&self, other: &VectorField, a: f64, b: f64) -> Result<VectorField> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid != other.grid {
            return Err(CoreError::GridMismatch {
                left: "vector field".into(),
                right: "vector field".into(),
            });
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x.iter().zip(y).map(|(&u, &v)| a * u + b * v).collect())
            .collect();
        VectorField::new(self.grid.clone(), components)
    }
}

#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(CoreError::Grid(
                "complex field length does not match grid".into(),
            ));
        }
        if let Some(node) = values
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(CoreError::FieldData {
                node,
                reason: "non-finite amplitude".into(),
            });
        }
        Ok(ComplexField { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let values = (0..grid.num_nodes())
            .map(|idx| {
                let (a, b) = grid.coords(idx);
                f(a, b)
            })
            .collect();
        ComplexField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Complex64 {
        self.values[idx]
    }

    /// |psi|^2 as a scalar field.
    pub fn density(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z.norm_sqr()).collect(),
        }
    }

    /// Quadrature of |psi|^2.
    pub fn norm_sq(&self) -> f64 {
        self.density().integrate()
    }

    /// Scale so the density integrates to one.
    pub fn normalized(&self) -> Result<ComplexField> {
        let n2 = self.norm_sq();
        if !(n2 > 0.0) {
            return Err(CoreError::FieldData {
                node: 0,
                reason: "cannot normalize an identically zero state".into(),
            });
        }
        let s = 1.0 / n2.sqrt();
        ComplexField::new(
            self.grid.clone(),
            self.values.iter().map(|z| z * s).collect(),
        )
    }
}

/// Normalize a non-negative density to unit mass under the grid quadrature.
///
/// Rejects fields with any negative node (naming the first offender) and
/// all-zero fields.
pub fn normalize_density(rho: &ScalarField) -> Result<ScalarField> {
    if let Some(node) = rho.values.iter().position(|&v| v < 0.0) {
        return Err(CoreError::FieldData {
            node,
            reason: format!("density must be non-negative, got {}", rho.values[node]),
        });
    }
    let total = rho.integrate();
    if !(total > 0.0) {
        return Err(CoreError::FieldData {
            node: 0,
            reason: "density integrates to zero".into(),
        });
    }
    let s = 1.0 / total;
    ScalarField::new(
        rho.grid.clone(),
        rho.values.iter().map(|&v| v * s).collect(),
    )
}

// ---- file exports ----------------------------------------------------------

/// Field dump magic: `ZSMF`, version 1, little-endian payload.
pub const FIELD_MAGIC: &[u8; 4] = b"ZSMF";
pub const FIELD_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar = 0,
    Vector = 1,
    Complex = 2,
}

fn write_header(w: &mut impl Write, kind: FieldKind, grid: &Grid) -> std::io::Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&[FIELD_FORMAT_VERSION, kind as u8, grid.ndim() as u8])?;
    let (n0, n1) = grid.dims();
    w.write_all(&(n0 as u32).to_le_bytes())?;
    w.write_all(&(n1 as u32).to_le_bytes())?;
    Ok(())
}

impl ScalarField {
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_header(w, FieldKind::Scalar, &self.grid)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// CSV rows of node coordinates and value.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let names = coord_names(&self.grid);
        writeln!(w, "{},{},value", names.0, names.1)?;
        for idx in 0..self.values.len() {
            let (a, b) = self.grid.coords(idx);
            writeln!(w, "{a},{b},{}", self.values[idx])?;
        }
        Ok(())
    }
}

impl VectorField {
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_header(w, FieldKind::Vector, &self.grid)?;
        for comp in &self.components {
            for v in comp {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let names = coord_names(&self.grid);
        let comps: Vec<String> = (0..self.ndim()).map(|k| format!("v{k}")).collect();
        writeln!(w, "{},{},{}", names.0, names.1, comps.join(","))?;
        for idx in 0..self.grid.num_nodes() {
            let (a, b) = self.grid.coords(idx);
            let row: Vec<String> = self
                .components
                .iter()
                .map(|c| format!("{}", c[idx]))
                .collect();
            writeln!(w, "{a},{b},{}", row.join(","))?;
        }
        Ok(())
    }
}

impl ComplexField {
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_header(w, FieldKind::Complex, &self.grid)?;
        for z in &self.values {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Read back a scalar dump written by [`ScalarField::write_binary`].
pub fn read_scalar_binary(grid: Arc<Grid>, r: &mut impl std::io::Read) -> Result<ScalarField> {
    let mut head = [0u8; 15];
    r.read_exact(&mut head)?;
    if &head[0..4] != FIELD_MAGIC {
        return Err(CoreError::Unsupported("bad field dump magic".into()));
    }
    if head[4] != FIELD_FORMAT_VERSION {
        return Err(CoreError::Unsupported(format!(
            "field dump version {}",
            head[4]
        )));
    }
    let n0 = u32::from_le_bytes(head[7..11].try_into().unwrap()) as usize;
    let n1 = u32::from_le_bytes(head[11..15].try_into().unwrap()) as usize;
    if (n0, n1) != grid.dims() {
        return Err(CoreError::Grid("dump dimensions do not match grid".into()));
    }
    let mut values = vec![0.0; n0 * n1];
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    ScalarField::new(grid, values)
}

fn coord_names(grid: &Grid) -> (String, String) {
    let a = grid.axis(0).name.clone();
    let b = if grid.ndim() == 2 {
        grid.axis(1).name.clone()
    } else {
        "unused".to_string()
    };
    (a, b)
}
