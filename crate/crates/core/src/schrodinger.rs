//! Reference quantum solvers: Crank-Nicolson evolution (linear, and the
//! nonlinear variant whose extra term cancels the quantum kinetic so the
//! dynamics is the classical Hamilton-Jacobi/continuity pair in complex
//! form), plus ring and central-potential eigenstates used as oracles by
//! the rest of the lab.
//!
//! All implicit steps are Cayley transforms of Hermitian (under the grid
//! quadrature weight) discrete Hamiltonians, so the evolution is exactly
//! unitary in that inner product; two dimensions use a Strang split of the
//! two one-dimensional Cayley factors.

use num_complex::Complex64;
use std::sync::Arc;

use crate::constants::PhysicalConstants;
use crate::error::{CoreError, Result};
use crate::field::ComplexField;
use crate::grid::{Grid, Neighbor, Topology};
use crate::numerics::{self, laplacian_at};
use crate::potentials::Potentials;

/// A stationary state produced by one of the eigensolvers.
#[derive(Debug, Clone)]
pub struct EigenstateResult {
    /// Ring index n or angular winding m.
    pub quantum_number: i64,
    /// Energy without the rest-energy offset.
    pub energy: f64,
    /// Whether callers should add m c^2 when comparing against
    /// rest-energy-inclusive conventions.
    pub rest_energy_included: bool,
    /// Normalized state.
    pub psi: ComplexField,
    /// Operator residual of the solve (infinity norm, energy units) in the
    /// sector the solver worked in.
    pub residual: f64,
}

// ---- eigenstates ------------------------------------------------------------

/// Free eigenstate e^{i n theta} on a ring.
///
/// Returns the closed-form energy n^2 hbar^2 / (2 m r^2); the residual is
/// the gap between that and the discrete ring Hamiltonian applied to the
/// state (the Fourier mode is an exact eigenvector of the discrete
/// operator, so the residual is purely the eigenvalue discretization gap).
pub fn ring_eigenstate(
    grid: &Arc<Grid>,
    n: i64,
    k: &PhysicalConstants,
) -> Result<EigenstateResult> {
    if grid.topology != Topology::Ring {
        return Err(CoreError::Unsupported(
            "ring eigenstates need a ring grid".into(),
        ));
    }
    let r = grid.ring_radius();
    let nn = grid.num_nodes() as f64;
    let amp = 1.0 / (crate::grid::TWO_PI * r).sqrt();
    let psi = ComplexField::from_fn(grid.clone(), |theta, _| {
        Complex64::from_polar(amp, n as f64 * theta)
    })?;
    let energy = (n * n) as f64 * k.hbar * k.hbar / (2.0 * k.mass * r * r);
    // Discrete eigenvalue of the circulant second-difference operator.
    let dtheta = crate::grid::TWO_PI / nn;
    let e_disc = k.hbar * k.hbar * (2.0 - 2.0 * (n as f64 * dtheta).cos())
        / (2.0 * k.mass * r * r * dtheta * dtheta);
    let residual = (e_disc - energy).abs() * amp;
    Ok(EigenstateResult {
        quantum_number: n,
        energy,
        rest_energy_included: false,
        psi,
        residual,
    })
}

/// Result of the one-dimensional radial solve.
#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub energy: f64,
    /// Radial profile on the cell-centered radial nodes, normalized in the
    /// r-weighted inner product, peak positive.
    pub profile: Vec<f64>,
    /// Infinity-norm residual of the radial operator.
    pub residual: f64,
}

/// Tridiagonal radial Hamiltonian for angular sector `winding` (real-valued
/// windings are allowed; integer windings give physical eigenstates).
///
/// Rows act on samples at r_i = (i + 1/2) dr with zero ghosts at both ends:
/// H R = -(hbar^2/2m)(R'' + R'/r) + [V(r) + hbar^2 w^2/(2 m r^2)] R.
pub fn radial_hamiltonian(
    grid: &Arc<Grid>,
    v_radial: &[f64],
    winding: f64,
    k: &PhysicalConstants,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if grid.topology != Topology::DiskPolar {
        return Err(CoreError::Unsupported(
            "radial solves need a polar grid".into(),
        ));
    }
    let (nr, _) = grid.dims();
    if v_radial.len() != nr {
        return Err(CoreError::Grid("radial potential length mismatch".into()));
    }
    let dr = grid.axis(0).spacing();
    let c = k.hbar * k.hbar / (2.0 * k.mass);
    let mut lower = vec![0.0; nr];
    let mut diag = vec![0.0; nr];
    let mut upper = vec![0.0; nr];
    for i in 0..nr {
        let r = grid.axis(0).coord(i);
        let inv_dr2 = 1.0 / (dr * dr);
        let inv_2rdr = 1.0 / (2.0 * r * dr);
        lower[i] = -c * (inv_dr2 - inv_2rdr);
        upper[i] = -c * (inv_dr2 + inv_2rdr);
        diag[i] = 2.0 * c * inv_dr2 + v_radial[i] + c * winding * winding / (r * r);
    }
    Ok((lower, diag, upper))
}

/// Lowest radial state in the given angular sector by shifted inverse
/// iteration with Rayleigh-quotient acceleration.
///
/// The operator is self-adjoint under the weight r_i, so Rayleigh quotients
/// use that inner product.
pub fn radial_ground_state(
    grid: &Arc<Grid>,
    v_radial: &[f64],
    winding: f64,
    k: &PhysicalConstants,
    tol: f64,
    max_iter: usize,
) -> Result<RadialSolution> {
    let (lower, diag, upper) = radial_hamiltonian(grid, v_radial, winding, k)?;
    let nr = diag.len();
    let dr = grid.axis(0).spacing();
    let rw: Vec<f64> = (0..nr).map(|i| grid.axis(0).coord(i) * dr).collect();

    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; nr];
        for i in 0..nr {
            y[i] = diag[i] * x[i];
            if i > 0 {
                y[i] += lower[i] * x[i - 1];
            }
            if i + 1 < nr {
                y[i] += upper[i] * x[i + 1];
            }
        }
        y
    };
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&rw)
            .map(|((&x, &y), &w)| x * y * w)
            .sum()
    };

    // Start below the spectrum and from a positive smooth guess.
    let v_eff_min = diag
        .iter()
        .zip(&lower)
        .zip(&upper)
        .map(|((&d, &l), &u)| d + l + u)
        .fold(f64::INFINITY, f64::min);
    let mut sigma = v_eff_min - 1.0;
    let mut x: Vec<f64> = (0..nr)
        .map(|i| {
            let r = grid.axis(0).coord(i);
            (-(r * r)).exp() * r.powf(winding.abs().min(8.0))
        })
        .collect();
    let nrm = inner(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);

    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let shifted: Vec<f64> = diag.iter().map(|&d| d - sigma).collect();
        let y = crate::numerics::solve_tridiagonal(&lower, &shifted, &upper, &x)?;
        let nrm = inner(&y, &y).sqrt();
        if !nrm.is_finite() || nrm == 0.0 {
            return Err(CoreError::NoConvergence {
                iterations: it,
                residual,
            });
        }
        x = y.into_iter().map(|v| v / nrm).collect();
        let hx = apply(&x);
        let lambda = inner(&x, &hx);
        residual = x
            .iter()
            .zip(&hx)
            .map(|(&xi, &hi)| (hi - lambda * xi).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            let (imax, _) = x
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            if x[imax] < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(RadialSolution {
                energy: lambda,
                profile: x,
                residual,
            });
        }
        // Rayleigh shifts once the subspace has settled.
        if it >= 2 {
            sigma = lambda;
        }
    }
    Err(CoreError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Tridiagonal bands (lower, diagonal, upper) plus the two periodic corner
/// entries of a 1-D Hamiltonian.
pub type TridiagonalBands = (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64);

/// Real tridiagonal Hamiltonian of a 1-D grid (line or ring); periodic
/// grids also return the two corner entries.
pub fn line_hamiltonian(
    grid: &Arc<Grid>,
    v: &[f64],
    k: &PhysicalConstants,
) -> Result<TridiagonalBands> {
    if grid.ndim() != 1 {
        return Err(CoreError::Unsupported(
            "line Hamiltonian needs a 1-D grid".into(),
        ));
    }
    let n = grid.num_nodes();
    let c = k.hbar * k.hbar / (2.0 * k.mass);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut corner_lo = 0.0;
    let mut corner_hi = 0.0;
    for idx in 0..n {
        let h = grid.physical_spacing(0, idx);
        let kin = c / (h * h);
        diag[idx] = 2.0 * kin + v[idx];
        for dir in [-1i64, 1] {
            match grid.neighbor(idx, 0, dir) {
                Neighbor::Node(_) => {
                    let is_wrap = (idx == 0 && dir < 0) || (idx == n - 1 && dir > 0);
                    if is_wrap {
                        if dir < 0 {
                            corner_lo = -kin;
                        } else {
                            corner_hi = -kin;
                        }
                    } else if dir < 0 {
                        lower[idx] = -kin;
                    } else {
                        upper[idx] = -kin;
                    }
                }
                Neighbor::GhostZero => {}
                Neighbor::GhostMirror(_) => {
                    if idx == 0 {
                        upper[idx] += -kin;
                    } else {
                        lower[idx] += -kin;
                    }
                }
            }
        }
    }
    Ok((lower, diag, upper, corner_lo, corner_hi))
}

/// Ground state of a bounded 1-D grid Hamiltonian by inverse iteration.
/// Returns (energy, profile normalized under the grid quadrature, residual).
pub fn line_ground_state(
    grid: &Arc<Grid>,
    v: &[f64],
    k: &PhysicalConstants,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, f64)> {
    let (lower, diag, upper, clo, chi) = line_hamiltonian(grid, v, k)?;
    if clo != 0.0 || chi != 0.0 {
        return Err(CoreError::Unsupported(
            "line ground state supports bounded grids only".into(),
        ));
    }
    let n = diag.len();
    let w: Vec<f64> = (0..n).map(|i| grid.weight(i)).collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&w)
            .map(|((&x, &y), &wi)| x * y * wi)
            .sum()
    };
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = diag[i] * x[i];
            if i > 0 {
                y[i] += lower[i] * x[i - 1];
            }
            if i + 1 < n {
                y[i] += upper[i] * x[i + 1];
            }
        }
        y
    };
    let vmin = v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let mut sigma = vmin - 1.0;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let (xi, _) = grid.coords(i);
            (-(xi * xi) / 4.0).exp()
        })
        .collect();
    let nrm = inner(&x, &x).sqrt();
    x.iter_mut().for_each(|xv| *xv /= nrm);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let shifted: Vec<f64> = diag.iter().map(|&d| d - sigma).collect();
        let y = crate::numerics::solve_tridiagonal(&lower, &shifted, &upper, &x)?;
        let nrm = inner(&y, &y).sqrt();
        if !nrm.is_finite() || nrm == 0.0 {
            return Err(CoreError::NoConvergence {
                iterations: it,
                residual,
            });
        }
        x = y.into_iter().map(|xv| xv / nrm).collect();
        let hx = apply(&x);
        let lambda = inner(&x, &hx);
        residual = x
            .iter()
            .zip(&hx)
            .map(|(&xi, &hi)| (hi - lambda * xi).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            if x[n / 2] < 0.0 {
                x.iter_mut().for_each(|xv| *xv = -*xv);
            }
            return Ok((lambda, x, residual));
        }
        if it >= 2 {
            sigma = lambda;
        }
    }
    Err(CoreError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Lowest eigenstate psi = R(r) e^{i m phi} of a radial potential on a
/// polar grid.
pub fn central_eigenstate(
    grid: &Arc<Grid>,
    v_radial: &[f64],
    m_winding: i64,
    k: &PhysicalConstants,
    tol: f64,
) -> Result<EigenstateResult> {
    if m_winding < 0 {
        return Err(CoreError::invalid("m_winding", "must be non-negative"));
    }
    let sol = radial_ground_state(grid, v_radial, m_winding as f64, k, tol, 200)?;
    let (nr, nphi) = grid.dims();
    let mut values = vec![Complex64::default(); nr * nphi];
    for j in 0..nphi {
        let phi = grid.axis(1).coord(j);
        let phase = Complex64::from_polar(1.0, m_winding as f64 * phi);
        for i in 0..nr {
            values[grid.flat(i, j)] = sol.profile[i] * phase;
        }
    }
    let psi = ComplexField::new(grid.clone(), values)?.normalized()?;
    Ok(EigenstateResult {
        quantum_number: m_winding,
        energy: sol.energy,
        rest_energy_included: false,
        psi,
        residual: sol.residual,
    })
}

// ---- time evolution ---------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Multiply frames by the global rest-energy phase e^{-i m c^2 t / hbar}.
    pub include_rest_energy: bool,
    /// Record every `record_stride`-th frame (the final frame always).
    pub record_stride: usize,
    /// Local node-formation floor for the nonlinear solver: abort when an
    /// interior amplitude drops below `sqrt(node_floor) * max(neighbors)`.
    pub node_floor: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            include_rest_energy: false,
            record_stride: 1,
            node_floor: 1e-8,
        }
    }
}

/// Recorded evolution: frames at the requested stride plus per-step
/// norm and energy-expectation summaries.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub frames: Vec<ComplexField>,
    /// Norm (quadrature of |psi|^2) after every step.
    pub norms: Vec<f64>,
    /// Energy expectation after every step.
    pub energies: Vec<f64>,
    /// Accuracy advisory (never fatal; the implicit scheme is stable).
    pub advisory: Option<String>,
}

impl Evolution {
    pub fn final_state(&self) -> &ComplexField {
        self.frames
            .last()
            .expect("at least the initial frame exists")
    }

    /// Stream recorded frames to the binary field-dump format.
    pub fn write_frames_binary(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        for f in &self.frames {
            f.write_binary(w)?;
        }
        Ok(())
    }

    /// Per-step summary (norm, energy) as CSV.
    pub fn write_summary_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "step,norm,energy")?;
        for (i, (n, e)) in self.norms.iter().zip(&self.energies).enumerate() {
            writeln!(w, "{},{n},{e}", i + 1)?;
        }
        Ok(())
    }
}

/// Apply the discrete Hamiltonian -(hbar^2/2m) lap + V to a state.
pub fn apply_hamiltonian(
    psi: &ComplexField,
    pot: &Potentials,
    k: &PhysicalConstants,
) -> Result<ComplexField> {
    numerics::ensure_same_grid(psi.grid(), pot.grid(), "state", "potentials")?;
    let grid = psi.grid().clone();
    let n = grid.num_nodes();
    let re: Vec<f64> = psi.values().iter().map(|z| z.re).collect();
    let im: Vec<f64> = psi.values().iter().map(|z| z.im).collect();
    let c = -k.hbar * k.hbar / (2.0 * k.mass);
    let mut out = vec![Complex64::default(); n];
    for (idx, o) in out.iter_mut().enumerate() {
        let lap = Complex64::new(
            laplacian_at(&re, &grid, None, idx),
            laplacian_at(&im, &grid, None, idx),
        );
        *o = c * lap + pot.total_scalar_at(idx) * psi.at(idx);
    }
    ComplexField::new(grid, out)
}

/// Energy expectation Re <psi|H|psi> under the grid quadrature.
pub fn energy_expectation(
    psi: &ComplexField,
    pot: &Potentials,
    k: &PhysicalConstants,
) -> Result<f64> {
    let h_psi = apply_hamiltonian(psi, pot, k)?;
    let grid = psi.grid();
    let mut e = 0.0;
    for idx in 0..grid.num_nodes() {
        e += grid.weight(idx) * (psi.at(idx).conj() * h_psi.at(idx)).re;
    }
    Ok(e)
}

/// One-dimensional Hamiltonian line along `axis` at fixed transverse index:
/// tridiagonal coefficients plus periodic corner entries.
struct HamLine {
    lower: Vec<Complex64>,
    diag: Vec<Complex64>,
    upper: Vec<Complex64>,
    corner_lo: Complex64,
    corner_hi: Complex64,
    periodic: bool,
    nodes: Vec<usize>,
}

fn ham_line(
    grid: &Grid,
    pot_scalar: &[f64],
    v_fraction: f64,
    k: &PhysicalConstants,
    axis: usize,
    transverse: usize,
) -> HamLine {
    let n_axis = grid.axis(axis).n;
    let periodic = grid.axis(axis).bc == crate::grid::BoundaryCondition::Periodic;
    let c = k.hbar * k.hbar / (2.0 * k.mass);
    let mut lower = vec![Complex64::default(); n_axis];
    let mut diag = vec![Complex64::default(); n_axis];
    let mut upper = vec![Complex64::default(); n_axis];
    let mut corner_lo = Complex64::default();
    let mut corner_hi = Complex64::default();
    let mut nodes = Vec::with_capacity(n_axis);
    for p in 0..n_axis {
        let idx = if axis == 0 {
            grid.flat(p, transverse)
        } else {
            grid.flat(transverse, p)
        };
        nodes.push(idx);
        let h = grid.physical_spacing(axis, idx);
        let kin = c / (h * h);
        diag[p] = Complex64::new(2.0 * kin + v_fraction * pot_scalar[idx], 0.0);
        for dir in [-1i64, 1] {
            match grid.neighbor(idx, axis, dir) {
                Neighbor::Node(_) => {
                    let is_wrap = (p == 0 && dir < 0) || (p == n_axis - 1 && dir > 0);
                    if is_wrap {
                        if dir < 0 {
                            corner_lo = Complex64::new(-kin, 0.0);
                        } else {
                            corner_hi = Complex64::new(-kin, 0.0);
                        }
                    } else if dir < 0 {
                        lower[p] = Complex64::new(-kin, 0.0);
                    } else {
                        upper[p] = Complex64::new(-kin, 0.0);
                    }
                }
                Neighbor::GhostZero => {}
                Neighbor::GhostMirror(_) => {
                    // Mirror folds onto the interior neighbor column.
                    if p == 0 {
                        upper[p] += Complex64::new(-kin, 0.0);
                    } else {
                        lower[p] += Complex64::new(-kin, 0.0);
                    }
                }
            }
        }
    }
    HamLine {
        lower,
        diag,
        upper,
        corner_lo,
        corner_hi,
        periodic,
        nodes,
    }
}

/// One Cayley factor: solve (1 + i mu H) psi_new = (1 - i mu H) psi
/// along every line of `axis`, with `mu = dt / (2 hbar)`.
fn cayley_sweep(
    values: &mut [Complex64],
    grid: &Grid,
    pot_scalar: &[f64],
    v_fraction: f64,
    k: &PhysicalConstants,
    axis: usize,
    mu: f64,
) -> Result<()> {
    let n_lines = if axis == 0 {
        grid.dims().1
    } else {
        grid.dims().0
    };
    let imu = Complex64::new(0.0, mu);
    for t in 0..n_lines {
        let line = ham_line(grid, pot_scalar, v_fraction, k, axis, t);
        let n = line.nodes.len();
        let mut rhs = vec![Complex64::default(); n];
        for p in 0..n {
            let mut h_psi = line.diag[p] * values[line.nodes[p]];
            if p > 0 {
                h_psi += line.lower[p] * values[line.nodes[p - 1]];
            }
            if p + 1 < n {
                h_psi += line.upper[p] * values[line.nodes[p + 1]];
            }
            if line.periodic {
                if p == 0 {
                    h_psi += line.corner_lo * values[line.nodes[n - 1]];
                }
                if p == n - 1 {
                    h_psi += line.corner_hi * values[line.nodes[0]];
                }
            }
            rhs[p] = values[line.nodes[p]] - imu * h_psi;
        }
        let lower: Vec<Complex64> = line.lower.iter().map(|&x| imu * x).collect();
        let upper: Vec<Complex64> = line.upper.iter().map(|&x| imu * x).collect();
        let diag: Vec<Complex64> = line
            .diag
            .iter()
            .map(|&x| Complex64::new(1.0, 0.0) + imu * x)
            .collect();
        let sol = if line.periodic {
            numerics::solve_cyclic_tridiagonal_complex(
                &lower,
                &diag,
                &upper,
                imu * line.corner_lo,
                imu * line.corner_hi,
                &rhs,
            )?
        } else {
            numerics::solve_tridiagonal_complex(&lower, &diag, &upper, &rhs)?
        };
        for (p, &node) in line.nodes.iter().enumerate() {
            values[node] = sol[p];
        }
    }
    Ok(())
}

fn check_evolution_preconditions(psi0: &ComplexField, pot: &Potentials) -> Result<()> {
    numerics::ensure_same_grid(psi0.grid(), pot.grid(), "state", "potentials")?;
    if pot.has_vector() {
        return Err(CoreError::Unsupported(
            "time evolution under a vector potential is not provided; use the \
             field/residual/circulation operations for minimal coupling"
                .into(),
        ));
    }
    if psi0.grid().topology == Topology::DiskPolar {
        return Err(CoreError::Unsupported(
            "time evolution on the polar disk is not provided; use the radial eigensolver".into(),
        ));
    }
    let n2 = psi0.norm_sq();
    if (n2 - 1.0).abs() > 1e-6 {
        return Err(CoreError::invalid(
            "psi0",
            format!("state must be normalized (|psi|^2 integrates to {n2:.6})"),
        ));
    }
    Ok(())
}

fn stability_advisory(
    pot: &Potentials,
    grid: &Grid,
    dt: f64,
    k: &PhysicalConstants,
) -> Option<String> {
    let mut vmax = 0.0_f64;
    for idx in 0..grid.num_nodes() {
        vmax = vmax.max(pot.total_scalar_at(idx).abs());
    }
    let mut hmin = f64::INFINITY;
    for axis in 0..grid.ndim() {
        for idx in 0..grid.num_nodes() {
            hmin = hmin.min(grid.physical_spacing(axis, idx));
        }
    }
    let kin = k.hbar * k.hbar * std::f64::consts::PI.powi(2) / (2.0 * k.mass * hmin * hmin);
    let phase_per_step = dt * (vmax + kin) / k.hbar;
    if phase_per_step > 1.0 {
        Some(format!(
            "dt accumulates {phase_per_step:.2} rad of phase per step at the \
             grid's fastest scale; accuracy (not stability) may suffer"
        ))
    } else {
        None
    }
}

/// Crank-Nicolson evolution under scalar potentials.
pub fn evolve_linear(
    psi0: &ComplexField,
    pot: &Potentials,
    dt: f64,
    steps: usize,
    k: &PhysicalConstants,
    opts: EvolveOptions,
) -> Result<Evolution> {
    evolve_impl(psi0, pot, dt, steps, k, opts, false)
}

/// Split-step evolution of the nonlinear classical equation.
pub fn evolve_nonlinear_classical(
    psi0: &ComplexField,
    pot: &Potentials,
    dt: f64,
    steps: usize,
    k: &PhysicalConstants,
    opts: EvolveOptions,
) -> Result<Evolution> {
    evolve_impl(psi0, pot, dt, steps, k, opts, true)
}

fn evolve_impl(
    psi0: &ComplexField,
    pot: &Potentials,
    dt: f64,
    steps: usize,
    k: &PhysicalConstants,
    opts: EvolveOptions,
    nonlinear: bool,
) -> Result<Evolution> {
    if !(dt != 0.0 && dt.is_finite()) {
        return Err(CoreError::invalid("dt", "must be nonzero and finite"));
    }
    check_evolution_preconditions(psi0, pot)?;
    let grid = psi0.grid().clone();
    let pot_scalar: Vec<f64> = (0..grid.num_nodes())
        .map(|i| pot.total_scalar_at(i))
        .collect();
    let advisory = stability_advisory(pot, &grid, dt.abs(), k);

    let mut values = psi0.values().to_vec();
    let stride = opts.record_stride.max(1);
    let mut times = vec![0.0];
    let mut frames = vec![psi0.clone()];
    let mut norms = Vec::with_capacity(steps);
    let mut energies = Vec::with_capacity(steps);
    let rest_phase_step = Complex64::from_polar(1.0, -k.rest_energy() * dt / k.hbar);

    for step in 1..=steps {
        if nonlinear {
            nonlinear_step(&mut values, &grid, &pot_scalar, dt, k, opts.node_floor).map_err(
                |e| match e {
                    CoreError::Evolution { reason, .. } => CoreError::Evolution {
                        time: (step - 1) as f64 * dt,
                        reason,
                    },
                    other => other,
                },
            )?;
        } else {
            linear_step(&mut values, &grid, &pot_scalar, dt, k)?;
        }
        if opts.include_rest_energy {
            for v in values.iter_mut() {
                *v *= rest_phase_step;
            }
        }
        let state = ComplexField::new(grid.clone(), values.clone())?;
        norms.push(state.norm_sq());
        energies.push(energy_expectation(&state, pot, k)?);
        if step % stride == 0 || step == steps {
            times.push(step as f64 * dt);
            frames.push(state);
        }
    }

    Ok(Evolution {
        times,
        frames,
        norms,
        energies,
        advisory,
    })
}

fn linear_step(
    values: &mut [Complex64],
    grid: &Grid,
    pot_scalar: &[f64],
    dt: f64,
    k: &PhysicalConstants,
) -> Result<()> {
    let mu = dt / (2.0 * k.hbar);
    match grid.ndim() {
        1 => cayley_sweep(values, grid, pot_scalar, 1.0, k, 0, mu),
        _ => {
            cayley_sweep(values, grid, pot_scalar, 0.5, k, 0, mu / 2.0)?;
            cayley_sweep(values, grid, pot_scalar, 0.5, k, 1, mu)?;
            cayley_sweep(values, grid, pot_scalar, 0.5, k, 0, mu / 2.0)
        }
    }
}

/// Relative amplitude around which the nonlinear term tapers off: the
/// density there is 1e-10 of the peak. Below it |psi| approaches
/// floating-point noise and lap|psi|/|psi| stops meaning anything.
const NONLINEAR_AMP_FLOOR: f64 = 1e-5;

/// One pass of [1/4, 1/2, 1/4] binomial smoothing per axis.
///
/// Used only for the nonlinear rotation rate: it changes the resolved-scale
/// Laplacian at O(h^2) (the same order as the stencil) but removes the
/// grid-scale response through which amplitude noise and the anti-diffusive
/// term feed back on each other.
fn binomial_smooth(amp: &[f64], grid: &Grid) -> Vec<f64> {
    let n = grid.num_nodes();
    let mut cur = amp.to_vec();
    for axis in 0..grid.ndim() {
        let mut next = vec![0.0; n];
        for idx in 0..n {
            let sample = |dir: i64| -> f64 {
                match grid.neighbor(idx, axis, dir) {
                    Neighbor::Node(nb) => cur[nb],
                    Neighbor::GhostZero => 0.0,
                    Neighbor::GhostMirror(nb) => cur[nb],
                }
            };
            next[idx] = 0.25 * sample(-1) + 0.5 * cur[idx] + 0.25 * sample(1);
        }
        cur = next;
    }
    cur
}

/// The nonlinear term as a real phase-rotation rate: Q = +(hbar^2/2m)
/// lap|psi| / |psi|, tapered smoothly to zero where the amplitude is
/// negligible. Errors when an interior node forms: an amplitude dipping
/// far below its immediate neighborhood in a region that carries weight.
/// Smooth tails never dip relative to their neighbors.
fn nonlinear_rotation_rate(
    values: &[Complex64],
    grid: &Grid,
    k: &PhysicalConstants,
    node_floor: f64,
) -> Result<Vec<f64>> {
    let n = grid.num_nodes();
    let amp: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    let amp_max = amp.iter().fold(0.0_f64, |m, &a| m.max(a));
    let a0 = NONLINEAR_AMP_FLOOR * amp_max;
    for idx in 0..n {
        let mut neigh_max = 0.0_f64;
        for axis in 0..grid.ndim() {
            for dir in [-1i64, 1] {
                if let Neighbor::Node(nb) = grid.neighbor(idx, axis, dir) {
                    neigh_max = neigh_max.max(amp[nb]);
                }
            }
        }
        if neigh_max >= a0 && amp[idx] < node_floor.sqrt() * neigh_max {
            return Err(CoreError::Evolution {
                time: f64::NAN,
                reason: format!(
                    "node forming at node {idx}: |psi| dropped to {:.3e} of its neighborhood",
                    amp[idx] / neigh_max
                ),
            });
        }
    }
    let smooth = binomial_smooth(&binomial_smooth(&amp, grid), grid);
    let c = k.hbar * k.hbar / (2.0 * k.mass);
    Ok((0..n)
        .map(|idx| {
            let a = smooth[idx];
            if a <= 0.0 {
                return 0.0;
            }
            // Rational taper: ~1 in the bulk, ~(a/a0)^2 far below the floor.
            let taper = a * a / (a * a + a0 * a0);
            taper * c * laplacian_at(&smooth, grid, None, idx) / a
        })
        .collect())
}

fn nonlinear_step(
    values: &mut [Complex64],
    grid: &Grid,
    pot_scalar: &[f64],
    dt: f64,
    k: &PhysicalConstants,
    node_floor: f64,
) -> Result<()> {
    // Sub-step limiter. The added term acts like an explicit second-
    // derivative operator, so the relevant rate is not just max|Q| over the
    // current state but the operator's grid-scale bound 4 c / h_min^2;
    // keeping the kick angle below ~0.5 rad per sub-step at every mode
    // keeps the rotate/solve/rotate product stable.
    let q0 = nonlinear_rotation_rate(values, grid, k, node_floor)?;
    let qmax_state = q0.iter().fold(0.0_f64, |m, &q| m.max(q.abs()));
    let substeps = if qmax_state * dt.abs() / k.hbar <= 1e-10 {
        // Uniform-amplitude states: the term vanishes and the step is the
        // plain linear one.
        1
    } else {
        let mut hmin = f64::INFINITY;
        for axis in 0..grid.ndim() {
            for idx in 0..grid.num_nodes() {
                hmin = hmin.min(grid.physical_spacing(axis, idx));
            }
        }
        let q_grid_scale = 4.0 * k.hbar * k.hbar / (2.0 * k.mass * hmin * hmin);
        let qmax = qmax_state.max(q_grid_scale);
        ((qmax * dt.abs() / k.hbar / 0.5).ceil() as usize).clamp(1, 256)
    };
    let h = dt / substeps as f64;
    for _ in 0..substeps {
        rotate(values, grid, k, node_floor, h / 2.0)?;
        linear_step(values, grid, pot_scalar, h, k)?;
        rotate(values, grid, k, node_floor, h / 2.0)?;
    }
    Ok(())
}

fn rotate(
    values: &mut [Complex64],
    grid: &Grid,
    k: &PhysicalConstants,
    node_floor: f64,
    dt: f64,
) -> Result<()> {
    let q = nonlinear_rotation_rate(values, grid, k, node_floor)?;
    for (v, &qi) in values.iter_mut().zip(&q) {
        if qi != 0.0 {
            *v *= Complex64::from_polar(1.0, -qi * dt / k.hbar);
        }
    }
    Ok(())
}

// ---- state builders and measurements ---------------------------------------

/// Normalized Gaussian packet with momentum `p` on a line grid.
pub fn gaussian_packet(
    grid: &Arc<Grid>,
    sigma0: f64,
    center: f64,
    momentum: f64,
    k: &PhysicalConstants,
) -> Result<ComplexField> {
    let hbar = k.hbar;
    let psi = ComplexField::from_fn(grid.clone(), |x, _| {
        let envelope = (-(x - center) * (x - center) / (4.0 * sigma0 * sigma0)).exp();
        Complex64::from_polar(envelope, momentum * x / hbar)
    })?;
    psi.normalized()
}

/// Density mean and variance along the first axis.
pub fn density_moments(psi: &ComplexField) -> (f64, f64) {
    let grid = psi.grid();
    let mut mass = 0.0;
    let mut mean = 0.0;
    for idx in 0..grid.num_nodes() {
        let w = grid.weight(idx) * psi.at(idx).norm_sqr();
        let (x, _) = grid.coords(idx);
        mass += w;
        mean += w * x;
    }
    mean /= mass;
    let mut var = 0.0;
    for idx in 0..grid.num_nodes() {
        let w = grid.weight(idx) * psi.at(idx).norm_sqr();
        let (x, _) = grid.coords(idx);
        var += w * (x - mean) * (x - mean);
    }
    (mean, var / mass)
}
