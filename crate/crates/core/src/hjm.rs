//! Hamilton-Jacobi-Madelung verification and the central-potential
//! dichotomy: residual evaluation of the coupled density/phase system,
//! construction of the extraneous central-potential solutions that solve
//! the system with non-quantized circulation, the loop-quantization gate
//! that separates them from genuine quantum states, and the ring
//! superposition single-valuedness check.

use serde::Serialize;
use std::sync::Arc;

use crate::constants::PhysicalConstants;
use crate::error::{CoreError, Result};
use crate::field::{normalize_density, NodeMask, ScalarField, VectorField};
use crate::grid::{Grid, Topology};
use crate::kinematics::{self, WindingReport};
use crate::numerics;
use crate::phase::PhaseField;
use crate::potentials::{Potentials, ScalarSpec};
use crate::schrodinger;

/// Exact-integer window for classifying winding values. This is arithmetic
/// classification of a closed-form number, a different error budget from
/// the gate's numerical circulation tolerance.
pub const INTEGER_CLASSIFICATION_WINDOW: f64 = 1e-9;

/// Default gate tolerance as a fraction of h.
pub const GATE_TOLERANCE_REL: f64 = 1e-6;

/// Whether the energy bookkeeping carries the rest energy m c^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestEnergyConvention {
    /// Total-energy form: the Hamilton-Jacobi bracket includes m c^2 and
    /// the supplied energy rates must include it as well.
    Include,
    /// Mechanical form without the rest-energy offset.
    Exclude,
}

/// Time-derivative inputs for non-static checks.
#[derive(Debug, Clone)]
pub enum Rate {
    Zero,
    Uniform(f64),
    Field(ScalarField),
}

impl Rate {
    pub(crate) fn at(&self, idx: usize) -> f64 {
        match self {
            Rate::Zero => 0.0,
            Rate::Uniform(v) => *v,
            Rate::Field(f) => f.at(idx),
        }
    }
}

/// Residuals of the continuity and Hamilton-Jacobi equations.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub continuity: ScalarField,
    pub hamilton_jacobi: ScalarField,
    pub continuity_l2: f64,
    pub continuity_linf: f64,
    pub hj_l2: f64,
    pub hj_linf: f64,
    pub tolerance: f64,
    pub continuity_pass: bool,
    pub hj_pass: bool,
    pub mask: NodeMask,
}

impl ResidualReport {
    pub fn pass(&self) -> bool {
        self.continuity_pass && self.hj_pass
    }

    /// JSON summary with stable key names.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "continuity_l2": self.continuity_l2,
            "continuity_linf": self.continuity_linf,
            "hj_l2": self.hj_l2,
            "hj_linf": self.hj_linf,
            "tolerance": self.tolerance,
            "verdict": if self.pass() { "PASS" } else { "FAIL" },
        })
    }
}

/// Evaluate both residual fields for a state (rho, S).
///
/// Continuity: d rho/dt + div(rho v) with v = (grad S - (e/c)A)/m.
/// Hamilton-Jacobi: dS/dt + (grad S - (e/c)A)^2/2m + V_total + QK
/// (+ m c^2 under the Include convention). Stationary states pass
/// `drho_dt = Zero` and `ds_dt = Uniform(-E)` with E in the convention's
/// bookkeeping. Pass flags compare the infinity norms against `tol`.
#[allow(clippy::too_many_arguments)]
pub fn hjm_residuals(
    rho: &ScalarField,
    s: &PhaseField,
    pot: &Potentials,
    k: &PhysicalConstants,
    drho_dt: &Rate,
    ds_dt: &Rate,
    convention: RestEnergyConvention,
    node_floor: f64,
    tol: f64,
) -> Result<ResidualReport> {
    numerics::ensure_same_grid(rho.grid(), s.grid(), "density", "phase")?;
    numerics::ensure_same_grid(rho.grid(), pot.grid(), "density", "potentials")?;
    let grid = rho.grid().clone();
    let n = grid.num_nodes();

    let v = kinematics::current_velocity(s, pot.vector.as_ref(), k)?;
    let mask = rho.relative_floor_mask(node_floor).or(s.mask());

    // Continuity: flux rho*v differentiated off the mask, raw values in
    // the stencil (consistent with the quantum-kinetic convention).
    let mut flux_comps = Vec::with_capacity(grid.ndim());
    for axis in 0..grid.ndim() {
        let comp: Vec<f64> = (0..n).map(|i| rho.at(i) * v.at(axis, i)).collect();
        flux_comps.push(comp);
    }
    let flux = VectorField::new(grid.clone(), flux_comps)?;
    let div = numerics::divergence(&flux, Some(&mask))?;
    let mut continuity = vec![0.0; n];
    for idx in 0..n {
        if !mask.is_masked(idx) {
            continuity[idx] = drho_dt.at(idx) + div.at(idx);
        }
    }

    // Hamilton-Jacobi side.
    let (qk, _) = kinematics::quantum_kinetic_with_floor(rho, k, node_floor)?;
    let rest = match convention {
        RestEnergyConvention::Include => k.rest_energy(),
        RestEnergyConvention::Exclude => 0.0,
    };
    let mut hj = vec![0.0; n];
    for idx in 0..n {
        if mask.is_masked(idx) {
            continue;
        }
        let kinetic = 0.5 * k.mass * v.magnitude_sq(idx);
        hj[idx] = ds_dt.at(idx) + kinetic + pot.total_scalar_at(idx) + qk.at(idx) + rest;
    }

    let (c_l2, c_linf) = numerics::norms_off_mask(&continuity, &grid, Some(&mask));
    let (h_l2, h_linf) = numerics::norms_off_mask(&hj, &grid, Some(&mask));
    Ok(ResidualReport {
        continuity: ScalarField::new(grid.clone(), continuity)?,
        hamilton_jacobi: ScalarField::new(grid, hj)?,
        continuity_l2: c_l2,
        continuity_linf: c_linf,
        hj_l2: h_l2,
        hj_linf: h_linf,
        tolerance: tol,
        continuity_pass: c_linf <= tol,
        hj_pass: h_linf <= tol,
        mask,
    })
}

// ---- the central-potential dichotomy -----------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WindingClass {
    Integer(i64),
    NonInteger,
}

/// An extraneous solution of the central-potential system: density from
/// the radial profile, azimuthal velocity scaled by sqrt(2 m a / hbar^2 + 1).
#[derive(Debug, Clone)]
pub struct WallstromSolution {
    /// Inverse-square coefficient a (energy * length^2).
    pub a: f64,
    /// The winding value sqrt(2 m a / hbar^2 + 1).
    pub winding_value: f64,
    pub classification: WindingClass,
    /// Density of the shared radial profile (normalized).
    pub rho: ScalarField,
    /// Phase of the base state: S = hbar * phi (winding one, solves the
    /// system with the effective potential V + a/r^2).
    pub base_phase: PhaseField,
    /// Phase of the extraneous state: S' = hbar * winding_value * phi
    /// (solves the system with the plain potential V).
    pub effective_phase: PhaseField,
    /// Stationary energy shared by both pairs.
    pub energy: f64,
    /// Radial-solver residual.
    pub solver_residual: f64,
    /// Verification of the extraneous pair against the plain potential.
    pub residuals: ResidualReport,
    /// Verification of the base pair against V + a/r^2.
    pub base_residuals: ResidualReport,
}

/// Construct and verify the extraneous solution for inverse-square
/// strength `a >= 0` over the central potential `v_spec` on a polar grid.
///
/// The scaled velocity field solves the Hamilton-Jacobi-Madelung system
/// with the plain potential even though its circulation is generally not
/// an integer multiple of h; the base (winding-one) pair solves the system
/// with the effective potential. Both are verified here with the same
/// discrete operators the eigensolver uses, so the residuals are solver-
/// precision, not discretization-limited.
pub fn wallstrom_extraneous_solution(
    grid: &Arc<Grid>,
    a: f64,
    v_spec: ScalarSpec,
    k: &PhysicalConstants,
    tol: f64,
    node_floor: f64,
) -> Result<WallstromSolution> {
    if grid.topology != Topology::DiskPolar {
        return Err(CoreError::Unsupported(
            "the central-potential construction needs a polar grid".into(),
        ));
    }
    if a < 0.0 {
        return Err(CoreError::invalid("a", "must be non-negative"));
    }
    let winding_value = (2.0 * k.mass * a / (k.hbar * k.hbar) + 1.0).sqrt();
    let classification =
        if (winding_value - winding_value.round()).abs() <= INTEGER_CLASSIFICATION_WINDOW {
            WindingClass::Integer(winding_value.round() as i64)
        } else {
            WindingClass::NonInteger
        };

    // Radial profile: the winding-one ground state of V + a/r^2, which is
    // identically the real-winding ground state of the plain potential.
    let (nr, _) = grid.dims();
    let v_radial: Vec<f64> = (0..nr)
        .map(|i| v_spec.eval_radial(k, grid.axis(0).coord(i)))
        .collect();
    let sol =
        schrodinger::radial_ground_state(grid, &v_radial, winding_value, k, tol.min(1e-9), 200)?;

    // Density rho_a = |R|^2 extended around the ring, normalized.
    let (nr, nphi) = grid.dims();
    let mut rho_vals = vec![0.0; nr * nphi];
    for j in 0..nphi {
        for i in 0..nr {
            rho_vals[grid.flat(i, j)] = sol.profile[i] * sol.profile[i];
        }
    }
    let rho = normalize_density(&ScalarField::new(grid.clone(), rho_vals)?)?;
    let mask = rho.relative_floor_mask(node_floor);

    let base_phase =
        PhaseField::from_linear_angle(grid.clone(), k.hbar, k.hbar, Some(mask.clone()))?;
    let effective_phase =
        PhaseField::from_linear_angle(grid.clone(), k.hbar * winding_value, k.hbar, Some(mask))?;

    // Verify the extraneous pair against the plain potential...
    let pot_plain = Potentials::from_spec(grid.clone(), v_spec, k)?;
    let residuals = hjm_residuals(
        &rho,
        &effective_phase,
        &pot_plain,
        k,
        &Rate::Zero,
        &Rate::Uniform(-sol.energy),
        RestEnergyConvention::Exclude,
        node_floor,
        tol,
    )?;
    // ...and the base pair against the effective potential V + a/r^2.
    let pot_effective = Potentials::from_spec(grid.clone(), v_spec.plus_inverse_square(a), k)?;
    let base_residuals = hjm_residuals(
        &rho,
        &base_phase,
        &pot_effective,
        k,
        &Rate::Zero,
        &Rate::Uniform(-sol.energy),
        RestEnergyConvention::Exclude,
        node_floor,
        tol,
    )?;

    Ok(WallstromSolution {
        a,
        winding_value,
        classification,
        rho,
        base_phase,
        effective_phase,
        energy: sol.energy,
        solver_residual: sol.residual,
        residuals,
        base_residuals,
    })
}

// ---- quantization gate ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GateVerdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone)]
pub struct GateReport {
    pub reports: Vec<WindingReport>,
    pub verdict: GateVerdict,
    /// Whether masked nodes split the domain into disconnected regions
    /// (each region's loops are audited independently).
    pub disconnected_regions: bool,
}

impl GateReport {
    pub fn windings(&self) -> Vec<i64> {
        self.reports.iter().map(|r| r.nearest_integer).collect()
    }

    /// JSON summary with stable key names.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "windings": self.windings(),
            "circulations": self.reports.iter().map(|r| r.circulation).collect::<Vec<_>>(),
            "residuals": self.reports.iter().map(|r| r.residual).collect::<Vec<_>>(),
            "verdict": match self.verdict { GateVerdict::Accept => "ACCEPT", GateVerdict::Reject => "REJECT" },
        })
    }
}

/// Check the loop-quantization condition: every circulation must lie
/// within `tol_rel * h` of an integer multiple of h.
///
/// Besides the user loops, the gate auto-selects the loops that can carry
/// nontrivial circulation: the non-contractible loops of ring and polar
/// grids (taken at the innermost fully-unmasked angular row) and the
/// smallest grid loop around each masked region on plane grids, since the
/// phase jumps it must detect live exactly at masked nodes.
pub fn quantization_gate(
    s: &PhaseField,
    user_loops: &[Vec<usize>],
    k: &PhysicalConstants,
    tol_rel: f64,
) -> Result<GateReport> {
    let grid = s.grid().clone();
    let tol = tol_rel * s.planck();
    let mut loops: Vec<Vec<usize>> = Vec::new();

    match grid.topology {
        Topology::Ring => loops.push(kinematics::ring_loop(&grid)),
        Topology::DiskPolar => {
            if let Some(i) = first_unmasked_angular_row(s) {
                loops.push(kinematics::polar_angular_loop(&grid, i));
            }
        }
        Topology::Plane => {
            loops.extend(enclosing_loops_for_masked_regions(s));
        }
        Topology::Line => {}
    }
    loops.extend_from_slice(user_loops);

    let mut reports = Vec::with_capacity(loops.len());
    for l in &loops {
        reports.push(kinematics::circulation(s, l, None, k, tol)?);
    }
    let verdict = if reports.iter().all(|r| r.accepted) {
        GateVerdict::Accept
    } else {
        GateVerdict::Reject
    };
    Ok(GateReport {
        reports,
        verdict,
        disconnected_regions: s.is_disconnected(),
    })
}

fn first_unmasked_angular_row(s: &PhaseField) -> Option<usize> {
    let grid = s.grid();
    let (nr, nphi) = grid.dims();
    (0..nr).find(|&i| (0..nphi).all(|j| !s.mask().is_masked(grid.flat(i, j))))
}

/// Smallest rectangular grid loops enclosing each masked connected region
/// of a plane grid.
fn enclosing_loops_for_masked_regions(s: &PhaseField) -> Vec<Vec<usize>> {
    let grid = s.grid();
    let (n0, n1) = grid.dims();
    let mask = s.mask();
    // Label masked regions by flood fill.
    let mut label = vec![usize::MAX; grid.num_nodes()];
    let mut regions: Vec<(usize, usize, usize, usize)> = Vec::new(); // (i0,i1,j0,j1)
    for start in 0..grid.num_nodes() {
        if !mask.is_masked(start) || label[start] != usize::MAX {
            continue;
        }
        let id = regions.len();
        let (si, sj) = grid.unflat(start);
        let mut bbox = (si, si, sj, sj);
        let mut queue = std::collections::VecDeque::from([start]);
        label[start] = id;
        while let Some(cur) = queue.pop_front() {
            let (ci, cj) = grid.unflat(cur);
            bbox.0 = bbox.0.min(ci);
            bbox.1 = bbox.1.max(ci);
            bbox.2 = bbox.2.min(cj);
            bbox.3 = bbox.3.max(cj);
            for axis in 0..2 {
                for dir in [1i64, -1] {
                    if let crate::grid::Neighbor::Node(nb) = grid.neighbor(cur, axis, dir) {
                        if mask.is_masked(nb) && label[nb] == usize::MAX {
                            label[nb] = id;
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        regions.push(bbox);
    }
    let mut loops = Vec::new();
    for &(i0, i1, j0, j1) in &regions {
        if i0 == 0 || j0 == 0 || i1 + 1 >= n0 || j1 + 1 >= n1 {
            continue; // the region touches the boundary; no enclosing loop
        }
        let (lo_i, hi_i, lo_j, hi_j) = (i0 - 1, i1 + 1, j0 - 1, j1 + 1);
        let mut l = Vec::new();
        for i in lo_i..=hi_i {
            l.push(grid.flat(i, lo_j));
        }
        for j in (lo_j + 1)..=hi_j {
            l.push(grid.flat(hi_i, j));
        }
        for i in (lo_i..hi_i).rev() {
            l.push(grid.flat(i, hi_j));
        }
        for j in ((lo_j + 1)..hi_j).rev() {
            l.push(grid.flat(lo_i, j));
        }
        // Reject loops that themselves touch masked nodes.
        if l.iter().all(|&idx| !mask.is_masked(idx)) {
            loops.push(l);
        }
    }
    loops
}

// ---- ring superposition single-valuedness ---------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SuperpositionReport {
    pub k1: f64,
    pub k2: f64,
    /// Distance of k1 - k2 from the nearest integer.
    pub delta_integer_distance: f64,
    /// max over theta of | |psi(theta + 2 pi)|^2 - |psi(theta)|^2 |.
    pub max_density_mismatch: f64,
    pub single_valued: bool,
}

/// Two-mode superposition on the ring: the density is single-valued under
/// the 2 pi continuation exactly when k1 - k2 is an integer.
pub fn ring_superposition_check(
    grid: &Arc<Grid>,
    k1: f64,
    k2: f64,
    amplitudes: (f64, f64),
) -> Result<SuperpositionReport> {
    if grid.topology != Topology::Ring {
        return Err(CoreError::Unsupported(
            "superposition check needs a ring".into(),
        ));
    }
    let (a1, a2) = amplitudes;
    // |psi_s(theta)|^2 = a1^2 + a2^2 + 2 a1 a2 cos((k1 - k2) theta), up to
    // the overall normalization, evaluated as the analytic continuation in
    // theta (the grid never sees theta + 2 pi, which is the point).
    let dk = k1 - k2;
    let density = |theta: f64| -> f64 { a1 * a1 + a2 * a2 + 2.0 * a1 * a2 * (dk * theta).cos() };
    // Normalize over one period.
    let total: f64 = (0..grid.num_nodes())
        .map(|idx| {
            let (t, _) = grid.coords(idx);
            density(t) * grid.weight(idx)
        })
        .sum();
    let scale = 1.0 / total;
    let mut max_mismatch = 0.0_f64;
    for idx in 0..grid.num_nodes() {
        let (t, _) = grid.coords(idx);
        let mism = (density(t + crate::grid::TWO_PI) - density(t)).abs() * scale;
        max_mismatch = max_mismatch.max(mism);
    }
    let delta_integer_distance = (dk - dk.round()).abs();
    Ok(SuperpositionReport {
        k1,
        k2,
        delta_integer_distance,
        max_density_mismatch: max_mismatch,
        single_valued: delta_integer_distance <= INTEGER_CLASSIFICATION_WINDOW,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;
    use num_complex::Complex64;

    fn natural() -> PhysicalConstants {
        PhysicalConstants::natural()
    }

    #[test]
    fn ring_eigenstate_residuals_vanish() {
        let k = natural();
        let g = Grid::ring(128, 1.0).unwrap();
        let eig = schrodinger::ring_eigenstate(&g, 2, &k).unwrap();
        let (rho, s) = kinematics::polar_decompose(&eig.psi, 1e-9, &k).unwrap();
        let pot = Potentials::free(g);
        let rep = hjm_residuals(
            &rho,
            &s,
            &pot,
            &k,
            &Rate::Zero,
            &Rate::Uniform(-eig.energy),
            RestEnergyConvention::Exclude,
            1e-9,
            1e-10,
        )
        .unwrap();
        assert!(
            rep.pass(),
            "c_linf {} hj_linf {}",
            rep.continuity_linf,
            rep.hj_linf
        );
    }

    #[test]
    fn rest_energy_convention_shifts_the_bookkeeping() {
        let k = crate::constants::make_constants(
            crate::constants::UnitSystem::Natural,
            crate::constants::ConstantOverrides {
                light_speed: Some(10.0),
                ..Default::default()
            },
        )
        .unwrap();
        let g = Grid::ring(64, 1.0).unwrap();
        let eig = schrodinger::ring_eigenstate(&g, 1, &k).unwrap();
        let (rho, s) = kinematics::polar_decompose(&eig.psi, 1e-9, &k).unwrap();
        let pot = Potentials::free(g);
        // Including the rest energy demands the rest-inclusive energy rate.
        let rep = hjm_residuals(
            &rho,
            &s,
            &pot,
            &k,
            &Rate::Zero,
            &Rate::Uniform(-(eig.energy + k.rest_energy())),
            RestEnergyConvention::Include,
            1e-9,
            1e-10,
        )
        .unwrap();
        assert!(rep.pass());
    }

    #[test]
    fn harmonic_ground_state_residuals_scale_at_second_order() {
        let k = natural();
        let residual_for = |n: usize| -> f64 {
            let g = Grid::line(n, -8.0, 8.0, BoundaryCondition::Reflecting).unwrap();
            let rho =
                normalize_density(&ScalarField::from_fn(g.clone(), |x, _| (-x * x).exp()).unwrap())
                    .unwrap();
            let s_field = ScalarField::from_fn(g.clone(), |_, _| 0.0).unwrap();
            let s = PhaseField::from_samples(&s_field, k.hbar, None).unwrap();
            let pot = Potentials::from_spec(g, ScalarSpec::Harmonic { omega: 1.0 }, &k).unwrap();
            let rep = hjm_residuals(
                &rho,
                &s,
                &pot,
                &k,
                &Rate::Zero,
                &Rate::Uniform(-0.5),
                RestEnergyConvention::Exclude,
                1e-9,
                1.0,
            )
            .unwrap();
            rep.hj_l2
        };
        let coarse = residual_for(128);
        let fine = residual_for(256);
        let order = (coarse / fine).log2();
        assert!(order > 1.8, "observed order {order} ({coarse} -> {fine})");
    }

    #[test]
    fn random_smooth_state_fails_residuals() {
        let k = natural();
        let g = Grid::ring(64, 1.0).unwrap();
        let rho = normalize_density(
            &ScalarField::from_fn(g.clone(), |t, _| 1.0 + 0.5 * (3.0 * t).cos()).unwrap(),
        )
        .unwrap();
        let s_field = ScalarField::from_fn(g.clone(), |t, _| 0.3 * (2.0 * t).sin()).unwrap();
        let s = PhaseField::from_samples(&s_field, k.hbar, None).unwrap();
        let pot = Potentials::free(g);
        let rep = hjm_residuals(
            &rho,
            &s,
            &pot,
            &k,
            &Rate::Zero,
            &Rate::Zero,
            RestEnergyConvention::Exclude,
            1e-9,
            1e-8,
        )
        .unwrap();
        assert!(!rep.pass(), "negative control unexpectedly passed");
    }

    #[test]
    fn residuals_invariant_under_constant_phase_shift() {
        let k = natural();
        let g = Grid::ring(64, 1.0).unwrap();
        let eig = schrodinger::ring_eigenstate(&g, 1, &k).unwrap();
        let (rho, s) = kinematics::polar_decompose(&eig.psi, 1e-9, &k).unwrap();
        let shifted_psi = crate::field::ComplexField::new(
            g.clone(),
            eig.psi
                .values()
                .iter()
                .map(|z| z * Complex64::from_polar(1.0, 1.234))
                .collect(),
        )
        .unwrap();
        let (_, s_shifted) = kinematics::polar_decompose(&shifted_psi, 1e-9, &k).unwrap();
        let pot = Potentials::free(g);
        let args = |s: &PhaseField| {
            hjm_residuals(
                &rho,
                s,
                &pot,
                &k,
                &Rate::Zero,
                &Rate::Uniform(-eig.energy),
                RestEnergyConvention::Exclude,
                1e-9,
                1e-10,
            )
            .unwrap()
        };
        let a = args(&s);
        let b = args(&s_shifted);
        assert!((a.hj_l2 - b.hj_l2).abs() < 1e-14);
        assert!((a.continuity_l2 - b.continuity_l2).abs() < 1e-14);
    }

    fn wallstrom_on(grid: &Arc<Grid>, a: f64) -> WallstromSolution {
        let k = natural();
        wallstrom_extraneous_solution(
            grid,
            a,
            ScalarSpec::Harmonic { omega: 1.0 },
            &k,
            1e-6,
            kinematics::DEFAULT_NODE_FLOOR,
        )
        .unwrap()
    }

    #[test]
    fn integer_coefficient_classifies_as_integer() {
        let k = natural();
        let g = Grid::disk_polar(128, 64, 6.0).unwrap();
        // a = 3 hbar^2 / 2m: sqrt(3 + 1) = 2.
        let sol = wallstrom_on(&g, 1.5 * k.hbar * k.hbar / k.mass);
        assert_eq!(sol.classification, WindingClass::Integer(2));
        assert!((sol.winding_value - 2.0).abs() < 1e-12);
        assert!(sol.residuals.pass(), "hj_linf {}", sol.residuals.hj_linf);
        assert!(sol.base_residuals.pass());
    }

    #[test]
    fn generic_coefficient_solves_the_system_without_quantization() {
        let k = natural();
        let g = Grid::disk_polar(128, 64, 6.0).unwrap();
        // a = hbar^2/m: sqrt 3, not an integer.
        let sol = wallstrom_on(&g, k.hbar * k.hbar / k.mass);
        assert_eq!(sol.classification, WindingClass::NonInteger);
        assert!((sol.winding_value - 3.0_f64.sqrt()).abs() < 1e-12);
        // The residuals pass: the pair genuinely solves the system...
        assert!(
            sol.residuals.pass(),
            "c {} hj {}",
            sol.residuals.continuity_linf,
            sol.residuals.hj_linf
        );
        // ...but the gate rejects the circulation.
        let gate = quantization_gate(&sol.effective_phase, &[], &k, GATE_TOLERANCE_REL).unwrap();
        assert_eq!(gate.verdict, GateVerdict::Reject);
    }

    #[test]
    fn zero_coefficient_reduces_to_the_base_state() {
        let g = Grid::disk_polar(128, 64, 6.0).unwrap();
        let sol = wallstrom_on(&g, 0.0);
        assert_eq!(sol.classification, WindingClass::Integer(1));
        // Base and effective phases coincide.
        for i in 0..g.num_nodes() {
            let a = sol.base_phase.increment(1, i);
            let b = sol.effective_phase.increment(1, i);
            if !a.is_nan() && !b.is_nan() {
                assert!((a - b).abs() < 1e-15);
            }
        }
        // E = 2 hbar omega for the |m| = 1 sector of the harmonic well.
        assert!((sol.energy - 2.0).abs() < 2e-3, "energy {}", sol.energy);
    }

    #[test]
    fn gate_accepts_solver_eigenstates() {
        let k = natural();
        let g = Grid::ring(128, 1.0).unwrap();
        for n in [0i64, 1, 3] {
            let eig = schrodinger::ring_eigenstate(&g, n, &k).unwrap();
            let (_, s) = kinematics::polar_decompose(&eig.psi, 1e-9, &k).unwrap();
            let gate = quantization_gate(&s, &[], &k, GATE_TOLERANCE_REL).unwrap();
            assert_eq!(gate.verdict, GateVerdict::Accept);
            assert_eq!(gate.windings(), vec![n]);
        }
    }

    #[test]
    fn gate_accepts_integer_scaled_effective_phase_with_two_windings() {
        let k = natural();
        let g = Grid::disk_polar(128, 64, 6.0).unwrap();
        let sol = wallstrom_on(&g, 1.5 * k.hbar * k.hbar / k.mass);
        let gate = quantization_gate(&sol.effective_phase, &[], &k, GATE_TOLERANCE_REL).unwrap();
        assert_eq!(gate.verdict, GateVerdict::Accept);
        assert_eq!(gate.windings(), vec![2]);
    }

    #[test]
    fn azimuthal_speed_interpolates_continuously_in_a() {
        // The extraneous family's kinetic field is continuous and monotone
        // in the inverse-square coefficient; quantization is imposed by the
        // gate, not by the dynamics.
        let k = natural();
        let g = Grid::disk_polar(96, 32, 6.0).unwrap();
        let i_probe = 32; // fixed radial node
        let r_probe = g.axis(0).coord(i_probe);
        let mut last = 0.0;
        for step in 0..6 {
            let a = 0.3 * step as f64;
            let sol = wallstrom_on(&g, a);
            let v = kinematics::current_velocity(&sol.effective_phase, None, &k).unwrap();
            let speed = v.at(1, g.flat(i_probe, 0));
            let expect = sol.winding_value * k.hbar / (k.mass * r_probe);
            assert!((speed - expect).abs() < 1e-9, "a={a}: {speed} vs {expect}");
            if step > 0 {
                assert!(speed > last, "speed must grow with a");
            }
            last = speed;
        }
    }

    #[test]
    fn superposition_single_valuedness_follows_integer_differences() {
        let g = Grid::ring(256, 1.0).unwrap();
        let integer = ring_superposition_check(&g, 2.0, 1.0, (1.0, 1.0)).unwrap();
        assert!(integer.single_valued);
        assert!(integer.max_density_mismatch <= 1e-12);

        let fractional = ring_superposition_check(&g, 1.5, 0.0, (1.0, 1.0)).unwrap();
        assert!(!fractional.single_valued);
        assert!(fractional.max_density_mismatch > 0.1);

        let degenerate = ring_superposition_check(&g, 0.7, 0.7, (1.0, 1.0)).unwrap();
        assert!(degenerate.single_valued);
        assert!(degenerate.max_density_mismatch <= 1e-12);
    }

    #[test]
    fn report_json_keys_are_stable() {
        let k = natural();
        let g = Grid::ring(64, 1.0).unwrap();
        let eig = schrodinger::ring_eigenstate(&g, 1, &k).unwrap();
        let (rho, s) = kinematics::polar_decompose(&eig.psi, 1e-9, &k).unwrap();
        let pot = Potentials::free(g);
        let rep = hjm_residuals(
            &rho,
            &s,
            &pot,
            &k,
            &Rate::Zero,
            &Rate::Uniform(-eig.energy),
            RestEnergyConvention::Exclude,
            1e-9,
            1e-10,
        )
        .unwrap();
        let j = rep.to_json();
        assert!(j.get("continuity_l2").is_some());
        assert!(j.get("hj_linf").is_some());
        assert_eq!(j.get("verdict").unwrap(), "PASS");
        let gate = quantization_gate(&s, &[], &k, GATE_TOLERANCE_REL).unwrap();
        let gj = gate.to_json();
        assert!(gj.get("windings").is_some());
        assert_eq!(gj.get("verdict").unwrap(), "ACCEPT");
    }
}
