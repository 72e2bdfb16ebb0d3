//! The classical oscillating-particle model: phase accumulation along
//! deterministic trajectories, loop-phase quantization, external-field
//! frequency shifts, classical Hamilton-Jacobi residuals, and the quantized
//! circular orbits of the Coulomb problem.
//!
//! Everything here is closed-form or quadrature along supplied paths; the
//! orbits are evaluated analytically rather than integrated, since the
//! results being checked are algebraic.

use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::error::{CoreError, Result};
use crate::field::ScalarField;
use crate::hjm::Rate;
use crate::numerics;

/// A sampled deterministic path. For fixed-time (virtual-displacement)
/// loops the times are all equal and the velocities are the momentum field
/// sampled along the path; otherwise velocities default to centered
/// differences of the positions.
#[derive(Debug, Clone)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Option<Vec<[f64; 2]>>,
}

impl ClassicalTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn velocity_at(&self, i: usize) -> Result<[f64; 2]> {
        if let Some(v) = &self.velocities {
            return Ok(v[i]);
        }
        let n = self.times.len();
        let (a, b) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        let dt = self.times[b] - self.times[a];
        if dt.abs() < 1e-300 {
            return Err(CoreError::invalid(
                "trajectory",
                "fixed-time paths need explicit velocities",
            ));
        }
        Ok([
            (self.positions[b][0] - self.positions[a][0]) / dt,
            (self.positions[b][1] - self.positions[a][1]) / dt,
        ])
    }
}

/// Potential samples along a trajectory (energy units, already scaled by
/// m and e respectively); zero when absent.
#[derive(Debug, Clone, Default)]
pub struct PathPotentials {
    pub gravitational: Option<Vec<f64>>,
    pub electric: Option<Vec<f64>>,
    pub vector: Option<Vec<[f64; 2]>>,
}

impl PathPotentials {
    fn grav(&self, i: usize) -> f64 {
        self.gravitational.as_ref().map(|v| v[i]).unwrap_or(0.0)
    }
    fn elec(&self, i: usize) -> f64 {
        self.electric.as_ref().map(|v| v[i]).unwrap_or(0.0)
    }
    fn a_ext(&self, i: usize) -> [f64; 2] {
        self.vector.as_ref().map(|v| v[i]).unwrap_or([0.0, 0.0])
    }
}

/// Accumulated oscillation phase along a path.
#[derive(Debug, Clone)]
pub struct ZbwPhaseRecord {
    pub times: Vec<f64>,
    /// Phase theta(t) in radians, starting from the initial phase.
    pub theta: Vec<f64>,
    /// Action S(t) = -hbar (theta(t) - phi) - hbar phi = -hbar theta(t);
    /// accumulated as the canonical integrand directly.
    pub action: Vec<f64>,
    pub initial_phase: f64,
    /// Lorentz factor series along the path.
    pub gamma: Vec<f64>,
    pub relativistic: bool,
}

/// Accumulate the oscillation phase along a sampled trajectory by
/// trapezoidal quadrature of (E dt - p' . dq)/hbar, with E and p in the
/// relativistic or the low-velocity form. The action accumulates the
/// Legendre-dual integrand (p' . dq - E dt) and starts at -hbar phi.
pub fn phase_accumulate(
    traj: &ClassicalTrajectory,
    pot: &PathPotentials,
    k: &PhysicalConstants,
    relativistic: bool,
    initial_phase: f64,
) -> Result<ZbwPhaseRecord> {
    let n = traj.len();
    if n < 2 {
        return Err(CoreError::invalid(
            "trajectory",
            "need at least two samples",
        ));
    }
    let c2 = k.light_speed * k.light_speed;
    let mut energies = Vec::with_capacity(n);
    let mut momenta = Vec::with_capacity(n);
    let mut gammas = Vec::with_capacity(n);
    for i in 0..n {
        let v = traj.velocity_at(i)?;
        let v2 = v[0] * v[0] + v[1] * v[1];
        let (e_tot, p) = if relativistic {
            if v2 >= c2 {
                return Err(CoreError::invalid(
                    "trajectory",
                    format!("superluminal sample at index {i} (|v|^2 = {v2:.3e})"),
                ));
            }
            let gamma = 1.0 / (1.0 - v2 / c2).sqrt();
            gammas.push(gamma);
            let e_tot = gamma * k.mass * c2 + gamma * pot.grav(i) + pot.elec(i);
            // Momentum carries the field-shifted inertia.
            let base = [e_tot * v[0] / c2, e_tot * v[1] / c2];
            (e_tot, base)
        } else {
            gammas.push(1.0 / (1.0 - (v2 / c2).min(0.999_999)).sqrt());
            let e_tot = k.mass * c2 + 0.5 * k.mass * v2 + pot.grav(i) + pot.elec(i);
            (e_tot, [k.mass * v[0], k.mass * v[1]])
        };
        let a = pot.a_ext(i);
        let coupling = k.charge / k.light_speed;
        momenta.push([p[0] + coupling * a[0], p[1] + coupling * a[1]]);
        energies.push(e_tot);
    }

    let mut theta = vec![initial_phase; n];
    let mut action = vec![-k.hbar * initial_phase; n];
    for i in 1..n {
        let dt = traj.times[i] - traj.times[i - 1];
        let dq = [
            traj.positions[i][0] - traj.positions[i - 1][0],
            traj.positions[i][1] - traj.positions[i - 1][1],
        ];
        let e_avg = 0.5 * (energies[i] + energies[i - 1]);
        let p_avg = [
            0.5 * (momenta[i][0] + momenta[i - 1][0]),
            0.5 * (momenta[i][1] + momenta[i - 1][1]),
        ];
        let p_dot_dq = p_avg[0] * dq[0] + p_avg[1] * dq[1];
        let d_action = p_dot_dq - e_avg * dt;
        action[i] = action[i - 1] + d_action;
        theta[i] = theta[i - 1] - d_action / k.hbar;
    }
    Ok(ZbwPhaseRecord {
        times: traj.times.clone(),
        theta,
        action,
        initial_phase,
        gamma: gammas,
        relativistic,
    })
}

/// Loop-phase evaluation along a closed trajectory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LoopPhaseReport {
    /// Total action change around the loop.
    pub delta_action: f64,
    /// Total phase change in radians.
    pub delta_theta: f64,
    /// Nearest integer n of delta_action / h.
    pub nearest_integer: i64,
    /// |delta_action - n h|.
    pub residual: f64,
}

/// Evaluate the accumulated phase around a closed loop: spatial loops at
/// fixed time, or space-time loops whose endpoints match in both position
/// and time. Endpoint mismatch beyond `tol` is an error.
pub fn loop_phase(
    traj: &ClassicalTrajectory,
    pot: &PathPotentials,
    k: &PhysicalConstants,
    relativistic: bool,
    tol: f64,
) -> Result<LoopPhaseReport> {
    let n = traj.len();
    if n < 3 {
        return Err(CoreError::Loop("loop needs at least three samples".into()));
    }
    let dq = [
        traj.positions[n - 1][0] - traj.positions[0][0],
        traj.positions[n - 1][1] - traj.positions[0][1],
    ];
    let q_gap = (dq[0] * dq[0] + dq[1] * dq[1]).sqrt();
    let t_gap = (traj.times[n - 1] - traj.times[0]).abs();
    let fixed_time = traj.times.iter().all(|&t| (t - traj.times[0]).abs() <= tol);
    if q_gap > tol || (!fixed_time && t_gap > tol) {
        return Err(CoreError::Loop(format!(
            "endpoints do not close: |dq| = {q_gap:.3e}, |dt| = {t_gap:.3e}"
        )));
    }
    let record = phase_accumulate(traj, pot, k, relativistic, 0.0)?;
    let delta_action = record.action[n - 1] - record.action[0];
    let h = 2.0 * std::f64::consts::PI * k.hbar;
    let nearest = (delta_action / h).round();
    Ok(LoopPhaseReport {
        delta_action,
        delta_theta: record.theta[n - 1] - record.theta[0],
        nearest_integer: nearest as i64,
        residual: (delta_action - nearest * h).abs(),
    })
}

// ---- frequency shifts -----------------------------------------------------------

/// Rest-frame frequency shifts from weak external potentials, evaluated at
/// the equilibrium point in the point-like approximation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrequencyShift {
    /// Base oscillation frequency omega_c.
    pub base: f64,
    /// Gravitational shift kappa = omega_c Phi_g / c^2.
    pub gravitational: f64,
    /// Electric shift epsilon = omega_c (e / m c^2) Phi_e.
    pub electric: f64,
    /// |q| / lambda_c, recorded because the point-like treatment assumes
    /// it is large.
    pub pointlike_ratio: f64,
}

/// `phi_g` is the gravitational potential per unit mass (velocity^2 units)
/// and `phi_e` the electric potential (energy per unit charge) at the
/// equilibrium point `q_mag` away from the source.
pub fn frequency_shift(
    phi_g: f64,
    phi_e: f64,
    q_mag: f64,
    k: &PhysicalConstants,
) -> FrequencyShift {
    let c2 = k.light_speed * k.light_speed;
    let lambda_c = k.hbar / (k.mass * k.light_speed);
    FrequencyShift {
        base: k.compton_freq,
        gravitational: k.compton_freq * phi_g / c2,
        electric: k.compton_freq * (k.charge / (k.mass * c2)) * phi_e,
        pointlike_ratio: q_mag / lambda_c,
    }
}

// ---- classical Hamilton-Jacobi residuals -----------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalHjForm {
    /// -dS/dt = sqrt(m^2 c^4 + (grad S - eA/c)^2 c^2) + gamma m Phi_g + e Phi_e.
    Relativistic,
    /// -dS/dt = (grad S - eA/c)^2 / 2m + V_total (+ m c^2 when included).
    NonRelativistic { include_rest: bool },
}

#[derive(Debug, Clone)]
pub struct ClassicalHjReport {
    pub residual: ScalarField,
    pub l2: f64,
    pub linf: f64,
    /// Nodes where the low-velocity form implies |v| >= c.
    pub superluminal_nodes: Vec<usize>,
}

/// Pointwise residual of the selected classical Hamilton-Jacobi form for a
/// phase field sampled on a grid (no quantum kinetic: this is the
/// oscillating-particle model's classical statistical mechanics).
pub fn classical_hj_residual(
    s: &ScalarField,
    ds_dt: &Rate,
    pot: &crate::potentials::Potentials,
    k: &PhysicalConstants,
    form: ClassicalHjForm,
) -> Result<ClassicalHjReport> {
    numerics::ensure_same_grid(s.grid(), pot.grid(), "phase", "potentials")?;
    let grid = s.grid().clone();
    let n = grid.num_nodes();
    let grad = numerics::gradient(s, None)?;
    let coupling = k.charge / k.light_speed;
    let c2 = k.light_speed * k.light_speed;
    let mut residual = vec![0.0; n];
    let mut superluminal = Vec::new();
    for idx in 0..n {
        let mut p2 = 0.0;
        for axis in 0..grid.ndim() {
            let a = pot.vector.as_ref().map(|v| v.at(axis, idx)).unwrap_or(0.0);
            let pk = grad.at(axis, idx) - coupling * a;
            p2 += pk * pk;
        }
        let rhs = match form {
            ClassicalHjForm::Relativistic => {
                let e_free = (k.mass * k.mass * c2 * c2 + p2 * c2).sqrt();
                let gamma = e_free / (k.mass * c2);
                let grav = pot
                    .gravitational
                    .as_ref()
                    .map(|f| gamma * f.at(idx))
                    .unwrap_or(0.0);
                let elec = pot.electric.as_ref().map(|f| f.at(idx)).unwrap_or(0.0);
                let v = pot.scalar.as_ref().map(|f| f.at(idx)).unwrap_or(0.0);
                e_free + grav + elec + v
            }
            ClassicalHjForm::NonRelativistic { include_rest } => {
                if p2 / (k.mass * k.mass) >= c2 {
                    superluminal.push(idx);
                }
                let rest = if include_rest { k.mass * c2 } else { 0.0 };
                p2 / (2.0 * k.mass) + pot.total_scalar_at(idx) + rest
            }
        };
        residual[idx] = ds_dt.at(idx) + rhs;
    }
    let (l2, linf) = numerics::norms_off_mask(&residual, &grid, None);
    Ok(ClassicalHjReport {
        residual: ScalarField::new(grid, residual)?,
        l2,
        linf,
        superluminal_nodes: superluminal,
    })
}

// ---- quantized circular orbits -----------------------------------------------

/// One quantized circular orbit of the Coulomb problem.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BohrOrbit {
    pub n: u32,
    /// Orbit radius [m].
    pub radius: f64,
    /// Orbit energy [J] (negative, bound).
    pub energy: f64,
    /// Angular momentum [J s].
    pub angular_momentum: f64,
}

/// Quantized orbit n >= 1 from angular-momentum quantization plus Coulomb
/// force balance. Requires SI constants: the result is dimensional.
pub fn bohr_orbit(n: u32, k: &PhysicalConstants) -> Result<BohrOrbit> {
    if n < 1 {
        return Err(CoreError::invalid("n", "orbits are labeled from 1"));
    }
    if k.unit_system != crate::constants::UnitSystem::Si {
        return Err(CoreError::invalid(
            "constants",
            "orbit radii and energies are dimensional; use SI constants",
        ));
    }
    let four_pi_eps0 = 4.0 * std::f64::consts::PI * k.vacuum_permittivity;
    let r1 = four_pi_eps0 * k.hbar * k.hbar / (k.mass * k.charge * k.charge);
    let radius = r1 * (n * n) as f64;
    let e1 = -k.charge * k.charge / (2.0 * four_pi_eps0 * r1);
    Ok(BohrOrbit {
        n,
        radius,
        energy: e1 / ((n * n) as f64),
        angular_momentum: n as f64 * k.hbar,
    })
}

/// Orbit table rows as CSV: n, radius [m], energy [eV], L/hbar.
pub fn write_bohr_table_csv(
    orbits: &[BohrOrbit],
    k: &PhysicalConstants,
    w: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(w, "n,radius_m,energy_ev,angular_momentum_hbar")?;
    for o in orbits {
        writeln!(
            w,
            "{},{},{},{}",
            o.n,
            o.radius,
            o.energy / crate::constants::codata::EV,
            o.angular_momentum / k.hbar
        )?;
    }
    Ok(())
}

/// Sample the circular orbit `n` as a fixed-time loop: positions around
/// the circle with the tangential momentum field attached as velocities.
pub fn bohr_orbit_loop(
    n: u32,
    k: &PhysicalConstants,
    samples: usize,
) -> Result<ClassicalTrajectory> {
    let orbit = bohr_orbit(n, k)?;
    let speed = orbit.angular_momentum / (k.mass * orbit.radius);
    let mut times = Vec::with_capacity(samples + 1);
    let mut positions = Vec::with_capacity(samples + 1);
    let mut velocities = Vec::with_capacity(samples + 1);
    for s in 0..=samples {
        let alpha = crate::grid::TWO_PI * s as f64 / samples as f64;
        times.push(0.0);
        positions.push([orbit.radius * alpha.cos(), orbit.radius * alpha.sin()]);
        velocities.push([-speed * alpha.sin(), speed * alpha.cos()]);
    }
    Ok(ClassicalTrajectory {
        times,
        positions,
        velocities: Some(velocities),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{make_constants, ConstantOverrides, UnitSystem};
    use crate::grid::{BoundaryCondition, Grid};
    use crate::potentials::Potentials;

    fn natural_c(c: f64) -> PhysicalConstants {
        make_constants(
            UnitSystem::Natural,
            ConstantOverrides {
                light_speed: Some(c),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn particle_at_rest_accumulates_compton_phase() {
        let k = natural_c(7.0);
        let t_final = 2.5;
        let n = 200;
        let traj = ClassicalTrajectory {
            times: (0..=n).map(|i| t_final * i as f64 / n as f64).collect(),
            positions: vec![[1.0, 0.0]; n + 1],
            velocities: Some(vec![[0.0, 0.0]; n + 1]),
        };
        let rec = phase_accumulate(&traj, &PathPotentials::default(), &k, true, 0.0).unwrap();
        let expect = k.compton_freq * t_final;
        let got = rec.theta[n] - rec.theta[0];
        assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");
    }

    #[test]
    fn uniform_motion_matches_low_velocity_action() {
        // S = m v q - (m c^2 + m v^2/2) t - hbar phi along the path.
        let k = natural_c(20.0);
        let v = 0.8;
        let phi = 0.3;
        let t_final = 1.2;
        let n = 400;
        let times: Vec<f64> = (0..=n).map(|i| t_final * i as f64 / n as f64).collect();
        let traj = ClassicalTrajectory {
            positions: times.iter().map(|&t| [v * t, 0.0]).collect(),
            velocities: Some(vec![[v, 0.0]; n + 1]),
            times,
        };
        let rec = phase_accumulate(&traj, &PathPotentials::default(), &k, false, phi).unwrap();
        let q = v * t_final;
        let expect =
            k.mass * v * q - (k.rest_energy() + 0.5 * k.mass * v * v) * t_final - k.hbar * phi;
        assert!(
            (rec.action[n] - expect).abs() < 1e-10,
            "{} vs {expect}",
            rec.action[n]
        );
    }

    #[test]
    fn phase_equals_lagrangian_action_plus_constant() {
        // Legendre consistency along a free relativistic path:
        // S(t) - S(0) = integral of -m c^2 / gamma dt.
        let k = natural_c(5.0);
        let v = 2.0; // 0.4 c
        let t_final = 1.0;
        let n = 800;
        let times: Vec<f64> = (0..=n).map(|i| t_final * i as f64 / n as f64).collect();
        let traj = ClassicalTrajectory {
            positions: times.iter().map(|&t| [v * t, 0.0]).collect(),
            velocities: Some(vec![[v, 0.0]; n + 1]),
            times,
        };
        let rec = phase_accumulate(&traj, &PathPotentials::default(), &k, true, 0.0).unwrap();
        let gamma = 1.0 / (1.0f64 - (v * v) / (k.light_speed * k.light_speed)).sqrt();
        let lagrangian = -k.rest_energy() / gamma;
        let expect = lagrangian * t_final;
        assert!(
            (rec.action[n] - rec.action[0] - expect).abs() < 1e-9,
            "{} vs {expect}",
            rec.action[n] - rec.action[0]
        );
        assert!((rec.gamma[0] - gamma).abs() < 1e-12);
    }

    #[test]
    fn superluminal_sample_is_rejected_in_relativistic_mode() {
        let k = natural_c(1.0);
        let traj = ClassicalTrajectory {
            times: vec![0.0, 0.1, 0.2],
            positions: vec![[0.0, 0.0], [0.2, 0.0], [0.4, 0.0]],
            velocities: Some(vec![[2.0, 0.0]; 3]),
        };
        assert!(phase_accumulate(&traj, &PathPotentials::default(), &k, true, 0.0).is_err());
    }

    #[test]
    fn nonrelativistic_mode_converges_to_relativistic_at_low_speed() {
        // Richardson comparison: the disagreement shrinks by at least
        // (v/2 / v)^3 = 8 when the speed halves.
        let k = natural_c(50.0);
        let diff_at = |v: f64| -> f64 {
            let t_final = 1.0;
            let n = 500;
            let times: Vec<f64> = (0..=n).map(|i| t_final * i as f64 / n as f64).collect();
            let traj = ClassicalTrajectory {
                positions: times.iter().map(|&t| [v * t, 0.0]).collect(),
                velocities: Some(vec![[v, 0.0]; n + 1]),
                times,
            };
            let rel = phase_accumulate(&traj, &PathPotentials::default(), &k, true, 0.0).unwrap();
            let non = phase_accumulate(&traj, &PathPotentials::default(), &k, false, 0.0).unwrap();
            (rel.action[n] - non.action[n]).abs()
        };
        let coarse = diff_at(2.0);
        let fine = diff_at(1.0);
        assert!(
            coarse / fine > 7.0,
            "expected at least cubic shrinkage: {coarse} vs {fine}"
        );
    }

    #[test]
    fn constant_momentum_spatial_loop_has_zero_windings() {
        let k = natural_c(10.0);
        let p = 0.7;
        let n = 128;
        // A fixed-time square loop with a uniform momentum field.
        let mut positions = Vec::new();
        for s in 0..n {
            let t = s as f64 / n as f64;
            positions.push(match (4.0 * t) as usize {
                0 => [4.0 * t, 0.0],
                1 => [1.0, 4.0 * t - 1.0],
                2 => [3.0 - 4.0 * t, 1.0],
                _ => [0.0, 4.0 - 4.0 * t],
            });
        }
        positions.push([0.0, 0.0]);
        let m = positions.len();
        let traj = ClassicalTrajectory {
            times: vec![0.0; m],
            velocities: Some(vec![[p / k.mass, 0.0]; m]),
            positions,
        };
        let rep = loop_phase(&traj, &PathPotentials::default(), &k, false, 1e-9).unwrap();
        assert_eq!(rep.nearest_integer, 0);
        assert!(rep.delta_action.abs() < 1e-12);
    }

    #[test]
    fn bohr_orbit_loops_quantize_in_units_of_h() {
        let k = PhysicalConstants::si_electron();
        for n in [1u32, 3] {
            let traj = bohr_orbit_loop(n, &k, 4096).unwrap();
            let rep = loop_phase(&traj, &PathPotentials::default(), &k, false, 1e-12).unwrap();
            let h = 2.0 * std::f64::consts::PI * k.hbar;
            assert_eq!(rep.nearest_integer, n as i64);
            // Trapezoid on the circle converges fast; allow a small
            // quadrature residual relative to h.
            assert!(
                rep.residual / h < 1e-5,
                "n={n}: residual {h_rel}",
                h_rel = rep.residual / h
            );
        }
    }

    #[test]
    fn gravitational_and_electric_shifts_match_quoted_magnitudes() {
        // g = 10 m/s^2 at |q| = 1 m; E = 0.03 statvolt/cm at |q| = 1 cm.
        let k = PhysicalConstants::si_electron();
        let phi_g = 10.0 * 1.0;
        let e_field_si = 0.03 * 299.792458 / 1e-2;
        let phi_e = e_field_si * 0.01;
        let shift = frequency_shift(phi_g, phi_e, 1.0, &k);
        let kappa_ratio = shift.gravitational / shift.base;
        assert!(
            (kappa_ratio - 1.1126500560536184e-16).abs() < 1e-22,
            "kappa/omega {kappa_ratio}"
        );
        // Order-of-magnitude quotes: 1e-16 and 1e-5.
        assert!((kappa_ratio / 1.1e-16 - 1.0).abs() < 0.1);
        let eps_ratio = shift.electric / shift.base;
        assert!(
            (eps_ratio - 1.760037616528862e-5).abs() < 1e-11,
            "eps/omega {eps_ratio}"
        );
        assert!((1e-6..1e-4).contains(&eps_ratio));
        assert!(shift.pointlike_ratio > 1e10);
    }

    #[test]
    fn zero_potentials_shift_nothing() {
        let k = PhysicalConstants::si_electron();
        let shift = frequency_shift(0.0, 0.0, 1.0, &k);
        assert_eq!(shift.gravitational, 0.0);
        assert_eq!(shift.electric, 0.0);
    }

    #[test]
    fn plane_phase_solves_free_hamilton_jacobi() {
        let k = natural_c(10.0);
        let g = Grid::line(128, -2.0, 2.0, BoundaryCondition::Reflecting).unwrap();
        let p = 1.3;
        let s = ScalarField::from_fn(g.clone(), |x, _| p * x).unwrap();
        let e_tot = k.rest_energy() + p * p / (2.0 * k.mass);
        let pot = Potentials::free(g);
        let rep = classical_hj_residual(
            &s,
            &Rate::Uniform(-e_tot),
            &pot,
            &k,
            ClassicalHjForm::NonRelativistic { include_rest: true },
        )
        .unwrap();
        assert!(rep.linf < 1e-10, "linf {}", rep.linf);
        assert!(rep.superluminal_nodes.is_empty());
    }

    #[test]
    fn relativistic_free_phase_solves_relativistic_form() {
        let k = natural_c(3.0);
        let g = Grid::line(128, -2.0, 2.0, BoundaryCondition::Reflecting).unwrap();
        let p = 2.0;
        let s = ScalarField::from_fn(g.clone(), |x, _| p * x).unwrap();
        let c2 = k.light_speed * k.light_speed;
        let e_tot = (k.mass * k.mass * c2 * c2 + p * p * c2).sqrt();
        let pot = Potentials::free(g);
        let rep = classical_hj_residual(
            &s,
            &Rate::Uniform(-e_tot),
            &pot,
            &k,
            ClassicalHjForm::Relativistic,
        )
        .unwrap();
        assert!(rep.linf < 1e-10, "linf {}", rep.linf);
    }

    #[test]
    fn circular_orbit_phase_solves_central_form_on_the_ring() {
        // S = p_alpha alpha - E t on the orbit circle with a Coulomb-like
        // constant V(r): residual at solver precision.
        let k = natural_c(10.0);
        let radius = 2.0;
        let g = Grid::ring(256, radius).unwrap();
        let p_alpha = 3.0 * k.hbar; // angular momentum
                                    // S as a function of the angular coordinate: slope p_alpha per rad.
        let s = ScalarField::from_fn(g.clone(), |theta, _| p_alpha * theta).unwrap();
        let v0 = -0.37;
        let pot = Potentials::with_scalar_field(
            g.clone(),
            ScalarField::from_fn(g.clone(), |_, _| v0).unwrap(),
        )
        .unwrap();
        let e_tot = p_alpha * p_alpha / (2.0 * k.mass * radius * radius) + v0;
        let rep = classical_hj_residual(
            &s,
            &Rate::Uniform(-e_tot),
            &pot,
            &k,
            ClassicalHjForm::NonRelativistic {
                include_rest: false,
            },
        )
        .unwrap();
        // The seam wraps the linear phase; interior nodes are exact.
        let n = g.num_nodes();
        let mut interior_linf = 0.0_f64;
        for idx in 2..n - 2 {
            interior_linf = interior_linf.max(rep.residual.at(idx).abs());
        }
        assert!(interior_linf < 1e-10, "interior linf {interior_linf}");
    }

    #[test]
    fn bohr_table_reproduces_the_ground_state_scales() {
        let k = PhysicalConstants::si_electron();
        let o1 = bohr_orbit(1, &k).unwrap();
        // Ground-state energy -13.6 eV within 0.1%.
        let ev = o1.energy / crate::constants::codata::EV;
        assert!((ev + 13.6).abs() / 13.6 < 1e-3, "E1 = {ev} eV");
        // Radius against the independently scripted closed-form value.
        let r_oracle = 5.291772102576113e-11;
        assert!(
            (o1.radius - r_oracle).abs() / r_oracle < 1e-10,
            "r1 = {}",
            o1.radius
        );
        // Scaling laws.
        let o2 = bohr_orbit(2, &k).unwrap();
        assert!((o2.energy - o1.energy / 4.0).abs() < 1e-12 * o1.energy.abs());
        for n in 1..=10u32 {
            let on = bohr_orbit(n, &k).unwrap();
            let e_scaled = on.energy * (n * n) as f64;
            assert!(
                (e_scaled - o1.energy).abs() <= 1e-12 * o1.energy.abs(),
                "E_n n^2 drifts at n={n}"
            );
            assert!((on.angular_momentum / n as f64 - k.hbar).abs() < 1e-25);
        }
    }

    #[test]
    fn natural_units_are_rejected_for_orbits() {
        let k = PhysicalConstants::natural();
        assert!(bohr_orbit(1, &k).is_err());
    }

    #[test]
    fn bohr_csv_has_the_expected_columns() {
        let k = PhysicalConstants::si_electron();
        let orbits: Vec<BohrOrbit> = (1..=3).map(|n| bohr_orbit(n, &k).unwrap()).collect();
        let mut buf = Vec::new();
        write_bohr_table_csv(&orbits, &k, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,radius_m,energy_ev,angular_momentum_hbar"
        );
        assert_eq!(lines.count(), 3);
    }
}
