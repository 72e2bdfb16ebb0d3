//! Heavier stochastic checks: equilibrium of the osmotic drift, the
//! forward/backward mean-derivative identity for the osmotic field, and
//! the mean-acceleration balance of the extraneous central-potential pair.

use zsm_core::constants::PhysicalConstants;
use zsm_core::diffusion::{self, Direction, DriftSource, RunOptions};
use zsm_core::field::{normalize_density, ScalarField};
use zsm_core::grid::{BoundaryCondition, Grid};
use zsm_core::kinematics;
use zsm_core::potentials::{Potentials, ScalarSpec};

fn natural() -> PhysicalConstants {
    PhysicalConstants::natural()
}

#[test]
fn osmotic_drift_holds_the_density_stationary() {
    // b = u(rho) with v = 0: the ensemble's empirical density must stay at
    // rho over a long run.
    let k = natural();
    let grid = Grid::line(256, -8.0, 8.0, BoundaryCondition::Reflecting).unwrap();
    let rho =
        normalize_density(&ScalarField::from_fn(grid.clone(), |x, _| (-x * x).exp()).unwrap())
            .unwrap();
    let (u, mask) = kinematics::osmotic_velocity(&rho, &k).unwrap();
    let drift = diffusion::fill_masked_drift(&u, &mask).unwrap();

    let n = 100_000;
    let steps = 1000;
    let ens = diffusion::sample_ensemble(&rho, n, 2024).unwrap();
    let bundle = diffusion::run_sde(
        &ens,
        DriftSource::Static(&drift),
        1e-3,
        steps,
        &k,
        Direction::Forward,
        &RunOptions {
            stride: steps,
            ..Default::default()
        },
    )
    .unwrap();
    let (_, positions, alive) = bundle.frames.last().unwrap();
    let final_ens = diffusion::EnsembleState {
        time: steps as f64 * 1e-3,
        positions: positions.clone(),
        alive: alive.clone(),
        grid: grid.clone(),
        seed: 2024,
        step_index: steps as u64,
        absorbed: 0,
    };
    let estimate = diffusion::empirical_density(&final_ens, &grid, None).unwrap();
    let l1: f64 = (0..grid.num_nodes())
        .map(|i| (estimate.at(i) - rho.at(i)).abs() * grid.weight(i))
        .sum();
    println!("stationary-drift L1 after {steps} steps: {l1:.4}");
    assert!(l1 < 0.05, "density drifted: L1 = {l1}");
}

#[test]
fn half_difference_of_mean_derivatives_recovers_the_osmotic_field() {
    // (D - D*) q / 2 estimated from independent forward and backward
    // ensembles of a stationary state equals u within statistical errors.
    let k = natural();
    let grid = Grid::line(64, -6.0, 6.0, BoundaryCondition::Reflecting).unwrap();
    let rho =
        normalize_density(&ScalarField::from_fn(grid.clone(), |x, _| (-x * x).exp()).unwrap())
            .unwrap();
    let (u, mask) = kinematics::osmotic_velocity(&rho, &k).unwrap();
    let drift_fwd = diffusion::fill_masked_drift(&u, &mask).unwrap(); // b = v + u = u
    let mut b_star = u.clone();
    for v in b_star.component_mut(0) {
        *v = -*v; // b* = v - u = -u
    }
    let drift_bwd = diffusion::fill_masked_drift(&b_star, &mask).unwrap();

    let n = 50_000;
    let steps = 50;
    let dt = 5e-4;
    let opts = RunOptions::default();
    let ens_f = diffusion::sample_ensemble(&rho, n, 7).unwrap();
    let fwd = diffusion::run_sde(
        &ens_f,
        DriftSource::Static(&drift_fwd),
        dt,
        steps,
        &k,
        Direction::Forward,
        &opts,
    )
    .unwrap();
    let ens_b = diffusion::sample_ensemble(&rho, n, 8).unwrap();
    let bwd = diffusion::run_sde(
        &ens_b,
        DriftSource::Static(&drift_bwd),
        dt,
        steps,
        &k,
        Direction::Backward,
        &opts,
    )
    .unwrap();

    let d_fwd = diffusion::mean_derivative_position(&fwd, 200).unwrap();
    let d_bwd = diffusion::mean_derivative_position(&bwd, 200).unwrap();

    let mut checked = 0;
    let mut worst_ratio = 0.0_f64;
    for idx in 0..grid.num_nodes() {
        if d_fwd.mask.is_masked(idx) || d_bwd.mask.is_masked(idx) {
            continue;
        }
        let estimate = 0.5 * (d_fwd.components[0][idx] - d_bwd.components[0][idx]);
        let stderr =
            0.5 * (d_fwd.std_errors[0][idx].powi(2) + d_bwd.std_errors[0][idx].powi(2)).sqrt();
        let dev = (estimate - u.at(0, idx)).abs();
        worst_ratio = worst_ratio.max(dev / stderr.max(1e-12));
        checked += 1;
    }
    println!("osmotic recovery: {checked} bins, worst deviation {worst_ratio:.2} standard errors");
    assert!(checked > 20, "too few populated bins");
    // Order-of-2 standard errors per bin; allow for the multiplicity of
    // bins in the max statistic.
    assert!(
        worst_ratio < 4.5,
        "worst deviation {worst_ratio} standard errors"
    );
}

#[test]
fn extraneous_central_pair_balances_the_mean_acceleration() {
    // The scaled-velocity pair really solves the stationary dynamics: the
    // kinematic and force sides agree where the grid resolves the fields
    // (the velocities diverge toward the core node like 1/r, so the
    // balance is checked at r >= 0.5 and must converge under refinement).
    let k = natural();
    let residual_for = |nr: usize| -> f64 {
        let grid = Grid::disk_polar(nr, 32, 6.0).unwrap();
        let sol = zsm_core::hjm::wallstrom_extraneous_solution(
            &grid,
            k.hbar * k.hbar / k.mass,
            ScalarSpec::Harmonic { omega: 1.0 },
            &k,
            1e-6,
            kinematics::DEFAULT_NODE_FLOOR,
        )
        .unwrap();
        let pot =
            Potentials::from_spec(grid.clone(), ScalarSpec::Harmonic { omega: 1.0 }, &k).unwrap();
        let rep = diffusion::mean_acceleration(
            &sol.rho,
            &sol.effective_phase,
            &pot,
            &k,
            None,
            kinematics::DEFAULT_NODE_FLOOR,
        )
        .unwrap();
        let mut l2 = 0.0;
        for idx in 0..grid.num_nodes() {
            let (r, _) = grid.coords(idx);
            if r < 0.5 || rep.mask.is_masked(idx) {
                continue;
            }
            let mut d2 = 0.0;
            for axis in 0..2 {
                let d = rep.kinematic.at(axis, idx) - rep.force.at(axis, idx);
                d2 += d * d;
            }
            l2 += grid.weight(idx) * d2;
        }
        l2.sqrt()
    };
    let coarse = residual_for(96);
    let fine = residual_for(192);
    println!("extraneous-pair resolved-region residual L2: {coarse:.4e} -> {fine:.4e}");
    // Second-order shrinkage; the kinematic terms reach ~30 near r = 0.5,
    // so the fine-grid figure is a few percent of the field scale.
    assert!(
        fine < 0.35 * coarse,
        "no second-order convergence: {coarse} -> {fine}"
    );
    assert!(fine < 2.0, "fine-grid residual too large: {fine}");
}

#[test]
fn central_eigenstates_satisfy_the_density_phase_system() {
    // The eigenstate property: decomposing a solver eigenstate and feeding
    // it through the residual evaluator gives stationary residuals at
    // solver precision (the discrete operators cancel exactly).
    let k = natural();
    let grid = Grid::disk_polar(192, 48, 7.0).unwrap();
    let (nr, _) = grid.dims();
    let v_radial: Vec<f64> = (0..nr)
        .map(|i| {
            let r = grid.axis(0).coord(i);
            0.5 * r * r
        })
        .collect();
    for m_winding in [0i64, 1] {
        let eig =
            zsm_core::schrodinger::central_eigenstate(&grid, &v_radial, m_winding, &k, 1e-10)
                .unwrap();
        let (rho, s) =
            kinematics::polar_decompose(&eig.psi, kinematics::DEFAULT_NODE_FLOOR, &k).unwrap();
        let pot = Potentials::from_spec(grid.clone(), ScalarSpec::Harmonic { omega: 1.0 }, &k)
            .unwrap();
        let rep = zsm_core::hjm::hjm_residuals(
            &rho,
            &s,
            &pot,
            &k,
            &zsm_core::hjm::Rate::Zero,
            &zsm_core::hjm::Rate::Uniform(-eig.energy),
            zsm_core::hjm::RestEnergyConvention::Exclude,
            kinematics::DEFAULT_NODE_FLOOR,
            1e-7,
        )
        .unwrap();
        println!(
            "central m={m_winding}: energy {:.6}, hj_linf {:.2e}, continuity_linf {:.2e}",
            eig.energy, rep.hj_linf, rep.continuity_linf
        );
        assert!(rep.pass(), "m={m_winding}: {:.2e} / {:.2e}", rep.hj_linf, rep.continuity_linf);
    }
}

#[test]
fn polar_drift_diffusion_step_conserves_mass() {
    let k = natural();
    let grid = Grid::disk_polar(96, 32, 6.0).unwrap();
    let rho0 = normalize_density(
        &ScalarField::from_fn(grid.clone(), |r, _| r * r * (-r * r).exp()).unwrap(),
    )
    .unwrap();
    // A gentle inward radial drift plus rotation.
    let n = grid.num_nodes();
    let mut vr = vec![0.0; n];
    let mut vphi = vec![0.0; n];
    for idx in 0..n {
        let (r, _) = grid.coords(idx);
        vr[idx] = -0.2 * r * (-r).exp();
        vphi[idx] = 0.3 * r;
    }
    let drift = zsm_core::field::VectorField::new(grid.clone(), vec![vr, vphi]).unwrap();
    let mut rho = rho0;
    for _ in 0..20 {
        rho = diffusion::fokker_planck_step(&rho, &drift, 2e-3, &k, Direction::Forward).unwrap();
    }
    let mass = rho.integrate();
    println!("polar mass after 20 steps: {mass:.12}");
    assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    assert!(rho.values().iter().all(|&v| v.is_finite()));
}
