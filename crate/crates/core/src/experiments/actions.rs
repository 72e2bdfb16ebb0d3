//! Stationarity of the ensemble-averaged action, plus the cross-check of
//! the Monte Carlo and field-quadrature action estimators.

use super::{ArtifactSink, Bound, Metric, Metrics};
use crate::config::ExperimentConfig;
use crate::constants::UnitSystem;
use crate::diffusion::{self, Direction, DriftSource, RunOptions};
use crate::error::Result;
use crate::field::{normalize_density, ScalarField, VectorField};
use crate::grid::{BoundaryCondition, Grid};
use crate::kinematics;
use crate::potentials::{Potentials, ScalarSpec};
use crate::variational::{
    self, ActionOptions, DriftFields, Perturbation, SpatialProfile, StateFrames,
};

pub fn variational_stationarity(
    cfg: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Natural)?;
    let eps_solution = [0.02, 0.04, 0.08, 0.16];
    let eps_control = [0.0025, 0.005, 0.01, 0.02];
    let opts = ActionOptions::default();

    // Plane wave on the ring.
    let ring = Grid::ring(256, 1.0)?;
    let n_ring = ring.num_nodes();
    let rho_ring = normalize_density(&ScalarField::from_fn(ring.clone(), |_, _| 1.0)?)?;
    let v_ring = VectorField::new(ring.clone(), vec![vec![1.2; n_ring]])?;
    let plane_frames = StateFrames::stationary(
        rho_ring,
        v_ring,
        VectorField::zeros(ring.clone()),
        (0.0, 2.0),
        41,
    )?;
    let plane_rep = variational::stationarity_test(
        &plane_frames,
        &Potentials::free(ring),
        &k,
        &Perturbation {
            profile: SpatialProfile::Sine { modes: 3 },
        },
        &eps_solution,
        opts,
    )?;

    // Harmonic ground state on the line.
    let line = Grid::line(2048, -8.0, 8.0, BoundaryCondition::Reflecting)?;
    let alpha = k.mass / k.hbar; // omega = 1
    let rho_h = normalize_density(&ScalarField::from_fn(line.clone(), |x, _| {
        (-alpha * x * x).exp()
    })?)?;
    let (u_h, _) = kinematics::osmotic_velocity(&rho_h, &k)?;
    let harmonic_frames = StateFrames::stationary(
        rho_h.clone(),
        VectorField::zeros(line.clone()),
        u_h,
        (0.0, 2.0),
        41,
    )?;
    let pot_h = Potentials::from_spec(line.clone(), ScalarSpec::Harmonic { omega: 1.0 }, &k)?;
    let harmonic_rep = variational::stationarity_test(
        &harmonic_frames,
        &pot_h,
        &k,
        &Perturbation {
            profile: SpatialProfile::GaussianBump {
                center: 0.7,
                width: 1.2,
            },
        },
        &eps_solution,
        opts,
    )?;

    // Translating free packet: genuine solution and the scaled-drift control.
    let wide = Grid::line(2048, -12.0, 16.0, BoundaryCondition::Reflecting)?;
    let packet_frames = variational::free_packet_frames(&wide, 3.0, 1.0, 1.0, (0.5, 1.5), 41, &k)?;
    let control_frames = variational::free_packet_frames(&wide, 3.0, 1.5, 1.0, (0.5, 1.5), 41, &k)?;
    let bump = Perturbation {
        profile: SpatialProfile::GaussianBump {
            center: 2.2,
            width: 1.2,
        },
    };
    let packet_rep = variational::stationarity_test(
        &packet_frames,
        &Potentials::free(wide.clone()),
        &k,
        &bump,
        &eps_solution,
        opts,
    )?;
    let control_rep = variational::stationarity_test(
        &control_frames,
        &Potentials::free(wide),
        &k,
        &bump,
        &eps_control,
        opts,
    )?;

    // Monte Carlo vs field quadrature on the free spreading packet.
    let mc = free_packet_action_comparison(cfg, &k)?;

    sink.write_json(
        "stationarity.json",
        &serde_json::json!({
            "plane_wave": plane_rep.to_json(&field_parts(&plane_frames, &k)?),
            "harmonic": harmonic_rep.to_json(&field_parts(&harmonic_frames, &k)?),
            "packet": packet_rep,
            "control": control_rep,
            "mc_vs_field": {
                "mc_value": mc.0,
                "mc_std_error": mc.1,
                "field_value": mc.2,
                "deviation_sigmas": mc.3,
            },
        }),
    )?;
    sink.write("variation_scaling.csv", |w| {
        writeln!(w, "epsilon,plane_wave,harmonic,packet")?;
        for i in 0..eps_solution.len() {
            writeln!(
                w,
                "{},{},{},{}",
                eps_solution[i],
                plane_rep.delta_j[i].abs(),
                harmonic_rep.delta_j[i].abs(),
                packet_rep.delta_j[i].abs()
            )?;
        }
        Ok(())
    })?;
    sink.add_plot(super::PlotSpec {
        file: "variation_scaling.csv".into(),
        title: "|Delta J| vs displacement amplitude".into(),
        x: "epsilon".into(),
        y: vec!["plane_wave".into(), "harmonic".into(), "packet".into()],
    });

    let power_floor = cfg.tolerance("solution_power", 1.9);
    let mut m = Metrics::new();
    m.insert(
        "power_plane_wave".into(),
        Metric::new(plane_rep.fit_power, Bound::Min { min: power_floor }),
    );
    m.insert(
        "power_harmonic".into(),
        Metric::new(harmonic_rep.fit_power, Bound::Min { min: power_floor }),
    );
    m.insert(
        "power_packet".into(),
        Metric::new(packet_rep.fit_power, Bound::Min { min: power_floor }),
    );
    m.insert(
        "power_control".into(),
        Metric::new(
            control_rep.fit_power,
            Bound::WithinAbs {
                target: 1.0,
                abs: cfg.tolerance("control_window", 0.2),
            },
        ),
    );
    m.insert(
        "mc_vs_field_sigmas".into(),
        Metric::new(mc.3, Bound::Max { max: 3.0 }),
    );
    Ok(m)
}

fn field_parts(
    frames: &StateFrames,
    k: &crate::constants::PhysicalConstants,
) -> Result<crate::variational::ActionParts> {
    let pot = Potentials::free(frames.grid().clone());
    Ok(variational::discrete_action_fields(frames, &pot, k, ActionOptions::default())?.parts)
}

/// Two independent action estimates for the free spreading packet: the
/// field quadrature of the closed forms, and the Monte Carlo average over
/// forward and backward ensembles driven by the closed-form drifts.
fn free_packet_action_comparison(
    cfg: &ExperimentConfig,
    k: &crate::constants::PhysicalConstants,
) -> Result<(f64, f64, f64, f64)> {
    let grid = Grid::line(1024, -10.0, 10.0, BoundaryCondition::Reflecting)?;
    let sigma0 = 1.0;
    let t_final = cfg.param("mc_t_final", 1.0);
    let steps = cfg.param("mc_steps", 500.0) as usize;
    let dt = t_final / steps as f64;
    let n_particles = cfg.run.ensemble;
    let pot = Potentials::free(grid.clone());
    let opts = ActionOptions::default();

    // Closed-form frames at the step times (v0 = 0: pure spreading).
    let frames =
        variational::free_packet_frames(&grid, 0.0, 1.0, sigma0, (0.0, t_final), steps + 1, k)?;
    let field_estimate = variational::discrete_action_fields(&frames, &pot, k, opts)?;

    // Per-step drift fields b and b*.
    let b_steps: Vec<VectorField> = (0..=steps)
        .map(|s| frames.v[s].combine(&frames.u[s], 1.0, 1.0))
        .collect::<Result<_>>()?;
    let b_star_steps: Vec<VectorField> = (0..=steps)
        .map(|s| frames.v[s].combine(&frames.u[s], 1.0, -1.0))
        .collect::<Result<_>>()?;

    // Forward ensemble from rho(0).
    let stride = (steps / 50).max(1);
    let run_opts = RunOptions {
        stride,
        ..Default::default()
    };
    let fwd_ens = diffusion::sample_ensemble(&frames.rho[0], n_particles, cfg.run.seed)?;
    let fwd = diffusion::run_sde(
        &fwd_ens,
        DriftSource::PerStep(&b_steps),
        dt,
        steps,
        k,
        Direction::Forward,
        &run_opts,
    )?;

    // Backward ensemble from rho(T), stepping into the past with b* at the
    // current time (reversed frame order).
    let bstar_rev: Vec<VectorField> = (0..=steps)
        .map(|s| b_star_steps[steps - s].clone())
        .collect();
    let mut bwd_ens = diffusion::sample_ensemble(
        frames.rho.last().unwrap(),
        n_particles,
        cfg.run.seed ^ 0x9e37,
    )?;
    bwd_ens.time = t_final;
    let bwd = diffusion::run_sde(
        &bwd_ens,
        DriftSource::PerStep(&bstar_rev),
        dt,
        steps,
        k,
        Direction::Backward,
        &run_opts,
    )?;

    let timed_b: Vec<(f64, VectorField)> = (0..=steps)
        .map(|s| (s as f64 * dt, b_steps[s].clone()))
        .collect();
    let timed_bstar: Vec<(f64, VectorField)> = (0..=steps)
        .map(|s| (s as f64 * dt, b_star_steps[s].clone()))
        .collect();
    let mc = variational::discrete_action_paths(
        &fwd,
        &bwd,
        &DriftFields::Timed(&timed_b),
        &DriftFields::Timed(&timed_bstar),
        &pot,
        k,
        opts,
    )?;
    let sigmas = (mc.value - field_estimate.value).abs() / mc.std_error.max(1e-300);
    Ok((mc.value, mc.std_error, field_estimate.value, sigmas))
}
