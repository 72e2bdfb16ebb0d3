//! Spectrum and solver-quality experiments on ring and line grids.

use num_complex::Complex64;

use super::{ArtifactSink, Bound, Metric, Metrics};
use crate::config::ExperimentConfig;
use crate::constants::UnitSystem;
use crate::error::Result;
use crate::field::ComplexField;
use crate::grid::{BoundaryCondition, Grid};
use crate::hjm;
use crate::potentials::Potentials;
use crate::schrodinger::{self, EvolveOptions};

pub fn ring_spectrum(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Natural)?;
    let grid = match &cfg.grid {
        Some(section) => section.build()?,
        None => Grid::ring(512, 1.0)?,
    };
    let n_nodes = grid.num_nodes();
    let radius = grid.ring_radius();

    // Dense symmetric eigensolve of the discrete ring Hamiltonian.
    let c = k.hbar * k.hbar / (2.0 * k.mass);
    let h = grid.physical_spacing(0, 0);
    let mut dense = nalgebra::DMatrix::<f64>::zeros(n_nodes, n_nodes);
    for i in 0..n_nodes {
        dense[(i, i)] = 2.0 * c / (h * h);
        let j = (i + 1) % n_nodes;
        dense[(i, j)] = -c / (h * h);
        dense[(j, i)] = -c / (h * h);
    }
    let eig = nalgebra::SymmetricEigen::new(dense);
    let mut levels: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    levels.sort_by(f64::total_cmp);

    let e_exact = |n: i64| (n * n) as f64 * k.hbar * k.hbar / (2.0 * k.mass * radius * radius);
    let e1 = e_exact(1);
    let mut max_rel: f64 = 0.0;
    let mut rows = Vec::new();
    for n in 0..=5i64 {
        let expected = e_exact(n);
        let computed: Vec<f64> = if n == 0 {
            vec![levels[0]]
        } else {
            vec![levels[(2 * n - 1) as usize], levels[(2 * n) as usize]]
        };
        for &e in &computed {
            let rel = (e - expected).abs() / expected.abs().max(e1);
            max_rel = max_rel.max(rel);
        }
        rows.push((n, expected, computed[0]));
    }

    sink.write("ring_spectrum.csv", |w| {
        writeln!(w, "n,closed_form,discrete")?;
        for (n, exact, disc) in &rows {
            writeln!(w, "{n},{exact},{disc}")?;
        }
        Ok(())
    })?;
    sink.add_plot(super::PlotSpec {
        file: "ring_spectrum.csv".into(),
        title: "Ring spectrum: discrete vs closed form".into(),
        x: "n".into(),
        y: vec!["closed_form".into(), "discrete".into()],
    });

    // Solver residual of the analytic eigenstate, for the record.
    let res5 = schrodinger::ring_eigenstate(&grid, 5, &k)?.residual;

    let mut m = Metrics::new();
    m.insert(
        "max_rel_error".into(),
        Metric::new(
            max_rel,
            Bound::Max {
                max: cfg.tolerance("rel_error", 1e-3),
            },
        ),
    );
    m.insert("eigenstate_residual_n5".into(), Metric::report(res5));
    Ok(m)
}

pub fn superposition_singlevalue(
    cfg: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<Metrics> {
    let grid = match &cfg.grid {
        Some(section) => section.build()?,
        None => Grid::ring(256, 1.0)?,
    };
    let k1 = cfg.param("k1", 2.0);
    let k2 = cfg.param("k2", 1.0);
    let integer = hjm::ring_superposition_check(&grid, k1, k2, (1.0, 1.0))?;
    let fractional = hjm::ring_superposition_check(
        &grid,
        cfg.param("k1_frac", 1.5),
        cfg.param("k2_frac", 0.0),
        (1.0, 1.0),
    )?;
    let degenerate = hjm::ring_superposition_check(&grid, 0.7, 0.7, (1.0, 1.0))?;

    sink.write_json(
        "superposition.json",
        &serde_json::json!({
            "integer_pair": integer,
            "fractional_pair": fractional,
            "equal_modes": degenerate,
        }),
    )?;

    let mut m = Metrics::new();
    m.insert(
        "integer_mismatch".into(),
        Metric::new(integer.max_density_mismatch, Bound::Max { max: 1e-12 }),
    );
    m.insert(
        "fractional_mismatch".into(),
        Metric::new(fractional.max_density_mismatch, Bound::Min { min: 0.1 }),
    );
    m.insert(
        "equal_modes_mismatch".into(),
        Metric::new(degenerate.max_density_mismatch, Bound::Max { max: 1e-12 }),
    );
    m.insert(
        "fractional_flagged_multivalued".into(),
        Metric::new(
            if fractional.single_valued { 0.0 } else { 1.0 },
            Bound::Min { min: 1.0 },
        ),
    );
    Ok(m)
}

pub fn nonlinear_classical_gaussian(
    cfg: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Natural)?;
    let grid = match &cfg.grid {
        Some(section) => section.build()?,
        None => Grid::line(768, -9.0, 15.0, BoundaryCondition::Reflecting)?,
    };
    let sigma0 = cfg.param("sigma0", 1.0);
    let v0 = cfg.param("speed", 2.0);
    let t_final = cfg.param("t_final", 1.5);
    let steps = cfg.param("steps", 600.0) as usize;
    let dt = t_final / steps as f64;
    let psi0 = schrodinger::gaussian_packet(&grid, sigma0, 0.0, k.mass * v0, &k)?;
    let pot = Potentials::free(grid.clone());
    let opts = EvolveOptions {
        record_stride: sink.stride,
        ..Default::default()
    };
    let nonlinear = schrodinger::evolve_nonlinear_classical(&psi0, &pot, dt, steps, &k, opts)?;
    let linear = schrodinger::evolve_linear(&psi0, &pot, dt, steps, &k, opts)?;

    let (mean_n, var_n) = schrodinger::density_moments(nonlinear.final_state());
    let (_, var_l) = schrodinger::density_moments(linear.final_state());
    let width_drift = (var_n.sqrt() - sigma0).abs() / sigma0;
    let linear_spread = var_l.sqrt() / sigma0;

    sink.write("packet_profiles.csv", |w| {
        writeln!(w, "x,initial,nonlinear_final,linear_final")?;
        let rho0 = psi0.density();
        let rn = nonlinear.final_state().density();
        let rl = linear.final_state().density();
        for idx in 0..grid.num_nodes() {
            let (x, _) = grid.coords(idx);
            writeln!(w, "{x},{},{},{}", rho0.at(idx), rn.at(idx), rl.at(idx))?;
        }
        Ok(())
    })?;
    sink.add_plot(super::PlotSpec {
        file: "packet_profiles.csv".into(),
        title: "Translating packet: fixed profile vs dispersion".into(),
        x: "x".into(),
        y: vec![
            "initial".into(),
            "nonlinear_final".into(),
            "linear_final".into(),
        ],
    });
    if sink.write_binary {
        sink.write("nonlinear_frames.zsmf", |w| {
            nonlinear.write_frames_binary(&mut &mut *w)
        })?;
    }

    let mut m = Metrics::new();
    m.insert(
        "width_drift".into(),
        Metric::new(
            width_drift,
            Bound::Max {
                max: cfg.tolerance("width_drift", 0.01),
            },
        ),
    );
    m.insert(
        "linear_spread_ratio".into(),
        Metric::new(linear_spread, Bound::Min { min: 1.2 }),
    );
    m.insert(
        "center_error".into(),
        Metric::new((mean_n - v0 * t_final).abs(), Bound::Max { max: 0.05 }),
    );
    Ok(m)
}

pub fn unitarity_reversibility(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Natural)?;

    // Norm drift over 1e3 steps on a structured ring state.
    let ring = Grid::ring(128, 1.0)?;
    let psi0 = ComplexField::from_fn(ring.clone(), |t, _| {
        Complex64::from_polar((1.0 + 0.4 * t.cos()).sqrt(), t.sin())
    })?
    .normalized()?;
    let pot_ring = Potentials::free(ring);
    let steps = cfg.param("steps", 1000.0) as usize;
    let opts = EvolveOptions {
        record_stride: steps,
        ..Default::default()
    };
    let ev = schrodinger::evolve_linear(&psi0, &pot_ring, 2e-3, steps, &k, opts)?;
    let norm_drift = ev
        .norms
        .iter()
        .fold(0.0_f64, |acc, &n| acc.max((n - 1.0).abs()));

    // Forward-then-backward round trip in a harmonic well.
    let line = Grid::line(256, -10.0, 10.0, BoundaryCondition::Reflecting)?;
    let packet = schrodinger::gaussian_packet(&line, 0.8, -1.0, 1.5, &k)?;
    let pot_line = Potentials::from_spec(
        line.clone(),
        crate::potentials::ScalarSpec::Harmonic { omega: 0.7 },
        &k,
    )?;
    let fwd = schrodinger::evolve_linear(&packet, &pot_line, 1e-3, 300, &k, opts)?;
    let back = schrodinger::evolve_linear(fwd.final_state(), &pot_line, -1e-3, 300, &k, opts)?;
    let mut roundtrip: f64 = 0.0;
    for idx in 0..line.num_nodes() {
        roundtrip = roundtrip.max((back.final_state().at(idx) - packet.at(idx)).norm());
    }

    sink.write("norm_history.csv", |w| {
        writeln!(w, "step,norm")?;
        for (i, n) in ev.norms.iter().enumerate() {
            writeln!(w, "{},{n}", i + 1)?;
        }
        Ok(())
    })?;

    let mut m = Metrics::new();
    m.insert(
        "norm_drift".into(),
        Metric::new(
            norm_drift,
            Bound::Max {
                max: cfg.tolerance("norm_drift", 1e-8),
            },
        ),
    );
    m.insert(
        "roundtrip_error".into(),
        Metric::new(
            roundtrip,
            Bound::Max {
                max: cfg.tolerance("roundtrip", 1e-6),
            },
        ),
    );
    Ok(m)
}
