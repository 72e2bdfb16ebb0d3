//! The central-potential dichotomy and its resolution by the circulation
//! gate.

use super::{ArtifactSink, Bound, Metric, Metrics};
use crate::config::ExperimentConfig;
use crate::constants::UnitSystem;
use crate::error::Result;
use crate::grid::Grid;
use crate::hjm::{self, GateVerdict, WindingClass};
use crate::kinematics;
use crate::potentials::ScalarSpec;

fn default_grid(cfg: &ExperimentConfig) -> Result<std::sync::Arc<Grid>> {
    match &cfg.grid {
        Some(section) => section.build(),
        None => Grid::disk_polar(256, 256, 6.0),
    }
}

pub fn wallstrom_gate(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Natural)?;
    let grid = default_grid(cfg)?;
    let omega = cfg.param("omega", 1.0);
    let spec = ScalarSpec::Harmonic { omega };
    let tol = cfg.tolerance("residual_linf", 1e-6);
    let node_floor = cfg.tolerance("node_floor", kinematics::DEFAULT_NODE_FLOOR);

    // Generic coefficient: solves the system, fails the gate.
    let a_generic = cfg.param("a", k.hbar * k.hbar / k.mass);
    let generic = hjm::wallstrom_extraneous_solution(&grid, a_generic, spec, &k, tol, node_floor)?;
    let gate_generic =
        hjm::quantization_gate(&generic.effective_phase, &[], &k, hjm::GATE_TOLERANCE_REL)?;

    // Integer coefficient: solves the system and passes the gate at n = 2.
    let a_integer = cfg.param("a_integer", 1.5 * k.hbar * k.hbar / k.mass);
    let integer = hjm::wallstrom_extraneous_solution(&grid, a_integer, spec, &k, tol, node_floor)?;
    let gate_integer =
        hjm::quantization_gate(&integer.effective_phase, &[], &k, hjm::GATE_TOLERANCE_REL)?;

    sink.write_json(
        "wallstrom_gate.json",
        &serde_json::json!({
            "generic": {
                "a": generic.a,
                "winding_value": generic.winding_value,
                "classification": generic.classification,
                "energy": generic.energy,
                "residuals": generic.residuals.to_json(),
                "base_residuals": generic.base_residuals.to_json(),
                "gate": gate_generic.to_json(),
            },
            "integer": {
                "a": integer.a,
                "winding_value": integer.winding_value,
                "energy": integer.energy,
                "residuals": integer.residuals.to_json(),
                "gate": gate_integer.to_json(),
            },
        }),
    )?;
    if sink.write_binary {
        let rho = generic.rho.clone();
        sink.write("wallstrom_density.zsmf", move |w| {
            rho.write_binary(&mut &mut *w)
        })?;
    }

    let mut m = Metrics::new();
    m.insert(
        "generic_hj_linf".into(),
        Metric::new(generic.residuals.hj_linf, Bound::Max { max: tol }),
    );
    m.insert(
        "generic_continuity_linf".into(),
        Metric::new(generic.residuals.continuity_linf, Bound::Max { max: tol }),
    );
    m.insert(
        "generic_winding_value".into(),
        Metric::new(
            generic.winding_value,
            Bound::WithinAbs {
                target: 3.0_f64.sqrt(),
                abs: 1e-12,
            },
        ),
    );
    m.insert(
        "generic_gate_rejects".into(),
        Metric::new(
            if gate_generic.verdict == GateVerdict::Reject {
                1.0
            } else {
                0.0
            },
            Bound::Min { min: 1.0 },
        ),
    );
    m.insert(
        "integer_hj_linf".into(),
        Metric::new(integer.residuals.hj_linf, Bound::Max { max: tol }),
    );
    m.insert(
        "integer_gate_accepts".into(),
        Metric::new(
            if gate_integer.verdict == GateVerdict::Accept {
                1.0
            } else {
                0.0
            },
            Bound::Min { min: 1.0 },
        ),
    );
    let n2 = gate_integer.windings().first().copied().unwrap_or_default() as f64;
    m.insert(
        "integer_winding".into(),
        Metric::new(
            n2,
            Bound::WithinAbs {
                target: 2.0,
                abs: 0.0,
            },
        ),
    );
    m.insert(
        "base_hj_linf".into(),
        Metric::new(generic.base_residuals.hj_linf, Bound::Max { max: tol }),
    );
    Ok(m)
}

pub fn central_zsm_resolution(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Natural)?;
    let grid = default_grid(cfg)?;
    let omega = cfg.param("omega", 1.0);
    let spec = ScalarSpec::Harmonic { omega };
    let tol = cfg.tolerance("residual_linf", 1e-6);
    let node_floor = cfg.tolerance("node_floor", kinematics::DEFAULT_NODE_FLOOR);

    // The quantized ladder: coefficients that make the winding integral.
    let mut ladder_ok = true;
    let mut max_hj_linf: f64 = 0.0;
    let mut ladder_rows = Vec::new();
    for target in 1..=3i64 {
        let a = ((target * target - 1) as f64) * k.hbar * k.hbar / (2.0 * k.mass);
        let sol = hjm::wallstrom_extraneous_solution(&grid, a, spec, &k, tol, node_floor)?;
        let gate = hjm::quantization_gate(&sol.effective_phase, &[], &k, hjm::GATE_TOLERANCE_REL)?;
        let winding = gate.windings().first().copied().unwrap_or_default();
        ladder_ok &= sol.classification == WindingClass::Integer(target)
            && gate.verdict == GateVerdict::Accept
            && winding == target
            && sol.residuals.pass();
        max_hj_linf = max_hj_linf.max(sol.residuals.hj_linf);
        ladder_rows.push((a, sol.winding_value, sol.energy, winding));
    }

    // Continuity of the kinetic field in the coefficient: azimuthal speed
    // at a fixed radius grows monotonically and without jumps, and the
    // non-integer members are rejected by the gate.
    let i_probe = grid.dims().0 / 3;
    let r_probe = grid.axis(0).coord(i_probe);
    let sweep_n = cfg.param("sweep_points", 9.0) as usize;
    let mut speeds = Vec::new();
    let mut rejected_non_integer = true;
    for s in 0..sweep_n {
        let a = 2.0 * s as f64 / (sweep_n - 1) as f64;
        let sol = hjm::wallstrom_extraneous_solution(&grid, a, spec, &k, tol, node_floor)?;
        let v = kinematics::current_velocity(&sol.effective_phase, None, &k)?;
        speeds.push((a, v.at(1, grid.flat(i_probe, 0))));
        if sol.classification == WindingClass::NonInteger {
            let gate =
                hjm::quantization_gate(&sol.effective_phase, &[], &k, hjm::GATE_TOLERANCE_REL)?;
            rejected_non_integer &= gate.verdict == GateVerdict::Reject;
        }
    }
    let monotone = speeds.windows(2).all(|w| w[1].1 > w[0].1);
    let max_jump = speeds
        .windows(2)
        .map(|w| (w[1].1 - w[0].1).abs())
        .fold(0.0_f64, f64::max);

    sink.write("winding_ladder.csv", |w| {
        writeln!(w, "a,winding_value,energy,gate_winding")?;
        for (a, wv, e, n) in &ladder_rows {
            writeln!(w, "{a},{wv},{e},{n}")?;
        }
        Ok(())
    })?;
    sink.write("speed_sweep.csv", |w| {
        writeln!(w, "a,azimuthal_speed_at_r{r_probe:.3}")?;
        for (a, s) in &speeds {
            writeln!(w, "{a},{s}")?;
        }
        Ok(())
    })?;
    sink.add_plot(super::PlotSpec {
        file: "speed_sweep.csv".into(),
        title: "Azimuthal speed interpolates continuously in the coefficient".into(),
        x: "a".into(),
        y: vec![format!("azimuthal_speed_at_r{r_probe:.3}")],
    });

    let mut m = Metrics::new();
    m.insert(
        "ladder_quantized".into(),
        Metric::new(if ladder_ok { 1.0 } else { 0.0 }, Bound::Min { min: 1.0 }),
    );
    m.insert(
        "max_hj_linf".into(),
        Metric::new(max_hj_linf, Bound::Max { max: tol }),
    );
    m.insert(
        "speed_monotone".into(),
        Metric::new(if monotone { 1.0 } else { 0.0 }, Bound::Min { min: 1.0 }),
    );
    m.insert(
        "non_integer_rejected".into(),
        Metric::new(
            if rejected_non_integer { 1.0 } else { 0.0 },
            Bound::Min { min: 1.0 },
        ),
    );
    // Continuity: adjacent sweep speeds differ by a bounded step (the
    // whole sweep spans about one unit of winding at this radius).
    let span = speeds.last().unwrap().1 - speeds[0].1;
    m.insert(
        "max_speed_jump_fraction".into(),
        Metric::new(max_jump / span, Bound::Max { max: 0.5 }),
    );
    Ok(m)
}
