//! Classical oscillating-particle experiments: the quantized Coulomb orbit
//! table and the external-field frequency shifts.

use super::{ArtifactSink, Bound, Metric, Metrics};
use crate::config::ExperimentConfig;
use crate::constants::{codata, UnitSystem};
use crate::error::Result;
use crate::zbw;

/// Closed-form orbit radius evaluated by an independent script; frozen
/// here as the cross-check target for the in-crate formula path.
const ORBIT_RADIUS_ORACLE: f64 = 5.291772102576113e-11;

pub fn bohr_table(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Si)?;
    let n_max = cfg.param("n_max", 10.0) as u32;
    let orbits: Vec<zbw::BohrOrbit> = (1..=n_max)
        .map(|n| zbw::bohr_orbit(n, &k))
        .collect::<Result<_>>()?;

    sink.write("bohr_table.csv", |w| {
        zbw::write_bohr_table_csv(&orbits, &k, &mut &mut *w)
    })?;
    sink.add_plot(super::PlotSpec {
        file: "bohr_table.csv".into(),
        title: "Quantized circular-orbit ladder".into(),
        x: "n".into(),
        y: vec!["energy_ev".into(), "radius_m".into()],
    });

    let e1_ev = orbits[0].energy / codata::EV;
    let mut en_n2_spread: f64 = 0.0;
    for o in &orbits {
        let scaled = o.energy * (o.n * o.n) as f64;
        en_n2_spread = en_n2_spread.max((scaled - orbits[0].energy).abs() / orbits[0].energy.abs());
    }
    let r1_rel = (orbits[0].radius - ORBIT_RADIUS_ORACLE).abs() / ORBIT_RADIUS_ORACLE;

    // Loop-phase cross-check: the n = 1 orbit circulates exactly one h.
    let loop1 = zbw::loop_phase(
        &zbw::bohr_orbit_loop(1, &k, 4096)?,
        &zbw::PathPotentials::default(),
        &k,
        false,
        1e-12,
    )?;

    let mut m = Metrics::new();
    m.insert(
        "e1_ev".into(),
        Metric::new(
            e1_ev,
            Bound::Within {
                target: -13.6,
                rel: cfg.tolerance("e1_rel", 1e-3),
            },
        ),
    );
    m.insert(
        "en_n2_rel_spread".into(),
        Metric::new(
            en_n2_spread,
            Bound::Max {
                max: cfg.tolerance("ladder_rel", 1e-12),
            },
        ),
    );
    m.insert(
        "r1_rel_error".into(),
        Metric::new(
            r1_rel,
            Bound::Max {
                max: cfg.tolerance("radius_rel", 1e-10),
            },
        ),
    );
    m.insert(
        "orbit_loop_winding".into(),
        Metric::new(
            loop1.nearest_integer as f64,
            Bound::WithinAbs {
                target: 1.0,
                abs: 0.0,
            },
        ),
    );
    Ok(m)
}

pub fn frequency_shifts(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Metrics> {
    let k = cfg.constants.build(UnitSystem::Si)?;
    // Laboratory-scale inputs: g = 10 m/s^2 at |q| = 1 m, and a
    // 0.03 statvolt/cm field at |q| = 1 cm.
    let g_accel = cfg.param("g", 10.0);
    let q_grav = cfg.param("q_grav", 1.0);
    let e_field = cfg.param("e_field_v_per_m", 0.03 * 299.792458 / 1e-2);
    let q_elec = cfg.param("q_elec", 0.01);

    let shift_g = zbw::frequency_shift(g_accel * q_grav, 0.0, q_grav, &k);
    let shift_e = zbw::frequency_shift(0.0, e_field * q_elec, q_elec, &k);
    let kappa_ratio = shift_g.gravitational / shift_g.base;
    let eps_ratio = shift_e.electric / shift_e.base;

    sink.write_json(
        "frequency_shifts.json",
        &serde_json::json!({
            "omega_c": k.compton_freq,
            "kappa": shift_g.gravitational,
            "kappa_over_omega": kappa_ratio,
            "epsilon": shift_e.electric,
            "epsilon_over_omega": eps_ratio,
            "pointlike_ratio_grav": shift_g.pointlike_ratio,
            "pointlike_ratio_elec": shift_e.pointlike_ratio,
        }),
    )?;

    // The quoted gravitational ratio is 1.1e-16; the electric ratio is an
    // order-of-magnitude 1e-5 whose exact value for these inputs,
    // 1.7600e-5, comes from an independently scripted evaluation.
    let mut m = Metrics::new();
    m.insert(
        "kappa_over_omega".into(),
        Metric::new(
            kappa_ratio,
            Bound::Within {
                target: 1.1e-16,
                rel: cfg.tolerance("shift_rel", 0.1),
            },
        ),
    );
    m.insert(
        "eps_over_omega".into(),
        Metric::new(
            eps_ratio,
            Bound::Within {
                target: 1.760037616528862e-5,
                rel: cfg.tolerance("shift_rel", 0.1),
            },
        ),
    );
    m.insert(
        "eps_order_of_magnitude".into(),
        Metric::new(
            eps_ratio.log10(),
            Bound::Within {
                target: -5.0,
                rel: 0.1,
            },
        ),
    );
    m.insert(
        "pointlike_ratio_min".into(),
        Metric::new(
            shift_g.pointlike_ratio.min(shift_e.pointlike_ratio),
            Bound::Min { min: 1e6 },
        ),
    );
    Ok(m)
}
