//! Physical constants and unit systems.
//!
//! Derived quantities are never stored independently: the diffusion
//! coefficient and the rest-frame oscillation frequency are recomputed from
//! `(m, hbar, c)` so the defining relations hold bit-exactly.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// CODATA-2018 values, the single provenance point for all SI numbers.
pub mod codata {
    /// Electron mass [kg].
    pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
    /// Reduced Planck constant [J s].
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Speed of light [m/s].
    pub const LIGHT_SPEED: f64 = 2.997_924_58e8;
    /// Elementary charge [C].
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    /// Vacuum permittivity [F/m].
    pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
    /// Joule per electronvolt.
    pub const EV: f64 = 1.602_176_634e-19;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitSystem {
    /// m = hbar = 1; c defaults to 1 and may be overridden.
    Natural,
    /// SI with CODATA-2018 electron values.
    Si,
}

/// Optional overrides applied on top of the unit-system defaults.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ConstantOverrides {
    pub mass: Option<f64>,
    pub hbar: Option<f64>,
    pub light_speed: Option<f64>,
    pub charge: Option<f64>,
}

/// Particle and medium constants.
///
/// `diffusion` and `compton_freq` are derived fields; constructors recompute
/// them so that `nu = hbar/2m` and `omega_c = m c^2/hbar` hold exactly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub unit_system: UnitSystem,
    /// Particle rest mass m.
    pub mass: f64,
    /// Reduced Planck constant.
    pub hbar: f64,
    /// Speed of light c.
    pub light_speed: f64,
    /// Particle charge e.
    pub charge: f64,
    /// Vacuum permittivity (SI Coulomb problems only; 1/4pi in natural units).
    pub vacuum_permittivity: f64,
    /// Diffusion coefficient nu = hbar / 2m.
    pub diffusion: f64,
    /// Rest-frame oscillation frequency omega_c = m c^2 / hbar.
    pub compton_freq: f64,
}

/// Build constants for a unit system, applying positive overrides.
///
/// Natural units default to `m = hbar = c = 1`; SI defaults to the
/// CODATA-2018 electron. Non-positive overrides are rejected with the name
/// of the offending field.
pub fn make_constants(
    unit_system: UnitSystem,
    overrides: ConstantOverrides,
) -> Result<PhysicalConstants> {
    let (mut mass, mut hbar, mut light_speed, mut charge, eps0) = match unit_system {
        UnitSystem::Natural => (1.0, 1.0, 1.0, 1.0, 1.0 / (4.0 * std::f64::consts::PI)),
        UnitSystem::Si => (
            codata::ELECTRON_MASS,
            codata::HBAR,
            codata::LIGHT_SPEED,
            codata::ELEMENTARY_CHARGE,
            codata::VACUUM_PERMITTIVITY,
        ),
    };

    let apply = |name: &'static str, slot: &mut f64, v: Option<f64>| -> Result<()> {
        if let Some(x) = v {
            if !(x.is_finite() && x > 0.0) {
                return Err(CoreError::invalid(
                    name,
                    format!("must be positive, got {x}"),
                ));
            }
            *slot = x;
        }
        Ok(())
    };
    apply("mass", &mut mass, overrides.mass)?;
    apply("hbar", &mut hbar, overrides.hbar)?;
    apply("light_speed", &mut light_speed, overrides.light_speed)?;
    apply("charge", &mut charge, overrides.charge)?;

    Ok(PhysicalConstants {
        unit_system,
        mass,
        hbar,
        light_speed,
        charge,
        vacuum_permittivity: eps0,
        diffusion: derived_diffusion(mass, hbar),
        compton_freq: derived_compton_freq(mass, hbar, light_speed),
    })
}

fn derived_diffusion(mass: f64, hbar: f64) -> f64 {
    hbar / (2.0 * mass)
}

fn derived_compton_freq(mass: f64, hbar: f64, light_speed: f64) -> f64 {
    mass * light_speed * light_speed / hbar
}

impl PhysicalConstants {
    pub fn natural() -> Self {
        make_constants(UnitSystem::Natural, ConstantOverrides::default())
            .expect("defaults are valid")
    }

    pub fn si_electron() -> Self {
        make_constants(UnitSystem::Si, ConstantOverrides::default()).expect("defaults are valid")
    }

    /// Rest energy m c^2.
    pub fn rest_energy(&self) -> f64 {
        self.mass * self.light_speed * self.light_speed
    }

    /// Recompute the derived fields from the stored primaries.
    /// Idempotent: a consistent value re-derives bit-exactly.
    pub fn rederive(&self) -> Self {
        let mut k = *self;
        k.diffusion = derived_diffusion(k.mass, k.hbar);
        k.compton_freq = derived_compton_freq(k.mass, k.hbar, k.light_speed);
        k
    }

    /// Validate the stored invariants.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("hbar", self.hbar),
            ("light_speed", self.light_speed),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CoreError::invalid(
                    name,
                    format!("must be positive, got {v}"),
                ));
            }
        }
        let r = self.rederive();
        if r.diffusion != self.diffusion || r.compton_freq != self.compton_freq {
            return Err(CoreError::invalid(
                "diffusion/compton_freq",
                "stored derived constants do not match their defining relations",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_defaults() {
        let k = make_constants(UnitSystem::Natural, ConstantOverrides::default()).unwrap();
        assert_eq!(k.mass, 1.0);
        assert_eq!(k.hbar, 1.0);
        assert_eq!(k.diffusion, 0.5);
        assert_eq!(k.compton_freq, 1.0);
    }

    #[test]
    fn si_electron_compton_frequency() {
        // The rest-frame oscillation frequency of the electron comes out at
        // the quoted 7.77e20 rad/s within 0.1%.
        let k = make_constants(UnitSystem::Si, ConstantOverrides::default()).unwrap();
        let rel = (k.compton_freq - 7.77e20).abs() / 7.77e20;
        assert!(
            rel < 1e-3,
            "omega_c = {:.5e}, rel dev {rel:.2e}",
            k.compton_freq
        );
    }

    #[test]
    fn mass_override_scales_diffusion() {
        let k = make_constants(
            UnitSystem::Natural,
            ConstantOverrides {
                mass: Some(2.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(k.diffusion, 0.25);
    }

    #[test]
    fn non_positive_override_rejected_by_name() {
        let err = make_constants(
            UnitSystem::Natural,
            ConstantOverrides {
                light_speed: Some(-3.0),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("light_speed"));
    }

    #[test]
    fn rederivation_is_idempotent() {
        let k = make_constants(UnitSystem::Si, ConstantOverrides::default()).unwrap();
        let r = k.rederive();
        assert_eq!(k.diffusion.to_bits(), r.diffusion.to_bits());
        assert_eq!(k.compton_freq.to_bits(), r.compton_freq.to_bits());
        k.validate().unwrap();
    }
}
