//! The ensemble-averaged, time-symmetric mean action and its stationarity
//! test.
//!
//! The action is evaluated two independent ways: a space-time quadrature
//! over field frames, and a Monte Carlo average of the drift kinetic
//! energies over stored paths. The stationarity test displaces every
//! sample path by an endpoint-windowed field, q -> q + eps xi(q, t), and
//! transports the drifts by the Ito rule for a 2 nu diffusion:
//!
//!   b  -> b  + eps (dxi/dt + b  . grad xi + nu lap xi)
//!   b* -> b* + eps (dxi/dt + b* . grad xi - nu lap xi)
//!
//! The expectation stays over the base ensemble (the displaced sample is a
//! function of the base sample), so the perturbed action is an exact
//! quadratic in eps apart from the analytic potential term. For states
//! satisfying the mean dynamics the first variation cancels and |Delta J|
//! scales as eps^2; for non-solutions it scales linearly.

use serde::Serialize;
use std::sync::Arc;

use crate::constants::PhysicalConstants;
use crate::diffusion::TrajectoryBundle;
use crate::error::{CoreError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{Grid, Topology};
use crate::numerics;
use crate::potentials::Potentials;

/// Kinetic-energy convention of the mean Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KineticConvention {
    /// (1/2) m v^2 + (1/2) m u^2: both contributions positive-definite.
    TimeSymmetric,
    /// (1/2) m b.b* = (1/2) m (v^2 - u^2): the alternative ordering,
    /// exposed for comparison only.
    DriftProduct,
}

/// Decomposed action value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ActionParts {
    pub current_kinetic: f64,
    /// Signed by the convention: negative under `DriftProduct`.
    pub osmotic_kinetic: f64,
    /// Minus the potential term.
    pub potential: f64,
    /// m c^2 (t_f - t_i) when the rest-energy term is on.
    pub rest_energy: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ActionEstimate {
    pub value: f64,
    /// Statistical standard error (zero for the field quadrature).
    pub std_error: f64,
    pub parts: ActionParts,
    pub convention: KineticConvention,
}

impl ActionEstimate {
    fn from_parts(parts: ActionParts, std_error: f64, convention: KineticConvention) -> Self {
        ActionEstimate {
            value: parts.current_kinetic
                + parts.osmotic_kinetic
                + parts.potential
                + parts.rest_energy,
            std_error,
            parts,
            convention,
        }
    }
}

/// Field frames (rho, v, u) on a shared grid at increasing times.
#[derive(Debug, Clone)]
pub struct StateFrames {
    pub times: Vec<f64>,
    pub rho: Vec<ScalarField>,
    pub v: Vec<VectorField>,
    pub u: Vec<VectorField>,
}

impl StateFrames {
    pub fn grid(&self) -> &Arc<Grid> {
        self.rho[0].grid()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n < 2 || self.rho.len() != n || self.v.len() != n || self.u.len() != n {
            return Err(CoreError::invalid(
                "frames",
                "need matching times, rho, v, u with at least two slices",
            ));
        }
        for i in 0..n {
            numerics::ensure_same_grid(self.rho[i].grid(), self.grid(), "frame", "frames")?;
            numerics::ensure_same_grid(self.v[i].grid(), self.grid(), "frame", "frames")?;
        }
        Ok(())
    }

    /// Replicate a stationary state across a time interval.
    pub fn stationary(
        rho: ScalarField,
        v: VectorField,
        u: VectorField,
        t_range: (f64, f64),
        slices: usize,
    ) -> Result<StateFrames> {
        let n = slices.max(2);
        let times = (0..n)
            .map(|i| t_range.0 + (t_range.1 - t_range.0) * i as f64 / (n - 1) as f64)
            .collect();
        let frames = StateFrames {
            times,
            rho: vec![rho; n],
            v: vec![v; n],
            u: vec![u; n],
        };
        frames.validate()?;
        Ok(frames)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ActionOptions {
    pub include_rest_energy: bool,
    pub convention: KineticConvention,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions {
            include_rest_energy: false,
            convention: KineticConvention::TimeSymmetric,
        }
    }
}

/// Field-quadrature form of the action: time-trapezoid of
/// integral rho ((1/2) m v^2 +- (1/2) m u^2 - V) (+ m c^2 per unit time).
pub fn discrete_action_fields(
    frames: &StateFrames,
    pot: &Potentials,
    k: &PhysicalConstants,
    opts: ActionOptions,
) -> Result<ActionEstimate> {
    frames.validate()?;
    numerics::ensure_same_grid(frames.grid(), pot.grid(), "frames", "potentials")?;
    let grid = frames.grid().clone();
    let n = grid.num_nodes();
    let slices = frames.times.len();
    let mut kin_v = vec![0.0; slices];
    let mut kin_u = vec![0.0; slices];
    let mut pot_term = vec![0.0; slices];
    let mut mass = vec![0.0; slices];
    for s in 0..slices {
        for idx in 0..n {
            let w = grid.weight(idx) * frames.rho[s].at(idx);
            kin_v[s] += w * 0.5 * k.mass * frames.v[s].magnitude_sq(idx);
            kin_u[s] += w * 0.5 * k.mass * frames.u[s].magnitude_sq(idx);
            pot_term[s] += w * pot.total_scalar_at(idx);
            mass[s] += w;
        }
    }
    let trapezoid = |series: &[f64]| -> f64 {
        let mut total = 0.0;
        for s in 1..slices {
            total += 0.5 * (series[s] + series[s - 1]) * (frames.times[s] - frames.times[s - 1]);
        }
        total
    };
    let u_sign = match opts.convention {
        KineticConvention::TimeSymmetric => 1.0,
        KineticConvention::DriftProduct => -1.0,
    };
    let rest = if opts.include_rest_energy {
        k.rest_energy() * trapezoid(&mass)
    } else {
        0.0
    };
    let parts = ActionParts {
        current_kinetic: trapezoid(&kin_v),
        osmotic_kinetic: u_sign * trapezoid(&kin_u),
        potential: -trapezoid(&pot_term),
        rest_energy: rest,
    };
    Ok(ActionEstimate::from_parts(parts, 0.0, opts.convention))
}

/// Drift fields for path evaluation: one static field, or fields tagged
/// with their times (nearest-time lookup) for non-stationary states.
pub enum DriftFields<'a> {
    Static(&'a VectorField),
    Timed(&'a [(f64, VectorField)]),
}

impl<'a> DriftFields<'a> {
    fn at_time(&self, t: f64) -> &VectorField {
        match self {
            DriftFields::Static(f) => f,
            DriftFields::Timed(frames) => {
                let mut best = &frames[0].1;
                let mut gap = f64::INFINITY;
                for (ft, f) in frames.iter() {
                    let d = (ft - t).abs();
                    if d < gap {
                        gap = d;
                        best = f;
                    }
                }
                best
            }
        }
    }
}

/// Monte Carlo form over a forward/backward bundle pair: each particle
/// contributes the time-trapezoid of (1/4) m (b^2 + b*^2) - V along its
/// path (equivalently (1/2) m (v^2 + u^2) - V with v, u evaluated from the
/// two drift fields at the particle position), and the estimate pools both
/// ensembles.
#[allow(clippy::too_many_arguments)]
pub fn discrete_action_paths(
    forward: &TrajectoryBundle,
    backward: &TrajectoryBundle,
    b_field: &DriftFields<'_>,
    b_star_field: &DriftFields<'_>,
    pot: &Potentials,
    k: &PhysicalConstants,
    opts: ActionOptions,
) -> Result<ActionEstimate> {
    let same_spacing = |a: &TrajectoryBundle| -> bool {
        a.frames
            .windows(2)
            .all(|w| ((w[1].0 - w[0].0).abs() - (a.dt * a.stride as f64)).abs() < 1e-12)
    };
    if !same_spacing(forward) || !same_spacing(backward) {
        return Err(CoreError::invalid("paths", "time grids must be uniform"));
    }
    if (forward.dt * forward.stride as f64 - backward.dt * backward.stride as f64).abs() > 1e-12
        || forward.frames.len() != backward.frames.len()
    {
        return Err(CoreError::invalid(
            "paths",
            "forward and backward bundles must share the time grid",
        ));
    }
    let mut samples: Vec<f64> = Vec::new();
    for bundle in [forward, backward] {
        let per_particle = path_integrals(bundle, b_field, b_star_field, pot, k, opts)?;
        samples.extend(per_particle);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();

    // The decomposition splits the same samples by term.
    let mut kin_v = 0.0;
    let mut kin_u = 0.0;
    let mut pot_sum = 0.0;
    for bundle in [forward, backward] {
        let (a, b, c) = path_parts(bundle, b_field, b_star_field, pot, k)?;
        kin_v += a;
        kin_u += b;
        pot_sum += c;
    }
    let duration = {
        let f = &forward.frames;
        (f.last().unwrap().0 - f[0].0).abs()
    };
    let u_sign = match opts.convention {
        KineticConvention::TimeSymmetric => 1.0,
        KineticConvention::DriftProduct => -1.0,
    };
    let parts = ActionParts {
        current_kinetic: kin_v / n,
        osmotic_kinetic: u_sign * kin_u / n,
        potential: -pot_sum / n,
        rest_energy: if opts.include_rest_energy {
            k.rest_energy() * duration
        } else {
            0.0
        },
    };
    let mut est = ActionEstimate::from_parts(parts, std_error, opts.convention);
    if opts.convention == KineticConvention::DriftProduct {
        // Value recomputed from the signed parts; the raw sample mean used
        // the time-symmetric integrand.
        est.std_error = std_error;
    } else {
        debug_assert!(
            (est.value - (mean + parts.rest_energy)).abs() < 1e-9 * (1.0 + est.value.abs())
        );
    }
    Ok(est)
}

fn potential_at(pot: &Potentials, k: &PhysicalConstants, pos: [f64; 2]) -> f64 {
    match pot.eval_analytic(k, pos) {
        Some(v) => v,
        None => pot
            .scalar
            .as_ref()
            .map(|f| f.interpolate(pos))
            .unwrap_or(0.0),
    }
}

fn path_integrals(
    bundle: &TrajectoryBundle,
    b_field: &DriftFields<'_>,
    b_star_field: &DriftFields<'_>,
    pot: &Potentials,
    k: &PhysicalConstants,
    _opts: ActionOptions,
) -> Result<Vec<f64>> {
    let n_frames = bundle.frames.len();
    let n_particles = bundle.frames[0].1.len();
    let mut series = vec![0.0; n_particles];
    let mut prev: Option<Vec<f64>> = None;
    for f in 0..n_frames {
        let (t, positions, alive) = &bundle.frames[f];
        let b_now = b_field.at_time(*t);
        let bs_now = b_star_field.at_time(*t);
        let integrand: Vec<f64> = (0..n_particles)
            .map(|p| {
                if !alive[p] {
                    return 0.0;
                }
                let q = positions[p];
                let b = b_now.interpolate(q);
                let bs = bs_now.interpolate(q);
                let b2 = b[0] * b[0] + b[1] * b[1];
                let bs2 = bs[0] * bs[0] + bs[1] * bs[1];
                0.25 * k.mass * (b2 + bs2) - potential_at(pot, k, q)
            })
            .collect();
        if let Some(prev_vals) = prev {
            let dt = (bundle.frames[f].0 - bundle.frames[f - 1].0).abs();
            for p in 0..n_particles {
                series[p] += 0.5 * (integrand[p] + prev_vals[p]) * dt;
            }
        }
        prev = Some(integrand);
    }
    Ok(series)
}

fn path_parts(
    bundle: &TrajectoryBundle,
    b_field: &DriftFields<'_>,
    b_star_field: &DriftFields<'_>,
    pot: &Potentials,
    k: &PhysicalConstants,
) -> Result<(f64, f64, f64)> {
    let n_frames = bundle.frames.len();
    let n_particles = bundle.frames[0].1.len();
    let mut kin_v_series = vec![0.0; n_particles];
    let mut kin_u_series = vec![0.0; n_particles];
    let mut pot_series = vec![0.0; n_particles];
    let mut prev: Option<Vec<(f64, f64, f64)>> = None;
    for f in 0..n_frames {
        let (t, positions, alive) = &bundle.frames[f];
        let b_now = b_field.at_time(*t);
        let bs_now = b_star_field.at_time(*t);
        let vals: Vec<(f64, f64, f64)> = (0..n_particles)
            .map(|p| {
                if !alive[p] {
                    return (0.0, 0.0, 0.0);
                }
                let q = positions[p];
                let b = b_now.interpolate(q);
                let bs = bs_now.interpolate(q);
                let v = [(b[0] + bs[0]) / 2.0, (b[1] + bs[1]) / 2.0];
                let u = [(b[0] - bs[0]) / 2.0, (b[1] - bs[1]) / 2.0];
                (
                    0.5 * k.mass * (v[0] * v[0] + v[1] * v[1]),
                    0.5 * k.mass * (u[0] * u[0] + u[1] * u[1]),
                    potential_at(pot, k, q),
                )
            })
            .collect();
        if let Some(prev_vals) = prev {
            let dt = (bundle.frames[f].0 - bundle.frames[f - 1].0).abs();
            for p in 0..n_particles {
                kin_v_series[p] += 0.5 * (vals[p].0 + prev_vals[p].0) * dt;
                kin_u_series[p] += 0.5 * (vals[p].1 + prev_vals[p].1) * dt;
                pot_series[p] += 0.5 * (vals[p].2 + prev_vals[p].2) * dt;
            }
        }
        prev = Some(vals);
    }
    Ok((
        kin_v_series.iter().sum(),
        kin_u_series.iter().sum(),
        pot_series.iter().sum(),
    ))
}

/// Closed-form frames of a free Gaussian packet translating at `v0` and
/// spreading from width `sigma0`, with the current velocity scaled by
/// `v_scale` (1.0 is the genuine solution; anything else breaks the mean
/// dynamics and serves as a stationarity control).
pub fn free_packet_frames(
    grid: &Arc<Grid>,
    v0: f64,
    v_scale: f64,
    sigma0: f64,
    t_range: (f64, f64),
    slices: usize,
    k: &PhysicalConstants,
) -> Result<StateFrames> {
    let kappa = k.hbar / (2.0 * k.mass * sigma0 * sigma0);
    let (t_i, t_f) = t_range;
    let slices = slices.max(2);
    let mut times = Vec::with_capacity(slices);
    let mut rho_frames = Vec::with_capacity(slices);
    let mut v_frames = Vec::with_capacity(slices);
    let mut u_frames = Vec::with_capacity(slices);
    for s in 0..slices {
        let t = t_i + (t_f - t_i) * s as f64 / (slices - 1) as f64;
        let tau = kappa * t;
        let sig2 = sigma0 * sigma0 * (1.0 + tau * tau);
        let x0 = v0 * t;
        let rho = crate::field::normalize_density(&ScalarField::from_fn(grid.clone(), |x, _| {
            (-(x - x0) * (x - x0) / (2.0 * sig2)).exp()
        })?)?;
        let n = grid.num_nodes();
        let mut v_vals = vec![0.0; n];
        let mut u_vals = vec![0.0; n];
        for idx in 0..n {
            let (x, _) = grid.coords(idx);
            let d = x - x0;
            v_vals[idx] = v_scale * (v0 + d * kappa * tau / (1.0 + tau * tau));
            u_vals[idx] = -k.diffusion * d / sig2;
        }
        times.push(t);
        rho_frames.push(rho);
        v_frames.push(VectorField::new(grid.clone(), vec![v_vals])?);
        u_frames.push(VectorField::new(grid.clone(), vec![u_vals])?);
    }
    let frames = StateFrames {
        times,
        rho: rho_frames,
        v: v_frames,
        u: u_frames,
    };
    frames.validate()?;
    Ok(frames)
}

// ---- stationarity test -----------------------------------------------------------

/// Spatial profile of the displacement field.
#[derive(Debug, Clone, Copy)]
pub enum SpatialProfile {
    /// g(x) = exp(-(x - center)^2 / (2 width^2)).
    GaussianBump { center: f64, width: f64 },
    /// g(x) = sin(modes * x) on periodic charts.
    Sine { modes: usize },
}

impl SpatialProfile {
    /// (g, g', g'') at the physical coordinate.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            SpatialProfile::GaussianBump { center, width } => {
                let d = x - center;
                let w2 = width * width;
                let g = (-d * d / (2.0 * w2)).exp();
                (g, -d / w2 * g, (d * d / (w2 * w2) - 1.0 / w2) * g)
            }
            SpatialProfile::Sine { modes } => {
                let m = modes as f64;
                ((m * x).sin(), m * (m * x).cos(), -m * m * (m * x).sin())
            }
        }
    }
}

/// Endpoint-windowed displacement family xi(x, t) = w(t) g(x) with
/// w = sin^4(pi (t - t_i)/T), which vanishes with three derivatives at
/// both endpoints.
#[derive(Debug, Clone, Copy)]
pub struct Perturbation {
    pub profile: SpatialProfile,
}

impl Perturbation {
    fn window(&self, t: f64, t_i: f64, t_f: f64) -> (f64, f64) {
        let tau = std::f64::consts::PI * (t - t_i) / (t_f - t_i);
        let s = tau.sin();
        let c = tau.cos();
        let w = s.powi(4);
        let dw = 4.0 * s.powi(3) * c * std::f64::consts::PI / (t_f - t_i);
        (w, dw)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstVariationReport {
    pub base_action: f64,
    pub epsilons: Vec<f64>,
    pub delta_j: Vec<f64>,
    /// Least-squares slope of log|Delta J| against log eps.
    pub fit_power: f64,
}

impl FirstVariationReport {
    pub fn to_json(&self, parts: &ActionParts) -> serde_json::Value {
        serde_json::json!({
            "action": self.base_action,
            "parts": parts,
            "fit_power": self.fit_power,
            "epsilons": self.epsilons,
            "delta_j": self.delta_j,
        })
    }
}

/// Fit the leading power of |J(eps) - J(0)|.
///
/// Sample-wise displacement with Ito drift transport (module docs); the
/// potential must be analytic so it can be evaluated at the displaced
/// points without interpolation bias.
pub fn stationarity_test(
    frames: &StateFrames,
    pot: &Potentials,
    k: &PhysicalConstants,
    perturbation: &Perturbation,
    epsilons: &[f64],
    opts: ActionOptions,
) -> Result<FirstVariationReport> {
    frames.validate()?;
    let grid = frames.grid().clone();
    if grid.ndim() != 1 {
        return Err(CoreError::Unsupported(
            "the stationarity test runs on one-dimensional grids".into(),
        ));
    }
    if pot.analytic.is_none() {
        return Err(CoreError::Unsupported(
            "the stationarity test needs an analytic potential".into(),
        ));
    }
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(CoreError::invalid("epsilons", "need positive amplitudes"));
    }
    let (t_i, t_f) = (frames.times[0], *frames.times.last().unwrap());
    // Endpoint constraint.
    let (w0, _) = perturbation.window(t_i, t_i, t_f);
    let (w1, _) = perturbation.window(t_f, t_i, t_f);
    if w0.abs() > 1e-12 || w1.abs() > 1e-12 {
        return Err(CoreError::invalid(
            "perturbation",
            "displacement must vanish at both endpoints",
        ));
    }

    let base = perturbed_action(frames, pot, k, perturbation, 0.0, opts)?;
    let mut delta = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let j = perturbed_action(frames, pot, k, perturbation, eps, opts)?;
        delta.push(j - base);
    }
    // Least-squares fit of log|delta| vs log eps.
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(&delta)
        .filter(|&(_, &d)| d.abs() > 0.0)
        .map(|(&e, &d)| (e.ln(), d.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return Err(CoreError::invalid(
            "epsilons",
            "need at least two amplitudes with nonzero response",
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(FirstVariationReport {
        base_action: base,
        epsilons: epsilons.to_vec(),
        delta_j: delta,
        fit_power: sxy / sxx,
    })
}

fn perturbed_action(
    frames: &StateFrames,
    pot: &Potentials,
    k: &PhysicalConstants,
    pert: &Perturbation,
    eps: f64,
    opts: ActionOptions,
) -> Result<f64> {
    let grid = frames.grid().clone();
    let n = grid.num_nodes();
    let slices = frames.times.len();
    let (t_i, t_f) = (frames.times[0], *frames.times.last().unwrap());
    let nu = k.diffusion;
    let metric = if grid.topology == Topology::Ring {
        grid.ring_radius()
    } else {
        1.0
    };

    let u_sign = match opts.convention {
        KineticConvention::TimeSymmetric => 1.0,
        KineticConvention::DriftProduct => -1.0,
    };
    let mut series = vec![0.0; slices];
    let mut mass_series = vec![0.0; slices];
    for s in 0..slices {
        let t = frames.times[s];
        let (w, dw) = pert.window(t, t_i, t_f);
        let rho = &frames.rho[s];
        let mut total = 0.0;
        let mut mass = 0.0;
        for idx in 0..n {
            let rho_w = grid.weight(idx) * rho.at(idx);
            if rho_w == 0.0 {
                continue;
            }
            let (x_chart, _) = grid.coords(idx);
            // Physical coordinate along the axis (arc length on rings).
            let x = x_chart * metric;
            let (g, dg, d2g) = pert.profile.eval(x);
            let v0 = frames.v[s].at(0, idx);
            let u0 = frames.u[s].at(0, idx);
            let b = v0 + u0;
            let b_star = v0 - u0;
            // Ito transport of the drifts under q -> q + eps xi.
            let db = dw * g + b * w * dg + nu * w * d2g;
            let db_star = dw * g + b_star * w * dg - nu * w * d2g;
            let b_eps = b + eps * db;
            let bs_eps = b_star + eps * db_star;
            let v_eps = 0.5 * (b_eps + bs_eps);
            let u_eps = 0.5 * (b_eps - bs_eps);
            // Displaced potential, evaluated analytically.
            let y = x + eps * w * g;
            let v_pot = pot
                .eval_analytic(k, [y, 0.0])
                .expect("analytic potential checked above");
            total += rho_w
                * (0.5 * k.mass * v_eps * v_eps + u_sign * 0.5 * k.mass * u_eps * u_eps - v_pot);
            mass += rho_w;
        }
        series[s] = total;
        mass_series[s] = mass;
    }
    let mut j = 0.0;
    let mut mass_time = 0.0;
    for s in 1..slices {
        let dt = frames.times[s] - frames.times[s - 1];
        j += 0.5 * (series[s] + series[s - 1]) * dt;
        mass_time += 0.5 * (mass_series[s] + mass_series[s - 1]) * dt;
    }
    if opts.include_rest_energy {
        j += k.rest_energy() * mass_time;
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::normalize_density;
    use crate::grid::BoundaryCondition;
    use crate::kinematics;
    use crate::potentials::ScalarSpec;

    fn natural() -> PhysicalConstants {
        PhysicalConstants::natural()
    }

    fn plane_wave_frames(grid: &Arc<Grid>, v0: f64, t_f: f64, slices: usize) -> StateFrames {
        let n = grid.num_nodes();
        let rho =
            normalize_density(&ScalarField::from_fn(grid.clone(), |_, _| 1.0).unwrap()).unwrap();
        let v = VectorField::new(grid.clone(), vec![vec![v0; n]]).unwrap();
        let u = VectorField::zeros(grid.clone());
        StateFrames::stationary(rho, v, u, (0.0, t_f), slices).unwrap()
    }

    #[test]
    fn plane_wave_action_is_kinetic_times_duration() {
        let k = natural();
        let g = Grid::ring(128, 1.0).unwrap();
        let v0 = 1.4;
        let t_f = 2.0;
        let frames = plane_wave_frames(&g, v0, t_f, 9);
        let pot = Potentials::free(g);
        let est = discrete_action_fields(&frames, &pot, &k, ActionOptions::default()).unwrap();
        let expect = 0.5 * k.mass * v0 * v0 * t_f;
        assert!(
            (est.value - expect).abs() < 1e-12,
            "{} vs {expect}",
            est.value
        );
        assert_eq!(est.parts.osmotic_kinetic, 0.0);
    }

    #[test]
    fn parts_always_sum_to_the_value() {
        let k = natural();
        let g = Grid::line(128, -6.0, 6.0, BoundaryCondition::Reflecting).unwrap();
        let rho =
            normalize_density(&ScalarField::from_fn(g.clone(), |x, _| (-x * x).exp()).unwrap())
                .unwrap();
        let (u, _) = kinematics::osmotic_velocity(&rho, &k).unwrap();
        let v = VectorField::zeros(g.clone());
        let frames = StateFrames::stationary(rho, v, u, (0.0, 1.0), 5).unwrap();
        let pot = Potentials::from_spec(g, ScalarSpec::Harmonic { omega: 1.0 }, &k).unwrap();
        for convention in [
            KineticConvention::TimeSymmetric,
            KineticConvention::DriftProduct,
        ] {
            let est = discrete_action_fields(
                &frames,
                &pot,
                &k,
                ActionOptions {
                    include_rest_energy: false,
                    convention,
                },
            )
            .unwrap();
            let sum = est.parts.current_kinetic
                + est.parts.osmotic_kinetic
                + est.parts.potential
                + est.parts.rest_energy;
            assert!((est.value - sum).abs() <= 1e-12 * (1.0 + est.value.abs()));
        }
    }

    #[test]
    fn harmonic_ground_state_action_matches_direct_quadrature_oracle() {
        // v = 0: J = T * integral rho ((1/2) m u^2 - V), computed here with
        // an independent quadrature of the closed forms.
        let k = natural();
        let g = Grid::line(512, -8.0, 8.0, BoundaryCondition::Reflecting).unwrap();
        let rho =
            normalize_density(&ScalarField::from_fn(g.clone(), |x, _| (-x * x).exp()).unwrap())
                .unwrap();
        let (u, _) = kinematics::osmotic_velocity(&rho, &k).unwrap();
        let v = VectorField::zeros(g.clone());
        let t_f = 3.0;
        let frames = StateFrames::stationary(rho, v, u, (0.0, t_f), 7).unwrap();
        let pot =
            Potentials::from_spec(g.clone(), ScalarSpec::Harmonic { omega: 1.0 }, &k).unwrap();
        let est = discrete_action_fields(&frames, &pot, &k, ActionOptions::default()).unwrap();

        // Oracle: u = -x, so (1/2)u^2 - V = (1/2)x^2 - (1/2)x^2 = 0... the
        // two terms cancel pointwise for this state; integrate the closed
        // forms independently anyway at fine resolution.
        let mut oracle = 0.0;
        let steps = 200_000;
        let (a, b) = (-8.0, 8.0);
        let h = (b - a) / steps as f64;
        let norm = 1.0 / (std::f64::consts::PI).sqrt();
        for i in 0..=steps {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let rho_x = norm * (-x * x).exp();
            oracle += w * h * rho_x * (0.5 * x * x - 0.5 * x * x);
        }
        oracle *= t_f;
        assert!(
            (est.value - oracle).abs() < 1e-6,
            "{} vs {oracle}",
            est.value
        );
    }

    #[test]
    fn rest_energy_offsets_action_by_duration_and_keeps_verdicts() {
        let k = crate::constants::make_constants(
            crate::constants::UnitSystem::Natural,
            crate::constants::ConstantOverrides {
                light_speed: Some(4.0),
                ..Default::default()
            },
        )
        .unwrap();
        let g = Grid::ring(128, 1.0).unwrap();
        let t_f = 1.5;
        let frames = plane_wave_frames(&g, 0.9, t_f, 9);
        let pot = Potentials::free(g);
        let plain = discrete_action_fields(&frames, &pot, &k, ActionOptions::default()).unwrap();
        let with_rest = discrete_action_fields(
            &frames,
            &pot,
            &k,
            ActionOptions {
                include_rest_energy: true,
                ..Default::default()
            },
        )
        .unwrap();
        let shift = with_rest.value - plain.value;
        assert!(
            (shift - k.rest_energy() * t_f).abs() < 1e-10,
            "shift {shift} vs {}",
            k.rest_energy() * t_f
        );

        // Stationarity verdict unchanged: constants drop out of variations.
        let pert = Perturbation {
            profile: SpatialProfile::Sine { modes: 2 },
        };
        let eps = [0.05, 0.1, 0.2];
        let a = stationarity_test(
            &frames,
            &Potentials::free(frames.grid().clone()),
            &k,
            &pert,
            &eps,
            ActionOptions::default(),
        )
        .unwrap();
        let b = stationarity_test(
            &frames,
            &Potentials::free(frames.grid().clone()),
            &k,
            &pert,
            &eps,
            ActionOptions {
                include_rest_energy: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((a.fit_power - b.fit_power).abs() < 1e-9);
        for (da, db) in a.delta_j.iter().zip(&b.delta_j) {
            assert!((da - db).abs() < 1e-10);
        }
    }

    #[test]
    fn plane_wave_first_variation_is_second_order() {
        let k = natural();
        let g = Grid::ring(256, 1.0).unwrap();
        let frames = plane_wave_frames(&g, 1.2, 2.0, 41);
        let pot = Potentials::free(g);
        let pert = Perturbation {
            profile: SpatialProfile::Sine { modes: 3 },
        };
        let eps = [0.02, 0.04, 0.08, 0.16];
        let rep =
            stationarity_test(&frames, &pot, &k, &pert, &eps, ActionOptions::default()).unwrap();
        assert!(
            rep.fit_power >= 1.9,
            "fitted power {} (deltas {:?})",
            rep.fit_power,
            rep.delta_j
        );
    }

    #[test]
    fn harmonic_eigenstate_first_variation_is_second_order() {
        let k = natural();
        let g = Grid::line(2048, -8.0, 8.0, BoundaryCondition::Reflecting).unwrap();
        let rho =
            normalize_density(&ScalarField::from_fn(g.clone(), |x, _| (-x * x).exp()).unwrap())
                .unwrap();
        let (u, _) = kinematics::osmotic_velocity(&rho, &k).unwrap();
        let v = VectorField::zeros(g.clone());
        let frames = StateFrames::stationary(rho, v, u, (0.0, 2.0), 41).unwrap();
        let pot = Potentials::from_spec(g, ScalarSpec::Harmonic { omega: 1.0 }, &k).unwrap();
        let pert = Perturbation {
            profile: SpatialProfile::GaussianBump {
                center: 0.4,
                width: 1.0,
            },
        };
        let eps = [0.02, 0.04, 0.08, 0.16];
        let rep =
            stationarity_test(&frames, &pot, &k, &pert, &eps, ActionOptions::default()).unwrap();
        assert!(
            rep.fit_power >= 1.9,
            "fitted power {} (deltas {:?})",
            rep.fit_power,
            rep.delta_j
        );
    }

    #[test]
    fn scaled_drift_control_shows_first_order_variation() {
        // Translating free packet with its current velocity scaled by 1.5:
        // no longer a solution, so Delta J is linear in eps.
        let k = natural();
        let g = Grid::line(2048, -12.0, 16.0, BoundaryCondition::Reflecting).unwrap();
        let frames = free_packet_frames(&g, 3.0, 1.5, 1.0, (0.5, 1.5), 41, &k).unwrap();
        let pot = Potentials::free(g);
        let pert = Perturbation {
            profile: SpatialProfile::GaussianBump {
                center: 2.2,
                width: 1.2,
            },
        };
        // Window where the linear response dominates the curvature term.
        let eps = [0.0025, 0.005, 0.01, 0.02];
        let rep =
            stationarity_test(&frames, &pot, &k, &pert, &eps, ActionOptions::default()).unwrap();
        assert!(
            (rep.fit_power - 1.0).abs() <= 0.2,
            "fitted power {} (deltas {:?})",
            rep.fit_power,
            rep.delta_j
        );
    }

    #[test]
    fn unscaled_spreading_packet_is_stationary() {
        // The same frames with the true current velocity pass at power 2.
        let k = natural();
        let g = Grid::line(2048, -12.0, 16.0, BoundaryCondition::Reflecting).unwrap();
        let frames = free_packet_frames(&g, 3.0, 1.0, 1.0, (0.5, 1.5), 41, &k).unwrap();
        let pot = Potentials::free(g);
        let pert = Perturbation {
            profile: SpatialProfile::GaussianBump {
                center: 2.2,
                width: 1.2,
            },
        };
        let eps = [0.02, 0.04, 0.08, 0.16];
        let rep =
            stationarity_test(&frames, &pot, &k, &pert, &eps, ActionOptions::default()).unwrap();
        assert!(
            rep.fit_power >= 1.9,
            "fitted power {} (deltas {:?})",
            rep.fit_power,
            rep.delta_j
        );
    }
}
