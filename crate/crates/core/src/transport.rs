//! Photoinhibition transport along trajectories.
//!
//! Along a trajectory the inhibited fraction obeys the time-free equation
//! `C' = (-α(I) C + β(I)) / u`. It is integrated with Heun's method using
//! coefficients frozen at the grid nodes, so every step is the affine map
//! `C_{n+1} = aₙ Cₙ + bₙ` with
//!
//! ```text
//! aₙ = 1 - Δx/2 (Aₙ + Aₙ₊₁) + Δx²/2 AₙAₙ₊₁,     A = α(I)/u
//! bₙ = Δx/2 (Bₙ + Bₙ₊₁) - Δx²/2 Aₙ₊₁Bₙ,          B = β(I)/u
//! ```
//!
//! The adjoint module transposes exactly this recursion.

use rayon::prelude::*;

use crate::error::{ModelError, Result};
use crate::hydro::{FlowField, TrajectoryBundle};
use crate::kinetics::{ArealParams, HanParams, RateSet, SECONDS_PER_DAY};
use crate::problem::Variant;

/// Slack allowed on the [0, 1] bounds of C before reporting a violation.
const BOUND_SLACK: f64 = 1e-12;

/// Stopping rule for the periodic solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 100,
        }
    }
}

/// Per-node kinetics and Heun step coefficients for one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryDynamics {
    pub rates: Vec<RateSet>,
    /// A = α/u at each node.
    pub relax: Vec<f64>,
    /// B = β/u at each node.
    pub source: Vec<f64>,
    /// aₙ, one per cell.
    pub gain: Vec<f64>,
    /// bₙ, one per cell.
    pub offset: Vec<f64>,
}

impl TrajectoryDynamics {
    pub fn new(light: &[f64], velocity: &[f64], dx: f64, han: &HanParams) -> Self {
        let rates: Vec<RateSet> = light.iter().map(|&i| han.rates(i)).collect();
        let relax: Vec<f64> = rates.iter().zip(velocity).map(|(r, u)| r.alpha / u).collect();
        let source: Vec<f64> = rates.iter().zip(velocity).map(|(r, u)| r.beta / u).collect();
        let half = 0.5 * dx;
        let half_sq = 0.5 * dx * dx;
        let cells = relax.len() - 1;
        let mut gain = Vec::with_capacity(cells);
        let mut offset = Vec::with_capacity(cells);
        for n in 0..cells {
            let (a0, a1) = (relax[n], relax[n + 1]);
            let (b0, b1) = (source[n], source[n + 1]);
            gain.push(1.0 - half * (a0 + a1) + half_sq * a0 * a1);
            offset.push(half * (b0 + b1) - half_sq * a1 * b0);
        }
        Self {
            rates,
            relax,
            source,
            gain,
            offset,
        }
    }

    pub fn cells(&self) -> usize {
        self.gain.len()
    }

    /// Single explicit Heun step from node `n`, written in predictor/corrector form.
    pub fn heun_step(&self, n: usize, c: f64, dx: f64) -> f64 {
        let f0 = -self.relax[n] * c + self.source[n];
        let predictor = c + dx * f0;
        let f1 = -self.relax[n + 1] * predictor + self.source[n + 1];
        c + 0.5 * dx * (f0 + f1)
    }

    /// C(L) for a given C(0).
    #[inline]
    pub fn end_value(&self, c0: f64) -> f64 {
        self.gain
            .iter()
            .zip(&self.offset)
            .fold(c0, |c, (a, b)| a * c + b)
    }

    /// Full profile starting from `c0`.
    pub fn march(&self, c0: f64) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.cells() + 1);
        c.push(c0);
        let mut cur = c0;
        for (a, b) in self.gain.iter().zip(&self.offset) {
            cur = a * cur + b;
            c.push(cur);
        }
        c
    }

    /// Slope of the affine lap map C(0) ↦ C(L).
    pub fn lap_slope(&self) -> f64 {
        self.gain.iter().product()
    }

    /// Equilibrium fraction at the inlet light.
    pub fn inlet_equilibrium(&self) -> f64 {
        let r = &self.rates[0];
        r.beta / r.alpha
    }
}

/// Kinetics for all trajectories of a bundle.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub dx: f64,
    pub trajectories: Vec<TrajectoryDynamics>,
}

impl Dynamics {
    pub fn new(flow: &FlowField, bundle: &TrajectoryBundle, han: &HanParams) -> Self {
        let dx = flow.grid.step();
        let trajectories = bundle
            .light
            .par_iter()
            .map(|light| TrajectoryDynamics::new(light, &flow.u, dx, han))
            .collect();
        Self { dx, trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Integrates C along trajectory `i` with Heun's method.
pub fn integrate_c(
    flow: &FlowField,
    bundle: &TrajectoryBundle,
    i: usize,
    c_init: f64,
    han: &HanParams,
) -> Result<Vec<f64>> {
    let light = bundle.light.get(i).ok_or(ModelError::DimensionMismatch {
        what: "trajectory index",
        expected: bundle.len(),
        found: i,
    })?;
    let traj = TrajectoryDynamics::new(light, &flow.u, flow.grid.step(), han);
    let c = traj.march(c_init);
    check_bounds(&c, i)?;
    Ok(c)
}

fn check_bounds(c: &[f64], trajectory: usize) -> Result<()> {
    match c
        .iter()
        .position(|v| !(*v >= -BOUND_SLACK && *v <= 1.0 + BOUND_SLACK))
    {
        Some(node) => Err(ModelError::StateOutOfBounds {
            value: c[node],
            trajectory,
            node,
        }),
        None => Ok(()),
    }
}

/// Reassignment of trajectories between laps by a mixing device.
///
/// At the start of lap `j + 1`, trajectory `i` inherits the state that
/// trajectory `permutation[i]` had at the end of lap `j`; the last lap wraps
/// around to the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddleWheel {
    pub permutation: Vec<usize>,
    pub laps: usize,
}

impl PaddleWheel {
    /// Reverses the depth ordering (an involution).
    pub fn anti_diagonal(nz: usize, laps: usize) -> Self {
        Self {
            permutation: (0..nz).rev().collect(),
            laps,
        }
    }

    pub fn identity(nz: usize, laps: usize) -> Self {
        Self {
            permutation: (0..nz).collect(),
            laps,
        }
    }

    pub fn validate(&self, nz: usize) -> Result<()> {
        if self.permutation.len() != nz {
            return Err(ModelError::DimensionMismatch {
                what: "paddle-wheel permutation",
                expected: nz,
                found: self.permutation.len(),
            });
        }
        let mut seen = vec![false; nz];
        for &p in &self.permutation {
            if p >= nz || std::mem::replace(&mut seen[p], true) {
                return Err(ModelError::InvalidParameter {
                    name: "permutation",
                    value: p as f64,
                    reason: "paddle-wheel map must be a bijection",
                });
            }
        }
        if self.laps == 0 {
            return Err(ModelError::InvalidParameter {
                name: "laps",
                value: 0.0,
                reason: "at least one lap is required",
            });
        }
        Ok(())
    }

    /// `next[i] = prev[π(i)]`.
    pub fn apply(&self, prev: &[f64]) -> Vec<f64> {
        self.permutation.iter().map(|&p| prev[p]).collect()
    }

    /// Transposed map: `next[π(i)] = prev[i]`.
    pub fn apply_transpose(&self, prev: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; prev.len()];
        for (i, &p) in self.permutation.iter().enumerate() {
            next[p] = prev[i];
        }
        next
    }
}

/// How C(0) is fixed for each trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    /// Same prescribed C(0) on every trajectory.
    Fixed(f64),
    /// C(L) = C(0) per trajectory.
    Periodic,
    /// Multi-lap cycle through a paddle wheel.
    Paddle(PaddleWheel),
}

impl Boundary {
    pub fn laps(&self) -> usize {
        match self {
            Boundary::Paddle(w) => w.laps,
            _ => 1,
        }
    }
}

/// C per lap, trajectory and node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub laps: Vec<Vec<Vec<f64>>>,
}

impl StateField {
    pub fn lap_count(&self) -> usize {
        self.laps.len()
    }

    /// C(0) per lap and trajectory.
    pub fn initial_values(&self) -> Vec<Vec<f64>> {
        self.laps
            .iter()
            .map(|lap| lap.iter().map(|c| c[0]).collect())
            .collect()
    }

    fn check_bounds(&self) -> Result<()> {
        for lap in &self.laps {
            for (i, c) in lap.iter().enumerate() {
                check_bounds(c, i)?;
            }
        }
        Ok(())
    }
}

/// Diagnostics of a fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub residual: f64,
    /// Largest measured |Φ(1) - Φ(0)| over trajectories (Lipschitz constant of the lap map).
    pub contraction: f64,
}

/// Upper bound exp(-k_r L / ‖u‖∞) on the lap-map contraction.
pub fn contraction_bound(flow: &FlowField, han: &HanParams) -> f64 {
    (-han.k_r * flow.grid.length / flow.max_velocity()).exp()
}

/// Integrates every trajectory from a prescribed C(0).
pub fn fixed_solve(dynamics: &Dynamics, c0: f64) -> Result<StateField> {
    let lap: Vec<Vec<f64>> = dynamics
        .trajectories
        .par_iter()
        .map(|t| t.march(c0))
        .collect();
    let states = StateField { laps: vec![lap] };
    if (0.0..=1.0).contains(&c0) {
        states.check_bounds()?;
    }
    Ok(states)
}

fn picard_scalar(
    traj: &TrajectoryDynamics,
    settings: &FixedPointSettings,
) -> Result<(f64, usize, f64)> {
    let mut c = traj.inlet_equilibrium();
    for iter in 1..=settings.max_iters {
        let next = traj.end_value(c);
        let residual = (next - c).abs();
        c = next;
        if residual <= settings.tol {
            return Ok((c, iter, residual));
        }
    }
    let residual = (traj.end_value(c) - c).abs();
    Err(ModelError::FixedPointDivergence {
        iters: settings.max_iters,
        residual,
        tol: settings.tol,
    })
}

/// Lap-periodic C for every trajectory, by Picard iteration on C(0) ↦ C(L).
pub fn periodic_solve(
    dynamics: &Dynamics,
    settings: &FixedPointSettings,
) -> Result<(StateField, FixedPointReport)> {
    let solved: Vec<(f64, usize, f64)> = dynamics
        .trajectories
        .par_iter()
        .map(|t| picard_scalar(t, settings))
        .collect::<Result<_>>()?;
    let lap: Vec<Vec<f64>> = dynamics
        .trajectories
        .par_iter()
        .zip(&solved)
        .map(|(t, (c0, _, _))| t.march(*c0))
        .collect();
    let report = FixedPointReport {
        iterations: solved.iter().map(|s| s.1).max().unwrap_or(0),
        residual: lap
            .iter()
            .map(|c| (c[c.len() - 1] - c[0]).abs())
            .fold(0.0, f64::max),
        contraction: dynamics
            .trajectories
            .iter()
            .map(|t| (t.end_value(1.0) - t.end_value(0.0)).abs())
            .fold(0.0, f64::max),
    };
    let states = StateField { laps: vec![lap] };
    states.check_bounds()?;
    Ok((states, report))
}

/// One full paddle cycle applied to the lap-1 inlet values.
fn paddle_cycle(dynamics: &Dynamics, wheel: &PaddleWheel, start: &[f64]) -> Vec<f64> {
    let mut c = start.to_vec();
    for _ in 0..wheel.laps {
        let ends: Vec<f64> = dynamics
            .trajectories
            .par_iter()
            .zip(&c)
            .map(|(t, c0)| t.end_value(*c0))
            .collect();
        c = wheel.apply(&ends);
    }
    c
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Multi-lap cyclic C with the paddle-wheel reassignment between laps.
pub fn paddle_periodic_solve(
    dynamics: &Dynamics,
    wheel: &PaddleWheel,
    settings: &FixedPointSettings,
) -> Result<(StateField, FixedPointReport)> {
    wheel.validate(dynamics.len())?;
    let mut start: Vec<f64> = dynamics
        .trajectories
        .iter()
        .map(TrajectoryDynamics::inlet_equilibrium)
        .collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = paddle_cycle(dynamics, wheel, &start);
        let residual = sup_distance(&next, &start);
        start = next;
        if residual <= settings.tol {
            break;
        }
        if iterations >= settings.max_iters {
            return Err(ModelError::FixedPointDivergence {
                iters: iterations,
                residual,
                tol: settings.tol,
            });
        }
    }

    let mut laps = Vec::with_capacity(wheel.laps);
    let mut c0 = start.clone();
    for _ in 0..wheel.laps {
        let lap: Vec<Vec<f64>> = dynamics
            .trajectories
            .par_iter()
            .zip(&c0)
            .map(|(t, c)| t.march(*c))
            .collect();
        let ends: Vec<f64> = lap.iter().map(|c| c[c.len() - 1]).collect();
        c0 = wheel.apply(&ends);
        laps.push(lap);
    }
    let zeros = vec![0.0; dynamics.len()];
    let ones = vec![1.0; dynamics.len()];
    let report = FixedPointReport {
        iterations,
        residual: sup_distance(&c0, &start),
        contraction: sup_distance(
            &paddle_cycle(dynamics, wheel, &ones),
            &paddle_cycle(dynamics, wheel, &zeros),
        ),
    };
    let states = StateField { laps };
    states.check_bounds()?;
    Ok((states, report))
}

/// Solves for C under any boundary condition.
pub fn solve_states(
    dynamics: &Dynamics,
    boundary: &Boundary,
    settings: &FixedPointSettings,
) -> Result<(StateField, FixedPointReport)> {
    match boundary {
        Boundary::Fixed(c0) => Ok((fixed_solve(dynamics, *c0)?, FixedPointReport::default())),
        Boundary::Periodic => periodic_solve(dynamics, settings),
        Boundary::Paddle(wheel) => paddle_periodic_solve(dynamics, wheel, settings),
    }
}

/// Value of an objective functional.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub variant: Variant,
    /// Functional being optimized, in SI units (growth rate per unit velocity).
    pub raw: f64,
    /// Reported value: lap-time-averaged growth (d⁻¹), or loading-weighted
    /// growth for the areal variant.
    pub value: f64,
    /// Space average of μ (d⁻¹), without the 1/u time weighting.
    pub space_average: f64,
    /// Per-trajectory time-averaged growth (d⁻¹), averaged over laps.
    pub per_trajectory: Vec<f64>,
}

/// `Σₙ wₙ (-γ Cₙ + ζ) / uₙ` for one trajectory and lap.
fn growth_integral(traj: &TrajectoryDynamics, c: &[f64], u: &[f64], weights: &[f64]) -> (f64, f64) {
    let mut timed = 0.0;
    let mut spatial = 0.0;
    for n in 0..c.len() {
        let r = &traj.rates[n];
        let mu = -r.gamma * c[n] + r.zeta;
        timed += weights[n] * mu / u[n];
        spatial += weights[n] * mu;
    }
    (timed, spatial)
}

/// Average net specific growth over trajectories (and laps).
///
/// `raw = (1/(L·N_z·laps)) Σ ∫ (-γC + ζ)/u dx`; the reported value divides by
/// the mean transit time per unit length `(1/L)∫ dx/u`, giving d⁻¹.
pub fn objective_mu_delta(
    flow: &FlowField,
    dynamics: &Dynamics,
    states: &StateField,
    variant: Variant,
) -> Result<ObjectiveReport> {
    let nz = dynamics.len();
    for lap in &states.laps {
        if lap.len() != nz {
            return Err(ModelError::DimensionMismatch {
                what: "state trajectories",
                expected: nz,
                found: lap.len(),
            });
        }
    }
    let grid = flow.grid;
    let weights = grid.trapezoid_weights();
    let length = grid.length;
    let laps = states.lap_count() as f64;
    let inv_u: Vec<f64> = flow.u.iter().map(|u| 1.0 / u).collect();
    let transit = grid.integrate(&inv_u) / length;

    let per_traj: Vec<(f64, f64)> = (0..nz)
        .into_par_iter()
        .map(|i| {
            states.laps.iter().fold((0.0, 0.0), |(t, s), lap| {
                let (dt, ds) = growth_integral(&dynamics.trajectories[i], &lap[i], &flow.u, &weights);
                (t + dt, s + ds)
            })
        })
        .collect();

    let timed: f64 = per_traj.iter().map(|p| p.0).sum();
    let spatial: f64 = per_traj.iter().map(|p| p.1).sum();
    let raw = timed / (length * nz as f64 * laps);
    Ok(ObjectiveReport {
        variant,
        raw,
        value: SECONDS_PER_DAY * raw / transit,
        space_average: SECONDS_PER_DAY * spatial / (length * nz as f64 * laps),
        per_trajectory: per_traj
            .iter()
            .map(|p| SECONDS_PER_DAY * p.0 / (length * laps * transit))
            .collect(),
    })
}

/// Loading-weighted objective `(α₂ - α₃a₀) · raw μ̄`.
///
/// The reported value is `86400 · Q₀ · J̃`, i.e. `(α₂ - α₃a₀)` times the
/// depth-weighted mean growth, in gC·m⁻¹·d⁻¹ per unit width.
pub fn objective_areal(
    flow: &FlowField,
    dynamics: &Dynamics,
    states: &StateField,
    areal: &ArealParams,
    a0: f64,
) -> Result<ObjectiveReport> {
    let loading = areal.areal_loading(a0);
    if loading < 0.0 {
        return Err(ModelError::NegativeBiomass { a0 });
    }
    let base = objective_mu_delta(flow, dynamics, states, Variant::Areal)?;
    let raw = loading * base.raw;
    Ok(ObjectiveReport {
        raw,
        value: SECONDS_PER_DAY * flow.discharge * raw,
        ..base
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::{height_profile, FourierShape, HydroConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flat_setup(dx: f64, nz: usize) -> (FlowField, TrajectoryBundle, HanParams) {
        let cfg = HydroConfig {
            grid: crate::hydro::Grid::from_step(100.0, dx).unwrap(),
            ..HydroConfig::default()
        };
        let flow = FlowField::from_height(vec![0.4; cfg.grid.nodes()], &cfg).unwrap();
        let eps = 100f64.ln() / 0.4;
        let bundle = TrajectoryBundle::uniform(&flow, nz, eps, 2000.0);
        (flow, bundle, HanParams::default())
    }

    fn wavy_setup(coeffs: Vec<f64>, nz: usize) -> (FlowField, TrajectoryBundle, HanParams) {
        let cfg = HydroConfig {
            grid: crate::hydro::Grid::from_step(100.0, 0.05).unwrap(),
            ..HydroConfig::default()
        };
        let h = height_profile(&FourierShape { a0: 0.4, coeffs }, &cfg.grid);
        let flow = FlowField::from_height(h, &cfg).unwrap();
        let bundle = TrajectoryBundle::uniform(&flow, nz, 100f64.ln() / 0.4, 2000.0);
        (flow, bundle, HanParams::default())
    }

    /// Exponential relaxation for constant coefficients.
    fn relaxation(c0: f64, x: f64, alpha: f64, beta: f64, u: f64) -> f64 {
        let e = (-alpha / u * x).exp();
        e * c0 + beta / alpha * (1.0 - e)
    }

    #[test]
    fn affine_step_matches_predictor_corrector() {
        let (flow, bundle, han) = wavy_setup(vec![0.04, -0.02], 3);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let t = &dynamics.trajectories[1];
        let mut c = 0.3;
        for n in 0..t.cells() {
            let heun = t.heun_step(n, c, dynamics.dx);
            let affine = t.gain[n] * c + t.offset[n];
            assert_relative_eq!(heun, affine, max_relative = 1e-13);
            c = affine;
        }
    }

    #[test]
    fn equilibrium_is_preserved_on_flat_flow() {
        let (flow, bundle, han) = flat_setup(0.01, 5);
        for i in 0..5 {
            let cstar = han.steady_state_c(bundle.light[i][0]);
            let c = integrate_c(&flow, &bundle, i, cstar, &han).unwrap();
            for v in &c {
                assert_relative_eq!(*v, cstar, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn second_order_against_closed_form() {
        let err = |dx: f64| {
            let (flow, bundle, han) = flat_setup(dx, 1);
            let light = bundle.light[0][0];
            let c = integrate_c(&flow, &bundle, 0, 0.9, &han).unwrap();
            c.iter()
                .enumerate()
                .map(|(n, v)| {
                    let exact = relaxation(0.9, flow.grid.x(n), han.alpha(light), han.beta(light), 0.1);
                    (v - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(0.2), err(0.1));
        assert!(coarse < 1e-4, "coarse error {coarse}");
        let ratio = coarse / fine;
        assert!((3.7..4.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn bad_trajectory_index() {
        let (flow, bundle, han) = flat_setup(0.5, 2);
        assert!(integrate_c(&flow, &bundle, 7, 0.1, &han).is_err());
    }

    #[test]
    fn periodic_flat_hits_equilibrium() {
        let (flow, bundle, han) = flat_setup(0.01, 50);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let (states, report) = periodic_solve(&dynamics, &FixedPointSettings::default()).unwrap();
        for (i, c) in states.laps[0].iter().enumerate() {
            let cstar = han.steady_state_c(bundle.light[i][0]);
            assert_relative_eq!(c[0], cstar, max_relative = 1e-12);
        }
        assert!(report.residual <= 1e-12);
        let bound = contraction_bound(&flow, &han);
        assert_relative_eq!(bound, (-6.8f64).exp(), max_relative = 1e-12);
        assert!(report.contraction <= bound + 1e-3);
    }

    #[test]
    fn periodic_iteration_count_from_midpoint() {
        // From C(0) = 0.5 the lap map contracts by ≤ e^{-6.8} per pass.
        let (flow, bundle, han) = flat_setup(0.01, 1);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let t = &dynamics.trajectories[0];
        let mut c = 0.5;
        let mut iters = 0;
        let mut last_gap = f64::INFINITY;
        while iters < 10 {
            let next = t.end_value(c);
            let gap = (next - c).abs();
            if last_gap.is_finite() && last_gap > 1e-10 {
                assert!(gap / last_gap <= (-6.8f64).exp() + 1e-3);
            }
            c = next;
            last_gap = gap;
            iters += 1;
            if gap <= 1e-10 {
                break;
            }
        }
        assert!(iters <= 4, "took {iters} passes");
    }

    #[test]
    fn paddle_identity_matches_periodic() {
        let (flow, bundle, han) = wavy_setup(vec![0.03, 0.01, -0.02], 6);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let settings = FixedPointSettings::default();
        let (per, _) = periodic_solve(&dynamics, &settings).unwrap();
        let wheel = PaddleWheel::identity(6, 2);
        let (pad, _) = paddle_periodic_solve(&dynamics, &wheel, &settings).unwrap();
        for lap in &pad.laps {
            for (a, b) in lap.iter().zip(&per.laps[0]) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-12);
                }
            }
        }
        let j_per = objective_mu_delta(&flow, &dynamics, &per, Variant::Periodic).unwrap();
        let j_pad = objective_mu_delta(&flow, &dynamics, &pad, Variant::Paddle).unwrap();
        assert_relative_eq!(j_per.raw, j_pad.raw, max_relative = 1e-12);
    }

    #[test]
    fn paddle_anti_diagonal_couples_laps() {
        let (flow, bundle, han) = flat_setup(0.05, 4);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let wheel = PaddleWheel::anti_diagonal(4, 2);
        let (states, report) =
            paddle_periodic_solve(&dynamics, &wheel, &FixedPointSettings::default()).unwrap();
        assert!(report.residual <= 1e-12);
        // Inlet of lap 2 is the reversed outlet of lap 1, and back.
        let end = |lap: usize, i: usize| *states.laps[lap][i].last().unwrap();
        for i in 0..4 {
            assert!((states.laps[1][i][0] - end(0, 3 - i)).abs() <= 1e-15);
            assert!((states.laps[0][i][0] - end(1, 3 - i)).abs() <= 1e-12);
        }
        // Different light at mirrored depths, so C is not at equilibrium at the inlet.
        let cstar = han.steady_state_c(bundle.light[0][0]);
        assert!((states.laps[0][0][0] - cstar).abs() > 1e-3);
        // Mirrored trajectories see different light, so C drifts along each lap.
        let c = &states.laps[0][0];
        assert!((c[0] - c[c.len() - 1]).abs() > 1e-3);
    }

    #[test]
    fn paddle_permutation_helpers() {
        let wheel = PaddleWheel::anti_diagonal(5, 2);
        let v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(wheel.apply(&wheel.apply(&v)), v);
        assert_eq!(wheel.apply_transpose(&wheel.apply(&v)), v);
        assert!(wheel.validate(5).is_ok());
        assert!(wheel.validate(4).is_err());
        let bad = PaddleWheel {
            permutation: vec![0, 0, 1],
            laps: 2,
        };
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn single_trajectory_constant_integrand() {
        let (flow, _, han) = flat_setup(0.01, 1);
        let eps = 100f64.ln() / 0.4;
        let bundle = TrajectoryBundle::uniform(&flow, 1, eps, 2000.0);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let (states, _) = periodic_solve(&dynamics, &FixedPointSettings::default()).unwrap();
        let report = objective_mu_delta(&flow, &dynamics, &states, Variant::Periodic).unwrap();
        let light = 2000.0 * 100f64.powf(-0.5);
        let expected = SECONDS_PER_DAY * han.steady_growth(light);
        assert_relative_eq!(report.value, expected, max_relative = 1e-11);
        assert_relative_eq!(report.space_average, expected, max_relative = 1e-11);
    }

    #[test]
    fn areal_objective_factorizes() {
        let (flow, bundle, han) = flat_setup(0.05, 5);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let (states, _) = periodic_solve(&dynamics, &FixedPointSettings::default()).unwrap();
        let ap = ArealParams::from_han(0.2, 10.0, 2000.0, &han).unwrap();
        let mu = objective_mu_delta(&flow, &dynamics, &states, Variant::Periodic).unwrap();
        let areal = objective_areal(&flow, &dynamics, &states, &ap, 0.4).unwrap();
        assert_relative_eq!(areal.raw, ap.areal_loading(0.4) * mu.raw, max_relative = 1e-14);
        let zero = ap.alpha2() / ap.alpha3();
        let none = objective_areal(&flow, &dynamics, &states, &ap, zero).unwrap();
        assert!(none.raw.abs() < 1e-15);
        assert!(objective_areal(&flow, &dynamics, &states, &ap, zero * 1.01).is_err());
    }

    #[test]
    fn objective_converges_at_second_order_in_dx() {
        let value = |dx: f64| {
            let cfg = HydroConfig {
                grid: crate::hydro::Grid::from_step(100.0, dx).unwrap(),
                ..HydroConfig::default()
            };
            let shape = FourierShape {
                a0: 0.4,
                coeffs: vec![0.05, -0.02],
            };
            let flow = FlowField::from_height(height_profile(&shape, &cfg.grid), &cfg).unwrap();
            let bundle = TrajectoryBundle::uniform(&flow, 4, 100f64.ln() / 0.4, 2000.0);
            let dynamics = Dynamics::new(&flow, &bundle, &HanParams::default());
            let states = fixed_solve(&dynamics, 0.9).unwrap();
            objective_mu_delta(&flow, &dynamics, &states, Variant::Multi).unwrap().raw
        };
        let (a, b, c) = (value(0.4), value(0.2), value(0.1));
        let ratio = (a - b) / (b - c);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn states_stay_in_unit_interval(
            coeffs in proptest::collection::vec(-0.08f64..0.08, 1..5),
            c0 in 0.0f64..=1.0,
        ) {
            let (flow, bundle, han) = wavy_setup(coeffs, 5);
            let dynamics = Dynamics::new(&flow, &bundle, &han);
            let fixed = fixed_solve(&dynamics, c0).unwrap();
            for c in &fixed.laps[0] {
                prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
            }
            let (per, report) = periodic_solve(&dynamics, &FixedPointSettings::default()).unwrap();
            prop_assert!(report.residual <= 1e-12);
            prop_assert!(report.contraction <= contraction_bound(&flow, &han) + 1e-3);
            for c in &per.laps[0] {
                prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn mean_of_trajectories(coeffs in proptest::collection::vec(-0.08f64..0.08, 1..4)) {
            let (flow, bundle, han) = wavy_setup(coeffs, 4);
            let dynamics = Dynamics::new(&flow, &bundle, &han);
            let states = fixed_solve(&dynamics, 0.1).unwrap();
            let r = objective_mu_delta(&flow, &dynamics, &states, Variant::Multi).unwrap();
            let mean = r.per_trajectory.iter().sum::<f64>() / 4.0;
            prop_assert!((mean - r.value).abs() <= 1e-12 * r.value.abs());
        }
    }
}
