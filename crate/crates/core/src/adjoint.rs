//! Discrete adjoint of the Heun transport and gradient assembly.
//!
//! With `J = s Σₙ wₙ Gₙ(Cₙ)`, `G = (-γC + ζ)/u` and the forward recursion
//! `C_{n+1} = aₙCₙ + bₙ`, the multiplier is marched backwards as
//!
//! ```text
//! pₙ = aₙ p_{n+1} + (Δx/2) s (gₙ + aₙ g_{n+1}),    g = ∂G/∂C = -γ/u
//! ```
//!
//! which is the Heun-type discretization of `p' = p α/u + s γ/u`. The exact
//! sensitivity of `J` to `Cₙ` (n ≥ 1) is `λₙ = pₙ + (Δx/2) s gₙ`; the terminal
//! value `p_N` is zero for a prescribed inlet state, equals `p₀` for a
//! lap-periodic state, and is the permuted inlet multiplier of the next lap
//! for the paddle wheel.

use rayon::prelude::*;

use crate::error::{ModelError, Result};
use crate::hydro::{Extinction, FlowField, FourierBasis, FourierShape, TrajectoryBundle};
use crate::kinetics::ArealParams;
use crate::transport::{
    Boundary, Dynamics, FixedPointSettings, PaddleWheel, StateField, TrajectoryDynamics,
};

/// Multipliers per lap, trajectory and node.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointField {
    pub laps: Vec<Vec<Vec<f64>>>,
}

/// Marches the multiplier from `x = L` back to `0`.
pub fn adjoint_integrate(
    traj: &TrajectoryDynamics,
    velocity: &[f64],
    dx: f64,
    terminal: f64,
    weight: f64,
) -> Vec<f64> {
    let cells = traj.cells();
    let half = 0.5 * dx * weight;
    let g = |n: usize| -traj.rates[n].gamma / velocity[n];
    let mut p = vec![0.0; cells + 1];
    p[cells] = terminal;
    let mut g_next = g(cells);
    for n in (0..cells).rev() {
        let a = traj.gain[n];
        let g_here = g(n);
        p[n] = a * p[n + 1] + half * (g_here + a * g_next);
        g_next = g_here;
    }
    p
}

/// p(0) as a function of p(L), without storing the profile.
fn adjoint_inlet(traj: &TrajectoryDynamics, velocity: &[f64], dx: f64, terminal: f64, weight: f64) -> f64 {
    let cells = traj.cells();
    let half = 0.5 * dx * weight;
    let mut p = terminal;
    let mut g_next = -traj.rates[cells].gamma / velocity[cells];
    for n in (0..cells).rev() {
        let a = traj.gain[n];
        let g_here = -traj.rates[n].gamma / velocity[n];
        p = a * p + half * (g_here + a * g_next);
        g_next = g_here;
    }
    p
}

fn converged(step: f64, scale: f64, tol: f64) -> bool {
    step <= tol * scale.max(f64::MIN_POSITIVE)
}

/// Multipliers with p(L) = 0 on every trajectory.
pub fn adjoint_fixed_solve(dynamics: &Dynamics, flow: &FlowField, weight: f64) -> AdjointField {
    let lap = dynamics
        .trajectories
        .par_iter()
        .map(|t| adjoint_integrate(t, &flow.u, dynamics.dx, 0.0, weight))
        .collect();
    AdjointField { laps: vec![lap] }
}

/// Lap-periodic multipliers, by Picard iteration on p(L) ↦ p(0).
///
/// The stopping rule is relative to |p(0)|, since the multipliers carry the
/// objective's small weight.
pub fn adjoint_periodic_solve(
    dynamics: &Dynamics,
    flow: &FlowField,
    weight: f64,
    settings: &FixedPointSettings,
) -> Result<AdjointField> {
    let dx = dynamics.dx;
    let lap = dynamics
        .trajectories
        .par_iter()
        .map(|t| {
            let mut terminal = 0.0;
            for _ in 0..settings.max_iters {
                let next = adjoint_inlet(t, &flow.u, dx, terminal, weight);
                let step = (next - terminal).abs();
                terminal = next;
                if converged(step, next.abs(), settings.tol) {
                    return Ok(adjoint_integrate(t, &flow.u, dx, terminal, weight));
                }
            }
            let residual = (adjoint_inlet(t, &flow.u, dx, terminal, weight) - terminal).abs();
            Err(ModelError::FixedPointDivergence {
                iters: settings.max_iters,
                residual,
                tol: settings.tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AdjointField { laps: vec![lap] })
}

/// One backward paddle cycle: lap-1 inlet multipliers in, updated ones out.
fn adjoint_paddle_cycle(
    dynamics: &Dynamics,
    flow: &FlowField,
    wheel: &PaddleWheel,
    inlet_first: &[f64],
    weight: f64,
) -> Vec<f64> {
    let mut inlet_next = inlet_first.to_vec();
    for _ in 0..wheel.laps {
        let terminal = wheel.apply_transpose(&inlet_next);
        inlet_next = dynamics
            .trajectories
            .par_iter()
            .zip(&terminal)
            .map(|(t, pl)| adjoint_inlet(t, &flow.u, dynamics.dx, *pl, weight))
            .collect();
    }
    inlet_next
}

/// Multi-lap multipliers with the transposed paddle-wheel couplings
/// `p^j(L) = Pᵀ p^{j+1}(0)`, cyclic in the lap index.
pub fn adjoint_paddle_solve(
    dynamics: &Dynamics,
    flow: &FlowField,
    wheel: &PaddleWheel,
    weight: f64,
    settings: &FixedPointSettings,
) -> Result<AdjointField> {
    wheel.validate(dynamics.len())?;
    let nz = dynamics.len();
    let mut inlet = vec![0.0; nz];
    let mut iters = 0;
    loop {
        iters += 1;
        let next = adjoint_paddle_cycle(dynamics, flow, wheel, &inlet, weight);
        let step = next
            .iter()
            .zip(&inlet)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = next.iter().map(|v| v.abs()).fold(0.0, f64::max);
        inlet = next;
        if converged(step, scale, settings.tol) {
            break;
        }
        if iters >= settings.max_iters {
            return Err(ModelError::FixedPointDivergence {
                iters,
                residual: step,
                tol: settings.tol,
            });
        }
    }

    // Final backward sweep, last lap first, storing profiles.
    let mut laps = vec![Vec::new(); wheel.laps];
    let mut inlet_next = inlet;
    for j in (0..wheel.laps).rev() {
        let terminal = wheel.apply_transpose(&inlet_next);
        let lap: Vec<Vec<f64>> = dynamics
            .trajectories
            .par_iter()
            .zip(&terminal)
            .map(|(t, pl)| adjoint_integrate(t, &flow.u, dynamics.dx, *pl, weight))
            .collect();
        inlet_next = lap.iter().map(|p| p[0]).collect();
        laps[j] = lap;
    }
    Ok(AdjointField { laps })
}

/// Solves the adjoint matching a forward boundary condition.
pub fn solve_adjoint(
    dynamics: &Dynamics,
    flow: &FlowField,
    boundary: &Boundary,
    weight: f64,
    settings: &FixedPointSettings,
) -> Result<AdjointField> {
    match boundary {
        Boundary::Fixed(_) => Ok(adjoint_fixed_solve(dynamics, flow, weight)),
        Boundary::Periodic => adjoint_periodic_solve(dynamics, flow, weight, settings),
        Boundary::Paddle(wheel) => adjoint_paddle_solve(dynamics, flow, wheel, weight, settings),
    }
}

/// Derivatives of h, u and ε with respect to each design coefficient.
///
/// When the mean depth is a design variable it comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSensitivities {
    /// ∂h/∂θₖ at each node.
    pub dh: Vec<Vec<f64>>,
    /// ∂u/∂θₖ = -(Q₀/h²) ∂h/∂θₖ.
    pub du: Vec<Vec<f64>>,
    /// ∂ε/∂θₖ (non-zero only for a₀ in the areal mode).
    pub d_extinction: Vec<f64>,
    pub includes_mean_depth: bool,
}

impl ShapeSensitivities {
    pub fn new(
        flow: &FlowField,
        basis: &FourierBasis,
        shape: &FourierShape,
        extinction: &Extinction,
        includes_mean_depth: bool,
    ) -> Self {
        let q0 = flow.discharge;
        let du_dh: Vec<f64> = flow.h.iter().map(|h| -q0 / (h * h)).collect();
        let mut dh = Vec::with_capacity(shape.order() + 1);
        let mut d_extinction = Vec::with_capacity(shape.order() + 1);
        if includes_mean_depth {
            dh.push(vec![1.0; flow.nodes()]);
            d_extinction.push(extinction.mean_depth_derivative(shape.a0));
        }
        for mode in basis.modes.iter().take(shape.order()) {
            dh.push(mode.clone());
            d_extinction.push(0.0);
        }
        let du = dh
            .iter()
            .map(|d| d.iter().zip(&du_dh).map(|(a, b)| a * b).collect())
            .collect();
        Self {
            dh,
            du,
            d_extinction,
            includes_mean_depth,
        }
    }

    pub fn len(&self) -> usize {
        self.dh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dh.is_empty()
    }

    /// ∂Iᵢ/∂θₖ = -qᵢ Iᵢ (ε ∂h/∂θₖ + h ∂ε/∂θₖ).
    pub fn light(&self, flow: &FlowField, bundle: &TrajectoryBundle, coeff: usize, traj: usize) -> Vec<f64> {
        let q = bundle.fractions[traj];
        let eps = bundle.extinction;
        let de = self.d_extinction[coeff];
        bundle.light[traj]
            .iter()
            .zip(&self.dh[coeff])
            .zip(&flow.h)
            .map(|((i, dh), h)| -q * i * (eps * dh + h * de))
            .collect()
    }
}

/// The gradient split into its constituent integrals, one entry per coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTerms {
    /// ∫ s (-γ'C + ζ')/u · ∂I.
    pub objective_light: Vec<f64>,
    /// -∫ s (-γC + ζ)/u² · ∂u.
    pub objective_velocity: Vec<f64>,
    /// ∫ p (-α'C + β')/u · ∂I, in discrete-adjoint form.
    pub constraint_light: Vec<f64>,
    /// -∫ p (-αC + β)/u² · ∂u, in discrete-adjoint form.
    pub constraint_velocity: Vec<f64>,
    /// -α₃ times the unweighted objective, on the mean-depth entry only.
    pub loading: Vec<f64>,
}

impl GradientTerms {
    pub fn total(&self) -> Vec<f64> {
        (0..self.objective_light.len())
            .map(|k| {
                self.objective_light[k]
                    + self.objective_velocity[k]
                    + self.constraint_light[k]
                    + self.constraint_velocity[k]
                    + self.loading[k]
            })
            .collect()
    }
}

/// Nodal densities for one trajectory (summed over laps).
struct Densities {
    /// Light densities, already multiplied by -qᵢIᵢ.
    objective_light: Vec<f64>,
    constraint_light: Vec<f64>,
    objective_velocity: Vec<f64>,
    constraint_velocity: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn trajectory_densities(
    traj: &TrajectoryDynamics,
    light: &[f64],
    fraction: f64,
    velocity: &[f64],
    weights: &[f64],
    dx: f64,
    weight: f64,
    laps: &[(&[f64], &[f64])],
) -> Densities {
    let nodes = velocity.len();
    let cells = nodes - 1;
    let half = 0.5 * dx;
    let half_sq = 0.5 * dx * dx;
    let mut d = Densities {
        objective_light: vec![0.0; nodes],
        constraint_light: vec![0.0; nodes],
        objective_velocity: vec![0.0; nodes],
        constraint_velocity: vec![0.0; nodes],
    };
    let g = |n: usize| -traj.rates[n].gamma / velocity[n];
    for &(c, p) in laps {
        // λₙ = ∂J/∂Cₙ for n ≥ 1.
        let lambda = |n: usize| p[n] + half * weight * g(n);
        for m in 0..nodes {
            let r = &traj.rates[m];
            let u = velocity[m];
            let (mut d_relax, mut d_source) = (0.0, 0.0);
            if m < cells {
                let l = lambda(m + 1);
                let a_next = traj.relax[m + 1];
                d_relax += l * c[m] * (-half + half_sq * a_next);
                d_source += l * (half - half_sq * a_next);
            }
            if m >= 1 {
                let l = lambda(m);
                let a_prev = traj.relax[m - 1];
                let b_prev = traj.source[m - 1];
                d_relax += l * (c[m - 1] * (-half + half_sq * a_prev) - half_sq * b_prev);
                d_source += l * half;
            }
            let growth = -r.gamma * c[m] + r.zeta;
            let d_growth = -r.d_gamma * c[m] + r.d_zeta;
            let sw = weight * weights[m];
            let light_factor = -fraction * light[m];
            d.objective_light[m] += sw * d_growth / u * light_factor;
            d.objective_velocity[m] += -sw * growth / (u * u);
            d.constraint_light[m] += (d_relax * r.d_alpha + d_source * r.d_beta) / u * light_factor;
            d.constraint_velocity[m] += -(d_relax * r.alpha + d_source * r.beta) / (u * u);
        }
    }
    d
}

/// Everything the gradient assembly reads.
pub struct GradientInputs<'a> {
    pub flow: &'a FlowField,
    pub bundle: &'a TrajectoryBundle,
    pub dynamics: &'a Dynamics,
    pub states: &'a StateField,
    pub adjoint: &'a AdjointField,
    pub sensitivities: &'a ShapeSensitivities,
    /// Source weight s used for the adjoint.
    pub weight: f64,
    /// Areal constants and the unweighted objective, for the loading term.
    pub areal: Option<(&'a ArealParams, f64)>,
}

/// Assembles ∇J from forward states, multipliers and shape sensitivities.
pub fn gradient(inputs: &GradientInputs<'_>) -> Result<GradientTerms> {
    let GradientInputs {
        flow,
        bundle,
        dynamics,
        states,
        adjoint,
        sensitivities,
        weight,
        areal,
    } = *inputs;
    let nz = dynamics.len();
    let nodes = flow.nodes();
    if states.lap_count() != adjoint.laps.len() {
        return Err(ModelError::DimensionMismatch {
            what: "adjoint laps",
            expected: states.lap_count(),
            found: adjoint.laps.len(),
        });
    }
    for (lap_c, lap_p) in states.laps.iter().zip(&adjoint.laps) {
        if lap_c.len() != nz || lap_p.len() != nz {
            return Err(ModelError::DimensionMismatch {
                what: "trajectories per lap",
                expected: nz,
                found: lap_c.len().min(lap_p.len()),
            });
        }
        for (c, p) in lap_c.iter().zip(lap_p) {
            if c.len() != nodes || p.len() != nodes {
                return Err(ModelError::DimensionMismatch {
                    what: "nodes per trajectory",
                    expected: nodes,
                    found: c.len().min(p.len()),
                });
            }
        }
    }
    if sensitivities.dh.iter().any(|d| d.len() != nodes) {
        return Err(ModelError::DimensionMismatch {
            what: "sensitivity nodes",
            expected: nodes,
            found: sensitivities.dh.first().map_or(0, Vec::len),
        });
    }

    let weights = flow.grid.trapezoid_weights();
    let per_traj: Vec<Densities> = (0..nz)
        .into_par_iter()
        .map(|i| {
            let laps: Vec<(&[f64], &[f64])> = states
                .laps
                .iter()
                .zip(&adjoint.laps)
                .map(|(c, p)| (c[i].as_slice(), p[i].as_slice()))
                .collect();
            trajectory_densities(
                &dynamics.trajectories[i],
                &bundle.light[i],
                bundle.fractions[i],
                &flow.u,
                &weights,
                dynamics.dx,
                weight,
                &laps,
            )
        })
        .collect();

    // Ordered reduction over trajectories.
    let mut obj_light = vec![0.0; nodes];
    let mut con_light = vec![0.0; nodes];
    let mut obj_vel = vec![0.0; nodes];
    let mut con_vel = vec![0.0; nodes];
    for d in &per_traj {
        for m in 0..nodes {
            obj_light[m] += d.objective_light[m];
            con_light[m] += d.constraint_light[m];
            obj_vel[m] += d.objective_velocity[m];
            con_vel[m] += d.constraint_velocity[m];
        }
    }

    let eps = bundle.extinction;
    let dot = |density: &[f64], k: usize| -> f64 {
        let dh = &sensitivities.dh[k];
        let de = sensitivities.d_extinction[k];
        (0..nodes)
            .map(|m| density[m] * (eps * dh[m] + flow.h[m] * de))
            .sum()
    };
    let dot_u = |density: &[f64], k: usize| -> f64 {
        density.iter().zip(&sensitivities.du[k]).map(|(a, b)| a * b).sum()
    };
    let count = sensitivities.len();
    let mut loading = vec![0.0; count];
    if let (Some((ap, unweighted)), true) = (areal, sensitivities.includes_mean_depth) {
        loading[0] = -ap.alpha3() * unweighted;
    }
    Ok(GradientTerms {
        objective_light: (0..count).map(|k| dot(&obj_light, k)).collect(),
        objective_velocity: (0..count).map(|k| dot_u(&obj_vel, k)).collect(),
        constraint_light: (0..count).map(|k| dot(&con_light, k)).collect(),
        constraint_velocity: (0..count).map(|k| dot_u(&con_vel, k)).collect(),
        loading,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::{Grid, HydroConfig};
    use crate::kinetics::HanParams;
    use crate::transport::{fixed_solve, periodic_solve};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(coeffs: Vec<f64>, nz: usize, han: HanParams) -> (FlowField, TrajectoryBundle, Dynamics) {
        let cfg = HydroConfig {
            grid: Grid::from_step(100.0, 0.1).unwrap(),
            ..HydroConfig::default()
        };
        let shape = FourierShape { a0: 0.4, coeffs };
        let basis = FourierBasis::new(&cfg.grid, shape.order());
        let flow = FlowField::from_height(basis.height_profile(&shape).unwrap(), &cfg).unwrap();
        let bundle = TrajectoryBundle::uniform(&flow, nz, 100f64.ln() / 0.4, 2000.0);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        (flow, bundle, dynamics)
    }

    #[test]
    fn no_production_means_no_multiplier() {
        let han = HanParams {
            k: 0.0,
            ..HanParams::default()
        };
        let (flow, _, dynamics) = setup(vec![0.03, -0.01], 3, han);
        let fixed = adjoint_fixed_solve(&dynamics, &flow, 0.01);
        assert!(fixed.laps[0].iter().flatten().all(|p| *p == 0.0));
        let periodic =
            adjoint_periodic_solve(&dynamics, &flow, 0.01, &FixedPointSettings::default()).unwrap();
        assert!(periodic.laps[0].iter().flatten().all(|p| *p == 0.0));
    }

    #[test]
    fn flat_adjoint_matches_closed_form() {
        // Constant coefficients: p' = A p + s γ/u with p(L) = 0 gives
        // p(x) = -(sγ/u)/A · (1 - e^{-A(L - x)}).
        let err = |dx: f64| {
            let cfg = HydroConfig {
                grid: Grid::from_step(100.0, dx).unwrap(),
                ..HydroConfig::default()
            };
            let flow = FlowField::from_height(vec![0.4; cfg.grid.nodes()], &cfg).unwrap();
            let han = HanParams::default();
            let bundle = TrajectoryBundle::uniform(&flow, 1, 100f64.ln() / 0.4, 2000.0);
            let dynamics = Dynamics::new(&flow, &bundle, &han);
            let s = 1.0 / 100.0;
            let p = adjoint_integrate(&dynamics.trajectories[0], &flow.u, dx, 0.0, s);
            let light = bundle.light[0][0];
            let a = han.alpha(light) / 0.1;
            let src = s * han.gamma(light) / 0.1;
            p.iter()
                .enumerate()
                .map(|(n, v)| {
                    let x = flow.grid.x(n);
                    let exact = -src / a * (1.0 - (-a * (100.0 - x)).exp());
                    (v - exact).abs() / (src / a)
                })
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(0.2), err(0.1));
        assert!(coarse < 1e-4);
        assert!((3.5..4.5).contains(&(coarse / fine)), "ratio {}", coarse / fine);
    }

    #[test]
    fn periodic_flat_adjoint_is_constant() {
        let cfg = HydroConfig {
            grid: Grid::from_step(100.0, 0.05).unwrap(),
            ..HydroConfig::default()
        };
        let flow = FlowField::from_height(vec![0.4; cfg.grid.nodes()], &cfg).unwrap();
        let han = HanParams::default();
        let bundle = TrajectoryBundle::uniform(&flow, 3, 100f64.ln() / 0.4, 2000.0);
        let dynamics = Dynamics::new(&flow, &bundle, &han);
        let s = 0.01;
        let adj = adjoint_periodic_solve(&dynamics, &flow, s, &FixedPointSettings::default()).unwrap();
        for (i, p) in adj.laps[0].iter().enumerate() {
            let light = bundle.light[i][0];
            // Discrete balance p = a p + (Δx/2) s g (1 + a), within O(Δx²) of -sγ/α.
            let a = dynamics.trajectories[i].gain[0];
            let g = -han.gamma(light) / 0.1;
            let steady = 0.5 * 0.05 * s * g * (1.0 + a) / (1.0 - a);
            assert_relative_eq!(steady, -s * han.gamma(light) / han.alpha(light), max_relative = 1e-4);
            for v in p {
                assert_relative_eq!(*v, steady, max_relative = 1e-10);
            }
            assert!((p[0] - p[p.len() - 1]).abs() <= 1e-12 * steady.abs());
        }
    }

    /// Tangent-linear model of the whole lap: perturbations δbₙ of the step
    /// sources and δC₀ propagate as δC_{n+1} = aₙ δCₙ + δbₙ.
    fn tangent(traj: &TrajectoryDynamics, dc0: f64, db: &[f64]) -> Vec<f64> {
        let mut out = vec![dc0];
        let mut c = dc0;
        for (a, b) in traj.gain.iter().zip(db) {
            c = a * c + b;
            out.push(c);
        }
        out
    }

    /// Transposed model: weights on δCₙ pulled back to (δC₀, δbₙ).
    fn transpose(traj: &TrajectoryDynamics, w: &[f64]) -> (f64, Vec<f64>) {
        let cells = traj.cells();
        let mut lam = w[cells];
        let mut db = vec![0.0; cells];
        for n in (0..cells).rev() {
            db[n] = lam;
            lam = w[n] + traj.gain[n] * lam;
        }
        (lam, db)
    }

    #[test]
    fn transpose_identity() {
        let (_, _, dynamics) = setup(vec![0.05, -0.03, 0.02], 2, HanParams::default());
        let traj = &dynamics.trajectories[1];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let dc0: f64 = rng.gen_range(-1.0..1.0);
            let db: Vec<f64> = (0..traj.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..=traj.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = tangent(traj, dc0, &db).iter().zip(&w).map(|(a, b)| a * b).sum();
            let (adj0, adjb) = transpose(traj, &w);
            let rhs = dc0 * adj0 + db.iter().zip(&adjb).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn heun_adjoint_is_transpose_with_trapezoid_source() {
        // With w = s·(trapezoid weights)·g, the transposed model's λ must match
        // p + (Δx/2) s g from the Heun-type recursion.
        let (flow, _, dynamics) = setup(vec![0.05, -0.03], 1, HanParams::default());
        let traj = &dynamics.trajectories[0];
        let s = 0.37;
        let weights = flow.grid.trapezoid_weights();
        let g: Vec<f64> = (0..flow.nodes()).map(|n| -traj.rates[n].gamma / flow.u[n]).collect();
        let w: Vec<f64> = (0..flow.nodes()).map(|n| s * weights[n] * g[n]).collect();
        let (lam0, lam) = transpose(traj, &w);
        let p = adjoint_integrate(traj, &flow.u, dynamics.dx, 0.0, s);
        for n in 1..flow.nodes() {
            let expected = lam[n - 1];
            let got = p[n] + 0.5 * dynamics.dx * s * g[n];
            assert!((expected - got).abs() <= 1e-13 * expected.abs().max(1e-300));
        }
        assert_relative_eq!(lam0, p[0], max_relative = 1e-13);
    }

    #[test]
    fn sensitivities_on_flat_shape() {
        let cfg = HydroConfig {
            grid: Grid::from_step(100.0, 0.1).unwrap(),
            ..HydroConfig::default()
        };
        let shape = FourierShape::flat(0.4, 4);
        let basis = FourierBasis::new(&cfg.grid, 4);
        let flow = FlowField::from_height(basis.height_profile(&shape).unwrap(), &cfg).unwrap();
        let eps = 100f64.ln() / 0.4;
        let bundle = TrajectoryBundle::uniform(&flow, 3, eps, 2000.0);
        let sens = ShapeSensitivities::new(&flow, &basis, &shape, &Extinction::Fixed(eps), false);
        for k in 0..4 {
            assert!(cfg.grid.integrate(&sens.dh[k]).abs() < 1e-12);
            for n in 0..flow.nodes() {
                let expected = -(0.04 / 0.16) * (2.0 * (k + 1) as f64 * std::f64::consts::PI * flow.x[n] / 100.0).sin();
                assert!((sens.du[k][n] - expected).abs() < 1e-12);
            }
            let di = sens.light(&flow, &bundle, k, 2);
            for n in 0..flow.nodes() {
                let expected = -eps * bundle.fractions[2] * bundle.light[2][n] * sens.dh[k][n];
                assert_relative_eq!(di[n], expected, max_relative = 1e-14, epsilon = 1e-300);
            }
        }

        // Areal mode: I is independent of a₀ on a flat shape.
        let han = HanParams::default();
        let ap = ArealParams::from_han(0.2, 10.0, 2000.0, &han).unwrap();
        let ext = Extinction::Areal(ap);
        let bundle = TrajectoryBundle::uniform(&flow, 3, ext.coefficient(0.4), 2000.0);
        let sens = ShapeSensitivities::new(&flow, &basis, &shape, &ext, true);
        assert_eq!(sens.len(), 5);
        for i in 0..3 {
            assert!(sens.light(&flow, &bundle, 0, i).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (flow, bundle, dynamics) = setup(vec![0.02], 2, HanParams::default());
        let states = fixed_solve(&dynamics, 0.1).unwrap();
        let adjoint = AdjointField { laps: vec![] };
        let basis = FourierBasis::new(&flow.grid, 1);
        let sens = ShapeSensitivities::new(
            &flow,
            &basis,
            &FourierShape { a0: 0.4, coeffs: vec![0.02] },
            &Extinction::Fixed(bundle.extinction),
            false,
        );
        let inputs = GradientInputs {
            flow: &flow,
            bundle: &bundle,
            dynamics: &dynamics,
            states: &states,
            adjoint: &adjoint,
            sensitivities: &sens,
            weight: 1.0,
            areal: None,
        };
        assert!(matches!(gradient(&inputs), Err(ModelError::DimensionMismatch { .. })));
        let (per, _) = periodic_solve(&dynamics, &FixedPointSettings::default()).unwrap();
        assert_eq!(per.lap_count(), 1);
    }
}
