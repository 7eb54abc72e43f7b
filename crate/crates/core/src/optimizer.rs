//! Fixed-step gradient ascent over Fourier coefficients, with the
//! finite-difference oracle and criticality checks used to verify it.

use std::fmt;

use rand::Rng;

use crate::error::{ModelError, Result};
use crate::hydro::FourierShape;
use crate::problem::{Evaluator, Gradient};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Step size ρ applied to the raw-objective gradient.
    pub rho: f64,
    /// Step size for the a₀ coordinate (areal variant), whose curvature is far
    /// larger than that of the Fourier coefficients.
    pub rho_a0: f64,
    /// Euclidean gradient-norm tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Fourier truncation order N.
    pub order: usize,
    /// Seed for random initial guesses.
    pub seed: u64,
    /// Move a₀ as well (areal variant only).
    pub optimize_a0: bool,
    /// Armijo backtracking (halving, at most 20 times) instead of a fixed step.
    pub backtracking: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rho: 1e3,
            rho_a0: 10.0,
            tol: 1e-10,
            max_iters: 500,
            order: 5,
            seed: 0,
            optimize_a0: true,
            backtracking: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("rho", self.rho), ("rho_a0", self.rho_a0), ("tol", self.tol)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    /// The next step would leave the admissible (subcritical) set.
    SubcriticalBoundary,
    MaxIters,
    /// Backtracking found no ascent step.
    Stalled,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::SubcriticalBoundary => "subcritical_boundary",
            Termination::MaxIters => "max_iters",
            Termination::Stalled => "stalled",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Raw objective J.
    pub objective: f64,
    /// Reported objective (d⁻¹, or the areal scaling).
    pub objective_d1: f64,
    pub grad_norm: f64,
    pub min_h: f64,
    pub shape: FourierShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl OptimizationTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace holds the initial record")
    }

    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.last().iter
    }
}

fn is_boundary(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::SupercriticalFlow { .. }
            | ModelError::NonPositiveHeight { .. }
            | ModelError::NegativeBiomass { .. }
    )
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gradient restricted to the moving coordinates.
fn active_gradient(ev: &Evaluator<'_>, cfg: &OptimizerConfig, g: &Gradient) -> Vec<f64> {
    let mut v = g.vector.clone();
    if ev.problem.optimizes_mean_depth() && !cfg.optimize_a0 {
        v[0] = 0.0;
    }
    v
}

fn record(iter: usize, g: &Gradient, grad: &[f64]) -> IterationRecord {
    let e = &g.evaluation;
    IterationRecord {
        iter,
        objective: e.report.raw,
        objective_d1: e.report.value,
        grad_norm: norm2(grad),
        min_h: e.flow.min_height(),
        shape: e.shape.clone(),
    }
}

/// Gradient ascent `a ← a + ρ∇J` from `init`.
pub fn optimize(
    ev: &Evaluator<'_>,
    init: &FourierShape,
    cfg: &OptimizerConfig,
) -> Result<(FourierShape, OptimizationTrace)> {
    cfg.validate()?;
    if init.order() != ev.order() || cfg.order != ev.order() {
        return Err(ModelError::DimensionMismatch {
            what: "Fourier order",
            expected: ev.order(),
            found: init.order(),
        });
    }
    let problem = ev.problem;
    let mut current = ev.gradient(init).map_err(|e| {
        if is_boundary(&e) {
            ModelError::InvalidInitialShape(Box::new(e))
        } else {
            e
        }
    })?;
    let mut grad = active_gradient(ev, cfg, &current);
    let mut records = vec![record(0, &current, &grad)];
    let a0 = init.a0;

    let termination = loop {
        let iter = records.len() - 1;
        let norm = records[iter].grad_norm;
        if norm <= cfg.tol {
            break Termination::Converged;
        }
        if iter >= cfg.max_iters {
            break Termination::MaxIters;
        }
        let design = problem.design(&current.evaluation.shape);
        let rates: Vec<f64> = (0..design.len())
            .map(|k| {
                if k == 0 && problem.optimizes_mean_depth() {
                    cfg.rho_a0
                } else {
                    cfg.rho
                }
            })
            .collect();
        // Squared gradient norm in the step metric, for the Armijo test.
        let ascent: f64 = grad.iter().zip(&rates).map(|(g, r)| r * g * g).sum();
        let step_to = |scale: f64| {
            let d: Vec<f64> = design
                .iter()
                .zip(&grad)
                .zip(&rates)
                .map(|((x, g), r)| x + scale * r * g)
                .collect();
            problem.shape(&d, a0)
        };

        let next = if cfg.backtracking {
            let j0 = current.evaluation.report.raw;
            let mut scale = 1.0;
            let mut accepted = None;
            let mut hit_boundary = false;
            for _ in 0..=20 {
                match ev.evaluate(&step_to(scale)) {
                    Ok(e) if e.report.raw >= j0 + 1e-4 * scale * ascent => {
                        accepted = Some(e.shape);
                        break;
                    }
                    Ok(_) => {}
                    Err(e) if is_boundary(&e) => hit_boundary = true,
                    Err(e) => return Err(e),
                }
                scale *= 0.5;
            }
            match accepted {
                Some(shape) => ev.gradient(&shape)?,
                None if hit_boundary => break Termination::SubcriticalBoundary,
                None => break Termination::Stalled,
            }
        } else {
            match ev.gradient(&step_to(1.0)) {
                Ok(g) => g,
                Err(e) if is_boundary(&e) => break Termination::SubcriticalBoundary,
                Err(e) => return Err(e),
            }
        };
        current = next;
        grad = active_gradient(ev, cfg, &current);
        records.push(record(iter + 1, &current, &grad));
    };

    Ok((
        current.evaluation.shape.clone(),
        OptimizationTrace {
            records,
            termination,
        },
    ))
}

/// Central finite differences of the raw objective in every design coordinate.
pub fn fd_gradient(ev: &Evaluator<'_>, shape: &FourierShape, eta: f64) -> Result<Vec<f64>> {
    let problem = ev.problem;
    let design = problem.design(shape);
    (0..design.len())
        .map(|k| {
            let mut plus = design.clone();
            let mut minus = design.clone();
            plus[k] += eta;
            minus[k] -= eta;
            let jp = ev.objective(&problem.shape(&plus, shape.a0))?;
            let jm = ev.objective(&problem.shape(&minus, shape.a0))?;
            Ok((jp - jm) / (2.0 * eta))
        })
        .collect()
}

/// Central difference of J along `direction` in design space.
pub fn fd_directional(
    ev: &Evaluator<'_>,
    shape: &FourierShape,
    direction: &[f64],
    eta: f64,
) -> Result<f64> {
    let problem = ev.problem;
    let design = problem.design(shape);
    let moved = |sign: f64| {
        let d: Vec<f64> = design
            .iter()
            .zip(direction)
            .map(|(x, v)| x + sign * eta * v)
            .collect();
        problem.shape(&d, shape.a0)
    };
    Ok((ev.objective(&moved(1.0))? - ev.objective(&moved(-1.0))?) / (2.0 * eta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityReport {
    pub gradient: Vec<f64>,
    pub grad_inf: f64,
    pub grad_norm: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Whether ‖∇J‖∞ ≤ tol at `shape`.
pub fn criticality_check(ev: &Evaluator<'_>, shape: &FourierShape, tol: f64) -> Result<CriticalityReport> {
    let gradient = ev.gradient(shape)?.vector;
    let grad_inf = norm_inf(&gradient);
    Ok(CriticalityReport {
        grad_norm: norm2(&gradient),
        grad_inf,
        tol,
        pass: grad_inf <= tol,
        gradient,
    })
}

/// Coefficients uniform in [-a₀/10, a₀/10], redrawn until the flow is subcritical.
pub fn random_shape<R: Rng + ?Sized>(ev: &Evaluator<'_>, a0: f64, rng: &mut R) -> Result<FourierShape> {
    const ATTEMPTS: usize = 1000;
    let bound = a0 / 10.0;
    let mut last = None;
    for _ in 0..ATTEMPTS {
        let shape = FourierShape {
            a0,
            coeffs: (0..ev.order()).map(|_| rng.gen_range(-bound..=bound)).collect(),
        };
        match ev.flow(&shape) {
            Ok(_) => return Ok(shape),
            Err(e) => last = Some(e),
        }
    }
    Err(ModelError::InvalidInitialShape(Box::new(
        last.expect("at least one attempt"),
    )))
}
