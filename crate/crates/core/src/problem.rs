//! Problem variants and the shape → objective/gradient pipeline.

use std::fmt;
use std::str::FromStr;

use crate::adjoint::{self, AdjointField, GradientInputs, GradientTerms, ShapeSensitivities};
use crate::error::{ModelError, Result};
use crate::hydro::{
    depth_fractions, Extinction, FlowField, FourierBasis, FourierShape, HydroConfig,
    TrajectoryBundle,
};
use crate::kinetics::{ArealParams, HanParams};
use crate::transport::{
    objective_areal, objective_mu_delta, solve_states, Boundary, Dynamics, FixedPointReport,
    FixedPointSettings, ObjectiveReport, PaddleWheel, StateField,
};

/// Which functional and boundary condition are being optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One trajectory with a prescribed C(0).
    Single,
    /// N_z trajectories with a prescribed C(0).
    Multi,
    /// N_z trajectories with lap-periodic C.
    Periodic,
    /// Several laps coupled by a paddle-wheel permutation.
    Paddle,
    /// Loading-weighted periodic growth with the mean depth as a design variable.
    Areal,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Single,
        Variant::Multi,
        Variant::Periodic,
        Variant::Paddle,
        Variant::Areal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Single => "single",
            Variant::Multi => "multi",
            Variant::Periodic => "periodic",
            Variant::Paddle => "paddle",
            Variant::Areal => "areal",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Permutation applied by the paddle wheel between laps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WheelKind {
    AntiDiagonal,
    Identity,
}

/// Physical and numerical settings shared by all variants.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub han: HanParams,
    pub hydro: HydroConfig,
    /// Reference mean depth a₀ (m).
    pub a0: f64,
    /// Light reaching depth a₀ in the fixed-ε mode (µmol·m⁻²·s⁻¹).
    pub bottom_light: f64,
    pub nz: usize,
    /// Depth fraction of the lone trajectory in the single variant.
    pub single_fraction: f64,
    /// Prescribed C(0) for the single and multi variants.
    pub c0: f64,
    pub laps: usize,
    pub wheel: WheelKind,
    pub alpha0: f64,
    pub alpha1: f64,
    pub fixed_point: FixedPointSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            han: HanParams::default(),
            hydro: HydroConfig::default(),
            a0: 0.4,
            bottom_light: 20.0,
            nz: 50,
            single_fraction: 0.5,
            c0: 0.1,
            laps: 2,
            wheel: WheelKind::AntiDiagonal,
            alpha0: 0.2,
            alpha1: 10.0,
            fixed_point: FixedPointSettings::default(),
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason: "must be positive",
        })
    }
}

/// A fully specified optimization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub variant: Variant,
    pub han: HanParams,
    pub hydro: HydroConfig,
    /// Mean depth used for every variant except the areal one, where it is
    /// only the default starting point.
    pub a0: f64,
    pub fractions: Vec<f64>,
    pub boundary: Boundary,
    pub extinction: Extinction,
    pub fixed_point: FixedPointSettings,
}

impl Problem {
    pub fn new(variant: Variant, s: &Settings) -> Result<Self> {
        s.han.validate()?;
        s.hydro.validate()?;
        positive("a0", s.a0)?;
        positive("I_b", s.bottom_light)?;
        positive("fp_tol", s.fixed_point.tol)?;
        if s.bottom_light >= s.hydro.surface_light {
            return Err(ModelError::InvalidParameter {
                name: "I_b",
                value: s.bottom_light,
                reason: "must be below the surface light",
            });
        }
        if s.nz == 0 {
            return Err(ModelError::InvalidParameter {
                name: "Nz",
                value: 0.0,
                reason: "need at least one trajectory",
            });
        }
        if !(0.0..=1.0).contains(&s.c0) {
            return Err(ModelError::InvalidParameter {
                name: "C0",
                value: s.c0,
                reason: "must lie in [0, 1]",
            });
        }
        if !(s.single_fraction > 0.0 && s.single_fraction <= 1.0) {
            return Err(ModelError::InvalidParameter {
                name: "q",
                value: s.single_fraction,
                reason: "must lie in (0, 1]",
            });
        }
        let fixed = Extinction::from_bottom_light(s.hydro.surface_light, s.bottom_light, s.a0);
        let (fractions, boundary, extinction) = match variant {
            Variant::Single => (vec![s.single_fraction], Boundary::Fixed(s.c0), fixed),
            Variant::Multi => (depth_fractions(s.nz), Boundary::Fixed(s.c0), fixed),
            Variant::Periodic => (depth_fractions(s.nz), Boundary::Periodic, fixed),
            Variant::Paddle => {
                if s.laps == 0 {
                    return Err(ModelError::InvalidParameter {
                        name: "laps",
                        value: 0.0,
                        reason: "need at least one lap",
                    });
                }
                let wheel = match s.wheel {
                    WheelKind::AntiDiagonal => PaddleWheel::anti_diagonal(s.nz, s.laps),
                    WheelKind::Identity => PaddleWheel::identity(s.nz, s.laps),
                };
                (depth_fractions(s.nz), Boundary::Paddle(wheel), fixed)
            }
            Variant::Areal => {
                let ap = ArealParams::from_han(s.alpha0, s.alpha1, s.hydro.surface_light, &s.han)?;
                (depth_fractions(s.nz), Boundary::Periodic, Extinction::Areal(ap))
            }
        };
        Ok(Self {
            variant,
            han: s.han,
            hydro: s.hydro,
            a0: s.a0,
            fractions,
            boundary,
            extinction,
            fixed_point: s.fixed_point,
        })
    }

    /// Areal constants, when the objective is loading-weighted.
    pub fn areal(&self) -> Option<&ArealParams> {
        match &self.extinction {
            Extinction::Areal(ap) if self.variant == Variant::Areal => Some(ap),
            _ => None,
        }
    }

    /// Whether a₀ is part of the design vector.
    pub fn optimizes_mean_depth(&self) -> bool {
        self.variant == Variant::Areal
    }

    pub fn design_len(&self, order: usize) -> usize {
        order + usize::from(self.optimizes_mean_depth())
    }

    pub fn design(&self, shape: &FourierShape) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.design_len(shape.order()));
        if self.optimizes_mean_depth() {
            d.push(shape.a0);
        }
        d.extend_from_slice(&shape.coeffs);
        d
    }

    /// Inverse of [`Problem::design`]; `a0` is used when it is not a design variable.
    pub fn shape(&self, design: &[f64], a0: f64) -> FourierShape {
        if self.optimizes_mean_depth() {
            FourierShape {
                a0: design[0],
                coeffs: design[1..].to_vec(),
            }
        } else {
            FourierShape {
                a0,
                coeffs: design.to_vec(),
            }
        }
    }

    /// Flat starting shape: `[α₂/(2α₃), 0…]` is not assumed, a₀ is the configured depth.
    pub fn flat(&self, order: usize) -> FourierShape {
        FourierShape::flat(self.a0, order)
    }

    /// Objective evaluator for shapes with `order` Fourier modes.
    pub fn evaluator(&self, order: usize) -> Evaluator<'_> {
        Evaluator {
            problem: self,
            basis: FourierBasis::new(&self.hydro.grid, order),
        }
    }

    pub fn evaluate(&self, shape: &FourierShape) -> Result<Evaluation> {
        self.evaluator(shape.order()).evaluate(shape)
    }

    pub fn gradient(&self, shape: &FourierShape) -> Result<Gradient> {
        self.evaluator(shape.order()).gradient(shape)
    }
}

/// Forward solution for one shape.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub shape: FourierShape,
    pub flow: FlowField,
    pub bundle: TrajectoryBundle,
    pub dynamics: Dynamics,
    pub states: StateField,
    pub fixed_point: FixedPointReport,
    pub report: ObjectiveReport,
}

/// Adjoint gradient with respect to the design vector.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub evaluation: Evaluation,
    pub adjoint: AdjointField,
    pub terms: GradientTerms,
    pub vector: Vec<f64>,
}

/// A problem paired with a precomputed Fourier basis.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub problem: &'a Problem,
    pub basis: FourierBasis,
}

impl Evaluator<'_> {
    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn flow(&self, shape: &FourierShape) -> Result<FlowField> {
        FlowField::from_height(self.basis.height_profile(shape)?, &self.problem.hydro)
    }

    pub fn evaluate(&self, shape: &FourierShape) -> Result<Evaluation> {
        let p = self.problem;
        if shape.a0 <= 0.0 {
            return Err(ModelError::NonPositiveHeight { min_h: shape.a0, x: 0.0 });
        }
        let flow = self.flow(shape)?;
        let eps = p.extinction.coefficient(shape.a0);
        let bundle = TrajectoryBundle::new(&flow, p.fractions.clone(), eps, p.hydro.surface_light);
        let dynamics = Dynamics::new(&flow, &bundle, &p.han);
        let (states, fixed_point) = solve_states(&dynamics, &p.boundary, &p.fixed_point)?;
        let report = match p.areal() {
            Some(ap) => objective_areal(&flow, &dynamics, &states, ap, shape.a0)?,
            None => objective_mu_delta(&flow, &dynamics, &states, p.variant)?,
        };
        Ok(Evaluation {
            shape: shape.clone(),
            flow,
            bundle,
            dynamics,
            states,
            fixed_point,
            report,
        })
    }

    /// Raw objective (the functional the gradient differentiates).
    pub fn objective(&self, shape: &FourierShape) -> Result<f64> {
        Ok(self.evaluate(shape)?.report.raw)
    }

    pub fn gradient(&self, shape: &FourierShape) -> Result<Gradient> {
        let p = self.problem;
        let evaluation = self.evaluate(shape)?;
        let Evaluation {
            flow,
            bundle,
            dynamics,
            states,
            ..
        } = &evaluation;
        let nz = dynamics.len() as f64;
        let laps = states.lap_count() as f64;
        let base = 1.0 / (flow.grid.length * nz * laps);
        let (weight, areal) = match p.areal() {
            Some(ap) => {
                let inner = objective_mu_delta(flow, dynamics, states, p.variant)?.raw;
                (base * ap.areal_loading(shape.a0), Some((ap, inner)))
            }
            None => (base, None),
        };
        let adjoint = adjoint::solve_adjoint(dynamics, flow, &p.boundary, weight, &p.fixed_point)?;
        let sensitivities = ShapeSensitivities::new(
            flow,
            &self.basis,
            shape,
            &p.extinction,
            p.optimizes_mean_depth(),
        );
        let terms = adjoint::gradient(&GradientInputs {
            flow,
            bundle,
            dynamics,
            states,
            adjoint: &adjoint,
            sensitivities: &sensitivities,
            weight,
            areal,
        })?;
        let vector = terms.total();
        Ok(Gradient {
            evaluation,
            adjoint,
            terms,
            vector,
        })
    }
}
