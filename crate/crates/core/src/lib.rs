//! Topography optimization of raceway ponds.
//!
//! A steady shallow-water flow over a bottom shaped by a truncated Fourier
//! series carries microalgae along Lagrangian trajectories. Their
//! photoinhibition state follows the reduced Han model, and the average net
//! growth is maximized over the Fourier coefficients with a discrete adjoint
//! gradient.

pub mod adjoint;
pub mod error;
pub mod hydro;
pub mod kinetics;
pub mod optimizer;
pub mod problem;
pub mod transport;

pub use error::{ModelError, Result};
pub use hydro::{Extinction, FlowField, FourierShape, Grid, HydroConfig, TrajectoryBundle};
pub use kinetics::{ArealParams, HanParams, SECONDS_PER_DAY};
pub use problem::{Evaluation, Evaluator, Gradient, Problem, Settings, Variant, WheelKind};
pub use transport::{Boundary, FixedPointSettings, ObjectiveReport, PaddleWheel, StateField};
