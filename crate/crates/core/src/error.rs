use thiserror::Error;

/// Errors raised by the model, transport and optimization layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("water height must be positive everywhere (found {min_h} at x = {x})")]
    NonPositiveHeight { min_h: f64, x: f64 },

    #[error("flow is not subcritical: min h = {min_h} m does not exceed critical height {h_c} m (at x = {x})")]
    SupercriticalFlow { min_h: f64, h_c: f64, x: f64 },

    #[error("compensation quadratic has no root in (0, {surface}) µmol/m²/s")]
    NoCompensationRoot { surface: f64 },

    #[error("negative biomass loading: mean depth {a0} m is too large for the compensation condition")]
    NegativeBiomass { a0: f64 },

    #[error("fixed-point iteration did not reach tolerance {tol:e} in {iters} iterations (residual {residual:e})")]
    FixedPointDivergence { iters: usize, residual: f64, tol: f64 },

    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("initial shape is not admissible: {0}")]
    InvalidInitialShape(Box<ModelError>),

    #[error("photoinhibition state left [0, 1]: C = {value} at trajectory {trajectory}, node {node}")]
    StateOutOfBounds {
        value: f64,
        trajectory: usize,
        node: usize,
    },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
