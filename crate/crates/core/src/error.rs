use thiserror::Error;

/// Errors raised while building or validating a vehicle model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} = {value} is outside the valid range {range}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{field} must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("total vehicle mass must be positive")]
    ZeroMass,
    #[error("calibration impossible: {0}")]
    Calibration(String),
    #[error("could not parse design vector: {0}")]
    DesignParse(String),
}

/// Errors raised by the time-domain simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("total inertia tensor is singular")]
    SingularInertia,
    #[error("total mass is zero")]
    ZeroMass,
    #[error("state diverged (non-finite) at t = {time} s")]
    Diverged { time: f64 },
    #[error("invalid integration settings: {0}")]
    InvalidSettings(String),
}

/// Errors raised by the hover trim solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HoverError {
    #[error("body angular velocity is zero, spin axis undefined")]
    AxisUndefined,
    #[error("hover solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian numerically singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("hover solution infeasible: {0}")]
    Infeasible(String),
    #[error("non-finite value encountered in the hover system")]
    NonFinite,
}

/// Errors raised by the design-space search.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("design space: {0}")]
    InvalidSpace(String),
    #[error("grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: u64, cap: u64 },
    #[error("no feasible design in the searched space")]
    NoSolution,
    #[error("start point infeasible and no feasible neighbour within the initial trust region")]
    InfeasibleStart,
}
