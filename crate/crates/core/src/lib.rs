//! Mono-spinner model: a single-rotor UAV whose whole body spins about a
//! fixed vertical axis, carrying a lifting fuselage.
//!
//! * [`model`] design vector, constants, masses, inertia and calibration
//! * [`aero`] blade-element forces and moments
//! * [`dynamics`] equations of motion and an RK4 integrator
//! * [`hover`] hover equilibrium solver
//! * [`optimize`] grid search, sweeps and local search over the design
//! * [`config`] TOML run configuration

pub mod aero;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod hover;
pub mod io;
pub mod model;
pub mod optimize;

pub use aero::AeroVariant;
pub use config::{Config, ConfigError};
pub use error::{DynamicsError, HoverError, ModelError, SearchError};
pub use hover::{default_guess, solve_hover, HoverRecord, HoverState, HoverUnknowns};
pub use model::{
    calibrate_from_published, expand_design, BaseConstants, Calibration, DesignVector, MassModel,
    PublishedHover, VehicleModel,
};
pub use optimize::{evaluate_design, DesignSpace, Evaluation, Figure, Problem, SweepGrid, VarRange};
