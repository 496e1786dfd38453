//! Discounted Hamilton-Jacobi solvers on flat tori and the weak KAM
//! objects attached to them: critical value, ground states, Peierls
//! barrier, Aubry and Mather sets, and checks of the vanishing-discount
//! limits.

pub mod action;
pub mod aubry;
pub mod error;
pub mod grid;
pub mod limits;
pub mod model;
pub mod properties;
mod search;
pub mod solver;
pub mod torus;

pub use error::{Error, Result};
pub use grid::{FieldMeta, GridField, GridSpec};
pub use model::{build_model, CustomLagrangian, DriftSpec, Family, LagrangianModel, ModelSpec, PotentialSpec};
pub use solver::{
    backward_step, critical_value, forward_solution, ground_state, lipschitz_bound, residual,
    CriticalValue, SolverConfig,
};
pub use torus::{torus_metric, TorusPoint, Velocity};
