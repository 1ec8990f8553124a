//! Sparse identification of nonlinear dynamics with implicit Runge–Kutta
//! (Gauss–Legendre) integration inside the training loss.

pub mod coefficients;
pub mod dataset;
pub mod error;
pub mod features;
pub mod field;
pub mod grad;
pub mod irk;
pub mod linalg;
pub mod net;
pub mod scalar;
pub mod sindy;
pub mod tableau;

pub use coefficients::CoefficientMatrix;
pub use dataset::{Dataset, ReferenceModel, ScalingInfo, ScalingMode};
pub use error::{Error, Result};
pub use features::{Library, LibrarySpec, Term};
pub use field::{LibraryField, VectorField};
pub use irk::{SolverSettings, StageSolver};
pub use scalar::{Real, Scalar};
pub use tableau::{gauss_tableau, verify_order_conditions, ButcherTableau, MAX_STAGES};

pub type Tableau = ButcherTableau<f64>;
pub type Tableau32 = ButcherTableau<f32>;
pub type StageValues64 = irk::StageValues<f64>;
pub type StageValues32 = irk::StageValues<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
