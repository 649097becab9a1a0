//! Stochastic-optimization library built around the SGD-G2 adaptive
//! learning-rate algorithm: a gradient-flow view of SGD, a second-order
//! stochastic Heun scheme used to estimate the largest stable step size, and
//! a verification lab that checks the schemes' convergence orders.

pub mod convlab;
pub mod data;
pub mod error;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod oracle;

pub use error::{CoreError, CoreResult};
pub use oracle::{MiniBatch, ParamVector, QuadraticProblem, StochasticObjective};
