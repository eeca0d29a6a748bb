//! Gaussian-process regression toolkit for reconstructing sparsely
//! observed fields.
//!
//! The toolkit combines four learners behind one grid-based interface:
//!
//! - ordinary Kriging: stationary Gaussian-kernel GP, hyperparameters by
//!   maximum likelihood;
//! - ensemble-informed Kriging: prior mean and covariance estimated from
//!   realizations of a stochastic simulation model, no hyperparameter
//!   optimization;
//! - its mean-shifted variant, which adds the likelihood-maximizing
//!   constant to the prior mean;
//! - a two-level CoKriging scheme whose low-fidelity GP is the
//!   ensemble-informed prior and whose discrepancy GP is a stationary
//!   Gaussian-kernel GP fit to the data/model mismatch.
//!
//! On top of the learners sit greedy active learning (new observations at
//! the posterior-variance maximizer), two-level Monte Carlo estimators
//! for the ensemble statistics, numerical verification of linear-
//! constraint error bounds, and a self-contained benchmark on a modified
//! Branin function.

pub mod active;
pub mod branin;
pub mod constraint;
pub mod cophik;
pub mod error;
pub mod gp;
pub mod grid;
pub mod kernel;
pub mod kriging;
pub mod linalg;
pub mod mlmc;
pub mod obs;
pub mod optimize;
pub mod phik;

pub use error::{CophikError, Result};
pub use grid::{Field, Grid, GridAxis, Point};
pub use obs::ObservationSet;
