//! Prior sensitivity analysis by sampling-importance resampling.
//!
//! A model is fitted once by MCMC under a base prior; posterior summaries
//! under alternative priors are then obtained by reweighting those draws
//! with the prior density ratio. On top of that sit grid sweeps, a
//! bisection search for tipping points of a borrowing hyperparameter, and
//! refit-based refinement of the tipping point.

pub mod cli;
pub mod dist;
pub mod error;
pub mod io;
pub mod mcmc;
pub mod models;
pub mod run;
pub mod sir;
pub mod tipping;

pub use error::{Error, Result};
