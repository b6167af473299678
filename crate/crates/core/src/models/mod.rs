//! Concrete sampling targets.

pub mod bcbnp;
pub mod weibull;
