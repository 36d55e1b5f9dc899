//! Stopping-time construction of a harmonic function with weighted growth whose
//! boundary averages violate the law of the iterated logarithm bound.

pub mod checks;
pub mod construction;
pub mod params;
pub mod point;
pub mod smoothing;
pub mod wavelet;

pub use construction::{NodeState, StoppingConstruction, Trace};
pub use params::{choose_params, ConditionReport, ConstructionParams, Overrides, SupRule};
pub use point::DyadicPoint;
pub use wavelet::MotherWavelet;
