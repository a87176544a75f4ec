//! Exact bicausal optimal transport between laws of finite discrete-time
//! processes.
//!
//! Masses are exact rationals throughout. Path spaces are finite products of
//! labeled point sets; couplings are finite mass tables over pairs of paths.

pub mod adapted;
pub mod approx;
pub mod coupling;
pub mod error;
pub mod gen;
pub mod io;
pub mod lifting;
pub mod measure;
pub mod rational;
pub mod solvers;
pub mod space;

pub use coupling::{CausalityReport, CausalityWitness, Coupling, Direction, MongeClass};
pub use error::{Error, Result};
pub use measure::{Kernel, PathMeasure, StepKernel, StepLaw};
pub use rational::{format_rational, parse_rational, Exponent, Rational};
pub use space::{Path, PathSpace, Point, ProductMetric, Step, StepMetric};
