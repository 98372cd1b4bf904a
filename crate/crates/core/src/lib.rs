//! Musielak-Orlicz function calculus on box domains: generalized
//! N-functions, growth-function algebra, modulars and Luxemburg norms on grid
//! functions, the De Giorgi constants and class membership fits, Hölder
//! exponent estimation, and a variational solver for energies with
//! generalized growth.

pub mod conditions;
pub mod degiorgi;
pub mod domain;
pub mod error;
pub mod expr;
pub mod grid;
pub mod growth;
pub mod modular;
pub mod nfunction;
pub mod numeric;
pub mod variational;

pub use conditions::{check_conditions, ConditionReport, SamplePlan, Verdict};
pub use domain::DomainSpec;
pub use error::{Error, Result};
pub use grid::{Ball, GridFunction, VectorField};
pub use growth::{derive_growth, DerivedGrowth, GrowthDescriptor, GrowthFunction};
pub use nfunction::{Field, NFunction, NFunctionDescriptor};
