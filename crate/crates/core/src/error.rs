use thiserror::Error;

use crate::grid::GridFunction;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite evaluation at t = {t}")]
    Range { t: f64 },

    #[error("non-finite {what} at grid node {node}")]
    NodeRange { node: usize, what: &'static str },

    #[error("conjugate bracket grew past 1e30 without reaching slope s = {s}; A grows too slowly")]
    Divergence { s: f64 },

    #[error("inverse evaluation failed at sigma = {sigma}")]
    Inverse { sigma: f64 },

    #[error("quadrature did not converge at x = {x:?} (error estimate {estimate:e}); integrability condition fails")]
    Integrability { x: Vec<f64>, estimate: f64 },

    #[error("Sobolev conjugate inverse saturates at {saturation} below t = {t}")]
    ConjugateRange { t: f64, saturation: f64 },

    #[error("region error: {0}")]
    Region(String),

    #[error("degenerate level k = {k}: the ball lies entirely above the level")]
    DegenerateLevel { k: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("natural-number search for s exceeded {cap}: {detail}")]
    ConstantExplosion { cap: usize, detail: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("only {usable} usable scales, at least 3 are required")]
    InsufficientScales { usable: usize },

    #[error("line search stagnated after {iterations} iterations at energy {energy}")]
    Stagnation { iterations: usize, energy: f64, last: Box<GridFunction> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("expression error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed grid file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error stems from bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Invalid(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::Contract(_)
                | Error::Region(_)
                | Error::Sampling(_)
        )
    }
}

impl Error {
    /// Stable snake_case name of the variant, for structured diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Range { .. } => "range",
            Error::NodeRange { .. } => "node_range",
            Error::Divergence { .. } => "divergence",
            Error::Inverse { .. } => "inverse",
            Error::Integrability { .. } => "integrability",
            Error::ConjugateRange { .. } => "conjugate_range",
            Error::Region(_) => "region",
            Error::DegenerateLevel { .. } => "degenerate_level",
            Error::Infeasible(_) => "infeasible",
            Error::ConstantExplosion { .. } => "constant_explosion",
            Error::Sampling(_) => "sampling",
            Error::InsufficientScales { .. } => "insufficient_scales",
            Error::Stagnation { .. } => "stagnation",
            Error::Contract(_) => "contract",
            Error::Parse(_) => "parse",
            Error::Invalid(_) => "invalid",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
