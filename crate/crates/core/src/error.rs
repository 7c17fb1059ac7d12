use thiserror::Error;

/// Errors raised by the analytic engines and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {name} = {value} outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("matrix is not primitive: {0}")]
    NotPrimitive(String),
    #[error("point on the simplex boundary (coordinate {index} is zero)")]
    Boundary { index: usize },
    #[error("simplex violation {violation:e} exceeds tolerance before renormalization")]
    SimplexViolation { violation: f64 },
    #[error("state blew up at t = {t}: {value:e}")]
    BlowUp { t: f64, value: f64 },
    #[error("quadrature tolerance violated: {0}")]
    Quadrature(String),
    #[error("series cap of {0} terms exceeded")]
    SeriesCap(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_domain(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            expected,
        })
    }
}
