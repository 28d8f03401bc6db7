use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("chart is singular: x1 = x2")]
    SingularChart,
    #[error("point is not on the invariant manifold")]
    NotOnManifold,
    #[error("point lies on the boundary of the invariant manifold")]
    BoundaryPoint,
    #[error("no collision: v1 = v2")]
    NoCollision,
    #[error("velocity outside the domain of the scattering map")]
    DomainViolation,
    #[error("weight is singular: two velocity components coincide")]
    SingularWeight,
    #[error("finite-difference step {step} too large for distance {distance} to the boundary")]
    StepTooLarge { step: f64, distance: f64 },
    #[error("flows from boundary points are not supported")]
    BoundaryUnsupported,
    #[error("chart point is not in the region required by this map")]
    WrongBranch,
    #[error("singular configuration: {0}")]
    Singular(&'static str),
    #[error("Gram matrix is near-singular (relative determinant {0:e})")]
    ConditionWarning(f64),
    #[error("density rejected: {0}")]
    InvalidDensity(String),
    #[error("integration region too small: {0} support or guard samples with integrand mass fall outside it")]
    RegionTooSmall(u64),
    #[error("exclusion margins remove integrand mass (relative {0:e}); reduce delta_x / delta_u")]
    MarginsExcludeSupport(f64),
    #[error("matrix is singular")]
    SingularMatrix,
}

pub(crate) fn invalid(msg: &str) -> Error {
    Error::InvalidInput(String::from(msg))
}
