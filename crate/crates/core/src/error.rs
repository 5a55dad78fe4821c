use thiserror::Error;

use crate::lattice::Site;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lattice: kernel is empty")]
    EmptyKernel,
    #[error("lattice: kernel is asymmetric at offset {offset}: p(v)={forward}, p(-v)={backward}")]
    AsymmetricKernel {
        offset: Site,
        forward: f64,
        backward: f64,
    },
    #[error("lattice: kernel weights sum to {sum}, not 1")]
    NonStochastic { sum: f64 },
    #[error("lattice: kernel has a self-loop (offset 0 present)")]
    SelfLoop,
    #[error("lattice: offset {offset} violates range {range} (sup-norm must be < range)")]
    RangeViolation { offset: Site, range: u32 },
    #[error("lattice: kernel weight {weight} at offset {offset} is outside (0, 1]")]
    InvalidWeight { offset: Site, weight: f64 },
    #[error("lattice: dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("lattice: invalid box: {0}")]
    InvalidBox(String),
    #[error("lattice: boundary shell width {shell} is narrower than the kernel jump radius {radius}")]
    ShellTooNarrow { shell: u32, radius: u32 },
    #[error("model: invalid parameters: {0}")]
    InvalidParams(String),
    #[error("field: no value at site {site}")]
    DomainMismatch { site: Site },
    #[error("field: duplicate site {site}")]
    DuplicateSite { site: Site },
    #[error("ground_state: no convergence after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("{module}: box has {sites} sites, above the dense limit of {limit}")]
    SizeLimit {
        module: &'static str,
        sites: usize,
        limit: usize,
    },
    #[error("site {site} is outside the box")]
    SiteOutsideBox { site: Site },
    #[error("ground_state: killed walk exceeded {cap} steps")]
    WalkCapExceeded { cap: usize },
    #[error("ground_state: decay bound violated at {site}: entry {entry} > bound {bound}")]
    BoundViolated { site: Site, entry: f64, bound: f64 },
    #[error("dual: backward walk was absorbed outside the box; enlarge the box")]
    AbsorptionOccurred,
    #[error("gibbs_exact: covariance is not positive definite")]
    FactorizationFailure,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
