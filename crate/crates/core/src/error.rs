//! Error types shared across the solver pipeline.

use thiserror::Error;

/// Everything that can go wrong while building a problem or running the
/// solver. Variants map one-to-one onto the failure modes of the public
/// operations; the CLI groups them into exit-code families.
#[derive(Debug, Error)]
pub enum Error {
    /// An eigenvalue modulus fell inside the classification tolerance band.
    #[error("spectrum does not split cleanly: |lambda| = {modulus} is within {tol} of the unit circle band edge")]
    NonCleanSpectrum { modulus: f64, tol: f64 },

    /// The center or unstable block is numerically singular.
    #[error("{block} block is numerically singular (condition estimate {cond:.3e})")]
    SingularBlock { block: &'static str, cond: f64 },

    /// Block rescaling could not close the spectral-gap inequalities.
    #[error("no diagonal rescaling satisfied the spectral gap conditions for order {order} within {steps} refinement steps")]
    GapNotClosable { order: usize, steps: usize },

    /// The nonlinearity violates the second-order vanishing contract.
    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    /// A derivative of higher order than the representation supports was requested.
    #[error("insufficient smoothness: requested order {requested}, available {available}")]
    InsufficientSmoothness { requested: usize, available: usize },

    /// Too many grid nodes were mapped outside the target box during composition.
    #[error("domain escape: {escaped} of {total} grid nodes map outside the composition target box")]
    DomainEscape { escaped: usize, total: usize },

    /// The perturbation is too large for the inversion to be a contraction.
    #[error("not a contraction: |Dr|_0 = {deriv_norm} must stay below {bound}")]
    NotAContraction { deriv_norm: f64, bound: f64 },

    /// An iteration failed to reach its tolerance.
    #[error("{what} did not converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})")]
    NoConvergence {
        what: &'static str,
        residual: f64,
        tol: f64,
        iterations: usize,
    },

    /// A smallness inequality of the constants ledger is violated.
    #[error("infeasible constants: {0}")]
    InfeasibleConstants(String),

    /// Even the zero-curvature limit of a stage constant is >= 1.
    #[error("no curvature threshold exists for stage {stage}: base contraction factor {base} >= 1")]
    NoThreshold { stage: String, base: f64 },

    /// Candidate triple violates the invariant-set membership required by the operator.
    #[error("candidate lies outside the invariant set: {0}")]
    OutsideGamma0(String),

    /// Curvature of the data exceeds the largest value the contraction tolerates.
    #[error("second-derivative size {eps:.3e} exceeds the stage threshold {eps0:.3e}; rescale the problem or enable auto-scaling")]
    EpsilonTooLarge { eps: f64, eps0: f64 },

    /// The shifted linear part was singular at a grid node.
    #[error("linearized return map is singular at grid node {node}")]
    SingularPRho { node: usize },

    /// A coefficient system at some expansion order is numerically singular.
    #[error("resonant order {degree}: coefficient system for {block} is singular (condition {cond:.3e})")]
    ResonantOrder {
        degree: usize,
        block: &'static str,
        cond: f64,
    },

    /// A certification precondition failed.
    #[error("certification precondition failed: {0}")]
    PreconditionFailed(String),

    /// The center-coordinate projection used by the image-distance check failed.
    #[error("center projection failed to converge at sample {sample}")]
    ProjectionFailure { sample: usize },

    /// Problem-file parsing or validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
