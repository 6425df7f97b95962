use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("s = {s} lies beyond the tabulated range [0, {max}]")]
    Extrapolation { s: f64, max: f64 },

    #[error("tabulated kernel needs a declared tail form to evaluate F")]
    MissingTail,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("quadrature did not converge (last two estimates {previous} and {last})")]
    Quadrature { previous: f64, last: f64 },

    #[error("no shooting bracket found for mu = {mu} within (0, {cap}]")]
    ShootingBracket { mu: f64, cap: f64 },

    #[error("root finder did not converge after {iterations} iterations")]
    RootNotConverged { iterations: usize },

    #[error("integration failed at {at}: {reason}")]
    Integration { at: f64, reason: String },

    #[error("time step fell below {dt_min:e} at t = {t} without a blow-up signature (M = {max}, I/I0 = {integral_ratio})")]
    StepCollapse {
        t: f64,
        dt_min: f64,
        max: f64,
        integral_ratio: f64,
    },

    #[error("steady profile is not monotone near node {node} (mu = {mu}); refine the grid")]
    NonMonotone { node: usize, mu: f64 },

    #[error("volume form {volume} and flux form {flux} of lambda disagree at mu = {mu}")]
    LambdaInconsistent { mu: f64, volume: f64, flux: f64 },

    #[error("branch maximum sits at the grid endpoint mu = {mu}; use a wider mu grid")]
    MaximumAtEndpoint { mu: f64 },

    #[error("negative undershoot {value} at node {node}, t = {t}")]
    Undershoot { value: f64, node: usize, t: f64 },

    #[error("nonlocal integral underflowed at t = {t}")]
    IntegralUnderflow { t: f64 },

    #[error("dw/dmu is not positive at interior node {node} (mu = {mu})")]
    SignViolation { node: usize, mu: f64 },

    #[error("envelope direction {direction} does not match lambda - lambda(mu0) = {gap}")]
    DirectionMismatch { direction: &'static str, gap: f64 },

    #[error("no steady profile dominates the initial data below mu = {cap}")]
    NoDominatingProfile { cap: f64 },

    #[error("insufficient dynamic range: {0}")]
    DynamicRange(String),

    #[error("trajectory status is {0}, expected a blow-up")]
    NotBlownUp(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
