use num_complex::Complex64;
use thiserror::Error;

/// Failure modes shared by every stage of the transformation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GbdtError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("S(x) is singular at x = {x} (condition number {cond:.3e})")]
    SingularS { x: f64, cond: f64 },

    #[error("spectral point lies on the spectrum of A at x = {x}")]
    SpectrumHit { x: f64 },

    #[error("singularity at x = {x}: {what}")]
    Singularity { x: f64, what: String },

    #[error("identity residual {residual:.3e} at x = {x} exceeds drift limit {limit:.3e}")]
    IdentityDrift { x: f64, residual: f64, limit: f64 },

    #[error("logarithm branch cut reached: b - x = {value} at x = {x}")]
    Branch { x: f64, value: Complex64 },

    #[error("degenerate spectrum: b[{j}] equals conj(b[{k}])")]
    DegenerateSpectrum { j: usize, k: usize },

    #[error("z = {z} is within {distance:.3e} of the interval [0, {l}]")]
    Proximity { z: Complex64, distance: f64, l: f64 },

    #[error("boundary limit diverges at s = {s} (successive differences {differences:?})")]
    LimitDivergence { s: f64, differences: Vec<f64> },

    #[error("degenerate realization: {0}")]
    DegenerateRealization(String),

    #[error("no admissible theta split after {attempts} halvings")]
    SplitFailure { attempts: usize },

    #[error("u has a pole at s = {s}")]
    Pole { s: f64 },

    #[error("interval [0, {requested}] is not admissible; largest admissible length is {largest}")]
    Interval { requested: f64, largest: f64 },

    #[error("matrix is not J-unitary (residual {residual:.3e})")]
    NotJUnitary { residual: f64 },

    #[error("integrator failed at x = {x}: {reason}")]
    Integrator { x: f64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, GbdtError>;
