use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh specification: {0}")]
    InvalidMesh(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("power iteration did not converge after {iterations} iterations (relative change {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("inner solver hit the sweep cap {sweeps} (last max update {last_update:e})")]
    InnerNotConverged { sweeps: usize, last_update: f64 },

    #[error("outer fixed-point loop hit the iteration cap {iterations} (last increment {last_increment:e})")]
    OuterNotConverged { iterations: usize, last_increment: f64 },

    #[error("smallness condition violated: contraction factor k = {k:.6} >= 1")]
    SmallnessViolated { k: f64 },

    #[error("sequence entry n = {n}: {source}")]
    SequenceEntry {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sequence entry n = {n} is not in its approximating set (violation {violation:e})")]
    NotApproximating { n: usize, violation: f64 },

    #[error("no multistart converged; best J = {best_value:e} at {best_controls:?}")]
    NoConvergentStart { best_controls: Vec<f64>, best_value: f64 },

    #[error("optimal pair is not admissible (violation {violation:e})")]
    NotAdmissible { violation: f64 },
}
