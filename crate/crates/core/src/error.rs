use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("topology infeasible: no valid placement after {attempts} attempts")]
    TopologyInfeasible { attempts: usize },

    #[error("spectral radius did not converge after {iterations} iterations (bracket [{lower}, {upper}])")]
    SpectralRadiusNonConvergence {
        iterations: usize,
        lower: f64,
        upper: f64,
    },

    #[error("no feasible channel draw in {attempts} attempts (last spectral radius {last_spectral_radius})")]
    NoFeasibleDraw { attempts: u64, last_spectral_radius: f64 },

    #[error("infeasible game: spectral radius {spectral_radius} >= 1")]
    InfeasibleGame { spectral_radius: f64 },

    #[error("best-response iteration did not converge after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("singular linear system")]
    Singular,

    #[error("rate {0} is not in the rate set")]
    RateNotInSet(f64),

    #[error("pair index {index} out of range for {pairs} pairs")]
    PairOutOfRange { index: usize, pairs: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
