//! Crate error type with stage-tagged diagnostics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("signal: {0}")]
    Signal(String),

    #[error("graph: {0}")]
    Graph(String),

    #[error("exosystem: {0}")]
    Exosys(String),

    #[error("gain design: {0}")]
    GainDesign(String),

    #[error("kernel solver: {0}")]
    Kernel(String),

    #[error("regulator: {0}")]
    Regulator(String),

    #[error("observer design: {0}")]
    Observer(String),

    #[error("plant: {0}")]
    Plant(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
