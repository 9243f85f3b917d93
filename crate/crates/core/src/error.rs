use thiserror::Error;

use crate::{attacks, config, data, eval, game, nnet, report, stats};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the pipeline; each module keeps its own error enum.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Nnet(#[from] nnet::NnetError),
    #[error(transparent)]
    Game(#[from] game::GameError),
    #[error(transparent)]
    Attack(#[from] attacks::AttackError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Config(#[from] config::ConfigErrors),
    #[error(transparent)]
    Report(#[from] report::ReportError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error at {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
