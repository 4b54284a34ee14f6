use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("episode exhausted: slot {slot} is not below the episode length {length}")]
    EpisodeExhausted { slot: usize, length: usize },

    #[error("capacity exceeded: {what} is {got}, limit is {limit}")]
    Capacity {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("replay buffer not ready: holds {len} transitions, batch needs {batch}")]
    NotReady { len: usize, batch: usize },

    #[error("poisoned update: {0}")]
    PoisonedUpdate(String),

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
