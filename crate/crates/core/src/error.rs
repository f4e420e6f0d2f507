use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration. `path` is the dotted field path, `line` the
    /// 1-based source line when the value came from a config file.
    #[error("{}", fmt_config(.path, .line, .message))]
    Config {
        path: String,
        line: Option<usize>,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("comparison error: {0}")]
    Comparison(String),
}

fn fmt_config(path: &str, line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config error at line {l}: {path}: {message}"),
        None => format!("config error: {path}: {message}"),
    }
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            line: None,
            message: message.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
