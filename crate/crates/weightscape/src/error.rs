use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] weightscape_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// `row` is the 1-based line in the file, `column` 1-based.
    #[error("{}: line {row}, column {column}: {message}", path.display())]
    Csv {
        path: PathBuf,
        row: u64,
        column: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for usage and configuration problems, 1 for
    /// everything that went wrong while running.
    pub fn exit_code(&self) -> u8 {
        use weightscape_core::Error as C;
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Core(
                C::InvalidConfig(_) | C::InvalidArchitecture(_) | C::UnknownGroup { .. },
            ) => 2,
            _ => 1,
        }
    }
}
