use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid contour: {0}")]
    InvalidContour(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The adaptive quadrature could not resolve the integrand: the target is
    /// effectively on a contour segment.
    #[error("contour contact: {0}")]
    Contact(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("redistribution failed: {0}")]
    Redistribution(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidContour(_) => "invalid_contour",
            Error::Domain(_) => "domain",
            Error::Contact(_) => "contact",
            Error::Divergent(_) => "divergent",
            Error::Redistribution(_) => "redistribution",
            Error::Fit(_) => "fit",
            Error::UnknownScenario(_) => "unknown_scenario",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
