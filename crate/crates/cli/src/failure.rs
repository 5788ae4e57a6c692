use std::fmt;

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Config = 2,
    Io = 3,
    Invariant = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<eadkit::Error> for Failure {
    fn from(e: eadkit::Error) -> Self {
        let kind = if e.is_io() {
            ExitKind::Io
        } else {
            ExitKind::Invariant
        };
        Self::new(kind, e)
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub trait Context<T> {
    /// Prefixes the error with `what` while keeping its exit class.
    fn ctx(self, what: impl fmt::Display) -> CliResult<T>;
    /// Reclassifies any error as a config error.
    fn or_config(self) -> CliResult<T>;
}

impl<T> Context<T> for Result<T, eadkit::Error> {
    fn ctx(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| {
            let f = Failure::from(e);
            Failure::new(f.kind, f.error.context(what.to_string()))
        })
    }

    fn or_config(self) -> CliResult<T> {
        self.map_err(|e| Failure::new(ExitKind::Config, e))
    }
}
