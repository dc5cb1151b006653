use std::fmt;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or input data (exit 1).
    Validation(String),
    /// Anything that goes wrong after the inputs were accepted (exit 2).
    Runtime(String),
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

/// Attaches context to core errors.
pub trait Context<T> {
    fn invalid(self, what: impl fmt::Display) -> Result<T, Failure>;
    fn runtime(self, what: impl fmt::Display) -> Result<T, Failure>;
}

impl<T, E: fmt::Display> Context<T> for Result<T, E> {
    fn invalid(self, what: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(format!("{what}: {e}")))
    }

    fn runtime(self, what: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(format!("{what}: {e}")))
    }
}
