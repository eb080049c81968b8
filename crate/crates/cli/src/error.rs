use thiserror::Error;

use subrosa::Error as CoreError;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_INTEGRATION: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn core(context: impl Into<String>, source: CoreError) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Core { source, .. } => core_exit_code(source),
        }
    }
}

/// Library errors grouped by who has to act: the config author (3), the
/// linear algebra (4) or the time integration (5).
pub fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Solvability(_)
        | CoreError::Convergence { .. }
        | CoreError::DegenerateFrame { .. }
        | CoreError::NonPositiveDensity { .. } => EXIT_SOLVER,
        CoreError::Integration(_) | CoreError::PositivityLoss { .. } | CoreError::NonFinite(_) => EXIT_INTEGRATION,
        _ => EXIT_CONFIG,
    }
}

/// Attaches a context string to library results.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for subrosa::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|e| CliError::core(what(), e))
    }
}
