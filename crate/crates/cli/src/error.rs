use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for a configuration problem.
pub const EXIT_CONFIG: i32 = 1;
/// Process exit status for unreadable or malformed input data.
pub const EXIT_DATA: i32 = 2;
/// Process exit status for a power budget outside the achievable range.
pub const EXIT_INFEASIBLE: i32 = 3;
/// Process exit status when the optimizer stops without converging. Outputs
/// are written before the process exits with this status.
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] lumadim::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &lumadim::Error) -> i32 {
    use lumadim::Error as E;
    match e {
        E::InvalidParameter(_) => EXIT_CONFIG,
        E::InfeasibleBudget { .. } => EXIT_INFEASIBLE,
        E::Frame { source, .. } => core_exit_code(source),
        _ => EXIT_DATA,
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_mapping() {
        assert_eq!(CliError::config("x").exit_code(), EXIT_CONFIG);
        let infeasible = lumadim::Error::InfeasibleBudget {
            target: 9.0,
            min: 0.3,
            max: 1.8,
        };
        assert_eq!(CliError::from(infeasible).exit_code(), EXIT_INFEASIBLE);
        let data = lumadim::Error::Data {
            path: "f.png".into(),
            message: "bad".into(),
        };
        assert_eq!(CliError::from(data.in_frame(3)).exit_code(), EXIT_DATA);
    }
}
