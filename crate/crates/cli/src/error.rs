use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, config, or input; exit status 2.
    Usage(String),
    /// Training or evaluation failure; exit status 1.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Failure(_) => ExitCode::from(1),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

impl From<nestgnn::Error> for CliError {
    fn from(e: nestgnn::Error) -> Self {
        use nestgnn::Error as E;
        match e {
            E::Config(_) | E::Usage(_) | E::Shape { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(format!("json error: {e}"))
    }
}
