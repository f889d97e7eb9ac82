//! Error taxonomy mapped to process exit codes: 2 for configuration
//! problems, 3 for data problems, 4 for numerical failures.

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
