use std::fmt;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or input files.
    Usage(String),
    /// A pipeline stage failed.
    Stage { stage: String, source: levitomo::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Stage { source, .. } if source.is_usage() => EXIT_USAGE,
            CliError::Stage { .. } => EXIT_STAGE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Stage { stage, source } => write!(f, "stage `{stage}`: {source}"),
        }
    }
}

impl From<levitomo::Error> for CliError {
    fn from(e: levitomo::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Stage {
                stage: "setup".into(),
                source: e,
            }
        }
    }
}
