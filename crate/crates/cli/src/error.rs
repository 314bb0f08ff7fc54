use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] foe::Error),

    #[error("strategy `{0}` is not implemented")]
    UnknownStrategy(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::UnknownStrategy(_) => "UnknownStrategy",
            CliError::InvalidManifest(_) => "InvalidManifest",
        }
    }

    /// Process exit status; 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "MalformedRecord" => 10,
            "SchemaMismatch" => 11,
            "DuplicateId" => 12,
            "IoFailure" => 13,
            "InvalidConfig" => 14,
            "EmptyDataset" => 15,
            "NonFiniteLoss" => 16,
            "NotProbabilityOutputs" => 17,
            "InsufficientNeighbors" => 18,
            "MissingFuser" => 19,
            "TooManyExperts" => 20,
            "InvalidK" => 21,
            "Serialization" => 22,
            "UnknownStrategy" => 30,
            "InvalidManifest" => 31,
            _ => 1,
        }
    }

    /// `error[Code]: message` on one line.
    pub fn line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {message}", self.code())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(foe::Error::Serialization(e.to_string()))
    }
}
