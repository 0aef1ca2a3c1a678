use streamvault::gateway::GatewayError;
use streamvault::harness::HarnessError;
use streamvault::ledger::LedgerError;
use streamvault::storage::StorageError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("permission denied: {0}")]
    Permission(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Permission(_) => 3,
            CliError::Io(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<StorageError> for CliError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::PermissionDenied | StorageError::NotStreamOwner | StorageError::BadAuth => {
                CliError::Permission(e.to_string())
            }
            StorageError::StorageUnavailable(_) | StorageError::Protocol(_) => CliError::Io(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::PermissionDenied
            | GatewayError::NotOwner
            | GatewayError::NotGranted(_)
            | GatewayError::MissingKeyEpoch(_) => CliError::Permission(e.to_string()),
            GatewayError::Storage(s) => s.into(),
            GatewayError::Io(m) => CliError::Io(m),
            GatewayError::BadInput(m) => CliError::Usage(m),
            GatewayError::UnknownStream(_) | GatewayError::LateRecord { .. } | GatewayError::DuplicateRecord(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::UnknownStream(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Usage(m),
            HarnessError::Gateway(g) => g.into(),
            HarnessError::Storage(s) => s.into(),
            HarnessError::Ledger(l) => l.into(),
            HarnessError::Dht(d) => CliError::Other(d.to_string()),
        }
    }
}
