use maintainkit::benchgen::BenchgenError;
use maintainkit::corpus::CorpusError;
use maintainkit::experiment::ExperimentError;
use maintainkit::llm_gateway::{CassetteError, GatewayError};

/// Exit 1 for anything the caller can fix, exit 2 for everything else.
#[derive(Debug)]
pub enum Failure {
    User(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::User(_) => 1,
            Failure::Internal(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::User(m) | Failure::Internal(m) => m,
        }
    }
}

fn gateway_is_user_error(e: &GatewayError) -> bool {
    match e {
        GatewayError::ReplayMiss { .. } | GatewayError::ForbiddenTag { .. } | GatewayError::NoBackend(_) | GatewayError::Config(_) => true,
        GatewayError::Cassette(c) => cassette_is_user_error(c),
        GatewayError::Provider { .. } => false,
    }
}

fn cassette_is_user_error(e: &CassetteError) -> bool {
    matches!(e, CassetteError::Corrupt { .. }) || matches!(e, CassetteError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
}

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        if gateway_is_user_error(&e) {
            Failure::User(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl From<CassetteError> for Failure {
    fn from(e: CassetteError) -> Self {
        if cassette_is_user_error(&e) {
            Failure::User(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::User(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let user = match &e {
            ExperimentError::InvalidManifest(_) | ExperimentError::Corpus(_) | ExperimentError::Conflict { .. } => true,
            ExperimentError::Gateway { source, .. } => gateway_is_user_error(source),
            _ => false,
        };
        if user {
            Failure::User(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl From<BenchgenError> for Failure {
    fn from(e: BenchgenError) -> Self {
        match e {
            BenchgenError::Gateway(g) => g.into(),
            other => Failure::Internal(other.to_string()),
        }
    }
}
