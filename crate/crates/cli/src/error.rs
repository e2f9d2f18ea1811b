use std::fmt;

use wrist_recon::conditioning::ConditioningError;
use wrist_recon::io::IoError;
use wrist_recon::metrics::MetricsError;
use wrist_recon::oracle::OracleError;
use wrist_recon::render::RenderError;
use wrist_recon::solver::SolverError;
use wrist_recon::spc::SpcError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Input = 2,
    Numerical = 3,
    Infeasible = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { kind: ExitKind::Input, message: message.into() }
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        Self { kind: self.kind, message: format!("{what}: {}", self.message) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn spc_kind(e: &SpcError) -> ExitKind {
    match e {
        SpcError::AllSkipped(_) => ExitKind::Numerical,
        _ => ExitKind::Input,
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<SpcError> for CliError {
    fn from(e: SpcError) -> Self {
        Self { kind: spc_kind(&e), message: e.to_string() }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        let kind = match &e {
            SolverError::Spc(s) => spc_kind(s),
            SolverError::InvalidConfig(_) => ExitKind::Input,
            SolverError::NonFinite(_) | SolverError::DegenerateConfiguration(_) | SolverError::AllStartsFailed(_) => {
                ExitKind::Numerical
            }
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        let kind = match e {
            OracleError::InfeasibleScene(_) => ExitKind::Infeasible,
            _ => ExitKind::Input,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let kind = match e {
            MetricsError::NoFrontPoints => ExitKind::Numerical,
            _ => ExitKind::Input,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<ConditioningError> for CliError {
    fn from(e: ConditioningError) -> Self {
        Self::input(e.to_string())
    }
}
