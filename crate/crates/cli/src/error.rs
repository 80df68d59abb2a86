use curvestyle::features::FeatureError;
use curvestyle::optim::OptimError;
use curvestyle::raster::RasterError;
use curvestyle::rules::RuleError;
use curvestyle::svg::SvgError;

/// Everything a subcommand can fail with, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("numerical failure at iteration {iteration}")]
    Numerical { iteration: usize },
    #[error("{0}")]
    Output(String),
    #[error("gradient check failed: {0}")]
    Gradient(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) | CliError::Output(_) => 2,
            CliError::Numerical { .. } | CliError::Gradient(_) => 3,
        }
    }

    pub fn input(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::NumericalFailure { iteration } => CliError::Numerical { iteration },
            OptimError::Snapshot { .. } => CliError::Output(e.to_string()),
            OptimError::Rule(RuleError::Layout(_)) => CliError::Input(e.to_string()),
            OptimError::Feature(FeatureError::Format(_) | FeatureError::Data(_)) => CliError::Input(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SvgError> for CliError {
    fn from(e: SvgError) -> Self {
        CliError::Input(e.to_string())
    }
}
