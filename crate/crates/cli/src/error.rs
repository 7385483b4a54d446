use std::path::PathBuf;

/// Legend entries drawn before a labelled scatter plot is refused.
pub const MAX_LEGEND_LABELS: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] catlgp::Error),

    #[error("invalid flag: {0}")]
    InvalidFlag(String),

    #[error(
        "column has {found} distinct labels but the legend holds at most {MAX_LEGEND_LABELS}; \
         pick a column with fewer categories or drop --label-column"
    )]
    TooManyLabels { found: usize },

    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
