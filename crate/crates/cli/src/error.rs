use std::ops::Range;
use std::path::{Path, PathBuf};

/// Failures surfaced by the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed or invalid scenario file, with 1-based position when known.
    #[error("{}{position}: {message}", path.display())]
    Parse { path: PathBuf, position: Position, message: String },
    #[error("incompatible scenarios: {0}")]
    Incompatible(String),
    #[error("{0}")]
    Usage(String),
    #[error("run failed: {0}")]
    Run(#[from] corrdiv::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Position {
    pub line: Option<usize>,
    pub column: usize,
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, ":{line}:{}", self.column),
            None => Ok(()),
        }
    }
}

impl CliError {
    pub(crate) fn parse(path: &Path, text: &str, span: Option<Range<usize>>, message: String) -> Self {
        let position = span.map_or(Position::default(), |s| {
            let before = &text[..s.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            Position { line: Some(line), column }
        });
        CliError::Parse { path: path.to_path_buf(), position, message }
    }

    /// 2 for bad input, 1 for failures while running or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Incompatible(_) | CliError::Usage(_) => 2,
            CliError::Run(_) | CliError::Io { .. } | CliError::Csv { .. } => 1,
        }
    }
}
