//! One error type for the whole binary, tagged with a machine-readable
//! category that maps onto the exit code.

use pairflim_core::config::ConfigError;
use pairflim_core::{HistogramError, PipelineError, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Bad arguments, bad config file, or unusable input data.
    Config,
    /// Filesystem trouble.
    Io,
    /// The simulator refused the run.
    Simulation,
    /// The analysis pipeline failed on otherwise readable data.
    Pipeline,
    /// Bugs and serialization failures.
    Internal,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Io => "io",
            Category::Simulation => "simulation",
            Category::Pipeline => "pipeline",
            Category::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Io => 3,
            Category::Simulation => 4,
            Category::Pipeline => 5,
            Category::Internal => 6,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn from_error(category: Category, e: &dyn std::error::Error) -> Self {
        Self { category, message: chain(e) }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "category={}: {}", self.category.name(), self.message)
    }
}

/// Flatten an error and its sources into one `top: mid: root` line.
pub fn chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(c) = cur {
        s.push_str(": ");
        s.push_str(&c.to_string());
        cur = c.source();
    }
    s
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let category = match e {
            ConfigError::Io { .. } => Category::Io,
            _ => Category::Config,
        };
        CliError::from_error(category, &e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::from_error(Category::Simulation, &e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::from_error(Category::Pipeline, &e)
    }
}

impl From<HistogramError> for CliError {
    fn from(e: HistogramError) -> Self {
        let category = match e {
            HistogramError::Io { .. } => Category::Io,
            _ => Category::Config,
        };
        CliError::from_error(category, &e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::from_error(Category::Io, &e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::from_error(Category::Internal, &e)
    }
}

impl From<toml::ser::Error> for CliError {
    fn from(e: toml::ser::Error) -> Self {
        CliError::from_error(Category::Internal, &e)
    }
}
