//! Scenario runner behind the `ftlflow` binary.

pub mod commands;
pub mod config;
pub mod emit;
pub mod svg;

#[derive(Debug)]
pub enum CliError {
    /// Itemized configuration problems. Exit code 2.
    Config(Vec<String>),
    /// Model failure during a run. Exit code 3.
    Runtime(String),
    /// Filesystem failure. Exit code 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(items) => {
                writeln!(f, "configuration error:")?;
                for i in items {
                    writeln!(f, "  - {i}")?;
                }
                Ok(())
            }
            CliError::Runtime(m) => write!(f, "model error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

impl Format {
    pub fn svg(self) -> bool {
        self == Format::CsvSvg
    }
}
