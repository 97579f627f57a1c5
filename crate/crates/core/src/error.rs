use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SmsbError>;

#[derive(Debug, Error)]
pub enum SmsbError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("non-finite input: {0}")]
    NumericInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("empty block mask: {0}")]
    EmptyMask(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("oracle scope exceeded: {0}")]
    OracleScope(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("non-finite value in {path} at byte offset {offset}")]
    NonFinite { path: PathBuf, offset: u64 },

    #[error("label out of range in {path}: pixel {pixel} has label {label}, declared classes {classes}")]
    LabelRange {
        path: PathBuf,
        pixel: usize,
        label: u16,
        classes: u16,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Input,
    Numeric,
    Data,
    Model,
    Config,
    Resource,
    Io,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Config => 2,
            ErrorFamily::Io => 3,
            ErrorFamily::Input => 4,
            ErrorFamily::Numeric => 5,
            ErrorFamily::Data => 6,
            ErrorFamily::Model => 7,
            ErrorFamily::Resource => 8,
        }
    }
}

impl SmsbError {
    pub fn family(&self) -> ErrorFamily {
        use SmsbError::*;
        match self {
            InvalidPartition(_) | Index(_) | Shape(_) => ErrorFamily::Input,
            NumericInput(_) | NonFinite { .. } => ErrorFamily::Numeric,
            InsufficientData(_) | DegenerateData(_) | DegenerateSplit(_) | DegenerateLabels(_)
            | EmptyInput(_) | EmptyMask(_) => ErrorFamily::Data,
            ModelMismatch(_) => ErrorFamily::Model,
            Config(_) | OracleScope(_) | Spec(_) => ErrorFamily::Config,
            Resource(_) => ErrorFamily::Resource,
            Format { .. } | Truncated { .. } | LabelRange { .. } | Io { .. } => ErrorFamily::Io,
        }
    }

    /// Stable machine-readable identifier, `module.kind`.
    pub fn code(&self) -> &'static str {
        use SmsbError::*;
        match self {
            InvalidPartition(_) => "cube.invalid_partition",
            Index(_) => "cube.index",
            Resource(_) => "cube.resource",
            NumericInput(_) => "solver.numeric_input",
            Shape(_) => "solver.shape",
            InsufficientData(_) => "dict.insufficient_data",
            DegenerateData(_) => "dict.degenerate_data",
            EmptyMask(_) => "select.empty_mask",
            ModelMismatch(_) => "pipeline.model_mismatch",
            DegenerateSplit(_) => "pipeline.degenerate_split",
            DegenerateLabels(_) => "svm.degenerate_labels",
            Config(_) => "config.invalid",
            EmptyInput(_) => "metrics.empty_input",
            OracleScope(_) => "synth.oracle_scope",
            Spec(_) => "synth.spec",
            Format { .. } => "io.format",
            Truncated { .. } => "io.truncated",
            NonFinite { .. } => "io.non_finite",
            LabelRange { .. } => "io.label_range",
            Io { .. } => "io.os",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SmsbError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        SmsbError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
