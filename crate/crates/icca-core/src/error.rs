use thiserror::Error;

/// Unified error type for model loading, planning, scheduling and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("empty model: graph contains no operators")]
    EmptyModel,

    #[error("unknown tensor '{0}' referenced by an operator")]
    UnknownTensor(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no feasible partition plan for operator {op}: {reason}")]
    NoFeasiblePlan { op: usize, reason: String },

    #[error("allocation infeasible: minimum footprint {needed} exceeds capacity {capacity}")]
    AllocInfeasible { needed: u64, capacity: u64 },

    #[error("schedule infeasible: {0}")]
    ScheduleInfeasible(String),

    #[error("memory overflow at t={time}s: occupancy {occupancy} exceeds capacity {capacity}")]
    MemoryOverflow {
        time: f64,
        occupancy: u64,
        capacity: u64,
    },

    #[error("trace invalid: {0}")]
    TraceInvalid(String),

    #[error("calibration failed: {0}")]
    Calibration(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code contract: 0 success, 2 infeasible, 3 invalid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AllocInfeasible { .. }
            | Error::ScheduleInfeasible(_)
            | Error::MemoryOverflow { .. }
            | Error::NoFeasiblePlan { .. } => 2,
            _ => 3,
        }
    }
}
