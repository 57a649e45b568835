use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Input errors: malformed files, invalid descriptions, inconsistent designs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid index expression `{expr}`: {message}")]
    Expr { expr: String, message: String },
    #[error("invalid workload `{workload}`: {message}")]
    Workload { workload: String, message: String },
    #[error("dependency cycle through workload `{0}`")]
    Cycle(String),
    #[error("edge {producer} -> {consumer}: tensor `{tensor}` not produced by `{producer}`")]
    EdgeNotProduced {
        producer: String,
        consumer: String,
        tensor: String,
    },
    #[error("edge {producer} -> {consumer}: edge tensor `{tensor}` not consumed by `{consumer}`")]
    EdgeNotConsumed {
        producer: String,
        consumer: String,
        tensor: String,
    },
    #[error("tensor `{tensor}` shape mismatch: {first:?} vs {second:?}")]
    ShapeMismatch {
        tensor: String,
        first: Vec<u64>,
        second: Vec<u64>,
    },
    #[error("invalid mapping: {0}")]
    Mapping(String),
    #[error("invalid binding: {0}")]
    Binding(String),
    #[error("dangling dependence: element {element:?} of `{tensor}` is read but never written")]
    DanglingDependence { tensor: String, element: Vec<u64> },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid design point: {0}")]
    Design(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Syntax {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Why a design point could not be evaluated. Infeasibility is a normal
/// outcome of exploration and is reported rather than raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Infeasible {
    BufferOverflow {
        level: String,
        required: u64,
        capacity: u64,
    },
    ZeroEngines,
    ZeroUtilization,
    ZeroBandwidth {
        flow: String,
    },
    YieldUnderflow {
        area_mm2: f64,
    },
    TooManyChiplets {
        chiplets: usize,
        nodes: usize,
    },
    DuplicatePlacement {
        chiplet: usize,
    },
    UnplacedChiplet {
        chiplet: usize,
    },
    PeBudget {
        requested: u64,
        budget: u64,
    },
    StageCycle,
    BindingOrder {
        producer: usize,
        consumer: usize,
    },
    Genome {
        message: String,
    },
    Packaging {
        message: String,
    },
    Invalid {
        message: String,
    },
    Empty,
}

impl Infeasible {
    pub fn reason(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasible::BufferOverflow {
                level,
                required,
                capacity,
            } => write!(
                f,
                "{level} buffer overflow: tile needs {required} B, capacity {capacity} B"
            ),
            Infeasible::ZeroEngines => write!(f, "zero engines"),
            Infeasible::ZeroUtilization => write!(f, "zero utilization"),
            Infeasible::ZeroBandwidth { flow } => write!(f, "zero effective bandwidth on {flow}"),
            Infeasible::YieldUnderflow { area_mm2 } => {
                write!(f, "yield underflow for {area_mm2:.1} mm2 die")
            }
            Infeasible::TooManyChiplets { chiplets, nodes } => {
                write!(f, "{chiplets} chiplets exceed {nodes} network nodes")
            }
            Infeasible::DuplicatePlacement { chiplet } => {
                write!(f, "chiplet {chiplet} placed twice")
            }
            Infeasible::UnplacedChiplet { chiplet } => write!(f, "chiplet {chiplet} not placed"),
            Infeasible::PeBudget { requested, budget } => {
                write!(f, "{requested} PEs exceed budget {budget}")
            }
            Infeasible::StageCycle => write!(f, "dependence cycle between stages"),
            Infeasible::BindingOrder { producer, consumer } => write!(
                f,
                "workload {consumer} runs before its producer {producer} on a shared chiplet"
            ),
            Infeasible::Genome { message } => write!(f, "genome: {message}"),
            Infeasible::Packaging { message } => write!(f, "packaging: {message}"),
            Infeasible::Invalid { message } => write!(f, "{message}"),
            Infeasible::Empty => write!(f, "no feasible point"),
        }
    }
}
