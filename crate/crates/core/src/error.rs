use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range (bound {bound}){}", gate_suffix(*.gate))]
    OutOfRange {
        gate: Option<usize>,
        index: usize,
        bound: usize,
    },
    #[error("gate {gate}: CNOT({control},{target}) acts on an uncoupled pair")]
    UncoupledPair {
        gate: usize,
        control: usize,
        target: usize,
    },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("no simple path of length {length} in the coupling graph")]
    NoPath { length: usize },
    #[error("circuit touches {width} qubits, limit is {limit}")]
    TooWide { width: usize, limit: usize },
    #[error("{name} = {value} is not a probability")]
    ProbabilityOutOfRange { name: String, value: f64 },
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("missing coverage for: {}", .missing.join(", "))]
    MissingCoverage { missing: Vec<String> },
    #[error("Hadamard sequence length {0} is not even and >= 2")]
    OddHadamardLength(usize),
    #[error("expected a {expected} characterization, found {found}")]
    WrongKind { expected: String, found: String },
    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("need at least 2 distinct Hadamard sequence lengths, found {0}")]
    InsufficientLengths(usize),
    #[error("model ladder is empty")]
    EmptyLadder,
    #[error("oracle qubit {oracle} is not coupled to data qubit {data}")]
    OracleNotAdjacent { oracle: usize, data: usize },
    #[error("qubit {0} used more than once")]
    QubitCollision(usize),
    #[error("counts archive is missing labels: {}", .missing.join(", "))]
    LabelMismatch { missing: Vec<String> },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn gate_suffix(gate: Option<usize>) -> String {
    gate.map(|g| format!(" at gate {g}")).unwrap_or_default()
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "OutOfRange",
            Error::UncoupledPair { .. } => "UncoupledPair",
            Error::InvalidCircuit(_) => "InvalidCircuit",
            Error::InvalidTopology(_) => "InvalidTopology",
            Error::NoPath { .. } => "NoPath",
            Error::TooWide { .. } => "TooWide",
            Error::ProbabilityOutOfRange { .. } => "OutOfRange",
            Error::ArityMismatch { .. } => "ArityMismatch",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::MissingCoverage { .. } => "MissingCoverage",
            Error::OddHadamardLength(_) => "OddHadamardLength",
            Error::WrongKind { .. } => "WrongKind",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::InsufficientLengths(_) => "InsufficientLengths",
            Error::EmptyLadder => "EmptyLadder",
            Error::OracleNotAdjacent { .. } => "OracleNotAdjacent",
            Error::QubitCollision(_) => "QubitCollision",
            Error::LabelMismatch { .. } => "LabelMismatch",
            Error::Parse(_) => "ParseError",
            Error::InvalidConfig(_) => "ConfigError",
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => "FileNotFound",
            Error::Io(_) => "IoError",
            Error::Json(_) => "ParseError",
            Error::Csv(_) => "IoError",
        }
    }
}

pub(crate) fn check_probability<T: crate::Real>(name: &str, value: T) -> Result<T> {
    if crate::scalar::is_probability(value) {
        Ok(value)
    } else {
        Err(Error::ProbabilityOutOfRange {
            name: name.to_string(),
            value: value.to_f64().unwrap_or(f64::NAN),
        })
    }
}
