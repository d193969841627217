use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("instance must have at least one machine")]
    NoMachines,
    #[error("instance must have at least one job")]
    NoJobs,
    #[error("processing-time matrix has {found} rows, expected n = {expected}")]
    RowCount { expected: usize, found: usize },
    #[error(
        "row {row} of the processing-time matrix has {found} entries, expected m = {expected}"
    )]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("negative processing time {value} at p[{job}][{machine}]")]
    NegativeTime {
        job: usize,
        machine: usize,
        value: i64,
    },
    #[error("buffer list has {found} entries, expected m - 1 = {expected}")]
    BufferCount { expected: usize, found: usize },
    #[error("invalid capacity {value} for buffer {stage}")]
    InvalidCapacity { stage: usize, value: i64 },
    #[error("sequence has {found} jobs, expected {expected}")]
    SequenceLength { expected: usize, found: usize },
    #[error("job {job} at position {position} is out of range for n = {n}")]
    JobOutOfRange {
        position: usize,
        job: usize,
        n: usize,
    },
    #[error("job {job} appears again at position {position}")]
    DuplicateJob { position: usize, job: usize },
    #[error("buffer stage {stage} out of range ({stages} stages)")]
    StageOutOfRange { stage: usize, stages: usize },
    #[error("malformed instance document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown state feature `{0}`")]
    UnknownFeature(String),
    #[error("attribute configuration requires m = {required}, instance has m = {found}")]
    MachineCount { required: usize, found: usize },
    #[error("attribute `{name}` reads machine {machine} but instance has {machines} machines")]
    AttributeMachine {
        name: String,
        machine: usize,
        machines: usize,
    },
    #[error("weight vector has {weights} entries but there are {attributes} attributes")]
    LengthMismatch { weights: usize, attributes: usize },
    #[error("rule-set has {found} weight vectors, decomposition has {expected} cells")]
    CellCount { expected: usize, found: usize },
    #[error("decomposition is malformed: {0}")]
    BadDecomposition(String),
    #[error("state point {0:?} lies outside every cell")]
    Uncovered(Vec<f64>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GbmlError {
    #[error("genome has {found} genes, expected {expected}")]
    GenomeLength { expected: usize, found: usize },
    #[error("invalid GBML configuration: {0}")]
    Config(String),
    #[error("no training problems supplied")]
    NoProblems,
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("Johnson's rule needs exactly 2 machines, instance has {0}")]
    NotTwoMachines(usize),
    #[error("exhaustive search limited to n <= {limit}, instance has n = {n}")]
    TooManyJobs { n: usize, limit: usize },
    #[error("invalid annealing configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Gbml(#[from] GbmlError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
