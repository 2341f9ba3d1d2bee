use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate factor label `{0}`")]
    DuplicateLabel(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("empty frame")]
    EmptyFrame,

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("graph has a directed cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("invalid instrument: {0}")]
    Instrument(String),

    #[error("unsupported SIC dimension {0}; supported dimensions are 2 and 3")]
    UnsupportedSicDimension(usize),

    #[error("invalid process: {0}")]
    Process(String),

    #[error("segment {index} is biased: max deviation of tr_in W from (d_in/d_out)*I is {deviation:.3e}")]
    Biased { index: usize, deviation: f64 },

    #[error("outcome table has {required} entries, above the cap of {cap}")]
    TableTooLarge { required: usize, cap: usize },

    #[error("Born rule produced imaginary residue {0:.3e}; the operator layouts do not match")]
    ImaginaryResidue(f64),

    #[error("reconstruction failed: {0}")]
    Reconstruction(String),

    #[error("classical model: {0}")]
    Classical(String),

    #[error("linear algebra: {0}")]
    Numerical(String),
}
