use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix has non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is empty ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("matrix is singular or rank deficient (rank {rank} < {required})")]
    Singular { rank: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid system configuration: {0}")]
    Config(String),

    #[error("block diagonalization infeasible for user {user}: other users' channels leave no null space ({rank} >= {n_tx})")]
    BdInfeasible {
        user: usize,
        rank: usize,
        n_tx: usize,
    },

    #[error("fairness infeasible: {streams} streams cannot cover {users} users")]
    FairnessInfeasible { streams: usize, users: usize },

    #[error("brute-force search too large: {subsets} subsets exceed limit {limit}")]
    SearchTooLarge { subsets: u128, limit: u128 },

    #[error("duplicate row index {0} in selection")]
    DuplicateRow(usize),

    #[error("odd bit count {0}; 4QAM needs pairs of bits")]
    OddBitCount(usize),

    #[error("failed to write {path}: {message}")]
    Io { path: String, message: String },

    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
