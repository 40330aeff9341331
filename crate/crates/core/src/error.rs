use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("datum has no factors")]
    EmptyDatum,
    #[error("ambient dimension must be positive")]
    ZeroDimension,
    #[error("factor {index}: exponent must be positive, got {c}")]
    NonPositiveExponent { index: usize, c: f64 },
    #[error("factor {index}: map has {cols} columns, expected {expected}")]
    ColumnMismatch {
        index: usize,
        cols: usize,
        expected: usize,
    },
    #[error("factor {index}: map is not onto (rank {rank} < {rows} rows)")]
    NotOnto {
        index: usize,
        rank: usize,
        rows: usize,
    },
    #[error("datum is degenerate: stacked rank {rank} < {n}")]
    Degenerate { rank: usize, n: usize },
    #[error("homogeneity defect {defect:e} exceeds tolerance")]
    Inhomogeneous { defect: f64 },
    #[error("factor {index}: B A B* is ill-conditioned (condition number {condition:e})")]
    IllConditioned { index: usize, condition: f64 },
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid exponents: {0}")]
    Exponents(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("outside desk-scale bounds: {0}")]
    DeskScale(String),
    #[error("exponential overflow: {0}")]
    Overflow(String),
    #[error("sub-datum `{0}` did not converge")]
    NotConverged(String),
    #[error("malformed document: {0}")]
    Document(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
