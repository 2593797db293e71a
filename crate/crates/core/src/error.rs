use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{0}")]
    Format(String),

    #[error("genotype out of range at row {row}, column {col}: {value:?}")]
    GenotypeDomain { row: usize, col: usize, value: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no SNPs survive MAF filter (maf_min = {maf_min})")]
    NoSnpsSurvive { maf_min: f64 },

    #[error("SNP {0} has no observed genotypes")]
    AllMissing(String),

    #[error("pedigree error: {0}")]
    Pedigree(String),

    #[error("cannot place {requested} SNPs with the blackout window; at most {max_feasible} fit")]
    Infeasible { requested: usize, max_feasible: usize },

    #[error("covariance is numerically singular: {0}")]
    Singular(String),

    #[error("variance components not separable: {0}")]
    Unidentifiable(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
