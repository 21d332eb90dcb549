//! Synthetic datasets, key files and seeded operation streams.

mod datasets;
mod keyfile;
mod ops;

pub use datasets::{gen_dataset, longlat_key, DatasetKind, DatasetSpec};
pub use keyfile::{read_keys, read_keys_from, write_keys, write_keys_to, HeaderMode};
pub use ops::{gen_ops, Mix, Workload, WorkloadSpec, DEFAULT_ZIPF_S};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("key file: {0}")]
    FileFormat(String),
    #[error("could only draw {got} unique keys of {want}")]
    InsufficientUnique { got: usize, want: usize },
    #[error("workload needs {want} insert keys but only {have} are left")]
    ExhaustedInserts { want: usize, have: usize },
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
