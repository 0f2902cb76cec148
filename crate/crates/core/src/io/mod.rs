//! Tensor files and run configuration.

pub mod config;
pub mod tensor_file;

pub use config::{load_config, parse_config, AnalysisOptions, BenchOptions, Paths, RunConfig, Seeds, SCHEMA_VERSION};
pub use tensor_file::{decode, encode, level_path, read_tensor, write_tensor, DynTensor};
