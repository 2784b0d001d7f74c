//! Command-line driver for sector-dmrg: solving, benchmarks, power-law
//! fits and the oracle self-check.

pub mod bench;
pub mod check;
pub mod cli;
pub mod config;
pub mod fit;
pub mod records;

pub use cli::{cli_run, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
pub use fit::{fit_power_law, PowerLaw};
pub use records::{read_csv, write_csv, BenchRecord};
