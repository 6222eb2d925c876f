//! Random-forest regression with fully exposed tree internals, traversal-rate
//! trend estimators, residual-based feature importance, and the experiment
//! harnesses that compare them against the classical baselines.

pub mod attribution;
pub mod data;
pub mod error;
pub mod forest;
pub mod harness;
pub mod importance;
pub mod model_io;
pub mod rng;
pub mod synth;
pub mod trends;

pub use data::{Dataset, LoadedCsv, StandardizationParams};
pub use error::Error;
pub use forest::{Forest, ForestConfig, SplitRecord, TreeNode};
pub use rng::SeededRng;

pub type Result<T> = std::result::Result<T, Error>;
