//! Network description, accounting and execution.

pub mod io;
pub mod model;
pub mod ops;
pub mod plan;
pub mod runner;

pub use io::{load_model, read_image, save_model, write_image};
pub use model::{cifar10, LayerKind, LayerSpec, LutSpec, Model, ModelBuilder, Weighted};
pub use ops::{count_ops, format_ops, OpCount};
pub use plan::{plan_memory, Im2col, MemoryPlan};
pub use runner::{run, run_batch, run_reference, Execution, RunOutput, Runner};
