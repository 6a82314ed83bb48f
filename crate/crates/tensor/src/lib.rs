//! Dense f64 tensors, eager kernels, a tape-based reverse-mode autodiff
//! engine, and a liveness-based buffer-sharing planner for unrolled
//! recurrent graphs.

mod error;
mod tensor;

pub mod engine;
pub mod kernels;
pub mod plan;
pub mod tape;

pub use engine::{EagerEngine, Engine, TapeEngine};
pub use error::{TensorError, TensorResult};
pub use plan::{plan_buffer_sharing, run_naive, run_with_plan, ArenaStats, SharingPlan};
pub use tape::{backward, Bindings, GradientSet, NodeId, Op, Tape, ValueSource};
pub use tensor::Tensor;
