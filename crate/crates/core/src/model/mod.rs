//! Attention-based encoder-decoder: embeddings, stacked gated cells, global
//! attention with input feeding, and a factored generator.

pub mod backend;
pub mod config;
pub mod forward;
pub mod params;

pub use backend::{DecState, EagerBackend, EncodedBatch, ForwardBackend, StepOutput};
pub use config::{AttentionKind, CellKind, FactorSpec, ModelConfig};
pub use forward::{
    cell_step, decode_step, encode, forward_nll, init_state, register_params, CellView, DropoutCtx,
    EncodedView, ParamsView, StateView, StepOut,
};
pub use params::{CellParams, ModelParams};
