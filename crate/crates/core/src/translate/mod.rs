//! Beam-search decoding, batched translation, teacher-forced scoring, and
//! the forward-only deployment loader.

pub mod batched;
pub mod beam;
pub mod inference;
pub mod score;

pub use batched::{translate_batch, ThroughputStats};
pub use beam::{beam_decode_group, beam_search, beam_search_with, BeamConfig, LengthNorm, ScoredHypothesis};
pub use inference::{is_well_formed, load_for_inference, InferenceModel};
pub use score::score_pair;
