//! Versioned binary file formats (model and dataset), written atomically.

pub mod dataset;
pub mod model_file;

pub use dataset::{load_dataset, save_dataset, Dataset};
pub use model_file::{
    atomic_write, load_model, read_model_from, save_model, write_model_to, Precision, SavedModel,
};
