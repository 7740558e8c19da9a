//! Built-in experiments: the model and the named experiment registry.

pub mod model;

pub use model::{EmbedGru, EmbedGruConfig};
