//! Persian grapheme-to-phoneme toolkit built around a one-character-per-phoneme
//! intermediate alphabet.

pub mod codec;
pub mod corpus;
pub mod homograph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod provenance;
pub mod scalar;
pub mod tokenizer;

pub use scalar::{DType, Scalar};

/// Transducer with 32-bit parameters, the checkpoint default.
pub type Transducer = model::TransducerModel<f32>;
/// Transducer with 64-bit parameters, used for tight gradient checks.
pub type Transducer64 = model::TransducerModel<f64>;
