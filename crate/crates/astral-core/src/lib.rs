//! From-scratch neural sequence tagger: embedding → gated convolution →
//! Bi-LSTM → gated convolution → linear-chain CRF, trained per sentence with
//! an optional two-round adversarial step that perturbs intermediate
//! variables along their loss gradient.
//!
//! Everything numeric is f64 with hand-written backward passes; a
//! finite-difference checker validates every layer. Training, decoding and
//! evaluation are deterministic given a seed.

pub mod adversarial;
pub mod bilstm;
pub mod checkpoint;
pub mod crf;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod gcnn;
pub mod gradcheck;
pub mod layer;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{init, InitScheme, Tensor};
