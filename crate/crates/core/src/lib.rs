//! Core library of a parallel speech-inference toolkit: multi-stream
//! spectro-temporal features, posterior stream combination, GMM acoustic
//! models, a data-parallel WFST Viterbi decoder, and offline/online speaker
//! diarization.

pub mod combination;
pub mod decoder;
pub mod diarization;
pub mod error;
pub mod feat;
pub mod frontend;
pub mod gmm;
pub mod io;
pub mod math;
pub mod synth;
pub mod workers;

pub use error::{Error, Result};
