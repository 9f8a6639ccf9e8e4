//! Bus travel-time forecasting with GRU encoder-decoder models.

// Index loops walk several per-step arrays in lockstep, and `!(x > 0.0)`
// deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataprep;
pub mod error;
pub mod evalkit;
pub mod gru;
pub mod numkit;
pub mod pipeline;
pub mod seq2seq;
pub mod simulator;

pub use config::RunConfig;
pub use error::{Error, Result};
