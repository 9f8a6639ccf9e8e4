//! Encoder-decoder GRU models with unidirectional (EDU) and bidirectional
//! (EDB) decoders, their exact BPTT gradients, training and model banks.
//!
//! The encoder runs over `(Z_j, Z_j^pw)` for `j = m, m-1, ..., 1`. Its final
//! state, a one-hot of `m` within the model's bank and the scaled query time
//! form the append-block context `E_a`. The decoder runs over the `K = N_s - m`
//! downstream sections; step `i` sees `[Z^pv, Z^pw, T^e:pv, T^e:pw]` of section
//! `m + i` concatenated with `E_a`, starting from `tanh(W_e·E_a + b_e)`. The
//! bidirectional decoder runs a second GRU from section `N_s` back to `m + 1`
//! from the same initial state and concatenates both states before the
//! output map.

mod bank;
pub mod checkpoint;
mod inputs;
mod model;
mod norm;
mod train;

pub use bank::{Bank, BankLayout, ModelBank, Prediction};
pub use checkpoint::{load_bank, load_model, save_bank, save_model, Checkpoint};
pub use inputs::{DecoderStepInput, EncoderStepInput, QueryInputs};
pub use model::{mse, Context, Dense, EdModel, EdParams, ModelDims, ModelGrads, ModelKind, DEC_EXO_WIDTH, ENC_INPUT_WIDTH};
pub use norm::{MinMax, NormStats, ZScore};
pub use train::{train_bank, train_model, BankOutcome, BankSpec, EpochLoss, TrainConfig, TrainReport};

/// Default hidden widths: the bidirectional decoder is narrower so that its
/// parameter count stays within 10% below the unidirectional decoder's.
pub const DEFAULT_ENC_HIDDEN: usize = 32;
pub const DEFAULT_EDU_HIDDEN: usize = 32;
pub const DEFAULT_EDB_HIDDEN: usize = 19;
