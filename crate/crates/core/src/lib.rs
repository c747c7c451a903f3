//! Allocation-only core of the LightMove next-location predictor.
//!
//! * [`tape`] and [`tensor`]: dense matrices with recorded reverse-mode
//!   differentiation.
//! * [`odeint`]: fixed-step Euler and RK4 integration through the tape.
//! * [`model`]: attentive history encoding, GRU-ODE evolution with jumps and
//!   adaptive gate generation, and the classifier head.
//! * [`data`]: check-in parsing, session segmentation, chronological splits
//!   and a synthetic taxi fleet.
//! * [`train`]: cross-entropy with L2, Adam, and the per-user training loop.
//! * [`eval`]: ranking metrics and naive baselines.
//!
//! Everything here is `no_std`; file formats, timing and the CLI live in the
//! `lightmove` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod odeint;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{HistoryBatch, Model, ModelConfig, Visit};
pub use params::{ParamKind, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
