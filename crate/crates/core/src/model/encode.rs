//! History encoders: attentive short-term block, attention-free long-term
//! block, and their stacking into the initial ODE state.

use alloc::vec::Vec;

use rand::RngCore;

use super::config::{ModelConfig, RowOrder};
use super::layout::{LOC_EMBED, TIME_EMBED};
use super::Visit;
use crate::error::{Error, Result};
use crate::params::Bindings;
use crate::tape::{Axis, Tape, Var};

/// Location embedding concatenated with time-slot embedding, with dropout.
pub fn lookup(
    tape: &mut Tape,
    params: &Bindings,
    cfg: &ModelConfig,
    visits: &[Visit],
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let locations: Vec<usize> = visits.iter().map(|v| v.location).collect();
    let slots: Vec<usize> = visits.iter().map(|v| v.slot).collect();
    let loc = tape.gather_rows(params.get(LOC_EMBED)?, &locations)?;
    let time = tape.gather_rows(params.get(TIME_EMBED)?, &slots)?;
    let joined = tape.concat(loc, time, Axis::Cols)?;
    tape.dropout(joined, cfg.dropout, rng)
}

/// `H_S = softmax(E_S E_Sᵀ) E_S` over the recent session.
pub fn encode_short(
    tape: &mut Tape,
    params: &Bindings,
    cfg: &ModelConfig,
    short: &[Visit],
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    if short.is_empty() {
        return Err(Error::Empty("short-term session"));
    }
    let e = lookup(tape, params, cfg, short, rng)?;
    let scores = tape.matmul_bt(e, e)?;
    let attention = tape.row_softmax(scores);
    tape.matmul(attention, e)
}

/// `H_L = E_L`; an empty history gives a `0 x d` tensor.
pub fn encode_long(
    tape: &mut Tape,
    params: &Bindings,
    cfg: &ModelConfig,
    long: &[Visit],
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    lookup(tape, params, cfg, long, rng)
}

/// Stacks the two blocks in the requested order.
pub fn build_init(tape: &mut Tape, short: Var, long: Var, order: RowOrder) -> Result<Var> {
    match order {
        RowOrder::ShortThenLong => tape.concat(short, long, Axis::Rows),
        RowOrder::LongThenShort => tape.concat(long, short, Axis::Rows),
    }
}
