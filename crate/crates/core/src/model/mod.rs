//! The LightMove network.
//!
//! `forward` composes: embedding lookup and attention over the recent
//! session, attention-free lookup of the long-term history, row stacking,
//! NODE evolution of every row with jumps between segments, and a shared
//! softmax classifier over the last rows joined with the user embedding.

pub mod config;
pub mod dynamics;
pub mod encode;
pub mod layout;

use alloc::vec::Vec;

use rand::RngCore;

pub use config::{Architecture, JumpCount, JumpKind, ModelConfig, Resize, RowOrder, SolverConfig};
pub use dynamics::{generate_adaptive, gru_cell, AdaptiveGate, Gate, GatedWeights, GruOde};
pub use encode::{build_init, encode_long, encode_short};
pub use layout::{count_params, init_params};

use crate::error::{Error, Result};
use crate::odeint::{integrate, SolveSpec};
use crate::params::{Bindings, ParamStore};
use crate::tape::{Axis, Tape, Var};
use crate::tensor::{self, Tensor};
use layout::{
    CLASSIFIER_B, CLASSIFIER_W, FC_JUMP_B, FC_JUMP_W, JUMP, ODE, RECURRENT, RESIZE_B, RESIZE_W,
    USER_EMBED,
};

/// One observed position: location index and time-of-day slot index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Visit {
    pub location: usize,
    pub slot: usize,
}

/// Model input for one user.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryBatch {
    /// Most recent session `S`, oldest first.
    pub short: Vec<Visit>,
    /// Earlier check-ins `L`, oldest first.
    pub long: Vec<Visit>,
    pub user: usize,
}

impl HistoryBatch {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.short.is_empty() {
            return Err(Error::Empty("short-term session"));
        }
        if self.short.len() > cfg.session_len {
            return Err(Error::Config(alloc::format!(
                "short-term session has {} entries, more than K = {}",
                self.short.len(),
                cfg.session_len
            )));
        }
        if self.user >= cfg.num_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: self.user,
                bound: cfg.num_users,
            });
        }
        for v in self.short.iter().chain(&self.long) {
            if v.location >= cfg.num_locations {
                return Err(Error::IndexOutOfRange {
                    what: "location",
                    index: v.location,
                    bound: cfg.num_locations,
                });
            }
            if v.slot >= cfg.num_time_slots {
                return Err(Error::IndexOutOfRange {
                    what: "time slot",
                    index: v.slot,
                    bound: cfg.num_time_slots,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.short.len() + self.long.len()
    }

    pub fn is_empty(&self) -> bool {
        self.short.is_empty() && self.long.is_empty()
    }
}

/// Integration segments over `[0, 1]`; the flag says whether a jump follows.
pub fn segments(cfg: &ModelConfig) -> Vec<(f64, f64, bool)> {
    let jumps = cfg.num_jumps();
    if jumps == 0 {
        return alloc::vec![(0.0, 1.0, false)];
    }
    (1..=jumps)
        .map(|k| {
            let t0 = (k - 1) as f64 / jumps as f64;
            let t1 = if k == jumps {
                1.0
            } else {
                k as f64 / jumps as f64
            };
            (t0, t1, true)
        })
        .collect()
}

/// Evolves every row of `h_init` from `t = 0` to `t = 1`.
pub fn evolve(tape: &mut Tape, params: &Bindings, cfg: &ModelConfig, h_init: Var) -> Result<Var> {
    if tape.value(h_init).rows() == 0 {
        return Err(Error::Empty("initial state"));
    }
    let gates = GatedWeights::bind(params, ODE)?;
    let adaptive = if cfg.fine_tune {
        Some(generate_adaptive(tape, params, cfg, &gates.z, h_init)?)
    } else {
        None
    };
    let dynamics = GruOde { gates, adaptive };
    let jump_gru = match (cfg.num_jumps(), cfg.jump_kind) {
        (0, _) | (_, JumpKind::Fc) => None,
        (_, JumpKind::Gru) => Some(GatedWeights::bind(params, JUMP)?),
    };

    let mut h = h_init;
    for (t0, t1, jump) in segments(cfg) {
        let spec = SolveSpec::new(cfg.solver.method, cfg.solver.step, t0, t1)?;
        let j = integrate(tape, h, &spec, &dynamics)?;
        h = if !jump {
            j
        } else if let Some(cell) = &jump_gru {
            gru_cell(tape, cell, j, h)?
        } else {
            dynamics::fc_jump(tape, params.get(FC_JUMP_W)?, params.get(FC_JUMP_B)?, j)?
        };
    }
    Ok(h)
}

/// Logits of the `M x |X|` prediction matrix from evolved rows `h`.
pub fn classify(
    tape: &mut Tape,
    params: &Bindings,
    cfg: &ModelConfig,
    h: Var,
    user: usize,
) -> Result<Var> {
    let n = tape.value(h).rows();
    let user_row = tape.gather_rows(params.get(USER_EMBED)?, &[user])?;
    let user_rows = tape.repeat_rows(user_row, n)?;
    let joined = tape.concat(h, user_rows, Axis::Cols)?;
    let last = match cfg.resize {
        Resize::SliceLastM => {
            if n < cfg.horizon {
                return Err(Error::Config(alloc::format!(
                    "{n} evolved rows cannot be sliced to M = {}",
                    cfg.horizon
                )));
            }
            tape.slice_rows(joined, n - cfg.horizon, cfg.horizon)?
        }
        Resize::Fc => {
            if n < cfg.session_len {
                return Err(Error::Config(alloc::format!(
                    "{n} evolved rows are fewer than the K = {} rows the resize map reads",
                    cfg.session_len
                )));
            }
            let window = tape.slice_rows(joined, n - cfg.session_len, cfg.session_len)?;
            let mixed = tape.matmul(params.get(RESIZE_W)?, window)?;
            let ones = tape.constant(Tensor::ones(1, cfg.head_dim()));
            let bias = tape.matmul(params.get(RESIZE_B)?, ones)?;
            tape.add(mixed, bias)?
        }
    };
    head(tape, params, last)
}

fn head(tape: &mut Tape, params: &Bindings, rows: Var) -> Result<Var> {
    let logits = tape.matmul_bt(rows, params.get(CLASSIFIER_W)?)?;
    tape.add_row(logits, params.get(CLASSIFIER_B)?)
}

/// Plain recurrent baseline: a GRU over `L` then `S`, the last `M` hidden
/// states joined with the user embedding, and the shared classifier.
fn recurrent_logits(
    tape: &mut Tape,
    params: &Bindings,
    cfg: &ModelConfig,
    batch: &HistoryBatch,
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let mut seq = batch.long.clone();
    seq.extend_from_slice(&batch.short);
    if seq.len() < cfg.horizon {
        return Err(Error::Config(alloc::format!(
            "sequence of {} visits is shorter than M = {}",
            seq.len(),
            cfg.horizon
        )));
    }
    let w = GatedWeights::bind(params, RECURRENT)?;
    let x = encode::lookup(tape, params, cfg, &seq, rng)?;
    // Input projections for the whole sequence at once.
    let xr = tape.matmul_bt(x, w.r.w)?;
    let xr = tape.add_row(xr, w.r.b)?;
    let xz = tape.matmul_bt(x, w.z.w)?;
    let xz = tape.add_row(xz, w.z.b)?;
    let xn = tape.matmul_bt(x, w.m.w)?;
    let xn = tape.add_row(xn, w.m.b)?;

    let d = cfg.hidden_dim();
    let mut h = tape.constant(Tensor::zeros(1, d));
    let mut tail: Vec<Var> = Vec::with_capacity(cfg.horizon);
    let start_tail = seq.len() - cfg.horizon;
    for i in 0..seq.len() {
        let r_in = tape.slice_rows(xr, i, 1)?;
        let z_in = tape.slice_rows(xz, i, 1)?;
        let n_in = tape.slice_rows(xn, i, 1)?;
        let hr = tape.matmul_bt(h, w.r.u)?;
        let r_pre = tape.add(r_in, hr)?;
        let r = tape.sigmoid(r_pre);
        let hz = tape.matmul_bt(h, w.z.u)?;
        let z_pre = tape.add(z_in, hz)?;
        let z = tape.sigmoid(z_pre);
        let rh = tape.hadamard(r, h)?;
        let hn = tape.matmul_bt(rh, w.m.u)?;
        let n_pre = tape.add(n_in, hn)?;
        let n = tape.tanh(n_pre);
        let neg = tape.scale(z, -1.0);
        let keep = tape.add_scalar(neg, 1.0);
        let fresh = tape.hadamard(keep, n)?;
        let carried = tape.hadamard(z, h)?;
        h = tape.add(fresh, carried)?;
        if i >= start_tail {
            tail.push(h);
        }
    }
    let mut stacked = tail[0];
    for &row in &tail[1..] {
        stacked = tape.concat(stacked, row, Axis::Rows)?;
    }
    let user_row = tape.gather_rows(params.get(USER_EMBED)?, &[batch.user])?;
    let user_rows = tape.repeat_rows(user_row, cfg.horizon)?;
    let joined = tape.concat(stacked, user_rows, Axis::Cols)?;
    head(tape, params, joined)
}

fn reborrow<'a>(rng: &'a mut Option<&mut dyn RngCore>) -> Option<&'a mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

/// Full forward pass producing `M x |X|` logits. Passing a generator turns
/// on dropout (training mode).
pub fn forward_logits(
    tape: &mut Tape,
    params: &Bindings,
    cfg: &ModelConfig,
    batch: &HistoryBatch,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    batch.validate(cfg)?;
    match cfg.architecture {
        Architecture::PlainGru => recurrent_logits(tape, params, cfg, batch, rng),
        Architecture::LightMove => {
            let short = encode_short(tape, params, cfg, &batch.short, reborrow(&mut rng))?;
            let long = encode_long(tape, params, cfg, &batch.long, reborrow(&mut rng))?;
            let h_init = build_init(tape, short, long, cfg.row_order)?;
            // Rows evolve independently and the classifier only reads the
            // trailing ones, so the rest are not integrated.
            let rows = tape.value(h_init).rows();
            let read = match cfg.resize {
                Resize::SliceLastM => cfg.horizon,
                Resize::Fc => cfg.session_len,
            }
            .min(rows);
            let h_init = if read < rows {
                tape.slice_rows(h_init, rows - read, read)?
            } else {
                h_init
            };
            let h = evolve(tape, params, cfg, h_init)?;
            classify(tape, params, cfg, h, batch.user)
        }
    }
}

/// Configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        layout::check_params(&config, &params)?;
        Ok(Self { config, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records the forward pass on `tape` with freshly bound parameters.
    pub fn logits(
        &self,
        tape: &mut Tape,
        batch: &HistoryBatch,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(Bindings, Var)> {
        let bindings = self.params.bind(tape);
        let logits = forward_logits(tape, &bindings, &self.config, batch, rng)?;
        Ok((bindings, logits))
    }

    /// Inference-mode prediction matrix: one distribution over locations per
    /// future step.
    pub fn predict(&self, batch: &HistoryBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (_, logits) = self.logits(&mut tape, batch, None)?;
        Ok(tensor::row_softmax(tape.value(logits)))
    }
}
