use alloc::format;

use crate::error::{Error, Result};
use crate::odeint::Method;

/// Discrete update applied after each integration segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum JumpKind {
    /// Gated recurrent cell with input `j(t_k)` and hidden state `h(t_{k-1})`.
    Gru,
    /// `tanh(W j + b)`.
    Fc,
}

/// How the jump count `J` maps onto the unit interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum JumpCount {
    /// Boundaries at `k / J`, `k = 1..=J`: `J` segments and `J` jumps. With
    /// `J = 0` a single segment is integrated and no jump is applied.
    #[default]
    Exact,
    /// `J` interior boundaries at `k / (J + 1)` plus a final jump at `t = 1`.
    PlusOne,
}

/// Row-dimension resize applied before the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Resize {
    /// Keep the last `M` rows.
    #[default]
    SliceLastM,
    /// Learned `M x K` map over the last `K` rows plus a per-row bias.
    Fc,
}

/// Vertical order of the short- and long-term blocks in the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RowOrder {
    /// Long-term rows first, so the most recent positions end up last.
    #[default]
    LongThenShort,
    ShortThenLong,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Architecture {
    #[default]
    LightMove,
    /// Plain recurrent baseline sharing the embeddings and classifier head.
    PlainGru,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub method: Method,
    pub step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Euler,
            step: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub num_locations: usize,
    pub num_users: usize,
    pub num_time_slots: usize,
    pub loc_dim: usize,
    pub time_dim: usize,
    pub user_dim: usize,
    /// Maximum short-term session length `K`.
    pub session_len: usize,
    /// Number of predicted future steps `M`.
    pub horizon: usize,
    pub jumps: usize,
    pub jump_kind: JumpKind,
    pub jump_count: JumpCount,
    pub solver: SolverConfig,
    pub fine_tune: bool,
    pub dropout: f64,
    pub resize: Resize,
    pub row_order: RowOrder,
    /// Half-width of the uniform initialisation range.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::LightMove,
            num_locations: 1,
            num_users: 1,
            num_time_slots: 24,
            loc_dim: 50,
            time_dim: 10,
            user_dim: 20,
            session_len: 9,
            horizon: 1,
            jumps: 2,
            jump_kind: JumpKind::Gru,
            jump_count: JumpCount::Exact,
            solver: SolverConfig::default(),
            fine_tune: false,
            dropout: 0.3,
            resize: Resize::SliceLastM,
            row_order: RowOrder::LongThenShort,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    /// Width of every evolved state row: location plus time embedding.
    pub fn hidden_dim(&self) -> usize {
        self.loc_dim + self.time_dim
    }

    /// Width of a classifier input row.
    pub fn head_dim(&self) -> usize {
        self.hidden_dim() + self.user_dim
    }

    /// Number of jump applications over `[0, 1]`.
    pub fn num_jumps(&self) -> usize {
        match self.jump_count {
            JumpCount::Exact => self.jumps,
            JumpCount::PlusOne => self.jumps + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.num_locations == 0 || self.num_users == 0 || self.num_time_slots == 0 {
            return fail(format!(
                "vocabulary sizes must be positive (locations {}, users {}, time slots {})",
                self.num_locations, self.num_users, self.num_time_slots
            ));
        }
        if self.hidden_dim() == 0 {
            return fail("location and time embedding widths sum to zero".into());
        }
        if self.horizon == 0 || self.session_len == 0 {
            return fail("session length and horizon must be positive".into());
        }
        if self.horizon > self.session_len {
            return fail(format!(
                "horizon M = {} exceeds session length K = {}",
                self.horizon, self.session_len
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidRate(self.dropout));
        }
        if !(self.solver.step > 0.0 && self.solver.step <= 1.0) {
            return fail(format!("solver step {} outside (0, 1]", self.solver.step));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return fail(format!("invalid init scale {}", self.init_scale));
        }
        Ok(())
    }
}
