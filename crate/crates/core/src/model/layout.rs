//! Parameter layout, initialisation and closed-form parameter counting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, JumpKind, ModelConfig, Resize};
use crate::error::{Error, Result};
use crate::params::{ParamKind, ParamStore};
use crate::tensor::Tensor;

pub const LOC_EMBED: &str = "embed.location";
pub const TIME_EMBED: &str = "embed.time";
pub const USER_EMBED: &str = "embed.user";
pub const CLASSIFIER_W: &str = "classifier.weight";
pub const CLASSIFIER_B: &str = "classifier.bias";
pub const RESIZE_W: &str = "resize.weight";
pub const RESIZE_B: &str = "resize.bias";
pub const GEN_W_WEIGHT: &str = "gen.w.weight";
pub const GEN_W_BIAS: &str = "gen.w.bias";
pub const GEN_U_WEIGHT: &str = "gen.u.weight";
pub const GEN_U_BIAS: &str = "gen.u.bias";
pub const GEN_B_WEIGHT: &str = "gen.b.weight";
pub const GEN_B_BIAS: &str = "gen.b.bias";
pub const FC_JUMP_W: &str = "jump.w";
pub const FC_JUMP_B: &str = "jump.b";

/// Prefix of the ODE function gates.
pub const ODE: &str = "ode";
/// Prefix of the GRU jump cell.
pub const JUMP: &str = "jump";
/// Prefix of the plain recurrent baseline cell.
pub const RECURRENT: &str = "gru";

/// Names of the nine tensors of a gated block, `(w, u, b)` for each of the
/// reset, update and candidate gates.
pub fn gate_names(prefix: &str) -> [[String; 3]; 3] {
    ["r", "z", "m"].map(|g| {
        [
            format!("{prefix}.w_{g}"),
            format!("{prefix}.u_{g}"),
            format!("{prefix}.b_{g}"),
        ]
    })
}

/// How a freshly created tensor is filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Uniform,
    Zero,
    /// Identity on the leading square block, zero elsewhere.
    LeadingIdentity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

fn spec(
    name: impl Into<String>,
    kind: ParamKind,
    rows: usize,
    cols: usize,
    init: Init,
) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        kind,
        rows,
        cols,
        init,
    }
}

fn gated_block(out: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    for [w, u, b] in gate_names(prefix) {
        out.push(spec(w, ParamKind::Weight, d, d, Init::Uniform));
        out.push(spec(u, ParamKind::Weight, d, d, Init::Uniform));
        out.push(spec(b, ParamKind::Bias, 1, d, Init::Zero));
    }
}

/// Every tensor the configuration needs, in store order.
pub fn layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.hidden_dim();
    let mut out = Vec::new();
    out.push(spec(
        LOC_EMBED,
        ParamKind::Embedding,
        cfg.num_locations,
        cfg.loc_dim,
        Init::Uniform,
    ));
    out.push(spec(
        TIME_EMBED,
        ParamKind::Embedding,
        cfg.num_time_slots,
        cfg.time_dim,
        Init::Uniform,
    ));
    out.push(spec(
        USER_EMBED,
        ParamKind::Embedding,
        cfg.num_users,
        cfg.user_dim,
        Init::Uniform,
    ));
    match cfg.architecture {
        Architecture::LightMove => {
            gated_block(&mut out, ODE, d);
            if cfg.num_jumps() > 0 {
                match cfg.jump_kind {
                    JumpKind::Gru => gated_block(&mut out, JUMP, d),
                    JumpKind::Fc => {
                        out.push(spec(FC_JUMP_W, ParamKind::Weight, d, d, Init::Uniform));
                        out.push(spec(FC_JUMP_B, ParamKind::Bias, 1, d, Init::Zero));
                    }
                }
            }
            if cfg.fine_tune {
                let d2 = d * d;
                out.push(spec(
                    GEN_W_WEIGHT,
                    ParamKind::Weight,
                    d2,
                    d2 + d,
                    Init::LeadingIdentity,
                ));
                out.push(spec(GEN_W_BIAS, ParamKind::Bias, 1, d2, Init::Zero));
                out.push(spec(
                    GEN_U_WEIGHT,
                    ParamKind::Weight,
                    d2,
                    d2 + d,
                    Init::LeadingIdentity,
                ));
                out.push(spec(GEN_U_BIAS, ParamKind::Bias, 1, d2, Init::Zero));
                out.push(spec(
                    GEN_B_WEIGHT,
                    ParamKind::Weight,
                    d,
                    2 * d,
                    Init::LeadingIdentity,
                ));
                out.push(spec(GEN_B_BIAS, ParamKind::Bias, 1, d, Init::Zero));
            }
            if cfg.resize == Resize::Fc {
                out.push(spec(
                    RESIZE_W,
                    ParamKind::Weight,
                    cfg.horizon,
                    cfg.session_len,
                    Init::Uniform,
                ));
                out.push(spec(RESIZE_B, ParamKind::Bias, cfg.horizon, 1, Init::Zero));
            }
        }
        Architecture::PlainGru => gated_block(&mut out, RECURRENT, d),
    }
    out.push(spec(
        CLASSIFIER_W,
        ParamKind::Weight,
        cfg.num_locations,
        cfg.head_dim(),
        Init::Uniform,
    ));
    out.push(spec(
        CLASSIFIER_B,
        ParamKind::Bias,
        1,
        cfg.num_locations,
        Init::Zero,
    ));
    out
}

/// Fresh parameters: uniform in `±init_scale` for embeddings and weights,
/// zero biases, and identity-initialised generator maps.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for p in layout(cfg) {
        let mut t = Tensor::zeros(p.rows, p.cols);
        match p.init {
            Init::Zero => {}
            Init::Uniform => {
                let a = cfg.init_scale;
                if a > 0.0 {
                    for v in t.data_mut() {
                        *v = rng.gen_range(-a..a);
                    }
                }
            }
            Init::LeadingIdentity => {
                for i in 0..p.rows.min(p.cols) {
                    t.set(i, i, 1.0);
                }
            }
        }
        store.insert(p.name, p.kind, t);
    }
    Ok(store)
}

/// Checks that `store` holds exactly the tensors `cfg` requires.
pub fn check_params(cfg: &ModelConfig, store: &ParamStore) -> Result<()> {
    let expected = layout(cfg);
    if expected.len() != store.len() {
        return Err(Error::Config(format!(
            "expected {} parameter tensors, found {}",
            expected.len(),
            store.len()
        )));
    }
    for (want, have) in expected.iter().zip(store.iter()) {
        if want.name != have.name || [want.rows, want.cols] != have.value.shape() {
            return Err(Error::Config(format!(
                "parameter {} {}x{} does not match {} {:?}",
                want.name,
                want.rows,
                want.cols,
                have.name,
                have.value.shape()
            )));
        }
    }
    Ok(())
}

/// Closed-form number of trainable scalars.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let d = cfg.hidden_dim();
    let x = cfg.num_locations;
    let gated = 3 * (2 * d * d + d);
    let embeddings =
        x * cfg.loc_dim + cfg.num_time_slots * cfg.time_dim + cfg.num_users * cfg.user_dim;
    let head = cfg.head_dim() * x + x;
    let body = match cfg.architecture {
        Architecture::PlainGru => gated,
        Architecture::LightMove => {
            let jumps = match (cfg.num_jumps(), cfg.jump_kind) {
                (0, _) => 0,
                (_, JumpKind::Gru) => gated,
                (_, JumpKind::Fc) => d * d + d,
            };
            let generator = if cfg.fine_tune {
                generator_params(d)
            } else {
                0
            };
            let resize = match cfg.resize {
                Resize::SliceLastM => 0,
                Resize::Fc => cfg.horizon * cfg.session_len + cfg.horizon,
            };
            gated + jumps + generator + resize
        }
    };
    embeddings + body + head
}

/// Scalars of the adaptive generator: two affine maps `(d² + d) -> d²` and
/// one affine map `2d -> d`.
pub fn generator_params(d: usize) -> usize {
    let d2 = d * d;
    2 * ((d2 + d) * d2 + d2) + (2 * d * d + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::JumpCount;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_locations: 3,
            num_users: 1,
            num_time_slots: 2,
            loc_dim: 1,
            time_dim: 1,
            user_dim: 1,
            session_len: 1,
            horizon: 1,
            jumps: 0,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn hand_count() {
        assert_eq!(count_params(&tiny()), 48);
        assert_eq!(init_params(&tiny(), 0).unwrap().num_scalars(), 48);
    }

    #[test]
    fn feature_terms_are_additive() {
        let base = tiny();
        let d = base.hidden_dim();
        let ft = ModelConfig {
            fine_tune: true,
            ..base.clone()
        };
        assert_eq!(count_params(&ft) - count_params(&base), generator_params(d));
        let j2 = ModelConfig {
            jumps: 2,
            ..base.clone()
        };
        assert_eq!(count_params(&j2) - count_params(&base), 3 * (2 * d * d + d));
        let fc = ModelConfig {
            jumps: 2,
            jump_kind: JumpKind::Fc,
            ..base.clone()
        };
        assert_eq!(count_params(&fc) - count_params(&base), d * d + d);
        let plus_one = ModelConfig {
            jump_count: JumpCount::PlusOne,
            ..base
        };
        assert_eq!(plus_one.num_jumps(), 1);
    }

    #[test]
    fn generator_starts_at_identity() {
        let cfg = ModelConfig {
            fine_tune: true,
            ..tiny()
        };
        let p = init_params(&cfg, 1).unwrap();
        let w = p.get(GEN_W_WEIGHT).unwrap();
        assert_eq!(w.shape(), [4, 6]);
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(w.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        check_params(&cfg, &p).unwrap();
        assert!(check_params(&tiny(), &p).is_err());
    }
}
