//! GRU-style ODE function, jump cells and adaptive z-gate generation.

use super::config::ModelConfig;
use super::layout::{
    gate_names, GEN_B_BIAS, GEN_B_WEIGHT, GEN_U_BIAS, GEN_U_WEIGHT, GEN_W_BIAS, GEN_W_WEIGHT,
};
use crate::error::{Error, Result};
use crate::odeint::OdeFunc;
use crate::params::Bindings;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct Gate {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

/// Reset, update and candidate gates of a gated block.
#[derive(Clone, Copy, Debug)]
pub struct GatedWeights {
    pub r: Gate,
    pub z: Gate,
    pub m: Gate,
}

impl GatedWeights {
    pub fn bind(params: &Bindings, prefix: &str) -> Result<Self> {
        let [r, z, m] = gate_names(prefix);
        let gate = |[w, u, b]: [alloc::string::String; 3]| -> Result<Gate> {
            Ok(Gate {
                w: params.get(&w)?,
                u: params.get(&u)?,
                b: params.get(&b)?,
            })
        };
        Ok(Self {
            r: gate(r)?,
            z: gate(z)?,
            m: gate(m)?,
        })
    }
}

/// Per-row replacement of the update gate: `w` and `u` are `n x d²`
/// (row-major `d x d` matrices), `b` is `n x d`.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveGate {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

/// `W x + U y + b` for a batch of row vectors.
fn affine2(tape: &mut Tape, w: Var, x: Var, u: Var, y: Var, b: Var) -> Result<Var> {
    let wx = tape.matmul_bt(x, w)?;
    let uy = tape.matmul_bt(y, u)?;
    let s = tape.add(wx, uy)?;
    tape.add_row(s, b)
}

fn one_minus(tape: &mut Tape, x: Var) -> Var {
    let neg = tape.scale(x, -1.0);
    tape.add_scalar(neg, 1.0)
}

/// The ODE function
///
/// ```text
/// r = σ(W_r h + U_r h + b_r)
/// z = σ(W_z h + U_z h + b_z)
/// m = tanh(W_m h + U_m (r ⊙ h) + b_m)
/// dh/dt = (1 - z) ⊙ (m - h)
/// ```
///
/// applied to every row of the state. When `adaptive` is set, the update
/// gate uses the generated per-row tensors instead of the fixed ones.
#[derive(Clone, Copy, Debug)]
pub struct GruOde {
    pub gates: GatedWeights,
    pub adaptive: Option<AdaptiveGate>,
}

impl GruOde {
    pub fn derivative(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let GatedWeights { r, z, m } = self.gates;
        let r_pre = affine2(tape, r.w, h, r.u, h, r.b)?;
        let r_gate = tape.sigmoid(r_pre);
        let z_pre = match self.adaptive {
            None => affine2(tape, z.w, h, z.u, h, z.b)?,
            Some(a) => {
                let wh = tape.rowwise_matvec(a.w, h)?;
                let uh = tape.rowwise_matvec(a.u, h)?;
                let s = tape.add(wh, uh)?;
                tape.add(s, a.b)?
            }
        };
        let z_gate = tape.sigmoid(z_pre);
        let rh = tape.hadamard(r_gate, h)?;
        let m_pre = affine2(tape, m.w, h, m.u, rh, m.b)?;
        let candidate = tape.tanh(m_pre);
        let keep = one_minus(tape, z_gate);
        let delta = tape.sub(candidate, h)?;
        tape.hadamard(keep, delta)
    }
}

impl OdeFunc for GruOde {
    fn eval(&self, tape: &mut Tape, h: Var, _t: f64) -> Result<Var> {
        self.derivative(tape, h)
    }
}

/// Standard gated recurrent cell: `(1 - z) ⊙ n + z ⊙ h` with
/// `n = tanh(W_n x + U_n (r ⊙ h) + b_n)`.
pub fn gru_cell(tape: &mut Tape, w: &GatedWeights, x: Var, h: Var) -> Result<Var> {
    let r_pre = affine2(tape, w.r.w, x, w.r.u, h, w.r.b)?;
    let r = tape.sigmoid(r_pre);
    let z_pre = affine2(tape, w.z.w, x, w.z.u, h, w.z.b)?;
    let z = tape.sigmoid(z_pre);
    let rh = tape.hadamard(r, h)?;
    let n_pre = affine2(tape, w.m.w, x, w.m.u, rh, w.m.b)?;
    let n = tape.tanh(n_pre);
    let keep = one_minus(tape, z);
    let fresh = tape.hadamard(keep, n)?;
    let carried = tape.hadamard(z, h)?;
    tape.add(fresh, carried)
}

/// `tanh(W j + b)`
pub fn fc_jump(tape: &mut Tape, w: Var, b: Var, j: Var) -> Result<Var> {
    let lin = tape.matmul_bt(j, w)?;
    let lin = tape.add_row(lin, b)?;
    Ok(tape.tanh(lin))
}

/// Generates the update-gate tensors from the fixed ones and each row of
/// `h0`:
///
/// ```text
/// W'_z = resize(FC_W(vec(W_z) ⊕ h0))
/// U'_z = resize(FC_U(vec(U_z) ⊕ h0))
/// b'_z = FC_b(b_z ⊕ h0)
/// ```
///
/// Each affine map is evaluated as two blocks so that the part acting on the
/// shared fixed tensor is computed once for the whole batch.
pub fn generate_adaptive(
    tape: &mut Tape,
    params: &Bindings,
    cfg: &ModelConfig,
    fixed_z: &Gate,
    h0: Var,
) -> Result<AdaptiveGate> {
    if !cfg.fine_tune {
        return Err(Error::FineTuneDisabled);
    }
    let d = cfg.hidden_dim();
    let d2 = d * d;
    let w = generated_matrix(tape, params, fixed_z.w, GEN_W_WEIGHT, GEN_W_BIAS, h0, d2, d)?;
    let u = generated_matrix(tape, params, fixed_z.u, GEN_U_WEIGHT, GEN_U_BIAS, h0, d2, d)?;
    let b = generated_matrix(tape, params, fixed_z.b, GEN_B_WEIGHT, GEN_B_BIAS, h0, d, d)?;
    Ok(AdaptiveGate { w, u, b })
}

#[allow(clippy::too_many_arguments)]
fn generated_matrix(
    tape: &mut Tape,
    params: &Bindings,
    fixed: Var,
    weight: &str,
    bias: &str,
    h0: Var,
    flat: usize,
    d: usize,
) -> Result<Var> {
    let weight = params.get(weight)?;
    let bias = params.get(bias)?;
    let flat_fixed = tape.reshape(fixed, 1, flat)?;
    let on_fixed = tape.slice_cols(weight, 0, flat)?;
    let on_state = tape.slice_cols(weight, flat, d)?;
    let shared = tape.matmul_bt(flat_fixed, on_fixed)?;
    let shared = tape.add(shared, bias)?;
    let per_row = tape.matmul_bt(h0, on_state)?;
    tape.add_row(per_row, shared)
}
