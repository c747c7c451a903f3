//! Fixed-step explicit integrators recorded on a tape.
//!
//! The state is an `n x d` matrix whose rows evolve independently under the
//! same dynamics, so a whole batch of initial vectors is integrated in one
//! pass. Gradients flow through every step (discretize-then-optimize).

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

/// Dynamics `dh/dt = f(h, t)`. Parameters are captured by the implementor
/// as tape handles.
pub trait OdeFunc {
    fn eval(&self, tape: &mut Tape, h: Var, t: f64) -> Result<Var>;
}

impl<F> OdeFunc for F
where
    F: Fn(&mut Tape, Var, f64) -> Result<Var>,
{
    fn eval(&self, tape: &mut Tape, h: Var, t: f64) -> Result<Var> {
        self(tape, h, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveSpec {
    pub method: Method,
    pub step: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl SolveSpec {
    pub fn new(method: Method, step: f64, t_start: f64, t_end: f64) -> Result<Self> {
        let spec = Self {
            method,
            step,
            t_start,
            t_end,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "step size must lie in (0, 1], got {}",
                self.step
            )));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_end < self.t_start {
            return Err(Error::Config(alloc::format!(
                "invalid time segment [{}, {}]",
                self.t_start,
                self.t_end
            )));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened when the segment is not a
    /// whole multiple of the step size.
    pub fn num_steps(&self) -> usize {
        let span = self.t_end - self.t_start;
        if span <= 0.0 {
            return 0;
        }
        let exact = span / self.step;
        let rounded = libm::round(exact);
        if libm::fabs(exact - rounded) <= 1e-9 * exact.max(1.0) {
            rounded as usize
        } else {
            libm::ceil(exact) as usize
        }
    }
}

/// `h + s f(h, t)`
pub fn euler_step(tape: &mut Tape, h: Var, t: f64, s: f64, f: &impl OdeFunc) -> Result<Var> {
    let k = f.eval(tape, h, t)?;
    let ks = tape.scale(k, s);
    tape.add(h, ks)
}

/// Classic four-stage Runge-Kutta step.
pub fn rk4_step(tape: &mut Tape, h: Var, t: f64, s: f64, f: &impl OdeFunc) -> Result<Var> {
    let half = 0.5 * s;
    let f1 = f.eval(tape, h, t)?;
    let d1 = tape.scale(f1, half);
    let h2 = tape.add(h, d1)?;
    let f2 = f.eval(tape, h2, t + half)?;
    let d2 = tape.scale(f2, half);
    let h3 = tape.add(h, d2)?;
    let f3 = f.eval(tape, h3, t + half)?;
    let d3 = tape.scale(f3, s);
    let h4 = tape.add(h, d3)?;
    let f4 = f.eval(tape, h4, t + s)?;

    let f2x2 = tape.scale(f2, 2.0);
    let f3x2 = tape.scale(f3, 2.0);
    let acc = tape.add(f1, f2x2)?;
    let acc = tape.add(acc, f3x2)?;
    let acc = tape.add(acc, f4)?;
    let incr = tape.scale(acc, s / 6.0);
    tape.add(h, incr)
}

/// Integrates from `spec.t_start` to `spec.t_end`.
pub fn integrate(tape: &mut Tape, h0: Var, spec: &SolveSpec, f: &impl OdeFunc) -> Result<Var> {
    spec.validate()?;
    let mut h = h0;
    let steps = spec.num_steps();
    for k in 0..steps {
        let t = spec.t_start + k as f64 * spec.step;
        let s = if k + 1 == steps {
            spec.t_end - t
        } else {
            spec.step
        };
        h = match spec.method {
            Method::Euler => euler_step(tape, h, t, s, f)?,
            Method::Rk4 => rk4_step(tape, h, t, s, f)?,
        };
        if !tape.value(h).is_finite() {
            return Err(Error::NonFinite { step: k, t });
        }
    }
    Ok(h)
}
