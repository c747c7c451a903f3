//! Variant codes such as `G2E` or `L5RF`: jump cell (`G` GRU, `L` linear
//! with tanh), number of jumps, solver (`E` Euler, `R` RK4) and an optional
//! `F` for adaptive gate generation.

use std::fmt;
use std::str::FromStr;

use lightmove_core::model::{JumpKind, ModelConfig};
use lightmove_core::odeint::Method;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub jump_kind: JumpKind,
    pub jumps: usize,
    pub method: Method,
    pub fine_tune: bool,
}

impl Variant {
    pub fn apply(&self, cfg: &mut ModelConfig) {
        cfg.jump_kind = self.jump_kind;
        cfg.jumps = self.jumps;
        cfg.solver.method = self.method;
        cfg.fine_tune = self.fine_tune;
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = match self.jump_kind {
            JumpKind::Gru => 'G',
            JumpKind::Fc => 'L',
        };
        let solver = match self.method {
            Method::Euler => 'E',
            Method::Rk4 => 'R',
        };
        let ft = if self.fine_tune { "F" } else { "" };
        write!(f, "{cell}{}{solver}{ft}", self.jumps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadVariant(pub String);

impl fmt::Display for BadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown variant {:?}: expected <G|L><jumps><E|R>[F], e.g. G0E, G2E, G5E, L2E, G2R, G2EF",
            self.0
        )
    }
}

impl std::error::Error for BadVariant {}

impl FromStr for Variant {
    type Err = BadVariant;

    fn from_str(s: &str) -> Result<Self, BadVariant> {
        let bad = || BadVariant(s.to_string());
        let mut chars = s.chars();
        let jump_kind = match chars.next() {
            Some('G') => JumpKind::Gru,
            Some('L') => JumpKind::Fc,
            _ => return Err(bad()),
        };
        let rest = chars.as_str();
        let digits = rest.chars().take_while(char::is_ascii_digit).count();
        let jumps = rest[..digits].parse().map_err(|_| bad())?;
        let (method, fine_tune) = match &rest[digits..] {
            "E" => (Method::Euler, false),
            "R" => (Method::Rk4, false),
            "EF" => (Method::Euler, true),
            "RF" => (Method::Rk4, true),
            _ => return Err(bad()),
        };
        Ok(Self {
            jump_kind,
            jumps,
            method,
            fine_tune,
        })
    }
}
