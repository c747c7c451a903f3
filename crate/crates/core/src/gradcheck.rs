//! Central finite-difference verification of tape gradients.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{Bindings, ParamStore};
use crate::tape::{Tape, Var};

/// Which scalar coordinates to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Coordinates {
    All,
    /// At most `per_tensor` coordinates from each tensor, chosen by `seed`.
    Sample {
        per_tensor: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares analytic gradients of the scalar built by `f` against the
/// fourth-order central difference
/// `(f(w - 2e) - 8 f(w - e) + 8 f(w + e) - f(w + 2e)) / 12e`,
/// one coordinate at a time.
///
/// The relative error of a coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
/// `f` must be deterministic.
pub fn finite_difference_check<F>(
    params: &ParamStore,
    eps: f64,
    coords: Coordinates,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape);
    let loss = f(&mut tape, &bindings)?;
    let grads = tape.backward(loss)?;
    let analytic = bindings.collect(&tape, &grads);
    drop(tape);

    let mut probe = params.clone();
    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let l = f(&mut tape, &b)?;
        Ok(tape.value(l).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    for (pi, name) in names.iter().enumerate() {
        let len = analytic[pi].len();
        let chosen: Vec<usize> = match coords {
            Coordinates::All => (0..len).collect(),
            Coordinates::Sample { per_tensor, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (pi as u64).wrapping_mul(0x9e37));
                let mut idx = sample(&mut rng, len, per_tensor.min(len)).into_vec();
                idx.sort_unstable();
                idx
            }
        };
        for c in chosen {
            let original = probe.get(name).expect("cloned store").data()[c];
            let mut at = |offset: f64| -> Result<f64> {
                probe.get_mut(name).expect("cloned store").data_mut()[c] = original + offset;
                eval(&probe)
            };
            let (p1, m1) = (at(eps)?, at(-eps)?);
            let (p2, m2) = (at(2.0 * eps)?, at(-2.0 * eps)?);
            probe.get_mut(name).expect("cloned store").data_mut()[c] = original;

            let numeric = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * eps);
            let a = analytic[pi].data()[c];
            let denom = libm::fabs(a).max(libm::fabs(numeric)).max(1e-8);
            let rel = libm::fabs(a - numeric) / denom;
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                }
                report.worst = Some((name.clone(), c));
            }
        }
    }
    Ok(report)
}
