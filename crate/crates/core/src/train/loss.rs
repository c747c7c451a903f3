use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{Bindings, ParamKind, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Sum of squared entries over weight tensors; embeddings and biases are
/// not penalized.
pub fn l2_penalty(params: &ParamStore) -> f64 {
    params
        .iter()
        .filter(|p| p.kind == ParamKind::Weight)
        .map(|p| p.value.sum_squares())
        .sum()
}

/// Mean negative log-probability of the known targets plus `beta` times the
/// weight penalty. `prediction` holds probabilities, one row per step.
pub fn loss(
    prediction: &Tensor,
    targets: &[Option<usize>],
    params: &ParamStore,
    beta: f64,
) -> Result<f64> {
    if prediction.rows() != targets.len() {
        return Err(Error::Shape {
            op: "loss",
            left: prediction.shape(),
            right: [targets.len(), 1],
        });
    }
    let terms: Vec<f64> = targets
        .iter()
        .enumerate()
        .filter_map(|(r, t)| t.map(|t| (r, t)))
        .map(|(r, t)| {
            if t >= prediction.cols() {
                return Err(Error::IndexOutOfRange {
                    what: "target location",
                    index: t,
                    bound: prediction.cols(),
                });
            }
            Ok(-libm::log(prediction.get(r, t)))
        })
        .collect::<Result<_>>()?;
    if terms.is_empty() {
        return Err(Error::AllTargetsUnknown);
    }
    let data = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(data + beta * l2_penalty(params))
}

/// Differentiable training objective on logits: cross-entropy plus the L2
/// penalty over bound weight tensors.
pub fn objective(
    tape: &mut Tape,
    params: &Bindings,
    logits: Var,
    targets: &[Option<usize>],
    beta: f64,
) -> Result<Var> {
    let data = tape.cross_entropy(logits, targets)?;
    if beta == 0.0 {
        return Ok(data);
    }
    let mut total = data;
    for (_, kind, v) in params.iter() {
        if kind == ParamKind::Weight {
            let sq = tape.sum_squares(v);
            let weighted = tape.scale(sq, beta);
            total = tape.add(total, weighted)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn store() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", ParamKind::Weight, Tensor::row(&[1.0, -2.0]));
        p.insert("e", ParamKind::Embedding, Tensor::row(&[5.0]));
        p.insert("b", ParamKind::Bias, Tensor::row(&[7.0]));
        p
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let p = Tensor::from_rows(&[&[0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(loss(&p, &[Some(1)], &store(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prediction() {
        let p = Tensor::filled(2, 4, 0.25);
        assert_abs_diff_eq!(
            loss(&p, &[Some(0), Some(3)], &store(), 0.0).unwrap(),
            core::f64::consts::LN_2 * 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn penalty_only_counts_weights() {
        let p = Tensor::from_rows(&[&[1.0, 0.0]]).unwrap();
        let beta = 1e-5;
        // 1^2 + (-2)^2
        assert_eq!(loss(&p, &[Some(0)], &store(), beta).unwrap(), beta * 5.0);
    }

    #[test]
    fn unknown_targets() {
        let p = Tensor::filled(2, 2, 0.5);
        assert_abs_diff_eq!(
            loss(&p, &[None, Some(1)], &store(), 0.0).unwrap(),
            core::f64::consts::LN_2
        );
        assert!(matches!(
            loss(&p, &[None, None], &store(), 0.0),
            Err(Error::AllTargetsUnknown)
        ));
    }

    #[test]
    fn tape_objective_matches_value_loss() {
        let params = store();
        let mut tape = Tape::new();
        let b = params.bind(&mut tape);
        let logits = tape.constant(Tensor::from_rows(&[&[0.3, -0.1, 0.8]]).unwrap());
        let l = objective(&mut tape, &b, logits, &[Some(2)], 0.01).unwrap();
        let probs = crate::tensor::row_softmax(tape.value(logits));
        let expected = loss(&probs, &[Some(2)], &params, 0.01).unwrap();
        assert_abs_diff_eq!(tape.value(l).get(0, 0), expected, epsilon = 1e-14);
    }
}
