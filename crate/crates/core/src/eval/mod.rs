//! Ranking metrics, the predictor interface and naive baselines.

mod baseline;

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::model::{HistoryBatch, Model};
use crate::tensor::Tensor;

pub use baseline::{BaselineKind, FrequencyBaseline, MarkovBaseline, FREQUENCY_SMOOTHING};

/// The cutoffs reported as Hits@k.
pub const HITS_CUTOFFS: [usize; 3] = [1, 5, 10];

/// 1-based rank of `target` in `row`: one plus the entries scoring strictly
/// higher plus the tied entries with a smaller index.
pub fn rank_of_target(row: &[f64], target: usize) -> Result<usize> {
    let score = *row.get(target).ok_or(Error::IndexOutOfRange {
        what: "target location",
        index: target,
        bound: row.len(),
    })?;
    let above = row
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p > score || (p == score && i < target))
        .count();
    Ok(1 + above)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub hits1: f64,
    pub hits5: f64,
    pub hits10: f64,
    pub mrr: f64,
    /// Ranked targets, i.e. the denominator of every rate above.
    pub num_targets: usize,
}

impl Metrics {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        match k {
            1 => Some(self.hits1),
            5 => Some(self.hits5),
            10 => Some(self.hits10),
            _ => None,
        }
    }
}

/// Hits@{1,5,10} and MRR pooled over all ranks.
pub fn compute_metrics(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::Empty("ranked targets"));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(Metrics {
        hits1: hits(1),
        hits5: hits(5),
        hits10: hits(10),
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        num_targets: ranks.len(),
    })
}

/// Anything that turns a history into an `M x |X|` prediction matrix.
pub trait Predictor {
    fn name(&self) -> String;
    fn predict(&self, batch: &HistoryBatch) -> Result<Tensor>;
    fn num_params(&self) -> usize;
}

impl Predictor for Model {
    fn name(&self) -> String {
        match self.config.architecture {
            crate::model::Architecture::LightMove => "lightmove".to_string(),
            crate::model::Architecture::PlainGru => "plain_gru".to_string(),
        }
    }

    fn predict(&self, batch: &HistoryBatch) -> Result<Tensor> {
        Model::predict(self, batch)
    }

    fn num_params(&self) -> usize {
        Model::num_params(self)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn predict(&self, batch: &HistoryBatch) -> Result<Tensor> {
        (**self).predict(batch)
    }

    fn num_params(&self) -> usize {
        (**self).num_params()
    }
}

/// Ranks of one example's known targets, row-aligned, plus how many targets
/// were unknown.
pub fn example_ranks(
    prediction: &Tensor,
    targets: &[Option<usize>],
) -> Result<(Vec<usize>, usize)> {
    if prediction.rows() != targets.len() {
        return Err(Error::Shape {
            op: "example_ranks",
            left: prediction.shape(),
            right: [targets.len(), 1],
        });
    }
    let mut ranks = Vec::with_capacity(targets.len());
    let mut unknown = 0;
    for (r, t) in targets.iter().enumerate() {
        match t {
            Some(t) => ranks.push(rank_of_target(prediction.row_slice(r), *t)?),
            None => unknown += 1,
        }
    }
    Ok((ranks, unknown))
}

/// Pooled ranks over a set of examples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RankSummary {
    pub ranks: Vec<usize>,
    pub unknown_targets: usize,
    pub num_examples: usize,
}

impl RankSummary {
    pub fn push(&mut self, prediction: &Tensor, targets: &[Option<usize>]) -> Result<()> {
        let (ranks, unknown) = example_ranks(prediction, targets)?;
        self.ranks.extend(ranks);
        self.unknown_targets += unknown;
        self.num_examples += 1;
        Ok(())
    }

    pub fn metrics(&self) -> Result<Metrics> {
        compute_metrics(&self.ranks)
    }
}

pub fn rank_examples<P: Predictor + ?Sized>(
    predictor: &P,
    examples: &[Example],
) -> Result<RankSummary> {
    let mut summary = RankSummary::default();
    for ex in examples {
        summary.push(&predictor.predict(&ex.batch)?, &ex.targets)?;
    }
    Ok(summary)
}

pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, examples: &[Example]) -> Result<Metrics> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation examples"));
    }
    rank_examples(predictor, examples)?.metrics()
}
