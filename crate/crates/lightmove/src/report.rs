//! Timed evaluation reports and parallel ranking.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::Instant;

use anyhow::{ensure, Result};
use lightmove_core::data::Example;
use lightmove_core::eval::{Metrics, Predictor, RankSummary, HITS_CUTOFFS};
use lightmove_core::train::{EpochRecord, FitHooks};
use lightmove_core::{Model, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    /// Keyed by cutoff `k`.
    pub hits_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub num_params: usize,
    pub num_examples: usize,
    pub num_targets: usize,
    /// Targets outside the location vocabulary; not ranked.
    pub unknown_targets: usize,
    pub inference_seconds: f64,
    pub threads: usize,
}

impl EvalReport {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            hits1: self.hits_at[&1],
            hits5: self.hits_at[&5],
            hits10: self.hits_at[&10],
            mrr: self.mrr,
            num_targets: self.num_targets,
        }
    }

    /// `key<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name\t{}", self.name);
        for (k, v) in &self.hits_at {
            let _ = writeln!(out, "hits@{k}\t{v}");
        }
        let _ = writeln!(out, "mrr\t{}", self.mrr);
        let _ = writeln!(out, "num_params\t{}", self.num_params);
        let _ = writeln!(out, "num_examples\t{}", self.num_examples);
        let _ = writeln!(out, "num_targets\t{}", self.num_targets);
        let _ = writeln!(out, "unknown_targets\t{}", self.unknown_targets);
        let _ = writeln!(out, "inference_seconds\t{}", self.inference_seconds);
        let _ = writeln!(out, "threads\t{}", self.threads);
        out
    }
}

/// One row per report.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    let mut out =
        String::from("model\thits@1\thits@5\thits@10\tmrr\tnum_params\tinference_seconds\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.3}",
            r.name,
            r.hits_at[&1],
            r.hits_at[&5],
            r.hits_at[&10],
            r.mrr,
            r.num_params,
            r.inference_seconds
        );
    }
    out
}

/// Predictions for every example, computed on the current rayon pool and
/// returned in input order.
pub fn predict_all<P: Predictor + Sync + ?Sized>(
    predictor: &P,
    examples: &[Example],
) -> lightmove_core::Result<Vec<Tensor>> {
    examples
        .par_iter()
        .map(|ex| predictor.predict(&ex.batch))
        .collect()
}

/// Ranks every example on the current rayon pool. The result does not depend
/// on the number of threads.
pub fn rank_parallel<P: Predictor + Sync + ?Sized>(
    predictor: &P,
    examples: &[Example],
) -> lightmove_core::Result<RankSummary> {
    let predictions = predict_all(predictor, examples)?;
    let mut summary = RankSummary::default();
    for (p, ex) in predictions.iter().zip(examples) {
        summary.push(p, &ex.targets)?;
    }
    Ok(summary)
}

pub fn timed_evaluate<P: Predictor + Sync + ?Sized>(
    predictor: &P,
    examples: &[Example],
) -> Result<EvalReport> {
    ensure!(!examples.is_empty(), "no evaluation examples");
    let start = Instant::now();
    let summary = rank_parallel(predictor, examples)?;
    let inference_seconds = start.elapsed().as_secs_f64();
    let m = summary.metrics()?;
    Ok(EvalReport {
        name: predictor.name(),
        hits_at: HITS_CUTOFFS
            .iter()
            .map(|&k| (k, m.hits_at(k).expect("reported cutoff")))
            .collect(),
        mrr: m.mrr,
        num_params: predictor.num_params(),
        num_examples: summary.num_examples,
        num_targets: m.num_targets,
        unknown_targets: summary.unknown_targets,
        inference_seconds,
        threads: rayon::current_num_threads(),
    })
}

/// Validates on the rayon pool and forwards each epoch record to a callback.
pub struct ParallelValidation<F> {
    pub on_epoch: F,
}

impl<F: FnMut(&EpochRecord)> FitHooks for ParallelValidation<F> {
    fn validate(&mut self, model: &Model, examples: &[Example]) -> lightmove_core::Result<Metrics> {
        rank_parallel(model, examples)?.metrics()
    }

    fn on_epoch(&mut self, record: &EpochRecord) {
        (self.on_epoch)(record)
    }
}
