use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::Predictor;
use crate::error::{Error, Result};
use crate::model::HistoryBatch;
use crate::tensor::Tensor;

/// Additive smoothing applied to location counts.
pub const FREQUENCY_SMOOTHING: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BaselineKind {
    Frequency,
    Markov1,
    PlainGru,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::Frequency, Self::Markov1, Self::PlainGru];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Frequency => "frequency",
            Self::Markov1 => "markov1",
            Self::PlainGru => "plain_gru",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnsupportedBaseline(s.to_string()))
    }
}

fn check_locations(seqs: &[Vec<usize>], num_locations: usize) -> Result<()> {
    for &x in seqs.iter().flatten() {
        if x >= num_locations {
            return Err(Error::IndexOutOfRange {
                what: "location",
                index: x,
                bound: num_locations,
            });
        }
    }
    Ok(())
}

fn smoothed(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + FREQUENCY_SMOOTHING * counts.len() as f64;
    counts
        .iter()
        .map(|c| (c + FREQUENCY_SMOOTHING) / total)
        .collect()
}

fn repeat_row(row: &[f64], times: usize) -> Tensor {
    let mut data = Vec::with_capacity(row.len() * times);
    for _ in 0..times {
        data.extend_from_slice(row);
    }
    Tensor::new(times, row.len(), data).expect("row repeated to a full matrix")
}

/// Per-user empirical location distribution, falling back to the global one
/// for users without training data.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyBaseline {
    per_user: Vec<Option<Vec<f64>>>,
    global: Vec<f64>,
    horizon: usize,
}

impl FrequencyBaseline {
    /// `sequences[u]` holds user `u`'s training locations in time order.
    pub fn fit(sequences: &[Vec<usize>], num_locations: usize, horizon: usize) -> Result<Self> {
        check_locations(sequences, num_locations)?;
        let mut global = alloc::vec![0.0; num_locations];
        let per_user = sequences
            .iter()
            .map(|seq| {
                if seq.is_empty() {
                    return None;
                }
                let mut c = alloc::vec![0.0; num_locations];
                for &x in seq {
                    c[x] += 1.0;
                    global[x] += 1.0;
                }
                Some(smoothed(&c))
            })
            .collect();
        Ok(Self {
            per_user,
            global: smoothed(&global),
            horizon,
        })
    }

    pub fn distribution(&self, user: usize) -> &[f64] {
        match self.per_user.get(user) {
            Some(Some(p)) => p,
            _ => &self.global,
        }
    }
}

impl Predictor for FrequencyBaseline {
    fn name(&self) -> String {
        BaselineKind::Frequency.to_string()
    }

    fn predict(&self, batch: &HistoryBatch) -> Result<Tensor> {
        Ok(repeat_row(self.distribution(batch.user), self.horizon))
    }

    fn num_params(&self) -> usize {
        0
    }
}

/// Per-user first-order transition model. Step `k` of the prediction is the
/// `k`-step chain distribution from the last observed location; states
/// never left in training back off to the user's location frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovBaseline {
    transitions: Vec<BTreeMap<usize, BTreeMap<usize, f64>>>,
    frequency: FrequencyBaseline,
    num_locations: usize,
    horizon: usize,
}

impl MarkovBaseline {
    pub fn fit(sequences: &[Vec<usize>], num_locations: usize, horizon: usize) -> Result<Self> {
        let frequency = FrequencyBaseline::fit(sequences, num_locations, horizon)?;
        let transitions = sequences
            .iter()
            .map(|seq| {
                let mut t: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
                for w in seq.windows(2) {
                    *t.entry(w[0]).or_default().entry(w[1]).or_default() += 1.0;
                }
                t
            })
            .collect();
        Ok(Self {
            transitions,
            frequency,
            num_locations,
            horizon,
        })
    }

    /// Raw transition counts of `user` as a dense `|X| x |X|` matrix.
    pub fn transition_counts(&self, user: usize) -> Tensor {
        let mut m = Tensor::zeros(self.num_locations, self.num_locations);
        if let Some(t) = self.transitions.get(user) {
            for (&from, row) in t {
                for (&to, &c) in row {
                    m.set(from, to, c);
                }
            }
        }
        m
    }

    /// Pushes a distribution one step along the user's chain.
    fn advance(&self, user: usize, dist: &[f64]) -> Vec<f64> {
        let empty = BTreeMap::new();
        let table = self.transitions.get(user).unwrap_or(&empty);
        let mut next = alloc::vec![0.0; self.num_locations];
        let mut backoff = 0.0;
        for (from, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            match table.get(&from) {
                Some(row) => {
                    let total: f64 = row.values().sum();
                    for (&to, &c) in row {
                        next[to] += mass * c / total;
                    }
                }
                None => backoff += mass,
            }
        }
        if backoff > 0.0 {
            for (n, p) in next.iter_mut().zip(self.frequency.distribution(user)) {
                *n += backoff * p;
            }
        }
        next
    }
}

impl Predictor for MarkovBaseline {
    fn name(&self) -> String {
        BaselineKind::Markov1.to_string()
    }

    fn predict(&self, batch: &HistoryBatch) -> Result<Tensor> {
        let last = batch
            .short
            .last()
            .ok_or(Error::Empty("short-term history"))?;
        if last.location >= self.num_locations {
            return Err(Error::IndexOutOfRange {
                what: "location",
                index: last.location,
                bound: self.num_locations,
            });
        }
        let mut dist = alloc::vec![0.0; self.num_locations];
        dist[last.location] = 1.0;
        let mut data = Vec::with_capacity(self.horizon * self.num_locations);
        for _ in 0..self.horizon {
            dist = self.advance(batch.user, &dist);
            data.extend_from_slice(&dist);
        }
        Tensor::new(self.horizon, self.num_locations, data)
    }

    fn num_params(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use crate::eval::{evaluate, rank_of_target};
    use crate::model::Visit;
    use alloc::vec;

    fn batch(user: usize, last: usize) -> HistoryBatch {
        HistoryBatch {
            short: vec![Visit {
                location: last,
                slot: 0,
            }],
            long: Vec::new(),
            user,
        }
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(
            "markov1".parse::<BaselineKind>().unwrap(),
            BaselineKind::Markov1
        );
        assert!(matches!(
            "lstm".parse::<BaselineKind>(),
            Err(Error::UnsupportedBaseline(_))
        ));
    }

    #[test]
    fn frequency_of_a_single_location_user() {
        let f = FrequencyBaseline::fit(&[vec![7; 20]], 10, 2).unwrap();
        let p = f.predict(&batch(0, 7)).unwrap();
        assert_eq!(p.shape(), [2, 10]);
        assert!(p.get(0, 7) >= 0.999);
        assert_eq!(p.row_slice(0), p.row_slice(1));
        assert!((p.row_slice(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frequency_falls_back_to_global() {
        let f = FrequencyBaseline::fit(&[vec![1, 1, 2], vec![]], 3, 1).unwrap();
        let p = f.predict(&batch(1, 0)).unwrap();
        assert_eq!(rank_of_target(p.row_slice(0), 1).unwrap(), 1);
    }

    #[test]
    fn markov_on_a_deterministic_cycle() {
        let cycle: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let m = MarkovBaseline::fit(&[cycle], 3, 3).unwrap();
        let examples: Vec<Example> = (0..3)
            .map(|last| Example {
                batch: batch(0, last),
                targets: (1..=3).map(|k| Some((last + k) % 3)).collect(),
            })
            .collect();
        let metrics = evaluate(&m, &examples).unwrap();
        assert_eq!(metrics.hits1, 1.0);
    }

    #[test]
    fn hand_counted_transitions() {
        // a b a c a b b c a b  ->  a:b3 c1, b:a1 b1 c1, c:a2
        let seq = vec![0, 1, 0, 2, 0, 1, 1, 2, 0, 1];
        let m = MarkovBaseline::fit(&[seq], 3, 1).unwrap();
        let expected =
            Tensor::from_rows(&[&[0.0, 3.0, 1.0], &[1.0, 1.0, 1.0], &[2.0, 0.0, 0.0]]).unwrap();
        assert_eq!(m.transition_counts(0), expected);
        let p = m.predict(&batch(0, 0)).unwrap();
        assert_eq!(p.row_slice(0), &[0.0, 0.75, 0.25]);
    }

    #[test]
    fn markov_rows_are_distributions() {
        let m = MarkovBaseline::fit(&[vec![0, 1, 2, 1, 3]], 5, 4).unwrap();
        for start in 0..5 {
            let p = m.predict(&batch(0, start)).unwrap();
            for r in 0..4 {
                assert!((p.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
