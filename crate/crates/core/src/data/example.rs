//! Turning one split of a user's sessions into model inputs and targets.

use alloc::vec::Vec;

use super::checkin::{CheckIn, Vocabulary};
use super::session::Session;
use super::split::floor_fraction;
use crate::model::{HistoryBatch, Visit};

const SECONDS_PER_DAY: u64 = 86_400;

/// Fraction of a split's sessions used as input history.
pub const HISTORY_FRACTION: f64 = 0.70;

/// Maps raw check-ins onto vocabulary indices and time-of-day slots.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Encoder {
    pub users: Vocabulary,
    pub locations: Vocabulary,
    pub time_slots: usize,
}

impl Encoder {
    pub fn slot_of(&self, timestamp: u64) -> usize {
        let second_of_day = timestamp % SECONDS_PER_DAY;
        (second_of_day as u128 * self.time_slots as u128 / SECONDS_PER_DAY as u128) as usize
    }

    /// `None` for a location outside the vocabulary.
    pub fn visit(&self, c: &CheckIn) -> Option<Visit> {
        Some(Visit {
            location: self.locations.get(&c.location)?,
            slot: self.slot_of(c.timestamp),
        })
    }

    fn visits<'a>(&self, checkins: impl Iterator<Item = &'a CheckIn>) -> Vec<Visit> {
        checkins.filter_map(|c| self.visit(c)).collect()
    }
}

/// Model input plus the next `M` locations (`None` when unknown).
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Example {
    pub batch: HistoryBatch,
    pub targets: Vec<Option<usize>>,
}

/// Builds the example whose history is the first `history_sessions`
/// sessions of `sessions`: `S` is the last of them (at most `session_len`
/// most recent check-ins, any overflow is appended to `L`), `L` is
/// everything before, and the targets are the first `horizon` check-ins after
/// the history.
fn example_at(
    sessions: &[Session],
    history_sessions: usize,
    horizon: usize,
    session_len: usize,
    encoder: &Encoder,
) -> Option<Example> {
    let user_name = &sessions.first()?.checkins.first()?.user;
    let user = encoder.users.get(user_name)?;
    let (history, future) = sessions.split_at(history_sessions);
    let (recent, earlier) = history.split_last()?;

    let mut long = encoder.visits(earlier.iter().flat_map(|s| s.checkins.iter()));
    let mut short = encoder.visits(recent.checkins.iter());
    if short.len() > session_len {
        let overflow = short.len() - session_len;
        long.extend(short.drain(..overflow));
    }
    if short.is_empty() {
        return None;
    }
    let targets: Vec<Option<usize>> = future
        .iter()
        .flat_map(|s| s.checkins.iter())
        .take(horizon)
        .map(|c| encoder.locations.get(&c.location))
        .collect();
    if targets.len() < horizon {
        return None;
    }
    Some(Example {
        batch: HistoryBatch { short, long, user },
        targets,
    })
}

fn history_split(n: usize) -> usize {
    floor_fraction(n, HISTORY_FRACTION).clamp(1, n - 1)
}

/// One example per split: the first 70% of the sessions form the history
/// and the remainder supplies the targets. Returns `None` (with a warning)
/// when the split has fewer than two sessions or too few future check-ins.
pub fn make_example(
    sessions: &[Session],
    horizon: usize,
    session_len: usize,
    encoder: &Encoder,
) -> Option<Example> {
    if sessions.len() < 2 {
        log::warn!("skipping split with {} session(s)", sessions.len());
        return None;
    }
    let ex = example_at(
        sessions,
        history_split(sessions.len()),
        horizon,
        session_len,
        encoder,
    );
    if ex.is_none() {
        log::warn!("skipping split: not enough known history or future check-ins");
    }
    ex
}

/// Sliding variant: one example for every history length from the default
/// 70% boundary up to all but the last session.
pub fn make_examples_sliding(
    sessions: &[Session],
    horizon: usize,
    session_len: usize,
    encoder: &Encoder,
) -> Vec<Example> {
    if sessions.len() < 2 {
        return Vec::new();
    }
    (history_split(sessions.len())..sessions.len())
        .filter_map(|h| example_at(sessions, h, horizon, session_len, encoder))
        .collect()
}
