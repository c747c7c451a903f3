//! Check-in logs: parsing, sessions, chronological splits, examples and a
//! synthetic generator.

mod checkin;
mod example;
mod session;
mod split;
mod stats;
mod synth;

use alloc::string::String;
use alloc::vec::Vec;

pub use checkin::{parse_logs, serialize_logs, CheckIn, ParsedLogs, Vocabulary};
pub use example::{make_example, make_examples_sliding, Encoder, Example, HISTORY_FRACTION};
pub use session::{group_by_user, segment_sessions, Segmentation, Session, Trajectory};
pub use split::{chronological_split, SplitSpec, SplitTrajectory, MIN_SESSIONS};
pub use stats::{dataset_stats, DatasetStats};
pub use synth::{cab_name, cell_name, synth_generate, SynthLogs, SynthSpec};

/// Which chronological split to draw examples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl SplitTrajectory {
    pub fn sessions(&self, split: Split) -> &[Session] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn trajectory(&self, split: Split) -> Trajectory {
        Trajectory {
            user: self.user.clone(),
            sessions: self.sessions(split).to_vec(),
        }
    }
}

/// Segmented and split logs with vocabularies drawn from the training
/// portion only.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub spec: SplitSpec,
    pub encoder: Encoder,
    pub users: Vec<SplitTrajectory>,
    pub stats: DatasetStats,
}

/// Groups, segments and splits `records`. Users are indexed in
/// first-appearance order; locations in order of first appearance while
/// walking each kept user's training sessions. Users with too few sessions
/// are dropped.
pub fn prepare(
    records: &[CheckIn],
    spec: SplitSpec,
    time_slots: usize,
) -> crate::Result<PreparedData> {
    spec.validate()?;
    let trajectories: Vec<Trajectory> = group_by_user(records)
        .into_iter()
        .map(|(user, logs)| segment_sessions(&user, &logs, spec.segmentation))
        .collect();
    let stats = dataset_stats(&trajectories);
    let users: Vec<SplitTrajectory> = trajectories
        .iter()
        .filter_map(|t| chronological_split(t, spec.ratios))
        .collect();
    let mut user_vocab = Vocabulary::new();
    let mut locations = Vocabulary::new();
    for u in &users {
        user_vocab.intern(&u.user);
        for c in u.train.iter().flat_map(|s| s.checkins.iter()) {
            locations.intern(&c.location);
        }
    }
    Ok(PreparedData {
        spec,
        encoder: Encoder {
            users: user_vocab,
            locations,
            time_slots,
        },
        users,
        stats,
    })
}

impl PreparedData {
    /// One example per user for `split` (or every sliding window when
    /// `sliding` is set). Users whose split is too short are skipped.
    pub fn examples(
        &self,
        split: Split,
        horizon: usize,
        session_len: usize,
        sliding: bool,
    ) -> Vec<Example> {
        let mut out = Vec::new();
        for u in &self.users {
            let s = u.sessions(split);
            if sliding {
                out.extend(make_examples_sliding(
                    s,
                    horizon,
                    session_len,
                    &self.encoder,
                ));
            } else if let Some(e) = make_example(s, horizon, session_len, &self.encoder) {
                out.push(e);
            }
        }
        out
    }

    /// Each user's training locations in time order, indexed like
    /// `encoder.users`.
    pub fn train_sequences(&self) -> Vec<Vec<usize>> {
        self.users
            .iter()
            .map(|u| {
                u.train
                    .iter()
                    .flat_map(|s| s.checkins.iter())
                    .filter_map(|c| self.encoder.locations.get(&c.location))
                    .collect()
            })
            .collect()
    }

    pub fn user_names(&self) -> Vec<String> {
        self.users.iter().map(|u| u.user.clone()).collect()
    }
}
