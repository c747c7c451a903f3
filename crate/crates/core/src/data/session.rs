use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::checkin::CheckIn;

/// Rule for cutting a user's check-ins into sessions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Segmentation {
    /// Consecutive runs of `K` check-ins; the last run may be shorter.
    FixedCount(usize),
    /// A new session starts whenever the gap to the previous check-in
    /// exceeds this many seconds.
    GapThreshold(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub checkins: Vec<CheckIn>,
    /// Position within the user's trajectory.
    pub index: usize,
}

impl Session {
    pub fn len(&self) -> usize {
        self.checkins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkins.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<u64> {
        self.checkins.first().map(|c| c.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.checkins.last().map(|c| c.timestamp)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub user: String,
    pub sessions: Vec<Session>,
}

impl Trajectory {
    pub fn num_checkins(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    pub fn checkins(&self) -> impl Iterator<Item = &CheckIn> {
        self.sessions.iter().flat_map(|s| s.checkins.iter())
    }
}

/// Groups records by user, users in first-appearance order, records in input
/// order.
pub fn group_by_user(records: &[CheckIn]) -> Vec<(String, Vec<CheckIn>)> {
    let mut order: Vec<(String, Vec<CheckIn>)> = Vec::new();
    let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let i = *slot.entry(r.user.as_str()).or_insert_with(|| {
            order.push((r.user.clone(), Vec::new()));
            order.len() - 1
        });
        order[i].1.push(r.clone());
    }
    order
}

/// Sorts one user's check-ins by time (stable) and cuts them into sessions.
pub fn segment_sessions(user: &str, checkins: &[CheckIn], rule: Segmentation) -> Trajectory {
    let mut sorted = checkins.to_vec();
    sorted.sort_by_key(|c| c.timestamp);
    let mut sessions: Vec<Session> = Vec::new();
    let mut current: Vec<CheckIn> = Vec::new();
    for c in sorted {
        let cut = match (rule, current.last()) {
            (_, None) => false,
            (Segmentation::FixedCount(k), Some(_)) => current.len() >= k.max(1),
            (Segmentation::GapThreshold(gap), Some(prev)) => c.timestamp - prev.timestamp > gap,
        };
        if cut {
            let index = sessions.len();
            sessions.push(Session {
                checkins: core::mem::take(&mut current),
                index,
            });
        }
        current.push(c);
    }
    if !current.is_empty() {
        let index = sessions.len();
        sessions.push(Session {
            checkins: current,
            index,
        });
    }
    Trajectory {
        user: user.into(),
        sessions,
    }
}
