use alloc::collections::BTreeSet;

use super::session::Trajectory;

/// Dataset summary counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_locations: usize,
    pub num_logs: usize,
    pub num_sessions: usize,
    /// Mean check-ins per session; 0 when there are no sessions.
    pub avg_session_len: f64,
}

pub fn dataset_stats<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> DatasetStats {
    let mut users = BTreeSet::new();
    let mut locations = BTreeSet::new();
    let (mut logs, mut sessions) = (0, 0);
    for t in trajectories {
        users.insert(t.user.as_str());
        sessions += t.sessions.len();
        for c in t.checkins() {
            locations.insert(c.location.as_str());
            logs += 1;
        }
    }
    DatasetStats {
        num_users: users.len(),
        num_locations: locations.len(),
        num_logs: logs,
        num_sessions: sessions,
        avg_session_len: if sessions == 0 {
            0.0
        } else {
            logs as f64 / sessions as f64
        },
    }
}
