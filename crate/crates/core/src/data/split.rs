use alloc::string::String;
use alloc::vec::Vec;

use super::session::{Segmentation, Session, Trajectory};
use crate::error::{Error, Result};

/// Chronological split ratios plus the session rule used before splitting.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    /// `(train, valid, test)`
    pub ratios: [f64; 3],
    pub segmentation: Segmentation,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], segmentation: Segmentation) -> Result<Self> {
        let s = Self {
            ratios,
            segmentation,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| r.is_nan() || *r < 0.0) || libm::fabs(total - 1.0) > 1e-9 {
            return Err(Error::Config(alloc::format!(
                "split ratios {:?} must be non-negative and sum to 1",
                self.ratios
            )));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.70, 0.15, 0.15],
            segmentation: Segmentation::FixedCount(9),
        }
    }
}

/// Users with fewer sessions than this are dropped.
pub const MIN_SESSIONS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitTrajectory {
    pub user: String,
    pub train: Vec<Session>,
    pub valid: Vec<Session>,
    pub test: Vec<Session>,
}

/// `floor(n * fraction)` with a small tolerance so that products such as
/// `10 * 0.7` land on the intended integer.
pub(crate) fn floor_fraction(n: usize, fraction: f64) -> usize {
    libm::floor(n as f64 * fraction + 1e-9) as usize
}

/// Cuts a trajectory at `floor(n r_train)` and `floor(n (r_train + r_valid))`.
/// Returns `None` (and logs a warning) for users with fewer than three
/// sessions.
pub fn chronological_split(traj: &Trajectory, ratios: [f64; 3]) -> Option<SplitTrajectory> {
    let n = traj.sessions.len();
    if n < MIN_SESSIONS {
        log::warn!(
            "dropping user {}: {} sessions, need at least {}",
            traj.user,
            n,
            MIN_SESSIONS
        );
        return None;
    }
    let first = floor_fraction(n, ratios[0]).min(n);
    let second = floor_fraction(n, ratios[0] + ratios[1]).clamp(first, n);
    Some(SplitTrajectory {
        user: traj.user.clone(),
        train: traj.sessions[..first].to_vec(),
        valid: traj.sessions[first..second].to_vec(),
        test: traj.sessions[second..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::checkin::CheckIn;

    fn traj(n: usize) -> Trajectory {
        Trajectory {
            user: "u".into(),
            sessions: (0..n)
                .map(|i| Session {
                    checkins: alloc::vec![CheckIn {
                        user: "u".into(),
                        timestamp: i as u64,
                        location: "x".into()
                    }],
                    index: i,
                })
                .collect(),
        }
    }

    fn sizes(s: &SplitTrajectory) -> [usize; 3] {
        [s.train.len(), s.valid.len(), s.test.len()]
    }

    #[test]
    fn floor_boundaries() {
        let r = SplitSpec::default().ratios;
        assert_eq!(
            sizes(&chronological_split(&traj(20), r).unwrap()),
            [14, 3, 3]
        );
        assert_eq!(
            sizes(&chronological_split(&traj(10), r).unwrap()),
            [7, 1, 2]
        );
        assert!(chronological_split(&traj(2), r).is_none());
    }

    #[test]
    fn ratios_must_sum_to_one() {
        assert!(SplitSpec::new([0.5, 0.5, 0.5], Segmentation::FixedCount(3)).is_err());
        assert!(SplitSpec::new([0.8, 0.1, 0.1], Segmentation::FixedCount(3)).is_ok());
    }
}
