//! Prepared dataset on disk: one check-in file per split plus a descriptor
//! with the vocabularies, split rule and dataset statistics.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lightmove_core::data::{
    group_by_user, parse_logs, segment_sessions, serialize_logs, DatasetStats, Encoder,
    PreparedData, Session, Split, SplitSpec, SplitTrajectory, Vocabulary,
};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "lightmove-dataset/1";
pub const DESCRIPTOR: &str = "dataset.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub format: String,
    pub split: SplitSpec,
    pub time_slots: usize,
    pub users: Vocabulary,
    pub locations: Vocabulary,
    pub stats: DatasetStats,
}

pub fn split_file(split: Split) -> &'static str {
    match split {
        Split::Train => "train.tsv",
        Split::Valid => "valid.tsv",
        Split::Test => "test.tsv",
    }
}

pub const SPLITS: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

/// Writes the bundle into `dir` and returns the written paths.
pub fn write_bundle(dir: &Path, data: &PreparedData) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for split in SPLITS {
        let text = serialize_logs(
            data.users
                .iter()
                .flat_map(|u| u.sessions(split))
                .flat_map(|s| s.checkins.iter()),
        );
        let path = dir.join(split_file(split));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let descriptor = Descriptor {
        format: FORMAT.into(),
        split: data.spec,
        time_slots: data.encoder.time_slots,
        users: data.encoder.users.clone(),
        locations: data.encoder.locations.clone(),
        stats: data.stats,
    };
    let path = dir.join(DESCRIPTOR);
    fs::write(&path, serde_json::to_string_pretty(&descriptor)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

pub fn read_descriptor(dir: &Path) -> Result<Descriptor> {
    let path = dir.join(DESCRIPTOR);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let d: Descriptor =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if d.format != FORMAT {
        bail!("{}: unsupported format {:?}", path.display(), d.format);
    }
    Ok(d)
}

/// Reloads a bundle. Each split is segmented on its own, which reproduces the
/// original sessions because splits are cut on session boundaries.
pub fn read_bundle(dir: &Path) -> Result<PreparedData> {
    let d = read_descriptor(dir)?;
    let mut users: Vec<SplitTrajectory> = d
        .users
        .names()
        .iter()
        .map(|u| SplitTrajectory {
            user: u.clone(),
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        })
        .collect();
    for split in SPLITS {
        let path = dir.join(split_file(split));
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let logs =
            parse_logs(text.lines()).with_context(|| format!("parsing {}", path.display()))?;
        for (user, records) in group_by_user(&logs.records) {
            let Some(i) = d.users.get(&user) else {
                bail!(
                    "{}: user {user:?} is not in the bundle's user list",
                    path.display()
                );
            };
            let sessions = segment_sessions(&user, &records, d.split.segmentation).sessions;
            let u = &mut users[i];
            let offset = u.train.len() + u.valid.len();
            let target: &mut Vec<Session> = match split {
                Split::Train => &mut u.train,
                Split::Valid => &mut u.valid,
                Split::Test => &mut u.test,
            };
            target.extend(sessions.into_iter().map(|mut s| {
                s.index += offset;
                s
            }));
        }
    }
    Ok(PreparedData {
        spec: d.split,
        encoder: Encoder {
            users: d.users,
            locations: d.locations,
            time_slots: d.time_slots,
        },
        users,
        stats: d.stats,
    })
}
