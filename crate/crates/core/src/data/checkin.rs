use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

/// One `(user, timestamp, location)` log record.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckIn {
    pub user: String,
    /// Unix seconds.
    pub timestamp: u64,
    pub location: String,
}

/// Bidirectional name/index map; indices follow first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(from = "Vec<String>", into = "Vec<String>")
)]
pub struct Vocabulary {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(names: Vec<String>) -> Self {
        Self::from_names(names)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.names
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: impl IntoIterator<Item = String>) -> Self {
        let mut v = Self::new();
        for n in names {
            v.intern(&n);
        }
        v
    }

    /// Index of `name`, assigning the next free one on first sight.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedLogs {
    pub records: Vec<CheckIn>,
    pub users: Vocabulary,
    pub locations: Vocabulary,
}

/// Parses `user_id<TAB>unix_seconds<TAB>location_id` lines. Line numbers in
/// errors are 1-based.
pub fn parse_logs<'a>(lines: impl IntoIterator<Item = &'a str>) -> Result<ParsedLogs> {
    let mut out = ParsedLogs::default();
    for (i, line) in lines.into_iter().enumerate() {
        let record = parse_line(line).map_err(|reason| Error::Parse {
            line: i + 1,
            reason,
        })?;
        out.users.intern(&record.user);
        out.locations.intern(&record.location);
        out.records.push(record);
    }
    Ok(out)
}

fn parse_line(line: &str) -> core::result::Result<CheckIn, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!(
            "expected 3 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let (user, ts, location) = (fields[0], fields[1], fields[2]);
    if user.is_empty() || location.is_empty() {
        return Err("empty user or location id".into());
    }
    let timestamp = ts
        .parse::<u64>()
        .map_err(|_| format!("timestamp {ts:?} is not a non-negative integer"))?;
    Ok(CheckIn {
        user: user.to_string(),
        timestamp,
        location: location.to_string(),
    })
}

/// Inverse of [`parse_logs`]: one LF-terminated line per record.
pub fn serialize_logs<'a>(records: impl IntoIterator<Item = &'a CheckIn>) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}\t{}\t{}", r.user, r.timestamp, r.location);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream() {
        let p = parse_logs(core::iter::empty()).unwrap();
        assert!(p.records.is_empty());
    }

    #[test]
    fn well_formed_lines_in_order() {
        let text = "a\t10\tx\nb\t20\ty\na\t30\tx\n";
        let p = parse_logs(text.lines()).unwrap();
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.records[1].user, "b");
        assert_eq!(p.records[2].timestamp, 30);
        assert_eq!(p.users.names(), &["a", "b"]);
        assert_eq!(p.locations.get("y"), Some(1));
        assert_eq!(serialize_logs(&p.records), text);
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_logs("a\t1\tx\nb\t2".lines()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = parse_logs("a\t1.5\tx".lines()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_logs("a\t-3\tx".lines()).is_err());
    }
}
