//! Checkpoint files.
//!
//! A text header followed by the tensor payload as little-endian `f64`:
//!
//! ```text
//! LIGHTMOVE-CKPT v1 sha256=<hex digest of everything after this line>
//! [config]
//! <field> = <json value>
//! [meta]
//! <field> = <json value>
//! [tensors]
//! <name> <kind> <rows> <cols> <byte offset into payload>
//! [end]
//! <payload>
//! ```
//!
//! Optimizer moments are stored as `adam.m/<name>` and `adam.v/<name>`.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use lightmove_core::eval::Metrics;
use lightmove_core::train::{AdamState, TrainConfig};
use lightmove_core::{Model, ModelConfig, ParamKind, ParamStore, Tensor};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::digest::sha256_hex;

const MAGIC: &str = "LIGHTMOVE-CKPT v1";
const FIRST_MOMENT: &str = "adam.m/";
const SECOND_MOMENT: &str = "adam.v/";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    /// Epoch the parameters come from (1-based).
    pub epoch: usize,
    pub valid: Metrics,
    pub adam_step: u64,
    pub train: TrainConfig,
    /// Digest of the dataset descriptor the model was trained against.
    pub dataset_sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: AdamState,
    pub meta: Meta,
}

/// The recorded digest does not match the file contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashMismatch {
    pub recorded: String,
    pub actual: String,
}

impl fmt::Display for HashMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "checkpoint hash mismatch: header records {} but contents hash to {}",
            self.recorded, self.actual
        )
    }
}

impl std::error::Error for HashMismatch {}

fn kind_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::Embedding => "embedding",
        ParamKind::Weight => "weight",
        ParamKind::Bias => "bias",
    }
}

fn parse_kind(s: &str) -> Result<Option<ParamKind>> {
    Ok(match s {
        "embedding" => Some(ParamKind::Embedding),
        "weight" => Some(ParamKind::Weight),
        "bias" => Some(ParamKind::Bias),
        "moment" => None,
        other => bail!("unknown tensor kind {other:?}"),
    })
}

fn write_section<T: Serialize>(out: &mut String, title: &str, value: &T) -> Result<()> {
    out.push_str(title);
    out.push('\n');
    let Value::Object(fields) = serde_json::to_value(value)? else {
        bail!("{title} does not serialize to key-value pairs");
    };
    for (k, v) in fields {
        out.push_str(&format!("{k} = {}\n", serde_json::to_string(&v)?));
    }
    Ok(())
}

fn read_section<T: DeserializeOwned>(lines: &[&str], title: &str) -> Result<T> {
    let mut fields = Map::new();
    for line in lines {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| anyhow!("{title}: malformed line {line:?}"))?;
        fields.insert(
            k.to_string(),
            serde_json::from_str(v).with_context(|| format!("{title}: field {k}"))?,
        );
    }
    serde_json::from_value(Value::Object(fields)).with_context(|| format!("reading {title}"))
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let params = &ckpt.model.params;
    ensure!(
        ckpt.optimizer.first.len() == params.len() && ckpt.optimizer.second.len() == params.len(),
        "optimizer state does not match the parameter store"
    );
    let mut header = String::new();
    write_section(&mut header, "[config]", &ckpt.model.config)?;
    write_section(&mut header, "[meta]", &ckpt.meta)?;
    header.push_str("[tensors]\n");

    let mut payload: Vec<u8> = Vec::new();
    let mut entry = |header: &mut String, name: &str, kind: &str, t: &Tensor| {
        header.push_str(&format!(
            "{name} {kind} {} {} {}\n",
            t.rows(),
            t.cols(),
            payload.len()
        ));
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    for p in params.iter() {
        entry(&mut header, &p.name, kind_name(p.kind), &p.value);
    }
    for (p, m) in params.iter().zip(&ckpt.optimizer.first) {
        entry(
            &mut header,
            &format!("{FIRST_MOMENT}{}", p.name),
            "moment",
            m,
        );
    }
    for (p, v) in params.iter().zip(&ckpt.optimizer.second) {
        entry(
            &mut header,
            &format!("{SECOND_MOMENT}{}", p.name),
            "moment",
            v,
        );
    }
    header.push_str("[end]\n");

    let mut body = header.into_bytes();
    body.extend_from_slice(&payload);
    let mut out = format!("{MAGIC} sha256={}\n", sha256_hex(&body)).into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| anyhow!("not a checkpoint: no header line"))?;
    let first = std::str::from_utf8(&bytes[..newline])?;
    let recorded = first
        .strip_prefix(MAGIC)
        .and_then(|r| r.strip_prefix(" sha256="))
        .ok_or_else(|| anyhow!("not a checkpoint: header line {first:?}"))?;
    let body = &bytes[newline + 1..];
    let actual = sha256_hex(body);
    if recorded != actual {
        return Err(HashMismatch {
            recorded: recorded.to_string(),
            actual,
        }
        .into());
    }

    const END: &[u8] = b"[end]\n";
    let end = body
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| anyhow!("checkpoint header has no [end] marker"))?;
    let header = std::str::from_utf8(&body[..end])?;
    let payload = &body[end + END.len()..];

    let mut sections: Vec<(&str, Vec<&str>)> = Vec::new();
    for line in header.lines() {
        if line.starts_with('[') {
            sections.push((line, Vec::new()));
        } else if let Some((_, lines)) = sections.last_mut() {
            lines.push(line);
        } else {
            bail!("checkpoint header line {line:?} outside a section");
        }
    }
    let section = |title: &str| {
        sections
            .iter()
            .find(|(t, _)| *t == title)
            .map(|(_, l)| l.as_slice())
            .ok_or_else(|| anyhow!("checkpoint lacks a {title} section"))
    };
    let config: ModelConfig = read_section(section("[config]")?, "[config]")?;
    let meta: Meta = read_section(section("[meta]")?, "[meta]")?;

    let mut params = ParamStore::new();
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let mut expected_offset = 0;
    for line in section("[tensors]")? {
        let f: Vec<&str> = line.split(' ').collect();
        ensure!(f.len() == 5, "malformed tensor entry {line:?}");
        let (rows, cols, offset): (usize, usize, usize) =
            (f[2].parse()?, f[3].parse()?, f[4].parse()?);
        ensure!(
            offset == expected_offset,
            "tensor {} at offset {offset}, expected {expected_offset}",
            f[0]
        );
        let len = rows * cols * 8;
        let raw = payload
            .get(offset..offset + len)
            .ok_or_else(|| anyhow!("tensor {} runs past the payload", f[0]))?;
        expected_offset += len;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = Tensor::new(rows, cols, data)?;
        match (parse_kind(f[1])?, f[0]) {
            (Some(kind), name) => params.insert(name, kind, tensor),
            (None, name) if name.starts_with(FIRST_MOMENT) => first.push(tensor),
            (None, name) if name.starts_with(SECOND_MOMENT) => second.push(tensor),
            (None, name) => bail!("moment tensor {name:?} has no known prefix"),
        }
    }
    ensure!(
        expected_offset == payload.len(),
        "checkpoint payload has trailing bytes"
    );
    ensure!(
        first.len() == params.len() && second.len() == params.len(),
        "checkpoint has {} parameters but {} / {} moments",
        params.len(),
        first.len(),
        second.len()
    );
    let model = Model::from_parts(config, params)?;
    Ok(Checkpoint {
        model,
        optimizer: AdamState {
            step: meta.adam_step,
            first,
            second,
        },
        meta,
    })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode(ckpt)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}
