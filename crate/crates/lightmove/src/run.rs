//! Fully resolved commands. A [`Run`] carries every setting it needs, so a
//! recorded run can be executed again from its manifest alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lightmove_core::data::{
    parse_logs, prepare, serialize_logs, synth_generate, Example, Split, SplitSpec, SynthSpec,
};
use lightmove_core::eval::{BaselineKind, FrequencyBaseline, MarkovBaseline, Predictor};
use lightmove_core::model::Architecture;
use lightmove_core::train::{fit_with, TrainConfig};
use lightmove_core::{Model, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::bundle::{self, DESCRIPTOR};
use crate::checkpoint::{self, Checkpoint, Meta};
use crate::digest::sha256_file;
use crate::report::{comparison_table, timed_evaluate, EvalReport, ParallelValidation};

pub const LOGS_FILE: &str = "logs.tsv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const REPORT_TSV: &str = "report.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const COMPARISON_FILE: &str = "comparison.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub spec: SynthSpec,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareRun {
    pub input: PathBuf,
    pub split: SplitSpec,
    pub time_slots: usize,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub data: PathBuf,
    pub variant: String,
    pub model: ModelConfig,
    /// `train.seed` also seeds the parameter initialisation.
    pub train: TrainConfig,
    /// One example per history length instead of one per user.
    pub sliding: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub split: Split,
    pub baselines: Vec<BaselineKind>,
    pub sliding: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRun {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub split: Split,
    pub top_k: usize,
    pub sliding: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Run {
    Synth(SynthRun),
    Prepare(PrepareRun),
    Train(TrainRun),
    Eval(EvalRun),
    Predict(PredictRun),
}

/// Files a run read and wrote. `timed` outputs contain wall-clock fields and
/// are not expected to reproduce byte for byte.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub timed: Vec<PathBuf>,
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Synth(_) => "synth",
            Run::Prepare(_) => "prepare",
            Run::Train(_) => "train",
            Run::Eval(_) => "eval",
            Run::Predict(_) => "predict",
        }
    }

    pub fn out(&self) -> &Path {
        match self {
            Run::Synth(r) => &r.out,
            Run::Prepare(r) => &r.out,
            Run::Train(r) => &r.out,
            Run::Eval(r) => &r.out,
            Run::Predict(r) => &r.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Run::Synth(r) => r.out = out,
            Run::Prepare(r) => r.out = out,
            Run::Train(r) => r.out = out,
            Run::Eval(r) => r.out = out,
            Run::Predict(r) => r.out = out,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Run::Synth(r) => Some(r.spec.seed),
            Run::Train(r) => Some(r.train.seed),
            _ => None,
        }
    }

    pub fn execute(&self) -> Result<Outcome> {
        fs::create_dir_all(self.out())
            .with_context(|| format!("creating {}", self.out().display()))?;
        match self {
            Run::Synth(r) => r.execute(),
            Run::Prepare(r) => r.execute(),
            Run::Train(r) => r.execute(),
            Run::Eval(r) => r.execute(),
            Run::Predict(r) => r.execute(),
        }
    }
}

impl SynthRun {
    fn execute(&self) -> Result<Outcome> {
        let logs = synth_generate(&self.spec)?;
        let path = self.out.join(LOGS_FILE);
        fs::write(&path, serialize_logs(&logs.checkins))
            .with_context(|| format!("writing {}", path.display()))?;
        log::info!(
            "{} check-ins from {} cabs over {} cells, {} deviations",
            logs.checkins.len(),
            self.spec.cabs,
            logs.visited_cells,
            logs.deviations
        );
        Ok(Outcome {
            outputs: vec![path],
            ..Outcome::default()
        })
    }
}

impl PrepareRun {
    fn execute(&self) -> Result<Outcome> {
        let text = fs::read_to_string(&self.input)
            .with_context(|| format!("reading {}", self.input.display()))?;
        let logs = parse_logs(text.lines())
            .with_context(|| format!("parsing {}", self.input.display()))?;
        let data = prepare(&logs.records, self.split, self.time_slots)?;
        ensure!(
            !data.users.is_empty(),
            "no user has enough sessions to split"
        );
        let s = &data.stats;
        log::info!(
            "{} users, {} locations, {} logs, {} sessions (mean length {:.2}); {} users kept",
            s.num_users,
            s.num_locations,
            s.num_logs,
            s.num_sessions,
            s.avg_session_len,
            data.users.len()
        );
        Ok(Outcome {
            inputs: vec![self.input.clone()],
            outputs: bundle::write_bundle(&self.out, &data)?,
            ..Outcome::default()
        })
    }
}

fn epoch_line(epoch: usize, lr: f64, loss: f64, hits1: f64, mrr: f64) -> String {
    format!("{epoch}\t{lr}\t{loss}\t{hits1}\t{mrr}\n")
}

pub const TRAIN_LOG_HEADER: &str = "epoch\tlr\ttrain_loss\tvalid_hits1\tvalid_mrr\n";

/// Trains `model` on the bundle's training split, validating on its
/// validation split.
fn train_model(
    data: &lightmove_core::data::PreparedData,
    model: &ModelConfig,
    train: &TrainConfig,
    sliding: bool,
    log_text: &mut String,
) -> Result<lightmove_core::train::FitOutcome> {
    let train_ex = data.examples(Split::Train, model.horizon, model.session_len, sliding);
    let valid_ex = data.examples(Split::Valid, model.horizon, model.session_len, sliding);
    ensure!(
        !train_ex.is_empty(),
        "the training split yields no examples"
    );
    ensure!(
        !valid_ex.is_empty(),
        "the validation split yields no examples"
    );
    log::info!(
        "{} training and {} validation examples",
        train_ex.len(),
        valid_ex.len()
    );
    let init = Model::new(model.clone(), train.seed)?;
    let mut hooks = ParallelValidation {
        on_epoch: |r: &lightmove_core::train::EpochRecord| {
            log_text.push_str(&epoch_line(
                r.epoch,
                r.lr,
                r.train_loss,
                r.valid.hits1,
                r.valid.mrr,
            ))
        },
    };
    Ok(fit_with(init, &train_ex, &valid_ex, train, &mut hooks)?)
}

impl TrainRun {
    fn execute(&self) -> Result<Outcome> {
        let data = bundle::read_bundle(&self.data)?;
        check_vocabulary(&self.model, &data)?;
        let mut log_text = String::from(TRAIN_LOG_HEADER);
        let outcome = train_model(&data, &self.model, &self.train, self.sliding, &mut log_text)?;
        let best = outcome.best;
        log::info!(
            "best epoch {} of {}: valid hits@1 {:.4} mrr {:.4}",
            best.epoch,
            outcome.log.len(),
            best.valid.hits1,
            best.valid.mrr
        );
        let descriptor = self.data.join(DESCRIPTOR);
        let ckpt = Checkpoint {
            meta: Meta {
                epoch: best.epoch,
                valid: best.valid,
                adam_step: best.optimizer.step,
                train: self.train,
                dataset_sha256: sha256_file(&descriptor)?,
            },
            model: best.model,
            optimizer: best.optimizer,
        };
        let ckpt_path = self.out.join(CHECKPOINT_FILE);
        checkpoint::save(&ckpt_path, &ckpt)?;
        let log_path = self.out.join(TRAIN_LOG_FILE);
        fs::write(&log_path, log_text)
            .with_context(|| format!("writing {}", log_path.display()))?;
        Ok(Outcome {
            inputs: bundle_inputs(&self.data),
            outputs: vec![ckpt_path, log_path],
            ..Outcome::default()
        })
    }
}

fn bundle_inputs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = bundle::SPLITS
        .iter()
        .map(|&s| dir.join(bundle::split_file(s)))
        .collect();
    v.push(dir.join(DESCRIPTOR));
    v
}

fn check_vocabulary(cfg: &ModelConfig, data: &lightmove_core::data::PreparedData) -> Result<()> {
    let e = &data.encoder;
    if cfg.num_locations != e.locations.len()
        || cfg.num_users != e.users.len()
        || cfg.num_time_slots != e.time_slots
    {
        bail!(
            "model expects {} locations, {} users, {} time slots; the dataset has {}, {}, {}",
            cfg.num_locations,
            cfg.num_users,
            cfg.num_time_slots,
            e.locations.len(),
            e.users.len(),
            e.time_slots
        );
    }
    Ok(())
}

/// Loads a checkpoint and the bundle it was trained on, refusing a bundle
/// whose descriptor differs from the recorded one.
fn load_pair(
    data_dir: &Path,
    ckpt_path: &Path,
) -> Result<(lightmove_core::data::PreparedData, Checkpoint)> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let digest = sha256_file(&data_dir.join(DESCRIPTOR))?;
    if digest != ckpt.meta.dataset_sha256 {
        bail!(
            "checkpoint {} was trained on a dataset with descriptor digest {}, but {} has {}",
            ckpt_path.display(),
            ckpt.meta.dataset_sha256,
            data_dir.display(),
            digest
        );
    }
    let data = bundle::read_bundle(data_dir)?;
    check_vocabulary(&ckpt.model.config, &data)?;
    Ok((data, ckpt))
}

fn examples_for(
    data: &lightmove_core::data::PreparedData,
    cfg: &ModelConfig,
    split: Split,
    sliding: bool,
) -> Result<Vec<Example>> {
    let ex = data.examples(split, cfg.horizon, cfg.session_len, sliding);
    ensure!(!ex.is_empty(), "the {split:?} split yields no examples");
    Ok(ex)
}

impl EvalRun {
    fn execute(&self) -> Result<Outcome> {
        let (data, ckpt) = load_pair(&self.data, &self.checkpoint)?;
        let cfg = &ckpt.model.config;
        let examples = examples_for(&data, cfg, self.split, self.sliding)?;
        let mut reports = vec![timed_evaluate(&ckpt.model, &examples)?];
        let sequences = data.train_sequences();
        for kind in &self.baselines {
            let predictor: Box<dyn Predictor + Sync> = match kind {
                BaselineKind::Frequency => Box::new(FrequencyBaseline::fit(
                    &sequences,
                    cfg.num_locations,
                    cfg.horizon,
                )?),
                BaselineKind::Markov1 => Box::new(MarkovBaseline::fit(
                    &sequences,
                    cfg.num_locations,
                    cfg.horizon,
                )?),
                BaselineKind::PlainGru => {
                    let gru_cfg = ModelConfig {
                        architecture: Architecture::PlainGru,
                        ..cfg.clone()
                    };
                    log::info!("training the plain GRU baseline");
                    let mut sink = String::new();
                    Box::new(
                        train_model(&data, &gru_cfg, &ckpt.meta.train, self.sliding, &mut sink)?
                            .best
                            .model,
                    )
                }
            };
            reports.push(timed_evaluate(&predictor, &examples)?);
        }
        let tsv = reports
            .iter()
            .map(EvalReport::to_tsv)
            .collect::<Vec<_>>()
            .join("\n");
        let table = comparison_table(&reports);
        log::info!("\n{table}");
        let paths = [
            (self.out.join(REPORT_TSV), tsv),
            (
                self.out.join(REPORT_JSON),
                serde_json::to_string_pretty(&reports)? + "\n",
            ),
            (self.out.join(COMPARISON_FILE), table),
        ];
        for (p, text) in &paths {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        let outputs: Vec<PathBuf> = paths.into_iter().map(|(p, _)| p).collect();
        let mut inputs = bundle_inputs(&self.data);
        inputs.push(self.checkpoint.clone());
        Ok(Outcome {
            inputs,
            timed: outputs.clone(),
            outputs,
        })
    }
}

impl PredictRun {
    fn execute(&self) -> Result<Outcome> {
        ensure!(self.top_k > 0, "top-k must be positive");
        let (data, ckpt) = load_pair(&self.data, &self.checkpoint)?;
        let cfg = &ckpt.model.config;
        let examples = examples_for(&data, cfg, self.split, self.sliding)?;
        let predictions = crate::report::predict_all(&ckpt.model, &examples)?;
        let locations = &data.encoder.locations;
        let users = &data.encoder.users;
        let mut out = String::from("example\tuser\tstep\trank\tlocation\tprobability\ttarget\n");
        for (i, (ex, p)) in examples.iter().zip(&predictions).enumerate() {
            let user = users.name(ex.batch.user).unwrap_or("?");
            for step in 0..p.rows() {
                let row = p.row_slice(step);
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                let target = ex.targets[step]
                    .and_then(|t| locations.name(t))
                    .unwrap_or("");
                for (rank, &loc) in order.iter().take(self.top_k).enumerate() {
                    let name = locations.name(loc).unwrap_or("?");
                    let _ = writeln!(
                        out,
                        "{i}\t{user}\t{}\t{}\t{name}\t{}\t{target}",
                        step + 1,
                        rank + 1,
                        row[loc]
                    );
                }
            }
        }
        let path = self.out.join(PREDICTIONS_FILE);
        fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
        let mut inputs = bundle_inputs(&self.data);
        inputs.push(self.checkpoint.clone());
        Ok(Outcome {
            inputs,
            outputs: vec![path],
            ..Outcome::default()
        })
    }
}
