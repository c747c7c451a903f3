use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lightmove::bundle::read_descriptor;
use lightmove::run::{EvalRun, PredictRun, PrepareRun, Run, SynthRun, TrainRun};
use lightmove::{execute_recorded, replay, Variant};
use lightmove_core::data::{Segmentation, Split, SplitSpec, SynthSpec};
use lightmove_core::eval::BaselineKind;
use lightmove_core::model::{JumpCount, Resize, RowOrder, SolverConfig};
use lightmove_core::train::{Selection, TrainConfig};
use lightmove_core::ModelConfig;

#[derive(Parser)]
#[command(
    name = "lightmove",
    version,
    about = "Next-location prediction with jump-augmented neural ODEs"
)]
struct Cli {
    /// Worker threads for evaluation and validation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic taxi fleet log.
    Synth(SynthArgs),
    /// Segment and split a check-in log into a dataset bundle.
    Prepare(PrepareArgs),
    /// Train a model on a dataset bundle.
    Train(TrainArgs),
    /// Evaluate a checkpoint, optionally against baselines.
    Eval(EvalArgs),
    /// Write the top-ranked locations for every example of a split.
    Predict(PredictArgs),
    /// Re-run a recorded command and check that its outputs reproduce.
    Replay(ReplayArgs),
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once('x')
        .ok_or_else(|| format!("grid {s:?} is not of the form WxH"))?;
    let dim = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| format!("grid {s:?} is not of the form WxH"))
    };
    Ok((dim(w)?, dim(h)?))
}

#[derive(Args)]
struct SynthArgs {
    /// Grid size as WIDTHxHEIGHT, e.g. 4x4.
    #[arg(long, value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, default_value_t = 5)]
    cabs: usize,
    /// Logs per cab.
    #[arg(long, default_value_t = 2000)]
    steps: u64,
    /// Probability that a log reports a neighbouring cell.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    routes_per_cab: usize,
    #[arg(long, default_value_t = 8)]
    max_route_len: usize,
    /// Seconds between logs.
    #[arg(long, default_value_t = 300)]
    interval: u64,
    /// Unix time of the first log.
    #[arg(long, default_value_t = SynthSpec::default().start)]
    start: u64,
    #[arg(long, env = "LIGHTMOVE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Check-ins per session.
    #[arg(long, default_value_t = 9, conflicts_with = "session_gap")]
    session_size: usize,
    /// Start a new session after a gap of more than this many seconds.
    #[arg(long)]
    session_gap: Option<u64>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.70, 0.15, 0.15])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 24)]
    time_slots: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResizeArg {
    Slice,
    Fc,
}

#[derive(Clone, Copy, ValueEnum)]
enum RowOrderArg {
    LongFirst,
    ShortFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum JumpCountArg {
    Exact,
    PlusOne,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Mrr,
    Hits1,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Jump cell, jump count, solver and adaptive gates, e.g. G2E or L5RF.
    #[arg(long, default_value = "G2E")]
    variant: Variant,
    #[arg(long, default_value_t = 50)]
    loc_dim: usize,
    #[arg(long, default_value_t = 10)]
    time_dim: usize,
    #[arg(long, default_value_t = 20)]
    user_dim: usize,
    /// Maximum check-ins in the recent session.
    #[arg(long, default_value_t = 9)]
    session_len: usize,
    /// Future steps predicted per example.
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long, default_value_t = 0.3)]
    dropout: f64,
    /// Solver step size on the unit interval.
    #[arg(long, default_value_t = 0.25)]
    step: f64,
    #[arg(long, value_enum, default_value_t = ResizeArg::Slice)]
    resize: ResizeArg,
    #[arg(long, value_enum, default_value_t = RowOrderArg::LongFirst)]
    row_order: RowOrderArg,
    #[arg(long, value_enum, default_value_t = JumpCountArg::Exact)]
    jump_count: JumpCountArg,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    decay: f64,
    #[arg(long, default_value_t = 0.0005)]
    min_lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    l2: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, value_enum, default_value_t = SelectionArg::Mrr)]
    selection: SelectionArg,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long, env = "LIGHTMOVE_SEED", default_value_t = 0)]
    seed: u64,
    /// Build one example per history length instead of one per user.
    #[arg(long)]
    sliding: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Comma-separated: frequency, markov1, plain_gru.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<BaselineKind>,
    #[arg(long)]
    sliding: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    sliding: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// A manifest.json written by an earlier run.
    manifest: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_train(a: TrainArgs) -> Result<Run> {
    let d = read_descriptor(&a.data)?;
    let mut model = ModelConfig {
        num_locations: d.locations.len(),
        num_users: d.users.len(),
        num_time_slots: d.time_slots,
        loc_dim: a.loc_dim,
        time_dim: a.time_dim,
        user_dim: a.user_dim,
        session_len: a.session_len,
        horizon: a.horizon,
        jump_count: match a.jump_count {
            JumpCountArg::Exact => JumpCount::Exact,
            JumpCountArg::PlusOne => JumpCount::PlusOne,
        },
        solver: SolverConfig {
            step: a.step,
            ..SolverConfig::default()
        },
        dropout: a.dropout,
        resize: match a.resize {
            ResizeArg::Slice => Resize::SliceLastM,
            ResizeArg::Fc => Resize::Fc,
        },
        row_order: match a.row_order {
            RowOrderArg::LongFirst => RowOrder::LongThenShort,
            RowOrderArg::ShortFirst => RowOrder::ShortThenLong,
        },
        init_scale: a.init_scale,
        ..ModelConfig::default()
    };
    a.variant.apply(&mut model);
    model.validate()?;
    let train = TrainConfig {
        learning_rate: a.lr,
        decay: a.decay,
        min_lr: a.min_lr,
        l2: a.l2,
        epochs: a.epochs,
        seed: a.seed,
        selection: match a.selection {
            SelectionArg::Mrr => Selection::Mrr,
            SelectionArg::Hits1 => Selection::Hits1,
        },
        tolerance: a.tolerance,
        patience: a.patience,
        ..TrainConfig::default()
    };
    train.validate()?;
    Ok(Run::Train(TrainRun {
        data: a.data,
        variant: a.variant.to_string(),
        model,
        train,
        sliding: a.sliding,
        out: a.out,
    }))
}

fn resolve(command: Command) -> Result<Run> {
    Ok(match command {
        Command::Synth(a) => Run::Synth(SynthRun {
            spec: SynthSpec {
                width: a.grid.0,
                height: a.grid.1,
                cabs: a.cabs,
                routes_per_cab: a.routes_per_cab,
                noise: a.noise,
                duration: a.steps * a.interval,
                interval: a.interval,
                start: a.start,
                max_route_len: a.max_route_len,
                seed: a.seed,
            },
            out: a.out,
        }),
        Command::Prepare(a) => {
            let segmentation = match a.session_gap {
                Some(gap) => Segmentation::GapThreshold(gap),
                None => Segmentation::FixedCount(a.session_size),
            };
            let ratios = [a.ratios[0], a.ratios[1], a.ratios[2]];
            Run::Prepare(PrepareRun {
                input: a.input,
                split: SplitSpec::new(ratios, segmentation)?,
                time_slots: a.time_slots,
                out: a.out,
            })
        }
        Command::Train(a) => resolve_train(a)?,
        Command::Eval(a) => Run::Eval(EvalRun {
            data: a.data,
            checkpoint: a.checkpoint,
            split: a.split.into(),
            baselines: a.baselines,
            sliding: a.sliding,
            out: a.out,
        }),
        Command::Predict(a) => Run::Predict(PredictRun {
            data: a.data,
            checkpoint: a.checkpoint,
            split: a.split.into(),
            top_k: a.top_k,
            sliding: a.sliding,
            out: a.out,
        }),
        Command::Replay(_) => unreachable!("replay is handled before resolution"),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let manifest = match cli.command {
        Command::Replay(a) => replay(&a.manifest, a.out)?,
        other => execute_recorded(&resolve(other)?)?,
    };
    for a in &manifest.outputs {
        println!("{}\t{}", a.sha256, a.path.display());
    }
    Ok(())
}
