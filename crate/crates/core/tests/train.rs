use lightmove_core::data::{prepare, synth_generate, Example, Split, SplitSpec, SynthSpec};
use lightmove_core::eval::Metrics;
use lightmove_core::train::{
    fit, fit_with, train_epoch, AdamState, EpochRecord, FitHooks, TrainConfig,
};
use lightmove_core::{Error, HistoryBatch, Model, ModelConfig, Visit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        num_locations: 6,
        num_users: 2,
        num_time_slots: 4,
        loc_dim: 4,
        time_dim: 2,
        user_dim: 2,
        session_len: 4,
        horizon: 2,
        jumps: 1,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

fn example(user: usize, short: &[usize], targets: [usize; 2]) -> Example {
    Example {
        batch: HistoryBatch {
            short: short
                .iter()
                .map(|&l| Visit {
                    location: l,
                    slot: l % 4,
                })
                .collect(),
            long: vec![Visit {
                location: 0,
                slot: 0,
            }],
            user,
        },
        targets: targets.map(Some).to_vec(),
    }
}

#[test]
fn single_example_loss_goes_down() {
    let mut model = Model::new(tiny(), 1).unwrap();
    let mut adam = AdamState::new(&model.params);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let ex = [example(0, &[1, 2, 3], [4, 5])];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let losses: Vec<f64> = (0..50)
        .map(|_| {
            train_epoch(
                &mut model,
                &mut adam,
                &ex,
                cfg.learning_rate,
                &cfg,
                &mut rng,
            )
            .unwrap()
        })
        .collect();
    let upticks = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(upticks <= 5, "{losses:?}");
    assert!(losses[49] < 0.5 * losses[0]);
}

#[test]
fn empty_epoch_is_an_error() {
    let mut model = Model::new(tiny(), 1).unwrap();
    let mut adam = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = train_epoch(
        &mut model,
        &mut adam,
        &[],
        0.01,
        &TrainConfig::default(),
        &mut rng,
    );
    assert!(matches!(r, Err(Error::Empty(_))));
}

fn dataset() -> (Vec<Example>, Vec<Example>, ModelConfig) {
    let logs = synth_generate(&SynthSpec {
        cabs: 3,
        duration: 300 * 300,
        seed: 3,
        ..SynthSpec::default()
    })
    .unwrap();
    let prepared = prepare(&logs.checkins, SplitSpec::default(), 24).unwrap();
    let cfg = ModelConfig {
        num_locations: prepared.encoder.locations.len(),
        num_users: prepared.encoder.users.len(),
        num_time_slots: 24,
        loc_dim: 6,
        time_dim: 2,
        user_dim: 2,
        horizon: 3,
        dropout: 0.1,
        ..ModelConfig::default()
    };
    (
        prepared.examples(Split::Train, 3, 9, false),
        prepared.examples(Split::Valid, 3, 9, false),
        cfg,
    )
}

#[test]
fn fitting_is_bit_reproducible() {
    let (train, valid, cfg) = dataset();
    let tc = TrainConfig {
        epochs: 3,
        learning_rate: 0.05,
        seed: 5,
        ..TrainConfig::default()
    };
    let a = fit(Model::new(cfg.clone(), 2).unwrap(), &train, &valid, &tc).unwrap();
    let b = fit(Model::new(cfg.clone(), 2).unwrap(), &train, &valid, &tc).unwrap();
    assert_eq!(a, b);
    let c = fit(
        Model::new(cfg, 2).unwrap(),
        &train,
        &valid,
        &TrainConfig { seed: 6, ..tc },
    )
    .unwrap();
    assert_ne!(a.log[0].train_loss, c.log[0].train_loss);
}

/// Checks that validation leaves parameters alone and reports a fixed
/// metric sequence, so retention can be observed directly.
struct Scripted {
    scores: Vec<f64>,
    calls: usize,
    seen: Vec<EpochRecord>,
}

impl FitHooks for Scripted {
    fn validate(&mut self, model: &Model, examples: &[Example]) -> lightmove_core::Result<Metrics> {
        let before = model.clone();
        let real = lightmove_core::eval::evaluate(model, examples)?;
        assert_eq!(&before, model);
        let mrr = self.scores[self.calls];
        self.calls += 1;
        Ok(Metrics { mrr, ..real })
    }

    fn on_epoch(&mut self, record: &EpochRecord) {
        self.seen.push(*record);
    }
}

#[test]
fn best_checkpoint_survives_worse_epochs() {
    let (train, valid, cfg) = dataset();
    let tc = TrainConfig {
        epochs: 4,
        learning_rate: 0.1,
        tolerance: 0.0,
        ..TrainConfig::default()
    };
    let mut hooks = Scripted {
        scores: vec![0.2, 0.7, 0.4, 0.7],
        calls: 0,
        seen: Vec::new(),
    };
    let out = fit_with(Model::new(cfg, 4).unwrap(), &train, &valid, &tc, &mut hooks).unwrap();
    assert_eq!(out.best.epoch, 2);
    assert_eq!(out.best.valid.mrr, 0.7);
    assert_eq!(hooks.seen.len(), 4);
    let lrs: Vec<f64> = out.log.iter().map(|r| r.lr).collect();
    assert_eq!(lrs, tc.schedule().collect::<Vec<_>>());
    assert!(!out.converged);
}

#[test]
fn fit_requires_examples() {
    let (train, _, cfg) = dataset();
    let model = Model::new(cfg, 1).unwrap();
    assert!(fit(model.clone(), &train, &[], &TrainConfig::default()).is_err());
    assert!(fit(model, &[], &train, &TrainConfig::default()).is_err());
}
