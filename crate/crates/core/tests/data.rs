use lightmove_core::data::{
    cell_name, chronological_split, dataset_stats, group_by_user, parse_logs, prepare,
    segment_sessions, serialize_logs, synth_generate, CheckIn, Segmentation, Split, SplitSpec,
    SynthSpec,
};
use proptest::prelude::*;

fn fleet(noise: f64, steps: u64, seed: u64) -> SynthSpec {
    SynthSpec {
        noise,
        duration: steps * 300,
        seed,
        ..SynthSpec::default()
    }
}

fn locations_of(records: &[CheckIn], user: &str) -> Vec<String> {
    records
        .iter()
        .filter(|c| c.user == user)
        .map(|c| c.location.clone())
        .collect()
}

#[test]
fn noise_free_cabs_are_periodic() {
    let logs = synth_generate(&fleet(0.0, 300, 1)).unwrap();
    for (cab, routes) in logs.routes.iter().enumerate() {
        let period: usize = routes.iter().map(Vec::len).sum();
        let seq = locations_of(&logs.checkins, &lightmove_core::data::cab_name(cab));
        assert_eq!(seq.len(), 300);
        for i in period..seq.len() {
            assert_eq!(seq[i], seq[i - period]);
        }
        assert_eq!(seq[0], cell_name(routes[0][0]));
    }
    assert_eq!(logs.deviations, 0);
}

#[test]
fn same_seed_same_logs() {
    let a = synth_generate(&fleet(0.2, 200, 9)).unwrap();
    let b = synth_generate(&fleet(0.2, 200, 9)).unwrap();
    assert_eq!(a, b);
    let c = synth_generate(&fleet(0.2, 200, 10)).unwrap();
    assert_ne!(a.checkins, c.checkins);
}

#[test]
fn noise_rate_matches_the_requested_fraction() {
    let spec = fleet(0.1, 1000, 4);
    let logs = synth_generate(&spec).unwrap();
    // Count deviations directly against each cab's schedule.
    let mut off_route = 0;
    for (cab, routes) in logs.routes.iter().enumerate() {
        let schedule: Vec<usize> = routes.concat();
        let seq = locations_of(&logs.checkins, &lightmove_core::data::cab_name(cab));
        for (step, loc) in seq.iter().enumerate() {
            if *loc != cell_name(schedule[step % schedule.len()]) {
                off_route += 1;
            }
        }
    }
    assert_eq!(off_route, logs.deviations);
    let rate = off_route as f64 / 5000.0;
    assert!((rate - 0.1).abs() <= 0.02, "{rate}");
}

#[test]
fn stats_match_generator_bookkeeping() {
    let spec = fleet(0.2, 500, 2);
    let logs = synth_generate(&spec).unwrap();
    let trajectories: Vec<_> = group_by_user(&logs.checkins)
        .iter()
        .map(|(u, c)| segment_sessions(u, c, Segmentation::FixedCount(9)))
        .collect();
    let stats = dataset_stats(&trajectories);
    assert_eq!(stats.num_users, spec.cabs);
    assert_eq!(stats.num_logs, spec.cabs * spec.steps());
    assert_eq!(stats.num_locations, logs.visited_cells);
    // 500 = 55 * 9 + 5
    assert_eq!(stats.num_sessions, spec.cabs * 56);
    assert_eq!(stats.avg_session_len, 500.0 / 56.0);
}

#[test]
fn generated_logs_round_trip_through_the_parser() {
    let logs = synth_generate(&fleet(0.1, 100, 3)).unwrap();
    let text = serialize_logs(&logs.checkins);
    let parsed = parse_logs(text.lines()).unwrap();
    assert_eq!(parsed.records, logs.checkins);
    assert_eq!(serialize_logs(&parsed.records), text);
}

#[test]
fn ten_session_user_splits_seven_one_two() {
    let records: Vec<CheckIn> = (0..30)
        .map(|i| CheckIn {
            user: "toy".into(),
            timestamp: i * 60,
            location: format!("p{}", i % 4),
        })
        .collect();
    let spec = SplitSpec::new([0.7, 0.15, 0.15], Segmentation::FixedCount(3)).unwrap();
    let prepared = prepare(&records, spec, 24).unwrap();
    let u = &prepared.users[0];
    assert_eq!([u.train.len(), u.valid.len(), u.test.len()], [7, 1, 2]);
    assert_eq!(prepared.stats.num_logs, 30);
    // Valid has a single session and cannot form an example; test can.
    assert!(prepared.examples(Split::Valid, 1, 3, false).is_empty());
    assert_eq!(prepared.examples(Split::Test, 3, 3, false).len(), 1);
}

#[test]
fn test_users_appear_in_training() {
    let logs = synth_generate(&fleet(0.2, 400, 5)).unwrap();
    let prepared = prepare(&logs.checkins, SplitSpec::default(), 24).unwrap();
    let train_users: Vec<usize> = prepared
        .examples(Split::Train, 3, 9, false)
        .iter()
        .map(|e| e.batch.user)
        .collect();
    for e in prepared.examples(Split::Test, 3, 9, false) {
        assert!(train_users.contains(&e.batch.user));
    }
}

fn arbitrary_logs() -> impl Strategy<Value = Vec<CheckIn>> {
    prop::collection::vec((0u8..3, 0u64..100_000, 0u8..6), 0..80).prop_map(|rows| {
        rows.into_iter()
            .map(|(u, t, l)| CheckIn {
                user: format!("u{u}"),
                timestamp: t,
                location: format!("x{l}"),
            })
            .collect()
    })
}

fn arbitrary_rule() -> impl Strategy<Value = Segmentation> {
    prop_oneof![
        (1usize..10).prop_map(Segmentation::FixedCount),
        (0u64..20_000).prop_map(Segmentation::GapThreshold),
    ]
}

proptest! {
    #[test]
    fn segmentation_partitions_sorted_checkins(logs in arbitrary_logs(), rule in arbitrary_rule()) {
        for (user, records) in group_by_user(&logs) {
            let t = segment_sessions(&user, &records, rule);
            let mut sorted = records.clone();
            sorted.sort_by_key(|c| c.timestamp);
            let flat: Vec<CheckIn> = t.checkins().cloned().collect();
            prop_assert_eq!(flat, sorted);
            for (i, s) in t.sessions.iter().enumerate() {
                prop_assert_eq!(s.index, i);
                prop_assert!(!s.is_empty());
                prop_assert!(s.checkins.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
                match rule {
                    Segmentation::FixedCount(k) => prop_assert!(s.len() <= k),
                    Segmentation::GapThreshold(gap) => {
                        prop_assert!(s.checkins.windows(2).all(|w| w[1].timestamp - w[0].timestamp <= gap))
                    }
                }
            }
        }
    }

    #[test]
    fn splits_are_chronological(logs in arbitrary_logs(), k in 1usize..4) {
        for (user, records) in group_by_user(&logs) {
            let t = segment_sessions(&user, &records, Segmentation::FixedCount(k));
            let Some(s) = chronological_split(&t, SplitSpec::default().ratios) else {
                prop_assert!(t.sessions.len() < 3);
                continue;
            };
            prop_assert_eq!(s.train.len() + s.valid.len() + s.test.len(), t.sessions.len());
            let stamps = |ss: &[lightmove_core::data::Session]| -> Vec<u64> {
                ss.iter().flat_map(|x| x.checkins.iter().map(|c| c.timestamp)).collect()
            };
            let (tr, va, te) = (stamps(&s.train), stamps(&s.valid), stamps(&s.test));
            if let (Some(a), Some(b)) = (tr.iter().max(), va.iter().min()) { prop_assert!(a <= b); }
            if let (Some(a), Some(b)) = (va.iter().max(), te.iter().min()) { prop_assert!(a <= b); }
            if let (Some(a), Some(b)) = (tr.iter().max(), te.iter().min()) { prop_assert!(a <= b); }
        }
    }

    #[test]
    fn parse_serialize_round_trip(logs in arbitrary_logs()) {
        let text = serialize_logs(&logs);
        let parsed = parse_logs(text.lines()).unwrap();
        prop_assert_eq!(&parsed.records, &logs);
        prop_assert_eq!(serialize_logs(&parsed.records), text);
    }
}
