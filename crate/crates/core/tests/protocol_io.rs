use fairscore::protocol::{
    join_trials, logits_to_score, parse_canonical_tsv, parse_protocol, parse_scores,
    partition_by_group, render_canonical_tsv, render_protocol, ClassLabel, ColumnLayout,
    EvaluationSet, GroupLabel, JoinOptions, Orientation, ScoreRecord,
};
use fairscore::simgen::{generate, generate_set, SimConfig};
use fairscore::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

#[test]
fn generated_protocol_round_trips() {
    // 4 cells x 2500 = 10k lines.
    let g = generate(&SimConfig::symmetric(2500, 1.5, 5)).unwrap();
    let records = parse_protocol(g.protocol.as_bytes(), &ColumnLayout::default()).unwrap();
    assert_eq!(records.len(), 10_000);
    assert_eq!(render_protocol(&records), g.protocol);
    let again = parse_protocol(render_protocol(&records).as_bytes(), &ColumnLayout::default()).unwrap();
    assert_eq!(again, records);
}

#[test]
fn million_scores_match_generator_sum() {
    let g = generate(&SimConfig::symmetric(250_000, 2.0, 99)).unwrap();
    let scores = parse_scores(g.scores.as_bytes()).unwrap();
    assert_eq!(scores.len(), 1_000_000);
    assert_eq!(scores.len() as u64, g.manifest.total());
    let sum: f64 = scores.iter().map(|s| s.score).sum();
    let expected = g.manifest.score_sum();
    assert!(
        (sum - expected).abs() <= 1e-6 * expected.abs(),
        "{sum} vs {expected}"
    );
}

#[test]
fn join_ignores_input_order() {
    let g = generate(&SimConfig::symmetric(300, 1.0, 8)).unwrap();
    let trials = parse_protocol(g.protocol.as_bytes(), &ColumnLayout::default()).unwrap();
    let scores = parse_scores(g.scores.as_bytes()).unwrap();
    let o = Orientation::default();
    let base = join_trials(trials.clone(), scores.clone(), o, JoinOptions::default())
        .unwrap()
        .set;

    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    for _ in 0..5 {
        let mut t = trials.clone();
        let mut s = scores.clone();
        t.shuffle(&mut rng);
        s.shuffle(&mut rng);
        let shuffled = join_trials(t, s, o, JoinOptions::default()).unwrap().set;
        assert_eq!(shuffled, base);
    }
}

#[test]
fn partition_counts_match_generator_config() {
    let mut config = SimConfig::symmetric(120, 1.0, 4)
        .shift_mean(&GroupLabel::female(), ClassLabel::Spoof, 0.3);
    config.models[3].count = 77;
    let set = generate_set(&config, Orientation::default()).unwrap();
    let total = set.len();
    let parts = partition_by_group(set);
    assert_eq!(parts.all.len(), total);
    assert_eq!(parts.groups.values().map(EvaluationSet::len).sum::<usize>(), total);
    for m in &config.models {
        let subset = parts.group(&m.group).unwrap();
        let n = subset
            .trials()
            .iter()
            .filter(|t| t.trial.label == m.class)
            .count() as u64;
        assert_eq!(n, m.count, "{}/{}", m.group, m.class);
        assert_eq!(subset.orientation(), parts.all.orientation());
    }
}

#[test]
fn logits_extreme_values() {
    // 1 / (1 + e^-1) to 50 digits: 0.73105857863000487925...
    let v = logits_to_score(1000.0, 1001.0).unwrap();
    assert!((v - 0.731_058_578_630_004_9).abs() < 1e-15);
    assert_eq!(logits_to_score(0.0, 0.0).unwrap(), 0.5);
    assert!((logits_to_score(0.0, 3f64.ln()).unwrap() - 0.75).abs() < 1e-15);
    assert!(matches!(
        logits_to_score(f64::NAN, 0.0),
        Err(Error::NonFiniteInput(_))
    ));
}

#[test]
fn missing_and_orphan_scores() {
    let trials = parse_protocol(
        b"S1 a F bonafide\nS1 b F spoof\nS2 c M spoof\n",
        &ColumnLayout::default(),
    )
    .unwrap();
    let score = |u: &str| ScoreRecord {
        utt_id: u.into(),
        score: 0.5,
    };
    let o = Orientation::default();
    let err = join_trials(trials.clone(), vec![score("a"), score("c")], o, JoinOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::MissingScore(ids) if ids == ["b"]));

    let all = vec![score("a"), score("b"), score("c"), score("z")];
    assert!(matches!(
        join_trials(trials.clone(), all.clone(), o, JoinOptions::default()),
        Err(Error::OrphanScore(ids)) if ids == ["z"]
    ));
    let joined = join_trials(trials, all, o, JoinOptions { allow_orphans: true }).unwrap();
    assert_eq!(joined.orphans, ["z"]);
    assert_eq!(joined.set.len(), 3);
}

fn arb_set() -> impl Strategy<Value = EvaluationSet> {
    let trial = (
        "[A-Za-z0-9_]{1,8}",
        prop_oneof![Just("F"), Just("M"), Just("X")],
        any::<bool>(),
        prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -5.0..5.0f64],
    );
    proptest::collection::btree_map("[a-z0-9]{1,10}", trial, 1..40).prop_map(|m| {
        let text: String = m
            .iter()
            .map(|(utt, (spk, g, bona, _))| {
                let label = if *bona { "bonafide" } else { "spoof" };
                format!("{spk} {utt} {g} {label}\n")
            })
            .collect();
        let trials = parse_protocol(text.as_bytes(), &ColumnLayout::default()).unwrap();
        let scores = m
            .iter()
            .map(|(utt, (_, _, _, s))| ScoreRecord {
                utt_id: utt.clone(),
                score: *s,
            })
            .collect();
        join_trials(trials, scores, Orientation::default(), JoinOptions::default())
            .unwrap()
            .set
    })
}

proptest! {
    #[test]
    fn canonical_tsv_round_trip(set in arb_set()) {
        let text = render_canonical_tsv(&set);
        let back = parse_canonical_tsv(text.as_bytes(), set.orientation()).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(render_canonical_tsv(&back), text);
    }

    #[test]
    fn logits_complement(a in -1e6..1e6f64, b in -1e6..1e6f64) {
        let s = logits_to_score(a, b).unwrap() + logits_to_score(b, a).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn logits_monotone_in_margin(s in -50.0..50.0f64, d1 in -30.0..30.0f64, d2 in -30.0..30.0f64) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(logits_to_score(s, s + lo).unwrap() <= logits_to_score(s, s + hi).unwrap());
    }

    #[test]
    fn partition_is_lossless(set in arb_set()) {
        let n = set.len();
        let parts = partition_by_group(set);
        prop_assert_eq!(parts.groups.values().map(EvaluationSet::len).sum::<usize>(), n);
        for (g, subset) in &parts.groups {
            let expected = parts.all.trials().iter().filter(|t| &t.trial.group == g).count();
            prop_assert_eq!(subset.len(), expected);
        }
    }
}
