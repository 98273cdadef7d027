use fairscore::fairness::{
    compare_rows, cross_check, evaluate_fairness, EoVariant, FairnessRow, GroupMetricValue,
    Metric, MetricValue, MetricVariants, Ratio, TeVariant,
};
use fairscore::protocol::{
    ClassLabel, EvaluationSet, GroupLabel, Orientation, Polarity, ScoreRecord, ScoredTrial,
    TrialRecord,
};
use fairscore::report::format_value;
use fairscore::scoring::{compute_det, compute_eer, OperatingPoint, SplitTag};
use fairscore::simgen::{brute_force_fairness, BruteForceMetrics};
use fairscore::stats::{holm_correct, HolmFamily, SignificanceConfig};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Case {
    set: EvaluationSet,
    op: OperatingPoint,
    variants: MetricVariants,
}

fn random_case(rng: &mut StdRng) -> Case {
    let n = rng.gen_range(2..=200);
    let groups = [GroupLabel::female(), GroupLabel::male(), GroupLabel::new("X").unwrap()];
    let coarse = rng.gen_bool(0.5);
    let n_groups = if rng.gen_bool(0.1) { 3 } else { 2 };
    let trials: Vec<ScoredTrial> = (0..n)
        .map(|i| {
            let group = match i {
                0 => groups[0].clone(),
                1 => groups[1].clone(),
                _ => groups[rng.gen_range(0..n_groups)].clone(),
            };
            let score = if coarse {
                rng.gen_range(-8i32..=8) as f64 / 4.0
            } else {
                rng.gen_range(-3.0..3.0)
            };
            ScoredTrial {
                trial: TrialRecord {
                    utt_id: format!("u{i:04}"),
                    speaker_id: format!("s{}", i % 7),
                    group,
                    label: if rng.gen_bool(0.5) { ClassLabel::Bonafide } else { ClassLabel::Spoof },
                },
                score,
            }
        })
        .collect();
    let polarity = if rng.gen_bool(0.5) { Polarity::HigherBonafide } else { Polarity::HigherSpoof };
    let positive = if rng.gen_bool(0.8) { ClassLabel::Spoof } else { ClassLabel::Bonafide };
    let o = Orientation::new(polarity, positive);
    let threshold = match rng.gen_range(0..4) {
        0 => o.orient(trials[rng.gen_range(0..n)].score),
        1 => rng.gen_range(-3.5..3.5),
        2 => -1e9,
        _ => 1e9,
    };
    let variants = MetricVariants {
        eo: if rng.gen_bool(0.5) { EoVariant::FprOnly } else { EoVariant::TprFprMean },
        te: if rng.gen_bool(0.5) { TeVariant::CountRatio } else { TeVariant::RateRatio },
    };
    Case {
        set: EvaluationSet::from_scored(trials, o).unwrap(),
        op: OperatingPoint::custom(threshold, o),
        variants,
    }
}

fn pair() -> (GroupLabel, GroupLabel) {
    (GroupLabel::female(), GroupLabel::male())
}

fn rows(case: &Case, sig: SignificanceConfig) -> Vec<FairnessRow> {
    let (f, m) = pair();
    evaluate_fairness(&case.set, &case.op, (&f, &m), case.variants, sig).unwrap()
}

#[test]
fn dual_path_agrees_on_fuzzed_sets() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let (f, m) = pair();
    let mut undefined_cells = 0;
    for _ in 0..1000 {
        let case = random_case(&mut rng);
        for family in [HolmFamily::PerRun, HolmFamily::PerMetric] {
            let sig = SignificanceConfig { alpha: 0.05, family };
            let a = evaluate_fairness(&case.set, &case.op, (&f, &m), case.variants, sig).unwrap();
            let b = cross_check(&case.set, &case.op, (&f, &m), case.variants, sig).unwrap();
            compare_rows(&a, &b).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.first.value.is_defined(), y.first.value.is_defined());
                assert_eq!(x.second.value.is_defined(), y.second.value.is_defined());
                undefined_cells += usize::from(!x.first.value.is_defined());
            }
        }
    }
    assert!(undefined_cells > 0, "fuzzer never produced an undefined cell");
}

fn brute_field(b: &BruteForceMetrics, metric: Metric, v: MetricVariants) -> Option<(u128, u128)> {
    match metric {
        Metric::StatisticalParity => b.sp,
        Metric::EqualOpportunity => b.eop,
        Metric::EqualityOfOdds => match v.eo {
            EoVariant::FprOnly => b.eo_fpr,
            EoVariant::TprFprMean => b.eo_mean,
        },
        Metric::PredictiveParity => b.pp,
        Metric::TreatmentEquality => match v.te {
            TeVariant::CountRatio => b.te_count,
            TeVariant::RateRatio => b.te_rate,
        },
    }
}

#[test]
fn brute_force_tally_agrees() {
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..1000 {
        let case = random_case(&mut rng);
        let trials: Vec<TrialRecord> = case.set.trials().iter().map(|t| t.trial.clone()).collect();
        let scores: Vec<ScoreRecord> = case
            .set
            .trials()
            .iter()
            .map(|t| ScoreRecord {
                utt_id: t.trial.utt_id.clone(),
                score: t.score,
            })
            .collect();
        let brute =
            brute_force_fairness(&trials, &scores, case.op.threshold, case.op.orientation).unwrap();
        for row in rows(&case, SignificanceConfig::default()) {
            for side in [&row.first, &row.second] {
                let expected = brute_field(&brute[&side.group], row.metric, case.variants)
                    .and_then(|(n, d)| Ratio::new(n, d));
                assert_eq!(side.value.exact, expected, "{} {}", row.metric, side.group);
                assert_eq!(side.value.is_defined(), expected.is_some());
            }
        }
    }
}

#[test]
fn balanced_four_trial_case() {
    // Per group: one trial in each confusion cell, so SP = 2/4.
    let o = Orientation::new(Polarity::HigherSpoof, ClassLabel::Spoof);
    let mut trials = Vec::new();
    for g in [GroupLabel::female(), GroupLabel::male()] {
        for (k, (label, score)) in [
            (ClassLabel::Spoof, 1.0),
            (ClassLabel::Bonafide, 1.0),
            (ClassLabel::Bonafide, 0.0),
            (ClassLabel::Spoof, 0.0),
        ]
        .into_iter()
        .enumerate()
        {
            trials.push(ScoredTrial {
                trial: TrialRecord {
                    utt_id: format!("{g}{k}"),
                    speaker_id: "s".into(),
                    group: g.clone(),
                    label,
                },
                score,
            });
        }
    }
    let case = Case {
        set: EvaluationSet::from_scored(trials, o).unwrap(),
        op: OperatingPoint::custom(0.5, o),
        variants: MetricVariants::default(),
    };
    let rows = rows(&case, SignificanceConfig::default());
    for r in &rows {
        assert_eq!(r.first.value.exact, r.second.value.exact);
        assert_eq!(r.diff, Some(0.0));
    }
    assert_eq!(rows[0].first.value.value, Some(0.5));
    assert_eq!(rows[4].first.value.value, Some(1.0));
}

#[test]
fn increasing_transforms_preserve_everything() {
    let mut rng = StdRng::seed_from_u64(3);
    let transforms: [fn(f64) -> f64; 3] = [|x| (x / 3.0).exp(), |x| x * x * x + x, |x| 2.0 * x + 7.0];
    let (f, m) = pair();
    for _ in 0..200 {
        let case = random_case(&mut rng);
        let o = case.set.orientation();
        let raw_t = o.orient(case.op.threshold);
        let base_rows = rows(&case, SignificanceConfig::default());
        let base_eer = compute_det(&case.set).ok().map(|c| compute_eer(&c).eer);
        for t in transforms {
            let moved = case.set.map_scores(t).unwrap();
            let op = OperatingPoint::custom(o.orient(t(raw_t)), o);
            let r = evaluate_fairness(&moved, &op, (&f, &m), case.variants, SignificanceConfig::default())
                .unwrap();
            compare_rows(&base_rows, &r).unwrap();
            let eer = compute_det(&moved).ok().map(|c| compute_eer(&c).eer);
            match (base_eer, eer) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12),
                (a, b) => assert_eq!(a.is_some(), b.is_some()),
            }
        }
    }
}

#[test]
fn group_swap_negates_diff() {
    let mut rng = StdRng::seed_from_u64(4);
    let (f, m) = pair();
    for _ in 0..300 {
        let case = random_case(&mut rng);
        let sig = SignificanceConfig::default();
        let fm = evaluate_fairness(&case.set, &case.op, (&f, &m), case.variants, sig).unwrap();
        let mf = evaluate_fairness(&case.set, &case.op, (&m, &f), case.variants, sig).unwrap();
        for (a, b) in fm.iter().zip(&mf) {
            assert_eq!(a.diff.map(|d| -d), b.diff);
            assert_eq!(a.first, b.second);
            assert_eq!(a.p_raw, b.p_raw);
            assert_eq!(a.significant, b.significant);
            assert_eq!(a.swapped().diff, b.diff);
        }
    }
}

#[test]
fn polarity_flip_with_negated_scores() {
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..300 {
        let case = random_case(&mut rng);
        let o = case.set.orientation();
        let flipped = Orientation::new(o.polarity.flipped(), o.positive_class);
        let set = case.set.map_scores(|x| -x).unwrap().with_orientation(flipped);
        let other = Case {
            set,
            op: OperatingPoint::custom(case.op.threshold, flipped),
            variants: case.variants,
        };
        let d0: Vec<bool> = case.set.oriented().map(|(s, _)| s >= case.op.threshold).collect();
        let d1: Vec<bool> = other.set.oriented().map(|(s, _)| s >= other.op.threshold).collect();
        assert_eq!(d0, d1);
        compare_rows(&rows(&case, Default::default()), &rows(&other, Default::default())).unwrap();

        if let (Ok(a), Ok(b)) = (
            OperatingPoint::at_eer(&case.set, SplitTag::Dev),
            OperatingPoint::at_eer(&other.set, SplitTag::Dev),
        ) {
            assert_eq!(a.eer_at_derivation, b.eer_at_derivation);
            assert_eq!(a.threshold, b.threshold);
        }
    }
}

fn fixture(metric: Metric, f: f64, m: f64) -> FairnessRow {
    let v = |x: f64| MetricValue {
        value: Some(x),
        exact: None,
        proportion: None,
    };
    FairnessRow::new(
        metric,
        GroupMetricValue { group: GroupLabel::female(), value: v(f) },
        GroupMetricValue { group: GroupLabel::male(), value: v(m) },
    )
}

#[test]
fn paper_table_differences() {
    // Group values taken from the published tables, with the printed difference.
    let cases = [
        (Metric::StatisticalParity, 0.380, 0.290, 3, "0.090"),
        (Metric::EqualOpportunity, 0.474, 0.360, 3, "0.114"),
        (Metric::EqualityOfOdds, 0.110, 0.096, 3, "0.014"),
        (Metric::TreatmentEquality, 2.7904, 1.574, 4, "1.2164"),
    ];
    for (metric, f, m, places, shown) in cases {
        let row = fixture(metric, f, m);
        assert_eq!(row.diff, Some(f - m));
        assert_eq!(format_value(row.diff, places), shown);
    }
    // The published predictive-parity row for AASIST prints -0.007 beside
    // 0.679 and 0.687; the difference of the printed columns is -0.008.
    let row = fixture(Metric::PredictiveParity, 0.679, 0.687);
    assert_eq!(format_value(row.diff, 3), "-0.008");
}

#[test]
fn insignificant_published_p_value_stays_insignificant() {
    // Equal-opportunity column of the published table: four rows below
    // 1e-16 and LogSpec at 0.2171.
    let per_metric = [1e-17, 1e-17, 0.2171, 1e-17, 1e-17];
    let h = holm_correct(&per_metric, 0.05).unwrap();
    assert!(!h.reject[2]);
    assert!(h.reject.iter().enumerate().all(|(i, &r)| r == (i != 2)));

    let mut per_run = vec![1e-17; 25];
    per_run[7] = 0.2171;
    per_run[19] = 0.003;
    let h = holm_correct(&per_run, 0.05).unwrap();
    assert!(!h.reject[7]);
}

proptest! {
    #[test]
    fn raw_p_above_alpha_is_never_rejected(others in proptest::collection::vec(0.0..=1.0f64, 0..30), pos in 0usize..30) {
        let mut p = others;
        let at = pos.min(p.len());
        p.insert(at, 0.2171);
        let h = holm_correct(&p, 0.05).unwrap();
        prop_assert!(!h.reject[at]);
        prop_assert!(h.p_adjusted[at] >= 0.2171);
    }
}
