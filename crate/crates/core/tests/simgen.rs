use fairscore::protocol::{parse_protocol, parse_scores, ClassLabel, ColumnLayout, GroupLabel, Orientation};
use fairscore::simgen::{expected_rates, generate, sample, Manifest, SimConfig};

#[test]
fn cell_means_within_clt_bound() {
    let n = 100_000u64;
    let config = SimConfig::symmetric(n, 1.7, 31)
        .shift_mean(&GroupLabel::female(), ClassLabel::Spoof, -0.4);
    let draws = sample(&config).unwrap();
    for m in &config.models {
        let (sum, count) = draws
            .iter()
            .filter(|s| s.trial.group == m.group && s.trial.label == m.class)
            .fold((0.0, 0u64), |(s, c), d| (s + d.score, c + 1));
        assert_eq!(count, n);
        let mean = sum / n as f64;
        let bound = 4.0 * m.stddev / (n as f64).sqrt();
        assert!((mean - m.mean).abs() < bound, "{}/{}: {mean} vs {}", m.group, m.class, m.mean);
    }
}

#[test]
fn cell_variance_is_configured() {
    let mut config = SimConfig::symmetric(50_000, 0.0, 8);
    config.models[0].stddev = 2.5;
    let draws = sample(&config).unwrap();
    let first: Vec<f64> = draws.iter().take(50_000).map(|s| s.score).collect();
    let mean = first.iter().sum::<f64>() / first.len() as f64;
    let var = first.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (first.len() - 1) as f64;
    // sd of the sample variance for a normal is sigma^2 sqrt(2 / (n - 1)).
    assert!((var - 6.25).abs() < 4.0 * 6.25 * (2.0 / 49_999.0f64).sqrt(), "{var}");
}

#[test]
fn manifest_matches_parsed_files() {
    let mut config = SimConfig::symmetric(3000, 2.0, 6).with_prefix("T");
    config.models[2].count = 1234;
    let g = generate(&config).unwrap();
    let m = Manifest::parse(&g.manifest.render()).unwrap();
    let trials = parse_protocol(g.protocol.as_bytes(), &ColumnLayout::default()).unwrap();
    let scores = parse_scores(g.scores.as_bytes()).unwrap();
    assert_eq!(trials.len(), scores.len());
    for (i, cell) in m.cells.iter().enumerate() {
        let ids: Vec<&str> = trials
            .iter()
            .filter(|t| t.group == cell.group && t.label == cell.class)
            .map(|t| t.utt_id.as_str())
            .collect();
        assert_eq!(ids.len() as u64, cell.count, "cell {i}");
        let sum: f64 = scores
            .iter()
            .filter(|s| ids.binary_search(&s.utt_id.as_str()).is_ok())
            .map(|s| s.score)
            .sum();
        assert!((sum - cell.score_sum).abs() <= 1e-9 * cell.score_sum.abs().max(1.0));
    }
}

#[test]
fn repeated_generation_is_byte_identical() {
    let config = SimConfig::symmetric(20_000, 1.0, 123);
    assert_eq!(generate(&config).unwrap(), generate(&config).unwrap());
}

#[test]
fn expected_counts_follow_the_tail_probability() {
    let config = SimConfig::symmetric(1000, 2.0, 0);
    let o = Orientation::default();
    // Oriented threshold -1 sits exactly between the cell means 0 and -2.
    for cell in expected_rates(&config, o, -1.0) {
        let p = cell.p_decide_positive;
        assert!((p - if cell.class == ClassLabel::Spoof { 0.841_344_746_068_542_9 } else { 0.158_655_253_931_457_05 }).abs() < 1e-15);
        let e = cell.expected;
        assert!((e.tp + e.fp + e.tn + e.fn_ - 1000.0).abs() < 1e-9);
    }
}
