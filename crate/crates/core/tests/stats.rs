use fairscore::stats::{holm_correct, two_proportion_z, ProportionSample};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn z_test_matches_high_precision_reference() {
    // Reference computed with 50-digit arithmetic:
    // z = (0.5 - 0.6) / sqrt(0.55 * 0.45 * (1/100 + 1/100))
    // p = erfc(|z| / sqrt 2)
    let r = two_proportion_z(
        ProportionSample::new(50, 100).unwrap(),
        ProportionSample::new(60, 100).unwrap(),
    );
    assert!((r.z - -1.421_338_109_037_402_9).abs() < 1e-5);
    assert!((r.p_two_sided - 0.155_218_489_684_684_03).abs() < 1e-5);
    // Tighter than the requirement, to catch a coarse normal approximation.
    assert!((r.p_two_sided - 0.155_218_489_684_684_03).abs() < 1e-13);
}

#[test]
fn holm_hand_step_down() {
    // Sorted: 0.01 * 3 = 0.03, 0.03 * 2 = 0.06, 0.04 * 1 -> max(0.06, 0.04).
    let h = holm_correct(&[0.01, 0.04, 0.03], 0.05).unwrap();
    let expected = [0.03, 0.06, 0.06];
    for (a, e) in h.p_adjusted.iter().zip(expected) {
        assert!((a - e).abs() < 1e-15, "{a} vs {e}");
    }
    assert_eq!(h.reject, [true, false, false]);
}

#[test]
fn holm_rejects_everything_bonferroni_rejects() {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut extra = 0;
    for _ in 0..500 {
        let m = rng.gen_range(1..=25);
        let p: Vec<f64> = (0..m)
            .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..0.01) } else { rng.gen() })
            .collect();
        let alpha = 0.05;
        let holm = holm_correct(&p, alpha).unwrap();
        for (i, &pi) in p.iter().enumerate() {
            let bonferroni = pi * (m as f64) < alpha;
            assert!(!bonferroni || holm.reject[i], "{p:?}");
            extra += usize::from(holm.reject[i] && !bonferroni);
        }
    }
    assert!(extra > 0, "never exercised a Holm-only rejection");
}
