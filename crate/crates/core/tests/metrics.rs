//! Metric oracles: brute-force Hausdorff, direct-summation DFT, and a
//! hand-computed aggregation fixture.

use e2epark::metrics::*;
use e2epark::simulator::Outcome;
use e2epark::world::Point2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    let mut h = 0.0_f64;
    for p in a {
        h = h.max(b.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min));
    }
    for q in b {
        h = h.max(a.iter().map(|p| p.distance(*q)).fold(f64::INFINITY, f64::min));
    }
    h
}

fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Point2> {
    (0..n)
        .map(|_| Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
        .collect()
}

#[test]
fn hausdorff_matches_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..=200);
        let a = random_points(&mut rng, n);
        let n = rng.random_range(1..=200);
        let b = random_points(&mut rng, n);
        assert_eq!(hausdorff(&a, &b).unwrap(), brute_hausdorff(&a, &b));
    }
}

/// Full N-point DFT by direct summation of `exp(-2πi jk/N)`.
fn dft_oracle(z: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = z.len();
    (0..n)
        .map(|k| {
            let mut acc = (0.0, 0.0);
            for (j, &(x, y)) in z.iter().enumerate() {
                let w = -2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / n as f64;
                acc.0 += x * w.cos() - y * w.sin();
                acc.1 += x * w.sin() + y * w.cos();
            }
            let s = (n as f64).sqrt();
            (acc.0 / s, acc.1 / s)
        })
        .collect()
}

#[test]
fn fourier_diff_matches_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let a = random_points(&mut rng, n);
        let n = rng.random_range(2..40);
        let b = random_points(&mut rng, n);
        let ra = resample_arc_length(&a, FOURIER_SAMPLES).unwrap();
        let rb = resample_arc_length(&b, FOURIER_SAMPLES).unwrap();
        let za = dft_oracle(&ra.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>());
        let zb = dft_oracle(&rb.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>());
        let want = za[..FOURIER_COEFFS]
            .iter()
            .zip(&zb[..FOURIER_COEFFS])
            .map(|(p, q)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2))
            .sum::<f64>()
            .sqrt();
        let got = fourier_diff(&a, &b).unwrap();
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
}

fn ep(outcome: Outcome, pe: Option<f64>, oe: Option<f64>, duration: f64) -> EpisodeSummary {
    EpisodeSummary {
        outcome,
        position_error: pe,
        orientation_error: oe,
        duration,
    }
}

/// Six episodes worked by hand:
/// - successes score 100 − 50·0.2 − 50·0.2 = 80, 100 − 50·0.5 − 50·1 = 25
///   (10° saturates) and 100 − 50·1 − 0 = 50 (1.5 m saturates)
/// - APE = (0.2 + 0.5 + 1.5)/3, AOE = (2 + 12 + 0)/3
/// - APT over the five completed ones = (20 + 30 + 40 + 25 + 35)/5 = 30
/// - APS = (80 + 25 + 50)/6
pub fn hand_fixture() -> Vec<EpisodeSummary> {
    vec![
        ep(Outcome::Success, Some(0.2), Some(2.0), 20.0),
        ep(Outcome::Success, Some(0.5), Some(12.0), 30.0),
        ep(Outcome::Success, Some(1.5), Some(0.0), 40.0),
        ep(Outcome::WrongSlot, None, None, 25.0),
        ep(Outcome::Violation, Some(0.4), Some(3.0), 35.0),
        ep(Outcome::Collision, None, None, 7.0),
    ]
}

#[test]
fn six_episode_fixture() {
    let r = aggregate(&hand_fixture()).unwrap();
    assert_eq!(r.episodes, 6);
    assert_eq!(r.psr, 50.0);
    assert_eq!(r.nsr, 100.0 / 6.0);
    assert_eq!(r.pvr, 100.0 / 6.0);
    assert_eq!(r.collision_rate, 100.0 / 6.0);
    assert_eq!(r.timeout_rate, 0.0);
    assert_eq!(r.ape, Some((0.2 + 0.5 + 1.5) / 3.0));
    assert_eq!(r.aoe, Some((2.0 + 12.0 + 0.0) / 3.0));
    assert_eq!(r.apt, Some(30.0));
    assert!((r.aps - 155.0 / 6.0).abs() < 1e-12);
    assert_eq!(r.counts[&Outcome::Success], 3);
    assert_eq!(r.counts[&Outcome::Timeout], 0);
}

fn arb_points(max: usize) -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 1..max)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x, y)).collect())
}

fn arb_summary() -> impl Strategy<Value = EpisodeSummary> {
    (0..5usize, 0.0..2.0f64, 0.0..20.0f64, 0.0..100.0f64).prop_map(|(o, pe, oe, d)| {
        let outcome = Outcome::ALL[o];
        let has = matches!(outcome, Outcome::Success | Outcome::Violation);
        ep(outcome, has.then_some(pe), has.then_some(oe), d)
    })
}

proptest! {
    #[test]
    fn hausdorff_is_a_metric(a in arb_points(30), b in arb_points(30), c in arb_points(30)) {
        let ab = hausdorff(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let ac = hausdorff(&a, &c).unwrap();
        let cb = hausdorff(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9);
    }

    #[test]
    fn l2_is_nonnegative_and_zero_on_itself(a in arb_points(30), b in arb_points(30)) {
        prop_assert!(l2_distance(&a, &b).unwrap() >= 0.0);
        prop_assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn fourier_zero_on_identical_resampling(a in arb_points(30)) {
        prop_assume!(a.len() >= 2 && a.windows(2).any(|w| w[0] != w[1]));
        // densifying the polyline changes nothing after arc-length resampling
        let mut dense = vec![a[0]];
        for w in a.windows(2) {
            dense.push(w[0] + (w[1] - w[0]) * 0.5);
            dense.push(w[1]);
        }
        prop_assert!(fourier_diff(&a, &a).unwrap() == 0.0);
        prop_assert!(fourier_diff(&a, &dense).unwrap() < 1e-9);
    }

    #[test]
    fn rates_account_for_every_episode(eps in prop::collection::vec(arb_summary(), 1..40)) {
        let r = aggregate(&eps).unwrap();
        let sum = r.psr + r.nsr + r.pvr + r.collision_rate + r.timeout_rate;
        prop_assert!((sum - 100.0).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&r.aps));
        prop_assert_eq!(r.counts.values().sum::<usize>(), eps.len());
    }

    #[test]
    fn score_does_not_increase_with_error(pe in 0.0..2.0f64, oe in 0.0..20.0f64, dp in 0.0..1.0f64, dor in 0.0..5.0f64) {
        let a = ep(Outcome::Success, Some(pe), Some(oe), 1.0);
        let b = ep(Outcome::Success, Some(pe + dp), Some(oe + dor), 1.0);
        prop_assert!(b.score() <= a.score());
    }
}
