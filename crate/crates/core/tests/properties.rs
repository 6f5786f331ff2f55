//! Property tests of the invariants that hold for every input.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfq_core::ensemble::{majority_vote, soft_vote};
use rfq_core::evaluation::{
    chronological_split, classification_report, log_loss, time_series_folds_with, WindowKind,
};
use rfq_core::features::{compute_features, response, FeatureOptions, StandardizationStats};
use rfq_core::io::{parse_dataset, render_dataset};
use rfq_core::market_sim::{simulate, Side, SimConfig, StatusMode};
use rfq_core::pricing::{
    auction_utility, exceed_curve, expected_payoff, offset_grid, ExceedSample,
};

fn side() -> impl Strategy<Value = Side> {
    prop_oneof![Just(Side::Bid), Just(Side::Offer)]
}

fn small_config(seed: u64, mode: StatusMode) -> SimConfig {
    SimConfig {
        n_records: 300,
        n_live: 5,
        status_mode: mode,
        seed,
        ..SimConfig::default()
    }
}

fn mode() -> impl Strategy<Value = StatusMode> {
    prop_oneof![
        Just(StatusMode::Verbatim),
        Just(StatusMode::RingDistance),
        Just(StatusMode::FeatureLinked)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auction_utilities_are_well_formed(
        ours in 99.0f64..101.0,
        others in proptest::collection::vec(99.0f64..101.0, 0..5),
        ties in proptest::collection::vec(any::<bool>(), 0..5),
        next_mid in 99.5f64..100.5,
        side in side(),
    ) {
        // force some exact ties with our quote
        let competitors: Vec<f64> = others
            .iter()
            .zip(ties.iter().chain(std::iter::repeat(&false)))
            .map(|(q, t)| if *t { ours } else { *q })
            .collect();
        let o = auction_utility(ours, &competitors, next_mid, side);
        let n_win = o.winners.len();
        let positive: f64 = o.participants.iter().map(|p| p.utility.max(0.0)).sum();
        prop_assert!(positive <= 1.0 + 1e-12);
        for (i, p) in o.participants.iter().enumerate() {
            let allowed = p.utility == -1.0
                || p.utility == 0.0
                || p.utility == 1.0
                || (n_win > 1 && (p.utility - (1.0 / n_win as f64 - 0.5)).abs() < 1e-15);
            prop_assert!(allowed, "utility {}", p.utility);
            prop_assert_eq!(p.loss, p.utility == -1.0);
            if o.winners.contains(&i) {
                prop_assert!(!p.loss);
            }
        }
        if n_win == 1 {
            prop_assert_eq!(o.participants[o.winners[0]].utility, 1.0);
        }
    }

    #[test]
    fn exceed_curves_are_monotone(
        pairs in proptest::collection::vec((123.0f64..125.0, -0.5f64..0.5), 1..40),
        side in side(),
    ) {
        let samples: Vec<ExceedSample> = pairs
            .iter()
            .map(|(p, d)| ExceedSample { predicted: *p, next_mid: p + d })
            .collect();
        let c = exceed_curve(&samples, 0, side, &offset_grid()).unwrap();
        for w in c.probabilities.windows(2) {
            match side {
                Side::Bid => prop_assert!(w[1] >= w[0]),
                Side::Offer => prop_assert!(w[1] <= w[0]),
            }
        }
        prop_assert!(c.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn payoff_is_bounded(p_fill in 0.0f64..=1.0, p_exceed in 0.0f64..=1.0) {
        let v = expected_payoff(p_fill, p_exceed);
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn response_is_antisymmetric(mid in 50.0f64..200.0, delta in -0.05f64..0.05) {
        let q = mid + delta;
        prop_assert_eq!(response(Side::Bid, mid, q), -response(Side::Offer, mid, q));
    }

    #[test]
    fn standardization_round_trips(
        data in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..40),
    ) {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let Ok(stats) = StandardizationStats::fit(&data, &names) else {
            return Ok(());
        };
        for row in &data {
            let back = stats.invert(&stats.apply(row));
            for (k, &col) in stats.kept.iter().enumerate() {
                let scale = row[col].abs().max(stats.columns[k].mean.abs()).max(1.0);
                prop_assert!((back[k] - row[col]).abs() <= 1e-12 * scale, "{} vs {}", back[k], row[col]);
            }
        }
    }

    #[test]
    fn votes_stay_between_members(ps in proptest::collection::vec(0.0f64..=1.0, 1..8)) {
        let v = soft_vote(&ps).unwrap();
        let lo = ps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        let m = majority_vote(&ps, 0.5).unwrap();
        let ones = ps.iter().filter(|p| **p > 0.5).count();
        prop_assert_eq!(m.class == 1, 2 * ones > ps.len());
        prop_assert_eq!(m.tie, 2 * ones == ps.len());
    }

    #[test]
    fn log_loss_and_confusion_are_consistent(
        pairs in proptest::collection::vec((any::<bool>(), 0.0f64..=1.0), 1..60),
    ) {
        let ys: Vec<u8> = pairs.iter().map(|(y, _)| *y as u8).collect();
        let ps: Vec<f64> = pairs.iter().map(|(_, p)| *p).collect();
        prop_assert!(log_loss(&ys, &ps).unwrap() >= 0.0);
        let r = classification_report(&ys, &ps, 0.5).unwrap();
        prop_assert_eq!(r.confusion.total(), ys.len());
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
        prop_assert_eq!(r.histogram.iter().sum::<usize>(), ys.len());
    }

    #[test]
    fn folds_never_leak(n in 12usize..2000, k in 1usize..8, sliding in any::<bool>()) {
        let kind = if sliding { WindowKind::Sliding } else { WindowKind::Expanding };
        let Ok(spec) = time_series_folds_with(n, k, kind) else {
            // too few rows for k folds
            prop_assert!(n < 2 * (k + 1));
            return Ok(());
        };
        spec.validate().unwrap();
        let times: Vec<u32> = (0..n as u32).map(|i| 10_000 + 3 * i).collect();
        spec.check_times(&times).unwrap();
        for f in &spec.folds {
            prop_assert!(!f.train.is_empty() && !f.validation.is_empty());
            prop_assert!(times[f.train.end - 1] < times[f.validation.start]);
        }
        let (train, val) = chronological_split(n, 0.7).unwrap();
        prop_assert_eq!(train.end, val.start);
        prop_assert!(times[train.end - 1] < times[val.start]);
    }

    #[test]
    fn membership_mass_is_one(seed in any::<u64>(), d in 1usize..5, leaves in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_tree(&mut rng, d, leaves, 5.0);
        for x in common::random_points(&mut rng, 10, d) {
            let s: f64 = model.leaf_membership(&x).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_records_respect_invariants(seed in any::<u64>(), mode in mode()) {
        let cfg = small_config(seed, mode);
        let sim = simulate(&cfg).unwrap();
        let recs = &sim.records;
        prop_assert_eq!(recs.len(), cfg.n_records);
        prop_assert!(recs.windows(2).all(|w| w[0].time < w[1].time));
        for r in recs {
            prop_assert!((r.quoted_price - r.mid_price).abs() <= cfg.quote_band + 1e-9);
            prop_assert!((1..=4).contains(&r.competition));
            prop_assert!(r.counterparty <= 3);
            prop_assert!([1_000, 10_000, 100_000, 1_000_000, 10_000_000].contains(&r.notional));
        }
        for p in &sim.paths {
            for t in 0..p.len() {
                prop_assert_eq!(p.mid[t], (p.bid[t] + p.ask[t]) / 2.0);
                prop_assert!(p.spread[t] > 0.0 && p.ask[t] >= p.bid[t]);
            }
        }
        prop_assert_eq!(recs.iter().filter(|r| r.live).count(), cfg.n_live);
        prop_assert!(recs[recs.len() - cfg.n_live..].iter().all(|r| r.live));
    }

    #[test]
    fn datasets_round_trip_through_csv(seed in any::<u64>(), mode in mode()) {
        let recs = simulate(&small_config(seed, mode)).unwrap().records;
        let text = render_dataset(&recs);
        let back = parse_dataset(&text, "prop.csv").unwrap();
        prop_assert_eq!(&back, &recs);
        prop_assert_eq!(render_dataset(&back), text);
    }

    #[test]
    fn momentum_ignores_price_scale(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let recs = simulate(&small_config(seed, StatusMode::FeatureLinked)).unwrap().records;
        let scaled: Vec<_> = recs
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.mid_price *= scale;
                r.quoted_price *= scale;
                r
            })
            .collect();
        let a = compute_features(&recs, &FeatureOptions::default()).unwrap();
        let b = compute_features(&scaled, &FeatureOptions::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in [(x.mom5, y.mom5), (x.mom10, y.mom10), (x.mom20, y.mom20)] {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
