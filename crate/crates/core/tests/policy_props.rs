use hdpower::dp_oracle::{solve_frame_start, solve_per_slot, DpGrid};
use hdpower::policy::{
    expected_power_frame_start, expected_power_frame_start_random, optimal_rate_frame_start, FrameState,
    RateRule,
};
use hdpower::{ChannelModel, DiscreteDistribution};
use proptest::prelude::*;

fn dist(lo: f64, hi: f64) -> impl Strategy<Value = DiscreteDistribution> {
    prop::collection::vec((lo..hi, 0.05f64..1.0), 1..6).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let (support, probs) = pairs.into_iter().map(|(v, w)| (v, w / total)).unzip();
        DiscreteDistribution::new(support, probs).unwrap()
    })
}

fn channel() -> impl Strategy<Value = ChannelModel> {
    (dist(0.05, 5.0), 0.5f64..2.0, 0.5f64..2.0)
        .prop_map(|(g, gamma, sigma2)| ChannelModel::new(g, gamma, sigma2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn longer_deadline_never_costs_more(a1 in 0.01f64..10.0, ch in channel(), m in 1u32..12) {
        let short = expected_power_frame_start(a1, m, &ch);
        let long = expected_power_frame_start(a1, m + 1, &ch);
        prop_assert!(long <= short + 1e-9 * short.abs().max(1.0), "M={m}: {long} > {short}");
    }

    #[test]
    fn rates_drain_frame_exactly(
        a1 in 0.0f64..20.0,
        ch in channel(),
        picks in prop::collection::vec(0usize..6, 1..12),
    ) {
        let m = picks.len() as u32;
        let gains = ch.gains().support().to_vec();
        let mut q = a1;
        let mut sent = 0.0;
        for (k, &i) in picks.iter().enumerate() {
            let remaining = m - k as u32;
            let h = gains[i % gains.len()];
            let r = optimal_rate_frame_start(&FrameState::new(q, remaining, m).unwrap(), h, &ch);
            prop_assert!(r >= 0.0 && r <= q + 1e-12 && r <= a1 + 1e-12);
            sent += r;
            q -= r;
        }
        prop_assert!((sent - a1).abs() <= 1e-9 * a1.max(1.0));
        prop_assert!(q.abs() <= 1e-9 * a1.max(1.0));
    }

    #[test]
    fn energy_convex_and_increasing_in_data(ch in channel(), m in 1u32..8, step in 0.01f64..0.5) {
        let e: Vec<f64> = (0..12)
            .map(|k| expected_power_frame_start(f64::from(k) * step, m, &ch))
            .collect();
        for w in e.windows(3) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(w[2] - 2.0 * w[1] + w[0] > 0.0, "{:?}", w);
        }
    }

    #[test]
    fn rule_ignores_per_slot_terms_without_arrivals(ch in channel(), q in 0.0f64..5.0, m in 2u32..6) {
        let zero = DiscreteDistribution::point(0.0).unwrap();
        let a = RateRule::frame_start(&ch, m);
        let b = RateRule::per_slot(&ch, &zero, m);
        let h = ch.gains().support()[0];
        prop_assert_eq!(a.rate(q, m, h), b.rate(q, m, h));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_never_exceeds_grid_optimum(
        a in dist(0.1, 3.0),
        g in dist(0.2, 3.0),
        m in 1u32..4,
    ) {
        let ch = ChannelModel::unit(g).unwrap();
        let grid = DpGrid::for_data(a.max(), &[&a], 201, 201).unwrap();
        let dp = solve_frame_start(m, &ch, grid).unwrap().expected_value(&a).unwrap();
        let cf = expected_power_frame_start_random(&a, m, &ch);
        prop_assert!(cf <= dp * (1.0 + 1e-9), "closed {cf} dp {dp}");
    }
}

fn lattice(values: &'static [f64], max_len: usize) -> impl Strategy<Value = DiscreteDistribution> {
    prop::sample::subsequence(values, 1..=max_len)
        .prop_flat_map(|v| {
            let n = v.len();
            (Just(v), prop::collection::vec(1u32..4, n))
        })
        .prop_map(|(v, w)| {
            let total: u32 = w.iter().sum();
            let probs = w.iter().map(|x| f64::from(*x) / f64::from(total)).collect();
            DiscreteDistribution::new(v, probs).unwrap()
        })
}

fn optimum_per_slot(a: &DiscreteDistribution, ch: &ChannelModel, m: u32) -> f64 {
    let grid = DpGrid::for_data(a.max() * f64::from(m), &[a], 121, 121).unwrap();
    solve_per_slot(m, ch, a, grid).unwrap().expected_value(a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // With the frame-start batch and per-slot arrivals identically
    // distributed, the optimal frame energy grows with the frame length.
    #[test]
    fn per_slot_energy_grows_with_frame(
        a in lattice(&[0.5, 1.0, 1.5, 2.0], 3),
        g in lattice(&[0.5, 1.0, 1.5, 2.0, 3.0], 4),
    ) {
        let ch = ChannelModel::unit(g).unwrap();
        let e: Vec<f64> = (1..=5).map(|m| optimum_per_slot(&a, &ch, m)).collect();
        for w in e.windows(2) {
            prop_assert!(w[1] > w[0], "{:?}", e);
        }
    }
}
