use hdpower::stochastics::{arrival_exp_moment, gain_product, inv_gain_moment};
use hdpower::{ChannelModel, DiscreteDistribution};
use proptest::prelude::*;

fn dist(lo: f64, hi: f64) -> impl Strategy<Value = DiscreteDistribution> {
    prop::collection::vec((lo..hi, 0.05f64..1.0), 1..6).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let (support, probs) = pairs.into_iter().map(|(v, w)| (v, w / total)).unzip();
        DiscreteDistribution::new(support, probs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn inv_gain_moment_monotone_in_order(strong in dist(1.0, 20.0), weak in dist(0.01, 1.0)) {
        let strong = ChannelModel::unit(strong).unwrap();
        let weak = ChannelModel::unit(weak).unwrap();
        for j in 1..10 {
            prop_assert!(inv_gain_moment(&strong, j + 1) >= inv_gain_moment(&strong, j) * (1.0 - 1e-12));
            prop_assert!(inv_gain_moment(&weak, j + 1) <= inv_gain_moment(&weak, j) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn arrival_moment_tends_to_linear_term(a in dist(0.0, 5.0), j in 100u32..5000) {
        let jf = f64::from(j);
        let bound = a.expect(|v| v * v) * a.max().exp() / (jf * jf);
        let gap = (arrival_exp_moment(&a, j) - (1.0 + a.mean() / jf)).abs();
        prop_assert!(gap <= bound + 1e-15, "gap {gap} bound {bound}");
    }

    #[test]
    fn gain_product_below_mean_inverse_gain(g in dist(0.01, 10.0), d in 1u32..40) {
        let ch = ChannelModel::unit(g).unwrap();
        prop_assert!(gain_product(&ch, d) <= inv_gain_moment(&ch, 1) * (1.0 + 1e-12));
    }
}
