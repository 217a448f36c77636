//! Closed-form expected power and the per-slot optimal rate rules for one
//! fading link with a hard frame deadline.
//!
//! Two arrival regimes are covered:
//!
//! * **frame start**: all data of a frame is present in its first slot and
//!   must be gone by its last slot;
//! * **per slot**: a frame-start backlog `Ā₁` plus iid arrivals `A` in every
//!   later slot of the frame, all due by the frame end.
//!
//! The closed forms are the unconstrained Bellman minimizers. For very small
//! backlogs under fading they can dip below zero; the value is returned as is.
//! The rate rules clamp to `[0, q]` and force a full drain in the last slot,
//! so a policy run never misses a deadline.

use crate::error::{Error, Result};
use crate::stochastics::{
    arrival_exp_moment, gain_product, inv_gain_moment, ChannelModel, DiscreteDistribution,
};

/// Queue state at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameState {
    /// Backlog in nats.
    pub q: f64,
    /// Slots left before the deadline, this one included.
    pub remaining: u32,
    /// Frame size.
    pub frame: u32,
}

impl FrameState {
    pub fn new(q: f64, remaining: u32, frame: u32) -> Result<Self> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::Contract(format!("backlog {q} must be finite and >= 0")));
        }
        if remaining == 0 || remaining > frame {
            return Err(Error::Contract(format!(
                "remaining deadline {remaining} must lie in 1..={frame}"
            )));
        }
        Ok(Self { q, remaining, frame })
    }

    /// State at the first slot of a frame holding `q` nats.
    pub fn frame_start(q: f64, frame: u32) -> Result<Self> {
        Self::new(q, frame, frame)
    }
}

/// How data enters the queue of a single link.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalMode {
    /// One batch per frame, present at the first slot.
    FrameStart { frame_start: DiscreteDistribution },
    /// `frame_start` is the backlog at slot 1; `per_slot` arrives at the start
    /// of every later slot of the frame.
    PerSlot {
        frame_start: DiscreteDistribution,
        per_slot: DiscreteDistribution,
    },
}

impl ArrivalMode {
    pub fn frame_start_dist(&self) -> &DiscreteDistribution {
        match self {
            Self::FrameStart { frame_start } | Self::PerSlot { frame_start, .. } => frame_start,
        }
    }

    pub fn per_slot_dist(&self) -> Option<&DiscreteDistribution> {
        match self {
            Self::FrameStart { .. } => None,
            Self::PerSlot { per_slot, .. } => Some(per_slot),
        }
    }
}

/// Power needed to carry `rate` nats in a slot with gain `h`.
pub fn power_for_rate(rate: f64, h: f64, ch: &ChannelModel) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::Contract(format!("rate {rate} must be >= 0")));
    }
    if !(h > 0.0) {
        return Err(Error::Contract(format!("gain {h} must be > 0")));
    }
    Ok(rate.exp_m1() / ch.effective_gain(h))
}

fn check_frame(m: u32) {
    assert!(m >= 1, "frame size must be >= 1");
}

/// Expected frame energy under the optimal policy when `a1` nats arrive at
/// the frame start.
///
/// `M e^{A₁/M} a_M − M E[1/H]`, where `a_M` is [`gain_product`].
pub fn expected_power_frame_start(a1: f64, m: u32, ch: &ChannelModel) -> f64 {
    check_frame(m);
    let mf = f64::from(m);
    mf * (a1 / mf).exp() * gain_product(ch, m) - mf * inv_gain_moment(ch, 1)
}

/// Same as [`expected_power_frame_start`] with a random frame-start batch:
/// `e^{A₁/M}` is replaced by `E[e^{A₁/M}]`.
pub fn expected_power_frame_start_random(a1: &DiscreteDistribution, m: u32, ch: &ChannelModel) -> f64 {
    check_frame(m);
    let mf = f64::from(m);
    mf * arrival_exp_moment(a1, m) * gain_product(ch, m) - mf * inv_gain_moment(ch, 1)
}

/// Expected frame energy with a frame-start backlog `Ā₁ ~ abar` and per-slot
/// arrivals `A ~ per_slot`.
pub fn expected_power_per_slot(
    abar: &DiscreteDistribution,
    per_slot: &DiscreteDistribution,
    m: u32,
    ch: &ChannelModel,
) -> f64 {
    check_frame(m);
    let mf = f64::from(m);
    let arrivals: f64 = (1..m)
        .map(|j| f64::from(j) / mf * arrival_exp_moment(per_slot, j).ln())
        .sum::<f64>()
        .exp();
    mf * arrival_exp_moment(abar, m) * gain_product(ch, m) * arrivals - mf * inv_gain_moment(ch, 1)
}

/// Precomputed rate rule for one frame size.
///
/// With `D` slots left, backlog `q` and effective gain `h'` the rule sends
///
/// ```text
/// R = q/D + (D-1)/D ln h' + Σ_{j<D} j/D ln E[1/H^{1/j}] (+ Σ_{j<D} j/D ln E[e^{A/j}])
/// ```
///
/// clamped to `[0, q]`; the last slot sends `q`.
#[derive(Debug, Clone)]
pub struct RateRule {
    channel: ChannelModel,
    per_slot: Option<DiscreteDistribution>,
    // offsets[d - 1] is the constant term for d slots left
    offsets: Vec<f64>,
}

impl RateRule {
    /// Rule for data that only arrives at the frame start.
    pub fn frame_start(ch: &ChannelModel, m: u32) -> Self {
        Self::build(ch, None, m)
    }

    /// Rule for frames that also receive `per_slot` arrivals in every slot.
    pub fn per_slot(ch: &ChannelModel, per_slot: &DiscreteDistribution, m: u32) -> Self {
        Self::build(ch, Some(per_slot), m)
    }

    pub fn for_mode(ch: &ChannelModel, mode: &ArrivalMode, m: u32) -> Self {
        Self::build(ch, mode.per_slot_dist(), m)
    }

    fn build(ch: &ChannelModel, per_slot: Option<&DiscreteDistribution>, m: u32) -> Self {
        check_frame(m);
        let offsets = (1..=m)
            .map(|d| {
                let df = f64::from(d);
                (1..d)
                    .map(|j| {
                        let w = f64::from(j) / df;
                        let mut term = w * inv_gain_moment(ch, j).ln();
                        if let Some(a) = per_slot {
                            term += w * arrival_exp_moment(a, j).ln();
                        }
                        term
                    })
                    .sum()
            })
            .collect();
        Self {
            channel: ch.clone(),
            per_slot: per_slot.cloned(),
            offsets,
        }
    }

    /// Largest remaining deadline this rule covers.
    pub fn frame(&self) -> u32 {
        self.offsets.len() as u32
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    /// Per-slot arrivals the rule was built for, if any.
    pub fn arrivals(&self) -> Option<&DiscreteDistribution> {
        self.per_slot.as_ref()
    }

    /// Whether the unclamped rate stays inside `[0, q]` at this state and at
    /// every state reachable from it before the last slot. Where this holds
    /// the rule is the exact optimum.
    pub fn interior(&self, q: f64, remaining: u32, h: f64) -> bool {
        if remaining <= 1 {
            return true;
        }
        let u = self.unclamped_rate(q, remaining, h);
        if !(0.0..=q).contains(&u) {
            return false;
        }
        let left = q - u;
        let zero = [(0.0, 1.0)];
        self.channel.gains().iter().all(|(h2, _)| match &self.per_slot {
            Some(a) => a.iter().all(|(x, _)| self.interior(left + x, remaining - 1, h2)),
            None => zero
                .iter()
                .all(|(x, _)| self.interior(left + x, remaining - 1, h2)),
        })
    }

    /// The first-order-condition rate before clamping.
    ///
    /// # Panics
    /// If `remaining` is 0 or exceeds [`RateRule::frame`].
    pub fn unclamped_rate(&self, q: f64, remaining: u32, h: f64) -> f64 {
        assert!(remaining >= 1 && remaining <= self.frame());
        let d = f64::from(remaining);
        let hp = self.channel.effective_gain(h);
        q / d + (d - 1.0) / d * hp.ln() + self.offsets[remaining as usize - 1]
    }

    pub fn rate(&self, q: f64, remaining: u32, h: f64) -> f64 {
        if remaining == 1 {
            return q;
        }
        self.unclamped_rate(q, remaining, h).clamp(0.0, q)
    }
}

/// Rate for a frame-start queue in state `s` at gain `h`.
pub fn optimal_rate_frame_start(s: &FrameState, h: f64, ch: &ChannelModel) -> f64 {
    RateRule::frame_start(ch, s.remaining).rate(s.q, s.remaining, h)
}

/// Rate for a queue that keeps receiving `per_slot` arrivals until the frame end.
pub fn optimal_rate_per_slot(
    s: &FrameState,
    h: f64,
    ch: &ChannelModel,
    per_slot: &DiscreteDistribution,
) -> f64 {
    RateRule::per_slot(ch, per_slot, s.remaining).rate(s.q, s.remaining, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_excludes_states_that_clamp_later() {
        let ch = ChannelModel::uniform(vec![0.25, 0.37, 0.5, 0.62]).unwrap();
        let rule = RateRule::frame_start(&ch, 3);
        // large queue: every path stays interior
        assert!(rule.interior(20.0, 3, 0.25));
        // tiny queue at the best gain sends more than q
        assert!(!rule.interior(1e-3, 3, 0.62));
        assert!(rule.interior(0.7, 1, 0.62));
    }

    fn uni(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::uniform(v.to_vec()).unwrap()
    }

    fn chan(v: &[f64]) -> ChannelModel {
        ChannelModel::uniform(v.to_vec()).unwrap()
    }

    #[test]
    fn power_for_rate_examples() {
        let ch = chan(&[1.0]);
        assert_eq!(power_for_rate(0.0, 0.3, &ch).unwrap(), 0.0);
        assert!((power_for_rate(2f64.ln(), 1.0, &ch).unwrap() - 1.0).abs() < 1e-15);
        let p = power_for_rate(1.0, 0.5, &ch).unwrap();
        assert!((p - 2.0 * (std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert!((p - 3.4366).abs() < 1e-4);
        assert!(matches!(power_for_rate(-0.1, 1.0, &ch), Err(Error::Contract(_))));
        assert!(power_for_rate(1.0, 0.0, &ch).is_err());
    }

    #[test]
    fn power_for_rate_uses_constants() {
        let ch = ChannelModel::new(uni(&[1.0]), 2.0, 3.0).unwrap();
        let p = power_for_rate(1.0, 0.5, &ch).unwrap();
        assert!((p - 3.0 * (1f64.exp() - 1.0) / (2.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn frame_start_single_slot() {
        let ch = chan(&[0.25, 0.37, 0.5, 0.62]);
        for a in [0.0f64, 0.5, 1.7] {
            let expect = a.exp_m1() * inv_gain_moment(&ch, 1);
            assert!((expected_power_frame_start(a, 1, &ch) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_start_non_fading() {
        let ch = chan(&[1.0]);
        for m in 1..8 {
            let c: f64 = 0.7;
            let expect = f64::from(m) * c.exp_m1();
            assert!((expected_power_frame_start(f64::from(m) * c, m, &ch) - expect).abs() < 1e-10);
            assert!(expected_power_frame_start(0.0, m, &ch).abs() < 1e-15);
        }
    }

    #[test]
    fn random_batch_reduces_to_point_mass() {
        let ch = chan(&[2.0, 3.0, 4.0, 5.0]);
        for m in 1..6 {
            let fixed = expected_power_frame_start(2.3, m, &ch);
            let random = expected_power_frame_start_random(&uni(&[2.3]), m, &ch);
            assert!((fixed - random).abs() < 1e-12 * fixed.abs().max(1.0));
        }
    }

    #[test]
    fn random_batch_relay_values() {
        let a3 = uni(&[1.0, 2.0, 3.0]).iid_sum(3);
        let p = expected_power_frame_start_random(&a3, 1, &chan(&[0.2, 0.5, 0.8, 1.0]));
        assert!((p - 2355.08).abs() < 0.01, "{p}");
        let p = expected_power_frame_start_random(&a3, 1, &chan(&[2.0, 2.5, 2.9, 3.5]));
        assert!((p - 389.68).abs() < 0.01, "{p}");
    }

    #[test]
    fn per_slot_base_case_and_degenerate_arrivals() {
        let ch = chan(&[2.0, 3.0, 4.0, 5.0]);
        let abar = uni(&[1.0, 2.0, 3.0]).iid_sum(2);
        let a = uni(&[1.0, 2.0, 3.0]);
        let base = (arrival_exp_moment(&abar, 1) - 1.0) * inv_gain_moment(&ch, 1);
        assert!((expected_power_per_slot(&abar, &a, 1, &ch) - base).abs() < 1e-12);
        let zero = DiscreteDistribution::point(0.0).unwrap();
        for m in 1..6 {
            let x = expected_power_per_slot(&abar, &zero, m, &ch);
            let y = expected_power_frame_start_random(&abar, m, &ch);
            assert!((x - y).abs() < 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn per_slot_closed_form_falls_with_frame_under_deep_fades() {
        // A rare deep fade inflates E[1/H]; the unconstrained minimizer then
        // banks on negative rates and the formula drops below zero.
        let a = DiscreteDistribution::point(0.5).unwrap();
        let g = DiscreteDistribution::new(vec![4.63, 0.05], vec![0.95, 0.05]).unwrap();
        let ch = ChannelModel::unit(g).unwrap();
        let e1 = expected_power_per_slot(&a, &a, 1, &ch);
        let e2 = expected_power_per_slot(&a, &a, 2, &ch);
        assert!(e1 > 0.0 && e2 < e1);
    }

    #[test]
    fn per_slot_source_value() {
        let ch = chan(&[2.0, 3.0, 4.0, 5.0]);
        let a = uni(&[1.0, 2.0, 3.0]);
        let p = expected_power_per_slot(&a.iid_sum(2), &a, 2, &ch);
        assert!((p - 16.80).abs() < 0.01, "{p}");
    }

    #[test]
    fn last_slot_drains() {
        let ch = chan(&[0.25, 0.5]);
        let s = FrameState::new(2.5, 1, 4).unwrap();
        for h in [0.25, 0.5] {
            assert_eq!(optimal_rate_frame_start(&s, h, &ch), 2.5);
            assert_eq!(optimal_rate_per_slot(&s, h, &ch, &uni(&[1.0, 3.0])), 2.5);
        }
        let s = FrameState::new(3.2, 1, 1).unwrap();
        assert_eq!(optimal_rate_per_slot(&s, 0.5, &ch, &uni(&[1.0])), 3.2);
    }

    #[test]
    fn non_fading_splits_evenly() {
        let ch = chan(&[1.0]);
        let m = 5;
        let a1 = 3.0;
        let mut q = a1;
        for d in (1..=m).rev() {
            let r = optimal_rate_frame_start(&FrameState::new(q, d, m).unwrap(), 1.0, &ch);
            assert!((r - a1 / f64::from(m)).abs() < 1e-12);
            q -= r;
        }
        assert!(q.abs() < 1e-12);
    }

    #[test]
    fn frame_start_rate_example() {
        let ch = chan(&[2.0, 3.0, 4.0, 5.0]);
        let r = optimal_rate_frame_start(&FrameState::new(4.0, 2, 2).unwrap(), 2.0, &ch);
        let expect = 2.0 + 0.5 * (2.0 * inv_gain_moment(&ch, 1)).ln();
        assert!((r - expect).abs() < 1e-12);
        assert!((r - 1.7787).abs() < 1e-3);
    }

    #[test]
    fn per_slot_rate_example() {
        let ch = chan(&[1.0]);
        let a = uni(&[1.0, 2.0, 3.0]);
        let rule = RateRule::per_slot(&ch, &a, 2);
        // j = 1 moment: 1 + ½ ln E[e^A] = 1 + ½ ln 10.0645
        let unclamped = rule.unclamped_rate(2.0, 2, 1.0);
        assert!((unclamped - (1.0 + 0.5 * arrival_exp_moment(&a, 1).ln())).abs() < 1e-12);
        assert!((unclamped - 2.1545).abs() < 1e-4, "{unclamped}");
        // exceeds the backlog, so the whole queue goes now
        let r = optimal_rate_per_slot(&FrameState::new(2.0, 2, 2).unwrap(), 1.0, &ch, &a);
        assert_eq!(r, 2.0);
        let r = optimal_rate_per_slot(&FrameState::new(4.0, 2, 2).unwrap(), 1.0, &ch, &a);
        assert!((r - (2.0 + 0.5 * arrival_exp_moment(&a, 1).ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_per_slot_arrivals_match_frame_start_rule() {
        let ch = chan(&[0.25, 0.37, 0.5, 0.62]);
        let zero = DiscreteDistribution::point(0.0).unwrap();
        for d in 1..6 {
            let s = FrameState::new(2.0, d, 5).unwrap();
            for h in [0.25, 0.62] {
                assert!(
                    (optimal_rate_per_slot(&s, h, &ch, &zero) - optimal_rate_frame_start(&s, h, &ch)).abs()
                        < 1e-14
                );
            }
        }
    }

    #[test]
    fn rates_are_clamped() {
        let ch = chan(&[0.01, 100.0]);
        let rule = RateRule::frame_start(&ch, 3);
        assert!(rule.unclamped_rate(0.1, 3, 0.01) < 0.0);
        assert_eq!(rule.rate(0.1, 3, 0.01), 0.0);
        assert!(rule.unclamped_rate(0.1, 3, 100.0) > 0.1);
        assert_eq!(rule.rate(0.1, 3, 100.0), 0.1);
    }

    #[test]
    fn frame_state_validation() {
        assert!(FrameState::new(-1.0, 1, 1).is_err());
        assert!(FrameState::new(1.0, 0, 1).is_err());
        assert!(FrameState::new(1.0, 3, 2).is_err());
        assert!(FrameState::new(f64::INFINITY, 1, 1).is_err());
        assert!(FrameState::frame_start(1.0, 4).is_ok());
    }
}
