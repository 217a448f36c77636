//! Finite discrete distributions and the fractional moments used by the
//! closed-form power expressions.
//!
//! Every expectation in this crate is an exact finite sum. Channel gains are
//! assumed to be pre-quantized to a finite set; arrivals are measured in nats.
//!
//! Moments are memoized in a process-wide cache keyed by the distribution's
//! *values* (bit patterns of support and probabilities), so two equal
//! distributions built independently share entries.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use rand::Rng;

use crate::error::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;

/// Finite-support distribution given as parallel `support` / `probs` arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("support is empty".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "support has {} values but probs has {}",
                support.len(),
                probs.len()
            )));
        }
        if let Some(v) = support.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "support value {v} is negative or not finite"
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "probability {p} is negative or not finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            support,
            probs,
            cumulative,
        })
    }

    /// Equal probability on each of `values`.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidDistribution("support is empty".into()));
        }
        let probs = vec![1.0 / n as f64; n];
        Self::new(values, probs)
    }

    pub fn point(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    /// Expectation of `f(X)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(v, p)| p * f(v)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }

    pub fn max(&self) -> f64 {
        self.support.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.support.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `true` when all mass sits on zero.
    pub fn is_zero(&self) -> bool {
        self.iter().all(|(v, p)| v == 0.0 || p == 0.0)
    }

    /// Distribution of `X + Y` for independent `X ~ self`, `Y ~ other`.
    ///
    /// Support points closer than a relative 1e-12 are merged.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(self.len() * other.len());
        for (a, pa) in self.iter() {
            for (b, pb) in other.iter() {
                pairs.push((a + b, pa * pb));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut support: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (v, p) in pairs {
            match support.last() {
                Some(&last) if (v - last).abs() <= 1e-12 * last.abs().max(1.0) => {
                    *probs.last_mut().unwrap() += p;
                }
                _ => {
                    support.push(v);
                    probs.push(p);
                }
            }
        }
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Self {
            support,
            probs,
            cumulative,
        }
    }

    /// Distribution of the sum of `n` iid copies; `n = 0` gives a point mass at 0.
    pub fn iid_sum(&self, n: usize) -> Self {
        let mut acc = Self::point(0.0).expect("point mass is valid");
        for _ in 0..n {
            acc = acc.convolve(self);
        }
        acc
    }

    /// Draws one support value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let idx = self.cumulative.partition_point(|c| *c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }
}

/// Fading channel: finite gain distribution plus the Shannon-law constants.
///
/// Power to carry rate `R` at gain `h` is `sigma2 * (e^R - 1) / (gamma * h)`.
/// All moment helpers work on the effective gain `gamma * h / sigma2`, so the
/// closed forms hold unchanged for any constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    gains: DiscreteDistribution,
    gamma: f64,
    sigma2: f64,
}

impl ChannelModel {
    pub fn new(gains: DiscreteDistribution, gamma: f64, sigma2: f64) -> Result<Self> {
        if let Some(g) = gains.support().iter().find(|g| **g <= 0.0) {
            return Err(Error::InvalidChannel(format!(
                "channel gain {g} must be strictly positive"
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidChannel(format!("gamma {gamma} must be > 0")));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidChannel(format!("sigma2 {sigma2} must be > 0")));
        }
        Ok(Self { gains, gamma, sigma2 })
    }

    /// Channel with `gamma = sigma2 = 1`.
    pub fn unit(gains: DiscreteDistribution) -> Result<Self> {
        Self::new(gains, 1.0, 1.0)
    }

    /// Uniform gains over `values`, unit constants.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        Self::unit(DiscreteDistribution::uniform(values)?)
    }

    pub fn gains(&self) -> &DiscreteDistribution {
        &self.gains
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `gamma * h / sigma2`.
    pub fn effective_gain(&self, h: f64) -> f64 {
        self.gamma * h / self.sigma2
    }

    /// `(effective gain, probability)` pairs.
    pub fn effective_support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.gains.iter().map(|(h, p)| (self.effective_gain(h), p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct MomentKey {
    kind: MomentKind,
    order: u32,
    scale: u64,
    support: Vec<u64>,
    probs: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum MomentKind {
    InvGain,
    ArrivalExp,
}

impl MomentKey {
    fn new(kind: MomentKind, order: u32, scale: f64, d: &DiscreteDistribution) -> Self {
        Self {
            kind,
            order,
            scale: scale.to_bits(),
            support: d.support().iter().map(|v| v.to_bits()).collect(),
            probs: d.probs().iter().map(|v| v.to_bits()).collect(),
        }
    }
}

fn moment_cache() -> &'static RwLock<HashMap<MomentKey, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<MomentKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn cached(key: MomentKey, compute: impl FnOnce() -> f64) -> f64 {
    if let Some(v) = moment_cache().read().unwrap().get(&key) {
        return *v;
    }
    let v = compute();
    // Concurrent inserts of the same key write the same value.
    moment_cache().write().unwrap().insert(key, v);
    v
}

/// `E[1 / H^(1/j)]` over effective gains.
///
/// # Panics
/// If `j == 0`.
pub fn inv_gain_moment(ch: &ChannelModel, j: u32) -> f64 {
    assert!(j >= 1, "moment order must be >= 1");
    let key = MomentKey::new(MomentKind::InvGain, j, ch.sigma2 / ch.gamma, &ch.gains);
    cached(key, || {
        let exponent = -1.0 / f64::from(j);
        ch.effective_support().map(|(h, p)| p * h.powf(exponent)).sum()
    })
}

/// `E[e^(A/j)]`.
///
/// # Panics
/// If `j == 0`.
pub fn arrival_exp_moment(a: &DiscreteDistribution, j: u32) -> f64 {
    assert!(j >= 1, "moment order must be >= 1");
    let key = MomentKey::new(MomentKind::ArrivalExp, j, 1.0, a);
    cached(key, || {
        let jf = f64::from(j);
        a.expect(|v| (v / jf).exp())
    })
}

/// `a_D = prod_{z=1..D} E[1/H^(1/z)]^(z/D)`.
///
/// Evaluated in log space for `D > 20`.
///
/// # Panics
/// If `d == 0`.
pub fn gain_product(ch: &ChannelModel, d: u32) -> f64 {
    assert!(d >= 1, "deadline must be >= 1");
    let df = f64::from(d);
    if d <= 20 {
        (1..=d)
            .map(|z| inv_gain_moment(ch, z).powf(f64::from(z) / df))
            .product()
    } else {
        (1..=d)
            .map(|z| f64::from(z) / df * inv_gain_moment(ch, z).ln())
            .sum::<f64>()
            .exp()
    }
}

/// Draws one value from `d`. Thin wrapper kept for symmetry with the other
/// free functions.
pub fn sample<R: Rng + ?Sized>(d: &DiscreteDistribution, rng: &mut R) -> f64 {
    d.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h2345() -> ChannelModel {
        ChannelModel::uniform(vec![2.0, 3.0, 4.0, 5.0]).unwrap()
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0], vec![0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![-1.0], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn rejects_nonpositive_gain() {
        let d = DiscreteDistribution::uniform(vec![0.0, 1.0]).unwrap();
        assert!(matches!(ChannelModel::unit(d), Err(Error::InvalidChannel(_))));
        let d = DiscreteDistribution::point(1.0).unwrap();
        assert!(ChannelModel::new(d.clone(), 0.0, 1.0).is_err());
        assert!(ChannelModel::new(d, 1.0, -1.0).is_err());
    }

    #[test]
    fn inv_gain_moment_examples() {
        let unit = ChannelModel::uniform(vec![1.0]).unwrap();
        for j in 1..6 {
            assert_eq!(inv_gain_moment(&unit, j), 1.0);
        }
        let ch = h2345();
        let m1 = (0.5 + 1.0 / 3.0 + 0.25 + 0.2) / 4.0;
        assert!((inv_gain_moment(&ch, 1) - m1).abs() < 1e-15);
        assert!((inv_gain_moment(&ch, 1) - 0.320833).abs() < 1e-6);
        let m2 = [2.0f64, 3.0, 4.0, 5.0].iter().map(|h| h.powf(-0.5)).sum::<f64>() / 4.0;
        assert!((inv_gain_moment(&ch, 2) - m2).abs() < 1e-15);
        assert!((inv_gain_moment(&ch, 2) - 0.557935).abs() < 1e-4);
    }

    #[test]
    fn constants_rescale_gain() {
        let d = DiscreteDistribution::uniform(vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let scaled = ChannelModel::new(d, 2.0, 4.0).unwrap();
        // effective gain = h / 2
        let expect = [1.0f64, 1.5, 2.0, 2.5].iter().map(|h| 1.0 / h).sum::<f64>() / 4.0;
        assert!((inv_gain_moment(&scaled, 1) - expect).abs() < 1e-15);
    }

    #[test]
    fn arrival_exp_moment_examples() {
        let zero = DiscreteDistribution::point(0.0).unwrap();
        assert_eq!(arrival_exp_moment(&zero, 1), 1.0);
        assert_eq!(arrival_exp_moment(&zero, 7), 1.0);
        let a = DiscreteDistribution::uniform(vec![1.0, 2.0, 3.0]).unwrap();
        let e = std::f64::consts::E;
        let j1 = (e + e * e + e * e * e) / 3.0;
        assert!((arrival_exp_moment(&a, 1) - j1).abs() < 1e-12);
        assert!((arrival_exp_moment(&a, 1) - 10.0645).abs() < 1e-3);
        let j2 = (0.5f64.exp() + 1.0f64.exp() + 1.5f64.exp()) / 3.0;
        assert!((arrival_exp_moment(&a, 2) - j2).abs() < 1e-12);
        assert!((arrival_exp_moment(&a, 2) - 2.9496).abs() < 1e-4);
    }

    #[test]
    fn gain_product_examples() {
        let unit = ChannelModel::uniform(vec![1.0]).unwrap();
        assert_eq!(gain_product(&unit, 9), 1.0);
        assert_eq!(gain_product(&unit, 40), 1.0);
        let ch = h2345();
        assert_eq!(gain_product(&ch, 1), inv_gain_moment(&ch, 1));
        let d2 = inv_gain_moment(&ch, 1).sqrt() * inv_gain_moment(&ch, 2);
        assert!((gain_product(&ch, 2) - d2).abs() < 1e-15);
        assert!((gain_product(&ch, 2) - 0.31602).abs() < 1e-5);
    }

    #[test]
    fn gain_product_log_space_is_continuous() {
        let ch = ChannelModel::uniform(vec![0.25, 0.37, 0.5, 0.62]).unwrap();
        // Direct evaluation of D = 21 against the log-space branch.
        let direct: f64 = (1..=21)
            .map(|z| inv_gain_moment(&ch, z).powf(z as f64 / 21.0))
            .product();
        assert!((gain_product(&ch, 21) / direct - 1.0).abs() < 1e-12);
        assert!(gain_product(&ch, 500).is_finite());
    }

    #[test]
    fn cache_keyed_by_value() {
        let a = ChannelModel::uniform(vec![0.3, 0.9]).unwrap();
        let b = ChannelModel::uniform(vec![0.3, 0.9]).unwrap();
        assert_eq!(inv_gain_moment(&a, 3), inv_gain_moment(&b, 3));
        let c = ChannelModel::new(a.gains().clone(), 2.0, 1.0).unwrap();
        assert_ne!(inv_gain_moment(&a, 3), inv_gain_moment(&c, 3));
    }

    #[test]
    fn convolution_of_uniform_dice() {
        let a = DiscreteDistribution::uniform(vec![1.0, 2.0, 3.0]).unwrap();
        let s = a.iid_sum(2);
        assert_eq!(s.support(), &[2.0, 3.0, 4.0, 5.0, 6.0]);
        let expect = [1.0, 2.0, 3.0, 2.0, 1.0].map(|c| c / 9.0);
        for (p, e) in s.probs().iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
        // E[e^{S/j}] factorizes for independent sums.
        let s3 = a.iid_sum(3);
        assert!((arrival_exp_moment(&s3, 2) / arrival_exp_moment(&a, 2).powi(3) - 1.0).abs() < 1e-13);
        assert_eq!(a.iid_sum(0).support(), &[0.0]);
    }

    #[test]
    fn point_mass_sampling() {
        let d = DiscreteDistribution::point(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            assert_eq!(sample(&d, &mut rng), 3.0);
        }
    }

    #[test]
    fn sampling_frequencies() {
        let d = DiscreteDistribution::uniform(vec![1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample(&d, &mut rng) as usize - 1] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.005 / 3.0, "frequency {f}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = DiscreteDistribution::uniform(vec![0.2, 0.5, 0.8, 1.0]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| d.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }
}
