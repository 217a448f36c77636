//! Finite-horizon backward induction on a discretized queue grid.
//!
//! This is the independent check on the closed forms in [`crate::policy`]:
//! it scans a rate grid at every queue grid point instead of using any
//! first-order condition, and evaluates all expectations as exact finite sums.
//!
//! Stages are numbered by slot within the frame: stage `1` is the first slot
//! (all `M` slots left) and stage `M` is the last slot, where the queue is
//! drained unconditionally.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::RateRule;
use crate::stochastics::{inv_gain_moment, ChannelModel, DiscreteDistribution};

const SNAP_TOL: f64 = 1e-9;

/// Uniform queue grid on `[0, q_max]` plus the number of candidate rates
/// scanned per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGrid {
    pub q_max: f64,
    pub n_points: usize,
    pub n_rate_points: usize,
}

impl DpGrid {
    pub fn new(q_max: f64, n_points: usize, n_rate_points: usize) -> Result<Self> {
        if !(q_max.is_finite() && q_max > 0.0) {
            return Err(Error::Contract(format!("q_max {q_max} must be > 0")));
        }
        if n_points < 2 || n_rate_points < 2 {
            return Err(Error::Contract(
                "grid needs at least 2 queue points and 2 rate points".into(),
            ));
        }
        Ok(Self {
            q_max,
            n_points,
            n_rate_points,
        })
    }

    /// Default grid for frames holding at most `max_data` nats: `q_max` is
    /// `1.5 * max_data`, rounded up so that every value in `supports` lands
    /// exactly on a grid point when that is possible with a small common
    /// denominator. `min_points` is a lower bound on the queue points.
    pub fn for_data(
        max_data: f64,
        supports: &[&DiscreteDistribution],
        min_points: usize,
        n_rate_points: usize,
    ) -> Result<Self> {
        let target = (1.5 * max_data).max(f64::EPSILON);
        let min_points = min_points.max(2);
        let Some(den) = common_denominator(supports) else {
            return Self::new(target, min_points, n_rate_points);
        };
        let unit = 1.0 / den as f64;
        let units = (target / unit - 1e-9).ceil().max(1.0) as usize;
        let sub = (min_points - 1).div_ceil(units);
        Self::new(units as f64 * unit, units * sub + 1, n_rate_points)
    }

    pub fn spacing(&self) -> f64 {
        self.q_max / (self.n_points - 1) as f64
    }
}

// Smallest d <= 1000 with every support value an integer multiple of 1/d.
fn common_denominator(supports: &[&DiscreteDistribution]) -> Option<u64> {
    (1..=1000u64).find(|&d| {
        supports.iter().all(|s| {
            s.support().iter().all(|v| {
                let x = v * d as f64;
                (x - x.round()).abs() < 1e-9 * x.abs().max(1.0)
            })
        })
    })
}

/// Value and policy tables produced by backward induction.
#[derive(Debug, Clone)]
pub struct DpSolution {
    frame: u32,
    grid: DpGrid,
    gains: Vec<f64>,
    // values[stage - 1][grid index]; each stage only covers its valid prefix
    values: Vec<Vec<f64>>,
    // policy[stage - 1][gain index][grid index]
    policy: Vec<Vec<Vec<f64>>>,
}

impl DpSolution {
    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn grid(&self) -> &DpGrid {
        &self.grid
    }

    /// Gain values in the order used by the policy table.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Largest queue for which `stage` was solved.
    pub fn stage_q_max(&self, stage: u32) -> f64 {
        (self.values[stage as usize - 1].len() - 1) as f64 * self.grid.spacing()
    }

    pub fn values(&self, stage: u32) -> &[f64] {
        &self.values[stage as usize - 1]
    }

    /// Rate chosen at grid point `index` for gain `gains()[gain_index]`.
    pub fn policy(&self, stage: u32, gain_index: usize) -> &[f64] {
        &self.policy[stage as usize - 1][gain_index]
    }

    fn check_stage(&self, stage: u32) -> Result<()> {
        if stage == 0 || stage > self.frame {
            return Err(Error::Contract(format!(
                "stage {stage} outside 1..={}",
                self.frame
            )));
        }
        Ok(())
    }

    /// Interpolated optimal rate at `(stage, h, q)`; `h` must be a support gain.
    pub fn rate_at(&self, stage: u32, h: f64, q: f64) -> Result<f64> {
        self.check_stage(stage)?;
        let gi = self
            .gains
            .iter()
            .position(|g| *g == h)
            .ok_or_else(|| Error::Contract(format!("gain {h} is not in the channel support")))?;
        lookup(self.policy(stage, gi), self.grid.spacing(), q)
    }

    /// Rate-grid step at queue `q`.
    pub fn rate_step(&self, q: f64) -> f64 {
        q / (self.grid.n_rate_points - 1) as f64
    }

    /// `Σ p · value(stage 1, a)` over a frame-start distribution.
    pub fn expected_value(&self, frame_start: &DiscreteDistribution) -> Result<f64> {
        frame_start
            .iter()
            .map(|(a, p)| dp_value_at(self, 1, a).map(|v| p * v))
            .sum()
    }
}

/// Largest gap between the stage-1 DP argmin and the rate of `rule`, over
/// grid points and gains where the rule is interior along every reachable
/// path (see [`RateRule::interior`]). Measured in grid steps: the larger of
/// the queue spacing and the rate step at that queue. `0` when no point
/// qualifies.
pub fn policy_gap_steps(sol: &DpSolution, rule: &RateRule) -> f64 {
    let m = sol.frame();
    if m == 1 {
        return 0.0;
    }
    let dq = sol.grid().spacing();
    let mut worst: f64 = 0.0;
    for (gi, &h) in sol.gains().iter().enumerate() {
        for (i, &r) in sol.policy(1, gi).iter().enumerate().skip(1) {
            let q = i as f64 * dq;
            if rule.interior(q, m, h) {
                let u = rule.unclamped_rate(q, m, h);
                worst = worst.max((r - u).abs() / sol.rate_step(q).max(dq));
            }
        }
    }
    worst
}

/// Richardson extrapolation from values on a grid and on one with half the
/// spacing, for an error of the given order in the spacing.
pub fn richardson(coarse: f64, fine: f64, order: i32) -> f64 {
    fine + (fine - coarse) / (2f64.powi(order) - 1.0)
}

fn lookup(table: &[f64], dq: f64, q: f64) -> Result<f64> {
    let top = (table.len() - 1) as f64 * dq;
    if !(q >= 0.0) || q > top * (1.0 + SNAP_TOL) + SNAP_TOL * dq {
        return Err(Error::OutOfRange {
            q,
            q_max: top,
            hint: "; rerun with a larger q_max",
        });
    }
    let pos = q / dq;
    let nearest = pos.round();
    if (pos - nearest).abs() < SNAP_TOL {
        return Ok(table[(nearest as usize).min(table.len() - 1)]);
    }
    Ok(interp(table, dq, q))
}

// Linear interpolation; callers guarantee q lies inside the table up to rounding.
fn interp(table: &[f64], dq: f64, q: f64) -> f64 {
    let last = table.len() - 1;
    let pos = (q / dq).max(0.0);
    let i0 = (pos.floor() as usize).min(last.saturating_sub(1));
    if last == 0 {
        return table[0];
    }
    let t = (pos - i0 as f64).min(1.0);
    table[i0] + t * (table[i0 + 1] - table[i0])
}

/// Backward induction for data present at the frame start only.
pub fn solve_frame_start(m: u32, ch: &ChannelModel, grid: DpGrid) -> Result<DpSolution> {
    solve(m, ch, None, grid)
}

/// Backward induction with `arrivals` added to the queue at every slot after
/// the first.
pub fn solve_per_slot(
    m: u32,
    ch: &ChannelModel,
    arrivals: &DiscreteDistribution,
    grid: DpGrid,
) -> Result<DpSolution> {
    solve(m, ch, Some(arrivals), grid)
}

/// Value at `(stage, q)`: exact at grid points, linear in between.
pub fn dp_value_at(sol: &DpSolution, stage: u32, q: f64) -> Result<f64> {
    sol.check_stage(stage)?;
    lookup(sol.values(stage), sol.grid.spacing(), q)
}

fn solve(
    m: u32,
    ch: &ChannelModel,
    arrivals: Option<&DiscreteDistribution>,
    grid: DpGrid,
) -> Result<DpSolution> {
    if m == 0 {
        return Err(Error::Contract("frame size must be >= 1".into()));
    }
    let dq = grid.spacing();
    let a_max = arrivals.map_or(0.0, |a| a.max());
    // With d slots left the queue can still grow by (d - 1) * a_max.
    let valid_len = |d: u32| -> Result<usize> {
        let top = grid.q_max - f64::from(d - 1) * a_max;
        if top < 0.0 {
            return Err(Error::GridOverflow(format!(
                "q_max {} cannot absorb {} further slots of arrivals up to {a_max}",
                grid.q_max,
                d - 1
            )));
        }
        Ok(((top / dq + SNAP_TOL).floor() as usize + 1).min(grid.n_points))
    };

    let channel: Vec<(f64, f64, f64)> = ch
        .gains()
        .iter()
        .map(|(h, p)| (h, ch.effective_gain(h), p))
        .collect();
    let inv_mean = inv_gain_moment(ch, 1);
    let nr = grid.n_rate_points;

    // Solved from the last slot (d = 1) backwards; stored by stage at the end.
    let n1 = valid_len(1)?;
    let drain: Vec<f64> = (0..n1).map(|i| (i as f64 * dq).exp_m1() * inv_mean).collect();
    let drain_policy: Vec<Vec<f64>> = channel
        .iter()
        .map(|_| (0..n1).map(|i| i as f64 * dq).collect())
        .collect();
    let mut values = vec![drain];
    let mut policy = vec![drain_policy];

    for d in 2..=m {
        let len = valid_len(d)?;
        let prev = values.last().unwrap();
        let rows: Vec<(f64, Vec<f64>)> = (0..len)
            .into_par_iter()
            .map(|i| {
                let q = i as f64 * dq;
                let mut cost = Vec::with_capacity(nr);
                let mut future = Vec::with_capacity(nr);
                for k in 0..nr {
                    let r = q * k as f64 / (nr - 1) as f64;
                    let left = (q - r).max(0.0);
                    let cont = match arrivals {
                        None => interp(prev, dq, left),
                        Some(a) => a.iter().map(|(x, p)| p * interp(prev, dq, left + x)).sum(),
                    };
                    cost.push(r.exp_m1());
                    future.push(cont);
                }
                let mut value = 0.0;
                let mut rates = Vec::with_capacity(channel.len());
                for &(_, hp, p) in &channel {
                    let (best_k, best) = (0..nr)
                        .map(|k| (k, cost[k] / hp + future[k]))
                        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                    value += p * best;
                    rates.push(q * best_k as f64 / (nr - 1) as f64);
                }
                (value, rates)
            })
            .collect();
        let stage_values = rows.iter().map(|r| r.0).collect();
        let stage_policy = (0..channel.len())
            .map(|g| rows.iter().map(|r| r.1[g]).collect())
            .collect();
        values.push(stage_values);
        policy.push(stage_policy);
    }

    values.reverse();
    policy.reverse();
    Ok(DpSolution {
        frame: m,
        grid,
        gains: channel.iter().map(|c| c.0).collect(),
        values,
        policy,
    })
}
