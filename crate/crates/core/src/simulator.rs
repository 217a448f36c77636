//! Monte Carlo runs of the rate rules: one link frame by frame, or a whole
//! TDMA-scheduled network cycle by cycle.
//!
//! Reported energies are per frame of the transmitting node, the quantity the
//! closed forms predict; `avg_slot_power` divides by the slots elapsed.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::multihop::{CycleSchedule, Flow, Link, NetworkGraph, Path};
use crate::policy::{power_for_rate, ArrivalMode, RateRule};
use crate::stochastics::{ChannelModel, DiscreteDistribution};

/// Residual backlog above this counts as a missed deadline.
pub const DRAIN_TOL: f64 = 1e-9;

const CHUNK_FRAMES: u64 = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_frames: u64,
    pub seed: u64,
    pub arrival_mode: ArrivalMode,
    pub m: u32,
    pub ch: ChannelModel,
    /// Keep the power spent in every slot.
    pub record_trace: bool,
}

impl SimConfig {
    pub fn new(n_frames: u64, seed: u64, arrival_mode: ArrivalMode, m: u32, ch: ChannelModel) -> Self {
        Self {
            n_frames,
            seed,
            arrival_mode,
            m,
            ch,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub frames: u64,
    /// Mean energy spent per frame.
    pub avg_power: f64,
    /// Mean power per elapsed slot.
    pub avg_slot_power: f64,
    /// Frames that ended with backlog above [`DRAIN_TOL`].
    pub violations: u64,
    pub max_residual: f64,
    pub trace: Option<Vec<f64>>,
}

#[derive(Default)]
struct Tally {
    energy: f64,
    violations: u64,
    max_residual: f64,
    trace: Option<Vec<f64>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_positive(what: &str, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Contract(format!("{what} must be >= 1")));
    }
    Ok(())
}

/// Runs the rate rule for `cfg.arrival_mode` on a single link.
///
/// Frames are simulated in fixed chunks, each with its own RNG stream, so the
/// result depends only on the config and seed, not on the thread count.
pub fn simulate_single_hop(cfg: &SimConfig) -> Result<SimReport> {
    check_positive("n_frames", cfg.n_frames)?;
    check_positive("frame size", u64::from(cfg.m))?;
    let rule = RateRule::for_mode(&cfg.ch, &cfg.arrival_mode, cfg.m);
    let chunks = cfg.n_frames.div_ceil(CHUNK_FRAMES);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let frames = CHUNK_FRAMES.min(cfg.n_frames - c * CHUNK_FRAMES);
            run_chunk(cfg, &rule, frames, c)
        })
        .collect::<Result<_>>()?;

    let mut total = Tally::default();
    if cfg.record_trace {
        total.trace = Some(Vec::with_capacity((cfg.n_frames * u64::from(cfg.m)) as usize));
    }
    for t in tallies {
        total.energy += t.energy;
        total.violations += t.violations;
        total.max_residual = total.max_residual.max(t.max_residual);
        if let (Some(all), Some(part)) = (total.trace.as_mut(), t.trace) {
            all.extend(part);
        }
    }
    let frames = cfg.n_frames as f64;
    Ok(SimReport {
        frames: cfg.n_frames,
        avg_power: total.energy / frames,
        avg_slot_power: total.energy / (frames * f64::from(cfg.m)),
        violations: total.violations,
        max_residual: total.max_residual,
        trace: total.trace,
    })
}

fn run_chunk(cfg: &SimConfig, rule: &RateRule, frames: u64, chunk: u64) -> Result<Tally> {
    let mut arrivals = stream_rng(cfg.seed, 2 * chunk);
    let mut gains = stream_rng(cfg.seed, 2 * chunk + 1);
    let first = cfg.arrival_mode.frame_start_dist();
    let later = cfg.arrival_mode.per_slot_dist();
    let mut t = Tally {
        trace: cfg.record_trace.then(Vec::new),
        ..Tally::default()
    };
    for _ in 0..frames {
        let mut q = first.sample(&mut arrivals);
        for remaining in (1..=cfg.m).rev() {
            if remaining < cfg.m {
                if let Some(a) = later {
                    q += a.sample(&mut arrivals);
                }
            }
            let h = cfg.ch.gains().sample(&mut gains);
            let r = rule.rate(q, remaining, h);
            let p = power_for_rate(r, h, &cfg.ch)?;
            t.energy += p;
            if let Some(tr) = t.trace.as_mut() {
                tr.push(p);
            }
            q = (q - r).max(0.0);
        }
        if q > DRAIN_TOL {
            t.violations += 1;
        }
        t.max_residual = t.max_residual.max(q);
    }
    Ok(t)
}

/// Simulation result for one scheduled link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub link: Link,
    pub deadline: u32,
    /// Flow ids carried by the link.
    pub flows: Vec<u32>,
    pub report: SimReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkReport {
    pub cycles: u64,
    pub cycle_len: u32,
    /// Ordered by link.
    pub links: Vec<LinkReport>,
    /// Nats injected per flow during the measured cycles.
    pub injected: BTreeMap<u32, f64>,
    /// Nats delivered per flow during the measured cycles.
    pub delivered: BTreeMap<u32, f64>,
    /// Largest `|injected - delivered - in flight|` over flows, over the whole run.
    pub conservation_error: f64,
    /// Largest gap, over links and frames, between the data a frame received
    /// and the data it sent.
    pub frame_imbalance: f64,
}

impl NetworkReport {
    pub fn link(&self, link: Link) -> Option<&LinkReport> {
        self.links.iter().find(|l| l.link == link)
    }

    pub fn violations(&self) -> u64 {
        self.links.iter().map(|l| l.report.violations).sum()
    }
}

struct LinkState {
    link: Link,
    start: u32,
    len: u32,
    rule: RateRule,
    ch: ChannelModel,
    /// Flow ids on this link and, per flow, the next link index (None at the sink).
    flows: Vec<(u32, Option<usize>)>,
    queue: Vec<f64>,
    pending: Vec<f64>,
    gains: ChaCha8Rng,
    frame_in: f64,
    frame_out: f64,
    energy: f64,
    violations: u64,
    max_residual: f64,
}

fn validate_routes(net: &NetworkGraph, schedule: &CycleSchedule, routes: &[(Flow, Path)]) -> Result<()> {
    for (flow, path) in routes {
        if path.hops() == 0 || path.source() != flow.source || path.destination() != flow.destination {
            return Err(Error::Contract(format!(
                "path {path} does not join flow {} endpoints {} and {}",
                flow.id, flow.source, flow.destination
            )));
        }
        for link in path.links() {
            net.channel(link)?;
            schedule.block_of(link)?;
        }
    }
    let mut ids: Vec<u32> = routes.iter().map(|(f, _)| f.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Contract("duplicate flow id".into()));
    }
    // Half duplex: no node may be on two links active in the same slot.
    for set in schedule.sets() {
        for (i, a) in set.iter().enumerate() {
            if let Some(b) = set[i + 1..].iter().find(|b| a.conflicts_with(b)) {
                return Err(Error::ScheduleConflict(format!(
                    "node shared by simultaneously active links {a} and {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Simulates `routes` over `n_cycles` TDMA cycles of `schedule`.
///
/// Sources receive one arrival per flow every slot. Arrivals that land
/// outside a link's frame, and data forwarded to a relay, wait until the
/// link's next frame starts; arrivals inside a source's frame join the queue
/// immediately. Each link runs the per-slot rule when it sources traffic and
/// has more than one slot, the frame-start rule otherwise. A link carrying
/// several flows splits every transmission in proportion to their backlogs.
///
/// The first `hops + 1` cycles fill the pipeline and are not measured.
pub fn simulate_network(
    net: &NetworkGraph,
    schedule: &CycleSchedule,
    routes: &[(Flow, Path)],
    n_cycles: u64,
    seed: u64,
) -> Result<NetworkReport> {
    check_positive("n_cycles", n_cycles)?;
    if routes.is_empty() {
        return Err(Error::Contract("no routes to simulate".into()));
    }
    validate_routes(net, schedule, routes)?;

    let mut carried: BTreeMap<Link, Vec<usize>> = BTreeMap::new();
    for (ri, (_, path)) in routes.iter().enumerate() {
        for link in path.links() {
            carried.entry(link).or_default().push(ri);
        }
    }
    let index: BTreeMap<Link, usize> = carried.keys().enumerate().map(|(i, l)| (*l, i)).collect();
    let mut links: Vec<LinkState> = Vec::with_capacity(carried.len());
    for (&link, on) in &carried {
        let (start, len) = schedule.block_of(link)?;
        let ch = net.channel(link)?.clone();
        let mut flows = Vec::new();
        let mut sourced_arrivals: Option<DiscreteDistribution> = None;
        for &ri in on {
            let (flow, path) = &routes[ri];
            let hop = path.links().position(|l| l == link).expect("link is on the path");
            let next = path.links().nth(hop + 1).map(|l| index[&l]);
            if hop == 0 {
                sourced_arrivals = Some(match sourced_arrivals {
                    None => flow.arrivals.clone(),
                    Some(a) => a.convolve(&flow.arrivals),
                });
            }
            flows.push((flow.id, next));
        }
        let rule = match &sourced_arrivals {
            Some(a) if len > 1 => RateRule::per_slot(&ch, a, len),
            _ => RateRule::frame_start(&ch, len),
        };
        let n = flows.len();
        links.push(LinkState {
            link,
            start,
            len,
            rule,
            gains: stream_rng(seed, (u64::from(link.src) << 32) | u64::from(link.dst)),
            ch,
            flows,
            queue: vec![0.0; n],
            pending: vec![0.0; n],
            frame_in: 0.0,
            frame_out: 0.0,
            energy: 0.0,
            violations: 0,
            max_residual: 0.0,
        });
    }
    // (link index, slot in that link's flow list) for each route's first hop.
    let entry: Vec<(usize, usize)> = routes
        .iter()
        .map(|(f, p)| {
            let li = index[&p.links().next().expect("validated non-empty")];
            let slot = links[li].flows.iter().position(|(id, _)| *id == f.id).unwrap();
            (li, slot)
        })
        .collect();
    let mut flow_rngs: Vec<ChaCha8Rng> = routes
        .iter()
        .map(|(f, _)| stream_rng(seed, (1 << 63) | u64::from(f.id)))
        .collect();

    let warmup = routes.iter().map(|(_, p)| p.hops() as u64).max().unwrap_or(0) + 1;
    let cycle_len = schedule.cycle_len();
    let mut injected = vec![0.0; routes.len()];
    let mut delivered = vec![0.0; routes.len()];
    let mut measured_in = vec![0.0; routes.len()];
    let mut measured_out = vec![0.0; routes.len()];
    let pos: BTreeMap<u32, usize> = routes.iter().enumerate().map(|(i, (f, _))| (f.id, i)).collect();
    let mut conservation_error: f64 = 0.0;
    let mut frame_imbalance: f64 = 0.0;

    for cycle in 0..warmup + n_cycles {
        let measuring = cycle >= warmup;
        if cycle == warmup {
            for l in links.iter_mut() {
                l.energy = 0.0;
                l.violations = 0;
                l.max_residual = 0.0;
            }
        }
        for t in 0..cycle_len {
            for (ri, (flow, _)) in routes.iter().enumerate() {
                let a = flow.arrivals.sample(&mut flow_rngs[ri]);
                injected[ri] += a;
                if measuring {
                    measured_in[ri] += a;
                }
                let (li, slot) = entry[ri];
                let l = &mut links[li];
                let in_frame_later = t > l.start && t < l.start + l.len;
                if in_frame_later {
                    l.queue[slot] += a;
                    l.frame_in += a;
                } else {
                    l.pending[slot] += a;
                }
            }
            let mut forwards: Vec<(usize, u32, f64)> = Vec::new();
            for l in links.iter_mut() {
                if t < l.start || t >= l.start + l.len {
                    continue;
                }
                if t == l.start {
                    l.frame_in = l.queue.iter().sum::<f64>();
                    l.frame_out = 0.0;
                    for (q, p) in l.queue.iter_mut().zip(l.pending.iter_mut()) {
                        l.frame_in += *p;
                        *q += std::mem::take(p);
                    }
                }
                let remaining = l.start + l.len - t;
                let q: f64 = l.queue.iter().sum();
                let h = l.ch.gains().sample(&mut l.gains);
                let r = l.rule.rate(q, remaining, h);
                l.energy += power_for_rate(r, h, &l.ch)?;
                for (k, &(fid, next)) in l.flows.iter().enumerate() {
                    let sent = if remaining == 1 || q <= 0.0 {
                        l.queue[k]
                    } else {
                        r * l.queue[k] / q
                    };
                    l.queue[k] = (l.queue[k] - sent).max(0.0);
                    l.frame_out += sent;
                    match next {
                        Some(ni) => forwards.push((ni, fid, sent)),
                        None => {
                            let ri = pos[&fid];
                            delivered[ri] += sent;
                            if measuring {
                                measured_out[ri] += sent;
                            }
                        }
                    }
                }
                if remaining == 1 {
                    let residual: f64 = l.queue.iter().sum();
                    if residual > DRAIN_TOL {
                        l.violations += 1;
                    }
                    l.max_residual = l.max_residual.max(residual);
                    let scale = l.frame_in.max(1.0);
                    frame_imbalance = frame_imbalance.max((l.frame_in - l.frame_out).abs() / scale);
                }
            }
            for (ni, fid, sent) in forwards {
                let l = &mut links[ni];
                let k = l.flows.iter().position(|(id, _)| *id == fid).unwrap();
                l.pending[k] += sent;
            }
        }
        for (ri, (flow, _)) in routes.iter().enumerate() {
            let in_flight: f64 = links
                .iter()
                .filter_map(|l| {
                    l.flows
                        .iter()
                        .position(|(id, _)| *id == flow.id)
                        .map(|k| l.queue[k] + l.pending[k])
                })
                .sum();
            let err = (injected[ri] - delivered[ri] - in_flight).abs() / injected[ri].max(1.0);
            conservation_error = conservation_error.max(err);
        }
    }

    let cycles = n_cycles as f64;
    let link_reports = links
        .into_iter()
        .map(|l| {
            let flows = l.flows.iter().map(|(id, _)| *id).collect();
            LinkReport {
                link: l.link,
                deadline: l.len,
                flows,
                report: SimReport {
                    frames: n_cycles,
                    avg_power: l.energy / cycles,
                    avg_slot_power: l.energy / (cycles * f64::from(cycle_len)),
                    violations: l.violations,
                    max_residual: l.max_residual,
                    trace: None,
                },
            }
        })
        .collect();
    let by_id =
        |v: &[f64]| -> BTreeMap<u32, f64> { routes.iter().zip(v).map(|((f, _), x)| (f.id, *x)).collect() };
    Ok(NetworkReport {
        cycles: n_cycles,
        cycle_len,
        links: link_reports,
        injected: by_id(&measured_in),
        delivered: by_id(&measured_out),
        conservation_error,
        frame_imbalance,
    })
}
