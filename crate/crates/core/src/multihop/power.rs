//! Per-link energy prediction under a TDMA cycle, the one-hop test and the
//! per-link deadline assignment.

use super::graph::{Flow, Path};
use super::schedule::{build_cycle_schedule, path_link_order, worst_case_delay, CycleSchedule};
use crate::error::{Error, Result};
use crate::policy::{expected_power_frame_start_random, expected_power_per_slot};
use crate::stochastics::{arrival_exp_moment, ChannelModel, DiscreteDistribution};

/// Whether the transmitting node of a link generates the flow or forwards it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Source,
    Relay,
}

/// How many slots of arrivals a source holds when its frame opens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceAccounting {
    /// The `L - D` idle slots plus the first frame slot: `L - D + 1`.
    #[default]
    Buffered,
    /// Only the `L - D` idle slots.
    IdleOnly,
}

impl SourceAccounting {
    pub fn frame_start_slots(self, d_i: u32, cycle_len: u32) -> u32 {
        match self {
            Self::Buffered => cycle_len - d_i + 1,
            Self::IdleOnly => cycle_len - d_i,
        }
    }
}

/// Frame-start batch and in-frame per-slot arrivals seen by one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkLoad {
    pub frame_start: DiscreteDistribution,
    pub per_slot: Option<DiscreteDistribution>,
}

/// Load of a link with frame length `d_i` in a cycle of `cycle_len` slots.
///
/// A relayed flow contributes all `L` slots of its arrivals at the frame
/// start. A sourced flow contributes its buffered slots at the frame start and
/// one arrival per remaining frame slot.
pub fn link_load(
    flows: &[(&Flow, Role)],
    d_i: u32,
    cycle_len: u32,
    accounting: SourceAccounting,
) -> Result<LinkLoad> {
    if flows.is_empty() {
        return Err(Error::Contract("link carries no flows".into()));
    }
    if d_i == 0 || d_i > cycle_len {
        return Err(Error::Contract(format!(
            "link deadline {d_i} must lie in 1..={cycle_len}"
        )));
    }
    let mut frame_start = DiscreteDistribution::point(0.0)?;
    let mut per_slot: Option<DiscreteDistribution> = None;
    for (flow, role) in flows {
        let slots = match role {
            Role::Relay => cycle_len,
            Role::Source => accounting.frame_start_slots(d_i, cycle_len),
        };
        frame_start = frame_start.convolve(&flow.arrivals.iid_sum(slots as usize));
        if *role == Role::Source && d_i > 1 {
            per_slot = Some(match per_slot {
                None => flow.arrivals.clone(),
                Some(p) => p.convolve(&flow.arrivals),
            });
        }
    }
    Ok(LinkLoad {
        frame_start,
        per_slot,
    })
}

/// Expected energy per frame of a link carrying `load` with frame length `d_i`.
pub fn load_energy(load: &LinkLoad, d_i: u32, ch: &ChannelModel) -> f64 {
    match &load.per_slot {
        Some(a) => expected_power_per_slot(&load.frame_start, a, d_i, ch),
        None => expected_power_frame_start_random(&load.frame_start, d_i, ch),
    }
}

/// Predicted per-frame energy of a link whose transmitter plays `role` for
/// every flow in `flows_on_link`.
///
/// This is the energy the transmitting node spends in one of its frames,
/// which is also its energy per cycle; divide by `cycle_len` for the average
/// power per slot.
pub fn predicted_link_power(
    role: Role,
    d_i: u32,
    cycle_len: u32,
    flows_on_link: &[Flow],
    ch: &ChannelModel,
) -> Result<f64> {
    let tagged: Vec<(&Flow, Role)> = flows_on_link.iter().map(|f| (f, role)).collect();
    predicted_link_power_mixed(&tagged, d_i, cycle_len, ch, SourceAccounting::Buffered)
}

/// [`predicted_link_power`] for links that source some flows and relay others.
pub fn predicted_link_power_mixed(
    flows: &[(&Flow, Role)],
    d_i: u32,
    cycle_len: u32,
    ch: &ChannelModel,
    accounting: SourceAccounting,
) -> Result<f64> {
    let load = link_load(flows, d_i, cycle_len, accounting)?;
    Ok(load_energy(&load, d_i, ch))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopChoice {
    OneHop,
    Multipath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopDecision {
    pub choice: HopChoice,
    /// `E[1/H]` of the direct link.
    pub direct: f64,
    /// `(E[e^A] + 1) Σ E[1/H_i]` over the path links.
    pub path: f64,
}

/// One-hop versus multihop with unit deadlines on an alternating two-set
/// schedule: the direct link wins when `E[1/H₁] <= (E[e^A] + 1) Σ E[1/H_i]`.
pub fn compare_one_hop_vs_path(
    direct: &ChannelModel,
    path_channels: &[ChannelModel],
    arrivals: &DiscreteDistribution,
) -> HopDecision {
    let direct_cost = crate::stochastics::inv_gain_moment(direct, 1);
    let path_sum: f64 = path_channels
        .iter()
        .map(|c| crate::stochastics::inv_gain_moment(c, 1))
        .sum();
    let path_cost = (arrival_exp_moment(arrivals, 1) + 1.0) * path_sum;
    let choice = if direct_cost <= path_cost {
        HopChoice::OneHop
    } else {
        HopChoice::Multipath
    };
    HopDecision {
        choice,
        direct: direct_cost,
        path: path_cost,
    }
}

/// Unit-slot schedule for a single path: greedy sets in path order.
pub fn path_schedule(path: &Path, slots: &[u32]) -> Result<CycleSchedule> {
    let links = path_link_order(std::slice::from_ref(path));
    let mut sets: Vec<Vec<super::Link>> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for (link, &d) in links.iter().zip(slots) {
        match sets
            .iter()
            .position(|s| s.iter().all(|o| !o.conflicts_with(link)))
        {
            Some(i) => {
                sets[i].push(*link);
                counts[i] = counts[i].max(d);
            }
            None => {
                sets.push(vec![*link]);
                counts.push(d);
            }
        }
    }
    build_cycle_schedule(sets, counts)
}

/// Per-link deadlines for `path`: one slot per link, accepted only if the
/// worst-case end-to-end delay of the resulting schedule fits `deadline`.
pub fn assign_deadlines(path: &Path, deadline: u32) -> Result<Vec<u32>> {
    if path.hops() == 0 {
        return Err(Error::Contract("path has no links".into()));
    }
    let ones = vec![1; path.hops()];
    let delay = worst_case_delay(&path_schedule(path, &ones)?, path)?;
    if delay > deadline {
        return Err(Error::InfeasibleDeadline(format!(
            "path {path} needs {delay} slots worst case but the deadline is {deadline}; \
             try the next path from k_shortest_paths"
        )));
    }
    Ok(ones)
}

/// Explicit per-link deadlines; requires `D_i >= 1` and `Σ D_i <= deadline`.
pub fn assign_deadlines_override(path: &Path, deadline: u32, explicit: &[u32]) -> Result<Vec<u32>> {
    if explicit.len() != path.hops() {
        return Err(Error::Contract(format!(
            "{} deadlines for a {}-hop path",
            explicit.len(),
            path.hops()
        )));
    }
    if explicit.contains(&0) {
        return Err(Error::Contract("every link deadline must be >= 1".into()));
    }
    let total: u32 = explicit.iter().sum();
    if total > deadline {
        return Err(Error::InfeasibleDeadline(format!(
            "link deadlines sum to {total} > {deadline}"
        )));
    }
    Ok(explicit.to_vec())
}
