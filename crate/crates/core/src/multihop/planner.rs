//! Multi-flow routing with incremental link pricing, round-robin TDMA and
//! deadline checks.

use std::collections::BTreeMap;

use super::graph::{Flow, Link, NetworkGraph, Path};
use super::power::{predicted_link_power_mixed, Role, SourceAccounting};
use super::routing::{k_shortest_paths, link_cost, shortest_path_by};
use super::schedule::{
    build_cycle_schedule, partition_independent_sets, path_link_order, worst_case_delay, CycleSchedule,
};
use crate::error::{Error, Result};

/// One scheduled link of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPlan {
    pub link: Link,
    /// Frame length (slots of the link's block in the cycle).
    pub deadline: u32,
    /// Flow ids carried, with the transmitter's role for each.
    pub flows: Vec<(u32, Role)>,
    /// Expected energy per frame of the transmitting node.
    pub predicted_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    /// Path per flow id.
    pub paths: BTreeMap<u32, Path>,
    pub schedule: CycleSchedule,
    /// Ordered by link.
    pub links: Vec<LinkPlan>,
    pub worst_case_delays: BTreeMap<u32, u32>,
    /// Flow ids in the order they were routed.
    pub order: Vec<u32>,
}

impl RoutePlan {
    pub fn total_energy(&self) -> f64 {
        self.links.iter().map(|l| l.predicted_energy).sum()
    }

    pub fn link(&self, link: Link) -> Option<&LinkPlan> {
        self.links.iter().find(|l| l.link == link)
    }

    /// Flows whose worst-case delay exceeds their deadline.
    pub fn violations<'a>(&'a self, flows: &'a [Flow]) -> impl Iterator<Item = &'a Flow> + 'a {
        flows
            .iter()
            .filter(|f| self.worst_case_delays.get(&f.id).is_some_and(|d| *d > f.deadline))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerOptions {
    /// How many alternative paths a flow may fall back to.
    pub k_paths: usize,
    pub accounting: SourceAccounting,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            k_paths: 8,
            accounting: SourceAccounting::Buffered,
        }
    }
}

fn role_of(flow: &Flow, link: Link) -> Role {
    if link.src == flow.source {
        Role::Source
    } else {
        Role::Relay
    }
}

fn carried<'a>(flows: &'a [Flow], paths: &BTreeMap<u32, Path>) -> BTreeMap<Link, Vec<(&'a Flow, Role)>> {
    let mut out: BTreeMap<Link, Vec<(&Flow, Role)>> = BTreeMap::new();
    for f in flows {
        if let Some(p) = paths.get(&f.id) {
            for link in p.links() {
                out.entry(link).or_default().push((f, role_of(f, link)));
            }
        }
    }
    out
}

/// Plan for fixed `paths` on an explicit schedule. Every routed link must sit
/// in exactly one set; its frame length is that set's slot count.
pub fn plan_with_schedule(
    g: &NetworkGraph,
    flows: &[Flow],
    paths: &BTreeMap<u32, Path>,
    schedule: CycleSchedule,
    accounting: SourceAccounting,
) -> Result<RoutePlan> {
    let cycle = schedule.cycle_len();
    let mut links = Vec::new();
    for (link, on) in carried(flows, paths) {
        let (_, d_i) = schedule.block_of(link)?;
        let ch = g.channel(link)?;
        links.push(LinkPlan {
            link,
            deadline: d_i,
            flows: on.iter().map(|(f, r)| (f.id, *r)).collect(),
            predicted_energy: predicted_link_power_mixed(&on, d_i, cycle, ch, accounting)?,
        });
    }
    let worst_case_delays = paths
        .iter()
        .map(|(id, p)| Ok((*id, worst_case_delay(&schedule, p)?)))
        .collect::<Result<_>>()?;
    Ok(RoutePlan {
        paths: paths.clone(),
        schedule,
        links,
        worst_case_delays,
        order: flows.iter().map(|f| f.id).collect(),
    })
}

/// Plan for fixed `paths`: greedy independent sets (path position, then link
/// order) and one slot per set.
pub fn plan_for_paths(
    g: &NetworkGraph,
    flows: &[Flow],
    paths: &BTreeMap<u32, Path>,
    accounting: SourceAccounting,
) -> Result<RoutePlan> {
    let ordered: Vec<Path> = paths.values().cloned().collect();
    let sets = partition_independent_sets(g, &path_link_order(&ordered))?;
    let counts = vec![1; sets.len()];
    plan_with_schedule(g, flows, paths, build_cycle_schedule(sets, counts)?, accounting)
}

fn orderings(flows: &[Flow]) -> Vec<Vec<usize>> {
    let n = flows.len();
    if n > 4 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by_key(|&i| (flows[i].deadline, flows[i].id));
        return vec![idx];
    }
    let mut out = Vec::new();
    permute(&mut (0..n).collect(), 0, &mut out);
    out.sort();
    out
}

fn permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Routes `flows` one at a time in `order`. Unused links cost `E[1/H]`;
/// links already carrying traffic cost the extra predicted energy of adding
/// the new flow. `fallback[id] = i > 0` replaces that flow's route with its
/// `i`-th least-cost path.
fn route_in_order(
    g: &NetworkGraph,
    flows: &[Flow],
    order: &[usize],
    fallback: &BTreeMap<u32, usize>,
    alternatives: &BTreeMap<u32, Vec<Path>>,
    accounting: SourceAccounting,
) -> Result<std::result::Result<BTreeMap<u32, Path>, u32>> {
    let mut paths: BTreeMap<u32, Path> = BTreeMap::new();
    for &fi in order {
        let flow = &flows[fi];
        let pick = fallback.get(&flow.id).copied().unwrap_or(0);
        if pick > 0 {
            match alternatives[&flow.id].get(pick) {
                Some(p) => {
                    paths.insert(flow.id, p.clone());
                    continue;
                }
                None => return Ok(Err(flow.id)),
            }
        }
        let placed: Vec<Path> = paths.values().cloned().collect();
        let cycle = (partition_independent_sets(g, &path_link_order(&placed))?.len() as u32).max(2);
        let load = carried(flows, &paths);
        let weight = |link: Link| -> f64 {
            let ch = g.channel(link).expect("routing only visits graph links");
            match load.get(&link) {
                None => link_cost(ch),
                Some(on) => {
                    let mut with = on.clone();
                    with.push((flow, role_of(flow, link)));
                    let after = predicted_link_power_mixed(&with, 1, cycle, ch, accounting);
                    let before = predicted_link_power_mixed(on, 1, cycle, ch, accounting);
                    match (after, before) {
                        (Ok(a), Ok(b)) => (a - b).max(0.0),
                        _ => f64::INFINITY,
                    }
                }
            }
        };
        let path = shortest_path_by(g, flow.source, flow.destination, &weight)?.path;
        paths.insert(flow.id, path);
    }
    Ok(Ok(paths))
}

/// Sequential routing over flow orderings (all of them for up to four flows,
/// tightest deadline first otherwise), keeping the feasible plan with the
/// least total predicted energy.
pub fn route_flows_sequential(g: &NetworkGraph, flows: &[Flow]) -> Result<RoutePlan> {
    route_flows_sequential_with(g, flows, PlannerOptions::default())
}

pub fn route_flows_sequential_with(
    g: &NetworkGraph,
    flows: &[Flow],
    opts: PlannerOptions,
) -> Result<RoutePlan> {
    if flows.is_empty() {
        return Err(Error::Contract("no flows to route".into()));
    }
    let alternatives: BTreeMap<u32, Vec<Path>> = flows
        .iter()
        .map(|f| Ok((f.id, k_shortest_paths(g, f.source, f.destination, opts.k_paths)?)))
        .collect::<Result<_>>()?;
    if let Some(f) = flows.iter().find(|f| alternatives[&f.id].is_empty()) {
        return Err(Error::Unreachable {
            src: f.source,
            dst: f.destination,
        });
    }

    let mut best: Option<RoutePlan> = None;
    let mut binding: Option<(u32, String)> = None;
    for order in orderings(flows) {
        let mut fallback: BTreeMap<u32, usize> = BTreeMap::new();
        loop {
            let paths = match route_in_order(g, flows, &order, &fallback, &alternatives, opts.accounting)? {
                Ok(p) => p,
                Err(id) => {
                    binding.get_or_insert((
                        id,
                        format!("misses its deadline on all {} candidate paths", opts.k_paths),
                    ));
                    break;
                }
            };
            let mut plan = plan_for_paths(g, flows, &paths, opts.accounting)?;
            plan.order = order.iter().map(|&i| flows[i].id).collect();
            let late = order
                .iter()
                .map(|&i| &flows[i])
                .find(|f| plan.worst_case_delays[&f.id] > f.deadline);
            match late {
                None => {
                    if best
                        .as_ref()
                        .is_none_or(|b| plan.total_energy() < b.total_energy())
                    {
                        best = Some(plan);
                    }
                    break;
                }
                Some(f) => {
                    *fallback.entry(f.id).or_insert(0) += 1;
                }
            }
        }
    }
    best.ok_or_else(|| {
        let (flow, reason) = binding.unwrap_or((flows[0].id, "has no feasible path".into()));
        Error::InfeasiblePlan { flow, reason }
    })
}
