//! Independent sets of links and the TDMA cycle built from them.

use std::collections::BTreeMap;

use super::graph::{Link, NetworkGraph, Path};
use crate::error::{Error, Result};

/// Ordered independent sets, each owning a block of consecutive slots.
/// The cycle repeats with period `L = Σ slots`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSchedule {
    sets: Vec<Vec<Link>>,
    slots: Vec<u32>,
}

impl CycleSchedule {
    pub fn sets(&self) -> &[Vec<Link>] {
        &self.sets
    }

    pub fn slots(&self) -> &[u32] {
        &self.slots
    }

    pub fn cycle_len(&self) -> u32 {
        self.slots.iter().sum()
    }

    /// First slot (within the cycle) of set `index`.
    pub fn block_start(&self, index: usize) -> u32 {
        self.slots[..index].iter().sum()
    }

    /// Indices of every set containing `link`.
    pub fn sets_of(&self, link: Link) -> Vec<usize> {
        self.sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&link))
            .map(|(i, _)| i)
            .collect()
    }

    /// Links active in cycle slot `slot` (taken modulo `L`).
    pub fn active_links(&self, slot: u32) -> &[Link] {
        let mut t = slot % self.cycle_len();
        for (set, &n) in self.sets.iter().zip(&self.slots) {
            if t < n {
                return set;
            }
            t -= n;
        }
        unreachable!("slot reduced modulo the cycle length")
    }

    /// `(first slot, slot count)` of the single block serving `link`.
    pub fn block_of(&self, link: Link) -> Result<(u32, u32)> {
        match self.sets_of(link).as_slice() {
            [] => Err(Error::UnscheduledLink(link)),
            [i] => Ok((self.block_start(*i), self.slots[*i])),
            _ => Err(Error::ScheduleConflict(format!(
                "link {link} is served by more than one set"
            ))),
        }
    }
}

fn check_independent(set: &[Link]) -> Result<()> {
    for (i, a) in set.iter().enumerate() {
        for b in &set[i + 1..] {
            if a.conflicts_with(b) {
                return Err(Error::ScheduleConflict(format!("links {a} and {b} share a node")));
            }
        }
    }
    Ok(())
}

/// Links of `paths` ordered by position along their path, then lexicographically,
/// without duplicates.
pub fn path_link_order(paths: &[Path]) -> Vec<Link> {
    let mut keyed: Vec<(usize, Link)> = paths
        .iter()
        .flat_map(|p| p.links().enumerate().collect::<Vec<_>>())
        .collect();
    keyed.sort();
    let mut out: Vec<Link> = Vec::new();
    for (_, l) in keyed {
        if !out.contains(&l) {
            out.push(l);
        }
    }
    out
}

/// Greedy sequential coloring of the link conflict graph in the given order:
/// each link joins the first set it does not conflict with.
pub fn partition_independent_sets(g: &NetworkGraph, active_links: &[Link]) -> Result<Vec<Vec<Link>>> {
    let mut sets: Vec<Vec<Link>> = Vec::new();
    for &link in active_links {
        g.channel(link)?;
        if sets.iter().any(|s| s.contains(&link)) {
            continue;
        }
        match sets
            .iter_mut()
            .find(|s| s.iter().all(|o| !o.conflicts_with(&link)))
        {
            Some(s) => s.push(link),
            None => sets.push(vec![link]),
        }
    }
    Ok(sets)
}

/// Cycle in which set `i` owns `counts[i]` consecutive slots, sets in order.
pub fn build_cycle_schedule(sets: Vec<Vec<Link>>, counts: Vec<u32>) -> Result<CycleSchedule> {
    if sets.is_empty() {
        return Err(Error::ScheduleConflict("schedule has no sets".into()));
    }
    if sets.len() != counts.len() {
        return Err(Error::Contract(format!(
            "{} sets but {} slot counts",
            sets.len(),
            counts.len()
        )));
    }
    if let Some(i) = counts.iter().position(|c| *c == 0) {
        return Err(Error::Contract(format!("set {i} has zero slots")));
    }
    for set in &sets {
        if set.is_empty() {
            return Err(Error::ScheduleConflict("empty independent set".into()));
        }
        check_independent(set)?;
    }
    Ok(CycleSchedule { sets, slots: counts })
}

/// Worst-case end-to-end delay of `path` under `schedule`, with each link
/// served by every set that contains it.
pub fn worst_case_delay(schedule: &CycleSchedule, path: &Path) -> Result<u32> {
    let mapping: BTreeMap<Link, Vec<usize>> = path.links().map(|l| (l, schedule.sets_of(l))).collect();
    worst_case_delay_with(schedule, path, &mapping)
}

/// Worst-case delay with an explicit link → sets mapping.
///
/// Data arriving at the source in slot `t` goes out in the source's block
/// containing `t` or the next one; every later hop uses the first block that
/// starts after the previous hop's block ended. The delay is the inclusive
/// slot count from `t` to the end of the last block, maximized over the
/// arrival phase `t` in one cycle.
pub fn worst_case_delay_with(
    schedule: &CycleSchedule,
    path: &Path,
    mapping: &BTreeMap<Link, Vec<usize>>,
) -> Result<u32> {
    let cycle = u64::from(schedule.cycle_len());
    let blocks: Vec<Vec<(u64, u64)>> = path
        .links()
        .map(|l| {
            let sets = mapping
                .get(&l)
                .filter(|s| !s.is_empty())
                .ok_or(Error::UnscheduledLink(l))?;
            Ok(sets
                .iter()
                .map(|&i| (u64::from(schedule.block_start(i)), u64::from(schedule.slots()[i])))
                .collect())
        })
        .collect::<Result<_>>()?;

    // Earliest block whose end is >= `not_before_end` and start >= `not_before_start`.
    let next_block_end = |link_blocks: &[(u64, u64)], earliest_start: u64, earliest_end: u64| {
        link_blocks
            .iter()
            .map(|&(start, len)| {
                let end_offset = start + len - 1;
                let mut c = 0u64;
                if earliest_start > start {
                    c = (earliest_start - start).div_ceil(cycle);
                }
                if earliest_end > end_offset {
                    c = c.max((earliest_end - end_offset).div_ceil(cycle));
                }
                c * cycle + end_offset
            })
            .min()
            .expect("every scheduled link has a block")
    };

    let mut worst = 0;
    for t in 0..cycle {
        let mut end = next_block_end(&blocks[0], 0, t);
        for b in &blocks[1..] {
            end = next_block_end(b, end + 1, end + 1);
        }
        worst = worst.max(end - t + 1);
    }
    Ok(worst as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::ChannelModel;

    fn l(a: u32, b: u32) -> Link {
        Link::new(a, b)
    }

    fn path_graph(nodes: &[u32]) -> NetworkGraph {
        let mut g = NetworkGraph::new();
        for w in nodes.windows(2) {
            g.add_link(w[0], w[1], ChannelModel::uniform(vec![1.0]).unwrap())
                .unwrap();
        }
        g
    }

    #[test]
    fn path_alternates_two_sets() {
        let g = path_graph(&[1, 2, 3, 4]);
        let p = Path(vec![1, 2, 3, 4]);
        let sets = partition_independent_sets(&g, &path_link_order(&[p])).unwrap();
        assert_eq!(sets, vec![vec![l(1, 2), l(3, 4)], vec![l(2, 3)]]);
    }

    #[test]
    fn single_link_single_set() {
        let g = path_graph(&[1, 2]);
        let sets = partition_independent_sets(&g, &[l(1, 2)]).unwrap();
        assert_eq!(sets, vec![vec![l(1, 2)]]);
        let sched = build_cycle_schedule(sets, vec![1]).unwrap();
        assert_eq!(worst_case_delay(&sched, &Path(vec![1, 2])).unwrap(), 1);
    }

    #[test]
    fn unknown_link_rejected() {
        let g = path_graph(&[1, 2]);
        assert!(partition_independent_sets(&g, &[l(2, 1)]).is_err());
    }

    #[test]
    fn build_examples() {
        let s = build_cycle_schedule(vec![vec![l(1, 2)], vec![l(2, 3)]], vec![1, 1]).unwrap();
        assert_eq!(s.cycle_len(), 2);
        let s =
            build_cycle_schedule(vec![vec![l(1, 2)], vec![l(2, 3)], vec![l(3, 4)]], vec![1, 1, 1]).unwrap();
        assert_eq!(s.cycle_len(), 3);
        let s = build_cycle_schedule(vec![vec![l(1, 2), l(3, 4)], vec![l(2, 3)]], vec![3, 4]).unwrap();
        assert_eq!(s.cycle_len(), 7);
        let active: Vec<_> = (0..7).map(|t| s.active_links(t).len()).collect();
        assert_eq!(active, vec![2, 2, 2, 1, 1, 1, 1]);
        assert_eq!(s.block_of(l(2, 3)).unwrap(), (3, 4));
    }

    #[test]
    fn conflicting_set_rejected() {
        let err = build_cycle_schedule(vec![vec![l(1, 2), l(2, 3)]], vec![1]).unwrap_err();
        assert!(matches!(err, Error::ScheduleConflict(_)));
        assert!(build_cycle_schedule(vec![vec![l(1, 2)]], vec![0]).is_err());
    }

    #[test]
    fn two_set_alternation_delay() {
        let s = build_cycle_schedule(vec![vec![l(1, 5), l(7, 9)], vec![l(5, 7)]], vec![1, 1]).unwrap();
        assert_eq!(worst_case_delay(&s, &Path(vec![1, 5, 7, 9])).unwrap(), 4);
        let s = build_cycle_schedule(vec![vec![l(1, 5), l(7, 9)], vec![l(5, 7)]], vec![3, 4]).unwrap();
        // arrival just after the source block: 4 idle slots, then 3 + 4 + 3
        assert_eq!(worst_case_delay(&s, &Path(vec![1, 5, 7, 9])).unwrap(), 14);
    }

    #[test]
    fn unscheduled_link() {
        let s = build_cycle_schedule(vec![vec![l(1, 2)]], vec![1]).unwrap();
        assert!(matches!(
            worst_case_delay(&s, &Path(vec![1, 2, 3])),
            Err(Error::UnscheduledLink(_))
        ));
    }
}
