//! Least-cost routing with `E[1/H]` link weights.
//!
//! Paths are totally ordered by `(cost, hop count, node sequence)`; costs are
//! always accumulated from the source along the path so the same path gets
//! the same floating-point cost no matter how it was found.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

use super::graph::{Link, NetworkGraph, NodeId, Path};
use crate::error::{Error, Result};
use crate::stochastics::{inv_gain_moment, ChannelModel};

/// Routing weight of a link: `E[1/H]`.
pub fn link_cost(ch: &ChannelModel) -> f64 {
    inv_gain_moment(ch, 1)
}

/// A path with its accumulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostedPath {
    pub path: Path,
    pub cost: f64,
}

impl Eq for CostedPath {}

impl Ord for CostedPath {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.path.hops().cmp(&other.path.hops()))
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for CostedPath {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sum of `weight` over the path's links, accumulated from the source.
pub fn path_cost(path: &Path, weight: impl Fn(Link) -> f64) -> f64 {
    path.links().fold(0.0, |acc, l| acc + weight(l))
}

fn check_endpoints(g: &NetworkGraph, src: NodeId, dst: NodeId) -> Result<()> {
    for n in [src, dst] {
        if !g.contains_node(n) {
            return Err(Error::UnknownNode(n));
        }
    }
    Ok(())
}

/// Label-setting search from `root` (whose last node is the start) to `dst`,
/// skipping `banned_nodes` and `banned_links`.
fn dijkstra_from(
    g: &NetworkGraph,
    root: CostedPath,
    dst: NodeId,
    weight: &dyn Fn(Link) -> f64,
    banned_nodes: &HashSet<NodeId>,
    banned_links: &HashSet<Link>,
) -> Option<CostedPath> {
    let mut best: BTreeMap<NodeId, CostedPath> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(root.path.destination(), root.clone());
    heap.push(Reverse(root));
    while let Some(Reverse(label)) = heap.pop() {
        let at = label.path.destination();
        if best.get(&at).is_some_and(|b| *b < label) {
            continue;
        }
        if at == dst {
            return Some(label);
        }
        for (link, _) in g.out_links(at) {
            let next = link.dst;
            if banned_nodes.contains(&next) || banned_links.contains(&link) || label.path.0.contains(&next) {
                continue;
            }
            let mut nodes = label.path.0.clone();
            nodes.push(next);
            let cand = CostedPath {
                path: Path(nodes),
                cost: label.cost + weight(link),
            };
            if best.get(&next).is_none_or(|b| cand < *b) {
                best.insert(next, cand.clone());
                heap.push(Reverse(cand));
            }
        }
    }
    None
}

/// Least-cost path under an arbitrary nonnegative link weight.
pub fn shortest_path_by(
    g: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    weight: &dyn Fn(Link) -> f64,
) -> Result<CostedPath> {
    check_endpoints(g, src, dst)?;
    let root = CostedPath {
        path: Path(vec![src]),
        cost: 0.0,
    };
    dijkstra_from(g, root, dst, weight, &HashSet::new(), &HashSet::new())
        .ok_or(Error::Unreachable { src, dst })
}

fn expected_inverse_gain(g: &NetworkGraph) -> BTreeMap<Link, f64> {
    g.links().map(|(l, ch)| (l, link_cost(ch))).collect()
}

/// Least `Σ E[1/H]` path; ties go to fewer hops, then the smaller node sequence.
pub fn shortest_path(g: &NetworkGraph, src: NodeId, dst: NodeId) -> Result<Path> {
    let costs = expected_inverse_gain(g);
    shortest_path_by(g, src, dst, &|l| costs[&l]).map(|c| c.path)
}

/// Up to `k` loopless paths in nondecreasing `(cost, hops, nodes)` order (Yen).
pub fn k_shortest_paths_by(
    g: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    k: usize,
    weight: &dyn Fn(Link) -> f64,
) -> Result<Vec<CostedPath>> {
    check_endpoints(g, src, dst)?;
    let first = match shortest_path_by(g, src, dst, weight) {
        Ok(p) => p,
        Err(Error::Unreachable { .. }) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut accepted = vec![first];
    let mut candidates: BTreeSet<CostedPath> = BTreeSet::new();
    while accepted.len() < k {
        let prev = accepted.last().unwrap().path.0.clone();
        for i in 0..prev.len() - 1 {
            let root_nodes = &prev[..=i];
            let banned_links: HashSet<Link> = accepted
                .iter()
                .filter(|p| p.path.0.len() > i + 1 && &p.path.0[..=i] == root_nodes)
                .map(|p| Link::new(p.path.0[i], p.path.0[i + 1]))
                .collect();
            let banned_nodes: HashSet<NodeId> = root_nodes[..i].iter().copied().collect();
            let root_path = Path(root_nodes.to_vec());
            let root = CostedPath {
                cost: path_cost(&root_path, weight),
                path: root_path,
            };
            if let Some(c) = dijkstra_from(g, root, dst, weight, &banned_nodes, &banned_links) {
                if !accepted.iter().any(|a| a.path == c.path) {
                    candidates.insert(c);
                }
            }
        }
        match candidates.pop_first() {
            Some(next) => accepted.push(next),
            None => break,
        }
    }
    Ok(accepted)
}

/// Up to `k` least-cost loopless paths with `E[1/H]` weights. Fewer than `k`
/// paths is not an error.
pub fn k_shortest_paths(g: &NetworkGraph, src: NodeId, dst: NodeId, k: usize) -> Result<Vec<Path>> {
    let costs = expected_inverse_gain(g);
    Ok(k_shortest_paths_by(g, src, dst, k, &|l| costs[&l])?
        .into_iter()
        .map(|c| c.path)
        .collect())
}
