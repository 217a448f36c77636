use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::stochastics::{ChannelModel, DiscreteDistribution};

pub type NodeId = u32;

/// Directed link `src -> dst`. Ordered lexicographically by `(src, dst)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
}

impl Link {
    pub const fn new(src: NodeId, dst: NodeId) -> Self {
        Self { src, dst }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.src == node || self.dst == node
    }

    /// Half-duplex, one-link-per-node conflict: the links share an endpoint.
    pub fn conflicts_with(&self, other: &Link) -> bool {
        self.touches(other.src) || self.touches(other.dst)
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.src, self.dst)
    }
}

/// Directed graph whose links each carry their own fading channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkGraph {
    nodes: BTreeSet<NodeId>,
    links: BTreeMap<Link, ChannelModel>,
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: NodeId) {
        self.nodes.insert(node);
    }

    /// Adds (or replaces) a link; both endpoints are added as nodes.
    pub fn add_link(&mut self, src: NodeId, dst: NodeId, channel: ChannelModel) -> Result<()> {
        if src == dst {
            return Err(Error::Contract(format!("self-loop at node {src}")));
        }
        self.nodes.insert(src);
        self.nodes.insert(dst);
        self.links.insert(Link::new(src, dst), channel);
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn links(&self) -> impl Iterator<Item = (Link, &ChannelModel)> + '_ {
        self.links.iter().map(|(l, c)| (*l, c))
    }

    pub fn channel(&self, link: Link) -> Result<&ChannelModel> {
        self.links.get(&link).ok_or(Error::UnknownLink(link))
    }

    /// Outgoing links of `node` in ascending destination order.
    pub fn out_links(&self, node: NodeId) -> impl Iterator<Item = (Link, &ChannelModel)> + '_ {
        self.links
            .range(Link::new(node, NodeId::MIN)..=Link::new(node, NodeId::MAX))
            .map(|(l, c)| (*l, c))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }
}

/// A source-destination stream with its own arrival law and end-to-end deadline.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: u32,
    pub source: NodeId,
    pub destination: NodeId,
    /// Nats generated at the source per slot.
    pub arrivals: DiscreteDistribution,
    /// End-to-end hard deadline in slots.
    pub deadline: u32,
}

impl Flow {
    pub fn new(
        id: u32,
        source: NodeId,
        destination: NodeId,
        arrivals: DiscreteDistribution,
        deadline: u32,
    ) -> Result<Self> {
        if source == destination {
            return Err(Error::Contract(format!(
                "flow {id}: source and destination are both {source}"
            )));
        }
        if deadline == 0 {
            return Err(Error::Contract(format!("flow {id}: deadline must be >= 1")));
        }
        Ok(Self {
            id,
            source,
            destination,
            arrivals,
            deadline,
        })
    }
}

/// Node sequence from source to destination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(pub Vec<NodeId>);

impl Path {
    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.0.windows(2).map(|w| Link::new(w[0], w[1]))
    }

    pub fn hops(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn source(&self) -> NodeId {
        self.0[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.0.last().unwrap()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join("->"))
    }
}
