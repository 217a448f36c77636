//! Built-in network instances and the published reference values.
//!
//! Only the on-path channel gains are published, so each graph adds weak
//! detour links that make the published routes the least-cost ones.

use hdpower::multihop::{
    build_cycle_schedule, predicted_link_power_mixed, CycleSchedule, Flow, Link, NetworkGraph, Role,
    SourceAccounting,
};
use hdpower::{ChannelModel, DiscreteDistribution, Result};

fn uniform(values: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::uniform(values.to_vec()).expect("static distribution")
}

fn channel(values: &[f64]) -> ChannelModel {
    ChannelModel::uniform(values.to_vec()).expect("static channel")
}

const DETOUR_GAINS: [f64; 3] = [0.1, 0.2, 0.3];

pub fn dice() -> DiscreteDistribution {
    uniform(&[1.0, 2.0, 3.0])
}

/// Three-hop line `1 -> 5 -> 7 -> 9` inside a 15-node graph.
pub fn three_hop_graph() -> NetworkGraph {
    let mut g = NetworkGraph::new();
    for n in 1..=15 {
        g.add_node(n);
    }
    let on_path = [
        (1, 5, &[2.0, 3.0, 4.0, 5.0]),
        (5, 7, &[0.2, 0.5, 0.8, 1.0]),
        (7, 9, &[2.0, 2.5, 2.9, 3.5]),
    ];
    for (s, d, gains) in on_path {
        g.add_link(s, d, channel(gains)).unwrap();
    }
    let detours = [
        (1, 2),
        (2, 3),
        (3, 9),
        (1, 6),
        (6, 9),
        (5, 8),
        (8, 9),
        (7, 10),
        (10, 9),
        (1, 11),
        (11, 12),
        (12, 7),
        (5, 13),
        (13, 14),
        (14, 15),
        (15, 9),
    ];
    for (s, d) in detours {
        g.add_link(s, d, channel(&DETOUR_GAINS)).unwrap();
    }
    g
}

pub fn three_hop_flow(deadline: u32) -> Flow {
    Flow::new(1, 1, 9, dice(), deadline).unwrap()
}

pub const THREE_HOP_LINKS: [Link; 3] = [Link::new(1, 5), Link::new(5, 7), Link::new(7, 9)];

/// Two-set schedule of the three-hop line: `{(1,5),(7,9)}` for `d1` slots,
/// then `{(5,7)}` for `d2` slots.
pub fn three_hop_schedule(d1: u32, d2: u32) -> Result<CycleSchedule> {
    let [a, b, c] = THREE_HOP_LINKS;
    build_cycle_schedule(vec![vec![a, c], vec![b]], vec![d1, d2])
}

/// Predicted per-frame energies of the three links under `(d1, d2)`.
pub fn three_hop_energies(d1: u32, d2: u32) -> Result<[f64; 3]> {
    let g = three_hop_graph();
    let f = three_hop_flow(u32::MAX);
    let cycle = d1 + d2;
    let roles = [(Role::Source, d1), (Role::Relay, d2), (Role::Relay, d1)];
    let mut out = [0.0; 3];
    for (i, (link, (role, d))) in THREE_HOP_LINKS.iter().zip(roles).enumerate() {
        out[i] = predicted_link_power_mixed(
            &[(&f, role)],
            d,
            cycle,
            g.channel(*link)?,
            SourceAccounting::Buffered,
        )?;
    }
    Ok(out)
}

/// Two flows `1 -> 8` and `2 -> 6` that must share the bridge `(4,5)`.
pub fn multiuser_graph() -> NetworkGraph {
    let mut g = NetworkGraph::new();
    for n in 1..=15 {
        g.add_node(n);
    }
    let on_path: [(u32, u32, &[f64]); 6] = [
        (1, 4, &[0.8, 1.6, 2.4, 3.2, 4.0]),
        (4, 5, &[0.6, 1.2, 1.8, 2.4, 3.0]),
        (5, 7, &[0.7, 1.4, 2.1, 2.8, 3.5]),
        (7, 8, &[0.9, 1.8, 2.7, 3.6, 4.5]),
        (2, 4, &[1.0, 2.0, 3.0, 4.0, 5.0]),
        (5, 6, &[0.8, 1.6, 2.4, 3.2, 4.0]),
    ];
    for (s, d, gains) in on_path {
        g.add_link(s, d, channel(gains)).unwrap();
    }
    let detours = [
        (1, 3),
        (3, 4),
        (2, 3),
        (1, 10),
        (10, 4),
        (2, 11),
        (11, 4),
        (10, 11),
        (5, 9),
        (9, 8),
        (5, 12),
        (12, 6),
        (12, 8),
        (7, 13),
        (13, 8),
        (6, 14),
        (14, 8),
        (5, 15),
        (15, 6),
        (7, 6),
    ];
    for (s, d) in detours {
        g.add_link(s, d, channel(&DETOUR_GAINS)).unwrap();
    }
    g
}

pub fn multiuser_flows() -> Vec<Flow> {
    vec![
        Flow::new(1, 1, 8, dice(), 10).unwrap(),
        Flow::new(2, 2, 6, dice(), 10).unwrap(),
    ]
}

/// The published three-set schedule, with `(7,8)` served in both the first
/// and the third set.
pub fn multiuser_published_schedule() -> CycleSchedule {
    let l = Link::new;
    build_cycle_schedule(
        vec![
            vec![l(1, 4), l(5, 6), l(7, 8)],
            vec![l(2, 4), l(5, 7)],
            vec![l(4, 5), l(7, 8)],
        ],
        vec![1, 1, 1],
    )
    .unwrap()
}

/// One row of a published table: the frame split and the three link values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub d1: u32,
    pub d2: u32,
    pub values: [f64; 3],
}

pub const TABLE1: [TableRow; 5] = [
    TableRow {
        d1: 1,
        d2: 1,
        values: [32.0, 231.9, 38.3],
    },
    TableRow {
        d1: 1,
        d2: 2,
        values: [329.0, 33.5, 389.0],
    },
    TableRow {
        d1: 1,
        d2: 3,
        values: [3.2e3, 19.1, 3.9e3],
    },
    TableRow {
        d1: 1,
        d2: 4,
        values: [3.3e4, 14.4, 3.95e4],
    },
    TableRow {
        d1: 1,
        d2: 5,
        values: [3.5e5, 12.0, 3.97e5],
    },
];

pub const TABLE2: [TableRow; 5] = [
    TableRow {
        d1: 1,
        d2: 1,
        values: [32.0, 231.0, 38.3],
    },
    TableRow {
        d1: 2,
        d2: 1,
        values: [17.0, 2.33e3, 18.76],
    },
    TableRow {
        d1: 3,
        d2: 1,
        values: [15.9, 2.34e4, 17.94],
    },
    TableRow {
        d1: 4,
        d2: 1,
        values: [16.9, 2.38e5, 17.82],
    },
    TableRow {
        d1: 5,
        d2: 1,
        values: [18.4, 2.4e6, 17.6],
    },
];

/// Theoretical `(3,4,3)` split values.
pub const SPLIT_343: [f64; 3] = [128.2, 310.8, 155.3];
/// Theoretical unit-split values.
pub const SPLIT_111: [f64; 3] = [32.1, 231.9, 38.5];

/// Published multiuser link values: `(link, simulated, theoretical)`.
pub const MULTIUSER: [(Link, f64, f64); 6] = [
    (Link::new(1, 4), 587.0, 581.0),
    (Link::new(4, 5), 7.9e5, 7.91e5),
    (Link::new(5, 7), 658.0, 664.0),
    (Link::new(7, 8), 519.0, 516.0),
    (Link::new(2, 4), 469.0, 465.0),
    (Link::new(5, 6), 576.0, 581.0),
];
