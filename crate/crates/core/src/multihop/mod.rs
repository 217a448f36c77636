//! Network model, routing, independent-set TDMA scheduling, per-link energy
//! prediction and multi-flow planning.

mod graph;
mod planner;
mod power;
mod routing;
mod schedule;

pub use graph::{Flow, Link, NetworkGraph, NodeId, Path};
pub use planner::{
    plan_for_paths, plan_with_schedule, route_flows_sequential, route_flows_sequential_with, LinkPlan,
    PlannerOptions, RoutePlan,
};
pub use power::{
    assign_deadlines, assign_deadlines_override, compare_one_hop_vs_path, link_load, load_energy,
    path_schedule, predicted_link_power, predicted_link_power_mixed, HopChoice, HopDecision, LinkLoad, Role,
    SourceAccounting,
};
pub use routing::{
    k_shortest_paths, k_shortest_paths_by, link_cost, path_cost, shortest_path, shortest_path_by, CostedPath,
};
pub use schedule::{
    build_cycle_schedule, partition_independent_sets, path_link_order, worst_case_delay,
    worst_case_delay_with, CycleSchedule,
};
