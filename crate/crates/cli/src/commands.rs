//! The four commands. Each writes its CSV/JSON files under the output
//! directory and returns an [`Outcome`] carrying the exit status.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};

use hdpower::dp_oracle::{
    policy_gap_steps, richardson, solve_frame_start, solve_per_slot, DpGrid, DpSolution,
};
use hdpower::multihop::{
    build_cycle_schedule, plan_with_schedule, route_flows_sequential_with, Flow, Link, NetworkGraph, Path,
    PlannerOptions, RoutePlan, SourceAccounting,
};
use hdpower::policy::{expected_power_frame_start_random, expected_power_per_slot};
use hdpower::simulator::{simulate_network, simulate_single_hop, NetworkReport, SimConfig};
use hdpower::{ArrivalMode, ChannelModel, RateRule};
use serde::Serialize;

use crate::config::{ConfigError, ConfigSource, ExperimentConfig, Scenario, Target};
use crate::instances;
use crate::report::{fmt_f64, rel_err, write_csv};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Validation,
    Tolerance,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::Validation => 1,
            Self::Tolerance => 2,
        }
    }

    fn worst(self, other: Self) -> Self {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] hdpower::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn status(&self) -> Status {
        match self {
            Self::Model(hdpower::Error::InfeasiblePlan { .. })
            | Self::Model(hdpower::Error::InfeasibleDeadline(_)) => Status::Tolerance,
            _ => Status::Validation,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub frames: Option<u64>,
    pub cycles: Option<u64>,
    pub out: Option<PathBuf>,
    pub tolerance: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        if let Some(s) = self.seed {
            cfg.simulation.seed = s;
        }
        if let Some(n) = self.frames {
            cfg.simulation.n_frames = n;
        }
        if let Some(n) = self.cycles {
            cfg.simulation.n_cycles = n;
        }
        if cfg.simulation.n_frames == 0 || cfg.simulation.n_cycles == 0 {
            return Err(CliError::Usage("--frames and --cycles must be >= 1".into()));
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(CliError::Usage("--tolerance must be > 0".into()));
            }
            cfg.simulation.tolerance = Some(t);
            if let Some(d) = cfg.dp_verify.as_mut() {
                d.tolerance = t;
            }
        }
        Ok(())
    }
}

/// Loads and validates a config for `scenario`, then applies overrides.
pub fn load(
    path: &FsPath,
    scenario: Scenario,
    ov: &Overrides,
) -> CliResult<(ExperimentConfig, ConfigSource)> {
    let src = ConfigSource::read(path)?;
    let mut cfg = src.parse()?;
    if cfg.scenario != scenario {
        return Err(src
            .error_at(
                "scenario",
                format!(
                    "config is for scenario {} but the {scenario} command was run",
                    cfg.scenario
                ),
            )
            .into());
    }
    ov.apply(&mut cfg)?;
    Ok((cfg, src))
}

fn out_file(cfg: &ExperimentConfig, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.join(name))
}

/// Closed-form frame energy. A frame that never holds data costs nothing; the
/// formulas would report a negative interior value there.
fn closed_form(mode: &ArrivalMode, m: u32, ch: &ChannelModel) -> f64 {
    if mode.frame_start_dist().is_zero() && mode.per_slot_dist().is_none_or(|a| a.is_zero()) {
        return 0.0;
    }
    match mode {
        ArrivalMode::FrameStart { frame_start } => expected_power_frame_start_random(frame_start, m, ch),
        ArrivalMode::PerSlot {
            frame_start,
            per_slot,
        } => expected_power_per_slot(frame_start, per_slot, m, ch),
    }
}

/// Closed-form and simulated frame energy for each frame length.
pub fn run_singlehop(cfg: &ExperimentConfig, src: &ConfigSource) -> CliResult<Outcome> {
    let spec = cfg.singlehop.as_ref().expect("validated");
    let ch = cfg.channel(src, &spec.channel)?;
    let mode = cfg.arrival_mode(src, &spec.arrivals)?;
    let tol = cfg.simulation.tolerance;
    let mut status = Status::Ok;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for m in spec.m_min..=spec.m_max {
        let theory = closed_form(&mode, m, &ch);
        let sim_cfg = SimConfig::new(
            cfg.simulation.n_frames,
            cfg.simulation.seed,
            mode.clone(),
            m,
            ch.clone(),
        );
        let sim = simulate_single_hop(&sim_cfg)?;
        let err = rel_err(sim.avg_power, theory);
        if sim.violations > 0 || tol.is_some_and(|t| err > t) {
            status = Status::Tolerance;
        }
        summary.push(format!(
            "M={m}: theory {} sim {} rel_err {:.4} violations {}",
            fmt_f64(theory),
            fmt_f64(sim.avg_power),
            err,
            sim.violations
        ));
        rows.push(vec![
            m.to_string(),
            fmt_f64(theory),
            fmt_f64(sim.avg_power),
            fmt_f64(err),
            fmt_f64(sim.avg_slot_power),
            sim.violations.to_string(),
        ]);
    }
    let path = out_file(cfg, "singlehop.csv")?;
    write_csv(
        &path,
        &[
            "M",
            "avg_power_theory",
            "avg_power_sim",
            "rel_err",
            "avg_slot_power_sim",
            "violations",
        ],
        &rows,
    )?;
    Ok(Outcome {
        status,
        files: vec![path],
        summary,
    })
}

fn solve_for(mode: &ArrivalMode, m: u32, ch: &ChannelModel, grid: DpGrid) -> hdpower::Result<DpSolution> {
    match mode {
        ArrivalMode::FrameStart { .. } => solve_frame_start(m, ch, grid),
        ArrivalMode::PerSlot { per_slot, .. } => solve_per_slot(m, ch, per_slot, grid),
    }
}

fn grid_hint(e: hdpower::Error) -> CliError {
    match e {
        hdpower::Error::GridOverflow(_) | hdpower::Error::OutOfRange { .. } => CliError::Usage(format!(
            "{e}; raise n_points or lower m_max so the grid covers every reachable backlog"
        )),
        other => other.into(),
    }
}

/// One row of the oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DpRow {
    pub m: u32,
    pub closed_form: f64,
    pub dp_value: f64,
    pub rel_gap: f64,
    /// Value extrapolated from this grid and one with twice the spacing.
    pub extrapolated: Option<f64>,
    /// Stage-1 policy gap to the rate rule, in rate-grid steps.
    pub policy_gap_steps: f64,
}

/// Closed form against backward induction for `M = 1..=m_max`.
pub fn dp_rows(
    mode: &ArrivalMode,
    ch: &ChannelModel,
    m_max: u32,
    n_points: usize,
    n_rate_points: usize,
) -> CliResult<Vec<DpRow>> {
    let first = mode.frame_start_dist();
    let later = mode.per_slot_dist();
    let mut supports = vec![first];
    supports.extend(later);
    (1..=m_max)
        .map(|m| {
            let max_data = first.max() + later.map_or(0.0, |a| a.max() * f64::from(m - 1));
            let grid = DpGrid::for_data(max_data, &supports, n_points, n_rate_points).map_err(grid_hint)?;
            let sol = solve_for(mode, m, ch, grid).map_err(grid_hint)?;
            let dp_value = sol.expected_value(first).map_err(grid_hint)?;
            let closed_form = closed_form(mode, m, ch);
            let extrapolated = if (grid.n_points - 1) % 2 == 0 {
                let coarse = DpGrid::new(grid.q_max, (grid.n_points - 1) / 2 + 1, grid.n_rate_points)?;
                solve_for(mode, m, ch, coarse)
                    .and_then(|c| c.expected_value(first))
                    .ok()
                    .map(|c| richardson(c, dp_value, 2))
            } else {
                None
            };
            let rule = RateRule::for_mode(ch, mode, m);
            Ok(DpRow {
                m,
                closed_form,
                dp_value,
                rel_gap: rel_err(dp_value, closed_form),
                extrapolated,
                policy_gap_steps: policy_gap_steps(&sol, &rule),
            })
        })
        .collect()
}

pub fn run_dp_verify(cfg: &ExperimentConfig, src: &ConfigSource) -> CliResult<Outcome> {
    let spec = cfg.dp_verify.as_ref().expect("validated");
    let ch = cfg.channel(src, &spec.channel)?;
    let mode = cfg.arrival_mode(src, &spec.arrivals)?;
    let rows = dp_rows(&mode, &ch, spec.m_max, spec.n_points, spec.n_rate_points)?;
    let mut status = Status::Ok;
    let mut summary = Vec::new();
    let mut table = Vec::new();
    for r in &rows {
        let ok = r.rel_gap <= spec.tolerance;
        if !ok {
            status = Status::Tolerance;
        }
        summary.push(format!(
            "M={}: closed form {} dp {} gap {:.3e} {}",
            r.m,
            fmt_f64(r.closed_form),
            fmt_f64(r.dp_value),
            r.rel_gap,
            if ok { "ok" } else { "exceeds tolerance" }
        ));
        table.push(vec![
            r.m.to_string(),
            fmt_f64(r.closed_form),
            fmt_f64(r.dp_value),
            fmt_f64(r.rel_gap),
            r.extrapolated.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.policy_gap_steps),
        ]);
    }
    let path = out_file(cfg, "dp_verify.csv")?;
    write_csv(
        &path,
        &[
            "M",
            "closed_form",
            "dp_value",
            "rel_gap",
            "dp_extrapolated",
            "policy_gap_steps",
        ],
        &table,
    )?;
    Ok(Outcome {
        status,
        files: vec![path],
        summary,
    })
}

/// Rebuilds `plan` on its own sets with each set lasting as long as the
/// largest override among its links.
pub fn apply_overrides(
    g: &NetworkGraph,
    flows: &[Flow],
    plan: RoutePlan,
    overrides: &BTreeMap<Link, u32>,
    accounting: SourceAccounting,
) -> hdpower::Result<RoutePlan> {
    if overrides.is_empty() {
        return Ok(plan);
    }
    let sets = plan.schedule.sets().to_vec();
    let counts = sets
        .iter()
        .map(|s| {
            s.iter()
                .map(|l| overrides.get(l).copied().unwrap_or(1))
                .max()
                .unwrap_or(1)
        })
        .collect();
    let order = plan.order.clone();
    let mut rebuilt = plan_with_schedule(
        g,
        flows,
        &plan.paths,
        build_cycle_schedule(sets, counts)?,
        accounting,
    )?;
    rebuilt.order = order;
    Ok(rebuilt)
}

/// Fails with the first flow whose worst-case delay exceeds its deadline.
pub fn check_deadlines(plan: &RoutePlan, flows: &[Flow]) -> hdpower::Result<()> {
    match plan.violations(flows).next() {
        None => Ok(()),
        Some(f) => Err(hdpower::Error::InfeasiblePlan {
            flow: f.id,
            reason: format!(
                "worst-case delay {} exceeds deadline {}",
                plan.worst_case_delays[&f.id], f.deadline
            ),
        }),
    }
}

pub fn routes_of(plan: &RoutePlan, flows: &[Flow]) -> Vec<(Flow, Path)> {
    flows
        .iter()
        .map(|f| (f.clone(), plan.paths[&f.id].clone()))
        .collect()
}

/// Rows of the network CSV, one per scheduled link.
pub fn network_rows(plan: &RoutePlan, sim: &NetworkReport) -> Vec<(Link, Vec<String>, f64)> {
    let cycle = f64::from(plan.schedule.cycle_len());
    plan.links
        .iter()
        .map(|lp| {
            let s = sim.link(lp.link).expect("simulated every planned link");
            let err = rel_err(s.report.avg_power, lp.predicted_energy);
            let flows = lp
                .flows
                .iter()
                .map(|(id, _)| id.to_string())
                .collect::<Vec<_>>()
                .join("+");
            let row = vec![
                lp.link.src.to_string(),
                lp.link.dst.to_string(),
                flows,
                lp.deadline.to_string(),
                fmt_f64(s.report.avg_power),
                fmt_f64(lp.predicted_energy),
                fmt_f64(err),
                fmt_f64(s.report.avg_slot_power),
                fmt_f64(lp.predicted_energy / cycle),
            ];
            (lp.link, row, err)
        })
        .collect()
}

pub const NETWORK_HEADER: [&str; 9] = [
    "link_src",
    "link_dst",
    "flow",
    "D_i",
    "avg_power_sim",
    "avg_power_theory",
    "rel_err",
    "avg_slot_power_sim",
    "avg_slot_power_theory",
];

#[derive(Serialize)]
struct PlanReport {
    normalization: &'static str,
    cycle_len: u32,
    sets: Vec<SetReport>,
    flows: Vec<FlowReport>,
    links: Vec<LinkPlanReport>,
}

#[derive(Serialize)]
struct SetReport {
    links: Vec<[u32; 2]>,
    slots: u32,
}

#[derive(Serialize)]
struct FlowReport {
    id: u32,
    path: Vec<u32>,
    deadline: u32,
    worst_case_delay: u32,
}

#[derive(Serialize)]
struct LinkPlanReport {
    src: u32,
    dst: u32,
    deadline: u32,
    flows: Vec<u32>,
    predicted_energy: f64,
    predicted_slot_power: f64,
}

fn plan_json(plan: &RoutePlan, flows: &[Flow]) -> String {
    let cycle = plan.schedule.cycle_len();
    let report = PlanReport {
        normalization: "energy per frame of the transmitting node; slot power is energy / cycle_len",
        cycle_len: cycle,
        sets: plan
            .schedule
            .sets()
            .iter()
            .zip(plan.schedule.slots())
            .map(|(s, &n)| SetReport {
                links: s.iter().map(|l| [l.src, l.dst]).collect(),
                slots: n,
            })
            .collect(),
        flows: flows
            .iter()
            .map(|f| FlowReport {
                id: f.id,
                path: plan.paths[&f.id].nodes().to_vec(),
                deadline: f.deadline,
                worst_case_delay: plan.worst_case_delays[&f.id],
            })
            .collect(),
        links: plan
            .links
            .iter()
            .map(|l| LinkPlanReport {
                src: l.link.src,
                dst: l.link.dst,
                deadline: l.deadline,
                flows: l.flows.iter().map(|(id, _)| *id).collect(),
                predicted_energy: l.predicted_energy,
                predicted_slot_power: l.predicted_energy / f64::from(cycle),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&report).expect("plan serializes");
    s.push('\n');
    s
}

/// Plans, simulates and reports a network; shared by `multihop` and the
/// multiuser reproduction.
pub fn plan_and_simulate(
    cfg: &ExperimentConfig,
    g: &NetworkGraph,
    flows: &[Flow],
    overrides: &BTreeMap<Link, u32>,
    opts: PlannerOptions,
    stem: &str,
) -> CliResult<(RoutePlan, NetworkReport, Outcome)> {
    let plan = route_flows_sequential_with(g, flows, opts)?;
    let plan = apply_overrides(g, flows, plan, overrides, opts.accounting)?;
    check_deadlines(&plan, flows)?;
    let sim = simulate_network(
        g,
        &plan.schedule,
        &routes_of(&plan, flows),
        cfg.simulation.n_cycles,
        cfg.simulation.seed,
    )?;

    let mut status = Status::Ok;
    let mut summary = Vec::new();
    for f in flows {
        summary.push(format!(
            "flow {}: path {} worst-case delay {} (deadline {})",
            f.id, plan.paths[&f.id], plan.worst_case_delays[&f.id], f.deadline
        ));
    }
    let rows = network_rows(&plan, &sim);
    for (link, _, err) in &rows {
        let lp = plan.link(*link).unwrap();
        let s = sim.link(*link).unwrap();
        summary.push(format!(
            "link {link}: D_i {} theory {} sim {} rel_err {:.4}",
            lp.deadline,
            fmt_f64(lp.predicted_energy),
            fmt_f64(s.report.avg_power),
            err
        ));
        if cfg.simulation.tolerance.is_some_and(|t| *err > t) {
            status = Status::Tolerance;
        }
    }
    if sim.violations() > 0 {
        summary.push(format!("{} frames missed their deadline", sim.violations()));
        status = Status::Tolerance;
    }
    let csv_path = out_file(cfg, &format!("{stem}.csv"))?;
    write_csv(
        &csv_path,
        &NETWORK_HEADER,
        &rows.into_iter().map(|r| r.1).collect::<Vec<_>>(),
    )?;
    let json_path = out_file(cfg, &format!("{stem}_plan.json"))?;
    std::fs::write(&json_path, plan_json(&plan, flows))?;
    let outcome = Outcome {
        status,
        files: vec![csv_path, json_path],
        summary,
    };
    Ok((plan, sim, outcome))
}

pub fn run_multihop(cfg: &ExperimentConfig, src: &ConfigSource) -> CliResult<Outcome> {
    let net = cfg.network.as_ref().expect("validated");
    let g = cfg.graph(src, net)?;
    let flows = cfg.flows(src, net, &g)?;
    let overrides = net
        .deadline_overrides
        .iter()
        .map(|o| (Link::new(o.src, o.dst), o.slots))
        .collect();
    let opts = PlannerOptions {
        k_paths: net.k_paths,
        accounting: net.accounting.into(),
    };
    let (_, _, outcome) = plan_and_simulate(cfg, &g, &flows, &overrides, opts, "network")?;
    Ok(outcome)
}

/// One reproduced value.
#[derive(Debug, Clone, PartialEq)]
pub struct Reproduced {
    pub configuration: String,
    pub link: Link,
    pub reference: f64,
    pub computed: f64,
}

impl Reproduced {
    pub fn rel_err(&self) -> f64 {
        rel_err(self.computed, self.reference)
    }
}

pub fn reproduce_table(rows: &[instances::TableRow]) -> hdpower::Result<Vec<Reproduced>> {
    let mut out = Vec::new();
    for row in rows {
        let e = instances::three_hop_energies(row.d1, row.d2)?;
        for ((link, reference), computed) in instances::THREE_HOP_LINKS.iter().zip(row.values).zip(e) {
            out.push(Reproduced {
                configuration: format!("D1={} D2={}", row.d1, row.d2),
                link: *link,
                reference,
                computed,
            });
        }
    }
    Ok(out)
}

/// Default config for reproductions run without a config file.
pub fn reproduce_config(target: Target) -> ExperimentConfig {
    ExperimentConfig {
        scenario: Scenario::Reproduce,
        description: None,
        distributions: BTreeMap::new(),
        channels: BTreeMap::new(),
        singlehop: None,
        dp_verify: None,
        network: None,
        reproduce: Some(crate::config::ReproduceSpec { target }),
        simulation: Default::default(),
        output: Default::default(),
    }
}

pub const REPRODUCE_TOLERANCE: f64 = 0.05;

pub fn run_reproduce(cfg: &ExperimentConfig, target: Target) -> CliResult<Outcome> {
    let tol = cfg.simulation.tolerance.unwrap_or(REPRODUCE_TOLERANCE);
    let mut files = Vec::new();
    let mut summary = Vec::new();
    let mut status = Status::Ok;
    let values = match target {
        Target::Table1 => reproduce_table(&instances::TABLE1)?,
        Target::Table2 => reproduce_table(&instances::TABLE2)?,
        Target::Multiuser => {
            let g = instances::multiuser_graph();
            let flows = instances::multiuser_flows();
            let (plan, _, outcome) = plan_and_simulate(
                cfg,
                &g,
                &flows,
                &BTreeMap::new(),
                PlannerOptions::default(),
                "multiuser_network",
            )?;
            files.extend(outcome.files);
            summary.extend(outcome.summary);
            status = status.worst(outcome.status);
            instances::MULTIUSER
                .iter()
                .map(|&(link, _, theory)| {
                    let computed = plan.link(link).map_or(f64::NAN, |l| l.predicted_energy);
                    Reproduced {
                        configuration: "multiuser".into(),
                        link,
                        reference: theory,
                        computed,
                    }
                })
                .collect()
        }
    };
    let mut rows = Vec::new();
    for v in &values {
        let err = v.rel_err();
        let ok = err <= tol;
        if !ok {
            status = status.worst(Status::Tolerance);
        }
        summary.push(format!(
            "{} {}: reference {} computed {} rel_err {:.4}{}",
            v.configuration,
            v.link,
            fmt_f64(v.reference),
            fmt_f64(v.computed),
            err,
            if ok { "" } else { " EXCEEDS TOLERANCE" }
        ));
        rows.push(vec![
            v.configuration.clone(),
            v.link.to_string(),
            fmt_f64(v.reference),
            fmt_f64(v.computed),
            fmt_f64(err),
        ]);
    }
    let path = out_file(cfg, &format!("reproduce_{target}.csv"))?;
    write_csv(
        &path,
        &[
            "configuration",
            "link",
            "paper_value",
            "computed_value",
            "rel_err",
        ],
        &rows,
    )?;
    files.insert(0, path);
    Ok(Outcome {
        status,
        files,
        summary,
    })
}
