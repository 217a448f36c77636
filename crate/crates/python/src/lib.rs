//! Python bindings for hdpower: distributions, channels, closed forms, the
//! rate rule, the DP oracle, single-hop simulation and multihop planning.

use hdpower::dp_oracle::{policy_gap_steps, solve_frame_start, solve_per_slot, DpGrid, DpSolution};
use hdpower::multihop::{self, Link, NetworkGraph, SourceAccounting};
use hdpower::simulator::{self, SimConfig};
use hdpower::{policy, ArrivalMode, ChannelModel, DiscreteDistribution, RateRule};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: hdpower::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Finite distribution over non-negative values; equal weights by default.
#[pyclass(name = "Distribution", module = "hdpower", frozen, from_py_object)]
#[derive(Clone)]
pub struct Distribution(DiscreteDistribution);

#[pymethods]
impl Distribution {
    #[new]
    #[pyo3(signature = (values, probs=None))]
    fn new(values: Vec<f64>, probs: Option<Vec<f64>>) -> PyResult<Self> {
        match probs {
            Some(p) => DiscreteDistribution::new(values, p),
            None => DiscreteDistribution::uniform(values),
        }
        .map(Self)
        .map_err(err)
    }

    #[getter]
    fn support(&self) -> Vec<f64> {
        self.0.support().to_vec()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.0.probs().to_vec()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn max(&self) -> f64 {
        self.0.max()
    }

    fn __repr__(&self) -> String {
        format!("Distribution({:?}, {:?})", self.0.support(), self.0.probs())
    }
}

/// Fading channel: a gain distribution plus `gamma` and noise power `sigma2`.
#[pyclass(name = "Channel", module = "hdpower", frozen, from_py_object)]
#[derive(Clone)]
pub struct Channel(ChannelModel);

#[pymethods]
impl Channel {
    #[new]
    #[pyo3(signature = (gains, gamma=1.0, sigma2=1.0))]
    fn new(gains: Distribution, gamma: f64, sigma2: f64) -> PyResult<Self> {
        ChannelModel::new(gains.0, gamma, sigma2).map(Self).map_err(err)
    }

    #[getter]
    fn gains(&self) -> Distribution {
        Distribution(self.0.gains().clone())
    }

    fn __repr__(&self) -> String {
        format!(
            "Channel(gains={:?}, gamma={}, sigma2={})",
            self.0.gains().support(),
            self.0.gamma(),
            self.0.sigma2()
        )
    }
}

fn mode(frame_start: &Distribution, per_slot: Option<&Distribution>) -> ArrivalMode {
    match per_slot {
        Some(a) => ArrivalMode::PerSlot {
            frame_start: frame_start.0.clone(),
            per_slot: a.0.clone(),
        },
        None => ArrivalMode::FrameStart {
            frame_start: frame_start.0.clone(),
        },
    }
}

fn check_frame(m: u32) -> PyResult<()> {
    if m == 0 {
        return Err(PyValueError::new_err("frame size must be >= 1"));
    }
    Ok(())
}

/// Power needed to send `rate` nats at raw gain `h`.
#[pyfunction]
fn power_for_rate(rate: f64, h: f64, channel: &Channel) -> PyResult<f64> {
    policy::power_for_rate(rate, h, &channel.0).map_err(err)
}

/// Expected frame energy for a fixed batch `a1` present at the frame start.
#[pyfunction]
fn expected_power_frame_start(a1: f64, m: u32, channel: &Channel) -> PyResult<f64> {
    check_frame(m)?;
    Ok(policy::expected_power_frame_start(a1, m, &channel.0))
}

/// Closed-form expected frame energy; per-slot arrivals when `per_slot` is given.
#[pyfunction]
#[pyo3(signature = (frame_start, m, channel, per_slot=None))]
fn expected_power(
    frame_start: &Distribution,
    m: u32,
    channel: &Channel,
    per_slot: Option<Distribution>,
) -> PyResult<f64> {
    check_frame(m)?;
    Ok(match per_slot {
        Some(a) => policy::expected_power_per_slot(&frame_start.0, &a.0, m, &channel.0),
        None => policy::expected_power_frame_start_random(&frame_start.0, m, &channel.0),
    })
}

/// Rate sent with `remaining` slots left, backlog `q` and raw gain `h`.
#[pyfunction]
#[pyo3(signature = (q, remaining, h, channel, m, per_slot=None))]
fn optimal_rate(
    q: f64,
    remaining: u32,
    h: f64,
    channel: &Channel,
    m: u32,
    per_slot: Option<Distribution>,
) -> PyResult<f64> {
    check_frame(m)?;
    if remaining == 0 || remaining > m || !(q >= 0.0) {
        return Err(PyValueError::new_err("need q >= 0 and 1 <= remaining <= m"));
    }
    let rule = match per_slot {
        Some(a) => RateRule::per_slot(&channel.0, &a.0, m),
        None => RateRule::frame_start(&channel.0, m),
    };
    Ok(rule.rate(q, remaining, h))
}

fn solve(
    m: u32,
    channel: &Channel,
    fs: &Distribution,
    per_slot: Option<&Distribution>,
    n: usize,
    nr: usize,
) -> PyResult<DpSolution> {
    check_frame(m)?;
    let mut supports = vec![&fs.0];
    let max_data = fs.0.max() + per_slot.map_or(0.0, |a| a.0.max() * f64::from(m - 1));
    if let Some(a) = per_slot {
        supports.push(&a.0);
    }
    let grid = DpGrid::for_data(max_data, &supports, n, nr).map_err(err)?;
    match per_slot {
        Some(a) => solve_per_slot(m, &channel.0, &a.0, grid),
        None => solve_frame_start(m, &channel.0, grid),
    }
    .map_err(err)
}

/// Backward-induction value of a frame, averaged over the frame-start batch.
///
/// Returns `(value, policy_gap_steps)`; the second entry is the largest
/// distance, in grid steps, between the DP rate and the closed-form rule at
/// states where the rule never clamps.
#[pyfunction]
#[pyo3(signature = (frame_start, m, channel, per_slot=None, n_points=2000, n_rate_points=2000))]
fn dp_value(
    py: Python<'_>,
    frame_start: Distribution,
    m: u32,
    channel: Channel,
    per_slot: Option<Distribution>,
    n_points: usize,
    n_rate_points: usize,
) -> PyResult<(f64, f64)> {
    py.detach(|| {
        let sol = solve(
            m,
            &channel,
            &frame_start,
            per_slot.as_ref(),
            n_points,
            n_rate_points,
        )?;
        let value = sol.expected_value(&frame_start.0).map_err(err)?;
        let rule = RateRule::for_mode(&channel.0, &mode(&frame_start, per_slot.as_ref()), m);
        Ok((value, policy_gap_steps(&sol, &rule)))
    })
}

/// Monte Carlo run of one link; returns a dict of frame statistics.
#[pyfunction]
#[pyo3(signature = (frame_start, m, channel, per_slot=None, n_frames=100_000, seed=1))]
fn simulate_single_hop<'py>(
    py: Python<'py>,
    frame_start: Distribution,
    m: u32,
    channel: Channel,
    per_slot: Option<Distribution>,
    n_frames: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    check_frame(m)?;
    let cfg = SimConfig::new(
        n_frames,
        seed,
        mode(&frame_start, per_slot.as_ref()),
        m,
        channel.0,
    );
    let r = py.detach(|| simulator::simulate_single_hop(&cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("frames", r.frames)?;
    d.set_item("avg_power", r.avg_power)?;
    d.set_item("avg_slot_power", r.avg_slot_power)?;
    d.set_item("violations", r.violations)?;
    d.set_item("max_residual", r.max_residual)?;
    Ok(d)
}

/// Directed network of links, each with its own channel.
#[pyclass(name = "Network", module = "hdpower", from_py_object)]
#[derive(Clone, Default)]
pub struct Network(NetworkGraph);

type FlowTuple = (u32, u32, u32, Distribution, u32);

fn flows(specs: Vec<FlowTuple>) -> PyResult<Vec<multihop::Flow>> {
    specs
        .into_iter()
        .map(|(id, s, d, a, deadline)| multihop::Flow::new(id, s, d, a.0, deadline).map_err(err))
        .collect()
}

#[pymethods]
impl Network {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    fn add_link(&mut self, src: u32, dst: u32, channel: &Channel) -> PyResult<()> {
        self.0.add_link(src, dst, channel.0.clone()).map_err(err)
    }

    fn links(&self) -> Vec<(u32, u32)> {
        self.0.links().map(|(l, _)| (l.src, l.dst)).collect()
    }

    /// Up to `k` loopless least-cost paths as node lists.
    fn k_shortest_paths(&self, src: u32, dst: u32, k: usize) -> PyResult<Vec<Vec<u32>>> {
        let paths = multihop::k_shortest_paths(&self.0, src, dst, k).map_err(err)?;
        Ok(paths.into_iter().map(|p| p.0).collect())
    }

    /// Routes and schedules `flows`, given as `(id, source, destination,
    /// arrivals, deadline)` tuples, then simulates `n_cycles` cycles.
    ///
    /// Returns a dict with `paths`, `worst_case_delays`, `cycle_len` and a
    /// `links` list holding predicted and simulated per-frame energies.
    #[pyo3(signature = (flows, n_cycles=10_000, seed=1, idle_only=false))]
    fn plan<'py>(
        &self,
        py: Python<'py>,
        flows: Vec<FlowTuple>,
        n_cycles: u64,
        seed: u64,
        idle_only: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let flows = self::flows(flows)?;
        let opts = multihop::PlannerOptions {
            accounting: if idle_only {
                SourceAccounting::IdleOnly
            } else {
                SourceAccounting::Buffered
            },
            ..Default::default()
        };
        let (plan, sim) = py
            .detach(|| -> hdpower::Result<_> {
                let plan = multihop::route_flows_sequential_with(&self.0, &flows, opts)?;
                let routes: Vec<_> = flows
                    .iter()
                    .map(|f| (f.clone(), plan.paths[&f.id].clone()))
                    .collect();
                let sim = if n_cycles > 0 {
                    Some(simulator::simulate_network(
                        &self.0,
                        &plan.schedule,
                        &routes,
                        n_cycles,
                        seed,
                    )?)
                } else {
                    None
                };
                Ok((plan, sim))
            })
            .map_err(err)?;

        let out = PyDict::new(py);
        let paths = PyDict::new(py);
        for (id, p) in &plan.paths {
            paths.set_item(id, p.0.clone())?;
        }
        out.set_item("paths", paths)?;
        out.set_item("worst_case_delays", plan.worst_case_delays.clone())?;
        out.set_item("cycle_len", plan.schedule.cycle_len())?;
        let mut links = Vec::new();
        for lp in &plan.links {
            let d = PyDict::new(py);
            d.set_item("link", (lp.link.src, lp.link.dst))?;
            d.set_item("deadline", lp.deadline)?;
            d.set_item("flows", lp.flows.iter().map(|f| f.0).collect::<Vec<_>>())?;
            d.set_item("predicted_energy", lp.predicted_energy)?;
            if let Some(s) = sim.as_ref().and_then(|s| s.link(lp.link)) {
                d.set_item("simulated_energy", s.report.avg_power)?;
                d.set_item("violations", s.report.violations)?;
            }
            links.push(d);
        }
        out.set_item("links", links)?;
        Ok(out)
    }

    /// Worst-case end-to-end delay of `path` under explicit slot sets.
    fn worst_case_delay(&self, sets: Vec<Vec<(u32, u32)>>, slots: Vec<u32>, path: Vec<u32>) -> PyResult<u32> {
        let sets = sets
            .into_iter()
            .map(|s| s.into_iter().map(|(a, b)| Link::new(a, b)).collect())
            .collect();
        let sched = multihop::build_cycle_schedule(sets, slots).map_err(err)?;
        multihop::worst_case_delay(&sched, &multihop::Path(path)).map_err(err)
    }
}

#[pymodule(name = "hdpower")]
mod hdpower_module {
    #[pymodule_export]
    use super::{
        dp_value, expected_power, expected_power_frame_start, optimal_rate, power_for_rate,
        simulate_single_hop, Channel, Distribution, Network,
    };
}
