//! Gate-control-list synthesis for time-triggered streams.
//!
//! Every stream gets a single injection offset `φ` that repeats each period,
//! so all instances see the same delay and jitter is zero. On hop `j` the
//! gate for instance `k` opens at `k·T + φ + j·d_hop` and stays open for the
//! frame's transmission time.
//!
//! The solver places streams one at a time in priority order (criticality
//! descending, then period ascending, then size descending) at the earliest
//! offset that keeps every link of its route free. Dead ends trigger
//! chronological backtracking. A first pass only tries the left edge of each
//! free offset region; if that fails, a second pass walks every offset on the
//! scenario's time grid, which is exhaustive for that grid. Both passes share
//! one node budget.
//!
//! [`verify_net_schedule`] re-derives every constraint from the scenario with
//! plain interval arithmetic and shares no code with the solver.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;
use serde::Serialize;
use thiserror::Error;

use crate::netmodel::{resolve_route, transmission_time, NetError, Route};
use crate::scenario::{hyperperiod, HyperperiodError, ModelParams, Scenario, StreamSpec};
use crate::time::Time;

/// An open gate for one frame instance on one link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FrameWindow {
    /// Egress port, `from->to`.
    pub link: String,
    pub stream: String,
    pub instance: u32,
    /// Position of `link` on the stream's route, from 0.
    pub hop: u32,
    pub open: Time,
    pub close: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StreamMetrics {
    /// Worst-case end-to-end delay over all instances.
    pub ed: Time,
    pub jitter: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetSchedule {
    /// Network hyperperiod.
    pub cycle: Time,
    pub d_hop: Time,
    pub windows: Vec<FrameWindow>,
    pub offsets: BTreeMap<String, Time>,
    pub per_stream: BTreeMap<String, StreamMetrics>,
    /// `Σ weight_base^L · φ` in microseconds.
    pub objective: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GclError {
    #[error(transparent)]
    Route(#[from] NetError),
    #[error(transparent)]
    Hyperperiod(#[from] HyperperiodError),
    #[error("no feasible gate schedule; could not place: {}", streams.join(", "))]
    Infeasible {
        streams: Vec<String>,
        budget_exhausted: bool,
    },
    #[error("stream `{0}` is not part of the schedule")]
    StreamNotScheduled(String),
}

/// Backtracking GCL solver.
#[derive(Clone, Debug)]
pub struct GclSolver {
    pub node_budget: u64,
}

impl GclSolver {
    pub fn from_params(p: &ModelParams) -> Self {
        GclSolver {
            node_budget: p.node_budget,
        }
    }

    pub fn solve(&self, s: &Scenario) -> Result<NetSchedule, GclError> {
        let d_hop = s.params.d_hop;
        let mut jobs = Vec::with_capacity(s.streams.len());
        for (idx, st) in s.streams.iter().enumerate() {
            jobs.push(Job::new(idx, st, resolve_route(s, st)?, d_hop));
        }
        let periods: Vec<Time> = s.streams.iter().map(|st| st.period).collect();
        if periods.is_empty() {
            return Ok(NetSchedule {
                cycle: Time::ZERO,
                d_hop,
                windows: vec![],
                offsets: BTreeMap::new(),
                per_stream: BTreeMap::new(),
                objective: 0.0,
            });
        }
        let cycle = hyperperiod(&periods)?;

        let hopeless: Vec<String> = jobs
            .iter()
            .filter(|j| j.max_offset < Time::ZERO)
            .map(|j| s.streams[j.idx].id.clone())
            .collect();
        if !hopeless.is_empty() {
            return Err(GclError::Infeasible {
                streams: hopeless,
                budget_exhausted: false,
            });
        }

        jobs.sort_by(|a, b| {
            let (sa, sb) = (&s.streams[a.idx], &s.streams[b.idx]);
            sb.criticality
                .cmp(&sa.criticality)
                .then(sa.period.cmp(&sb.period))
                .then(sb.size_bytes.cmp(&sa.size_bytes))
                .then(a.idx.cmp(&b.idx))
        });

        let mut search = Search {
            jobs: &jobs,
            cycle,
            d_hop,
            busy: vec![Vec::new(); s.links.len()],
            nodes: 0,
            budget: self.node_budget,
        };
        let offsets = match search.run(Mode::LeftEdges) {
            Outcome::Placed(o) => o,
            Outcome::Exhausted(_) | Outcome::Budget(_) => {
                let grid = time_grid(s, &jobs);
                match search.run(Mode::Grid(grid)) {
                    Outcome::Placed(o) => o,
                    Outcome::Exhausted(failed) => {
                        return Err(infeasible(s, &jobs, failed, false));
                    }
                    Outcome::Budget(failed) => {
                        return Err(infeasible(s, &jobs, failed, true));
                    }
                }
            }
        };

        let mut ns = NetSchedule {
            cycle,
            d_hop,
            windows: Vec::new(),
            offsets: BTreeMap::new(),
            per_stream: BTreeMap::new(),
            objective: 0.0,
        };
        for (job, &phi) in jobs.iter().zip(&offsets) {
            let st = &s.streams[job.idx];
            let instances = cycle.div_floor(st.period);
            for k in 0..instances {
                for (j, &link) in job.links.iter().enumerate() {
                    let open = st.period * k + phi + d_hop * j as i64;
                    ns.windows.push(FrameWindow {
                        link: s.links[link].port_name(),
                        stream: st.id.clone(),
                        instance: k as u32,
                        hop: j as u32,
                        open,
                        close: open + job.tx,
                    });
                }
            }
            ns.offsets.insert(st.id.clone(), phi);
            ns.per_stream.insert(
                st.id.clone(),
                StreamMetrics {
                    ed: phi + job.span,
                    jitter: Time::ZERO,
                },
            );
            ns.objective += s.params.weight_base.powi(st.criticality as i32) * phi.as_us();
        }
        ns.windows
            .sort_by(|a, b| a.link.cmp(&b.link).then(a.open.cmp(&b.open)));
        Ok(ns)
    }
}

fn infeasible(
    s: &Scenario,
    jobs: &[Job],
    failed: BTreeSet<usize>,
    budget_exhausted: bool,
) -> GclError {
    GclError::Infeasible {
        streams: failed
            .into_iter()
            .map(|i| s.streams[jobs[i].idx].id.clone())
            .collect(),
        budget_exhausted,
    }
}

/// Synthesizes a zero-jitter gate schedule for every stream of `s`.
pub fn synthesize_gcl(s: &Scenario) -> Result<NetSchedule, GclError> {
    GclSolver::from_params(&s.params).solve(s)
}

struct Job {
    idx: usize,
    links: Vec<usize>,
    period: Time,
    tx: Time,
    /// `h·d_hop + tx`: delay from injection to last-bit reception.
    span: Time,
    max_offset: Time,
}

impl Job {
    fn new(idx: usize, st: &StreamSpec, route: Route, d_hop: Time) -> Self {
        let tx = transmission_time(st.size_bytes, route.bottleneck_bps);
        let span = d_hop * route.hops() as i64 + tx;
        Job {
            idx,
            period: st.period,
            tx,
            span,
            max_offset: st.deadline.min(st.period) - span,
            links: route.links,
        }
    }
}

/// Grid on which every constraint boundary lies.
fn time_grid(s: &Scenario, jobs: &[Job]) -> Time {
    let mut g = s.params.d_hop.ticks();
    for job in jobs {
        let st = &s.streams[job.idx];
        for q in [st.period, st.deadline, job.tx] {
            g = g.gcd(&q.ticks());
        }
    }
    Time::from_ticks(g.max(1))
}

#[derive(Clone, Copy)]
enum Mode {
    LeftEdges,
    Grid(Time),
}

enum Outcome {
    Placed(Vec<Time>),
    /// Search space exhausted; positions of the streams that hit a dead end
    /// at the deepest level reached.
    Exhausted(BTreeSet<usize>),
    Budget(BTreeSet<usize>),
}

struct Level {
    /// Free offsets, half-open and sorted.
    free: Vec<(Time, Time)>,
    cursor: Time,
}

impl Level {
    fn next(&mut self, mode: Mode) -> Option<Time> {
        match mode {
            Mode::LeftEdges => {
                let &(start, _) = self.free.iter().find(|(s, _)| *s >= self.cursor)?;
                self.cursor = start + Time::TICK;
                Some(start)
            }
            Mode::Grid(g) => {
                for &(start, end) in &self.free {
                    let from = start.max(self.cursor);
                    let rem = from.rem_euclid(g);
                    let cand = if rem == Time::ZERO {
                        from
                    } else {
                        from + g - rem
                    };
                    if cand < end {
                        self.cursor = cand + Time::TICK;
                        return Some(cand);
                    }
                }
                None
            }
        }
    }
}

struct Search<'a> {
    jobs: &'a [Job],
    cycle: Time,
    d_hop: Time,
    /// Occupied windows per link, tagged with the search depth that placed them.
    busy: Vec<Vec<(Time, Time, usize)>>,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    fn run(&mut self, mode: Mode) -> Outcome {
        for b in &mut self.busy {
            b.clear();
        }
        let n = self.jobs.len();
        let mut offsets = Vec::with_capacity(n);
        let mut levels = vec![Level {
            free: self.free_offsets(0),
            cursor: Time::ZERO,
        }];
        let mut deepest = 0;
        let mut failed = BTreeSet::new();
        loop {
            let depth = levels.len() - 1;
            match levels[depth].next(mode) {
                Some(phi) => {
                    self.nodes += 1;
                    if self.nodes > self.budget {
                        failed.insert(depth);
                        return Outcome::Budget(failed);
                    }
                    self.place(depth, phi);
                    offsets.push(phi);
                    if depth + 1 == n {
                        return Outcome::Placed(offsets);
                    }
                    levels.push(Level {
                        free: self.free_offsets(depth + 1),
                        cursor: Time::ZERO,
                    });
                }
                None => {
                    if depth > deepest {
                        deepest = depth;
                        failed.clear();
                    }
                    if depth == deepest {
                        failed.insert(depth);
                    }
                    levels.pop();
                    if levels.is_empty() {
                        return Outcome::Exhausted(failed);
                    }
                    offsets.pop();
                    self.unplace(depth - 1);
                }
            }
        }
    }

    fn place(&mut self, depth: usize, phi: Time) {
        let job = &self.jobs[depth];
        let instances = self.cycle.div_floor(job.period);
        for (j, &link) in job.links.iter().enumerate() {
            for k in 0..instances {
                let open = job.period * k + phi + self.d_hop * j as i64;
                self.busy[link].push((open, open + job.tx, depth));
            }
        }
    }

    fn unplace(&mut self, depth: usize) {
        for b in &mut self.busy {
            while matches!(b.last(), Some(&(_, _, d)) if d >= depth) {
                b.pop();
            }
        }
    }

    /// Offsets in `[0, max_offset]` at which job `depth` collides with nothing.
    fn free_offsets(&self, depth: usize) -> Vec<(Time, Time)> {
        let job = &self.jobs[depth];
        let t = job.period;
        let last_instance = self.cycle.div_floor(t) - 1;
        let mut forbidden = Vec::new();
        for (j, &link) in job.links.iter().enumerate() {
            let shift = self.d_hop * j as i64;
            for &(b0, b1, _) in &self.busy[link] {
                // instance k's window [kT + φ + shift, +tx) meets [b0, b1)
                // iff φ ∈ [b0 - tx - kT - shift + 1, b1 - kT - shift - 1]
                let lo_base = b0 - job.tx - shift + Time::TICK;
                let hi_base = b1 - shift - Time::TICK;
                let k_lo =
                    Integer::div_ceil(&(lo_base - job.max_offset).ticks(), &t.ticks()).max(0);
                let k_hi = hi_base.div_floor(t).min(last_instance);
                for k in k_lo..=k_hi {
                    let lo = lo_base - t * k;
                    let hi = hi_base - t * k;
                    if hi >= Time::ZERO && lo <= job.max_offset {
                        forbidden.push((lo, hi + Time::TICK));
                    }
                }
            }
        }
        let forbidden = crate::time::merge_intervals(forbidden);
        crate::time::complement(&forbidden, Time::ZERO, job.max_offset + Time::TICK)
    }
}

/// One constraint violation found by [`verify_net_schedule`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetViolation {
    Unroutable {
        stream: String,
    },
    Unscheduled {
        stream: String,
    },
    UnknownStream {
        stream: String,
    },
    MissingWindow {
        stream: String,
        instance: u32,
        hop: u32,
    },
    WrongLink {
        stream: String,
        instance: u32,
        hop: u32,
        link: String,
    },
    Duration {
        stream: String,
        instance: u32,
        hop: u32,
    },
    OutOfCycle {
        stream: String,
        instance: u32,
        hop: u32,
    },
    Overlap {
        link: String,
        first: String,
        second: String,
        at: Time,
    },
    Precedence {
        stream: String,
        instance: u32,
        hop: u32,
        expected: Time,
        actual: Time,
    },
    PeriodContainment {
        stream: String,
        instance: u32,
    },
    Deadline {
        stream: String,
        ed: Time,
        deadline: Time,
    },
    Jitter {
        stream: String,
        jitter: Time,
    },
    MetricMismatch {
        stream: String,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerificationReport<V> {
    pub violations: Vec<V>,
}

impl<V> VerificationReport<V> {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a network schedule against the scenario it claims to serve.
pub fn verify_net_schedule(ns: &NetSchedule, s: &Scenario) -> VerificationReport<NetViolation> {
    let mut out = Vec::new();
    let known: BTreeSet<&str> = s.streams.iter().map(|st| st.id.as_str()).collect();
    for id in ns
        .windows
        .iter()
        .map(|w| w.stream.as_str())
        .collect::<BTreeSet<_>>()
    {
        if !known.contains(id) {
            out.push(NetViolation::UnknownStream {
                stream: id.to_string(),
            });
        }
    }

    let mut by_key: BTreeMap<(&str, u32, u32), &FrameWindow> = BTreeMap::new();
    for w in &ns.windows {
        by_key.insert((w.stream.as_str(), w.instance, w.hop), w);
    }

    for st in &s.streams {
        let id = st.id.as_str();
        let links: Vec<String> = st
            .route
            .windows(2)
            .map(|p| format!("{}->{}", p[0], p[1]))
            .collect();
        let Some(rate) = st
            .route
            .windows(2)
            .map(|p| s.link(&p[0], &p[1]).map(|l| l.rate_bps))
            .collect::<Option<Vec<_>>>()
            .and_then(|r| r.into_iter().min())
        else {
            out.push(NetViolation::Unroutable {
                stream: st.id.clone(),
            });
            continue;
        };
        let Some(&phi) = ns.offsets.get(id) else {
            out.push(NetViolation::Unscheduled {
                stream: st.id.clone(),
            });
            continue;
        };
        let tx = transmission_time(st.size_bytes, rate);
        let instances = if ns.cycle > Time::ZERO {
            ns.cycle.div_floor(st.period)
        } else {
            0
        };
        let mut delays = Vec::new();
        for k in 0..instances {
            let release = st.period * k;
            let mut arrival = None;
            let mut first_open = None;
            for (j, link) in links.iter().enumerate() {
                let (inst, hop) = (k as u32, j as u32);
                let Some(w) = by_key.get(&(id, inst, hop)) else {
                    out.push(NetViolation::MissingWindow {
                        stream: st.id.clone(),
                        instance: inst,
                        hop,
                    });
                    continue;
                };
                if &w.link != link {
                    out.push(NetViolation::WrongLink {
                        stream: st.id.clone(),
                        instance: inst,
                        hop,
                        link: w.link.clone(),
                    });
                }
                if w.close - w.open != tx {
                    out.push(NetViolation::Duration {
                        stream: st.id.clone(),
                        instance: inst,
                        hop,
                    });
                }
                if w.open < Time::ZERO || w.close > ns.cycle {
                    out.push(NetViolation::OutOfCycle {
                        stream: st.id.clone(),
                        instance: inst,
                        hop,
                    });
                }
                let expected = release + phi + ns.d_hop * j as i64;
                if w.open != expected {
                    out.push(NetViolation::Precedence {
                        stream: st.id.clone(),
                        instance: inst,
                        hop,
                        expected,
                        actual: w.open,
                    });
                }
                if j == 0 {
                    first_open = Some(w.open);
                }
                if j + 1 == links.len() {
                    arrival = Some(w.close + ns.d_hop);
                }
            }
            if let Some(arrival) = arrival {
                let starts_early = first_open.map(|o| o < release).unwrap_or(false);
                if arrival > release + st.period || starts_early {
                    out.push(NetViolation::PeriodContainment {
                        stream: st.id.clone(),
                        instance: k as u32,
                    });
                }
                delays.push(arrival - release);
            }
        }
        if let (Some(&max), Some(&min)) = (delays.iter().max(), delays.iter().min()) {
            if max > st.deadline {
                out.push(NetViolation::Deadline {
                    stream: st.id.clone(),
                    ed: max,
                    deadline: st.deadline,
                });
            }
            if max != min {
                out.push(NetViolation::Jitter {
                    stream: st.id.clone(),
                    jitter: max - min,
                });
            }
            let reported = ns.per_stream.get(id);
            if reported
                != Some(&StreamMetrics {
                    ed: max,
                    jitter: max - min,
                })
            {
                out.push(NetViolation::MetricMismatch {
                    stream: st.id.clone(),
                });
            }
        }
    }

    let mut per_link: BTreeMap<&str, Vec<&FrameWindow>> = BTreeMap::new();
    for w in &ns.windows {
        per_link.entry(w.link.as_str()).or_default().push(w);
    }
    for (link, mut ws) in per_link {
        ws.sort_by_key(|w| (w.open, w.close));
        let mut reach: Option<&FrameWindow> = None;
        for w in ws {
            if let Some(prev) = reach {
                if w.open < prev.close {
                    out.push(NetViolation::Overlap {
                        link: link.to_string(),
                        first: format!("{}#{}", prev.stream, prev.instance),
                        second: format!("{}#{}", w.stream, w.instance),
                        at: w.open,
                    });
                }
            }
            if reach.map(|r| w.close > r.close).unwrap_or(true) {
                reach = Some(w);
            }
        }
    }

    VerificationReport { violations: out }
}

/// Worst-case delay and jitter of `st`, measured from the gate windows.
pub fn stream_metrics(ns: &NetSchedule, st: &StreamSpec) -> Result<StreamMetrics, GclError> {
    let mut arrivals: BTreeMap<u32, (u32, Time)> = BTreeMap::new();
    for w in ns.windows.iter().filter(|w| w.stream == st.id) {
        let e = arrivals.entry(w.instance).or_insert((w.hop, w.close));
        if w.hop > e.0 || (w.hop == e.0 && w.close > e.1) {
            *e = (w.hop, w.close);
        }
    }
    if arrivals.is_empty() {
        return Err(GclError::StreamNotScheduled(st.id.clone()));
    }
    let delays: Vec<Time> = arrivals
        .iter()
        .map(|(&k, &(_, close))| close + ns.d_hop - st.period * k as i64)
        .collect();
    let max = *delays.iter().max().unwrap();
    let min = *delays.iter().min().unwrap();
    Ok(StreamMetrics {
        ed: max,
        jitter: max - min,
    })
}

/// Control-quality proxy: mean of `(ed + jitter) / period` over streams of
/// criticality 3 and above. Lower is better; only meaningful for comparing
/// schedules of the same scenario.
pub fn qoc_proxy(ns: &NetSchedule, s: &Scenario) -> f64 {
    let terms: Vec<f64> = s
        .streams
        .iter()
        .filter(|st| st.criticality >= 3)
        .filter_map(|st| {
            ns.per_stream
                .get(&st.id)
                .map(|m| m.ed.ratio(st.period) + m.jitter.ratio(st.period))
        })
        .collect();
    if terms.is_empty() {
        0.0
    } else {
        terms.iter().sum::<f64>() / terms.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GclEntry {
    pub open_us: Time,
    pub close_us: Time,
    pub stream: String,
    pub instance: u32,
}

/// Gate control list of one egress port.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GclPort {
    pub port: String,
    pub cycle_us: Time,
    pub entries: Vec<GclEntry>,
}

/// One GCL per egress port that carries traffic, entries sorted by open time.
pub fn export_gcl(ns: &NetSchedule) -> Vec<GclPort> {
    let mut ports: BTreeMap<&str, Vec<GclEntry>> = BTreeMap::new();
    for w in &ns.windows {
        ports.entry(w.link.as_str()).or_default().push(GclEntry {
            open_us: w.open,
            close_us: w.close,
            stream: w.stream.clone(),
            instance: w.instance,
        });
    }
    ports
        .into_iter()
        .map(|(port, mut entries)| {
            entries.sort_by(|a, b| a.open_us.cmp(&b.open_us).then(a.stream.cmp(&b.stream)));
            GclPort {
                port: port.to_string(),
                cycle_us: ns.cycle,
                entries,
            }
        })
        .collect()
}
