//! Partition and task schedules for fog nodes.
//!
//! Each node gets one partition per criticality level (per core). Tasks are
//! bound to cores by first-fit-decreasing on utilization and never migrate.
//! On every core, jobs over the major frame are laid out by preemptive EDF;
//! maximal runs of back-to-back execution at one criticality level become
//! the windows of that level's partition, so a partition only ever hosts its
//! own level.
//!
//! WCETs are rounded up to the 0.1 μs grid before anything is placed, so a
//! schedule never under-provisions a task.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gclsched::VerificationReport;
use crate::scenario::{expand_tasks, hyperperiod, ApplicationSpec, FogNodeSpec, Scenario};
use crate::time::Time;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub id: String,
    pub node: String,
    pub criticality: u8,
    /// `None` until the partition is bound to a core.
    pub core: Option<u32>,
    pub windows: Vec<(Time, Time)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub id: String,
    pub app: String,
    pub criticality: u8,
    pub core: u32,
    pub partition: String,
    pub wcet: Time,
    pub period: Time,
    pub deadline: Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSlice {
    pub task: String,
    pub core: u32,
    pub partition: String,
    pub start: Time,
    pub end: Time,
    /// Job index `k`: the job released at `k·period`.
    pub job: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeSchedule {
    pub node: String,
    pub cores: u32,
    pub major_frame: Time,
    pub tasks: Vec<ScheduledTask>,
    pub partitions: Vec<Partition>,
    pub slices: Vec<TaskSlice>,
    pub per_core_utilization: Vec<f64>,
}

impl NodeSchedule {
    pub fn task(&self, id: &str) -> Option<&ScheduledTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn core_slices(&self, core: u32) -> impl Iterator<Item = &TaskSlice> {
        self.slices.iter().filter(move |s| s.core == core)
    }

    /// Rebuilds partition windows and utilization after slices changed.
    pub fn refresh(&mut self) {
        self.slices.sort_by_key(|s| (s.core, s.start));
        for p in &mut self.partitions {
            p.windows.clear();
        }
        let mut open: Option<(usize, Time, Time)> = None;
        let mut last_core = None;
        for sl in &self.slices {
            let idx = self.partitions.iter().position(|p| p.id == sl.partition);
            let Some(idx) = idx else { continue };
            match open {
                Some((pi, s, e)) if pi == idx && e == sl.start && last_core == Some(sl.core) => {
                    open = Some((pi, s, sl.end));
                }
                _ => {
                    if let Some((pi, s, e)) = open {
                        self.partitions[pi].windows.push((s, e));
                    }
                    open = Some((idx, sl.start, sl.end));
                }
            }
            last_core = Some(sl.core);
        }
        if let Some((pi, s, e)) = open {
            self.partitions[pi].windows.push((s, e));
        }
        self.per_core_utilization = (0..self.cores)
            .map(|c| {
                if self.major_frame > Time::ZERO {
                    self.core_slices(c)
                        .map(|s| s.end - s.start)
                        .sum::<Time>()
                        .ratio(self.major_frame)
                } else {
                    0.0
                }
            })
            .collect();
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error("node `{node}`: cannot map tasks onto {cores} core(s): {}", unplaced.join(", "))]
    Unmappable {
        node: String,
        cores: u32,
        unplaced: Vec<String>,
    },
    #[error("node `{node}`: job {job} of task `{task}` misses its deadline at {deadline}")]
    DeadlineMiss {
        node: String,
        task: String,
        job: u32,
        deadline: Time,
    },
    #[error("node `{0}` is not declared")]
    UnknownNode(String),
    #[error("node `{node}`: {source}")]
    Hyperperiod {
        node: String,
        source: crate::scenario::HyperperiodError,
    },
}

impl NodeError {
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            NodeError::Unmappable { .. } | NodeError::DeadlineMiss { .. }
        )
    }
}

fn partition_id(node: &str, core: Option<u32>, level: u8) -> String {
    match core {
        Some(c) => format!("{node}/c{c}/L{level}"),
        None => format!("{node}/L{level}"),
    }
}

/// One partition per distinct criticality level among `apps`, not yet bound
/// to a core.
pub fn assign_partitions(node: &str, apps: &[ApplicationSpec]) -> Vec<Partition> {
    let levels: BTreeSet<u8> = apps.iter().map(|a| a.level).collect();
    levels
        .into_iter()
        .rev()
        .map(|level| Partition {
            id: partition_id(node, None, level),
            node: node.to_string(),
            criticality: level,
            core: None,
            windows: vec![],
        })
        .collect()
}

/// A task bound to a core.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MappedTask {
    pub id: String,
    pub app: String,
    pub criticality: u8,
    pub wcet: Time,
    pub period: Time,
    pub deadline: Time,
    pub core: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CoreMapping {
    pub node: String,
    pub cores: u32,
    pub tasks: Vec<MappedTask>,
}

impl CoreMapping {
    pub fn core_tasks(&self, core: u32) -> impl Iterator<Item = &MappedTask> {
        self.tasks.iter().filter(move |t| t.core == core)
    }

    pub fn core_utilization(&self, core: u32) -> f64 {
        self.core_tasks(core).map(|t| t.wcet.ratio(t.period)).sum()
    }
}

/// Exact `Σ wcet/period ≤ 1` test in integer arithmetic.
fn fits(tasks: &[(Time, Time)]) -> bool {
    let mut num: i128 = 0;
    let mut den: i128 = 1;
    for &(c, p) in tasks {
        // num/den + c/p
        let (c, p) = (c.ticks() as i128, p.ticks() as i128);
        num = num * p + c * den;
        den *= p;
        let g = gcd(num, den);
        num /= g;
        den /= g;
        if num > den {
            return false;
        }
    }
    true
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Binds every task of `apps` to one of `cores` cores by first-fit
/// decreasing utilization.
pub fn map_to_cores(
    node: &str,
    apps: &[ApplicationSpec],
    cores: u32,
) -> Result<CoreMapping, NodeError> {
    let mut tasks: Vec<MappedTask> = apps
        .iter()
        .flat_map(|a| {
            expand_tasks(a).into_iter().map(move |t| MappedTask {
                id: t.id,
                app: a.id.clone(),
                criticality: a.level,
                wcet: Time::from_us_ceil(t.wcet_us),
                period: t.period,
                deadline: t.deadline,
                core: 0,
            })
        })
        .collect();
    // stable: ties keep declaration order
    tasks.sort_by(|a, b| {
        let lhs = b.wcet.ticks() as i128 * a.period.ticks() as i128;
        let rhs = a.wcet.ticks() as i128 * b.period.ticks() as i128;
        lhs.cmp(&rhs)
    });
    let mut bins: Vec<Vec<(Time, Time)>> = vec![Vec::new(); cores as usize];
    let mut unplaced = Vec::new();
    for t in &mut tasks {
        let slot = bins.iter().position(|bin| {
            let mut trial = bin.clone();
            trial.push((t.wcet, t.period));
            fits(&trial)
        });
        match slot {
            Some(c) => {
                bins[c].push((t.wcet, t.period));
                t.core = c as u32;
            }
            None => unplaced.push(t.id.clone()),
        }
    }
    if !unplaced.is_empty() || (cores == 0 && !tasks.is_empty()) {
        if unplaced.is_empty() {
            unplaced = tasks.iter().map(|t| t.id.clone()).collect();
        }
        return Err(NodeError::Unmappable {
            node: node.to_string(),
            cores,
            unplaced,
        });
    }
    Ok(CoreMapping {
        node: node.to_string(),
        cores,
        tasks,
    })
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct ReadyJob {
    deadline: Time,
    task: usize,
    job: u32,
}

/// Lays out every job of the mapped tasks over the node's major frame.
pub fn synthesize_node_schedule(mapping: &CoreMapping) -> Result<NodeSchedule, NodeError> {
    let node = mapping.node.as_str();
    let periods: Vec<Time> = mapping.tasks.iter().map(|t| t.period).collect();
    let major_frame = if periods.is_empty() {
        Time::ZERO
    } else {
        hyperperiod(&periods).map_err(|source| NodeError::Hyperperiod {
            node: node.to_string(),
            source,
        })?
    };

    let mut partitions: Vec<Partition> = Vec::new();
    let mut tasks = Vec::with_capacity(mapping.tasks.len());
    for t in &mapping.tasks {
        let pid = partition_id(node, Some(t.core), t.criticality);
        if !partitions.iter().any(|p| p.id == pid) {
            partitions.push(Partition {
                id: pid.clone(),
                node: node.to_string(),
                criticality: t.criticality,
                core: Some(t.core),
                windows: vec![],
            });
        }
        tasks.push(ScheduledTask {
            id: t.id.clone(),
            app: t.app.clone(),
            criticality: t.criticality,
            core: t.core,
            partition: pid,
            wcet: t.wcet,
            period: t.period,
            deadline: t.deadline,
        });
    }
    partitions.sort_by(|a, b| a.core.cmp(&b.core).then(b.criticality.cmp(&a.criticality)));

    let mut slices = Vec::new();
    for core in 0..mapping.cores {
        let on_core: Vec<usize> = (0..tasks.len())
            .filter(|&i| tasks[i].core == core)
            .collect();
        slices.extend(edf_core(node, &tasks, &on_core, major_frame)?);
    }

    let mut ns = NodeSchedule {
        node: node.to_string(),
        cores: mapping.cores,
        major_frame,
        tasks,
        partitions,
        slices,
        per_core_utilization: vec![],
    };
    ns.refresh();
    Ok(ns)
}

fn edf_core(
    node: &str,
    tasks: &[ScheduledTask],
    on_core: &[usize],
    frame: Time,
) -> Result<Vec<TaskSlice>, NodeError> {
    // (release, task, job)
    let mut releases: Vec<(Time, usize, u32)> = Vec::new();
    for &i in on_core {
        let t = &tasks[i];
        for k in 0..frame.div_floor(t.period) {
            releases.push((t.period * k, i, k as u32));
        }
    }
    releases.sort();
    let mut remaining: BTreeMap<(usize, u32), Time> = BTreeMap::new();
    let mut ready: BinaryHeap<Reverse<ReadyJob>> = BinaryHeap::new();
    let mut out: Vec<TaskSlice> = Vec::new();
    let mut next = 0;
    let mut now = Time::ZERO;
    loop {
        while next < releases.len() && releases[next].0 <= now {
            let (rel, i, k) = releases[next];
            let t = &tasks[i];
            remaining.insert((i, k), t.wcet);
            ready.push(Reverse(ReadyJob {
                deadline: rel + t.deadline,
                task: i,
                job: k,
            }));
            next += 1;
        }
        let Some(Reverse(top)) = ready.peek() else {
            match releases.get(next) {
                Some(&(rel, _, _)) => {
                    now = rel;
                    continue;
                }
                None => break,
            }
        };
        let (i, k, deadline) = (top.task, top.job, top.deadline);
        let left = remaining[&(i, k)];
        let horizon = releases
            .get(next)
            .map(|r| r.0)
            .unwrap_or(Time::from_ticks(i64::MAX));
        let end = (now + left).min(horizon);
        let t = &tasks[i];
        match out.last_mut() {
            Some(last) if last.task == t.id && last.job == k && last.end == now => last.end = end,
            _ => out.push(TaskSlice {
                task: t.id.clone(),
                core: t.core,
                partition: t.partition.clone(),
                start: now,
                end,
                job: k,
            }),
        }
        let left = left - (end - now);
        now = end;
        if left == Time::ZERO {
            ready.pop();
            remaining.remove(&(i, k));
            if now > deadline {
                return Err(NodeError::DeadlineMiss {
                    node: node.to_string(),
                    task: t.id.clone(),
                    job: k,
                    deadline,
                });
            }
        } else {
            remaining.insert((i, k), left);
            if now >= deadline {
                return Err(NodeError::DeadlineMiss {
                    node: node.to_string(),
                    task: t.id.clone(),
                    job: k,
                    deadline,
                });
            }
        }
    }
    Ok(out)
}

/// Maps and schedules every application the scenario places on `node_id`.
pub fn schedule_node(s: &Scenario, node_id: &str) -> Result<NodeSchedule, NodeError> {
    let node: &FogNodeSpec = s
        .node(node_id)
        .ok_or_else(|| NodeError::UnknownNode(node_id.to_string()))?;
    let apps: Vec<ApplicationSpec> = s.apps_on(node_id).cloned().collect();
    let mapping = map_to_cores(node_id, &apps, node.cores)?;
    synthesize_node_schedule(&mapping)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeViolation {
    UnknownTask {
        task: String,
    },
    UnknownPartition {
        partition: String,
    },
    WrongCore {
        task: String,
        core: u32,
    },
    EmptySlice {
        task: String,
        job: u32,
    },
    CoreOverlap {
        core: u32,
        first: String,
        second: String,
        at: Time,
    },
    OutsideJobWindow {
        task: String,
        job: u32,
    },
    JobIncomplete {
        task: String,
        job: u32,
        executed: Time,
        wcet: Time,
    },
    Isolation {
        task: String,
        partition: String,
    },
    Containment {
        task: String,
        job: u32,
        start: Time,
    },
    WindowOverlap {
        core: u32,
        at: Time,
    },
    OverUtilized {
        core: u32,
    },
}

/// Independent check of a node schedule: core exclusivity, per-job budget
/// inside the release/deadline window, criticality isolation and partition
/// window containment.
pub fn verify_node_schedule(ns: &NodeSchedule) -> VerificationReport<NodeViolation> {
    let mut out = Vec::new();
    let tasks: BTreeMap<&str, &ScheduledTask> =
        ns.tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let parts: BTreeMap<&str, &Partition> =
        ns.partitions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut executed: BTreeMap<(&str, u32), Time> = BTreeMap::new();

    for sl in &ns.slices {
        let Some(t) = tasks.get(sl.task.as_str()) else {
            out.push(NodeViolation::UnknownTask {
                task: sl.task.clone(),
            });
            continue;
        };
        if sl.end <= sl.start {
            out.push(NodeViolation::EmptySlice {
                task: sl.task.clone(),
                job: sl.job,
            });
            continue;
        }
        if sl.core != t.core {
            out.push(NodeViolation::WrongCore {
                task: sl.task.clone(),
                core: sl.core,
            });
        }
        let release = t.period * sl.job as i64;
        if sl.start < release || sl.end > release + t.deadline || sl.end > ns.major_frame {
            out.push(NodeViolation::OutsideJobWindow {
                task: sl.task.clone(),
                job: sl.job,
            });
        }
        *executed.entry((t.id.as_str(), sl.job)).or_default() += sl.end - sl.start;
        match parts.get(sl.partition.as_str()) {
            None => out.push(NodeViolation::UnknownPartition {
                partition: sl.partition.clone(),
            }),
            Some(p) => {
                if p.criticality != t.criticality {
                    out.push(NodeViolation::Isolation {
                        task: sl.task.clone(),
                        partition: p.id.clone(),
                    });
                }
                let inside = p.core == Some(sl.core)
                    && p.windows
                        .iter()
                        .any(|&(ws, we)| ws <= sl.start && sl.end <= we);
                if !inside {
                    out.push(NodeViolation::Containment {
                        task: sl.task.clone(),
                        job: sl.job,
                        start: sl.start,
                    });
                }
            }
        }
    }

    for t in &ns.tasks {
        if ns.major_frame <= Time::ZERO {
            break;
        }
        for k in 0..ns.major_frame.div_floor(t.period) as u32 {
            let got = executed
                .get(&(t.id.as_str(), k))
                .copied()
                .unwrap_or(Time::ZERO);
            if got != t.wcet {
                out.push(NodeViolation::JobIncomplete {
                    task: t.id.clone(),
                    job: k,
                    executed: got,
                    wcet: t.wcet,
                });
            }
        }
    }

    for core in 0..ns.cores {
        let mut on_core: Vec<&TaskSlice> = ns.core_slices(core).collect();
        on_core.sort_by_key(|s| (s.start, s.end));
        for pair in on_core.windows(2) {
            if pair[1].start < pair[0].end {
                out.push(NodeViolation::CoreOverlap {
                    core,
                    first: format!("{}#{}", pair[0].task, pair[0].job),
                    second: format!("{}#{}", pair[1].task, pair[1].job),
                    at: pair[1].start,
                });
            }
        }
        let busy: Time = on_core.iter().map(|s| s.end - s.start).sum();
        if busy > ns.major_frame {
            out.push(NodeViolation::OverUtilized { core });
        }
        let mut windows: Vec<(Time, Time)> = ns
            .partitions
            .iter()
            .filter(|p| p.core == Some(core))
            .flat_map(|p| p.windows.iter().copied())
            .collect();
        windows.sort();
        for pair in windows.windows(2) {
            if pair[1].0 < pair[0].1 {
                out.push(NodeViolation::WindowOverlap {
                    core,
                    at: pair[1].0,
                });
            }
        }
    }

    VerificationReport { violations: out }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoreUtilization {
    pub node: String,
    pub core: u32,
    pub utilization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtilizationReport {
    pub per_core: Vec<CoreUtilization>,
    pub average: f64,
    pub max: Option<CoreUtilization>,
}

/// Busy fraction of every core, measured from the slices.
pub fn utilization_report(schedules: &[NodeSchedule]) -> UtilizationReport {
    let per_core: Vec<CoreUtilization> = schedules
        .iter()
        .flat_map(|ns| {
            (0..ns.cores).map(move |c| {
                let busy: Time = ns.core_slices(c).map(|s| s.end - s.start).sum();
                CoreUtilization {
                    node: ns.node.clone(),
                    core: c,
                    utilization: if ns.major_frame > Time::ZERO {
                        busy.ratio(ns.major_frame)
                    } else {
                        0.0
                    },
                }
            })
        })
        .collect();
    let average = if per_core.is_empty() {
        0.0
    } else {
        per_core.iter().map(|c| c.utilization).sum::<f64>() / per_core.len() as f64
    };
    let max = per_core
        .iter()
        .fold(None::<&CoreUtilization>, |best, c| match best {
            Some(b) if b.utilization >= c.utilization => Some(b),
            _ => Some(c),
        })
        .cloned();
    UtilizationReport {
        per_core,
        average,
        max,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDoc {
    pub partition: String,
    pub criticality: u8,
    pub start_us: Time,
    pub end_us: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceDoc {
    pub task: String,
    pub partition: String,
    pub job: u32,
    pub start_us: Time,
    pub end_us: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDoc {
    pub id: String,
    pub app: String,
    pub criticality: u8,
    pub partition: String,
    pub wcet_us: Time,
    pub period_us: Time,
    pub deadline_us: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreDoc {
    pub core: u32,
    pub utilization: f64,
    pub tasks: Vec<TaskDoc>,
    pub windows: Vec<WindowDoc>,
    pub slices: Vec<SliceDoc>,
}

/// Exported partition table of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTable {
    pub node: String,
    pub major_frame_us: Time,
    pub cores: Vec<CoreDoc>,
}

impl From<&NodeSchedule> for PartitionTable {
    fn from(ns: &NodeSchedule) -> Self {
        let cores = (0..ns.cores)
            .map(|c| {
                let mut windows: Vec<WindowDoc> = ns
                    .partitions
                    .iter()
                    .filter(|p| p.core == Some(c))
                    .flat_map(|p| {
                        p.windows.iter().map(move |&(s, e)| WindowDoc {
                            partition: p.id.clone(),
                            criticality: p.criticality,
                            start_us: s,
                            end_us: e,
                        })
                    })
                    .collect();
                windows.sort_by_key(|w| w.start_us);
                CoreDoc {
                    core: c,
                    utilization: ns
                        .per_core_utilization
                        .get(c as usize)
                        .copied()
                        .unwrap_or(0.0),
                    tasks: ns
                        .tasks
                        .iter()
                        .filter(|t| t.core == c)
                        .map(|t| TaskDoc {
                            id: t.id.clone(),
                            app: t.app.clone(),
                            criticality: t.criticality,
                            partition: t.partition.clone(),
                            wcet_us: t.wcet,
                            period_us: t.period,
                            deadline_us: t.deadline,
                        })
                        .collect(),
                    windows,
                    slices: ns
                        .core_slices(c)
                        .map(|s| SliceDoc {
                            task: s.task.clone(),
                            partition: s.partition.clone(),
                            job: s.job,
                            start_us: s.start,
                            end_us: s.end,
                        })
                        .collect(),
                }
            })
            .collect();
        PartitionTable {
            node: ns.node.clone(),
            major_frame_us: ns.major_frame,
            cores,
        }
    }
}

impl From<&PartitionTable> for NodeSchedule {
    fn from(doc: &PartitionTable) -> Self {
        let mut ns = NodeSchedule {
            node: doc.node.clone(),
            cores: doc.cores.iter().map(|c| c.core + 1).max().unwrap_or(0),
            major_frame: doc.major_frame_us,
            tasks: vec![],
            partitions: vec![],
            slices: vec![],
            per_core_utilization: vec![],
        };
        for c in &doc.cores {
            for t in &c.tasks {
                ns.tasks.push(ScheduledTask {
                    id: t.id.clone(),
                    app: t.app.clone(),
                    criticality: t.criticality,
                    core: c.core,
                    partition: t.partition.clone(),
                    wcet: t.wcet_us,
                    period: t.period_us,
                    deadline: t.deadline_us,
                });
            }
            for w in &c.windows {
                match ns.partitions.iter_mut().find(|p| p.id == w.partition) {
                    Some(p) => p.windows.push((w.start_us, w.end_us)),
                    None => ns.partitions.push(Partition {
                        id: w.partition.clone(),
                        node: doc.node.clone(),
                        criticality: w.criticality,
                        core: Some(c.core),
                        windows: vec![(w.start_us, w.end_us)],
                    }),
                }
            }
            for s in &c.slices {
                ns.slices.push(TaskSlice {
                    task: s.task.clone(),
                    core: c.core,
                    partition: s.partition.clone(),
                    start: s.start_us,
                    end: s.end_us,
                    job: s.job,
                });
            }
        }
        ns.per_core_utilization = doc.cores.iter().map(|c| c.utilization).collect();
        ns
    }
}
