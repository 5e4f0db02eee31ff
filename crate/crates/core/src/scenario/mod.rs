//! Declarative platform and application description.
//!
//! A [`Scenario`] is produced by [`parse_scenario`] from the line/block DSL
//! and is the single input to every synthesis stage. It is a plain value:
//! construction does not enforce the structural invariants, [`validate`]
//! reports every violation instead.

mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Time;

pub use parse::{parse_scenario, ParseError};
pub use print::print_scenario;

/// Highest criticality (SIL) level.
pub const MAX_CRITICALITY: u8 = 4;
/// Largest frame payload accepted for a stream, in bytes.
pub const MAX_FRAME_BYTES: u32 = 1500;
/// 100 Mbps.
pub const DEFAULT_LINK_RATE_BPS: u64 = 100_000_000;
pub const DEFAULT_CORES: u32 = 2;

const UTILIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub nodes: Vec<FogNodeSpec>,
    pub switches: Vec<SwitchSpec>,
    pub endpoints: Vec<EndpointSpec>,
    pub links: Vec<LinkSpec>,
    pub streams: Vec<StreamSpec>,
    pub applications: Vec<ApplicationSpec>,
    pub params: ModelParams,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FogNodeSpec {
    pub id: String,
    pub cores: u32,
    /// Hardware class 1..=3; carried as metadata only.
    pub class: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchSpec {
    pub id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Sensor,
    Actuator,
}

impl fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndpointKind::Sensor => f.write_str("sensor"),
            EndpointKind::Actuator => f.write_str("actuator"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub id: String,
    pub kind: EndpointKind,
}

/// A directed link. Full-duplex cables are declared as two links.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub rate_bps: u64,
}

impl LinkSpec {
    /// Port name used in GCL exports, e.g. `W1->E1`.
    pub fn port_name(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub size_bytes: u32,
    pub period: Time,
    pub deadline: Time,
    pub criticality: u8,
    /// Entity path from `src` to `dst`, both inclusive.
    pub route: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSpec {
    pub id: String,
    pub node: String,
    pub level: u8,
    pub task_count: u32,
    pub period: Time,
    pub utilization: f64,
    /// Explicit per-task parameters; empty means "split evenly".
    pub tasks: Vec<TaskSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    /// Worst-case execution time in microseconds. Kept exact so that
    /// an even split preserves the application's utilization.
    pub wcet_us: f64,
    pub period: Time,
    pub deadline: Time,
}

impl TaskSpec {
    pub fn utilization(&self) -> f64 {
        self.wcet_us / self.period.as_us()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-hop forwarding latency (cut-through model).
    pub d_hop: Time,
    pub default_link_rate_bps: u64,
    pub solver_seed: u64,
    /// Base of the criticality weight `weight_base^L` in the network objective.
    pub weight_base: f64,
    /// Search-node budget of the network solver.
    pub node_budget: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            d_hop: Time::from_us(2),
            default_link_rate_bps: DEFAULT_LINK_RATE_BPS,
            solver_seed: 0,
            weight_base: 2.0,
            node_budget: 1_000_000,
        }
    }
}

impl Scenario {
    pub fn node(&self, id: &str) -> Option<&FogNodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn stream(&self, id: &str) -> Option<&StreamSpec> {
        self.streams.iter().find(|s| s.id == id)
    }

    pub fn link(&self, from: &str, to: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.from == from && l.to == to)
    }

    pub fn apps_on<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a ApplicationSpec> + 'a {
        self.applications.iter().filter(move |a| a.node == node)
    }

    /// All declared entity identifiers (nodes, switches, endpoints).
    pub fn entity_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes
            .iter()
            .map(|n| n.id.as_str())
            .chain(self.switches.iter().map(|s| s.id.as_str()))
            .chain(self.endpoints.iter().map(|e| e.id.as_str()))
    }
}

/// One violated scenario invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateIdentifier {
        id: String,
    },
    UnknownReference {
        context: String,
        id: String,
    },
    ZeroCores {
        node: String,
    },
    InvalidNodeClass {
        node: String,
        class: u8,
    },
    NonPositiveRate {
        link: String,
    },
    InvalidFrameSize {
        stream: String,
        size: u32,
    },
    NonPositivePeriod {
        item: String,
    },
    DeadlineExceedsPeriod {
        item: String,
    },
    InvalidCriticality {
        item: String,
        level: u8,
    },
    RouteEndpoints {
        stream: String,
    },
    RouteGap {
        stream: String,
        from: String,
        to: String,
    },
    UtilizationOutOfRange {
        app: String,
        utilization: f64,
    },
    ZeroTaskCount {
        app: String,
    },
    TaskUtilizationMismatch {
        app: String,
        declared: f64,
        actual: f64,
    },
    InvalidWcet {
        task: String,
    },
    NegativeHopLatency,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateIdentifier { id } => write!(f, "duplicate identifier `{id}`"),
            Violation::UnknownReference { context, id } => {
                write!(f, "{context} references undeclared `{id}`")
            }
            Violation::ZeroCores { node } => write!(f, "node `{node}` declares zero cores"),
            Violation::InvalidNodeClass { node, class } => {
                write!(f, "node `{node}` has class {class}, expected 1..=3")
            }
            Violation::NonPositiveRate { link } => write!(f, "link `{link}` has zero rate"),
            Violation::InvalidFrameSize { stream, size } => {
                write!(
                    f,
                    "stream `{stream}` frame size {size} B outside 1..={MAX_FRAME_BYTES}"
                )
            }
            Violation::NonPositivePeriod { item } => {
                write!(f, "`{item}` has a non-positive period")
            }
            Violation::DeadlineExceedsPeriod { item } => {
                write!(f, "`{item}` has a deadline larger than its period")
            }
            Violation::InvalidCriticality { item, level } => {
                write!(
                    f,
                    "`{item}` has criticality {level}, expected 0..={MAX_CRITICALITY}"
                )
            }
            Violation::RouteEndpoints { stream } => {
                write!(f, "route of stream `{stream}` does not run from src to dst")
            }
            Violation::RouteGap { stream, from, to } => {
                write!(
                    f,
                    "route of stream `{stream}` uses undeclared link {from}->{to}"
                )
            }
            Violation::UtilizationOutOfRange { app, utilization } => {
                write!(
                    f,
                    "application `{app}` utilization {utilization} outside (0, 1]"
                )
            }
            Violation::ZeroTaskCount { app } => write!(f, "application `{app}` has no tasks"),
            Violation::TaskUtilizationMismatch {
                app,
                declared,
                actual,
            } => write!(
                f,
                "application `{app}` declares utilization {declared} but its tasks sum to {actual}"
            ),
            Violation::InvalidWcet { task } => {
                write!(f, "task `{task}` violates 0 < wcet <= deadline <= period")
            }
            Violation::NegativeHopLatency => f.write_str("d_hop is negative"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One violation per line.
impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Lists every violated scenario invariant.
pub fn validate(s: &Scenario) -> ValidationReport {
    let mut v = Vec::new();

    let mut seen = BTreeSet::new();
    for id in s.entity_ids() {
        if !seen.insert(id) {
            v.push(Violation::DuplicateIdentifier { id: id.to_string() });
        }
    }
    let mut names = BTreeSet::new();
    for id in s.streams.iter().map(|x| &x.id) {
        if !names.insert(("stream", id.as_str())) {
            v.push(Violation::DuplicateIdentifier { id: id.clone() });
        }
    }
    for id in s.applications.iter().map(|x| &x.id) {
        if !names.insert(("app", id.as_str())) {
            v.push(Violation::DuplicateIdentifier { id: id.clone() });
        }
    }

    for n in &s.nodes {
        if n.cores == 0 {
            v.push(Violation::ZeroCores { node: n.id.clone() });
        }
        if !(1..=3).contains(&n.class) {
            v.push(Violation::InvalidNodeClass {
                node: n.id.clone(),
                class: n.class,
            });
        }
    }

    for l in &s.links {
        for end in [&l.from, &l.to] {
            if !seen.contains(end.as_str()) {
                v.push(Violation::UnknownReference {
                    context: format!("link {}", l.port_name()),
                    id: end.clone(),
                });
            }
        }
        if l.rate_bps == 0 {
            v.push(Violation::NonPositiveRate {
                link: l.port_name(),
            });
        }
    }

    for st in &s.streams {
        if st.size_bytes == 0 || st.size_bytes > MAX_FRAME_BYTES {
            v.push(Violation::InvalidFrameSize {
                stream: st.id.clone(),
                size: st.size_bytes,
            });
        }
        if st.period <= Time::ZERO {
            v.push(Violation::NonPositivePeriod {
                item: st.id.clone(),
            });
        }
        if st.deadline > st.period {
            v.push(Violation::DeadlineExceedsPeriod {
                item: st.id.clone(),
            });
        }
        if st.criticality > MAX_CRITICALITY {
            v.push(Violation::InvalidCriticality {
                item: st.id.clone(),
                level: st.criticality,
            });
        }
        for end in std::iter::once(&st.src)
            .chain(std::iter::once(&st.dst))
            .chain(&st.route)
        {
            if !seen.contains(end.as_str()) {
                v.push(Violation::UnknownReference {
                    context: format!("stream {}", st.id),
                    id: end.clone(),
                });
            }
        }
        if st.route.len() < 2
            || st.route.first() != Some(&st.src)
            || st.route.last() != Some(&st.dst)
        {
            v.push(Violation::RouteEndpoints {
                stream: st.id.clone(),
            });
        }
        for pair in st.route.windows(2) {
            if s.link(&pair[0], &pair[1]).is_none() {
                v.push(Violation::RouteGap {
                    stream: st.id.clone(),
                    from: pair[0].clone(),
                    to: pair[1].clone(),
                });
            }
        }
    }

    for a in &s.applications {
        if s.node(&a.node).is_none() {
            v.push(Violation::UnknownReference {
                context: format!("application {}", a.id),
                id: a.node.clone(),
            });
        }
        if a.level > MAX_CRITICALITY {
            v.push(Violation::InvalidCriticality {
                item: a.id.clone(),
                level: a.level,
            });
        }
        if a.period <= Time::ZERO {
            v.push(Violation::NonPositivePeriod { item: a.id.clone() });
        }
        if !(a.utilization > 0.0 && a.utilization <= 1.0) {
            v.push(Violation::UtilizationOutOfRange {
                app: a.id.clone(),
                utilization: a.utilization,
            });
        }
        if a.task_count == 0 {
            v.push(Violation::ZeroTaskCount { app: a.id.clone() });
        }
        for t in &a.tasks {
            if !(t.wcet_us > 0.0
                && t.wcet_us <= t.deadline.as_us()
                && t.deadline <= t.period
                && t.period > Time::ZERO)
            {
                v.push(Violation::InvalidWcet { task: t.id.clone() });
            }
        }
        if !a.tasks.is_empty() {
            let actual: f64 = a.tasks.iter().map(TaskSpec::utilization).sum();
            if (actual - a.utilization).abs() > UTILIZATION_TOLERANCE {
                v.push(Violation::TaskUtilizationMismatch {
                    app: a.id.clone(),
                    declared: a.utilization,
                    actual,
                });
            }
        }
    }

    if s.params.d_hop < Time::ZERO {
        v.push(Violation::NegativeHopLatency);
    }

    ValidationReport { violations: v }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HyperperiodError {
    #[error("hyperperiod of an empty period set")]
    EmptyInput,
    #[error("period {0} is not positive")]
    NonPositive(Time),
    #[error("hyperperiod overflows")]
    Overflow,
}

/// Least common multiple of `periods`.
pub fn hyperperiod(periods: &[Time]) -> Result<Time, HyperperiodError> {
    let mut acc: Option<i64> = None;
    for &p in periods {
        if p <= Time::ZERO {
            return Err(HyperperiodError::NonPositive(p));
        }
        acc = Some(match acc {
            None => p.ticks(),
            Some(a) => {
                let g = a.gcd(&p.ticks());
                (a / g)
                    .checked_mul(p.ticks())
                    .ok_or(HyperperiodError::Overflow)?
            }
        });
    }
    acc.map(Time::from_ticks)
        .ok_or(HyperperiodError::EmptyInput)
}

/// Concrete tasks of an application.
///
/// Explicit task blocks are returned as-is; otherwise `task_count` tasks
/// share the application's budget `utilization × period` evenly.
pub fn expand_tasks(a: &ApplicationSpec) -> Vec<TaskSpec> {
    if !a.tasks.is_empty() {
        return a.tasks.clone();
    }
    let n = a.task_count.max(1);
    let wcet_us = a.utilization * a.period.as_us() / n as f64;
    (1..=n)
        .map(|i| TaskSpec {
            id: format!("{}#{}", a.id, i),
            wcet_us,
            period: a.period,
            deadline: a.period,
        })
        .collect()
}

/// Criticality of every stream-bearing entity, for quick lookup.
pub fn stream_levels(s: &Scenario) -> BTreeMap<&str, u8> {
    s.streams
        .iter()
        .map(|st| (st.id.as_str(), st.criticality))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn app(util: f64, tasks: u32, period_ms: i64) -> ApplicationSpec {
        ApplicationSpec {
            id: "a".into(),
            node: "E1".into(),
            level: 3,
            task_count: tasks,
            period: Time::from_ms(period_ms),
            utilization: util,
            tasks: vec![],
        }
    }

    #[test]
    fn hyperperiod_examples() {
        let ms = Time::from_ms;
        assert_eq!(hyperperiod(&[ms(10), ms(20), ms(30), ms(50)]), Ok(ms(300)));
        assert_eq!(hyperperiod(&[ms(10)]), Ok(ms(10)));
        assert_eq!(
            hyperperiod(&[ms(6), ms(8), ms(10), ms(12), ms(15)]),
            Ok(ms(120))
        );
        assert_eq!(hyperperiod(&[]), Err(HyperperiodError::EmptyInput));
        assert!(matches!(
            hyperperiod(&[Time::ZERO]),
            Err(HyperperiodError::NonPositive(_))
        ));
    }

    #[test]
    fn even_split_matches_budget() {
        let tasks = expand_tasks(&app(0.35, 3, 10));
        assert_eq!(tasks.len(), 3);
        for t in &tasks {
            assert!((t.wcet_us - 1166.6666666666667).abs() < 1e-9);
            assert_eq!(t.period, Time::from_ms(10));
            assert_eq!(t.deadline, Time::from_ms(10));
        }
        let db = expand_tasks(&app(0.59, 8, 15));
        assert_eq!(db.len(), 8);
        assert!(db.iter().all(|t| (t.wcet_us - 1106.25).abs() < 1e-9));
    }

    #[test]
    fn explicit_tasks_returned_unchanged() {
        let mut a = app(0.2, 2, 10);
        a.tasks = vec![
            TaskSpec {
                id: "x".into(),
                wcet_us: 500.0,
                period: Time::from_ms(5),
                deadline: Time::from_ms(5),
            },
            TaskSpec {
                id: "y".into(),
                wcet_us: 1000.0,
                period: Time::from_ms(10),
                deadline: Time::from_ms(10),
            },
        ];
        assert_eq!(expand_tasks(&a), a.tasks);
    }

    #[test]
    fn empty_scenario_is_valid() {
        assert!(validate(&Scenario::default()).is_empty());
    }

    #[test]
    fn utilization_above_one_is_one_violation() {
        let mut s = Scenario::default();
        s.nodes.push(FogNodeSpec {
            id: "E1".into(),
            cores: 2,
            class: 1,
        });
        s.applications.push(app(1.2, 3, 10));
        let r = validate(&s);
        assert_eq!(r.violations.len(), 1, "{:?}", r.violations);
        assert!(matches!(
            r.violations[0],
            Violation::UtilizationOutOfRange { .. }
        ));
    }

    proptest::proptest! {
        #[test]
        fn split_preserves_utilization(util in 0.01f64..=1.0, n in 1u32..=12, period_us in 100i64..100_000) {
            let mut a = app(util, n, 1);
            a.period = Time::from_us(period_us);
            let sum: f64 = expand_tasks(&a).iter().map(TaskSpec::utilization).sum();
            proptest::prop_assert!(((sum - util) / util).abs() < 1e-9);
        }
    }
}
