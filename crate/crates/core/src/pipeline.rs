//! Runs every stage in order and summarizes the results in one report.
//!
//! Stages: validation, network schedule, node schedules, extensibility
//! optimization, TESLA overlay. An infeasible stage is recorded as such
//! and the stages after it are skipped.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::extensibility::{ext_metric, optimize_extensibility, OptimizerConfig};
use crate::gclsched::{qoc_proxy, synthesize_gcl, verify_net_schedule, NetSchedule};
use crate::nodesched::{schedule_node, utilization_report, verify_node_schedule, NodeSchedule};
use crate::scenario::{print_scenario, validate, Scenario, ValidationReport};
use crate::teslasec::{
    apply_tesla, secured_eds, tesla_overhead_report, OverheadReport, TeslaConfig,
};
use crate::time::Time;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Stage<T> {
    Done(T),
    Infeasible { infeasible: String },
}

impl<T> Stage<T> {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Stage::Infeasible { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamRow {
    pub id: String,
    pub criticality: u8,
    pub offset_us: Time,
    pub ed_us: Time,
    pub jitter_us: Time,
    pub deadline_us: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetSummary {
    pub cycle_us: Time,
    pub verified: bool,
    pub qoc_proxy: f64,
    pub streams: Vec<StreamRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeSummary {
    pub node: String,
    pub major_frame_us: Time,
    pub verified: bool,
    pub partitions: usize,
    pub per_core_utilization: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodesSummary {
    pub nodes: Vec<Stage<NodeSummary>>,
    pub average_utilization: Option<f64>,
    pub max_utilization: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoreExtensibility {
    pub node: String,
    pub core: u32,
    pub before: f64,
    pub after: f64,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeslaSummary {
    pub secured_streams: usize,
    pub security_tasks: usize,
    pub secured_net_verified: bool,
    pub overhead: OverheadReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub version: String,
    pub seed: u64,
    pub scenario_digest: String,
    pub net: Option<Stage<NetSummary>>,
    pub nodes: Option<NodesSummary>,
    pub extensibility: Option<Vec<CoreExtensibility>>,
    pub tesla: Option<Stage<TeslaSummary>>,
}

impl PipelineReport {
    pub fn infeasible(&self) -> bool {
        self.net.as_ref().is_some_and(Stage::is_infeasible)
            || self
                .nodes
                .as_ref()
                .is_some_and(|n| n.nodes.iter().any(Stage::is_infeasible))
            || self.tesla.as_ref().is_some_and(Stage::is_infeasible)
    }
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOptions {
    pub tesla: TeslaConfig,
    pub optimizer: OptimizerConfig,
}

/// Everything the pipeline produced, for writing artifacts.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub net: Option<NetSchedule>,
    pub nodes: Vec<NodeSchedule>,
    pub optimized: Vec<NodeSchedule>,
    pub secured_net: Option<NetSchedule>,
}

pub fn scenario_digest(s: &Scenario) -> String {
    Sha256::digest(print_scenario(s).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Validates `s` and, if it is valid, runs all stages. The optimizer seed
/// is the scenario's solver seed.
pub fn run_pipeline(
    s: &Scenario,
    opts: &PipelineOptions,
) -> Result<PipelineOutcome, ValidationReport> {
    let report = validate(s);
    if !report.is_empty() {
        return Err(report);
    }
    let seed = s.params.solver_seed;
    let mut out = PipelineOutcome {
        report: PipelineReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            scenario_digest: scenario_digest(s),
            net: None,
            nodes: None,
            extensibility: None,
            tesla: None,
        },
        net: None,
        nodes: vec![],
        optimized: vec![],
        secured_net: None,
    };

    let ns = match synthesize_gcl(s) {
        Ok(ns) => ns,
        Err(e) => {
            out.report.net = Some(Stage::Infeasible {
                infeasible: e.to_string(),
            });
            return Ok(out);
        }
    };
    let streams = s
        .streams
        .iter()
        .map(|st| {
            let m = ns.per_stream[&st.id];
            StreamRow {
                id: st.id.clone(),
                criticality: st.criticality,
                offset_us: ns.offsets[&st.id],
                ed_us: m.ed,
                jitter_us: m.jitter,
                deadline_us: st.deadline,
            }
        })
        .collect();
    out.report.net = Some(Stage::Done(NetSummary {
        cycle_us: ns.cycle,
        verified: verify_net_schedule(&ns, s).is_clean(),
        qoc_proxy: qoc_proxy(&ns, s),
        streams,
    }));

    let mut node_rows = Vec::new();
    let mut any_infeasible = false;
    for node in &s.nodes {
        match schedule_node(s, &node.id) {
            Ok(sched) => {
                node_rows.push(Stage::Done(NodeSummary {
                    node: node.id.clone(),
                    major_frame_us: sched.major_frame,
                    verified: verify_node_schedule(&sched).is_clean(),
                    partitions: sched.partitions.len(),
                    per_core_utilization: sched.per_core_utilization.clone(),
                }));
                out.nodes.push(sched);
            }
            Err(e) => {
                any_infeasible = true;
                node_rows.push(Stage::Infeasible {
                    infeasible: e.to_string(),
                });
            }
        }
    }
    let util = utilization_report(&out.nodes);
    out.report.nodes = Some(NodesSummary {
        nodes: node_rows,
        average_utilization: (!any_infeasible && !util.per_core.is_empty()).then_some(util.average),
        max_utilization: if any_infeasible {
            None
        } else {
            util.max.map(|m| m.utilization)
        },
    });
    out.net = Some(ns);
    if any_infeasible {
        return Ok(out);
    }

    let cfg = OptimizerConfig {
        seed,
        ..opts.optimizer.clone()
    };
    let mut ext = Vec::new();
    for sched in &out.nodes {
        let opt = optimize_extensibility(sched, &cfg);
        let verified = verify_node_schedule(&opt).is_clean();
        for core in 0..sched.cores {
            ext.push(CoreExtensibility {
                node: sched.node.clone(),
                core,
                before: ext_metric(sched, core),
                after: ext_metric(&opt, core),
                verified,
            });
        }
        out.optimized.push(opt);
    }
    out.report.extensibility = Some(ext);

    let ns = out.net.as_ref().expect("net stage succeeded");
    let tesla = apply_tesla(s, ns, &opts.tesla).and_then(|secured| {
        let secured_ns = synthesize_gcl(&secured.scenario)?;
        let after = secured_eds(&secured.scenario, &secured_ns, &opts.tesla)?;
        let before = after
            .keys()
            .map(|id| (id.clone(), ns.per_stream[id].ed))
            .collect();
        let overhead = tesla_overhead_report(&before, &after)?;
        let summary = TeslaSummary {
            secured_streams: secured.overlay.streams.len(),
            security_tasks: secured.overlay.tasks.len(),
            secured_net_verified: verify_net_schedule(&secured_ns, &secured.scenario).is_clean(),
            overhead,
        };
        Ok((summary, secured_ns))
    });
    out.report.tesla = Some(match tesla {
        Ok((summary, secured_ns)) => {
            out.secured_net = Some(secured_ns);
            Stage::Done(summary)
        }
        Err(e) => Stage::Infeasible {
            infeasible: e.to_string(),
        },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn uc1() -> Scenario {
        parse_scenario(include_str!("../../../fixtures/uc1.fog")).unwrap()
    }

    #[test]
    fn uc1_runs_end_to_end() {
        let out = run_pipeline(&uc1(), &PipelineOptions::default()).unwrap();
        let r = &out.report;
        assert!(!r.infeasible());
        let Some(Stage::Done(net)) = &r.net else {
            panic!("net stage missing")
        };
        assert_eq!(net.streams.len(), 10);
        assert!(net.verified);
        let nodes = r.nodes.as_ref().unwrap();
        assert_eq!(nodes.nodes.len(), 5);
        assert!(nodes
            .nodes
            .iter()
            .all(|n| matches!(n, Stage::Done(s) if s.verified)));
        let ext = r.extensibility.as_ref().unwrap();
        assert_eq!(ext.len(), 10);
        assert!(ext.iter().all(|c| c.after <= c.before && c.verified));
        let Some(Stage::Done(t)) = &r.tesla else {
            panic!("tesla stage missing")
        };
        assert_eq!((t.secured_streams, t.security_tasks), (10, 20));
        assert!(t.secured_net_verified);
    }

    #[test]
    fn invalid_scenario_is_rejected() {
        let mut s = uc1();
        s.applications[0].utilization = 1.2;
        assert_eq!(
            run_pipeline(&s, &PipelineOptions::default())
                .unwrap_err()
                .violations
                .len(),
            1
        );
    }

    #[test]
    fn overload_stops_after_node_stage() {
        let mut s = uc1();
        for a in s.applications.iter_mut().filter(|a| a.node == "E3") {
            a.utilization = 0.9;
        }
        let out = run_pipeline(&s, &PipelineOptions::default()).unwrap();
        assert!(out.report.infeasible());
        assert!(out.report.extensibility.is_none() && out.report.tesla.is_none());
        let json = serde_json::to_string(&out.report).unwrap();
        assert!(json.contains("\"infeasible\""));
    }

    #[test]
    fn digest_ignores_layout() {
        let a = uc1();
        let b = parse_scenario(&print_scenario(&a)).unwrap();
        assert_eq!(scenario_digest(&a), scenario_digest(&b));
        assert_eq!(scenario_digest(&a).len(), 64);
    }
}
