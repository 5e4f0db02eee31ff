//! Regenerates `fixtures/e4c2_base.json` and `fixtures/e4c2_optimized.json`.
//!
//! BASE is the work-conserving EDF layout of a single-criticality task set on
//! the second core of E4; OPTIMIZED is the extensibility optimizer's output on
//! BASE with the default configuration.
//!
//!     cargo run -p fogweaver --example e4_fixtures -- <fixtures dir>

use std::path::PathBuf;

use fogweaver::extensibility::{
    admit_dynamic, ext_metric, optimize_extensibility, parse_dynamic_tasks, OptimizerConfig,
};
use fogweaver::nodesched::{synthesize_node_schedule, CoreMapping, MappedTask, PartitionTable};
use fogweaver::Time;

const TASKS: &[(&str, f64, i64)] = &[
    // id, wcet (us), period (ms)
    ("w1", 1000.0, 10),
    ("w2", 1500.0, 15),
    ("w3", 3000.0, 30),
];

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let mapping = CoreMapping {
        node: "E4".into(),
        cores: 2,
        tasks: TASKS
            .iter()
            .map(|&(id, wcet, p)| MappedTask {
                id: id.into(),
                app: "Weight report".into(),
                criticality: 2,
                wcet: Time::from_us_ceil(wcet),
                period: Time::from_ms(p),
                deadline: Time::from_ms(p),
                core: 1,
            })
            .collect(),
    };
    let base = synthesize_node_schedule(&mapping).expect("base task set is schedulable");
    let opt = optimize_extensibility(&base, &OptimizerConfig::default());
    let dynamic =
        parse_dynamic_tasks(include_str!("../../../fixtures/logging_dynamic.tasks")).unwrap();
    let horizon = Time::from_ms(120);
    for (name, ns) in [("base", &base), ("optimized", &opt)] {
        let r = admit_dynamic(ns, 1, &dynamic, horizon).unwrap();
        eprintln!(
            "{name}: metric {:.5} slices {} misses {}",
            ext_metric(ns, 1),
            ns.slices.len(),
            r.misses.len()
        );
        let json = serde_json::to_string_pretty(&PartitionTable::from(ns)).unwrap();
        std::fs::write(dir.join(format!("e4c2_{name}.json")), json + "\n").unwrap();
    }
}
