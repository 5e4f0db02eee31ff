use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fogweaver::extensibility::{
    admit_dynamic, ext_metric, optimize_extensibility, parse_dynamic_tasks, OptimizerConfig,
};
use fogweaver::gantt::{admission_chart, net_chart, node_chart, Chart, Format};
use fogweaver::gclsched::{export_gcl, qoc_proxy, synthesize_gcl, verify_net_schedule, GclError};
use fogweaver::nodesched::{
    schedule_node, utilization_report, verify_node_schedule, NodeSchedule, PartitionTable,
};
use fogweaver::pipeline::{run_pipeline, PipelineOptions, StreamRow};
use fogweaver::scenario::{parse_scenario, validate, Scenario};
use fogweaver::teslasec::{apply_tesla, secured_eds, tesla_overhead_report, TeslaConfig};
use fogweaver::Time;
use serde::Serialize;

/// Design-time schedule synthesis for TSN-based fog platforms.
#[derive(Parser)]
#[command(name = "fogweaver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Per-hop switch forwarding delay in microseconds.
    #[arg(long, global = true, value_name = "US")]
    d_hop: Option<f64>,
    /// Seed for the randomized optimizer moves.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the JSON result here instead of standard output.
    #[arg(short = 'o', long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Directory for Gantt charts.
    #[arg(long, global = true, value_name = "DIR")]
    gantt: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ChartFormat::Svg)]
    format: ChartFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChartFormat {
    Svg,
    Ascii,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and report every problem found.
    Validate { scenario: PathBuf },
    /// Synthesize and verify the network gate control lists.
    NetSchedule { scenario: PathBuf },
    /// Map tasks to cores and synthesize partition schedules.
    NodeSchedule {
        scenario: PathBuf,
        /// Only this node.
        #[arg(long)]
        node: Option<String>,
    },
    /// Report idle-time distribution, optionally optimizing it.
    ///
    /// INPUT is a scenario file or a partition table (`.json`).
    Extensibility {
        input: PathBuf,
        #[arg(long)]
        optimize: bool,
        #[arg(long)]
        node: Option<String>,
    },
    /// Admit dynamic tasks into the idle time of one core.
    ///
    /// INPUT is a scenario file or a partition table (`.json`).
    Admit {
        input: PathBuf,
        /// Dynamic task file: `task <name> wcet <dur> period <dur> [deadline <dur>]` per line.
        #[arg(long, value_name = "FILE")]
        dynamic: PathBuf,
        #[arg(long)]
        node: String,
        /// Core index, counted from 0.
        #[arg(long)]
        core: u32,
        /// Simulated horizon in milliseconds.
        #[arg(long, value_name = "MS")]
        horizon: f64,
    },
    /// Apply the TESLA overlay and report the delay overhead.
    Tesla {
        scenario: PathBuf,
        /// Key-chain interval in microseconds.
        #[arg(long, value_name = "US", default_value_t = 1000.0)]
        interval: f64,
        /// Key disclosure delay in intervals.
        #[arg(long, value_name = "D", default_value_t = 1)]
        disclosure: u32,
    },
    /// Run every stage and write a combined report.
    Pipeline { scenario: PathBuf },
}

enum Failure {
    Invalid(String),
    Infeasible(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Infeasible(m) | Failure::Io(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

impl Common {
    fn emit<T: Serialize>(&self, value: &T) -> Outcome {
        let json = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
        match &self.output {
            Some(p) => write(p, &json),
            None => match std::io::stdout().lock().write_all(json.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Failure::Io(format!("stdout: {e}")))
                }
                _ => Ok(()),
            },
        }
    }

    fn chart(&self, name: &str, chart: &Chart) -> Outcome {
        let Some(dir) = &self.gantt else {
            return Ok(());
        };
        let (format, ext) = match self.format {
            ChartFormat::Svg => (Format::Svg, "svg"),
            ChartFormat::Ascii => (Format::Ascii, "txt"),
        };
        let file: String = name
            .chars()
            .map(|c| {
                if c.is_alphanumeric() || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        write(&dir.join(format!("{file}.{ext}")), &chart.render(format))
    }

    fn load(&self, path: &Path) -> Result<Scenario, Failure> {
        let text = read(path)?;
        let mut s = parse_scenario(&text)
            .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        if let Some(us) = self.d_hop {
            s.params.d_hop = Time::from_us_round(us);
        }
        if let Some(seed) = self.seed {
            s.params.solver_seed = seed;
        }
        let report = validate(&s);
        if !report.is_empty() {
            return Err(Failure::Invalid(format!(
                "{}:\n{}",
                path.display(),
                report.to_string().trim_end()
            )));
        }
        Ok(s)
    }

    fn optimizer(&self, s: Option<&Scenario>) -> OptimizerConfig {
        let seed = self.seed.or(s.map(|s| s.params.solver_seed)).unwrap_or(0);
        OptimizerConfig {
            seed,
            ..OptimizerConfig::default()
        }
    }

    /// Node schedules from a scenario or a partition table file.
    fn schedules(
        &self,
        input: &Path,
        node: Option<&str>,
    ) -> Result<(Vec<NodeSchedule>, Option<Scenario>), Failure> {
        if input.extension().is_some_and(|e| e == "json") {
            let doc: PartitionTable = serde_json::from_str(&read(input)?)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", input.display())))?;
            let ns = NodeSchedule::from(&doc);
            let bad = verify_node_schedule(&ns);
            if !bad.is_clean() {
                return Err(Failure::Invalid(format!(
                    "{}: schedule fails verification: {:?}",
                    input.display(),
                    bad.violations
                )));
            }
            if node.is_some_and(|n| n != ns.node) {
                return Err(Failure::Invalid(format!(
                    "{} holds node `{}`",
                    input.display(),
                    ns.node
                )));
            }
            return Ok((vec![ns], None));
        }
        let s = self.load(input)?;
        let ids: Vec<String> = match node {
            Some(n) if s.node(n).is_none() => {
                return Err(Failure::Invalid(format!("unknown node `{n}`")))
            }
            Some(n) => vec![n.to_string()],
            None => s.nodes.iter().map(|n| n.id.clone()).collect(),
        };
        let mut out = Vec::new();
        for id in ids {
            out.push(schedule_node(&s, &id).map_err(|e| Failure::Infeasible(e.to_string()))?);
        }
        Ok((out, Some(s)))
    }
}

#[derive(Serialize)]
struct NetOutput {
    cycle_us: Time,
    qoc_proxy: f64,
    streams: Vec<StreamRow>,
    gcl: Vec<fogweaver::gclsched::GclPort>,
}

fn net_schedule(c: &Common, path: &Path) -> Outcome {
    let s = c.load(path)?;
    let ns = match synthesize_gcl(&s) {
        Ok(ns) => ns,
        Err(e @ GclError::Infeasible { .. }) => {
            c.emit(&serde_json::json!({ "infeasible": e.to_string() }))?;
            return Err(Failure::Infeasible(e.to_string()));
        }
        Err(e) => return Err(Failure::Invalid(e.to_string())),
    };
    let report = verify_net_schedule(&ns, &s);
    if !report.is_clean() {
        return Err(Failure::Infeasible(format!(
            "synthesized schedule fails verification: {:?}",
            report.violations
        )));
    }
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
    c.chart("net", &net_chart(&ns))?;
    c.emit(&NetOutput {
        cycle_us: ns.cycle,
        qoc_proxy: qoc_proxy(&ns, &s),
        streams,
        gcl: export_gcl(&ns),
    })
}

fn node_schedule(c: &Common, path: &Path, node: Option<&str>) -> Outcome {
    let (schedules, _) = c.schedules(path, node)?;
    for ns in &schedules {
        c.chart(&format!("node-{}", ns.node), &node_chart(ns))?;
    }
    let tables: Vec<PartitionTable> = schedules.iter().map(PartitionTable::from).collect();
    c.emit(&serde_json::json!({ "nodes": tables, "utilization": utilization_report(&schedules) }))
}

#[derive(Serialize)]
struct CoreMetric {
    node: String,
    core: u32,
    metric: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimized: Option<f64>,
}

fn extensibility(c: &Common, path: &Path, optimize: bool, node: Option<&str>) -> Outcome {
    let (schedules, scenario) = c.schedules(path, node)?;
    let cfg = c.optimizer(scenario.as_ref());
    let mut metrics = Vec::new();
    let mut tables = Vec::new();
    for ns in &schedules {
        let opt = optimize.then(|| optimize_extensibility(ns, &cfg));
        for core in 0..ns.cores {
            metrics.push(CoreMetric {
                node: ns.node.clone(),
                core,
                metric: ext_metric(ns, core),
                optimized: opt.as_ref().map(|o| ext_metric(o, core)),
            });
        }
        if let Some(o) = &opt {
            c.chart(&format!("node-{}-optimized", o.node), &node_chart(o))?;
            tables.push(PartitionTable::from(o));
        }
    }
    if optimize {
        c.emit(&serde_json::json!({ "metrics": metrics, "optimized": tables }))
    } else {
        c.emit(&serde_json::json!({ "metrics": metrics }))
    }
}

fn admit(
    c: &Common,
    input: &Path,
    dynamic: &Path,
    node: &str,
    core: u32,
    horizon_ms: f64,
) -> Outcome {
    let tasks = parse_dynamic_tasks(&read(dynamic)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", dynamic.display())))?;
    let (schedules, _) = c.schedules(input, Some(node))?;
    let ns = &schedules[0];
    let horizon = Time::from_us_round(horizon_ms * 1e3);
    let report =
        admit_dynamic(ns, core, &tasks, horizon).map_err(|e| Failure::Invalid(e.to_string()))?;
    c.chart(
        &format!("admit-{}-c{}", ns.node, core),
        &admission_chart(ns, core, &report, horizon),
    )?;
    c.emit(&report)
}

fn tesla(c: &Common, path: &Path, interval: f64, disclosure: u32) -> Outcome {
    let s = c.load(path)?;
    let cfg = TeslaConfig {
        key_interval: Time::from_us_round(interval),
        disclosure_delay: disclosure,
        ..TeslaConfig::default()
    };
    let ns = synthesize_gcl(&s).map_err(|e| Failure::Infeasible(e.to_string()))?;
    let secured = apply_tesla(&s, &ns, &cfg).map_err(|e| match e {
        fogweaver::teslasec::TeslaError::InvalidConfig(m) => Failure::Invalid(m),
        other => Failure::Infeasible(other.to_string()),
    })?;
    let secured_ns =
        synthesize_gcl(&secured.scenario).map_err(|e| Failure::Infeasible(e.to_string()))?;
    let after = secured_eds(&secured.scenario, &secured_ns, &cfg)
        .map_err(|e| Failure::Infeasible(e.to_string()))?;
    let before = after
        .keys()
        .map(|id| (id.clone(), ns.per_stream[id].ed))
        .collect();
    let report =
        tesla_overhead_report(&before, &after).map_err(|e| Failure::Infeasible(e.to_string()))?;
    c.chart("net-secured", &net_chart(&secured_ns))?;
    c.emit(&report)
}

fn pipeline(c: &Common, path: &Path) -> Outcome {
    let s = c.load(path)?;
    let opts = PipelineOptions {
        tesla: TeslaConfig::default(),
        optimizer: c.optimizer(Some(&s)),
    };
    let out = run_pipeline(&s, &opts).map_err(|r| Failure::Invalid(r.to_string()))?;
    c.emit(&out.report)?;
    if let Some(ns) = &out.net {
        c.chart("net", &net_chart(ns))?;
    }
    for ns in &out.nodes {
        c.chart(&format!("node-{}", ns.node), &node_chart(ns))?;
    }
    for ns in &out.optimized {
        c.chart(&format!("node-{}-optimized", ns.node), &node_chart(ns))?;
    }
    if let Some(ns) = &out.secured_net {
        c.chart("net-secured", &net_chart(ns))?;
    }
    if out.report.infeasible() {
        return Err(Failure::Infeasible(
            "at least one stage is infeasible; see the report".into(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Validate { scenario } => c
            .load(scenario)
            .map(|_| eprintln!("{}: ok", scenario.display())),
        Command::NetSchedule { scenario } => net_schedule(c, scenario),
        Command::NodeSchedule { scenario, node } => node_schedule(c, scenario, node.as_deref()),
        Command::Extensibility {
            input,
            optimize,
            node,
        } => extensibility(c, input, *optimize, node.as_deref()),
        Command::Admit {
            input,
            dynamic,
            node,
            core,
            horizon,
        } => admit(c, input, dynamic, node, *core, *horizon),
        Command::Tesla {
            scenario,
            interval,
            disclosure,
        } => tesla(c, scenario, *interval, *disclosure),
        Command::Pipeline { scenario } => pipeline(c, scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
