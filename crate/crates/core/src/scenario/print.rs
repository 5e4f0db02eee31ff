use std::fmt::Write;

use super::Scenario;
use crate::time::Time;

fn quoted(name: &str) -> String {
    format!("\"{name}\"")
}

fn rate(bps: u64) -> String {
    if bps.is_multiple_of(1_000_000_000) {
        format!("{}Gbps", bps / 1_000_000_000)
    } else if bps.is_multiple_of(1_000_000) {
        format!("{}Mbps", bps / 1_000_000)
    } else if bps.is_multiple_of(1000) {
        format!("{}kbps", bps / 1000)
    } else {
        format!("{bps}bps")
    }
}

fn time(t: Time) -> String {
    t.to_string()
}

/// Renders a scenario back into DSL text with every default spelled out.
pub fn print_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let p = &s.params;
    let _ = writeln!(
        out,
        "params {{ d_hop {} weight_base {} seed {} rate {} budget {} }}",
        time(p.d_hop),
        p.weight_base,
        p.solver_seed,
        rate(p.default_link_rate_bps),
        p.node_budget
    );
    for n in &s.nodes {
        let _ = writeln!(
            out,
            "node {} {{ cores {} class {} }}",
            n.id, n.cores, n.class
        );
    }
    for w in &s.switches {
        let _ = writeln!(out, "switch {}", w.id);
    }
    for e in &s.endpoints {
        let _ = writeln!(out, "endpoint {} {{ kind {} }}", e.id, e.kind);
    }
    for l in &s.links {
        let _ = writeln!(out, "link {} -> {} rate {}", l.from, l.to, rate(l.rate_bps));
    }
    for st in &s.streams {
        let _ = writeln!(
            out,
            "stream {} {{ src {} dst {} size {}B period {} deadline {} criticality {} route {} }}",
            quoted(&st.id),
            st.src,
            st.dst,
            st.size_bytes,
            time(st.period),
            time(st.deadline),
            st.criticality,
            st.route.join(",")
        );
    }
    for a in &s.applications {
        let _ = write!(
            out,
            "app {} on {} {{ level {} tasks {} period {} util {}",
            quoted(&a.id),
            a.node,
            a.level,
            a.task_count,
            time(a.period),
            a.utilization
        );
        for t in &a.tasks {
            let _ = write!(
                out,
                "\n  task {} wcet {}us period {} deadline {}",
                quoted(&t.id),
                t.wcet_us,
                time(t.period),
                time(t.deadline)
            );
        }
        out.push_str(" }\n");
    }
    out
}
