//! Gantt charts for network and node schedules, as SVG or plain text.
//!
//! A chart has one lane per link or core. Execution slices and gate windows
//! are filled boxes, partitions are outlines around the windows they own,
//! a preempted job is linked to its next piece, and missed deadlines are
//! drawn as red-bordered boxes over the job's window.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::extensibility::AdmissionReport;
use crate::gclsched::NetSchedule;
use crate::nodesched::NodeSchedule;
use crate::time::Time;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    Slice,
    Dynamic,
    Miss,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartBox {
    pub label: String,
    pub start: Time,
    pub end: Time,
    pub kind: BoxKind,
    /// Another piece of the same job follows later in the lane.
    pub preempted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outline {
    pub label: String,
    pub start: Time,
    pub end: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lane {
    pub label: String,
    pub outlines: Vec<Outline>,
    pub boxes: Vec<ChartBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chart {
    pub title: String,
    pub horizon: Time,
    pub lanes: Vec<Lane>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Svg,
    Ascii,
}

impl Chart {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Svg => render_svg(self),
            Format::Ascii => render_ascii(self),
        }
    }

    pub fn box_count(&self) -> usize {
        self.lanes.iter().map(|l| l.boxes.len()).sum()
    }
}

fn mark_preemptions(boxes: &mut [ChartBox], keys: &[(String, u32)]) {
    let mut last: BTreeMap<&(String, u32), usize> = BTreeMap::new();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by_key(|&i| boxes[i].start);
    for &i in &order {
        if let Some(&prev) = last.get(&keys[i]) {
            boxes[prev].preempted = true;
        }
        last.insert(&keys[i], i);
    }
}

/// One lane per egress port, one box per gate window.
pub fn net_chart(ns: &NetSchedule) -> Chart {
    let mut lanes: BTreeMap<&str, Lane> = BTreeMap::new();
    for w in &ns.windows {
        lanes
            .entry(w.link.as_str())
            .or_insert_with(|| Lane {
                label: w.link.clone(),
                outlines: vec![],
                boxes: vec![],
            })
            .boxes
            .push(ChartBox {
                label: format!("{}#{}", w.stream, w.instance),
                start: w.open,
                end: w.close,
                kind: BoxKind::Slice,
                preempted: false,
            });
    }
    let mut lanes: Vec<Lane> = lanes.into_values().collect();
    for l in &mut lanes {
        l.boxes.sort_by_key(|b| b.start);
    }
    Chart {
        title: "network schedule".into(),
        horizon: ns.cycle,
        lanes,
    }
}

/// One lane per core, partitions outlined.
pub fn node_chart(ns: &NodeSchedule) -> Chart {
    let lanes = (0..ns.cores)
        .map(|c| {
            let slices: Vec<_> = ns.core_slices(c).collect();
            let keys: Vec<(String, u32)> = slices.iter().map(|s| (s.task.clone(), s.job)).collect();
            let mut boxes: Vec<ChartBox> = slices
                .iter()
                .map(|s| ChartBox {
                    label: s.task.clone(),
                    start: s.start,
                    end: s.end,
                    kind: BoxKind::Slice,
                    preempted: false,
                })
                .collect();
            mark_preemptions(&mut boxes, &keys);
            let mut outlines: Vec<Outline> = ns
                .partitions
                .iter()
                .filter(|p| p.core == Some(c))
                .flat_map(|p| {
                    p.windows.iter().map(move |&(s, e)| Outline {
                        label: p.id.clone(),
                        start: s,
                        end: e,
                    })
                })
                .collect();
            outlines.sort_by_key(|o| o.start);
            Lane {
                label: format!("{} core {}", ns.node, c),
                outlines,
                boxes,
            }
        })
        .collect();
    Chart {
        title: format!("node {}", ns.node),
        horizon: ns.major_frame,
        lanes,
    }
}

/// The static schedule of `core` repeated over the admission horizon, with
/// dynamic slices and missed jobs added.
pub fn admission_chart(
    ns: &NodeSchedule,
    core: u32,
    report: &AdmissionReport,
    horizon: Time,
) -> Chart {
    let mut lane = Lane {
        label: format!("{} core {}", ns.node, core),
        outlines: vec![],
        boxes: vec![],
    };
    let mut keys = Vec::new();
    let copies = if ns.major_frame > Time::ZERO {
        horizon.div_floor(ns.major_frame)
    } else {
        0
    };
    for k in 0..copies {
        let shift = ns.major_frame * k;
        for s in ns.core_slices(core) {
            lane.boxes.push(ChartBox {
                label: s.task.clone(),
                start: s.start + shift,
                end: s.end + shift,
                kind: BoxKind::Slice,
                preempted: false,
            });
            keys.push((s.task.clone(), s.job + (k as u32) * 1_000_000));
        }
        for p in ns.partitions.iter().filter(|p| p.core == Some(core)) {
            for &(s, e) in &p.windows {
                lane.outlines.push(Outline {
                    label: p.id.clone(),
                    start: s + shift,
                    end: e + shift,
                });
            }
        }
    }
    for s in &report.dynamic_slices {
        lane.boxes.push(ChartBox {
            label: s.task.clone(),
            start: s.start,
            end: s.end,
            kind: BoxKind::Dynamic,
            preempted: false,
        });
        keys.push((format!("dynamic:{}", s.task), s.job));
    }
    for m in &report.misses {
        lane.boxes.push(ChartBox {
            label: m.task.clone(),
            start: m.release_us,
            end: m.deadline_us,
            kind: BoxKind::Miss,
            preempted: false,
        });
        keys.push((format!("miss:{}:{}", m.task, m.release_us.ticks()), 0));
    }
    mark_preemptions(&mut lane.boxes, &keys);
    let mut idx: Vec<usize> = (0..lane.boxes.len()).collect();
    idx.sort_by_key(|&i| (lane.boxes[i].start, lane.boxes[i].kind as u8));
    lane.boxes = idx.into_iter().map(|i| lane.boxes[i].clone()).collect();
    lane.outlines.sort_by_key(|o| o.start);
    Chart {
        title: format!("node {} core {} with dynamic tasks", ns.node, core),
        horizon,
        lanes: vec![lane],
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const LANE_H: f64 = 36.0;
const LEFT: f64 = 140.0;
const PLOT_W: f64 = 1000.0;
const TOP: f64 = 30.0;

pub fn render_svg(chart: &Chart) -> String {
    let height = TOP + LANE_H * chart.lanes.len() as f64 + 30.0;
    let width = LEFT + PLOT_W + 20.0;
    let span = chart.horizon.ticks().max(1) as f64;
    let x = |t: Time| LEFT + PLOT_W * t.ticks() as f64 / span;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="10">"#
    );
    out.push_str(
        "<style>.slice{fill:#6fa8dc;stroke:#1c4587}.dynamic{fill:#b6d7a8;stroke:#38761d}\
         .miss{fill:none;stroke:#cc0000;stroke-width:2}.partition{fill:#fff2cc;fill-opacity:0.4;stroke:#7f6000;stroke-dasharray:3 2}\
         .preemption{stroke:#444;fill:none;marker-end:url(#arrow)}</style>\n",
    );
    out.push_str(
        "<defs><marker id=\"arrow\" viewBox=\"0 0 6 6\" refX=\"6\" refY=\"3\" markerWidth=\"6\" markerHeight=\"6\" orient=\"auto\">\
         <path d=\"M0,0 L6,3 L0,6 z\"/></marker></defs>\n",
    );
    let _ = writeln!(out, r#"<text x="4" y="14">{}</text>"#, escape(&chart.title));

    let axis_y = TOP + LANE_H * chart.lanes.len() as f64 + 4.0;
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{LEFT}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#,
        LEFT + PLOT_W
    );
    for i in 0..=10 {
        let t = Time::from_ticks(chart.horizon.ticks() * i / 10);
        let tx = x(t);
        let _ = writeln!(
            out,
            r#"<line x1="{tx:.2}" y1="{axis_y}" x2="{tx:.2}" y2="{}" stroke="black"/><text x="{tx:.2}" y="{}" text-anchor="middle">{t}</text>"#,
            axis_y + 4.0,
            axis_y + 16.0
        );
    }

    for (li, lane) in chart.lanes.iter().enumerate() {
        let y = TOP + LANE_H * li as f64;
        let _ = writeln!(
            out,
            r#"<text x="4" y="{:.1}">{}</text>"#,
            y + LANE_H / 2.0 + 3.0,
            escape(&lane.label)
        );
        for o in &lane.outlines {
            let _ = writeln!(
                out,
                r#"<rect class="partition" x="{:.2}" y="{:.1}" width="{:.2}" height="{:.1}"><title>{} {}-{}</title></rect>"#,
                x(o.start),
                y + 2.0,
                x(o.end) - x(o.start),
                LANE_H - 4.0,
                escape(&o.label),
                o.start,
                o.end
            );
        }
        for (bi, b) in lane.boxes.iter().enumerate() {
            let class = match b.kind {
                BoxKind::Slice => "slice",
                BoxKind::Dynamic => "dynamic",
                BoxKind::Miss => "miss",
            };
            let (bx, bw) = (x(b.start), (x(b.end) - x(b.start)).max(0.5));
            let _ = writeln!(
                out,
                r#"<rect class="{class}" x="{bx:.2}" y="{:.1}" width="{bw:.2}" height="{:.1}"><title>{} {}-{}</title></rect>"#,
                y + 6.0,
                LANE_H - 12.0,
                escape(&b.label),
                b.start,
                b.end
            );
            if b.preempted {
                if let Some(next) = lane.boxes[bi + 1..]
                    .iter()
                    .find(|n| n.label == b.label && n.kind == b.kind)
                {
                    let _ = writeln!(
                        out,
                        r#"<path class="preemption" d="M{:.2},{:.1} L{:.2},{:.1}"/>"#,
                        x(b.end),
                        y + 5.0,
                        x(next.start),
                        y + 5.0
                    );
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

const COLS: usize = 100;

/// A bar per lane (`#` slice, `+` dynamic, `!` missed window, `.` idle,
/// `|` partition edge) followed by one line per box.
pub fn render_ascii(chart: &Chart) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} (0 .. {})", chart.title, chart.horizon);
    let span = chart.horizon.ticks().max(1) as i128;
    let col = |t: Time| ((t.ticks() as i128 * COLS as i128) / span).clamp(0, COLS as i128) as usize;
    let width = chart
        .lanes
        .iter()
        .map(|l| l.label.len())
        .max()
        .unwrap_or(0)
        .max(4);
    for lane in &chart.lanes {
        let mut bar = vec!['.'; COLS];
        for b in &lane.boxes {
            let ch = match b.kind {
                BoxKind::Slice => '#',
                BoxKind::Dynamic => '+',
                BoxKind::Miss => '!',
            };
            let (a, z) = (col(b.start), col(b.end).max(col(b.start) + 1).min(COLS));
            for c in &mut bar[a.min(COLS - 1)..z] {
                if ch == '!' || *c == '.' || *c == '|' {
                    *c = ch;
                }
            }
        }
        for o in &lane.outlines {
            let a = col(o.start).min(COLS - 1);
            if bar[a] == '.' {
                bar[a] = '|';
            }
        }
        let _ = writeln!(
            out,
            "{:<width$} [{}]",
            lane.label,
            bar.iter().collect::<String>()
        );
    }
    let _ = writeln!(
        out,
        "{:<width$}  0{:>w$}",
        "",
        chart.horizon.to_string(),
        w = COLS - 1
    );
    for lane in &chart.lanes {
        for o in &lane.outlines {
            let _ = writeln!(
                out,
                "{} partition {} {}..{}",
                lane.label, o.label, o.start, o.end
            );
        }
        for b in &lane.boxes {
            let kind = match b.kind {
                BoxKind::Slice => "slice",
                BoxKind::Dynamic => "dynamic",
                BoxKind::Miss => "MISS",
            };
            let _ = writeln!(
                out,
                "{} {kind} {} {}..{}{}",
                lane.label,
                b.label,
                b.start,
                b.end,
                if b.preempted { " (preempted)" } else { "" }
            );
        }
    }
    out
}
