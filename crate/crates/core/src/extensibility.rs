//! Idle-time distribution, schedule optimization for it, and admission of
//! dynamic non-critical tasks into the idle time of a static schedule.
//!
//! Idle gaps are taken per core and are not wrapped around the end of the
//! major frame: a gap at the end and one at the start count separately.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::nodesched::{NodeSchedule, TaskSlice};
use crate::scenario::{hyperperiod, TaskSpec};
use crate::time::{complement, merge_intervals, Time};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdleProfile {
    pub core: u32,
    pub intervals: Vec<(Time, Time)>,
}

fn busy(slices: &[TaskSlice], core: u32) -> Vec<(Time, Time)> {
    merge_intervals(
        slices
            .iter()
            .filter(|s| s.core == core)
            .map(|s| (s.start, s.end))
            .collect(),
    )
}

pub fn idle_profile(ns: &NodeSchedule, core: u32) -> IdleProfile {
    IdleProfile {
        core,
        intervals: complement(&busy(&ns.slices, core), Time::ZERO, ns.major_frame),
    }
}

fn gap_metric(gaps: &[(Time, Time)], frame: Time) -> f64 {
    if gaps.len() < 2 || frame <= Time::ZERO {
        return 0.0;
    }
    let n = gaps.len() as f64;
    let lens: Vec<f64> = gaps.iter().map(|(s, e)| (*e - *s).ticks() as f64).collect();
    let mean = lens.iter().sum::<f64>() / n;
    let var = lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / frame.ticks() as f64
}

/// Population standard deviation of the idle gap lengths on `core`,
/// relative to the major frame. Zero with fewer than two gaps.
pub fn ext_metric(ns: &NodeSchedule, core: u32) -> f64 {
    gap_metric(&idle_profile(ns, core).intervals, ns.major_frame)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub seed: u64,
    /// Accepted moves per core before the search stops.
    pub max_iterations: usize,
    /// Pieces shorter than this are never created by a split.
    pub min_slice: Time,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            seed: 0,
            max_iterations: 2_000,
            min_slice: Time::from_us(100),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Move {
    slice: usize,
    /// Ticks taken from the end of the slice; the whole slice when equal to
    /// its length.
    len: Time,
    to: Time,
}

/// Local search over one core's slices: shift a slice, or split half of it
/// off, into an idle gap inside the slice's job window. A move is kept only
/// if it strictly lowers the core's metric.
fn optimize_core(
    ns: &NodeSchedule,
    core: u32,
    slices: &mut Vec<TaskSlice>,
    cfg: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
) {
    let windows: BTreeMap<&str, (Time, Time)> = ns
        .tasks
        .iter()
        .map(|t| (t.id.as_str(), (t.period, t.deadline)))
        .collect();
    let frame = ns.major_frame;
    let mut current = gap_metric(&complement(&busy(slices, core), Time::ZERO, frame), frame);

    for _ in 0..cfg.max_iterations {
        let mut moves = Vec::new();
        for (i, sl) in slices.iter().enumerate() {
            let Some(&(period, deadline)) = windows.get(sl.task.as_str()) else {
                continue;
            };
            let release = period * sl.job as i64;
            let due = (release + deadline).min(frame);
            let others: Vec<(Time, Time)> = merge_intervals(
                slices
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, s)| (s.start, s.end))
                    .collect(),
            );
            let len = sl.end - sl.start;
            let half = Time::from_ticks(len.ticks() / 2);
            let mut pieces = vec![len];
            if half >= cfg.min_slice && len - half >= cfg.min_slice {
                pieces.push(half);
            }
            for &piece in &pieces {
                let mut blocked = others.clone();
                if piece < len {
                    // the head of a split slice stays where it is
                    blocked.push((sl.start, sl.end - piece));
                }
                for (gs, ge) in complement(&merge_intervals(blocked), release, due) {
                    if ge - gs < piece {
                        continue;
                    }
                    let slack = ge - gs - piece;
                    for to in [gs, gs + Time::from_ticks(slack.ticks() / 2), ge - piece] {
                        if piece == len && to == sl.start {
                            continue;
                        }
                        moves.push(Move {
                            slice: i,
                            len: piece,
                            to,
                        });
                    }
                }
            }
        }
        moves.shuffle(rng);
        let mut accepted = false;
        for mv in moves {
            let trial = apply(slices, mv);
            let m = gap_metric(&complement(&busy(&trial, core), Time::ZERO, frame), frame);
            if m < current - 1e-15 {
                *slices = trial;
                current = m;
                accepted = true;
                break;
            }
        }
        if !accepted {
            break;
        }
    }
}

fn apply(slices: &[TaskSlice], mv: Move) -> Vec<TaskSlice> {
    let mut out = slices.to_vec();
    let src = out[mv.slice].clone();
    let len = src.end - src.start;
    let mut piece = src.clone();
    piece.start = mv.to;
    piece.end = mv.to + mv.len;
    if mv.len == len {
        out[mv.slice] = piece;
    } else {
        out[mv.slice].end = src.end - mv.len;
        out.push(piece);
    }
    out.sort_by_key(|s| s.start);
    // rejoin contiguous pieces of the same job
    let mut merged: Vec<TaskSlice> = Vec::with_capacity(out.len());
    for s in out {
        match merged.last_mut() {
            Some(last) if last.task == s.task && last.job == s.job && last.end == s.start => {
                last.end = s.end
            }
            _ => merged.push(s),
        }
    }
    merged
}

/// Spreads idle time more evenly on every core. Slices stay inside their
/// job windows and keep their partition; windows are rebuilt afterwards.
pub fn optimize_extensibility(ns: &NodeSchedule, cfg: &OptimizerConfig) -> NodeSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = ns.clone();
    let mut all = Vec::new();
    for core in 0..ns.cores {
        let mut slices: Vec<TaskSlice> = ns.core_slices(core).cloned().collect();
        slices.sort_by_key(|s| s.start);
        optimize_core(ns, core, &mut slices, cfg, &mut rng);
        all.extend(slices);
    }
    out.slices = all;
    out.refresh();
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdmissionError {
    #[error("core {core} does not exist on node `{node}`")]
    NoSuchCore { node: String, core: u32 },
    #[error("horizon {horizon} is not a multiple of the combined hyperperiod {lcm}")]
    Horizon { horizon: Time, lcm: Time },
    #[error("dynamic task `{0}` has a non-positive period, deadline or WCET")]
    BadTask(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Miss {
    pub task: String,
    pub release_us: Time,
    pub deadline_us: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissionReport {
    pub admitted: BTreeMap<String, bool>,
    pub misses: Vec<Miss>,
    pub dynamic_slices: Vec<TaskSlice>,
}

/// Label given to the slices of dynamic tasks, which run outside every
/// partition.
pub const DYNAMIC_PARTITION: &str = "dynamic";

/// Runs `dynamic` under EDF in the idle time of `core` over `horizon`,
/// leaving the static slices untouched. A job still unfinished at its
/// deadline is recorded as a miss and dropped.
pub fn admit_dynamic(
    ns: &NodeSchedule,
    core: u32,
    dynamic: &[TaskSpec],
    horizon: Time,
) -> Result<AdmissionReport, AdmissionError> {
    if core >= ns.cores {
        return Err(AdmissionError::NoSuchCore {
            node: ns.node.clone(),
            core,
        });
    }
    for t in dynamic {
        if t.period <= Time::ZERO || t.deadline <= Time::ZERO || t.wcet_us <= 0.0 {
            return Err(AdmissionError::BadTask(t.id.clone()));
        }
    }
    let mut periods: Vec<Time> = dynamic.iter().map(|t| t.period).collect();
    if ns.major_frame > Time::ZERO {
        periods.push(ns.major_frame);
    }
    if !periods.is_empty() {
        let lcm = hyperperiod(&periods).map_err(|_| AdmissionError::Horizon {
            horizon,
            lcm: Time::ZERO,
        })?;
        if horizon <= Time::ZERO || horizon.rem_euclid(lcm) != Time::ZERO {
            return Err(AdmissionError::Horizon { horizon, lcm });
        }
    }

    let idle: Vec<(Time, Time)> = if ns.major_frame > Time::ZERO {
        let one = idle_profile(ns, core).intervals;
        let copies = horizon.div_floor(ns.major_frame);
        merge_intervals(
            (0..copies)
                .flat_map(|k| {
                    one.iter()
                        .map(move |&(s, e)| (s + ns.major_frame * k, e + ns.major_frame * k))
                })
                .collect(),
        )
    } else {
        vec![(Time::ZERO, horizon)]
    };

    struct Job {
        task: usize,
        k: u32,
        release: Time,
        deadline: Time,
        left: Time,
    }
    let mut releases: Vec<(Time, usize, u32)> = Vec::new();
    for (i, t) in dynamic.iter().enumerate() {
        for k in 0..horizon.div_floor(t.period) {
            releases.push((t.period * k, i, k as u32));
        }
    }
    releases.sort();
    let wcet: Vec<Time> = dynamic
        .iter()
        .map(|t| Time::from_us_ceil(t.wcet_us))
        .collect();

    let mut admitted: BTreeMap<String, bool> =
        dynamic.iter().map(|t| (t.id.clone(), true)).collect();
    let mut misses = Vec::new();
    let mut out: Vec<TaskSlice> = Vec::new();
    let mut ready: Vec<Job> = Vec::new();
    let mut next = 0;
    let mut now = Time::ZERO;
    let mut gap = 0;

    while now < horizon || !ready.is_empty() {
        while next < releases.len() && releases[next].0 <= now {
            let (rel, i, k) = releases[next];
            ready.push(Job {
                task: i,
                k,
                release: rel,
                deadline: rel + dynamic[i].deadline,
                left: wcet[i],
            });
            next += 1;
        }
        ready.retain(|j| {
            if j.deadline <= now {
                misses.push(Miss {
                    task: dynamic[j.task].id.clone(),
                    release_us: j.release,
                    deadline_us: j.deadline,
                });
                admitted.insert(dynamic[j.task].id.clone(), false);
                false
            } else {
                true
            }
        });
        while gap < idle.len() && idle[gap].1 <= now {
            gap += 1;
        }
        let next_release = releases.get(next).map(|r| r.0);
        let next_deadline = ready.iter().map(|j| j.deadline).min();
        let in_idle = gap < idle.len() && idle[gap].0 <= now;
        let pick = ready
            .iter()
            .enumerate()
            .min_by_key(|(_, j)| (j.deadline, j.task, j.k))
            .map(|(idx, _)| idx);

        let mut event = [next_release, next_deadline].into_iter().flatten().min();
        match (in_idle, pick) {
            (true, Some(idx)) => {
                let job = &mut ready[idx];
                let mut end = (now + job.left).min(idle[gap].1);
                if let Some(e) = event {
                    end = end.min(e);
                }
                let t = &dynamic[job.task];
                match out.last_mut() {
                    Some(last) if last.task == t.id && last.job == job.k && last.end == now => {
                        last.end = end
                    }
                    _ => out.push(TaskSlice {
                        task: t.id.clone(),
                        core,
                        partition: DYNAMIC_PARTITION.to_string(),
                        start: now,
                        end,
                        job: job.k,
                    }),
                }
                job.left -= end - now;
                if job.left == Time::ZERO {
                    ready.remove(idx);
                }
                now = end;
                continue;
            }
            (false, Some(_)) if gap < idle.len() => {
                event = Some(event.map_or(idle[gap].0, |e| e.min(idle[gap].0)));
            }
            _ => {}
        }
        match event {
            Some(e) if e > now => now = e,
            _ => break,
        }
    }
    Ok(AdmissionReport {
        admitted,
        misses,
        dynamic_slices: out,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct DynamicParseError {
    pub line: usize,
    pub message: String,
}

fn duration_us(word: &str) -> Option<f64> {
    let split = word.find(|c: char| !(c.is_ascii_digit() || c == '.'))?;
    let (num, unit) = word.split_at(split);
    let v: f64 = num.parse().ok()?;
    match unit {
        "us" => Some(v),
        "ms" => Some(v * 1e3),
        "s" => Some(v * 1e6),
        _ => None,
    }
}

/// Reads dynamic task lines of the form
/// `task <name> wcet <dur> period <dur> [deadline <dur>]`; durations carry
/// a `us`, `ms` or `s` suffix. `#` starts a comment.
pub fn parse_dynamic_tasks(text: &str) -> Result<Vec<TaskSpec>, DynamicParseError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |message: String| DynamicParseError { line, message };
        let words: Vec<&str> = body.split_whitespace().collect();
        if words[0] != "task" || words.len() < 2 {
            return Err(err(format!("expected `task <name> ...`, found `{body}`")));
        }
        let id = words[1].to_string();
        let (mut wcet, mut period, mut deadline) = (None, None, None);
        let mut rest = words[2..].chunks(2);
        for pair in &mut rest {
            let [key, value] = pair else {
                return Err(err(format!("`{}` has no value", pair[0])));
            };
            let us = duration_us(value).ok_or_else(|| err(format!("bad duration `{value}`")))?;
            match *key {
                "wcet" => wcet = Some(us),
                "period" => period = Some(Time::from_us_round(us)),
                "deadline" => deadline = Some(Time::from_us_round(us)),
                other => return Err(err(format!("unknown field `{other}`"))),
            }
        }
        let wcet_us = wcet.ok_or_else(|| err(format!("task `{id}` has no wcet")))?;
        let period = period.ok_or_else(|| err(format!("task `{id}` has no period")))?;
        out.push(TaskSpec {
            id,
            wcet_us,
            period,
            deadline: deadline.unwrap_or(period),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodesched::{
        synthesize_node_schedule, verify_node_schedule, CoreMapping, MappedTask, Partition,
        PartitionTable, ScheduledTask,
    };

    fn ms(v: f64) -> Time {
        Time::from_us_round(v * 1e3)
    }

    fn one_core(frame: Time, busy: &[(f64, f64)]) -> NodeSchedule {
        let mut ns = NodeSchedule {
            node: "N".into(),
            cores: 1,
            major_frame: frame,
            tasks: vec![],
            partitions: vec![Partition {
                id: "N/c0/L1".into(),
                node: "N".into(),
                criticality: 1,
                core: Some(0),
                windows: vec![],
            }],
            slices: vec![],
            per_core_utilization: vec![],
        };
        for (i, &(s, e)) in busy.iter().enumerate() {
            ns.tasks.push(ScheduledTask {
                id: format!("t{i}"),
                app: "a".into(),
                criticality: 1,
                core: 0,
                partition: "N/c0/L1".into(),
                wcet: ms(e - s),
                period: frame,
                deadline: frame,
            });
            ns.slices.push(TaskSlice {
                task: format!("t{i}"),
                core: 0,
                partition: "N/c0/L1".into(),
                start: ms(s),
                end: ms(e),
                job: 0,
            });
        }
        ns.refresh();
        ns
    }

    fn logging_dynamic() -> Vec<TaskSpec> {
        parse_dynamic_tasks(include_str!("../../../fixtures/logging_dynamic.tasks")).unwrap()
    }

    #[test]
    fn idle_examples() {
        assert_eq!(
            idle_profile(&one_core(ms(10.0), &[]), 0).intervals,
            vec![(Time::ZERO, ms(10.0))]
        );
        assert!(idle_profile(&one_core(ms(10.0), &[(0.0, 10.0)]), 0)
            .intervals
            .is_empty());
        let ns = one_core(ms(10.0), &[(0.0, 3.0), (5.0, 8.0)]);
        assert_eq!(
            idle_profile(&ns, 0).intervals,
            vec![(ms(3.0), ms(5.0)), (ms(8.0), ms(10.0))]
        );
    }

    #[test]
    fn metric_examples() {
        let even = one_core(ms(8.0), &[(0.0, 1.0), (2.0, 3.0), (4.0, 5.0), (6.0, 7.0)]);
        assert_eq!(idle_profile(&even, 0).intervals.len(), 4);
        assert_eq!(ext_metric(&even, 0), 0.0);
        // gaps of 2 ms and 4 ms
        let uneven = one_core(ms(20.0), &[(0.0, 2.0), (4.0, 16.0)]);
        assert!((ext_metric(&uneven, 0) - 0.05).abs() < 1e-12);
        assert_eq!(ext_metric(&one_core(ms(10.0), &[(0.0, 4.0)]), 0), 0.0);
    }

    #[test]
    fn no_idle_means_every_job_misses() {
        let ns = one_core(ms(12.0), &[(0.0, 12.0)]);
        let dynamic = vec![TaskSpec {
            id: "d".into(),
            wcet_us: 100.0,
            period: ms(6.0),
            deadline: ms(6.0),
        }];
        let r = admit_dynamic(&ns, 0, &dynamic, ms(12.0)).unwrap();
        assert!(!r.admitted["d"]);
        assert_eq!(r.misses.len(), 2);
        assert_eq!(
            r.misses[1],
            Miss {
                task: "d".into(),
                release_us: ms(6.0),
                deadline_us: ms(12.0)
            }
        );
        assert!(r.dynamic_slices.is_empty());
    }

    #[test]
    fn horizon_must_cover_hyperperiod() {
        let ns = one_core(ms(10.0), &[(0.0, 1.0)]);
        let err = admit_dynamic(&ns, 0, &logging_dynamic(), ms(60.0)).unwrap_err();
        assert_eq!(
            err,
            AdmissionError::Horizon {
                horizon: ms(60.0),
                lcm: ms(120.0)
            }
        );
        assert!(admit_dynamic(&ns, 3, &logging_dynamic(), ms(120.0)).is_err());
    }

    #[test]
    fn dynamic_slices_stay_in_idle_time() {
        let ns = one_core(ms(10.0), &[(0.0, 2.0), (5.0, 6.0)]);
        let r = admit_dynamic(&ns, 0, &logging_dynamic(), ms(120.0)).unwrap();
        let idle = idle_profile(&ns, 0).intervals;
        for s in &r.dynamic_slices {
            let (a, b) = (
                s.start.rem_euclid(ms(10.0)),
                s.start.rem_euclid(ms(10.0)) + (s.end - s.start),
            );
            assert!(idle.iter().any(|&(x, y)| x <= a && b <= y), "{s:?}");
        }
    }

    #[test]
    fn uniform_schedule_is_a_fixed_point() {
        let even = one_core(ms(8.0), &[(0.0, 1.0), (2.0, 3.0), (4.0, 5.0), (6.0, 7.0)]);
        let out = optimize_extensibility(&even, &OptimizerConfig::default());
        assert_eq!(out.slices, even.slices);
    }

    #[test]
    fn optimizer_reduces_clustered_idle() {
        let ns = one_core(ms(20.0), &[(0.0, 2.0), (4.0, 16.0)]);
        let before = ext_metric(&ns, 0);
        let out = optimize_extensibility(&ns, &OptimizerConfig::default());
        assert!(
            verify_node_schedule(&out).is_clean(),
            "{:?}",
            verify_node_schedule(&out).violations
        );
        assert!(ext_metric(&out, 0) < before);
    }

    #[test]
    fn dynamic_file_errors() {
        assert_eq!(parse_dynamic_tasks("# none\n\n").unwrap(), vec![]);
        let t = parse_dynamic_tasks("task x wcet 500us period 5ms deadline 4ms").unwrap();
        assert_eq!(t[0].deadline, ms(4.0));
        assert_eq!(
            parse_dynamic_tasks("task x wcet 5 period 5ms")
                .unwrap_err()
                .line,
            1
        );
        assert!(parse_dynamic_tasks("\ntask x period 5ms")
            .unwrap_err()
            .message
            .contains("wcet"));
        assert!(parse_dynamic_tasks("job x").is_err());
    }

    fn fixture(name: &str) -> NodeSchedule {
        let text = match name {
            "base" => include_str!("../../../fixtures/e4c2_base.json"),
            _ => include_str!("../../../fixtures/e4c2_optimized.json"),
        };
        NodeSchedule::from(&serde_json::from_str::<PartitionTable>(text).unwrap())
    }

    #[test]
    fn fixtures_regenerate() {
        let base = fixture("base");
        let mapping = CoreMapping {
            node: base.node.clone(),
            cores: base.cores,
            tasks: base
                .tasks
                .iter()
                .map(|t| MappedTask {
                    id: t.id.clone(),
                    app: t.app.clone(),
                    criticality: t.criticality,
                    wcet: t.wcet,
                    period: t.period,
                    deadline: t.deadline,
                    core: t.core,
                })
                .collect(),
        };
        let again = synthesize_node_schedule(&mapping).unwrap();
        assert_eq!(again.slices, base.slices);
        assert_eq!(again.partitions, base.partitions);

        let opt = optimize_extensibility(&base, &OptimizerConfig::default());
        assert_eq!(opt.slices, fixture("optimized").slices);
        assert_eq!(opt.partitions, fixture("optimized").partitions);
    }

    #[test]
    fn fixture_contrast() {
        let (base, opt) = (fixture("base"), fixture("optimized"));
        assert!(verify_node_schedule(&base).is_clean());
        assert!(verify_node_schedule(&opt).is_clean());
        assert!(ext_metric(&opt, 1) < ext_metric(&base, 1));
        let dynamic = logging_dynamic();
        let on_base = admit_dynamic(&base, 1, &dynamic, ms(120.0)).unwrap();
        let on_opt = admit_dynamic(&opt, 1, &dynamic, ms(120.0)).unwrap();
        assert!(!on_base.misses.is_empty());
        assert!(on_opt.misses.is_empty(), "{:?}", on_opt.misses);
        assert!(on_opt.admitted.values().all(|a| *a));
    }

    fn capacity_and_immutability(
        ns: &NodeSchedule,
        core: u32,
        dynamic: &[TaskSpec],
        horizon: Time,
    ) {
        let before = ns.clone();
        let r = admit_dynamic(ns, core, dynamic, horizon).unwrap();
        assert_eq!(ns, &before);
        let idle: Time = idle_profile(ns, core)
            .intervals
            .iter()
            .map(|(s, e)| *e - *s)
            .sum::<Time>()
            * horizon.div_floor(ns.major_frame);
        let granted: Time = r.dynamic_slices.iter().map(|s| s.end - s.start).sum();
        assert!(granted <= idle);
        // static and dynamic slices never overlap on the combined timeline
        let mut all: Vec<(Time, Time)> =
            r.dynamic_slices.iter().map(|s| (s.start, s.end)).collect();
        for k in 0..horizon.div_floor(ns.major_frame) {
            all.extend(
                ns.core_slices(core)
                    .map(|s| (s.start + ns.major_frame * k, s.end + ns.major_frame * k)),
            );
        }
        all.sort();
        assert!(all.windows(2).all(|w| w[0].1 <= w[1].0));
    }

    #[test]
    fn admission_leaves_fixtures_intact() {
        for name in ["base", "optimized"] {
            capacity_and_immutability(&fixture(name), 1, &logging_dynamic(), ms(120.0));
        }
    }

    fn rotate(ns: &NodeSchedule, by: Time) -> NodeSchedule {
        let mut out = ns.clone();
        for s in &mut out.slices {
            let len = s.end - s.start;
            s.start = (s.start - by).rem_euclid(ns.major_frame);
            s.end = s.start + len;
        }
        out.refresh();
        out
    }

    proptest::proptest! {
        #[test]
        fn metric_survives_rotation_onto_a_busy_start(
            lens in proptest::collection::vec((1i64..40, 1i64..40), 1..8), pick in 0usize..8
        ) {
            let mut blocks = Vec::new();
            let mut t = 0.0;
            for &(busy, idle) in &lens {
                blocks.push((t, t + busy as f64 * 0.1));
                t += (busy + idle) as f64 * 0.1;
            }
            let ns = one_core(ms(t), &blocks);
            let by = ms(blocks[pick % blocks.len()].0);
            let rotated = rotate(&ns, by);
            proptest::prop_assert!((ext_metric(&ns, 0) - ext_metric(&rotated, 0)).abs() < 1e-12);
        }

        #[test]
        fn optimizer_never_worsens_and_stays_valid(
            raw in proptest::collection::vec((0usize..3, 1i64..20), 1..5), seed in 0u64..4
        ) {
            let periods = [5i64, 10, 20];
            let tasks: Vec<MappedTask> = raw.iter().enumerate().map(|(i, &(p, w))| MappedTask {
                id: format!("t{i}"), app: "a".into(), criticality: 1 + (i % 2) as u8,
                wcet: Time::from_ticks(Time::from_ms(periods[p]).ticks() * w / 100),
                period: Time::from_ms(periods[p]), deadline: Time::from_ms(periods[p]), core: 0,
            }).collect();
            let load: i64 = raw.iter().map(|&(_, w)| w).sum();
            proptest::prop_assume!(load <= 100);
            let ns = synthesize_node_schedule(&CoreMapping { node: "N".into(), cores: 1, tasks }).unwrap();
            let cfg = OptimizerConfig { seed, max_iterations: 200, ..OptimizerConfig::default() };
            let out = optimize_extensibility(&ns, &cfg);
            let report = verify_node_schedule(&out);
            proptest::prop_assert!(report.is_clean(), "{:?}", report.violations);
            proptest::prop_assert!(ext_metric(&out, 0) <= ext_metric(&ns, 0));
            let dynamic = vec![TaskSpec { id: "d".into(), wcet_us: 500.0, period: ms(5.0), deadline: ms(5.0) }];
            capacity_and_immutability(&out, 0, &dynamic, ns.major_frame);
        }
    }
}
