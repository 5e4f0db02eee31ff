//! TESLA-style authentication overlay for scheduled streams.
//!
//! Every secured stream gets a signing task at its source and a verifying
//! task at its destination. Frames grow by one MAC and one disclosed key.
//! A receiver can only verify once the key of the sending interval is
//! disclosed, `d` key intervals later, so it waits until the end of the
//! `d`-th interval after the one the frame was sent in.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::gclsched::{GclError, NetSchedule};
use crate::nodesched::{map_to_cores, NodeError};
use crate::scenario::{ApplicationSpec, Scenario, TaskSpec};
use crate::time::Time;

#[derive(Clone, Debug, PartialEq)]
pub struct TeslaConfig {
    pub mac_bytes: u32,
    pub key_bytes: u32,
    pub key_interval: Time,
    /// Disclosure delay `d`, in key intervals.
    pub disclosure_delay: u32,
    pub sign_wcet: Time,
    pub verify_wcet: Time,
    pub grow_frames: bool,
    /// Whether receivers wait for key disclosure before verifying.
    pub disclosure_wait: bool,
    /// Streams to secure; `None` secures all of them.
    pub confidential: Option<BTreeSet<String>>,
}

impl Default for TeslaConfig {
    fn default() -> Self {
        TeslaConfig {
            mac_bytes: 16,
            key_bytes: 16,
            key_interval: Time::from_us(1000),
            disclosure_delay: 1,
            sign_wcet: Time::from_us(50),
            verify_wcet: Time::from_us(50),
            grow_frames: true,
            disclosure_wait: true,
            confidential: None,
        }
    }
}

impl TeslaConfig {
    fn secures(&self, stream: &str) -> bool {
        self.confidential
            .as_ref()
            .is_none_or(|c| c.contains(stream))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeslaError {
    #[error("invalid TESLA configuration: {0}")]
    InvalidConfig(String),
    #[error("node `{node}` cannot absorb the security tasks: {source}")]
    TaskPlacementInfeasible { node: String, source: NodeError },
    #[error("stream `{0}` is not in the network schedule")]
    Unscheduled(String),
    #[error("stream sets differ: {}", .0.join(", "))]
    MismatchedStreams(Vec<String>),
    #[error(transparent)]
    Net(#[from] GclError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityRole {
    Sign,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecurityTask {
    pub id: String,
    pub stream: String,
    pub role: SecurityRole,
    /// Node or endpoint the task runs on.
    pub host: String,
    pub criticality: u8,
    pub wcet: Time,
    pub period: Time,
    /// Release within the period: signing finishes at the stream's offset,
    /// verification starts at last-bit reception of instance 0.
    pub release: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecuredStream {
    pub id: String,
    pub size_before: u32,
    pub size_after: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecurityOverlay {
    pub streams: Vec<SecuredStream>,
    pub tasks: Vec<SecurityTask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Secured {
    pub overlay: SecurityOverlay,
    /// The input scenario with grown frames and the security tasks added as
    /// applications on the fog nodes that host them.
    pub scenario: Scenario,
}

fn check_config(cfg: &TeslaConfig) -> Result<(), TeslaError> {
    if cfg.key_interval <= Time::ZERO {
        return Err(TeslaError::InvalidConfig(
            "key interval must be positive".into(),
        ));
    }
    if cfg.disclosure_delay < 1 {
        return Err(TeslaError::InvalidConfig(
            "disclosure delay must be at least 1".into(),
        ));
    }
    if cfg.sign_wcet < Time::ZERO || cfg.verify_wcet < Time::ZERO {
        return Err(TeslaError::InvalidConfig(
            "security task WCETs must be non-negative".into(),
        ));
    }
    Ok(())
}

/// Builds the security overlay for `ns` and the scenario variant to
/// reschedule.
pub fn apply_tesla(
    s: &Scenario,
    ns: &NetSchedule,
    cfg: &TeslaConfig,
) -> Result<Secured, TeslaError> {
    check_config(cfg)?;
    let mut scenario = s.clone();
    let mut streams = Vec::new();
    let mut tasks = Vec::new();
    let grow = if cfg.grow_frames {
        cfg.mac_bytes + cfg.key_bytes
    } else {
        0
    };

    for st in scenario.streams.iter_mut().filter(|st| cfg.secures(&st.id)) {
        let offset = *ns
            .offsets
            .get(&st.id)
            .ok_or_else(|| TeslaError::Unscheduled(st.id.clone()))?;
        let ed = ns
            .per_stream
            .get(&st.id)
            .map(|m| m.ed)
            .unwrap_or(Time::ZERO);
        streams.push(SecuredStream {
            id: st.id.clone(),
            size_before: st.size_bytes,
            size_after: st.size_bytes + grow,
        });
        st.size_bytes += grow;
        let roles = [
            (
                SecurityRole::Sign,
                &st.src,
                cfg.sign_wcet,
                (offset - cfg.sign_wcet).rem_euclid(st.period),
            ),
            (
                SecurityRole::Verify,
                &st.dst,
                cfg.verify_wcet,
                (offset + ed).rem_euclid(st.period),
            ),
        ];
        for (role, host, wcet, release) in roles {
            let suffix = match role {
                SecurityRole::Sign => "sign",
                SecurityRole::Verify => "verify",
            };
            tasks.push(SecurityTask {
                id: format!("{}/{suffix}", st.id),
                stream: st.id.clone(),
                role,
                host: host.clone(),
                criticality: st.criticality,
                wcet,
                period: st.period,
                release,
            });
        }
    }

    let nodes: BTreeSet<&str> = scenario.nodes.iter().map(|n| n.id.as_str()).collect();
    for t in tasks
        .iter()
        .filter(|t| nodes.contains(t.host.as_str()) && t.wcet > Time::ZERO)
    {
        let task = TaskSpec {
            id: t.id.clone(),
            wcet_us: t.wcet.as_us(),
            period: t.period,
            deadline: t.period,
        };
        scenario.applications.push(ApplicationSpec {
            id: t.id.clone(),
            node: t.host.clone(),
            level: t.criticality,
            task_count: 1,
            period: t.period,
            utilization: task.utilization(),
            tasks: vec![task],
        });
    }
    for node in &scenario.nodes {
        let apps: Vec<ApplicationSpec> = scenario.apps_on(&node.id).cloned().collect();
        map_to_cores(&node.id, &apps, node.cores).map_err(|source| {
            TeslaError::TaskPlacementInfeasible {
                node: node.id.clone(),
                source,
            }
        })?;
    }

    Ok(Secured {
        overlay: SecurityOverlay { streams, tasks },
        scenario,
    })
}

/// Delay of one instance once the receiver waits for key disclosure and
/// verifies. `send` is when the first bit leaves the source, `recv` when the
/// last bit arrives. With `d = 0` there is nothing to wait for.
pub fn secured_delay(release: Time, send: Time, recv: Time, cfg: &TeslaConfig) -> Time {
    let d = cfg.disclosure_delay as i64;
    let wait = if d == 0 || !cfg.disclosure_wait {
        Time::ZERO
    } else {
        let disclosed = cfg.key_interval * (send.div_floor(cfg.key_interval) + d + 1);
        (disclosed - recv).max(Time::ZERO)
    };
    recv + wait + cfg.verify_wcet - release
}

/// Worst-case secured delay of every secured stream in `secured_ns`.
pub fn secured_eds(
    secured: &Scenario,
    secured_ns: &NetSchedule,
    cfg: &TeslaConfig,
) -> Result<BTreeMap<String, Time>, TeslaError> {
    let mut out = BTreeMap::new();
    for st in secured.streams.iter().filter(|st| cfg.secures(&st.id)) {
        // per instance: (first-hop open, last-hop close)
        let mut inst: BTreeMap<u32, (Time, u32, Time)> = BTreeMap::new();
        for w in secured_ns.windows.iter().filter(|w| w.stream == st.id) {
            let e = inst.entry(w.instance).or_insert((w.open, w.hop, w.close));
            if w.hop == 0 {
                e.0 = w.open;
            }
            if w.hop > e.1 {
                e.1 = w.hop;
                e.2 = w.close;
            }
        }
        let worst = inst
            .iter()
            .map(|(&k, &(send, _, close))| {
                secured_delay(st.period * k as i64, send, close + secured_ns.d_hop, cfg)
            })
            .max()
            .ok_or_else(|| TeslaError::Unscheduled(st.id.clone()))?;
        out.insert(st.id.clone(), worst);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamOverhead {
    pub id: String,
    pub ed_before_us: Time,
    pub ed_after_us: Time,
    pub delta_us: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverheadReport {
    pub streams: Vec<StreamOverhead>,
    pub avg_delta_us: f64,
}

pub fn tesla_overhead_report(
    before: &BTreeMap<String, Time>,
    after: &BTreeMap<String, Time>,
) -> Result<OverheadReport, TeslaError> {
    let a: BTreeSet<&String> = before.keys().collect();
    let b: BTreeSet<&String> = after.keys().collect();
    if a != b {
        return Err(TeslaError::MismatchedStreams(
            a.symmetric_difference(&b).map(|s| s.to_string()).collect(),
        ));
    }
    let streams: Vec<StreamOverhead> = before
        .iter()
        .map(|(id, &ed)| StreamOverhead {
            id: id.clone(),
            ed_before_us: ed,
            ed_after_us: after[id],
            delta_us: after[id] - ed,
        })
        .collect();
    let avg_delta_us = if streams.is_empty() {
        0.0
    } else {
        streams.iter().map(|s| s.delta_us.as_us()).sum::<f64>() / streams.len() as f64
    };
    Ok(OverheadReport {
        streams,
        avg_delta_us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gclsched::{synthesize_gcl, verify_net_schedule};
    use crate::nodesched::schedule_node;
    use crate::scenario::{parse_scenario, validate};

    fn us(v: i64) -> Time {
        Time::from_us(v)
    }

    fn uc1() -> Scenario {
        parse_scenario(include_str!("../../../fixtures/uc1.fog")).unwrap()
    }

    fn before_map(s: &Scenario, ns: &NetSchedule) -> BTreeMap<String, Time> {
        s.streams
            .iter()
            .map(|st| (st.id.clone(), ns.per_stream[&st.id].ed))
            .collect()
    }

    #[test]
    fn disclosure_wait_example() {
        let cfg = TeslaConfig::default();
        // sent at an interval boundary, 60 us in flight
        assert_eq!(secured_delay(us(0), us(0), us(60), &cfg), us(2050));
        let later = TeslaConfig {
            disclosure_delay: 2,
            ..cfg.clone()
        };
        assert_eq!(secured_delay(us(0), us(0), us(60), &later), us(3050));
        let none = TeslaConfig {
            disclosure_delay: 0,
            verify_wcet: Time::ZERO,
            ..cfg
        };
        assert_eq!(secured_delay(us(0), us(0), us(60), &none), us(60));
    }

    #[test]
    fn uc1_overlay() {
        let s = uc1();
        let ns = synthesize_gcl(&s).unwrap();
        let secured = apply_tesla(&s, &ns, &TeslaConfig::default()).unwrap();
        assert_eq!(secured.overlay.streams.len(), 10);
        assert_eq!(secured.overlay.tasks.len(), 20);
        for st in &secured.overlay.streams {
            let n = secured
                .overlay
                .tasks
                .iter()
                .filter(|t| t.stream == st.id)
                .count();
            assert_eq!(n, 2);
            assert_eq!(st.size_after, st.size_before + 32);
        }
        assert!(
            validate(&secured.scenario).is_empty(),
            "{}",
            validate(&secured.scenario)
        );
        // security apps are scheduled like any other and keep isolation
        for node in &secured.scenario.nodes {
            let sched = schedule_node(&secured.scenario, &node.id).unwrap();
            assert!(crate::nodesched::verify_node_schedule(&sched).is_clean());
        }

        let ns2 = synthesize_gcl(&secured.scenario).unwrap();
        assert!(verify_net_schedule(&ns2, &secured.scenario).is_clean());
        let after = secured_eds(&secured.scenario, &ns2, &TeslaConfig::default()).unwrap();
        let report = tesla_overhead_report(&before_map(&s, &ns), &after).unwrap();
        let cfg = TeslaConfig::default();
        let bound = cfg.key_interval * 2 + cfg.verify_wcet;
        for row in &report.streams {
            assert!(row.ed_after_us >= row.ed_before_us, "{row:?}");
            assert!(row.delta_us < bound, "{row:?}");
        }
    }

    #[test]
    fn frames_can_stay_unchanged() {
        let s = uc1();
        let ns = synthesize_gcl(&s).unwrap();
        let cfg = TeslaConfig {
            grow_frames: false,
            ..TeslaConfig::default()
        };
        let secured = apply_tesla(&s, &ns, &cfg).unwrap();
        for (a, b) in s.streams.iter().zip(&secured.scenario.streams) {
            assert_eq!(a.size_bytes, b.size_bytes);
        }
        // same frames, same schedule: the delta is pure waiting plus verification
        let ns2 = synthesize_gcl(&secured.scenario).unwrap();
        assert_eq!(ns2.offsets, ns.offsets);
    }

    #[test]
    fn confidential_subset() {
        let s = uc1();
        let ns = synthesize_gcl(&s).unwrap();
        let only = TeslaConfig {
            confidential: Some(["S1 data".to_string()].into()),
            ..TeslaConfig::default()
        };
        let secured = apply_tesla(&s, &ns, &only).unwrap();
        assert_eq!(secured.overlay.tasks.len(), 2);
        assert_eq!(secured.scenario.stream("S2 data").unwrap().size_bytes, 850);
    }

    #[test]
    fn full_node_rejects_security_tasks() {
        let s = parse_scenario(
            "node A { cores 1 } node B { cores 1 } switch W\n\
             link A -> W link W -> B\n\
             stream x { src A dst B size 100B period 10ms criticality 1 route A,W,B }\n\
             app full on A { level 1 tasks 1 period 10ms util 1.0 }\n",
        )
        .unwrap();
        let ns = synthesize_gcl(&s).unwrap();
        let err = apply_tesla(&s, &ns, &TeslaConfig::default()).unwrap_err();
        assert!(
            matches!(err, TeslaError::TaskPlacementInfeasible { ref node, .. } if node == "A"),
            "{err}"
        );
    }

    #[test]
    fn bad_config() {
        let s = uc1();
        let ns = synthesize_gcl(&s).unwrap();
        let zero = TeslaConfig {
            key_interval: Time::ZERO,
            ..TeslaConfig::default()
        };
        assert!(matches!(
            apply_tesla(&s, &ns, &zero),
            Err(TeslaError::InvalidConfig(_))
        ));
        let d0 = TeslaConfig {
            disclosure_delay: 0,
            ..TeslaConfig::default()
        };
        assert!(matches!(
            apply_tesla(&s, &ns, &d0),
            Err(TeslaError::InvalidConfig(_))
        ));
    }

    #[test]
    fn overhead_report_cases() {
        let m: BTreeMap<String, Time> =
            [("a".to_string(), us(10)), ("b".to_string(), us(20))].into();
        let same = tesla_overhead_report(&m, &m).unwrap();
        assert!(same.streams.iter().all(|r| r.delta_us == Time::ZERO));
        assert_eq!(same.avg_delta_us, 0.0);
        let mut short = m.clone();
        short.remove("b");
        assert_eq!(
            tesla_overhead_report(&m, &short).unwrap_err(),
            TeslaError::MismatchedStreams(vec!["b".into()])
        );
    }

    #[test]
    fn published_table_mean_delta() {
        let rows = [
            ("S1 data", 60, 1241),
            ("S2 data", 72, 1481),
            ("S3 data", 52, 1111),
            ("S4 data", 80, 2407),
            ("S5 data", 44, 921),
            ("m2 state", 152, 1911),
            ("E5 data", 254, 2389),
            ("S6 data", 200, 3091),
            ("E4 data", 260, 1751),
            ("m2 set", 144, 2221),
        ];
        let before = rows
            .iter()
            .map(|&(id, b, _)| (id.to_string(), us(b)))
            .collect();
        let after = rows
            .iter()
            .map(|&(id, _, a)| (id.to_string(), us(a)))
            .collect();
        let r = tesla_overhead_report(&before, &after).unwrap();
        // independent: 17206 / 10
        let sum: i64 = rows.iter().map(|&(_, b, a)| a - b).sum();
        assert_eq!(sum, 17206);
        assert!((r.avg_delta_us - 1720.6).abs() < 1e-9);
        assert!((r.avg_delta_us - 1723.0).abs() <= 3.0);
    }

    proptest::proptest! {
        #[test]
        fn wait_model_bounds(
            send in 0i64..100_000, flight in 1i64..5_000, interval in 1i64..5_000, d in 1u32..4, verify in 0i64..200
        ) {
            let cfg = TeslaConfig {
                key_interval: Time::from_ticks(interval * 10),
                disclosure_delay: d,
                verify_wcet: Time::from_ticks(verify),
                ..TeslaConfig::default()
            };
            let (release, send) = (Time::ZERO, Time::from_ticks(send));
            let recv = send + Time::from_ticks(flight);
            let before = recv - release;
            let after = secured_delay(release, send, recv, &cfg);
            proptest::prop_assert!(after >= before);
            proptest::prop_assert!(after - before < cfg.key_interval * (d as i64 + 1) + cfg.verify_wcet);
            let next = TeslaConfig { disclosure_delay: d + 1, ..cfg.clone() };
            let more = secured_delay(release, send, recv, &next);
            if after - before > cfg.verify_wcet {
                proptest::prop_assert_eq!(more - after, cfg.key_interval);
            }
        }
    }
}
