use fogweaver::scenario::{
    parse_scenario, print_scenario, validate, ApplicationSpec, EndpointKind, EndpointSpec,
    FogNodeSpec, LinkSpec, ModelParams, Scenario, StreamSpec, SwitchSpec, TaskSpec,
};
use fogweaver::Time;
use proptest::prelude::*;

fn ticks() -> impl Strategy<Value = Time> {
    (1i64..5_000_000).prop_map(Time::from_ticks)
}

fn rate() -> impl Strategy<Value = u64> {
    prop_oneof![
        (1u64..10).prop_map(|g| g * 1_000_000_000),
        (1u64..5000).prop_map(|m| m * 1_000_000),
        1u64..10_000_000
    ]
}

fn label() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 _.-]{0,12}".prop_map(|s| s.trim_end().to_string())
}

fn task() -> impl Strategy<Value = TaskSpec> {
    (label(), 0.1f64..100_000.0, ticks(), ticks()).prop_map(|(id, wcet_us, period, deadline)| {
        TaskSpec {
            id,
            wcet_us,
            period,
            deadline,
        }
    })
}

fn scenario() -> impl Strategy<Value = Scenario> {
    let params = (
        ticks(),
        rate(),
        any::<u64>(),
        1.0f64..100.0,
        1u64..1_000_000,
    )
        .prop_map(
            |(d_hop, default_link_rate_bps, solver_seed, weight_base, node_budget)| ModelParams {
                d_hop,
                default_link_rate_bps,
                solver_seed,
                weight_base,
                node_budget,
            },
        );
    let nodes = prop::collection::vec((1u32..16, 1u8..=3), 1..4);
    let endpoints = prop::collection::vec(any::<bool>(), 1..4);
    (params, nodes, endpoints, 0usize..3)
        .prop_flat_map(|(params, nodes, endpoints, switches)| {
            let nodes: Vec<FogNodeSpec> = nodes
                .into_iter()
                .enumerate()
                .map(|(i, (cores, class))| FogNodeSpec {
                    id: format!("E{i}"),
                    cores,
                    class,
                })
                .collect();
            let endpoints: Vec<EndpointSpec> = endpoints
                .into_iter()
                .enumerate()
                .map(|(i, s)| EndpointSpec {
                    id: format!("S{i}"),
                    kind: if s {
                        EndpointKind::Sensor
                    } else {
                        EndpointKind::Actuator
                    },
                })
                .collect();
            let switches: Vec<SwitchSpec> = (0..switches)
                .map(|i| SwitchSpec {
                    id: format!("W{i}"),
                })
                .collect();
            let names: Vec<String> = nodes
                .iter()
                .map(|n| n.id.clone())
                .chain(endpoints.iter().map(|e| e.id.clone()))
                .chain(switches.iter().map(|w| w.id.clone()))
                .collect();
            let n = names.len();
            let links = prop::collection::vec((0..n, 0..n, rate()), 0..6);
            let streams = prop::collection::vec(
                (
                    label(),
                    0..n,
                    0..n,
                    1u32..1500,
                    ticks(),
                    ticks(),
                    0u8..=4,
                    prop::collection::vec(0..n, 0..3),
                ),
                0..4,
            );
            let apps = prop::collection::vec(
                (
                    label(),
                    0..nodes.len(),
                    0u8..=4,
                    1u32..8,
                    ticks(),
                    0.01f64..=1.0,
                    prop::collection::vec(task(), 0..3),
                ),
                0..4,
            );
            (
                Just((params, nodes, endpoints, switches, names)),
                links,
                streams,
                apps,
            )
        })
        .prop_map(
            |((params, nodes, endpoints, switches, names), links, streams, apps)| {
                let links = links
                    .into_iter()
                    .map(|(a, b, rate_bps)| LinkSpec {
                        from: names[a].clone(),
                        to: names[b].clone(),
                        rate_bps,
                    })
                    .collect();
                let streams = streams
                    .into_iter()
                    .enumerate()
                    .map(
                        |(i, (id, src, dst, size_bytes, period, deadline, criticality, via))| {
                            let mut route = vec![names[src].clone()];
                            route.extend(via.into_iter().map(|v| names[v].clone()));
                            route.push(names[dst].clone());
                            StreamSpec {
                                id: format!("{id}{i}"),
                                src: names[src].clone(),
                                dst: names[dst].clone(),
                                size_bytes,
                                period,
                                deadline,
                                criticality,
                                route,
                            }
                        },
                    )
                    .collect();
                let applications = apps
                    .into_iter()
                    .enumerate()
                    .map(
                        |(i, (id, node, level, task_count, period, utilization, tasks))| {
                            ApplicationSpec {
                                id: format!("{id}{i}"),
                                node: nodes[node].id.clone(),
                                level,
                                task_count,
                                period,
                                utilization,
                                tasks,
                            }
                        },
                    )
                    .collect();
                Scenario {
                    nodes,
                    switches,
                    endpoints,
                    links,
                    streams,
                    applications,
                    params,
                }
            },
        )
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(s in scenario()) {
        let text = print_scenario(&s);
        let back = parse_scenario(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, s);
    }
}

#[test]
fn uc1_round_trips_and_validates() {
    let s = parse_scenario(include_str!("../../../fixtures/uc1.fog")).unwrap();
    assert!(validate(&s).is_empty(), "{}", validate(&s));
    assert_eq!(parse_scenario(&print_scenario(&s)).unwrap(), s);
}
