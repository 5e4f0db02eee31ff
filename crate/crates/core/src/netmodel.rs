//! Route resolution and the contention-free delay bound.
//!
//! Switches forward cut-through: a frame starts leaving a switch `d_hop`
//! after it started arriving, so a frame of transmission time `C` crossing
//! `h` links arrives `C + h·d_hop` after its first bit left the source.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{ModelParams, Scenario, StreamSpec};
use crate::time::Time;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("stream `{stream}`: no link {from}->{to}")]
    NoSuchLink {
        stream: String,
        from: String,
        to: String,
    },
    #[error("stream `{stream}`: route has fewer than two entities")]
    EmptyRoute { stream: String },
}

/// The link sequence a stream traverses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Route {
    /// Indices into `Scenario::links`, in traversal order.
    pub links: Vec<usize>,
    /// Slowest rate along the route; every hop's window uses it.
    pub bottleneck_bps: u64,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

pub fn resolve_route(s: &Scenario, st: &StreamSpec) -> Result<Route, NetError> {
    if st.route.len() < 2 {
        return Err(NetError::EmptyRoute {
            stream: st.id.clone(),
        });
    }
    let mut links = Vec::with_capacity(st.route.len() - 1);
    let mut bottleneck = u64::MAX;
    for pair in st.route.windows(2) {
        let idx = s
            .links
            .iter()
            .position(|l| l.from == pair[0] && l.to == pair[1])
            .ok_or_else(|| NetError::NoSuchLink {
                stream: st.id.clone(),
                from: pair[0].clone(),
                to: pair[1].clone(),
            })?;
        bottleneck = bottleneck.min(s.links[idx].rate_bps);
        links.push(idx);
    }
    Ok(Route {
        links,
        bottleneck_bps: bottleneck,
    })
}

/// Serialization time of `size_bytes` at `rate_bps`, rounded up to 0.1 μs.
pub fn transmission_time(size_bytes: u32, rate_bps: u64) -> Time {
    assert!(rate_bps > 0, "link rate must be positive");
    // ticks = bits / rate * 1e7
    let num = size_bytes as u128 * 8 * 10_000_000;
    let rate = rate_bps as u128;
    Time::from_ticks(num.div_ceil(rate) as i64)
}

/// Delay of a stream that never waits: `C_s + h·d_hop`.
pub fn lower_bound_delay(st: &StreamSpec, r: &Route, p: &ModelParams) -> Time {
    transmission_time(st.size_bytes, r.bottleneck_bps) + p.d_hop * r.hops() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    const MBPS_100: u64 = 100_000_000;

    fn uc1() -> Scenario {
        parse_scenario(include_str!("../../../fixtures/uc1.fog")).unwrap()
    }

    #[test]
    fn transmission_examples() {
        assert_eq!(transmission_time(700, MBPS_100), Time::from_us(56));
        assert_eq!(transmission_time(500, MBPS_100), Time::from_us(40));
        assert_eq!(transmission_time(920, MBPS_100), Time::from_ticks(736));
        // 1 byte at 3 bps = 2.666.. s, rounded up
        assert_eq!(transmission_time(1, 3), Time::from_ticks(26_666_667));
    }

    #[test]
    fn uc1_routes() {
        let s = uc1();
        let s1 = s.stream("S1 data").unwrap();
        let r = resolve_route(&s, s1).unwrap();
        assert_eq!(r.hops(), 2);
        assert_eq!(s.links[r.links[0]].port_name(), "S1->W1");
        assert_eq!(s.links[r.links[1]].port_name(), "W1->E1");

        let scada = s.stream("E5 data").unwrap();
        assert_eq!(resolve_route(&s, scada).unwrap().hops(), 3);
    }

    #[test]
    fn missing_link() {
        let mut s = uc1();
        s.streams[0].route = vec!["S1".into(), "W2".into(), "E1".into()];
        let err = resolve_route(&s, &s.streams[0]).unwrap_err();
        assert_eq!(
            err,
            NetError::NoSuchLink {
                stream: "S1 data".into(),
                from: "S1".into(),
                to: "W2".into()
            }
        );
    }

    #[test]
    fn lower_bounds_match_contention_free_rows() {
        let s = uc1();
        let expect = [
            ("S1 data", 600),
            ("S2 data", 720),
            ("S3 data", 520),
            ("S4 data", 800),
            ("S5 data", 440),
            ("E5 data", 796),
        ];
        for (id, ticks) in expect {
            let st = s.stream(id).unwrap();
            let r = resolve_route(&s, st).unwrap();
            assert_eq!(
                lower_bound_delay(st, &r, &s.params),
                Time::from_ticks(ticks),
                "{id}"
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn bound_monotone_in_size_and_hops(size in 1u32..1500, extra in 1u32..100, hops in 1usize..6) {
            let p = ModelParams::default();
            let mut st = StreamSpec {
                id: "s".into(), src: "a".into(), dst: "b".into(), size_bytes: size,
                period: Time::from_ms(10), deadline: Time::from_ms(10), criticality: 0, route: vec![],
            };
            let r = Route { links: vec![0; hops], bottleneck_bps: MBPS_100 };
            let longer = Route { links: vec![0; hops + 1], bottleneck_bps: MBPS_100 };
            let base = lower_bound_delay(&st, &r, &p);
            proptest::prop_assert!(lower_bound_delay(&st, &longer, &p) > base);
            st.size_bytes = (size + extra).min(1500);
            proptest::prop_assert!(lower_bound_delay(&st, &r, &p) >= base);
        }
    }
}
