mod common;

use common::*;
use vrl_core::routing::ProtocolKind;

#[test]
fn bfs_oracle_sanity() {
    let hops = bfs_hops(&line(5, 200.0), RANGE);
    assert_eq!(hops[0][4], Some(4));
    let grid = bfs_hops(&lattice(3, 200.0), RANGE);
    assert_eq!(grid[0][8], Some(4));
    assert_eq!(grid[0][4], Some(2));
    assert_eq!(bfs_hops(&line(2, 300.0), RANGE)[0][1], None);
}

#[test]
fn random_topologies_are_connected_and_reproducible() {
    for seed in 1..=3 {
        let a = random_connected(10, 600.0, seed);
        assert_eq!(a, random_connected(10, 600.0, seed));
        assert!(bfs_hops(&a, RANGE).iter().flatten().all(Option::is_some));
    }
}

#[test]
fn every_protocol_picks_shortest_paths() {
    let mut failures = Vec::new();
    for (name, pts) in oracle_topologies() {
        for kind in ProtocolKind::ALL {
            let (checked, bad) = shortest_path_mismatches(kind, &pts);
            assert_eq!(checked, pts.len() * (pts.len() - 1));
            if !bad.is_empty() {
                failures.push(format!("{kind} on {name}: {bad:?}"));
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn delivered_packets_never_revisit_a_node() {
    for seed in 1..=2 {
        for kind in ProtocolKind::ALL {
            let records = simulate_records(&mobile_grid_config(kind, seed));
            let (delivered, looping) = loop_check(&records);
            assert!(delivered > 0, "{kind} s{seed} delivered nothing");
            assert!(looping.is_empty(), "{kind} s{seed}: {:?}", &looping[..looping.len().min(3)]);
        }
    }
}

#[test]
fn loop_checker_flags_repeats() {
    use vrl_core::routing::Layer;
    use vrl_core::packet::PacketKind;
    use vrl_core::time::SimTime;
    use vrl_core::trace::{TraceEvent, TraceRecord};
    let rec = |event, node, layer| TraceRecord {
        event,
        time: SimTime::from_secs(1),
        node,
        layer,
        packet: 7,
        kind: PacketKind::Data,
        size: 512,
        reason: None,
        flow: Some((0, 3)),
    };
    let trace = [
        rec(TraceEvent::Sent, 0, Layer::App),
        rec(TraceEvent::Forwarded, 1, Layer::Rtr),
        rec(TraceEvent::Forwarded, 2, Layer::Rtr),
        rec(TraceEvent::Forwarded, 1, Layer::Rtr),
        rec(TraceEvent::Received, 3, Layer::App),
    ];
    let (delivered, looping) = loop_check(&trace);
    assert_eq!(delivered, 1);
    assert_eq!(looping, vec![(7, vec![0, 1, 2, 1, 3])]);
}

#[test]
fn static_in_range_delivery_is_reliable_and_fast() {
    for kind in ProtocolKind::ALL {
        let s = static_delivery(kind);
        assert!(s.sent > 400, "{kind}: {s:?}");
        assert!(s.pdr >= 99.0, "{kind}: {s:?}");
        assert!(s.e2e_ms < 10.0, "{kind}: {s:?}");
    }
}
