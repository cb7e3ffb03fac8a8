//! Constant-bit-rate flows between randomly chosen vehicle pairs.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::kernel::RandomStream;
use crate::packet::NodeId;
use crate::time::SimTime;

/// Flow starts are spread over this window so sources do not fire in lockstep.
pub const STAGGER: SimTime = SimTime::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    /// Application payload bytes.
    pub size: u32,
    pub interval: SimTime,
    pub start: SimTime,
    /// Exclusive.
    pub stop: SimTime,
}

impl Flow {
    /// Time of the first packet, or `None` if the flow never sends.
    pub fn first_send(&self) -> Option<SimTime> {
        (self.start < self.stop).then_some(self.start)
    }

    /// The send following one at `t`, if it still falls before `stop`.
    pub fn next_send(&self, t: SimTime) -> Option<SimTime> {
        let next = t + self.interval;
        (next < self.stop).then_some(next)
    }

    /// Packets the flow will originate: sends at `start + k * interval`
    /// strictly before `stop`.
    pub fn packet_count(&self) -> u64 {
        let span = self.stop.saturating_sub(self.start).as_micros();
        span.div_ceil(self.interval.as_micros())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrafficError {
    #[error("{connections} connections requested but only {possible} ordered pairs exist among {nodes} nodes")]
    Infeasible { connections: usize, nodes: usize, possible: usize },
    #[error("packet interval must be positive")]
    ZeroInterval,
    #[error("traffic start {start} is not before stop {stop}")]
    EmptyWindow { start: SimTime, stop: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficSpec {
    pub connections: usize,
    pub size: u32,
    pub interval: SimTime,
    pub start: SimTime,
    pub stop: SimTime,
}

/// Draws `connections` distinct ordered pairs uniformly without replacement
/// and staggers each flow's start over `[start, start + 1 s]`.
pub fn build_flows(nodes: usize, spec: &TrafficSpec, rng: &mut RandomStream) -> Result<Vec<Flow>, TrafficError> {
    if spec.interval == SimTime::ZERO {
        return Err(TrafficError::ZeroInterval);
    }
    if spec.start >= spec.stop {
        return Err(TrafficError::EmptyWindow { start: spec.start, stop: spec.stop });
    }
    let possible = nodes.saturating_mul(nodes.saturating_sub(1));
    if spec.connections > possible {
        return Err(TrafficError::Infeasible { connections: spec.connections, nodes, possible });
    }
    if spec.connections == 0 {
        return Ok(Vec::new());
    }
    // Never let the stagger push a flow past its own stop.
    let window = STAGGER.min(spec.stop - spec.start - SimTime::from_micros(1)).as_micros();
    let picks = index::sample(rng, possible, spec.connections);
    let flows = picks
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let src = pair / (nodes - 1);
            let d = pair % (nodes - 1);
            let dst = if d < src { d } else { d + 1 };
            let offset = SimTime::from_micros(rng.gen_range(0..=window));
            Flow {
                id: i as u32,
                src: src as NodeId,
                dst: dst as NodeId,
                size: spec.size,
                interval: spec.interval,
                start: spec.start + offset,
                stop: spec.stop,
            }
        })
        .collect();
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Purpose, StreamId};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn spec(connections: usize) -> TrafficSpec {
        TrafficSpec {
            connections,
            size: 512,
            interval: SimTime::from_millis(250),
            start: SimTime::from_secs(10),
            stop: SimTime::from_secs(40),
        }
    }

    fn rng(seed: u64) -> RandomStream {
        RandomStream::new(seed, StreamId::global(Purpose::Traffic))
    }

    fn sends(f: &Flow) -> Vec<SimTime> {
        let mut out = Vec::new();
        let mut t = f.first_send();
        while let Some(now) = t {
            out.push(now);
            t = f.next_send(now);
        }
        out
    }

    #[test]
    fn eleven_nodes_eight_pairs() {
        let flows = build_flows(11, &spec(8), &mut rng(1)).unwrap();
        assert_eq!(flows.len(), 8);
        let pairs: HashSet<_> = flows.iter().map(|f| (f.src, f.dst)).collect();
        assert_eq!(pairs.len(), 8);
    }

    #[test]
    fn two_nodes_single_pair() {
        let flows = build_flows(2, &spec(1), &mut rng(3)).unwrap();
        assert_eq!(flows.len(), 1);
        assert_ne!(flows[0].src, flows[0].dst);
        assert!(build_flows(2, &spec(3), &mut rng(3)).is_err());
    }

    #[test]
    fn zero_connections_is_empty() {
        assert!(build_flows(5, &spec(0), &mut rng(1)).unwrap().is_empty());
        assert!(build_flows(0, &spec(0), &mut rng(1)).unwrap().is_empty());
    }

    #[test]
    fn quarter_second_over_thirty_seconds() {
        let f = flow_window(10, 40);
        let times = sends(&f);
        assert_eq!(times.len(), 120);
        assert_eq!(f.packet_count(), 120);
        assert_eq!(times[0], SimTime::from_secs(10));
        assert_eq!(*times.last().unwrap(), SimTime::from_millis(39_750));
    }

    fn flow_window(start: u64, stop: u64) -> Flow {
        Flow {
            id: 0,
            src: 0,
            dst: 1,
            size: 512,
            interval: SimTime::from_millis(250),
            start: SimTime::from_secs(start),
            stop: SimTime::from_secs(stop),
        }
    }

    #[test]
    fn short_window_sends_once() {
        let mut f = flow_window(10, 40);
        f.stop = f.start + SimTime::from_millis(100);
        assert_eq!(sends(&f), vec![f.start]);
    }

    proptest! {
        #[test]
        fn pairs_are_valid_and_starts_staggered(n in 2usize..40, c in 0usize..60, seed in any::<u64>()) {
            let c = c.min(n * (n - 1));
            let flows = build_flows(n, &spec(c), &mut rng(seed)).unwrap();
            prop_assert_eq!(flows.len(), c);
            let pairs: HashSet<_> = flows.iter().map(|f| (f.src, f.dst)).collect();
            prop_assert_eq!(pairs.len(), c);
            for f in &flows {
                prop_assert!(f.src != f.dst && (f.src as usize) < n && (f.dst as usize) < n);
                prop_assert!(f.start >= SimTime::from_secs(10) && f.start <= SimTime::from_secs(11));
                prop_assert_eq!(sends(f).len() as u64, f.packet_count());
            }
        }
    }
}
