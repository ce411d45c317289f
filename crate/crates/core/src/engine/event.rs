//! Discrete-event timing model of the grid.
//!
//! Operands are injected on the two entry faces with a skew of one cycle per
//! row (A) or column (B) and of `l_dot` cycles per layer, then move one
//! register hop per cycle. A dot unit fires once its A pair, its B pair and
//! the partial sum from the layer below are all present, and hands its
//! result up after `l_dot` cycles. Results of the top layer leave through one
//! more register.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use crate::engine::TimingReport;
use crate::error::{Error, Result};
use crate::model::{ArchShape, LatencyProfile};

const MAX_TRACE_DIM: usize = 8;

const HAS_A: u8 = 1;
const HAS_B: u8 = 2;
const HAS_PSUM: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    ArriveA,
    ArriveB,
    PsumReady,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: u64,
    seq: u64,
    kind: Kind,
    i: usize,
    j: usize,
    layer: usize,
    iter: usize,
}

/// One dot-unit activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub i: usize,
    pub j: usize,
    pub layer: usize,
    pub iteration: usize,
}

struct Sim {
    shape: ArchShape,
    hop: u64,
    l_dot: u64,
    layers: usize,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    ready: HashMap<(usize, usize, usize, usize), u8>,
    completion: Vec<u64>,
    fill: Option<u64>,
    trace: Option<Vec<TraceEvent>>,
}

impl Sim {
    fn push(&mut self, time: u64, kind: Kind, i: usize, j: usize, layer: usize, iter: usize) {
        self.seq += 1;
        self.queue.push(Reverse(Event { time, seq: self.seq, kind, i, j, layer, iter }));
    }

    fn mark(&mut self, ev: &Event, flag: u8) {
        let key = (ev.i, ev.j, ev.layer, ev.iter);
        let flags = self.ready.entry(key).or_insert(if ev.layer == 0 { HAS_PSUM } else { 0 });
        *flags |= flag;
        if *flags == HAS_A | HAS_B | HAS_PSUM {
            self.ready.remove(&key);
            self.fire(ev);
        }
    }

    fn fire(&mut self, ev: &Event) {
        let t = ev.time;
        let ArchShape { d0_i, d0_j, .. } = self.shape;
        if ev.iter == 0 && ev.layer == 0 && ev.i == d0_i - 1 && ev.j == d0_j - 1 {
            self.fill = Some(t);
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent { cycle: t, i: ev.i, j: ev.j, layer: ev.layer, iteration: ev.iter });
        }
        let done = t + self.l_dot;
        if ev.layer + 1 < self.layers {
            self.push(done, Kind::PsumReady, ev.i, ev.j, ev.layer + 1, ev.iter);
        } else {
            self.push(done + self.hop, Kind::Exit, ev.i, ev.j, ev.layer, ev.iter);
        }
    }

    fn run(&mut self) {
        while let Some(Reverse(ev)) = self.queue.pop() {
            match ev.kind {
                Kind::ArriveA => {
                    if ev.j + 1 < self.shape.d0_j {
                        self.push(ev.time + self.hop, Kind::ArriveA, ev.i, ev.j + 1, ev.layer, ev.iter);
                    }
                    self.mark(&ev, HAS_A);
                }
                Kind::ArriveB => {
                    if ev.i + 1 < self.shape.d0_i {
                        self.push(ev.time + self.hop, Kind::ArriveB, ev.i + 1, ev.j, ev.layer, ev.iter);
                    }
                    self.mark(&ev, HAS_B);
                }
                Kind::PsumReady => self.mark(&ev, HAS_PSUM),
                Kind::Exit => {
                    let c = &mut self.completion[ev.iter];
                    *c = (*c).max(ev.time);
                }
            }
        }
    }
}

fn simulate(
    shape: &ArchShape,
    k: usize,
    lat: &LatencyProfile,
    trace: bool,
) -> Result<(TimingReport, Option<Vec<TraceEvent>>)> {
    shape.validate()?;
    lat.validate()?;
    if k == 0 || !k.is_multiple_of(shape.d0_k) {
        return Err(Error::DimensionMismatch(format!(
            "K = {k} is not a positive multiple of d0_k = {}",
            shape.d0_k
        )));
    }
    let iterations = k / shape.d0_k;
    let mut sim = Sim {
        shape: *shape,
        hop: lat.register_hop as u64,
        l_dot: lat.l_dot(shape.d_p) as u64,
        layers: shape.layers(),
        queue: BinaryHeap::new(),
        seq: 0,
        ready: HashMap::new(),
        completion: vec![0; iterations],
        fill: None,
        trace: trace.then(Vec::new),
    };
    for iter in 0..iterations {
        for layer in 0..sim.layers {
            let skew = iter as u64 + layer as u64 * sim.l_dot;
            for i in 0..shape.d0_i {
                sim.push(skew + i as u64 + sim.hop, Kind::ArriveA, i, 0, layer, iter);
            }
            for j in 0..shape.d0_j {
                sim.push(skew + j as u64 + sim.hop, Kind::ArriveB, 0, j, layer, iter);
            }
        }
    }
    sim.run();
    debug_assert!(sim.ready.is_empty());

    let l_tot = sim.completion.iter().copied().max().unwrap_or(0);
    let report = TimingReport {
        l_body: sim.completion[0] - sim.hop,
        l_tot,
        fill: sim.fill.unwrap_or(0),
        iterations: iterations as u64,
    };
    Ok((report, sim.trace))
}

/// Timing measured by the discrete-event model.
pub fn event_sim_timing(shape: &ArchShape, k: usize, lat: &LatencyProfile) -> Result<TimingReport> {
    simulate(shape, k, lat, false).map(|(r, _)| r)
}

/// Every dot-unit activation in time order. Limited to grids with at most 8
/// PEs along each axis.
pub fn event_sim_trace(
    shape: &ArchShape,
    k: usize,
    lat: &LatencyProfile,
) -> Result<Vec<TraceEvent>> {
    if shape.d0_i > MAX_TRACE_DIM || shape.d0_j > MAX_TRACE_DIM || shape.layers() > MAX_TRACE_DIM {
        return Err(Error::InvalidShape(format!(
            "tracing is limited to grids of at most {MAX_TRACE_DIM}^3 PEs, got {shape}"
        )));
    }
    let (_, trace) = simulate(shape, k, lat, true)?;
    Ok(trace.unwrap_or_default())
}

/// Writes `cycle,i,j,layer,iteration` rows.
pub fn write_trace_csv<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<()> {
    writeln!(w, "cycle,i,j,layer,iteration")?;
    for e in events {
        writeln!(w, "{},{},{},{},{}", e.cycle, e.i, e.j, e.layer, e.iteration)?;
    }
    Ok(())
}
