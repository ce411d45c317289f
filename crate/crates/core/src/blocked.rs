//! Two-level blocked off-chip multiplication under the four-phase schedule.
//!
//! For every first-level block of C the runner
//!
//! 1. reads the first k-panels of A and B into the mapped memories and fills
//!    the FIFO system with zeros,
//! 2. for each following panel, streams panel `k + 1` in while the grid
//!    consumes panel `k` (one iteration reads `b_gA` + `b_gB` floats and
//!    computes one `d0_i x d0_j` sub-block),
//! 3. computes the last panel,
//! 4. drains the FIFOs to global memory.
//!
//! Fidelity is per pipeline iteration: the fill latency between phases is not
//! charged, matching the closed-form compute fraction. Arithmetic goes
//! through [`GridState`], so the product is bit-identical to
//! [`oracle_matmul`](crate::matrix::oracle_matmul).

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::GridState;
use crate::error::{Error, Result};
use crate::matrix::{Layout, Matrix};
use crate::model::{
    ddr_floats_per_cycle, validate_problem, ArchShape, BlockingPlan, ClockSpec, MemorySpec,
    ProblemShape,
};
use crate::perf::stall_rate;

/// Counters of one blocked run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub it_read_init: u64,
    pub it_steady: u64,
    pub it_tail: u64,
    pub it_write: u64,
    pub it_comp: u64,
    pub it_tot: u64,
    pub elements_read_a: u64,
    pub elements_read_b: u64,
    pub elements_written_c: u64,
    pub measured_c: f64,
    pub cycles_total: u64,
    pub stall_cycles_read: u64,
    pub stall_cycles_write: u64,
    pub blocks: u64,
    pub max_mapped_a: u64,
    pub max_mapped_b: u64,
    pub max_fifo: u64,
}

impl SimStats {
    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("it_read_init", self.it_read_init.to_string()),
            ("it_steady", self.it_steady.to_string()),
            ("it_tail", self.it_tail.to_string()),
            ("it_write", self.it_write.to_string()),
            ("it_comp", self.it_comp.to_string()),
            ("it_tot", self.it_tot.to_string()),
            ("elements_read_a", self.elements_read_a.to_string()),
            ("elements_read_b", self.elements_read_b.to_string()),
            ("elements_written_c", self.elements_written_c.to_string()),
            ("measured_c", format!("{:.6}", self.measured_c)),
            ("cycles_total", self.cycles_total.to_string()),
            ("stall_cycles_read", self.stall_cycles_read.to_string()),
            ("stall_cycles_write", self.stall_cycles_write.to_string()),
            ("blocks", self.blocks.to_string()),
            ("max_mapped_a", self.max_mapped_a.to_string()),
            ("max_mapped_b", self.max_mapped_b.to_string()),
            ("max_fifo", self.max_fifo.to_string()),
        ]
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        self.fields().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn csv_header() -> String {
        SimStats::default().fields().into_iter().map(|(k, _)| k).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.fields().into_iter().map(|(_, v)| v).collect::<Vec<_>>().join(",")
    }
}

/// A traffic counter that does not match the reuse identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficViolation {
    pub counter: String,
    pub expected: u64,
    pub actual: u64,
}

impl fmt::Display for TrafficViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected {}, counted {}", self.counter, self.expected, self.actual)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamCounters {
    pub elements: u64,
    pub stall_cycles: f64,
}

/// Global memory seen by the three streams (A and B reads, C writes).
#[derive(Debug, Clone)]
pub struct GlobalMemModel {
    pub mem: MemorySpec,
    pub clock: ClockSpec,
    pub tier: usize,
    pub read_a: StreamCounters,
    pub read_b: StreamCounters,
    pub write_c: StreamCounters,
    stall_a: f64,
    stall_b: f64,
}

impl GlobalMemModel {
    pub fn new(mem: MemorySpec, clock: ClockSpec, plan: &BlockingPlan) -> Result<Self> {
        let tier = ddr_floats_per_cycle(&clock)?;
        let stall_a = stall_rate(mem.lsu_bytes(plan.b_ga) as f64, &clock, &mem);
        let stall_b = stall_rate(mem.lsu_bytes(plan.b_gb) as f64, &clock, &mem);
        Ok(Self {
            mem,
            clock,
            tier,
            read_a: StreamCounters::default(),
            read_b: StreamCounters::default(),
            write_c: StreamCounters::default(),
            stall_a,
            stall_b,
        })
    }

    /// Stall rate of the slower read stream.
    pub fn read_stall(&self) -> f64 {
        self.stall_a.max(self.stall_b)
    }

    /// Charges `iterations` iterations that issue reads on both streams.
    fn charge_reads(&mut self, iterations: u64) {
        let extra = |s: f64| if s > 0.0 { iterations as f64 * s / (1.0 - s) } else { 0.0 };
        self.read_a.stall_cycles += extra(self.stall_a);
        self.read_b.stall_cycles += extra(self.stall_b);
    }
}

/// Double-buffered mapped memory for one operand: `partitions` banks of
/// `depth` words, holding up to two k-panels.
#[derive(Debug, Clone)]
struct MappedMemory {
    capacity: usize,
    slots: [Vec<f32>; 2],
    filled: [usize; 2],
    max_occupancy: usize,
}

impl MappedMemory {
    fn new(partitions: usize, depth: usize, panel: usize) -> Self {
        Self {
            capacity: partitions * depth,
            slots: [vec![0.0; panel], vec![0.0; panel]],
            filled: [0, 0],
            max_occupancy: 0,
        }
    }

    fn store(&mut self, slot: usize, idx: usize, v: f32) -> Result<()> {
        self.slots[slot][idx] = v;
        self.filled[slot] += 1;
        let occ = self.filled[0] + self.filled[1];
        if occ > self.capacity {
            return Err(Error::CapacityExceeded(format!(
                "mapped memory holds {occ} > {} elements",
                self.capacity
            )));
        }
        self.max_occupancy = self.max_occupancy.max(occ);
        Ok(())
    }

    fn is_full(&self, slot: usize) -> bool {
        self.filled[slot] == self.slots[slot].len()
    }

    fn release(&mut self, slot: usize) {
        self.filled[slot] = 0;
    }
}

/// `d0_i * d0_j` queues of depth `r_A * r_B` holding one C block.
#[derive(Debug, Clone)]
struct FifoSystem {
    queues: Vec<VecDeque<f32>>,
    depth: usize,
    occupancy: usize,
    max_occupancy: usize,
}

impl FifoSystem {
    fn new(count: usize, depth: usize) -> Self {
        Self {
            queues: vec![VecDeque::with_capacity(depth); count],
            depth,
            occupancy: 0,
            max_occupancy: 0,
        }
    }

    fn push(&mut self, q: usize, v: f32) -> Result<()> {
        if self.queues[q].len() == self.depth {
            return Err(Error::CapacityExceeded(format!("FIFO {q} is full at depth {}", self.depth)));
        }
        self.queues[q].push_back(v);
        self.occupancy += 1;
        self.max_occupancy = self.max_occupancy.max(self.occupancy);
        Ok(())
    }

    fn pop(&mut self, q: usize) -> f32 {
        self.occupancy -= 1;
        self.queues[q].pop_front().expect("FIFO underflow")
    }
}

/// On-chip memories: mapped A and B partitions and the C FIFO system.
#[derive(Debug, Clone)]
pub struct OnChipModel {
    mapped_a: MappedMemory,
    mapped_b: MappedMemory,
    fifos: FifoSystem,
}

impl OnChipModel {
    pub fn new(shape: &ArchShape, plan: &BlockingPlan) -> Self {
        let ArchShape { d0_i, d0_j, d0_k, .. } = *shape;
        Self {
            mapped_a: MappedMemory::new(d0_i * d0_k, 2 * plan.r_b, plan.d1_i * d0_k),
            mapped_b: MappedMemory::new(d0_j * d0_k, 2 * plan.r_a, plan.d1_j * d0_k),
            fifos: FifoSystem::new(d0_i * d0_j, plan.r_a * plan.r_b),
        }
    }

    pub fn mapped_a_capacity(&self) -> usize {
        self.mapped_a.capacity
    }

    pub fn mapped_b_capacity(&self) -> usize {
        self.mapped_b.capacity
    }

    pub fn fifo_capacity(&self) -> usize {
        self.fifos.queues.len() * self.fifos.depth
    }
}

/// Iteration multiplier of the write phase when the store width `d0_j`
/// exceeds what one LSU can push per cycle.
pub fn write_stall_factor(shape: &ArchShape, clock: &ClockSpec) -> Result<f64> {
    let tier = ddr_floats_per_cycle(clock)?;
    Ok((shape.d0_j as f64 / tier as f64).max(1.0))
}

/// Streams one k-panel from global memory, `width` elements per iteration.
struct PanelReader {
    next: usize,
    total: usize,
    width: usize,
}

impl PanelReader {
    fn new(total: usize, width: usize) -> Self {
        Self { next: total, total, width }
    }

    fn restart(&mut self) {
        self.next = 0;
    }

    /// Range of panel elements to read this iteration.
    fn step(&mut self) -> std::ops::Range<usize> {
        let start = self.next;
        self.next = (self.next + self.width).min(self.total);
        start..self.next
    }

    fn done(&self) -> bool {
        self.next == self.total
    }
}

struct Runner<'a> {
    a: &'a Matrix,
    b: &'a Matrix,
    shape: ArchShape,
    plan: BlockingPlan,
    problem: ProblemShape,
    grid: GridState,
    chip: OnChipModel,
    gmem: GlobalMemModel,
    reader_a: PanelReader,
    reader_b: PanelReader,
    c_buf: Vec<f32>,
}

impl Runner<'_> {
    /// One read iteration on both streams for panel `k` into buffer `slot`.
    fn read_step(&mut self, bi: usize, bj: usize, k: usize, slot: usize) -> Result<()> {
        let ArchShape { d0_k, d0_j, .. } = self.shape;
        let (d1_i, d1_j) = (self.plan.d1_i, self.plan.d1_j);
        let a_data = self.a.as_slice();
        for e in self.reader_a.step() {
            // column-major panel: d0_k columns of d1_i contiguous rows
            let (kk, r) = (e / d1_i, e % d1_i);
            let off = (k * d0_k + kk) * self.problem.d2_i + bi * d1_i + r;
            self.chip.mapped_a.store(slot, r * d0_k + kk, a_data[off])?;
            self.gmem.read_a.elements += 1;
        }
        let b_data = self.b.as_slice();
        for e in self.reader_b.step() {
            let (kk, c) = (e / d1_j, e % d1_j);
            let off = (k * d0_k + kk) * self.problem.d2_j + bj * d1_j + c;
            let (jj, j0) = (c / d0_j, c % d0_j);
            self.chip.mapped_b.store(slot, jj * d0_k * d0_j + kk * d0_j + j0, b_data[off])?;
            self.gmem.read_b.elements += 1;
        }
        Ok(())
    }

    /// One compute iteration: sub-block `s` of the outer product from `slot`.
    fn compute_step(&mut self, s: usize, slot: usize) -> Result<()> {
        let ArchShape { d0_i, d0_j, d0_k, .. } = self.shape;
        let (ii, jj) = (s / self.plan.r_a, s % self.plan.r_a);
        for q in 0..d0_i * d0_j {
            self.c_buf[q] = self.chip.fifos.pop(q);
        }
        let a_len = d0_i * d0_k;
        let b_len = d0_k * d0_j;
        let a_sub = &self.chip.mapped_a.slots[slot][ii * a_len..(ii + 1) * a_len];
        let b_sub = &self.chip.mapped_b.slots[slot][jj * b_len..(jj + 1) * b_len];
        self.grid.execute(&mut self.c_buf, a_sub, b_sub)?;
        for q in 0..d0_i * d0_j {
            self.chip.fifos.push(q, self.c_buf[q])?;
        }
        Ok(())
    }

    fn expect_panel_loaded(&self, slot: usize) -> Result<()> {
        if !(self.reader_a.done()
            && self.reader_b.done()
            && self.chip.mapped_a.is_full(slot)
            && self.chip.mapped_b.is_full(slot))
        {
            return Err(Error::InvalidPlan(format!(
                "read widths (b_gA = {}, b_gB = {}) cannot stream a panel in r_A * r_B = {} iterations",
                self.plan.b_ga,
                self.plan.b_gb,
                self.plan.iterations_per_panel()
            )));
        }
        Ok(())
    }

    fn run_block(&mut self, bi: usize, bj: usize, c: &mut Matrix, stats: &mut SimStats) -> Result<()> {
        let ArchShape { d0_i, d0_j, d0_k, .. } = self.shape;
        let rr = self.plan.iterations_per_panel();
        let nk = self.problem.d2_k / d0_k;

        // Phase 1: read panel 0, zero the FIFOs
        for _ in 0..rr {
            for q in 0..d0_i * d0_j {
                self.chip.fifos.push(q, 0.0)?;
            }
        }
        self.reader_a.restart();
        self.reader_b.restart();
        for _ in 0..rr {
            self.read_step(bi, bj, 0, 0)?;
        }
        self.expect_panel_loaded(0)?;
        self.gmem.charge_reads(rr as u64);
        stats.it_read_init += rr as u64;

        // Phase 2: read panel k + 1 while computing panel k, in lockstep
        for k in 0..nk - 1 {
            let (cur, nxt) = (k % 2, (k + 1) % 2);
            self.reader_a.restart();
            self.reader_b.restart();
            for s in 0..rr {
                self.read_step(bi, bj, k + 1, nxt)?;
                self.compute_step(s, cur)?;
            }
            self.expect_panel_loaded(nxt)?;
            self.chip.mapped_a.release(cur);
            self.chip.mapped_b.release(cur);
            self.gmem.charge_reads(rr as u64);
            stats.it_steady += rr as u64;
            stats.it_comp += rr as u64;
        }

        // Phase 3: last panel
        let last = (nk - 1) % 2;
        for s in 0..rr {
            self.compute_step(s, last)?;
        }
        self.chip.mapped_a.release(last);
        self.chip.mapped_b.release(last);
        stats.it_tail += rr as u64;
        stats.it_comp += rr as u64;

        // Phase 4: drain C
        let (d1_i, d1_j) = (self.plan.d1_i, self.plan.d1_j);
        for s in 0..rr {
            let (ii, jj) = (s / self.plan.r_a, s % self.plan.r_a);
            for i0 in 0..d0_i {
                for j0 in 0..d0_j {
                    let v = self.chip.fifos.pop(i0 * d0_j + j0);
                    c.set(bi * d1_i + ii * d0_i + i0, bj * d1_j + jj * d0_j + j0, v);
                    self.gmem.write_c.elements += 1;
                }
            }
        }
        let block = (d1_i * d1_j) as u64;
        let store_width = d0_j.min(self.gmem.tier) as u64;
        let write_iters = block.div_ceil(store_width);
        stats.it_write += write_iters;
        self.gmem.write_c.stall_cycles += (write_iters - block.div_ceil(d0_j as u64)) as f64;
        stats.blocks += 1;
        Ok(())
    }
}

/// Runs the blocked multiplication of `a` (column-major, `d2_i x d2_k`) by
/// `b` (row-major, `d2_k x d2_j`) and returns the row-major product with the
/// run's counters.
pub fn run_blocked(
    a: &Matrix,
    b: &Matrix,
    shape: &ArchShape,
    plan: &BlockingPlan,
    problem: &ProblemShape,
    mem: &MemorySpec,
    clock: &ClockSpec,
) -> Result<(Matrix, SimStats)> {
    shape.validate()?;
    mem.validate()?;
    if a.layout() != Layout::ColMajor {
        return Err(Error::LayoutMismatch("A must be stored column-major".into()));
    }
    if b.layout() != Layout::RowMajor {
        return Err(Error::LayoutMismatch("B must be stored row-major".into()));
    }
    if (a.rows(), a.cols()) != (problem.d2_i, problem.d2_k)
        || (b.rows(), b.cols()) != (problem.d2_k, problem.d2_j)
    {
        return Err(Error::DimensionMismatch(format!(
            "A {}x{} and B {}x{} do not match problem {}x{}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            problem.d2_i,
            problem.d2_j,
            problem.d2_k
        )));
    }
    let violations = validate_problem(problem, plan, shape);
    if !violations.is_empty() {
        return Err(Error::ProblemViolations(violations));
    }
    let broken = plan.check(shape, clock)?;
    if !broken.is_empty() {
        return Err(Error::InvalidPlan(broken.join("; ")));
    }

    let mut runner = Runner {
        a,
        b,
        shape: *shape,
        plan: *plan,
        problem: *problem,
        grid: GridState::new(*shape)?,
        chip: OnChipModel::new(shape, plan),
        gmem: GlobalMemModel::new(*mem, *clock, plan)?,
        reader_a: PanelReader::new(plan.d1_i * shape.d0_k, plan.b_ga),
        reader_b: PanelReader::new(plan.d1_j * shape.d0_k, plan.b_gb),
        c_buf: vec![0.0; shape.d0_i * shape.d0_j],
    };
    let mut c = Matrix::zeros(problem.d2_i, problem.d2_j, Layout::RowMajor);
    let mut stats = SimStats::default();
    for bi in 0..problem.d2_i / plan.d1_i {
        for bj in 0..problem.d2_j / plan.d1_j {
            runner.run_block(bi, bj, &mut c, &mut stats)?;
        }
    }

    let g = &runner.gmem;
    stats.it_tot = stats.it_read_init + stats.it_steady + stats.it_tail + stats.it_write;
    stats.measured_c = stats.it_comp as f64 / stats.it_tot as f64;
    stats.elements_read_a = g.read_a.elements;
    stats.elements_read_b = g.read_b.elements;
    stats.elements_written_c = g.write_c.elements;
    stats.stall_cycles_read = g.read_a.stall_cycles.max(g.read_b.stall_cycles).ceil() as u64;
    stats.stall_cycles_write = g.write_c.stall_cycles as u64;
    stats.cycles_total = stats.it_tot + stats.stall_cycles_read;
    stats.max_mapped_a = runner.chip.mapped_a.max_occupancy as u64;
    stats.max_mapped_b = runner.chip.mapped_b.max_occupancy as u64;
    stats.max_fifo = runner.chip.fifos.max_occupancy as u64;
    Ok((c, stats))
}

/// Checks the read and write volumes against the reuse identities: every A
/// panel is re-read once per column of C blocks, every B panel once per row
/// of C blocks, and C is written exactly once.
pub fn traffic_audit(
    stats: &SimStats,
    problem: &ProblemShape,
    plan: &BlockingPlan,
) -> Vec<TrafficViolation> {
    let (i, j, k) = (problem.d2_i as u64, problem.d2_j as u64, problem.d2_k as u64);
    let expected = [
        ("elements_read_a", i * k * (j / plan.d1_j as u64), stats.elements_read_a),
        ("elements_read_b", k * j * (i / plan.d1_i as u64), stats.elements_read_b),
        ("elements_written_c", i * j, stats.elements_written_c),
    ];
    expected
        .into_iter()
        .filter(|&(_, want, got)| want != got)
        .map(|(counter, expected, actual)| TrafficViolation {
            counter: counter.to_string(),
            expected,
            actual,
        })
        .collect()
}
