//! Closed-form throughput, stall and efficiency equations.
//!
//! Bandwidths are carried in bytes per cycle and converted at the MB/s
//! boundary with 1 MB = 10^6 bytes. FLOPS values are in operations per
//! second; divide by 1e9 for GFLOPS.

use serde::{Deserialize, Serialize};

use crate::engine::timing_3d;
use crate::error::{Error, Result};
use crate::model::{
    ddr_floats_per_cycle, dsp_count, io_throughput, pe_count, validate_problem, ArchShape,
    BlockingPlan, ClockSpec, LatencyProfile, MemorySpec, ProblemShape,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfEstimate {
    pub n_dsp: usize,
    pub n_pe: usize,
    /// Peak FLOPS with every DSP doing a fused multiply-add each cycle.
    pub t_peak: f64,
    pub b_a: usize,
    pub b_b: usize,
    pub l_body: u64,
    pub l_tot: u64,
    /// Fraction of pipeline iterations in which the dot units compute.
    pub c_percent: f64,
    /// Predicted FLOPS, `c_percent * t_peak`.
    pub t_pred: f64,
    /// Worst read-stream stall rate.
    pub stall: f64,
}

/// Peak floating-point throughput in FLOPS.
pub fn t_peak(n_dsp: usize, clock: &ClockSpec) -> f64 {
    2.0 * n_dsp as f64 * clock.hz()
}

/// Fraction of requests a controller cannot serve when `request_bytes` are
/// asked for every cycle. Zero when the controller keeps up.
pub fn stall_rate(request_bytes: f64, clock: &ClockSpec, mem: &MemorySpec) -> f64 {
    let requested_mb_s = request_bytes * clock.fmax_mhz;
    let available_mb_s = mem.efficiency * mem.bank_bandwidth_mb_s;
    if requested_mb_s <= available_mb_s {
        0.0
    } else {
        1.0 - available_mb_s / requested_mb_s
    }
}

/// Throughput actually delivered by a loop body of `nominal` ops/cycle under
/// the given stall rate, in ops per second.
pub fn stalled_throughput(nominal_per_cycle: f64, stall: f64, clock: &ClockSpec) -> f64 {
    (1.0 - stall) * nominal_per_cycle * clock.hz()
}

/// FLOP per cycle of a pipelined dot unit and the floats per cycle it reads.
pub fn dot_unit_model(d_p: usize) -> (usize, usize) {
    (2 * d_p, 2 * d_p + 1)
}

/// FLOP per cycle and A/B input floats per cycle of the two-dimensional
/// multiply-accumulate array.
pub fn classical_array_model(d0_i: usize, d0_j: usize) -> (usize, usize, usize) {
    (2 * d0_i * d0_j, d0_i, d0_j)
}

/// FLOP per cycle of the three-dimensional array.
pub fn flop_per_cycle(shape: &ArchShape) -> usize {
    2 * dsp_count(shape)
}

/// Predicted compute fraction of the four-phase schedule:
/// `n / (1 + n + d0_i * d0_j / tier)` with `n = d2_k / d0_k`.
pub fn c_percent(
    shape: &ArchShape,
    plan: &BlockingPlan,
    problem: &ProblemShape,
    clock: &ClockSpec,
) -> Result<f64> {
    shape.validate()?;
    let violations = validate_problem(problem, plan, shape);
    if !violations.is_empty() {
        return Err(Error::ProblemViolations(violations));
    }
    let tier = ddr_floats_per_cycle(clock)? as f64;
    let n = (problem.d2_k / shape.d0_k) as f64;
    let write = (shape.d0_i * shape.d0_j) as f64 / tier;
    Ok(n / (1.0 + n + write))
}

/// Total floating-point operations of the product: `d2_i * d2_j * (2 d2_k - 1)`.
pub fn flop_count(problem: &ProblemShape) -> u64 {
    let (i, j, k) = (problem.d2_i as u64, problem.d2_j as u64, problem.d2_k as u64);
    i * j * (2 * k).saturating_sub(1)
}

/// DSP efficiency: measured over peak throughput.
pub fn efficiency(t_measured: f64, t_peak: f64) -> f64 {
    t_measured / t_peak
}

/// Assembles every closed-form figure for one design point and problem.
pub fn estimate(
    shape: &ArchShape,
    plan: &BlockingPlan,
    problem: &ProblemShape,
    clock: &ClockSpec,
    mem: &MemorySpec,
    lat: &LatencyProfile,
) -> Result<PerfEstimate> {
    let n_dsp = dsp_count(shape);
    let n_pe = pe_count(shape)?;
    let peak = t_peak(n_dsp, clock);
    let (b_a, b_b) = io_throughput(shape);
    let timing = timing_3d(shape, problem.d2_k, lat)?;
    let c = c_percent(shape, plan, problem, clock)?;
    let stall = [plan.b_ga, plan.b_gb]
        .into_iter()
        .map(|w| stall_rate(mem.lsu_bytes(w) as f64, clock, mem))
        .fold(0.0, f64::max);
    Ok(PerfEstimate {
        n_dsp,
        n_pe,
        t_peak: peak,
        b_a,
        b_b,
        l_body: timing.l_body,
        l_tot: timing.l_tot,
        c_percent: c,
        t_pred: c * peak,
        stall,
    })
}
