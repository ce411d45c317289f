//! Performance model and functional simulator for a three-dimensional
//! systolic array performing single-precision matrix multiplication on an
//! FPGA, together with the two-level blocked off-chip algorithm that feeds it.
//!
//! The crate is split along the same lines as the hardware:
//!
//! * [`model`]: architecture shapes, clocks, memory and the blocking plan.
//! * [`matrix`]: dense matrices, block views and the reference product.
//! * [`engine`]: wavefront execution of one on-chip block and its timing.
//! * [`blocked`]: the four-phase off-chip schedule with traffic and stall counters.
//! * [`perf`]: closed-form throughput and efficiency equations.
//! * [`dse`]: configuration files, design-space enumeration and reference comparison.

pub mod blocked;
pub mod dse;
pub mod engine;
mod error;
pub mod matrix;
pub mod model;
pub mod perf;

pub use blocked::{run_blocked, traffic_audit, write_stall_factor, SimStats};
pub use engine::{event_sim_timing, systolic_block_mac, timing_3d, timing_classical, TimingReport};
pub use error::{Error, Result};
pub use matrix::{oracle_matmul, Layout, Matrix};
pub use model::{
    ddr_floats_per_cycle, dsp_count, io_throughput, make_blocking_plan, pe_count,
    validate_problem, ArchShape, BlockingPlan, ClockSpec, LatencyProfile, MemorySpec,
    ProblemShape, Violation,
};
pub use perf::{c_percent, efficiency, flop_count, stall_rate, t_peak, PerfEstimate};
