//! Configuration symbols of the architecture and the pure formulas that link
//! them: DSP and PE counts, grid input bandwidth, the DDR request tiers and
//! the reuse-driven first-level blocking.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size in bytes of one single-precision value.
pub const FLOAT_BYTES: usize = 4;

/// Peak throughput of one DDR4-2400 bank in MB/s.
pub const DEFAULT_BANK_BANDWIDTH_MB_S: f64 = 19_200.0;

/// Dimensions of the three-dimensional PE grid.
///
/// The grid holds `d0_i x d0_j x (d0_k / d_p)` dot-product units of size `d_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchShape {
    pub d0_i: usize,
    pub d0_j: usize,
    pub d0_k: usize,
    pub d_p: usize,
}

impl ArchShape {
    pub fn new(d0_i: usize, d0_j: usize, d0_k: usize, d_p: usize) -> Result<Self> {
        let shape = Self { d0_i, d0_j, d0_k, d_p };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d0_i == 0 || self.d0_j == 0 || self.d0_k == 0 || self.d_p == 0 {
            return Err(Error::InvalidShape(format!("all dimensions must be >= 1, got {self}")));
        }
        if !self.d0_k.is_multiple_of(self.d_p) {
            return Err(Error::InvalidShape(format!(
                "d0_k = {} is not a multiple of d_p = {}",
                self.d0_k, self.d_p
            )));
        }
        Ok(())
    }

    /// Number of stacked layers, `d0_k / d_p`.
    pub fn layers(&self) -> usize {
        self.d0_k / self.d_p
    }
}

impl fmt::Display for ArchShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{}; d_p={})", self.d0_i, self.d0_j, self.d0_k, self.d_p)
    }
}

/// Pipeline latencies of the arithmetic units.
///
/// The default values (`l_mac = 6`, `l_dot = {1: 6, 2: 8, 4: 11, 8: 15}`) are
/// representative of single-precision DSP chains but are not authoritative;
/// supply measured numbers for a specific device when they are known. Sizes
/// missing from the table are interpolated linearly in `log2(d_p)` and rounded
/// up to whole cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub l_mac: u32,
    pub l_dot: BTreeMap<usize, u32>,
    #[serde(default = "one")]
    pub register_hop: u32,
}

fn one() -> u32 {
    1
}

impl Default for LatencyProfile {
    fn default() -> Self {
        Self {
            l_mac: 6,
            l_dot: BTreeMap::from([(1, 6), (2, 8), (4, 11), (8, 15)]),
            register_hop: 1,
        }
    }
}

impl LatencyProfile {
    pub fn new(l_mac: u32, l_dot: BTreeMap<usize, u32>) -> Result<Self> {
        let p = Self { l_mac, l_dot, register_hop: 1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_mac == 0 {
            return Err(Error::InvalidLatency("l_mac must be >= 1".into()));
        }
        if self.register_hop != 1 {
            return Err(Error::InvalidLatency(format!(
                "register_hop must be 1, got {}",
                self.register_hop
            )));
        }
        if self.l_dot.is_empty() {
            return Err(Error::InvalidLatency("l_dot table is empty".into()));
        }
        let mut prev = 0;
        for (&size, &lat) in &self.l_dot {
            if size == 0 || lat == 0 {
                return Err(Error::InvalidLatency(format!("entry {size} -> {lat} must be >= 1")));
            }
            if lat < prev {
                return Err(Error::InvalidLatency("l_dot must be non-decreasing in d_p".into()));
            }
            prev = lat;
        }
        Ok(())
    }

    /// Latency in cycles of a dot-product unit of size `d_p`.
    pub fn l_dot(&self, d_p: usize) -> u32 {
        if let Some(&lat) = self.l_dot.get(&d_p) {
            return lat;
        }
        let points: Vec<(f64, f64)> = self
            .l_dot
            .iter()
            .map(|(&s, &l)| ((s as f64).log2(), l as f64))
            .collect();
        if points.len() == 1 {
            return points[0].1 as u32;
        }
        let x = (d_p.max(1) as f64).log2();
        // pick the bracketing segment, or the nearest end segment to extrapolate
        let seg = points
            .windows(2)
            .position(|w| x <= w[1].0)
            .unwrap_or(points.len() - 2);
        let (x0, y0) = points[seg];
        let (x1, y1) = points[seg + 1];
        let y = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        (y.ceil() as i64).max(1) as u32
    }
}

/// Design clock frequency. Always an input: it comes from the fitter, not from
/// this model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockSpec {
    pub fmax_mhz: f64,
}

impl ClockSpec {
    pub fn new(fmax_mhz: f64) -> Result<Self> {
        let clock = Self { fmax_mhz };
        clock.validate()?;
        Ok(clock)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fmax_mhz > 150.0 && self.fmax_mhz <= 600.0) {
            return Err(Error::UnsupportedTier(self.fmax_mhz));
        }
        Ok(())
    }

    pub fn hz(&self) -> f64 {
        self.fmax_mhz * 1e6
    }
}

/// One global-memory controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySpec {
    /// Peak throughput of the controller in MB/s (1 MB = 10^6 bytes).
    pub bank_bandwidth_mb_s: f64,
    /// Controller efficiency `e` in (0, 1].
    pub efficiency: f64,
    /// The HLS tool only emits LSUs whose byte width is a power of two.
    pub lsu_pow2: bool,
}

impl Default for MemorySpec {
    fn default() -> Self {
        Self {
            bank_bandwidth_mb_s: DEFAULT_BANK_BANDWIDTH_MB_S,
            efficiency: 1.0,
            lsu_pow2: true,
        }
    }
}

impl MemorySpec {
    pub fn new(bank_bandwidth_mb_s: f64, efficiency: f64, lsu_pow2: bool) -> Result<Self> {
        let m = Self { bank_bandwidth_mb_s, efficiency, lsu_pow2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bank_bandwidth_mb_s > 0.0 && self.bank_bandwidth_mb_s.is_finite()) {
            return Err(Error::InvalidMemory(format!(
                "bank bandwidth must be positive, got {}",
                self.bank_bandwidth_mb_s
            )));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidMemory(format!(
                "efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        Ok(())
    }

    /// Byte width of the LSU generated for a stream of `floats` values per cycle.
    pub fn lsu_bytes(&self, floats: usize) -> usize {
        let bytes = floats * FLOAT_BYTES;
        if self.lsu_pow2 {
            bytes.next_power_of_two()
        } else {
            bytes
        }
    }
}

/// First-level blocking derived from the reuse ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPlan {
    pub d1_i: usize,
    pub d1_j: usize,
    /// Floats of A read from global memory per cycle.
    pub b_ga: usize,
    /// Floats of B read from global memory per cycle.
    pub b_gb: usize,
    pub r_a: usize,
    pub r_b: usize,
}

impl BlockingPlan {
    /// Iterations needed to stream one k-panel, and to compute one outer product.
    pub fn iterations_per_panel(&self) -> usize {
        self.r_a * self.r_b
    }

    /// Replace the global read widths, keeping the block sizes.
    pub fn with_read_widths(
        mut self,
        shape: &ArchShape,
        clock: &ClockSpec,
        b_ga: usize,
        b_gb: usize,
    ) -> Result<Self> {
        self.b_ga = b_ga;
        self.b_gb = b_gb;
        let problems = self.check(shape, clock)?;
        if !problems.is_empty() {
            return Err(Error::InvalidPlan(problems.join("; ")));
        }
        Ok(self)
    }

    /// Returns every plan invariant that does not hold.
    pub fn check(&self, shape: &ArchShape, clock: &ClockSpec) -> Result<Vec<String>> {
        let tier = ddr_floats_per_cycle(clock)?;
        let (b_a, b_b) = io_throughput(shape);
        let mut out = Vec::new();
        if self.r_a == 0 || self.r_b == 0 || self.b_ga == 0 || self.b_gb == 0 {
            out.push("reuse ratios and read widths must be >= 1".to_string());
            return Ok(out);
        }
        if self.d1_i != self.r_b * shape.d0_i {
            out.push(format!("d1_i = {} != r_B * d0_i = {}", self.d1_i, self.r_b * shape.d0_i));
        }
        if self.d1_j != self.r_a * shape.d0_j {
            out.push(format!("d1_j = {} != r_A * d0_j = {}", self.d1_j, self.r_a * shape.d0_j));
        }
        if self.r_a * self.b_ga < b_a {
            out.push(format!("r_A * b_gA = {} < B_A = {b_a}", self.r_a * self.b_ga));
        }
        if self.r_b * self.b_gb < b_b {
            out.push(format!("r_B * b_gB = {} < B_B = {b_b}", self.r_b * self.b_gb));
        }
        if self.b_ga > tier {
            out.push(format!("b_gA = {} exceeds the DDR tier of {tier} floats/cycle", self.b_ga));
        }
        if self.b_gb > tier {
            out.push(format!("b_gB = {} exceeds the DDR tier of {tier} floats/cycle", self.b_gb));
        }
        Ok(out)
    }

    /// True when a read width cannot be produced by a single power-of-two LSU.
    ///
    /// Such plans are still accepted; the reports flag them.
    pub fn non_pow2_widths(&self) -> bool {
        !self.b_ga.is_power_of_two() || !self.b_gb.is_power_of_two()
    }
}

/// Off-chip problem dimensions: `A` is `d2_i x d2_k`, `B` is `d2_k x d2_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemShape {
    pub d2_i: usize,
    pub d2_j: usize,
    pub d2_k: usize,
}

impl ProblemShape {
    pub fn new(d2_i: usize, d2_j: usize, d2_k: usize) -> Self {
        Self { d2_i, d2_j, d2_k }
    }

    pub fn cube(d2: usize) -> Self {
        Self::new(d2, d2, d2)
    }
}

/// A divisibility constraint the problem does not satisfy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub value: usize,
    pub divisor: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} is not a multiple of {}", self.field, self.value, self.divisor)
    }
}

pub fn dsp_count(shape: &ArchShape) -> usize {
    shape.d0_i * shape.d0_j * shape.d0_k
}

pub fn pe_count(shape: &ArchShape) -> Result<usize> {
    shape.validate()?;
    Ok(shape.d0_i * shape.d0_j * shape.layers())
}

/// Floats per cycle entering the grid on the A face and on the B face.
pub fn io_throughput(shape: &ArchShape) -> (usize, usize) {
    (shape.d0_i * shape.d0_k, shape.d0_k * shape.d0_j)
}

/// Floats per cycle a global-memory LSU can request without stalling.
///
/// 64-byte LSUs are sustainable up to 300 MHz and 32-byte ones up to 600 MHz.
pub fn ddr_floats_per_cycle(clock: &ClockSpec) -> Result<usize> {
    let f = clock.fmax_mhz;
    if f > 150.0 && f <= 300.0 {
        Ok(64 / FLOAT_BYTES)
    } else if f > 300.0 && f <= 600.0 {
        Ok(32 / FLOAT_BYTES)
    } else {
        Err(Error::UnsupportedTier(f))
    }
}

/// Builds the first-level blocking.
///
/// Without an override the read widths are set to the DDR tier and the reuse
/// ratios to the smallest integers that keep the grid fed. With an override
/// the caller picks `d1`, the reuse ratios follow from `d1 / d0`, and the read
/// widths are the smallest that still feed the grid.
pub fn make_blocking_plan(
    shape: &ArchShape,
    clock: &ClockSpec,
    mem: &MemorySpec,
    override_d1: Option<(usize, usize)>,
) -> Result<BlockingPlan> {
    shape.validate()?;
    mem.validate()?;
    let tier = ddr_floats_per_cycle(clock)?;
    let (b_a, b_b) = io_throughput(shape);

    let plan = match override_d1 {
        None => {
            let r_a = b_a.div_ceil(tier);
            let r_b = b_b.div_ceil(tier);
            BlockingPlan {
                d1_i: r_b * shape.d0_i,
                d1_j: r_a * shape.d0_j,
                b_ga: tier,
                b_gb: tier,
                r_a,
                r_b,
            }
        }
        Some((d1_i, d1_j)) => {
            if d1_i == 0 || d1_i % shape.d0_i != 0 {
                return Err(Error::InvalidPlan(format!(
                    "d1_i = {d1_i} is not a positive multiple of d0_i = {}",
                    shape.d0_i
                )));
            }
            if d1_j == 0 || d1_j % shape.d0_j != 0 {
                return Err(Error::InvalidPlan(format!(
                    "d1_j = {d1_j} is not a positive multiple of d0_j = {}",
                    shape.d0_j
                )));
            }
            let r_b = d1_i / shape.d0_i;
            let r_a = d1_j / shape.d0_j;
            let b_ga = b_a.div_ceil(r_a);
            let b_gb = b_b.div_ceil(r_b);
            if b_ga > tier || b_gb > tier {
                return Err(Error::InvalidPlan(format!(
                    "implied read widths (b_gA = {b_ga}, b_gB = {b_gb}) exceed the DDR tier of {tier} floats/cycle"
                )));
            }
            BlockingPlan { d1_i, d1_j, b_ga, b_gb, r_a, r_b }
        }
    };
    Ok(plan)
}

/// Lists every divisibility constraint of the two-level partition that
/// `problem` breaks. An empty list means the problem can be run.
pub fn validate_problem(
    problem: &ProblemShape,
    plan: &BlockingPlan,
    shape: &ArchShape,
) -> Vec<Violation> {
    let checks = [
        ("d2_i", problem.d2_i, plan.d1_i),
        ("d2_j", problem.d2_j, plan.d1_j),
        ("d2_k", problem.d2_k, shape.d0_k),
    ];
    checks
        .into_iter()
        .filter(|&(_, value, divisor)| divisor == 0 || value == 0 || value % divisor != 0)
        .map(|(field, value, divisor)| Violation { field: field.to_string(), value, divisor })
        .collect()
}
