//! Design-space exploration: design points, enumeration under a DSP budget,
//! prediction and simulation of single points, and comparison against
//! published measurements.

mod compare;
mod config;
mod reference;
pub mod report;

pub use compare::{
    compare, compare_points, CompareReport, EfficiencyRow, PeakRow, RowStatus, TolerancePolicy,
};
pub use config::{ArchSection, BlockingSection, ClockSection, Config, MemorySection, ProblemSection};
pub use reference::{Measurement, ReferenceRecord, ReferenceSet, BUNDLED_REFERENCE};

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocked::{run_blocked, traffic_audit, SimStats};
use crate::engine::{systolic_matmul, timing_3d};
use crate::error::{Error, Result};
use crate::matrix::{oracle_matmul, Layout, Matrix};
use crate::model::{
    dsp_count, make_blocking_plan, validate_problem, ArchShape, BlockingPlan, ClockSpec,
    LatencyProfile, MemorySpec, ProblemShape,
};
use crate::perf::{estimate, PerfEstimate};

/// One candidate architecture with its clock and blocking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub shape: ArchShape,
    pub clock: ClockSpec,
    pub mem: MemorySpec,
    pub plan: Option<BlockingPlan>,
    pub feasible: bool,
    pub violations: Vec<String>,
}

impl DesignPoint {
    /// Builds the plan (default, or from explicit `d1` and read widths) and
    /// records why it failed instead of erroring.
    pub fn build(
        shape: ArchShape,
        clock: ClockSpec,
        mem: MemorySpec,
        d1: Option<(usize, usize)>,
        widths: Option<(usize, usize)>,
    ) -> Self {
        let plan = make_blocking_plan(&shape, &clock, &mem, d1).and_then(|p| match widths {
            Some((a, b)) => p.with_read_widths(&shape, &clock, a, b),
            None => Ok(p),
        });
        match plan {
            Ok(plan) => Self { shape, clock, mem, plan: Some(plan), feasible: true, violations: vec![] },
            Err(e) => Self {
                shape,
                clock,
                mem,
                plan: None,
                feasible: false,
                violations: vec![e.to_string()],
            },
        }
    }

    pub fn n_dsp(&self) -> usize {
        dsp_count(&self.shape)
    }

    fn feasible_plan(&self) -> Result<&BlockingPlan> {
        match (&self.plan, self.feasible) {
            (Some(p), true) => Ok(p),
            _ => Err(Error::InvalidPlan(format!(
                "design point {} is infeasible: {}",
                self.shape,
                self.violations.join("; ")
            ))),
        }
    }
}

/// Candidate values for one architecture parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRange(pub Vec<usize>);

impl ParamRange {
    pub fn span(lo: usize, hi: usize) -> Self {
        Self((lo..=hi).collect())
    }
}

impl FromStr for ParamRange {
    type Err = Error;

    /// Accepts `lo..hi` (inclusive), `a,b,c`, or a single value.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse range '{s}'"));
        let s = s.trim();
        let mut values: Vec<usize> = if let Some((lo, hi)) = s.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
            (lo..=hi).collect()
        } else {
            s.split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect::<Result<_>>()?
        };
        values.sort_unstable();
        values.dedup();
        Ok(Self(values))
    }
}

/// Search space of the four architecture parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub d0_i: ParamRange,
    pub d0_j: ParamRange,
    pub d0_k: ParamRange,
    pub d_p: ParamRange,
}

impl SearchSpace {
    /// Parses `name=range` items; parameters not mentioned keep `default`.
    pub fn parse(items: &[String], default: &SearchSpace) -> Result<Self> {
        let mut space = default.clone();
        for item in items {
            let (name, range) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected name=range, got '{item}'")))?;
            let range: ParamRange = range.parse()?;
            match name.trim() {
                "d0_i" => space.d0_i = range,
                "d0_j" => space.d0_j = range,
                "d0_k" => space.d0_k = range,
                "d_p" => space.d_p = range,
                other => return Err(Error::Config(format!("unknown parameter '{other}'"))),
            }
        }
        Ok(space)
    }
}

/// Where each point's clock comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FmaxTable {
    pub default_mhz: f64,
    pub entries: BTreeMap<String, f64>,
}

impl FmaxTable {
    pub fn uniform(mhz: f64) -> Self {
        Self { default_mhz: mhz, entries: BTreeMap::new() }
    }

    pub fn key(shape: &ArchShape) -> String {
        format!("{}x{}x{}/{}", shape.d0_i, shape.d0_j, shape.d0_k, shape.d_p)
    }

    /// Clock for `shape` and whether it came from the table.
    pub fn lookup(&self, shape: &ArchShape) -> (f64, bool) {
        match self.entries.get(&Self::key(shape)) {
            Some(&f) => (f, true),
            None => (self.default_mhz, false),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnumerateOptions {
    /// Mark points with larger dot units infeasible. There is no predictive
    /// rule for fitter failures, so this is left to the user.
    pub max_dp: Option<usize>,
}

/// Every shape in the search space whose DSP count fits the budget, in
/// lexicographic `(d0_i, d0_j, d0_k, d_p)` order.
pub fn enumerate(
    budget: usize,
    space: &SearchSpace,
    fmax: &FmaxTable,
    mem: &MemorySpec,
    opts: &EnumerateOptions,
) -> Result<Vec<DesignPoint>> {
    if budget == 0 {
        return Err(Error::Config("DSP budget must be positive".into()));
    }
    for (name, r) in [("d0_i", &space.d0_i), ("d0_j", &space.d0_j), ("d0_k", &space.d0_k), ("d_p", &space.d_p)] {
        if r.0.is_empty() {
            return Err(Error::Config(format!("range for {name} is empty")));
        }
    }
    let mut shapes = Vec::new();
    for &i in &space.d0_i.0 {
        for &j in &space.d0_j.0 {
            for &k in &space.d0_k.0 {
                if i.saturating_mul(j).saturating_mul(k) > budget {
                    continue;
                }
                for &p in &space.d_p.0 {
                    if let Ok(s) = ArchShape::new(i, j, k, p) {
                        shapes.push(s);
                    }
                }
            }
        }
    }
    let points = shapes
        .into_par_iter()
        .map(|shape| {
            let (f, _) = fmax.lookup(&shape);
            let clock = ClockSpec { fmax_mhz: f };
            let mut point = DesignPoint::build(shape, clock, *mem, None, None);
            if let Some(limit) = opts.max_dp {
                if shape.d_p > limit {
                    point.feasible = false;
                    point.violations.push(format!("d_p = {} exceeds the limit of {limit}", shape.d_p));
                }
            }
            point
        })
        .collect();
    Ok(points)
}

pub fn predict(point: &DesignPoint, problem: &ProblemShape, lat: &LatencyProfile) -> Result<PerfEstimate> {
    let plan = point.feasible_plan()?;
    estimate(&point.shape, plan, problem, &point.clock, &point.mem, lat)
}

/// Predictions for many points, evaluated in parallel and returned in input
/// order. Infeasible points and problems that do not fit yield `None`.
pub fn predict_all(
    points: &[DesignPoint],
    problem: &ProblemShape,
    lat: &LatencyProfile,
) -> Vec<Option<PerfEstimate>> {
    points.par_iter().map(|p| predict(p, problem, lat).ok()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    /// Tile-by-tile wavefront execution without the off-chip schedule.
    Functional,
    /// The full four-phase blocked schedule.
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub fidelity: Fidelity,
    pub stats: SimStats,
    /// SHA-256 of the product as little-endian `f32` values in row-major order.
    pub result_hash: String,
    /// Product equals the reference bit for bit and traffic identities hold.
    pub verified: bool,
    pub traffic_violations: Vec<String>,
}

/// Small-integer operands, exactly representable so products and sums are
/// exact: `A` column-major, `B` row-major.
pub fn random_operands(problem: &ProblemShape, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_fn(problem.d2_i, problem.d2_k, Layout::ColMajor, |_, _| {
        rng.gen_range(-4i32..=4) as f32
    });
    let b = Matrix::from_fn(problem.d2_k, problem.d2_j, Layout::RowMajor, |_, _| {
        rng.gen_range(-4i32..=4) as f32
    });
    (a, b)
}

pub fn result_hash(m: &Matrix) -> String {
    let mut h = Sha256::new();
    for v in m.to_row_major_vec() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Tile-by-tile product of `a` and `b` where every `d0_i x d0_j` tile of C
/// streams the full K dimension through one grid.
pub fn functional_matmul(
    a: &Matrix,
    b: &Matrix,
    shape: &ArchShape,
    lat: &LatencyProfile,
) -> Result<(Matrix, SimStats)> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    if m % shape.d0_i != 0 || n % shape.d0_j != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{m}x{n} result is not tiled by {}x{}",
            shape.d0_i, shape.d0_j
        )));
    }
    let timing = timing_3d(shape, k, lat)?;
    let mut c = Matrix::zeros(m, n, Layout::RowMajor);
    let mut stats = SimStats::default();
    for ti in 0..m / shape.d0_i {
        for tj in 0..n / shape.d0_j {
            let a_rows = Matrix::from_fn(shape.d0_i, k, Layout::RowMajor, |i, kk| {
                a.get(ti * shape.d0_i + i, kk)
            });
            let b_cols = Matrix::from_fn(k, shape.d0_j, Layout::RowMajor, |kk, j| {
                b.get(kk, tj * shape.d0_j + j)
            });
            let tile = systolic_matmul(&a_rows, &b_cols, shape)?;
            for i in 0..shape.d0_i {
                for j in 0..shape.d0_j {
                    c.set(ti * shape.d0_i + i, tj * shape.d0_j + j, tile.get(i, j));
                }
            }
            stats.blocks += 1;
            stats.it_comp += timing.iterations;
            stats.cycles_total += timing.l_tot;
            stats.elements_read_a += (shape.d0_i * k) as u64;
            stats.elements_read_b += (k * shape.d0_j) as u64;
            stats.elements_written_c += (shape.d0_i * shape.d0_j) as u64;
        }
    }
    stats.it_tot = stats.it_comp;
    stats.measured_c = 1.0;
    Ok((c, stats))
}

pub fn simulate(
    point: &DesignPoint,
    problem: &ProblemShape,
    fidelity: Fidelity,
    seed: u64,
    lat: &LatencyProfile,
) -> Result<SimOutcome> {
    simulate_with_product(point, problem, fidelity, seed, lat).map(|(outcome, _)| outcome)
}

/// Like [`simulate`], also returning the computed product.
pub fn simulate_with_product(
    point: &DesignPoint,
    problem: &ProblemShape,
    fidelity: Fidelity,
    seed: u64,
    lat: &LatencyProfile,
) -> Result<(SimOutcome, Matrix)> {
    let plan = point.feasible_plan()?;
    let violations = validate_problem(problem, plan, &point.shape);
    if !violations.is_empty() {
        return Err(Error::ProblemViolations(violations));
    }
    let (a, b) = random_operands(problem, seed);
    let (c, stats, traffic) = match fidelity {
        Fidelity::Blocked => {
            let (c, stats) = run_blocked(&a, &b, &point.shape, plan, problem, &point.mem, &point.clock)?;
            let traffic: Vec<String> =
                traffic_audit(&stats, problem, plan).iter().map(|v| v.to_string()).collect();
            (c, stats, traffic)
        }
        Fidelity::Functional => {
            let (c, stats) = functional_matmul(&a, &b, &point.shape, lat)?;
            (c, stats, Vec::new())
        }
    };
    let reference = oracle_matmul(&a, &b)?;
    let outcome = SimOutcome {
        fidelity,
        verified: c.bitwise_eq(&reference) && traffic.is_empty(),
        result_hash: result_hash(&c),
        stats,
        traffic_violations: traffic,
    };
    Ok((outcome, c))
}
