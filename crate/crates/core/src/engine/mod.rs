//! On-chip block multiplication on the three-dimensional PE grid.
//!
//! [`GridState`] executes the wavefront dataflow literally: at wavefront step
//! `k`, PE `(i, j)` is active iff `i + j <= k < i + j + d0_k`. It takes its
//! A operand from the west neighbour's register (or from the A block when
//! `j == 0`) and its B operand from the north neighbour (or the B block when
//! `i == 0`). Operands are collected into the dot-product unit of the current
//! layer; when the unit has `d_p` pairs it adds their products to the partial
//! sum, which then moves up to the next layer.
//!
//! In hardware the wavefront index is spatial, since the loops are fully
//! unrolled. Sweeping it sequentially gives identical results because each
//! PE only reads registers written in the previous step.
//!
//! Timing lives next to it: [`timing_classical`] and [`timing_3d`] are the
//! closed forms, [`event_sim_timing`] an independent discrete-event model.

mod event;

pub use event::{event_sim_timing, event_sim_trace, write_trace_csv, TraceEvent};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Layout, Matrix};
use crate::model::{ArchShape, LatencyProfile};

/// Pipeline timing of one systolic multiplication with `II = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Cycles for a single iteration to traverse the pipeline.
    pub l_body: u64,
    /// Cycles until the last result leaves the grid.
    pub l_tot: u64,
    /// Cycle at which the far-corner PE receives its first operands.
    pub fill: u64,
    /// Number of pipelined iterations (blocks of `d0_k` along K).
    pub iterations: u64,
}

/// Dot-product unit: `z + sum(v[n] * w[n])`, summed sequentially from `z`
/// upward in ascending `n`.
#[inline]
pub fn dot_unit(z: f32, v: &[f32], w: &[f32]) -> f32 {
    debug_assert_eq!(v.len(), w.len());
    let mut r = z;
    for (a, b) in v.iter().zip(w) {
        r += a * b;
    }
    r
}

/// Wavefront step at which a value was read from the block memory, and the
/// position along the dot dimension it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Origin {
    pub injected_at: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeActivity {
    pub first_step: Option<usize>,
    pub last_step: Option<usize>,
    pub active_steps: usize,
}

/// Registers and accumulators of a `d0_i x d0_j` grid plus the layer carriers.
#[derive(Debug, Clone)]
pub struct GridState {
    shape: ArchShape,
    a_prop: Vec<f32>,
    b_prop: Vec<f32>,
    a_origin: Vec<Origin>,
    b_origin: Vec<Origin>,
    c_acc: Vec<f32>,
    // operands collected for the dot unit of the current layer, d_p per PE
    v_buf: Vec<f32>,
    w_buf: Vec<f32>,
    activity: Vec<PeActivity>,
    macs: u64,
    layer_forwards: u64,
}

impl GridState {
    pub fn new(shape: ArchShape) -> Result<Self> {
        shape.validate()?;
        let pes = shape.d0_i * shape.d0_j;
        Ok(Self {
            shape,
            a_prop: vec![0.0; pes],
            b_prop: vec![0.0; pes],
            a_origin: vec![Origin::default(); pes],
            b_origin: vec![Origin::default(); pes],
            c_acc: vec![0.0; pes],
            v_buf: vec![0.0; pes * shape.d_p],
            w_buf: vec![0.0; pes * shape.d_p],
            activity: vec![PeActivity::default(); pes],
            macs: 0,
            layer_forwards: 0,
        })
    }

    pub fn shape(&self) -> &ArchShape {
        &self.shape
    }

    /// Multiply-accumulates executed since construction.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// Partial sums handed from one layer to the next since construction.
    pub fn layer_forwards(&self) -> u64 {
        self.layer_forwards
    }

    /// Activity of PE `(i, j)` during the most recent block.
    pub fn activity(&self, i: usize, j: usize) -> PeActivity {
        self.activity[i * self.shape.d0_j + j]
    }

    /// Origin of the A value currently held in PE `(i, j)`'s register.
    pub fn a_origin(&self, i: usize, j: usize) -> Origin {
        self.a_origin[i * self.shape.d0_j + j]
    }

    pub fn b_origin(&self, i: usize, j: usize) -> Origin {
        self.b_origin[i * self.shape.d0_j + j]
    }

    /// Runs one block: `c += a0 * b0` with all three slices row-major
    /// (`c` is `d0_i x d0_j`, `a0` is `d0_i x d0_k`, `b0` is `d0_k x d0_j`).
    ///
    /// `observe` is called after every PE update with `(step, i, j, state)`.
    pub fn execute_observed(
        &mut self,
        c: &mut [f32],
        a0: &[f32],
        b0: &[f32],
        mut observe: impl FnMut(usize, usize, usize, &GridState),
    ) -> Result<()> {
        let ArchShape { d0_i, d0_j, d0_k, d_p } = self.shape;
        if c.len() != d0_i * d0_j || a0.len() != d0_i * d0_k || b0.len() != d0_k * d0_j {
            return Err(Error::DimensionMismatch(format!(
                "block operands for shape {} have lengths c={}, a0={}, b0={}",
                self.shape,
                c.len(),
                a0.len(),
                b0.len()
            )));
        }
        self.c_acc.copy_from_slice(c);
        self.activity.fill(PeActivity::default());
        let layers = self.shape.layers();

        for step in 0..(d0_i + d0_j + d0_k - 2) {
            for i in (0..d0_i).rev() {
                for j in (0..d0_j).rev() {
                    if !(i + j <= step && step < i + j + d0_k) {
                        continue;
                    }
                    let pe = i * d0_j + j;
                    let kk = step - i - j;

                    if j > 0 {
                        self.a_prop[pe] = self.a_prop[pe - 1];
                        self.a_origin[pe] = self.a_origin[pe - 1];
                    } else {
                        self.a_prop[pe] = a0[i * d0_k + (step - i)];
                        self.a_origin[pe] = Origin { injected_at: step, k: step - i };
                    }
                    if i > 0 {
                        self.b_prop[pe] = self.b_prop[pe - d0_j];
                        self.b_origin[pe] = self.b_origin[pe - d0_j];
                    } else {
                        self.b_prop[pe] = b0[(step - j) * d0_j + j];
                        self.b_origin[pe] = Origin { injected_at: step, k: step - j };
                    }

                    let slot = kk % d_p;
                    self.v_buf[pe * d_p + slot] = self.a_prop[pe];
                    self.w_buf[pe * d_p + slot] = self.b_prop[pe];
                    if slot == d_p - 1 {
                        let v = &self.v_buf[pe * d_p..(pe + 1) * d_p];
                        let w = &self.w_buf[pe * d_p..(pe + 1) * d_p];
                        self.c_acc[pe] = dot_unit(self.c_acc[pe], v, w);
                        if kk / d_p + 1 < layers {
                            self.layer_forwards += 1;
                        }
                    }
                    self.macs += 1;

                    let act = &mut self.activity[pe];
                    act.first_step.get_or_insert(step);
                    act.last_step = Some(step);
                    act.active_steps += 1;

                    observe(step, i, j, self);
                }
            }
        }
        c.copy_from_slice(&self.c_acc);
        Ok(())
    }

    pub fn execute(&mut self, c: &mut [f32], a0: &[f32], b0: &[f32]) -> Result<()> {
        self.execute_observed(c, a0, b0, |_, _, _, _| {})
    }
}

fn row_major(m: &Matrix) -> Vec<f32> {
    m.to_row_major_vec()
}

/// Returns `c + a0 * b0` computed by wavefront execution on a grid of the
/// given shape.
pub fn systolic_block_mac(
    c: &Matrix,
    a0: &Matrix,
    b0: &Matrix,
    shape: &ArchShape,
) -> Result<Matrix> {
    let ok = c.rows() == shape.d0_i
        && c.cols() == shape.d0_j
        && a0.rows() == shape.d0_i
        && a0.cols() == shape.d0_k
        && b0.rows() == shape.d0_k
        && b0.cols() == shape.d0_j;
    if !ok {
        return Err(Error::DimensionMismatch(format!(
            "C {}x{}, A0 {}x{}, B0 {}x{} do not fit shape {shape}",
            c.rows(),
            c.cols(),
            a0.rows(),
            a0.cols(),
            b0.rows(),
            b0.cols()
        )));
    }
    let mut grid = GridState::new(*shape)?;
    let mut acc = row_major(c);
    grid.execute(&mut acc, &row_major(a0), &row_major(b0))?;
    Matrix::new(shape.d0_i, shape.d0_j, Layout::RowMajor, acc)
}

/// Full `d0_i x K` by `K x d0_j` product by feeding `K / d0_k` consecutive
/// blocks through one grid, accumulating into the same `C`.
pub fn systolic_matmul(a: &Matrix, b: &Matrix, shape: &ArchShape) -> Result<Matrix> {
    shape.validate()?;
    let k = a.cols();
    if a.rows() != shape.d0_i || b.cols() != shape.d0_j || b.rows() != k {
        return Err(Error::DimensionMismatch(format!(
            "A {}x{} and B {}x{} do not fit shape {shape}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if k == 0 || !k.is_multiple_of(shape.d0_k) {
        return Err(Error::DimensionMismatch(format!(
            "K = {k} is not a positive multiple of d0_k = {}",
            shape.d0_k
        )));
    }
    let ArchShape { d0_i, d0_j, d0_k, .. } = *shape;
    let mut grid = GridState::new(*shape)?;
    let mut c = vec![0.0f32; d0_i * d0_j];
    let mut a0 = vec![0.0f32; d0_i * d0_k];
    let mut b0 = vec![0.0f32; d0_k * d0_j];
    for t in 0..k / d0_k {
        for i in 0..d0_i {
            for kk in 0..d0_k {
                a0[i * d0_k + kk] = a.get(i, t * d0_k + kk);
            }
        }
        for kk in 0..d0_k {
            for j in 0..d0_j {
                b0[kk * d0_j + j] = b.get(t * d0_k + kk, j);
            }
        }
        grid.execute(&mut c, &a0, &b0)?;
    }
    Matrix::new(d0_i, d0_j, Layout::RowMajor, c)
}

/// Closed-form timing of the two-dimensional multiply-accumulate array.
pub fn timing_classical(d0_i: usize, d0_j: usize, k: usize, lat: &LatencyProfile) -> TimingReport {
    let (d0_i, d0_j, k) = (d0_i as u64, d0_j as u64, k as u64);
    let l_body = d0_i + d0_j - 1 + lat.l_mac as u64;
    TimingReport { l_body, l_tot: l_body + k, fill: d0_i + d0_j - 1, iterations: k }
}

/// Closed-form timing of the three-dimensional array over a K-long dot
/// dimension.
pub fn timing_3d(shape: &ArchShape, k: usize, lat: &LatencyProfile) -> Result<TimingReport> {
    shape.validate()?;
    if k == 0 || !k.is_multiple_of(shape.d0_k) {
        return Err(Error::DimensionMismatch(format!(
            "K = {k} is not a positive multiple of d0_k = {}",
            shape.d0_k
        )));
    }
    let iterations = (k / shape.d0_k) as u64;
    let layers = shape.layers() as u64;
    let (d0_i, d0_j) = (shape.d0_i as u64, shape.d0_j as u64);
    let l_body = d0_i + d0_j - 1 + layers * lat.l_dot(shape.d_p) as u64;
    Ok(TimingReport { l_body, l_tot: l_body + iterations, fill: d0_i + d0_j - 1, iterations })
}
