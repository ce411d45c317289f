//! Dense single-precision matrices with an explicit storage layout, block
//! views, and the triple-loop reference product every simulator output is
//! checked against.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    RowMajor,
    ColMajor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    layout: Layout,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, layout: Layout, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, layout, data })
    }

    pub fn zeros(rows: usize, cols: usize, layout: Layout) -> Self {
        Self { rows, cols, layout, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        layout: Layout,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Self {
        let mut m = Self::zeros(rows, cols, layout);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds a row-major matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, layout: Layout::RowMajor, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, Layout::RowMajor, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Raw storage in the matrix's own layout.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        match self.layout {
            Layout::RowMajor => i * self.cols + j,
            Layout::ColMajor => j * self.rows + i,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[self.offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    /// Logical elements in row-major order, whatever the storage layout.
    pub fn to_row_major_vec(&self) -> Vec<f32> {
        match self.layout {
            Layout::RowMajor => self.data.clone(),
            Layout::ColMajor => {
                let mut out = Vec::with_capacity(self.data.len());
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        out.push(self.get(i, j));
                    }
                }
                out
            }
        }
    }

    /// Same shape and identical bit patterns at every logical position.
    pub fn bitwise_eq(&self, other: &Matrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| self.get(i, j).to_bits() == other.get(i, j).to_bits())
            })
    }

    /// Largest `|a - b| / max(|a|, |b|, 1)` over all elements.
    pub fn max_rel_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j) as f64;
                let b = other.get(i, j) as f64;
                let scale = a.abs().max(b.abs()).max(1.0);
                worst = worst.max((a - b).abs() / scale);
            }
        }
        worst
    }

    pub fn block_view(&self, block_rows: usize, block_cols: usize) -> Result<BlockView<'_>> {
        BlockView::new(self, block_rows, block_cols)
    }

    /// Writes the flat binary format: two little-endian `u64` dimensions
    /// (rows, then cols) followed by the values as little-endian `f32` in
    /// row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in self.to_row_major_vec() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads the flat binary format into a row-major matrix.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut dim = [0u8; 8];
        r.read_exact(&mut dim)?;
        let rows = usize::try_from(u64::from_le_bytes(dim))
            .map_err(|_| Error::MalformedData("row count overflows".into()))?;
        r.read_exact(&mut dim)?;
        let cols = usize::try_from(u64::from_le_bytes(dim))
            .map_err(|_| Error::MalformedData("column count overflows".into()))?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::MalformedData("dimensions overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(Error::MalformedData(format!(
                "expected {} payload bytes for {rows}x{cols}, found {}",
                n * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(rows, cols, Layout::RowMajor, data)
    }

    /// Comma-separated rows, for small debug matrices.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f32>> = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedData(format!("line {}: {e}", n + 1)))?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::MalformedData(format!(
                        "line {} has {} values, expected {}",
                        n + 1,
                        row.len(),
                        first.len()
                    )));
                }
            }
            rows.push(row);
        }
        Ok(Self::from_rows(&rows))
    }
}

/// Read-only partition of a matrix into equal blocks.
#[derive(Debug, Clone, Copy)]
pub struct BlockView<'a> {
    base: &'a Matrix,
    block_rows: usize,
    block_cols: usize,
}

impl<'a> BlockView<'a> {
    pub fn new(base: &'a Matrix, block_rows: usize, block_cols: usize) -> Result<Self> {
        if block_rows == 0
            || block_cols == 0
            || !base.rows.is_multiple_of(block_rows)
            || !base.cols.is_multiple_of(block_cols)
        {
            return Err(Error::IndivisiblePartition {
                rows: base.rows,
                cols: base.cols,
                block_rows,
                block_cols,
            });
        }
        Ok(Self { base, block_rows, block_cols })
    }

    /// Number of blocks along rows and columns.
    pub fn grid(&self) -> (usize, usize) {
        (self.base.rows / self.block_rows, self.base.cols / self.block_cols)
    }

    pub fn block_size(&self) -> (usize, usize) {
        (self.block_rows, self.block_cols)
    }

    /// Element `(i, j)` of block `(bi, bj)`.
    #[inline]
    pub fn get(&self, bi: usize, bj: usize, i: usize, j: usize) -> f32 {
        debug_assert!(i < self.block_rows && j < self.block_cols);
        self.base.get(self.block_rows * bi + i, self.block_cols * bj + j)
    }

    /// Copies block `(bi, bj)` into a new row-major matrix.
    pub fn block(&self, bi: usize, bj: usize) -> Matrix {
        Matrix::from_fn(self.block_rows, self.block_cols, Layout::RowMajor, |i, j| {
            self.get(bi, bj, i, j)
        })
    }
}

pub fn transpose(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.cols, m.rows, m.layout, |i, j| m.get(j, i))
}

/// Same logical matrix stored in `layout`.
pub fn relayout(m: &Matrix, layout: Layout) -> Matrix {
    if m.layout == layout {
        return m.clone();
    }
    Matrix::from_fn(m.rows, m.cols, layout, |i, j| m.get(i, j))
}

/// Reference product. Each output starts at zero and accumulates one
/// single-precision product at a time with `k` strictly ascending.
pub fn oracle_matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.rows, b.cols, Layout::RowMajor);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = 0.0f32;
            for k in 0..a.cols {
                acc += a.get(i, k) * b.get(k, j);
            }
            c.set(i, j, acc);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Second reference with (k, i, j) loop order. Per-element accumulation
    /// order is still ascending k, so results match bit for bit.
    fn kij_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = vec![0.0f32; a.rows() * b.cols()];
        for k in 0..a.cols() {
            for i in 0..a.rows() {
                let aik = a.get(i, k);
                for j in 0..b.cols() {
                    c[i * b.cols() + j] += aik * b.get(k, j);
                }
            }
        }
        Matrix::new(a.rows(), b.cols(), Layout::RowMajor, c).unwrap()
    }

    fn random(rows: usize, cols: usize, layout: Layout, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, layout, |_, _| rng.gen_range(-1.0f32..1.0))
    }

    #[test]
    fn identity_product() {
        let i2 = Matrix::identity(2);
        assert!(oracle_matmul(&i2, &i2).unwrap().bitwise_eq(&i2));
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        let c = oracle_matmul(&a, &b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[19.0, 22.0], [43.0, 50.0]]));
    }

    #[test]
    fn random_product_matches_second_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(64, 48, Layout::RowMajor, &mut rng);
        let b = random(48, 32, Layout::ColMajor, &mut rng);
        let c = oracle_matmul(&a, &b).unwrap();
        let d = kij_matmul(&a, &b);
        assert!(c.max_rel_diff(&d) <= 1e-5);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Matrix::zeros(2, 3, Layout::RowMajor);
        assert!(matches!(oracle_matmul(&a, &a), Err(Error::DimensionMismatch(_))));
        assert!(Matrix::new(2, 2, Layout::RowMajor, vec![0.0; 3]).is_err());
    }

    #[test]
    fn block_view_indexing() {
        let m = Matrix::from_fn(4, 4, Layout::RowMajor, |i, j| (i * 4 + j) as f32);
        let v = m.block_view(2, 2).unwrap();
        assert_eq!(v.get(1, 1, 0, 0), m.get(2, 2));
        assert_eq!(v.grid(), (2, 2));
        assert_eq!(v.block(0, 1), Matrix::from_rows(&[[2.0, 3.0], [6.0, 7.0]]));
        assert!(matches!(m.block_view(3, 2), Err(Error::IndivisiblePartition { .. })));
    }

    #[test]
    fn outer_product_when_k_is_one() {
        let col = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
        let row = Matrix::from_rows(&[[4.0, 5.0]]);
        let c = oracle_matmul(&col, &row).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(c.get(i, j), col.get(i, 0) * row.get(0, j));
            }
        }
    }

    #[test]
    fn binary_and_csv_io() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(3, 5, Layout::ColMajor, &mut rng);
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 15 * 4);
        assert_eq!(&buf[..8], &3u64.to_le_bytes());
        assert_eq!(&buf[16..20], &m.get(0, 0).to_le_bytes());
        assert_eq!(&buf[20..24], &m.get(0, 1).to_le_bytes());
        let back = Matrix::read_binary(&buf[..]).unwrap();
        assert!(back.bitwise_eq(&m));
        assert_eq!(back.layout(), Layout::RowMajor);
        assert!(Matrix::read_binary(&buf[..buf.len() - 1]).is_err());

        let mut csv = Vec::new();
        m.write_csv(&mut csv).unwrap();
        assert!(Matrix::read_csv(&csv[..]).unwrap().bitwise_eq(&m));
        assert!(Matrix::read_csv(&b"1,2\n3\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn transpose_is_involution(r in 1usize..8, c in 1usize..8, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random(r, c, Layout::RowMajor, &mut rng);
            prop_assert!(transpose(&transpose(&m)).bitwise_eq(&m));
            let t = transpose(&m);
            prop_assert_eq!(t.get(c - 1, 0), m.get(0, c - 1));
        }

        #[test]
        fn relayout_preserves_elements(r in 1usize..8, c in 1usize..8, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random(r, c, Layout::RowMajor, &mut rng);
            let cm = relayout(&m, Layout::ColMajor);
            prop_assert_eq!(cm.layout(), Layout::ColMajor);
            prop_assert!(cm.bitwise_eq(&m));
            prop_assert!(relayout(&cm, Layout::RowMajor).bitwise_eq(&m));
        }

        #[test]
        fn block_view_reassembles(br in 1usize..4, bc in 1usize..4, gr in 1usize..4, gc in 1usize..4, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random(br * gr, bc * gc, Layout::ColMajor, &mut rng);
            let v = m.block_view(br, bc).unwrap();
            let mut rebuilt = Matrix::zeros(m.rows(), m.cols(), Layout::RowMajor);
            for bi in 0..gr {
                for bj in 0..gc {
                    for i in 0..br {
                        for j in 0..bc {
                            rebuilt.set(br * bi + i, bc * bj + j, v.get(bi, bj, i, j));
                        }
                    }
                }
            }
            prop_assert!(rebuilt.bitwise_eq(&m));
        }
    }
}
