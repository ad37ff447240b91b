//! Adjacency kernels.
//!
//! The simulator and both gradient engines only ever touch the adjacency
//! matrix through three products: `A x`, `Aᵀ y`, and `A X` for a square
//! row-major block `X`. [`Adjacency`] abstracts those so the same code runs
//! on compressed sparse rows or on a dense expansion.

/// Which storage the kernels should run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Sparse,
    Dense,
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Sparse => f.write_str("sparse"),
            Kernel::Dense => f.write_str("dense"),
        }
    }
}

pub trait Adjacency: Sync {
    fn dim(&self) -> usize;

    /// `out = A x`, i.e. `out_i = Σ_j a_ij x_j` (the row-vector product `x Aᵀ`).
    fn mul_vec_into(&self, x: &[f64], out: &mut [f64]);

    /// `out = Aᵀ y`, i.e. `out_j = Σ_i y_i a_ij` (the row-vector product `y A`).
    fn tmul_vec_into(&self, y: &[f64], out: &mut [f64]);

    /// `out = A X` where `X` and `out` are `dim × dim` row-major blocks.
    fn mul_mat_into(&self, x: &[f64], out: &mut [f64]);
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Triplets must not repeat a
    /// position; within each row the column indices end up sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; triplets.len()];
        let mut values = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = next[r];
            indices[slot] = c;
            values[slot] = v;
            next[r] += 1;
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        m.sort_rows();
        m
    }

    fn sort_rows(&mut self) {
        for r in 0..self.nrows {
            let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
            if hi - lo < 2 {
                continue;
            }
            let mut row: Vec<(usize, f64)> = self.indices[lo..hi]
                .iter()
                .copied()
                .zip(self.values[lo..hi].iter().copied())
                .collect();
            row.sort_by_key(|&(c, _)| c);
            for (k, (c, v)) in row.into_iter().enumerate() {
                self.indices[lo + k] = c;
                self.values[lo + k] = v;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<(usize, usize, f64)> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values stored in row `r`, columns ascending.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            d.data[r * self.ncols + c] = v;
        }
        d
    }

    /// `out = self · x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (r, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *o = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.ncols)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn tmul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.ncols)) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
    }
}

/// Sparse adjacency: `A` and `Aᵀ` both in CSR so every product is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    pub(crate) a: CsrMatrix,
    pub(crate) at: CsrMatrix,
}

impl Adjacency for SparseAdjacency {
    fn dim(&self) -> usize {
        self.a.nrows
    }

    fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        self.a.mul_vec_into(x, out);
    }

    fn tmul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        self.at.mul_vec_into(y, out);
    }

    fn mul_mat_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.a.ncols;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, out_row) in out.chunks_exact_mut(n).enumerate() {
            let (cols, vals) = self.a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let x_row = &x[c * n..(c + 1) * n];
                for (o, xv) in out_row.iter_mut().zip(x_row) {
                    *o += v * xv;
                }
            }
        }
    }
}

impl Adjacency for DenseMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        DenseMatrix::mul_vec_into(self, x, out);
    }

    fn tmul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        DenseMatrix::tmul_vec_into(self, y, out);
    }

    fn mul_mat_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.ncols;
        out.iter_mut().for_each(|o| *o = 0.0);
        // i-k-j order; every entry of A is visited, zero or not.
        for (a_row, out_row) in self.data.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for (&a, x_row) in a_row.iter().zip(x.chunks_exact(n)) {
                for (o, xv) in out_row.iter_mut().zip(x_row) {
                    *o += a * xv;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(3, 3, &[(0, 2, 2.0), (0, 1, 1.0), (2, 0, 3.0)])
    }

    #[test]
    fn rows_are_sorted() {
        let m = sample();
        assert_eq!(m.row(0).0, &[1, 2]);
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn transpose_swaps_entries() {
        let t = sample().transpose();
        assert_eq!(t.get(2, 0), 2.0);
        assert_eq!(t.get(0, 2), 3.0);
        assert_eq!(t.nnz(), 3);
    }

    #[test]
    fn dense_and_sparse_products_agree() {
        let a = sample();
        let adj = SparseAdjacency {
            at: a.transpose(),
            a: a.clone(),
        };
        let d = a.to_dense();
        let x = [1.0, -2.0, 0.5];
        let (mut s, mut t) = ([0.0; 3], [0.0; 3]);
        adj.mul_vec_into(&x, &mut s);
        Adjacency::mul_vec_into(&d, &x, &mut t);
        assert_eq!(s, t);
        adj.tmul_vec_into(&x, &mut s);
        Adjacency::tmul_vec_into(&d, &x, &mut t);
        assert_eq!(s, t);

        let block: Vec<f64> = (0..9).map(|v| v as f64 - 4.0).collect();
        let (mut s9, mut t9) = (vec![0.0; 9], vec![0.0; 9]);
        adj.mul_mat_into(&block, &mut s9);
        d.mul_mat_into(&block, &mut t9);
        assert_eq!(s9, t9);
    }
}
