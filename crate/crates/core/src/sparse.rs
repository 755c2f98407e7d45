//! Row-compressed square matrix used for transition weights.

use crate::scalar::Scalar;

/// Square sparse matrix in compressed-row form. Columns within a row are
/// sorted ascending; zero entries are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<F> {
    size: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<F>,
}

impl<F: Scalar> CsrMatrix<F> {
    /// Builds a `size`×`size` matrix from `(row, col, value)` triplets.
    /// Duplicate coordinates are summed; zeros are dropped.
    pub fn from_triplets(size: usize, mut triplets: Vec<(usize, usize, F)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; size + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<F> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < size && c < size, "entry ({r}, {c}) outside {size}x{size}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..size {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = CsrMatrix {
            size,
            row_ptr,
            cols,
            vals,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        if self.vals.iter().all(|v| *v != F::zero()) {
            return;
        }
        let mut row_ptr = vec![0usize; self.size + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.size {
            for (c, v) in self.row(r) {
                if v != F::zero() {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero `(column, value)` pairs of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(i) => self.vals[span.start + i],
            Err(_) => F::zero(),
        }
    }

    /// All nonzero entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, F)> + '_ {
        (0..self.size).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `out = x · A` (row vector times matrix).
    pub fn left_mul(&self, x: &[F], out: &mut [F]) {
        out.iter_mut().for_each(|v| *v = F::zero());
        for (r, &xr) in x.iter().enumerate() {
            if xr == F::zero() {
                continue;
            }
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            for (&c, &v) in self.cols[span.clone()].iter().zip(&self.vals[span]) {
                out[c] += xr * v;
            }
        }
    }

    /// `out = x · Aᵀ`, i.e. `out[r] = Σ_c A[r][c] x[c]`.
    pub fn right_mul(&self, x: &[F], out: &mut [F]) {
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut acc = F::zero();
            for (&c, &v) in self.cols[span.clone()].iter().zip(&self.vals[span]) {
                acc += v * x[c];
            }
            *o = acc;
        }
    }

    pub fn is_upper_triangular(&self) -> bool {
        self.entries().all(|(r, c, _)| c >= r)
    }

    pub fn cast<G: Scalar>(&self) -> CsrMatrix<G> {
        CsrMatrix {
            size: self.size,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.vals.iter().map(|&v| G::of(v.widen())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &CsrMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.size()).map(|r| (0..m.size()).map(|c| m.get(r, c)).collect()).collect()
    }

    #[test]
    fn triplets_are_sorted_summed_and_pruned() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![(1, 2, 0.5), (0, 0, 1.0), (1, 2, 0.25), (2, 0, 0.0), (0, 1, 2.0)],
        );
        assert_eq!(m.nnz(), 3);
        assert_eq!(
            dense(&m),
            vec![vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 0.75], vec![0.0, 0.0, 0.0]]
        );
    }

    #[test]
    fn products_match_dense_arithmetic() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0), (1, 2, 3.0), (2, 2, 1.0)],
        );
        let x = [1.0, 2.0, 3.0];
        let mut out = [0.0; 3];
        m.left_mul(&x, &mut out);
        assert_eq!(out, [1.0, 4.0, 9.0]);
        m.right_mul(&x, &mut out);
        assert_eq!(out, [5.0, 11.0, 3.0]);
        assert!(m.is_upper_triangular());
    }
}
