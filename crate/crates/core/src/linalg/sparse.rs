use nalgebra::{DMatrix, DVector};

/// Square sparse matrix in compressed sparse row form.
///
/// Built from triplets; duplicate entries are summed and exact zeros dropped
/// on finalization. All matrices assembled in this crate are structurally
/// symmetric (mass, stiffness, and mass-patterned Jacobian blocks), which the
/// band reordering in [`super::Factorization`] relies on.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Assemble from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&t| (triplets[t].0, triplets[t].1));

        let mut row_counts = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (i, j, v) = triplets[t];
            assert!(i < n && j < n, "triplet index out of range");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_counts[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_counts[i + 1] += row_counts[i];
        }
        let mut op = Self {
            n,
            row_ptr: row_counts,
            col_idx,
            vals,
        };
        op.drop_zeros();
        op
    }

    /// Build directly from CSR arrays (rows sorted by column, no duplicates).
    pub fn from_csr(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), vals.len());
        Self {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    fn drop_zeros(&mut self) {
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.col_idx.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for i in 0..self.n {
            for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.vals[t] != 0.0 {
                    col_idx.push(self.col_idx[t]);
                    vals.push(self.vals[t]);
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.vals = vals;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(t) => vals[t],
            Err(_) => 0.0,
        }
    }

    pub(crate) fn raw_parts(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.col_idx, &self.vals)
    }

    pub(crate) fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.vals {
            *v *= c;
        }
    }

    pub fn apply_to(&self, y: &mut DVector<f64>, x: &DVector<f64>) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        self.apply_to(&mut y, x);
        y
    }

    /// Sparse-times-dense product `A * B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(b.nrows(), self.n);
        let mut out = DMatrix::zeros(self.n, b.ncols());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for c in 0..b.ncols() {
                let mut acc = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    acc += v * b[(j, c)];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Exact symmetrization: replace paired entries by their average.
    pub fn symmetrize(&mut self) {
        let snapshot = self.clone();
        for i in 0..self.n {
            for t in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[t];
                let vji = snapshot.get(j, i);
                self.vals[t] = 0.5 * (self.vals[t] + vji);
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if (v - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_duplicates_and_drop_zeros() {
        let a = SparseOperator::from_triplets(
            3,
            &[
                (0, 0, 1.0),
                (0, 0, 2.0),
                (1, 2, 4.0),
                (2, 1, 4.0),
                (1, 1, 0.0),
                (2, 2, 5.0),
            ],
        );
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 2), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 4);
        assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn matvec_matches_dense() {
        let a = SparseOperator::from_triplets(
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 2, 1.5)],
        );
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = a.matvec(&x);
        let yd = a.to_dense() * &x;
        assert!((y - yd).norm() < 1e-14);
    }
}
