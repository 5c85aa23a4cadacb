use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{LinalgError, SparseOperator, SINGULAR_PIVOT_REL};

/// Reusable LU factors of a sparse operator.
///
/// The operator is permuted with reverse Cuthill-McKee into band form and
/// factored by banded LU with partial pivoting. Factors are read-only after
/// construction; [`Factorization::solve`] allocates its own scratch, so
/// concurrent solves from multiple workers are safe.
#[derive(Debug)]
pub struct Factorization {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    /// Column-major band storage; entry (i, j) lives at `j * ldab + kl + ku + i - j`.
    band: Vec<f64>,
    ipiv: Vec<usize>,
    /// `perm[new] = old` node ordering.
    perm: Vec<usize>,
    iperm: Vec<usize>,
}

impl Factorization {
    pub fn new(a: &SparseOperator) -> Result<Self, LinalgError> {
        let n = a.dim();
        assert!(n > 0, "cannot factorize an empty operator");
        let perm = reverse_cuthill_mckee(a);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Half bandwidths in the permuted ordering.
        let mut kl = 0usize;
        let mut ku = 0usize;
        let (row_ptr, col_idx, _) = a.raw_parts();
        for i in 0..n {
            let pi = iperm[i];
            for t in row_ptr[i]..row_ptr[i + 1] {
                let pj = iperm[col_idx[t]];
                if pi > pj {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }

        let ldab = 2 * kl + ku + 1;
        let mut band = vec![0.0f64; ldab * n];
        let (_, _, vals) = a.raw_parts();
        for i in 0..n {
            let pi = iperm[i];
            for t in row_ptr[i]..row_ptr[i + 1] {
                let pj = iperm[col_idx[t]];
                band[pj * ldab + kl + ku + pi - pj] = vals[t];
            }
        }

        let pivot_floor = SINGULAR_PIVOT_REL * a.max_abs();
        let mut fact = Self {
            n,
            kl,
            ku,
            ldab,
            band,
            ipiv: vec![0usize; n],
            perm,
            iperm,
        };
        fact.decompose(pivot_floor)?;
        Ok(fact)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    /// Banded LU with partial pivoting; U widens to `kl + ku` diagonals.
    fn decompose(&mut self, pivot_floor: f64) -> Result<(), LinalgError> {
        let n = self.n;
        let (kl, ku, ldab) = (self.kl, self.ku, self.ldab);
        let kv = kl + ku; // width of U above the diagonal after pivoting
        for j in 0..n {
            let imax = (j + kl).min(n - 1);
            // pivot search in column j, rows j..=imax
            let mut p = j;
            let mut pmax = self.band[self.slot(j, j)].abs();
            for i in (j + 1)..=imax {
                let v = self.band[self.slot(i, j)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if !(pmax > pivot_floor) || !pmax.is_finite() {
                return Err(LinalgError::Singular {
                    column: j,
                    pivot: pmax,
                });
            }
            self.ipiv[j] = p;
            if p != j {
                let jend = (j + kv).min(n - 1);
                for jj in j..=jend {
                    let a = self.slot(j, jj);
                    let b = self.slot(p, jj);
                    self.band.swap(a, b);
                }
            }
            // scale L column
            let piv = self.band[self.slot(j, j)];
            let lstart = self.slot(j + 1, j);
            let lcount = imax.saturating_sub(j);
            for t in 0..lcount {
                self.band[lstart + t] /= piv;
            }
            if lcount == 0 {
                continue;
            }
            // rank-1 update, column by column so inner loops are contiguous
            let jend = (j + kv).min(n - 1);
            let (head, tail) = self.band.split_at_mut((j + 1) * ldab);
            let lcol = &head[lstart..lstart + lcount];
            for jj in (j + 1)..=jend {
                let off = (jj - j - 1) * ldab;
                let urow = kl + ku + j as isize as usize - jj + off; // slot(j, jj) - (j+1)*ldab
                let ujj = tail[urow];
                if ujj == 0.0 {
                    continue;
                }
                let ustart = urow + 1; // slot(j+1, jj) relative to tail
                let seg = &mut tail[ustart..ustart + lcount];
                for (s, &l) in seg.iter_mut().zip(lcol) {
                    *s -= l * ujj;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Half bandwidth of the permuted operator (diagnostic).
    pub fn bandwidth(&self) -> usize {
        self.kl.max(self.ku)
    }

    /// Solve `A x = b` against the stored factors.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut x = vec![0.0f64; self.n];
        for i in 0..self.n {
            x[self.iperm[i]] = b[i];
        }
        self.solve_permuted_in_place(&mut x);
        let mut out = DVector::zeros(self.n);
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        Ok(out)
    }

    fn solve_permuted_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku;
        // forward: apply row interchanges and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let imax = (j + kl).min(n - 1);
            let xj = x[j];
            if xj != 0.0 {
                let base = self.slot(j + 1, j);
                for (t, xi) in x[j + 1..=imax].iter_mut().enumerate() {
                    *xi -= self.band[base + t] * xj;
                }
            }
        }
        // backward: U with widened band
        for j in (0..n).rev() {
            let xj = x[j] / self.band[self.slot(j, j)];
            x[j] = xj;
            if xj != 0.0 {
                let istart = j.saturating_sub(kv);
                let base = self.slot(istart, j);
                for (t, xi) in x[istart..j].iter_mut().enumerate() {
                    *xi -= self.band[base + t] * xj;
                }
            }
        }
    }

    /// Solve against every column of `b`; columns run in parallel.
    pub fn solve_columns(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
        if b.nrows() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                got: b.nrows(),
            });
        }
        let cols: Vec<DVector<f64>> = (0..b.ncols())
            .into_par_iter()
            .map(|c| {
                let col = DVector::from_column_slice(b.column(c).as_slice());
                self.solve(&col).expect("dimension checked above")
            })
            .collect();
        Ok(DMatrix::from_columns(&cols))
    }
}

/// Reverse Cuthill-McKee ordering on the structural pattern.
///
/// Returns `perm` with `perm[new] = old`. Deterministic: BFS starts at the
/// minimum-degree node, neighbours visited by (degree, index).
fn reverse_cuthill_mckee(a: &SparseOperator) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    let mut scratch: Vec<usize> = Vec::new();

    loop {
        let start = match (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
        {
            Some(s) => s,
            None => break,
        };
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            scratch.clear();
            let (cols, _) = a.row(u);
            for &v in cols {
                if v != u && !visited[v] {
                    visited[v] = true;
                    scratch.push(v);
                }
            }
            scratch.sort_unstable_by_key(|&v| (degree[v], v));
            for &v in &scratch {
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}
