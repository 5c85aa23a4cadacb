use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use super::LinalgError;

/// Dimension at or below which truncated decompositions go through the dense
/// eigensolver instead of Lanczos iterations.
pub const DENSE_EIG_LIMIT: usize = 2000;

const SYM_EIG_MAX_ITER: usize = 50_000;

/// Eigenvalues (nonincreasing) with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    /// Keep the leading `rank` pairs.
    pub fn truncated(mut self, rank: usize) -> Self {
        self.values.truncate(rank);
        self.vectors = self.vectors.columns(0, rank).into_owned();
        self
    }
}

/// Symmetric operator available through matrix-vector products.
pub trait SymmetricOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>, y: &mut DVector<f64>);
    /// Dense form, requested only at small dimension.
    fn materialize(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// Borrowed dense matrix viewed as a [`SymmetricOp`].
pub struct DenseOp<'a>(pub &'a DMatrix<f64>);

impl SymmetricOp for DenseOp<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        y.gemv(1.0, self.0, x, 0.0);
    }

    fn materialize(&self) -> Option<DMatrix<f64>> {
        Some(self.0.clone())
    }
}

/// Full symmetric eigendecomposition, eigenvalues sorted nonincreasing.
///
/// The input is symmetrized first (the contract tolerates asymmetry up to
/// 1e-10 absolute). Eigenvector signs follow the convention that the first
/// coordinate of significant magnitude is positive, so decompositions are
/// reproducible across runs.
pub fn sym_eig(s: &DMatrix<f64>) -> Result<EigenPairs, LinalgError> {
    assert_eq!(s.nrows(), s.ncols(), "sym_eig needs a square matrix");
    let n = s.nrows();
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = 0.5 * (s + s.transpose());
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, SYM_EIG_MAX_ITER).ok_or(
        LinalgError::EigNonConvergence {
            iterations: SYM_EIG_MAX_ITER,
        },
    )?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (new, &old) in idx.iter().enumerate() {
        vectors.column_mut(new).copy_from(&eig.eigenvectors.column(old));
    }
    fix_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

/// Make the first significant coordinate of every column positive.
fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let maxabs = col.amax();
        if maxabs == 0.0 {
            continue;
        }
        let lead = col.iter().find(|v| v.abs() > 1e-12 * maxabs).copied();
        if let Some(l) = lead {
            if l < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Leading `rank` eigenpairs of a symmetric positive semidefinite operator.
///
/// Small problems are materialized and decomposed densely; larger ones use
/// Lanczos iterations with full reorthogonalization and a fixed internal
/// seed, so results are deterministic.
pub fn truncated_sym_eig(op: &dyn SymmetricOp, rank: usize) -> Result<EigenPairs, LinalgError> {
    let n = op.dim();
    if rank > n {
        return Err(LinalgError::RankExceedsDimension { rank, dim: n });
    }
    if rank == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: DMatrix::zeros(n, 0),
        });
    }
    if n <= DENSE_EIG_LIMIT {
        if let Some(s) = op.materialize() {
            return Ok(sym_eig(&s)?.truncated(rank));
        }
    }
    lanczos(op, rank)
}

fn lanczos(op: &dyn SymmetricOp, rank: usize) -> Result<EigenPairs, LinalgError> {
    let n = op.dim();
    let residual_accept = 1e-6;
    let residual_target = 1e-9;

    let mut best: Option<(f64, EigenPairs)> = None;
    let mut total_iters = 0usize;
    for attempt in 0..3 {
        let m = ((2 + attempt) * rank + 20 * (attempt + 1) + 20).min(n);
        let pairs = lanczos_basis(op, rank, m)?;
        total_iters += m;
        let worst = worst_residual(op, &pairs);
        let scale = pairs.values.first().copied().unwrap_or(0.0).abs().max(1e-300);
        if worst <= residual_target * scale {
            return Ok(pairs);
        }
        if best.as_ref().map_or(true, |(w, _)| worst < *w) {
            best = Some((worst, pairs));
        }
        if m == n {
            break;
        }
    }
    let (worst, pairs) = best.expect("at least one attempt ran");
    let scale = pairs.values.first().copied().unwrap_or(0.0).abs().max(1e-300);
    if worst <= residual_accept * scale {
        Ok(pairs)
    } else {
        Err(LinalgError::EigNonConvergence {
            iterations: total_iters,
        })
    }
}

fn lanczos_basis(op: &dyn SymmetricOp, rank: usize, m: usize) -> Result<EigenPairs, LinalgError> {
    let n = op.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(0x5f3f_17a2_9c1d_4e88);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut alphas: Vec<f64> = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);

    let mut q = random_unit(&mut rng, n);
    let mut w = DVector::zeros(n);
    for j in 0..m {
        basis.push(q.clone());
        op.apply(&q, &mut w);
        if j > 0 {
            w.axpy(-betas[j - 1], &basis[j - 1], 1.0);
        }
        let alpha = q.dot(&w);
        w.axpy(-alpha, &q, 1.0);
        alphas.push(alpha);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        if j + 1 == m {
            break;
        }
        let beta = w.norm();
        if beta <= 1e-13 * alphas.iter().fold(1.0f64, |a, b| a.max(b.abs())) {
            // invariant subspace exhausted: continue with a fresh direction
            let mut fresh = random_unit(&mut rng, n);
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&fresh);
                    fresh.axpy(-c, b, 1.0);
                }
            }
            let norm = fresh.norm();
            if norm <= 1e-12 {
                break; // entire space spanned
            }
            betas.push(0.0);
            q = fresh / norm;
        } else {
            betas.push(beta);
            q = &w / beta;
        }
    }

    let mm = basis.len();
    let mut tri = DMatrix::zeros(mm, mm);
    for j in 0..mm {
        tri[(j, j)] = alphas[j];
        if j + 1 < mm {
            tri[(j, j + 1)] = betas[j];
            tri[(j + 1, j)] = betas[j];
        }
    }
    let ritz = sym_eig(&tri)?;
    let keep = rank.min(mm);
    let mut vectors = DMatrix::zeros(n, keep);
    for c in 0..keep {
        let mut col = DVector::zeros(n);
        for (j, b) in basis.iter().enumerate() {
            col.axpy(ritz.vectors[(j, c)], b, 1.0);
        }
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        vectors.column_mut(c).copy_from(&col);
    }
    fix_signs(&mut vectors);
    Ok(EigenPairs {
        values: ritz.values[..keep].to_vec(),
        vectors,
    })
}

fn worst_residual(op: &dyn SymmetricOp, pairs: &EigenPairs) -> f64 {
    let n = op.dim();
    let mut y = DVector::zeros(n);
    let mut worst = 0.0f64;
    for (c, &val) in pairs.values.iter().enumerate() {
        let x = pairs.vectors.column(c).into_owned();
        op.apply(&x, &mut y);
        y.axpy(-val, &x, 1.0);
        worst = worst.max(y.norm());
    }
    worst
}

fn random_unit(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha12Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        0.5 * (&a + a.transpose())
    }

    #[test]
    fn identity_eigenvalues() {
        let pairs = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        for v in &pairs.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_sorted_axis_aligned() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let pairs = sym_eig(&d).unwrap();
        assert!((pairs.values[0] - 4.0).abs() < 1e-14);
        assert!((pairs.values[1] - 1.0).abs() < 1e-14);
        assert!((pairs.vectors[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((pairs.vectors[(0, 1)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reconstruction_error_small() {
        let s = random_symmetric(10, 42);
        let pairs = sym_eig(&s).unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(pairs.values.clone()));
        let rec = &pairs.vectors * lam * pairs.vectors.transpose();
        let err = (&rec - &s).norm() / s.norm();
        assert!(err <= 1e-8, "reconstruction error {err}");
        let vtv = pairs.vectors.transpose() * &pairs.vectors;
        let orth = (&vtv - DMatrix::identity(10, 10)).amax();
        assert!(orth <= 1e-8, "orthonormality defect {orth}");
    }

    #[test]
    fn truncated_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 3.0, 1.0]));
        let pairs = truncated_sym_eig(&DenseOp(&d), 2).unwrap();
        assert!((pairs.values[0] - 5.0).abs() < 1e-12);
        assert!((pairs.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_full_rank_matches_dense() {
        let s = {
            let a = random_symmetric(12, 5);
            &a * a.transpose() // PSD
        };
        let dense = sym_eig(&s).unwrap();
        let trunc = truncated_sym_eig(&DenseOp(&s), 12).unwrap();
        for (a, b) in dense.values.iter().zip(&trunc.values) {
            assert!((a - b).abs() <= 1e-8 * dense.values[0].abs().max(1.0));
        }
    }

    #[test]
    fn lanczos_on_kernel_like_matrix() {
        // squared-exponential kernel on 100 grid points, forced through the
        // Lanczos path, checked against the dense decomposition
        let n = 100;
        let ell = 100.0 / 5.0;
        let pts: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let k = DMatrix::from_fn(n, n, |i, j| {
            let d = pts[i] - pts[j];
            (-d * d / (2.0 * ell * ell)).exp()
        });
        let rank = 20;
        let pairs = lanczos(&DenseOp(&k), rank).unwrap();
        let dense = sym_eig(&k).unwrap();
        let s1 = dense.values[0];
        for i in 0..rank {
            assert!(
                (pairs.values[i] - dense.values[i]).abs() <= 1e-6 * s1,
                "value {i}: {} vs {}",
                pairs.values[i],
                dense.values[i]
            );
            // residual check per returned pair
            let x = pairs.vectors.column(i).into_owned();
            let r = (&k * &x - pairs.values[i] * &x).norm();
            assert!(r <= 1e-6 * s1, "pair {i} residual {r}");
        }
    }

    #[test]
    fn rank_exceeding_dimension_rejected() {
        let d = DMatrix::identity(3, 3);
        assert!(matches!(
            truncated_sym_eig(&DenseOp(&d), 4),
            Err(LinalgError::RankExceedsDimension { .. })
        ));
    }
}
