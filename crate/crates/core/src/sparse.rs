//! Compressed sparse row matrices and the linear solvers used by the FEM layer.
//!
//! Direct solves are backed by faer's sparse LU and Cholesky; large systems
//! fall back to BiCGStab preconditioned with ILU(0).

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMat, SymbolicSparseColMatRef};
use faer::Side;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix pattern changed between factorizations")]
    PatternMismatch,
    #[error("Krylov solver stalled after {iterations} iterations at relative residual {residual:e}")]
    KrylovStalled { iterations: usize, residual: f64 },
    #[error("inverse iteration did not converge in {iterations} iterations (last change {change:e})")]
    EigenNotConverged { iterations: usize, change: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; nrows + 1];
        for &(i, _, _) in triplets {
            count[i + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, usize)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((count[i]..count[i + 1]).map(|p| (cols[p], p)));
            // Stable sort keeps the summation order of duplicates deterministic.
            row.sort_by_key(|&(c, _)| c);
            let mut last = usize::MAX;
            for &(c, p) in &row {
                if c == last {
                    *data.last_mut().unwrap() += vals[p];
                } else {
                    indices.push(c);
                    data.push(vals[p]);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), data: vec![1.0; n] }
    }

    pub fn diagonal_matrix(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.data.copy_from_slice(d);
        m
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                t.push((i, self.indices[p], self.data[p]));
            }
        }
        t
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.data[self.indptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            y[i] = s;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for (i, j, v) in self.triplets() {
            t.push((j, i, v));
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `self + alpha · other` on the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Self {
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, alpha * v)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetric_part(&self) -> Self {
        self.add_scaled(1.0, &self.transpose()).scaled(0.5)
    }

    /// Largest `|A_ij − A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let diff = self.add_scaled(-1.0, &t);
        let max = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        diff.data.iter().fold(0.0f64, |m, v| m.max(v.abs())) / max.max(f64::MIN_POSITIVE)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.data[self.indptr[i]..self.indptr[i + 1]].iter().sum()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Adds `d` to the diagonal; every diagonal entry must be in the pattern.
    pub fn add_to_diagonal(&mut self, d: &[f64]) {
        for (i, &di) in d.iter().enumerate() {
            let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
            let p = row.binary_search(&i).expect("diagonal entry missing from pattern");
            self.data[self.indptr[i] + p] += di;
        }
    }

    /// Restriction to the rows and columns listed in `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (new_i, &i) in keep.iter().enumerate() {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = map[self.indices[p]];
                if j != usize::MAX {
                    t.push((new_i, j, self.data[p]));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), keep.len(), &t)
    }

    /// Column-compressed copy for faer (the CSR arrays of the transpose).
    fn to_faer(&self) -> SparseColMat<usize, f64> {
        let t = self.transpose();
        let symbolic = SymbolicSparseColMat::new_checked(self.nrows, self.ncols, t.indptr, None, t.indices);
        SparseColMat::new(symbolic, t.data)
    }

    fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows && self.ncols == other.ncols && self.indptr == other.indptr && self.indices == other.indices
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sparse LU whose symbolic analysis is reused across numeric refactorizations.
pub struct DirectSolver {
    pattern: CsrMatrix,
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
    /// Permutation from CSR value order to the faer (CSC) value order.
    csc_order: Vec<usize>,
}

impl DirectSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinearError> {
        let csc = a.to_faer();
        let symbolic = SymbolicLu::try_new(csc.symbolic()).map_err(|e| LinearError::Factorization(format!("{e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), csc.as_ref())
            .map_err(|e| LinearError::Factorization(format!("{e:?}")))?;
        // Track where each CSR entry lands in the CSC arrays to refactor without rebuilding.
        let mut marker = a.clone();
        marker.data = (0..a.nnz()).map(|p| p as f64).collect();
        let order = marker.transpose().data.into_iter().map(|v| v as usize).collect();
        Ok(DirectSolver { pattern: a.clone(), symbolic, lu, csc_order: order })
    }

    /// Numeric refactorization for a matrix with the original pattern.
    pub fn refactor(&mut self, a: &CsrMatrix) -> Result<(), LinearError> {
        if !self.pattern.same_pattern(a) {
            return Err(LinearError::PatternMismatch);
        }
        let t = self.pattern.transpose();
        let values: Vec<f64> = self.csc_order.iter().map(|&p| a.data[p]).collect();
        let symbolic = unsafe {
            SymbolicSparseColMatRef::new_unchecked(a.nrows, a.ncols, &t.indptr, None, &t.indices)
        };
        let mat = SparseColMatRef::new(symbolic, &values);
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| LinearError::Factorization(format!("{e:?}")))?;
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.lu.solve(ColRef::from_slice(b));
        (0..b.len()).map(|i| x[i]).collect()
    }
}

/// Whether the (symmetric) matrix admits a Cholesky factorization.
pub fn is_positive_definite(a: &CsrMatrix) -> bool {
    cholesky(a).is_ok()
}

pub struct CholeskySolver {
    llt: Llt<usize, f64>,
}

impl CholeskySolver {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.llt.solve(ColRef::from_slice(b));
        (0..b.len()).map(|i| x[i]).collect()
    }
}

pub fn cholesky(a: &CsrMatrix) -> Result<CholeskySolver, LinearError> {
    let csc = a.to_faer();
    let symbolic = SymbolicLlt::try_new(csc.symbolic(), Side::Lower).map_err(|e| LinearError::Factorization(format!("{e:?}")))?;
    let llt = Llt::try_new_with_symbolic(symbolic, csc.as_ref(), Side::Lower).map_err(|_| LinearError::NotPositiveDefinite)?;
    Ok(CholeskySolver { llt })
}

/// Incomplete LU with zero fill on the CSR pattern (diagonal must be present).
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Self {
        let mut lu = a.clone();
        let n = a.nrows;
        let diag: Vec<usize> = (0..n)
            .map(|i| lu.indptr[i] + lu.indices[lu.indptr[i]..lu.indptr[i + 1]].binary_search(&i).expect("missing diagonal"))
            .collect();
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in lu.indptr[i]..lu.indptr[i + 1] {
                pos[lu.indices[p]] = p;
            }
            for p in lu.indptr[i]..lu.indptr[i + 1] {
                let k = lu.indices[p];
                if k >= i {
                    break;
                }
                let pivot = lu.data[diag[k]];
                let lik = lu.data[p] / pivot;
                lu.data[p] = lik;
                for q in diag[k] + 1..lu.indptr[k + 1] {
                    let j = lu.indices[q];
                    let target = pos[j];
                    if target != usize::MAX {
                        lu.data[target] -= lik * lu.data[q];
                    }
                }
            }
            for p in lu.indptr[i]..lu.indptr[i + 1] {
                pos[lu.indices[p]] = usize::MAX;
            }
        }
        Ilu0 { lu, diag }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut y = r.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in self.lu.indptr[i]..self.diag[i] {
                s -= self.lu.data[p] * y[self.lu.indices[p]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in self.diag[i] + 1..self.lu.indptr[i + 1] {
                s -= self.lu.data[p] * y[self.lu.indices[p]];
            }
            y[i] = s / self.lu.data[self.diag[i]];
        }
        y
    }
}

/// Right-preconditioned BiCGStab.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], pre: &Ilu0, tol: f64, max_iter: usize) -> Result<Vec<f64>, LinearError> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut res = 1.0;
    for it in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            return Err(LinearError::KrylovStalled { iterations: it, residual: res });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = pre.apply(&p);
        v = a.matvec(&phat);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if norm2(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(x);
        }
        let shat = pre.apply(&s);
        let t = a.matvec(&shat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm2(&r) / bnorm;
        if res <= tol {
            return Ok(x);
        }
        if omega == 0.0 || !res.is_finite() {
            return Err(LinearError::KrylovStalled { iterations: it, residual: res });
        }
    }
    Err(LinearError::KrylovStalled { iterations: max_iter, residual: res })
}

/// Unknown count above which the Krylov path replaces the direct factorization.
pub const KRYLOV_THRESHOLD: usize = 200_000;

/// A factorized or preconditioned operator chosen by problem size.
pub enum LinearSolver {
    Direct(DirectSolver),
    Krylov { a: CsrMatrix, pre: Ilu0, tol: f64 },
}

impl LinearSolver {
    pub fn new(a: &CsrMatrix, krylov_threshold: usize) -> Result<Self, LinearError> {
        if a.nrows > krylov_threshold {
            Ok(LinearSolver::Krylov { a: a.clone(), pre: Ilu0::new(a), tol: 1e-12 })
        } else {
            Ok(LinearSolver::Direct(DirectSolver::new(a)?))
        }
    }

    pub fn refactor(&mut self, a: &CsrMatrix) -> Result<(), LinearError> {
        match self {
            LinearSolver::Direct(d) => d.refactor(a),
            LinearSolver::Krylov { a: stored, pre, .. } => {
                *stored = a.clone();
                *pre = Ilu0::new(a);
                Ok(())
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinearError> {
        match self {
            LinearSolver::Direct(d) => Ok(d.solve(b)),
            LinearSolver::Krylov { a, pre, tol } => bicgstab(a, b, pre, *tol, 5000),
        }
    }
}

/// Smallest eigenpair of the symmetric pencil `K x = λ M x` by shifted block
/// inverse iteration with a Rayleigh–Ritz step.
///
/// A block of three vectors makes (near-)degenerate lowest eigenvalues converge
/// at the rate set by the next distinct one. `shift` must lie below the smallest
/// eigenvalue of interest; vectors in `deflate` are removed (M-orthogonally)
/// from every iterate.
pub fn smallest_eigenpair(
    k: &CsrMatrix,
    m: &CsrMatrix,
    shift: f64,
    deflate: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>), LinearError> {
    let n = k.nrows;
    let shifted = k.add_scaled(-shift, m);
    let solver = match cholesky(&shifted) {
        Ok(c) => Box::new(move |b: &[f64]| c.solve(b)) as Box<dyn Fn(&[f64]) -> Vec<f64>>,
        Err(_) => {
            let d = DirectSolver::new(&shifted)?;
            Box::new(move |b: &[f64]| d.solve(b))
        }
    };
    let mdeflate: Vec<(Vec<f64>, f64)> = deflate
        .iter()
        .map(|z| {
            let mz = m.matvec(z);
            let zz = dot(z, &mz);
            (mz, zz)
        })
        .collect();
    let project = |x: &mut Vec<f64>| {
        for (z, (mz, zz)) in deflate.iter().zip(&mdeflate) {
            let c = dot(x, mz) / zz;
            for i in 0..n {
                x[i] -= c * z[i];
            }
        }
    };
    let block = 3.min(n.saturating_sub(deflate.len())).max(1);
    // Fixed, non-symmetric start vectors avoid accidental orthogonality.
    let mut xs: Vec<Vec<f64>> = (0..block)
        .map(|j| {
            let mut x: Vec<f64> =
                (0..n).map(|i| 1.0 + ((i as f64) * (0.618_033_988_7 + 0.1 * j as f64)).fract()).collect();
            project(&mut x);
            x
        })
        .collect();
    let mut lambda = f64::INFINITY;
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let mut ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let mut y = solver(&m.matvec(x));
                project(&mut y);
                y
            })
            .collect();
        // M-orthonormalize, twice for stability; drop vectors that collapse.
        for _ in 0..2 {
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(ys.len());
            for mut y in ys {
                for b in &basis {
                    let c = dot(&y, &m.matvec(b));
                    y.iter_mut().zip(b).for_each(|(v, w)| *v -= c * w);
                }
                let norm = dot(&y, &m.matvec(&y)).sqrt();
                if norm > 1e-300 && norm.is_finite() {
                    y.iter_mut().for_each(|v| *v /= norm);
                    basis.push(y);
                }
            }
            ys = basis;
        }
        if ys.is_empty() {
            return Err(LinearError::EigenNotConverged { iterations: 0, change });
        }
        let p = ys.len();
        let kys: Vec<Vec<f64>> = ys.iter().map(|y| k.matvec(y)).collect();
        let h = Mat::<f64>::from_fn(p, p, |i, j| 0.5 * (dot(&ys[i], &kys[j]) + dot(&ys[j], &kys[i])));
        let evd = h.self_adjoint_eigen(Side::Lower).map_err(|_| LinearError::EigenNotConverged { iterations: 0, change })?;
        let (vals, vecs) = (evd.S().column_vector(), evd.U());
        xs = (0..p)
            .map(|c| {
                let mut x = vec![0.0; n];
                for (r, y) in ys.iter().enumerate() {
                    let w = vecs[(r, c)];
                    x.iter_mut().zip(y).for_each(|(v, yv)| *v += w * yv);
                }
                x
            })
            .collect();
        let new = vals[0];
        change = (new - lambda).abs();
        lambda = new;
        if change <= tol * lambda.abs().max(f64::MIN_POSITIVE) {
            return Ok((lambda, xs.swap_remove(0)));
        }
    }
    Err(LinearError::EigenNotConverged { iterations: max_iter, change })
}

/// Smallest eigenvalue of the symmetric pencil `(S, M)` with `M` positive definite and
/// `S` possibly indefinite. A shift below the spectrum is found by Cholesky probes first.
pub fn smallest_generalized_eigenvalue(s: &CsrMatrix, m: &CsrMatrix, tol: f64) -> Result<f64, LinearError> {
    let scale = s.diagonal().iter().zip(m.diagonal()).map(|(a, b)| a.abs() / b).fold(0.0, f64::max).max(1.0);
    let mut shift = -1e-8 * scale;
    for _ in 0..80 {
        if is_positive_definite(&s.add_scaled(-shift, m)) {
            return smallest_eigenpair(s, m, shift, &[], tol, 2000).map(|(l, _)| l);
        }
        shift = 4.0 * shift - scale;
    }
    Err(LinearError::NotPositiveDefinite)
}
