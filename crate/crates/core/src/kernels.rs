//! Dense complex decompositions and the noise-amplification metrics used by
//! stream selection.
//!
//! The SVD is delegated to `nalgebra`; the sorted QR decomposition is written
//! here because the stream-selection search steps through it one column at a
//! time (see [`SortedQrBuilder`]).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, column-major.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative factor used when deciding that a singular value is zero.
pub const RANK_EPS: f64 = 1e-12;

/// Relative tolerance under which two residual norms count as a tie.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `rows x min(rows, cols)`.
    pub left_vectors: ComplexMatrix,
    /// Singular values in descending order, length `min(rows, cols)`.
    pub singular_values: Vec<f64>,
    /// Full set of right singular vectors, `cols x cols`. Columns at and after
    /// `numeric_rank` span the null space.
    pub right_vectors: ComplexMatrix,
    pub numeric_rank: usize,
}

impl SvdResult {
    /// Orthonormal basis of the right null space.
    pub fn null_space(&self) -> ComplexMatrix {
        let n = self.right_vectors.ncols();
        self.right_vectors
            .columns(self.numeric_rank, n - self.numeric_rank)
            .into_owned()
    }

    /// The leading `k` left singular vectors.
    pub fn leading_left(&self, k: usize) -> ComplexMatrix {
        self.left_vectors.columns(0, k).into_owned()
    }

    /// The leading `k` right singular vectors.
    pub fn leading_right(&self, k: usize) -> ComplexMatrix {
        self.right_vectors.columns(0, k).into_owned()
    }
}

/// Default rank tolerance: `max(rows, cols) * sigma_max * 1e-12`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * RANK_EPS
}

fn check_finite(a: &ComplexMatrix) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptyMatrix {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// SVD with the default rank tolerance.
pub fn svd(a: &ComplexMatrix) -> Result<SvdResult> {
    svd_inner(a, None)
}

/// SVD with an explicit rank tolerance: singular values `<= rank_tolerance`
/// count as zero.
pub fn svd_with_tolerance(a: &ComplexMatrix, rank_tolerance: f64) -> Result<SvdResult> {
    svd_inner(a, Some(rank_tolerance))
}

fn svd_inner(a: &ComplexMatrix, tol: Option<f64>) -> Result<SvdResult> {
    check_finite(a)?;
    let (rows, cols) = a.shape();
    let dec = a.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let v_t = dec.v_t.expect("v_t requested");
    let singular_values: Vec<f64> = dec.singular_values.iter().copied().collect();

    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or_else(|| default_rank_tolerance(rows, cols, sigma_max));
    let numeric_rank = singular_values.iter().filter(|&&s| s > tol).count();

    let thin_v = v_t.adjoint();
    let right_vectors = if thin_v.ncols() < cols {
        complete_basis(&thin_v)
    } else {
        thin_v
    };

    Ok(SvdResult {
        left_vectors: u,
        singular_values,
        right_vectors,
        numeric_rank,
    })
}

/// Extends the orthonormal columns of `basis` (`n x k`) to a unitary `n x n`
/// matrix whose first `k` columns are exactly `basis`.
pub fn complete_basis(basis: &ComplexMatrix) -> ComplexMatrix {
    let (n, k) = basis.shape();
    if k == 0 {
        return ComplexMatrix::identity(n, n);
    }
    // Householder QR of the basis: the trailing columns of the full Q span its
    // orthogonal complement.
    let qr = basis.clone().qr();
    let mut q_adj = ComplexMatrix::identity(n, n);
    qr.q_tr_mul(&mut q_adj);
    let q_full = q_adj.adjoint();
    let mut out = ComplexMatrix::zeros(n, n);
    out.columns_mut(0, k).copy_from(basis);
    out.columns_mut(k, n - k)
        .copy_from(&q_full.columns(k, n - k));
    out
}

/// Result of a QR decomposition with descending residual-norm pivoting.
#[derive(Debug, Clone)]
pub struct SortedQrResult {
    /// `rows x cols`. Columns paired with a zero diagonal entry of `r` are zero.
    pub q: ComplexMatrix,
    /// `cols x cols` upper triangular with real non-negative diagonal.
    pub r: ComplexMatrix,
    /// `permutation[j]` is the original index of the `j`-th pivoted column.
    pub permutation: Vec<usize>,
}

impl SortedQrResult {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.r.ncols().min(self.r.nrows()))
            .map(|i| self.r[(i, i)].re)
            .collect()
    }
}

/// Incremental Gram-Schmidt with descending residual-norm pivoting.
///
/// Each call to [`push`](Self::push) or [`push_largest`](Self::push_largest)
/// appends one column to the factorization and downdates the squared residual
/// norms of the columns still waiting. The stream-selection search drives
/// this directly so it can stop a branch as soon as its metric is too large.
#[derive(Debug, Clone)]
pub struct SortedQrBuilder {
    residual: ComplexMatrix,
    q: ComplexMatrix,
    r: ComplexMatrix,
    original_norms: Vec<f64>,
    norms: Vec<f64>,
    remaining: Vec<bool>,
    order: Vec<usize>,
    zero_tol: f64,
}

impl SortedQrBuilder {
    pub fn new(a: &ComplexMatrix) -> Self {
        let (rows, cols) = a.shape();
        let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm_squared()).collect();
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        let scale = rows.max(cols) as f64 * RANK_EPS;
        Self {
            residual: a.clone(),
            q: ComplexMatrix::zeros(rows, cols),
            r: ComplexMatrix::zeros(cols, cols),
            original_norms: norms.clone(),
            norms,
            remaining: vec![true; cols],
            order: Vec::with_capacity(cols),
            zero_tol: scale * scale * max_norm,
        }
    }

    pub fn ncols(&self) -> usize {
        self.remaining.len()
    }

    /// Number of columns already factored.
    pub fn steps(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Current (downdated) squared residual norm of column `j`.
    pub fn residual_norm(&self, j: usize) -> f64 {
        self.norms[j]
    }

    pub fn is_remaining(&self, j: usize) -> bool {
        self.remaining[j]
    }

    /// Remaining column with the largest residual norm. Norms within
    /// [`TIE_EPS`] relative of each other tie, and the lowest index wins.
    pub fn largest_remaining(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in (0..self.ncols()).filter(|&j| self.remaining[j]) {
            match best {
                None => best = Some(j),
                Some(b) => {
                    let (nb, nj) = (self.effective_norm(b), self.effective_norm(j));
                    if nj > nb && nj - nb > TIE_EPS * nb.max(nj) {
                        best = Some(j);
                    }
                }
            }
        }
        best
    }

    fn effective_norm(&self, j: usize) -> f64 {
        if self.norms[j] <= self.zero_tol {
            0.0
        } else {
            self.norms[j]
        }
    }

    /// Factors column `j` next. Returns its squared residual norm, i.e. the
    /// square of the new diagonal entry of `R` (zero for a dependent column).
    ///
    /// Panics if `j` was already factored.
    pub fn push(&mut self, j: usize) -> f64 {
        assert!(self.remaining[j], "column {j} already factored");
        let step = self.order.len();

        // second Gram-Schmidt pass keeps Q orthonormal for ill-conditioned input
        for i in 0..step {
            if self
                .q
                .column(i)
                .iter()
                .all(|z| *z == Complex64::new(0.0, 0.0))
            {
                continue;
            }
            let qi = self.q.column(i);
            let c = qi.dotc(&self.residual.column(j));
            if c != Complex64::new(0.0, 0.0) {
                let qi = qi.into_owned();
                self.residual
                    .column_mut(j)
                    .axpy(-c, &qi, Complex64::new(1.0, 0.0));
                self.r[(i, j)] += c;
            }
        }

        let tnorm = self.residual.column(j).norm_squared();
        self.remaining[j] = false;
        self.order.push(j);
        if tnorm <= self.zero_tol {
            self.norms[j] = 0.0;
            self.r[(step, j)] = Complex64::new(0.0, 0.0);
            return 0.0;
        }
        self.norms[j] = tnorm;
        let rjj = tnorm.sqrt();
        self.r[(step, j)] = Complex64::new(rjj, 0.0);
        let qj = self.residual.column(j).unscale(rjj);
        self.q.column_mut(step).copy_from(&qj);

        for l in 0..self.ncols() {
            if !self.remaining[l] {
                continue;
            }
            let c = qj.dotc(&self.residual.column(l));
            self.r[(step, l)] = c;
            self.residual
                .column_mut(l)
                .axpy(-c, &qj, Complex64::new(1.0, 0.0));
            self.norms[l] -= c.norm_sqr();
            // cancellation guard: refresh from the actual residual vector
            if self.norms[l] < 1e-8 * self.original_norms[l] {
                self.norms[l] = self.residual.column(l).norm_squared();
            }
        }
        tnorm
    }

    /// Factors the remaining column with the largest residual norm.
    pub fn push_largest(&mut self) -> Option<(usize, f64)> {
        let j = self.largest_remaining()?;
        Some((j, self.push(j)))
    }

    /// Finishes the decomposition, factoring any remaining columns in
    /// descending residual-norm order.
    pub fn finish(mut self) -> SortedQrResult {
        while self.push_largest().is_some() {}
        let n = self.ncols();
        // r currently stores entries at (step, original column); permute columns
        let mut r = ComplexMatrix::zeros(n, n);
        for (pos, &orig) in self.order.iter().enumerate() {
            r.column_mut(pos).copy_from(&self.r.column(orig));
        }
        SortedQrResult {
            q: self.q,
            r,
            permutation: self.order,
        }
    }
}

/// Sorted QR decomposition with descending residual-norm pivoting. Columns
/// before `start_index` keep their given order; from `start_index` on the
/// remaining column with the largest residual norm is taken at every step.
pub fn sorted_qrd(a: &ComplexMatrix, start_index: usize) -> Result<SortedQrResult> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return Err(Error::EmptyMatrix {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if start_index >= a.ncols() {
        return Err(Error::Dimension(format!(
            "start_index {start_index} out of range for {} columns",
            a.ncols()
        )));
    }
    check_finite(a)?;
    let mut builder = SortedQrBuilder::new(a);
    for j in 0..start_index {
        builder.push(j);
    }
    Ok(builder.finish())
}

/// Noise amplification of zero-forcing detection, `Tr{(H^H H)^-1}`.
pub fn noise_amplification(h: &ComplexMatrix) -> Result<f64> {
    let cols = h.ncols();
    let rank = svd(h)?.numeric_rank;
    let singular = Error::Singular {
        rank,
        required: cols,
    };
    if rank < cols {
        return Err(singular);
    }
    let chol = (h.adjoint() * h).cholesky().ok_or(singular.clone())?;
    // Tr{G^-1} = ||L^-1||_F^2 for G = L L^H
    let mut l_inv = ComplexMatrix::identity(cols, cols);
    if !chol.l().solve_lower_triangular_mut(&mut l_inv) {
        return Err(singular);
    }
    Ok(l_inv.norm_squared())
}

/// Lower bound on noise amplification from the diagonal of `R` alone:
/// `sum 1/|R_ii|^2`. A zero diagonal entry gives `+inf`.
pub fn diag_metric(r: &ComplexMatrix) -> f64 {
    let n = r.nrows().min(r.ncols());
    (0..n)
        .map(|i| {
            let d = r[(i, i)].norm_sqr();
            if d == 0.0 {
                f64::INFINITY
            } else {
                1.0 / d
            }
        })
        .sum()
}

/// Largest absolute deviation of `A^H A` from the identity.
pub fn gram_deviation(a: &ComplexMatrix) -> f64 {
    let g = a.adjoint() * a;
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Stacks row blocks that share a column count. An empty slice gives a
/// `0 x cols` matrix.
pub fn stack_rows(blocks: &[&ComplexMatrix], cols: usize) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.rows_mut(at, b.nrows()).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// New matrix made of the listed columns, in order.
pub fn select_columns(a: &ComplexMatrix, cols: &[usize]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.column_mut(k).copy_from(&a.column(j));
    }
    out
}

/// Orthonormal basis of the right null space of `a` (`cols = n`). A matrix
/// with no rows has the whole space as its null space.
pub fn null_space_basis(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() == 0 {
        return Ok(ComplexMatrix::identity(a.ncols(), a.ncols()));
    }
    Ok(svd(a)?.null_space())
}
