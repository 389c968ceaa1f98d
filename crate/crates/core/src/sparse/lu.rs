//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Column `k` of the factors is obtained from a sparse triangular solve
//! `L·x = A(:, q[k])` whose nonzero pattern is the reach of `A(:, q[k])` in
//! the graph of the already computed part of `L` (Gilbert-Peierls). Rows are
//! scaled by their maximum magnitude before factoring, so the pivot test
//! compares every candidate against its own row scale.
//!
//! The factors satisfy `P·R⁻¹·A·Q = L·U` with `R` the row scaling, `P` the
//! pivoting permutation and `Q` the column ordering. `L` is unit lower
//! triangular and both factors are stored column-wise in pivot order.

use super::{CsrMatrix, SparseError};

/// Smallest acceptable pivot, relative to the pivot row's maximum magnitude.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// The diagonal candidate is kept when it is at least this fraction of the
/// largest candidate; this preserves banded structure without giving up
/// stability.
const DIAGONAL_PREFERENCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ColumnOrdering {
    /// Factor columns in their natural order.
    #[default]
    Natural,
    /// Factor column `perm[k]` at step `k` (for example a fill-reducing ordering).
    Given(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    row_scale: Vec<f64>,
    /// original row -> pivot position
    pinv: Vec<usize>,
    /// pivot position -> original column
    col_perm: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
}

pub fn lu_factorize(a: &CsrMatrix) -> Result<LuFactorization, SparseError> {
    lu_factorize_with(a, &ColumnOrdering::Natural)
}

pub fn lu_factorize_with(
    a: &CsrMatrix,
    ordering: &ColumnOrdering,
) -> Result<LuFactorization, SparseError> {
    if !a.is_square() {
        return Err(SparseError::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    let col_perm = match ordering {
        ColumnOrdering::Natural => (0..n).collect::<Vec<_>>(),
        ColumnOrdering::Given(perm) => {
            validate_permutation(perm, n)?;
            perm.clone()
        }
    };

    let row_scale: Vec<f64> = (0..n)
        .map(|i| {
            let m = a.row(i).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        })
        .collect();

    // CSC of the row-scaled matrix is the CSR of its transpose.
    let csc = a.transpose();

    const UNSET: usize = usize::MAX;
    let mut pinv = vec![UNSET; n];
    let mut l_ptr = vec![0usize];
    let mut l_idx: Vec<usize> = Vec::with_capacity(a.nnz());
    let mut l_val: Vec<f64> = Vec::with_capacity(a.nnz());
    let mut u_ptr = vec![0usize];
    let mut u_idx: Vec<usize> = Vec::with_capacity(a.nnz());
    let mut u_val: Vec<f64> = Vec::with_capacity(a.nnz());
    let mut u_diag = vec![0.0; n];

    let mut x = vec![0.0; n];
    let mut mark = vec![usize::MAX; n];
    let mut topo: Vec<usize> = Vec::with_capacity(n);
    // explicit DFS stack: (node, next child offset)
    let mut stack: Vec<(usize, usize)> = Vec::new();

    for k in 0..n {
        let col = col_perm[k];

        // symbolic: reach of A(:, col) through the columns of L computed so far
        topo.clear();
        for (i, _) in csc.row(col) {
            if mark[i] == k {
                continue;
            }
            mark[i] = k;
            stack.push((i, 0));
            while let Some(&(node, mut child)) = stack.last() {
                let jcol = pinv[node];
                let mut descend = None;
                if jcol != UNSET {
                    let (start, end) = (l_ptr[jcol], l_ptr[jcol + 1]);
                    while start + child < end {
                        let r = l_idx[start + child];
                        child += 1;
                        if mark[r] != k {
                            mark[r] = k;
                            descend = Some(r);
                            break;
                        }
                    }
                }
                let top = stack.len() - 1;
                stack[top].1 = child;
                match descend {
                    Some(r) => stack.push((r, 0)),
                    None => {
                        // postorder; reversed below for the triangular solve
                        topo.push(node);
                        stack.pop();
                    }
                }
            }
        }

        // numeric: scatter and solve in topological order
        for (i, v) in csc.row(col) {
            x[i] = v / row_scale[i];
        }
        for &j in topo.iter().rev() {
            let jcol = pinv[j];
            if jcol == UNSET {
                continue;
            }
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in l_ptr[jcol]..l_ptr[jcol + 1] {
                x[l_idx[p]] -= l_val[p] * xj;
            }
        }

        let mut best = -1.0f64;
        let mut ipiv = UNSET;
        for &i in topo.iter().rev() {
            if pinv[i] == UNSET {
                let mag = x[i].abs();
                if mag > best {
                    best = mag;
                    ipiv = i;
                }
            } else {
                u_idx.push(pinv[i]);
                u_val.push(x[i]);
            }
        }
        if ipiv == UNSET || !(best >= PIVOT_TOLERANCE) {
            return Err(SparseError::Singular { pivot: k });
        }
        if pinv[col] == UNSET && mark[col] == k && x[col].abs() >= DIAGONAL_PREFERENCE * best {
            ipiv = col;
        }

        let pivot = x[ipiv];
        u_diag[k] = pivot;
        pinv[ipiv] = k;
        for &i in topo.iter().rev() {
            if pinv[i] == UNSET && x[i] != 0.0 {
                l_idx.push(i);
                l_val.push(x[i] / pivot);
            }
            x[i] = 0.0;
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
    }

    // L row indices were recorded as original rows; move them to pivot order.
    for r in &mut l_idx {
        *r = pinv[*r];
    }

    Ok(LuFactorization {
        n,
        row_scale,
        pinv,
        col_perm,
        l_ptr,
        l_idx,
        l_val,
        u_ptr,
        u_idx,
        u_val,
        u_diag,
    })
}

fn validate_permutation(perm: &[usize], n: usize) -> Result<(), SparseError> {
    if perm.len() != n {
        return Err(SparseError::InvalidOrdering(format!(
            "length {} for dimension {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(SparseError::InvalidOrdering(format!(
                "entry {p} out of range or repeated"
            )));
        }
    }
    Ok(())
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L` (without the unit diagonal) plus `U`.
    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.n
    }

    fn check_len(&self, b: &[f64]) -> Result<(), SparseError> {
        if b.len() != self.n {
            return Err(SparseError::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        Ok(())
    }

    /// Solves `A·x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        self.check_len(b)?;
        let mut z = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            z[self.pinv[i]] = bi / self.row_scale[i];
        }
        // L z = y
        for k in 0..self.n {
            let zk = z[k];
            if zk != 0.0 {
                for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                    z[self.l_idx[p]] -= self.l_val[p] * zk;
                }
            }
        }
        // U w = z
        for k in (0..self.n).rev() {
            let wk = z[k] / self.u_diag[k];
            z[k] = wk;
            if wk != 0.0 {
                for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                    z[self.u_idx[p]] -= self.u_val[p] * wk;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        for (k, &c) in self.col_perm.iter().enumerate() {
            x[c] = z[k];
        }
        Ok(x)
    }

    /// Solves `Aᵀ·x = b` with the same factors.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        self.check_len(b)?;
        let mut d: Vec<f64> = self.col_perm.iter().map(|&c| b[c]).collect();
        // Uᵀ d = c
        for k in 0..self.n {
            let mut s = d[k];
            for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                s -= self.u_val[p] * d[self.u_idx[p]];
            }
            d[k] = s / self.u_diag[k];
        }
        // Lᵀ e = d
        for k in (0..self.n).rev() {
            let mut s = d[k];
            for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                s -= self.l_val[p] * d[self.l_idx[p]];
            }
            d[k] = s;
        }
        Ok((0..self.n)
            .map(|i| d[self.pinv[i]] / self.row_scale[i])
            .collect())
    }
}
