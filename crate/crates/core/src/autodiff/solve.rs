use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::{Accumulator, AdError, Op, Tape, VarId};
use crate::sparse::{lu_factorize, norm2, CsrMatrix, LuFactorization, SparseError};

/// A constant matrix together with its LU factors.
pub struct FactoredMatrix {
    matrix: CsrMatrix,
    lu: LuFactorization,
}

impl FactoredMatrix {
    pub fn new(matrix: CsrMatrix) -> Result<Self, SparseError> {
        let lu = lu_factorize(&matrix)?;
        Ok(Self { matrix, lu })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn lu(&self) -> &LuFactorization {
        &self.lu
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }
}

impl fmt::Debug for FactoredMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactoredMatrix")
            .field("dim", &self.dim())
            .field("nnz", &self.matrix.nnz())
            .field("factor_nnz", &self.lu.factor_nnz())
            .finish()
    }
}

/// Square matrix with a fixed sparsity pattern whose nonzero values depend
/// on a parameter vector.
pub trait ParamDependentMatrix: Send + Sync {
    /// Sparsity pattern; the stored values are not used.
    fn pattern(&self) -> &CsrMatrix;

    fn n_params(&self) -> usize;

    /// Nonzero values in pattern order.
    fn values(&self, params: &[f64]) -> Result<Vec<f64>, AdError>;

    /// `(∂values/∂params)ᵀ · grad_values`.
    fn values_vjp(&self, params: &[f64], grad_values: &[f64]) -> Vec<f64>;

    fn matrix(&self, params: &[f64]) -> Result<CsrMatrix, AdError> {
        Ok(self.pattern().with_values(self.values(params)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamDomain {
    #[default]
    Unbounded,
    /// Every parameter must be strictly positive.
    Positive,
}

/// `values(p) = offset + S·p` with a constant sensitivity `S` of shape
/// `nnz × n_params`.
#[derive(Debug, Clone)]
pub struct AffineMatrix {
    pattern: CsrMatrix,
    offset: Vec<f64>,
    sensitivity: CsrMatrix,
    sensitivity_t: CsrMatrix,
    domain: ParamDomain,
}

impl AffineMatrix {
    pub fn new(
        pattern: CsrMatrix,
        offset: Vec<f64>,
        sensitivity: CsrMatrix,
        domain: ParamDomain,
    ) -> Result<Self, SparseError> {
        if !pattern.is_square() {
            return Err(SparseError::NotSquare {
                n_rows: pattern.n_rows(),
                n_cols: pattern.n_cols(),
            });
        }
        if offset.len() != pattern.nnz() {
            return Err(SparseError::DimensionMismatch {
                expected: pattern.nnz(),
                found: offset.len(),
            });
        }
        if sensitivity.n_rows() != pattern.nnz() {
            return Err(SparseError::DimensionMismatch {
                expected: pattern.nnz(),
                found: sensitivity.n_rows(),
            });
        }
        let sensitivity_t = sensitivity.transpose();
        Ok(Self {
            pattern,
            offset,
            sensitivity,
            sensitivity_t,
            domain,
        })
    }

    /// `A(p) = offset + Σ_j p_j·blocks[j]` on the union of all patterns.
    pub fn from_blocks(
        blocks: &[CsrMatrix],
        offset: Option<&CsrMatrix>,
        domain: ParamDomain,
    ) -> Result<Self, SparseError> {
        let n = blocks
            .first()
            .or(offset)
            .map(CsrMatrix::n_rows)
            .unwrap_or(0);
        let mut all = Vec::new();
        for m in blocks.iter().chain(offset) {
            if m.n_rows() != n || m.n_cols() != n {
                return Err(SparseError::DimensionMismatch {
                    expected: n,
                    found: m.n_rows().max(m.n_cols()),
                });
            }
            all.extend(m.triplets().map(|(i, j, _)| (i, j, 0.0)));
        }
        let pattern = CsrMatrix::from_triplets(n, &all)?;
        let locate = |i, j| pattern.position(i, j).expect("entry lies in the union pattern");

        let mut off = vec![0.0; pattern.nnz()];
        if let Some(m) = offset {
            for (i, j, v) in m.triplets() {
                off[locate(i, j)] += v;
            }
        }
        let mut sens = Vec::new();
        for (k, m) in blocks.iter().enumerate() {
            sens.extend(m.triplets().map(|(i, j, v)| (locate(i, j), k, v)));
        }
        let sensitivity = CsrMatrix::from_triplets_rect(pattern.nnz(), blocks.len(), &sens)?;
        Self::new(pattern, off, sensitivity, domain)
    }

    pub fn sensitivity(&self) -> &CsrMatrix {
        &self.sensitivity
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }
}

impl ParamDependentMatrix for AffineMatrix {
    fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    fn n_params(&self) -> usize {
        self.sensitivity.n_cols()
    }

    fn values(&self, params: &[f64]) -> Result<Vec<f64>, AdError> {
        if self.domain == ParamDomain::Positive {
            if let Some((index, &value)) = params.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                return Err(AdError::InvalidParameter {
                    index,
                    value,
                    reason: "must be strictly positive",
                });
            }
        }
        let mut v = self.sensitivity.spmv(params)?;
        v.iter_mut().zip(&self.offset).for_each(|(a, b)| *a += b);
        Ok(v)
    }

    fn values_vjp(&self, _params: &[f64], grad_values: &[f64]) -> Vec<f64> {
        self.sensitivity_t
            .spmv(grad_values)
            .expect("gradient length equals the pattern size")
    }
}

/// Parametrized nonlinear system `R(u; p) = 0`.
pub trait ResidualSystem: Send + Sync {
    fn n_state(&self) -> usize;

    fn n_params(&self) -> usize;

    fn residual(&self, u: &[f64], p: &[f64]) -> Vec<f64>;

    /// `∂R/∂u`, with a pattern independent of `u` and `p`.
    fn jacobian(&self, u: &[f64], p: &[f64]) -> CsrMatrix;

    /// `vᵀ·∂R/∂p`.
    fn residual_params_vjp(&self, u: &[f64], p: &[f64], v: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive residual increases tolerated before giving up.
    pub divergence_window: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 30,
            divergence_window: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonFailure {
    NonFinite,
    MaxIterations,
    Diverging,
}

impl fmt::Display for NewtonFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NonFinite => "non-finite residual",
            Self::MaxIterations => "iteration limit reached",
            Self::Diverging => "residual keeps growing",
        })
    }
}

/// Newton failure with the residual norm of every visited iterate.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("Newton solve failed: {failure} after {} iterations (residual norms {trace:?})", .trace.len().saturating_sub(1))]
pub struct NewtonError {
    pub failure: NewtonFailure,
    pub trace: Vec<f64>,
}

pub struct NewtonSolution {
    pub state: Vec<f64>,
    pub trace: Vec<f64>,
    /// Factors of `∂R/∂u` at the returned state.
    pub jacobian_lu: LuFactorization,
}

impl NewtonSolution {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

pub fn newton_solve(
    sys: &dyn ResidualSystem,
    p: &[f64],
    u_init: &[f64],
    cfg: &NewtonConfig,
) -> Result<NewtonSolution, AdError> {
    if u_init.len() != sys.n_state() {
        return Err(AdError::ShapeMismatch {
            op: "newton initial state",
            left: u_init.len(),
            right: sys.n_state(),
        });
    }
    if p.len() != sys.n_params() {
        return Err(AdError::ShapeMismatch {
            op: "newton parameters",
            left: p.len(),
            right: sys.n_params(),
        });
    }
    let mut u = u_init.to_vec();
    let mut trace = Vec::new();
    let mut growth = 0;
    for it in 0..=cfg.max_iter {
        let r = sys.residual(&u, p);
        let norm = norm2(&r);
        trace.push(norm);
        let fail = |failure| {
            Err(AdError::Newton(NewtonError {
                failure,
                trace: trace.clone(),
            }))
        };
        if !norm.is_finite() {
            return fail(NewtonFailure::NonFinite);
        }
        let lu = lu_factorize(&sys.jacobian(&u, p))?;
        if norm <= cfg.tol {
            return Ok(NewtonSolution {
                state: u,
                trace,
                jacobian_lu: lu,
            });
        }
        if it == cfg.max_iter {
            return fail(NewtonFailure::MaxIterations);
        }
        if it > 0 && norm > trace[it - 1] {
            growth += 1;
            if growth >= cfg.divergence_window {
                return fail(NewtonFailure::Diverging);
            }
        } else {
            growth = 0;
        }
        let du = lu.solve(&r)?;
        u.iter_mut().zip(&du).for_each(|(a, d)| *a -= d);
    }
    unreachable!("loop returns on its last iteration")
}

pub(super) enum SolveOperator {
    Constant(Arc<FactoredMatrix>),
    Param {
        family: Arc<dyn ParamDependentMatrix>,
        params: usize,
        lu: LuFactorization,
    },
}

pub(super) struct LinearSolveNode {
    rhs: usize,
    op: SolveOperator,
}

impl LinearSolveNode {
    pub(super) fn backward(&self, x: &[f64], g: &[f64], acc: &mut Accumulator<'_>) -> Result<(), AdError> {
        let lu = match &self.op {
            SolveOperator::Constant(a) => &a.lu,
            SolveOperator::Param { lu, .. } => lu,
        };
        let gb = lu.solve_transpose(g)?;
        if let SolveOperator::Param { family, params, .. } = &self.op {
            if acc.wants(*params) {
                let pattern = family.pattern();
                let rows = pattern.entry_rows();
                let grad_values: Vec<f64> = rows
                    .iter()
                    .zip(pattern.col_idx())
                    .map(|(&i, &j)| -gb[i] * x[j])
                    .collect();
                let p = &acc.nodes[*params].value;
                let gp = family.values_vjp(p, &grad_values);
                acc.add(*params, &gp);
            }
        }
        acc.add(self.rhs, &gb);
        Ok(())
    }
}

pub(super) struct NonlinearSolveNode {
    params: usize,
    system: Arc<dyn ResidualSystem>,
    lu: LuFactorization,
}

impl NonlinearSolveNode {
    pub(super) fn backward(&self, u: &[f64], g: &[f64], acc: &mut Accumulator<'_>) -> Result<(), AdError> {
        let z = self.lu.solve_transpose(g)?;
        let p = &acc.nodes[self.params].value;
        let gp = self.system.residual_params_vjp(u, p, &z);
        acc.add_with(self.params, |k| -gp[k]);
        Ok(())
    }
}

impl Tape {
    /// `x = A⁻¹b` for a constant, already factored `A`.
    pub fn linear_solve(&mut self, a: &Arc<FactoredMatrix>, b: VarId) -> Result<VarId, AdError> {
        let ib = self.idx(b)?;
        let x = a.lu.solve(self.vals(ib))?;
        let rg = self.rg(&[ib]);
        let node = LinearSolveNode {
            rhs: ib,
            op: SolveOperator::Constant(Arc::clone(a)),
        };
        Ok(self.push(Op::LinearSolve(Box::new(node)), x, rg))
    }

    /// `x = A(p)⁻¹b`; gradients flow into both `p` and `b`.
    pub fn linear_solve_param(
        &mut self,
        family: Arc<dyn ParamDependentMatrix>,
        params: VarId,
        b: VarId,
    ) -> Result<VarId, AdError> {
        let (ip, ib) = (self.idx(params)?, self.idx(b)?);
        let n_params = self.vals(ip).len();
        if n_params != family.n_params() {
            return Err(AdError::ShapeMismatch {
                op: "linear_solve parameters",
                left: n_params,
                right: family.n_params(),
            });
        }
        let a = family.matrix(self.vals(ip))?;
        let lu = lu_factorize(&a)?;
        let x = lu.solve(self.vals(ib))?;
        let rg = self.rg(&[ip, ib]);
        let node = LinearSolveNode {
            rhs: ib,
            op: SolveOperator::Param {
                family,
                params: ip,
                lu,
            },
        };
        Ok(self.push(Op::LinearSolve(Box::new(node)), x, rg))
    }

    /// State `u` with `R(u; p) = 0`, starting Newton from `u_init`.
    pub fn nonlinear_solve(
        &mut self,
        system: Arc<dyn ResidualSystem>,
        p: VarId,
        u_init: &[f64],
        cfg: &NewtonConfig,
    ) -> Result<VarId, AdError> {
        let ip = self.idx(p)?;
        let sol = newton_solve(system.as_ref(), self.vals(ip), u_init, cfg)?;
        let rg = self.rg(&[ip]);
        let node = NonlinearSolveNode {
            params: ip,
            system,
            lu: sol.jacobian_lu,
        };
        Ok(self.push(Op::NonlinearSolve(Box::new(node)), sol.state, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;

    fn dense(rows: &[&[f64]]) -> CsrMatrix {
        CsrMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    /// Every stored entry of `a` is its own parameter.
    fn entrywise(a: &CsrMatrix) -> (AffineMatrix, Vec<f64>) {
        let nnz = a.nnz();
        let sens = CsrMatrix::identity(nnz);
        let m = AffineMatrix::new(a.clone(), vec![0.0; nnz], sens, ParamDomain::Unbounded).unwrap();
        (m, a.values().to_vec())
    }

    #[test]
    fn identity_system_passes_gradient_through() {
        let a = Arc::new(FactoredMatrix::new(CsrMatrix::identity(3)).unwrap());
        let mut t = Tape::new();
        let b = t.param(vec![1.0, 2.0, 3.0]);
        let x = t.linear_solve(&a, b).unwrap();
        let j = t.sum(x).unwrap();
        assert_eq!(t.backward(j).unwrap().wrt(b), vec![1.0; 3]);
    }

    fn two_by_two_loss(a_vals: &[f64], b: &[f64]) -> f64 {
        let a = dense(&[&[2.0, 1.0], &[1.0, 3.0]]).with_values(a_vals.to_vec()).unwrap();
        let lu = lu_factorize(&a).unwrap();
        lu.solve(b).unwrap().iter().sum()
    }

    #[test]
    fn two_by_two_solve_matches_finite_differences() {
        let a = dense(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let (family, p0) = entrywise(&a);
        let family: Arc<dyn ParamDependentMatrix> = Arc::new(family);
        let b0 = vec![1.0, 2.0];

        let mut t = Tape::new();
        let p = t.param(p0.clone());
        let b = t.param(b0.clone());
        let x = t.linear_solve_param(family, p, b).unwrap();
        let xv = t.value(x);
        assert!((xv[0] - 0.2).abs() < 1e-15 && (xv[1] - 0.6).abs() < 1e-15);
        let j = t.sum(x).unwrap();
        let g = t.backward(j).unwrap();

        let eps = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
        let gb = g.wrt(b);
        for k in 0..2 {
            let (mut bp, mut bm) = (b0.clone(), b0.clone());
            bp[k] += eps;
            bm[k] -= eps;
            let fd = (two_by_two_loss(&p0, &bp) - two_by_two_loss(&p0, &bm)) / (2.0 * eps);
            assert!(rel(gb[k], fd) < 1e-6, "b[{k}]: {} vs {fd}", gb[k]);
        }
        let gp = g.wrt(p);
        for k in 0..p0.len() {
            let (mut pp, mut pm) = (p0.clone(), p0.clone());
            pp[k] += eps;
            pm[k] -= eps;
            let fd = (two_by_two_loss(&pp, &b0) - two_by_two_loss(&pm, &b0)) / (2.0 * eps);
            assert!(rel(gp[k], fd) < 1e-6, "A entry {k}: {} vs {fd}", gp[k]);
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let a = dense(&[&[4.0, -1.0, 0.0], &[2.0, 5.0, 1.0], &[0.0, -3.0, 6.0]]);
        let fa = Arc::new(FactoredMatrix::new(a.clone()).unwrap());
        let mut t = Tape::new();
        let b = t.param(vec![1.0, -1.0, 2.0]);
        let x = t.linear_solve(&fa, b).unwrap();
        let w = t.constant(vec![0.3, -0.7, 1.1]);
        let j = t.dot(w, x).unwrap();
        let g = t.backward(j).unwrap();
        let at_gb = a.spmv_transpose(&g.wrt(b)).unwrap();
        for (l, r) in at_gb.iter().zip([0.3, -0.7, 1.1]) {
            assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_error_propagates() {
        let family: Arc<dyn ParamDependentMatrix> =
            Arc::new(AffineMatrix::from_blocks(&[CsrMatrix::identity(2)], None, ParamDomain::Unbounded).unwrap());
        let mut t = Tape::new();
        let p = t.param(vec![0.0]);
        let b = t.constant(vec![1.0, 1.0]);
        let err = t.linear_solve_param(family, p, b).unwrap_err();
        assert!(matches!(err, AdError::Solver(SparseError::Singular { .. })));
    }

    #[test]
    fn positive_domain_rejects_nonpositive_parameters() {
        let m = AffineMatrix::from_blocks(&[CsrMatrix::identity(2)], None, ParamDomain::Positive).unwrap();
        assert!(matches!(
            m.values(&[-1.0]),
            Err(AdError::InvalidParameter { index: 0, .. })
        ));
        assert_eq!(m.values(&[2.0]).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn from_blocks_merges_patterns() {
        let b0 = dense(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let b1 = dense(&[&[0.0, 2.0], &[0.0, 3.0]]);
        let off = CsrMatrix::identity(2);
        let m = AffineMatrix::from_blocks(&[b0, b1], Some(&off), ParamDomain::Unbounded).unwrap();
        let a = m.matrix(&[10.0, 1.0]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![11.0, 2.0], vec![0.0, 4.0]]);
    }

    struct Shifted;

    /// R(u; p) = u - p
    impl ResidualSystem for Shifted {
        fn n_state(&self) -> usize {
            2
        }
        fn n_params(&self) -> usize {
            2
        }
        fn residual(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
            u.iter().zip(p).map(|(a, b)| a - b).collect()
        }
        fn jacobian(&self, _u: &[f64], _p: &[f64]) -> CsrMatrix {
            CsrMatrix::identity(2)
        }
        fn residual_params_vjp(&self, _u: &[f64], _p: &[f64], v: &[f64]) -> Vec<f64> {
            v.iter().map(|x| -x).collect()
        }
    }

    struct SquareRoot;

    /// R(u; p) = u² - p
    impl ResidualSystem for SquareRoot {
        fn n_state(&self) -> usize {
            1
        }
        fn n_params(&self) -> usize {
            1
        }
        fn residual(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
            vec![u[0] * u[0] - p[0]]
        }
        fn jacobian(&self, u: &[f64], _p: &[f64]) -> CsrMatrix {
            CsrMatrix::diagonal(&[2.0 * u[0]])
        }
        fn residual_params_vjp(&self, _u: &[f64], _p: &[f64], v: &[f64]) -> Vec<f64> {
            vec![-v[0]]
        }
    }

    #[test]
    fn linear_residual_is_identity_map() {
        let mut t = Tape::new();
        let p = t.param(vec![1.5, -2.0]);
        let u = t.nonlinear_solve(Arc::new(Shifted), p, &[0.0, 0.0], &NewtonConfig::default()).unwrap();
        assert_eq!(t.value(u), &[1.5, -2.0]);
        let w = t.constant(vec![3.0, 4.0]);
        let j = t.dot(w, u).unwrap();
        assert_eq!(t.backward(j).unwrap().wrt(p), vec![3.0, 4.0]);
    }

    #[test]
    fn square_root_gradient() {
        let mut t = Tape::new();
        let p = t.param(vec![4.0]);
        let u = t.nonlinear_solve(Arc::new(SquareRoot), p, &[3.0], &NewtonConfig::default()).unwrap();
        assert!((t.scalar(u) - 2.0).abs() < 1e-12);
        let g = t.backward(u).unwrap().wrt(p);
        assert!((g[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn newton_reports_trace_on_failure() {
        // u² + 1 = 0 has no real root
        let mut t = Tape::new();
        let p = t.param(vec![-1.0]);
        let err = t
            .nonlinear_solve(Arc::new(SquareRoot), p, &[3.0], &NewtonConfig::default())
            .unwrap_err();
        match err {
            AdError::Newton(e) => assert!(!e.trace.is_empty()),
            AdError::Solver(SparseError::Singular { .. }) => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn newton_singular_jacobian() {
        let mut t = Tape::new();
        let p = t.param(vec![4.0]);
        let err = t
            .nonlinear_solve(Arc::new(SquareRoot), p, &[0.0], &NewtonConfig::default())
            .unwrap_err();
        assert!(matches!(err, AdError::Solver(SparseError::Singular { .. })));
    }

    #[test]
    fn newton_iteration_limit() {
        let cfg = NewtonConfig {
            max_iter: 2,
            ..NewtonConfig::default()
        };
        let err = newton_solve(&SquareRoot, &[4.0], &[100.0], &cfg).err().unwrap();
        match err {
            AdError::Newton(e) => {
                assert_eq!(e.failure, NewtonFailure::MaxIterations);
                assert_eq!(e.trace.len(), 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn solve_chain_gradient_check() {
        let a = dense(&[&[3.0, 1.0, 0.0], &[1.0, 4.0, -1.0], &[0.0, 2.0, 5.0]]);
        let (family, p0) = entrywise(&a);
        let family: Arc<dyn ParamDependentMatrix> = Arc::new(family);
        let b0 = [1.0, 0.5, -0.25];
        let report = gradient_check(
            |t, p| {
                let b = t.constant(b0.to_vec());
                let x = t.linear_solve_param(Arc::clone(&family), p, b)?;
                t.norm2(x)
            },
            &p0,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
