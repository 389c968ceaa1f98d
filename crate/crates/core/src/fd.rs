//! Finite differences on the unit interval: 1D Poisson and the heat
//! equation, either as one space-time system or by backward Euler.

use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::{AdError, FactoredMatrix, Tape, VarId};
use crate::sparse::{kron, shift_matrix, CsrMatrix, SparseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected a vector of length {expected}, got {found}")]
    Length { expected: usize, found: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// Uniform grid on (0, 1) with `n_h` elements; unknowns live on interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid1D {
    n_h: usize,
}

impl Grid1D {
    pub fn new(n_h: usize) -> Result<Self, FdError> {
        if n_h < 2 {
            return Err(FdError::InvalidGrid(format!("n_h must be at least 2, got {n_h}")));
        }
        Ok(Self { n_h })
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_h as f64
    }

    /// Number of interior nodes, `n_h - 1`.
    pub fn n_dofs(&self) -> usize {
        self.n_h - 1
    }

    /// Interior node coordinates `x_i = i·h`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..self.n_h).map(|i| i as f64 / self.n_h as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_k: usize,
    t_final: f64,
}

impl TimeGrid {
    pub fn new(n_k: usize, t_final: f64) -> Result<Self, FdError> {
        if n_k < 1 {
            return Err(FdError::InvalidGrid("n_k must be at least 1".into()));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(FdError::InvalidGrid(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { n_k, t_final })
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn k(&self) -> f64 {
        self.t_final / self.n_k as f64
    }

    /// `t_j = j·k` for `j = 1..=n_k`.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.n_k).map(|j| j as f64 * self.k()).collect()
    }
}

/// Right-hand side of the 1D Poisson problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Constant(f64),
    Nodal(Vec<f64>),
}

impl Forcing {
    pub fn nodal(&self, g: &Grid1D) -> Result<Vec<f64>, FdError> {
        match self {
            Self::Constant(f) => Ok(vec![*f; g.n_dofs()]),
            Self::Nodal(v) if v.len() == g.n_dofs() => Ok(v.clone()),
            Self::Nodal(v) => Err(FdError::Length {
                expected: g.n_dofs(),
                found: v.len(),
            }),
        }
    }
}

/// `K_h = tridiag(-1, 2, -1) / h²` of size `n_h - 1`.
pub fn poisson1d_stiffness(g: &Grid1D) -> CsrMatrix {
    let n = g.n_dofs();
    let inv_h2 = (g.n_h * g.n_h) as f64;
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, -inv_h2));
        }
        t.push((i, i, 2.0 * inv_h2));
        if i + 1 < n {
            t.push((i, i + 1, -inv_h2));
        }
    }
    CsrMatrix::from_triplets(n, &t).expect("indices lie inside the grid")
}

pub fn poisson1d_solution(g: &Grid1D, f: &Forcing) -> Result<Vec<f64>, FdError> {
    let a = FactoredMatrix::new(poisson1d_stiffness(g))?;
    Ok(a.lu().solve(&f.nodal(g)?)?)
}

/// Backward-Euler step matrix `I/k + K_h`.
pub fn heat_step_matrix(g: &Grid1D, t: &TimeGrid) -> CsrMatrix {
    let inv_k = 1.0 / t.k();
    poisson1d_stiffness(g)
        .add_scaled(1.0, &CsrMatrix::identity(g.n_dofs()), inv_k)
        .expect("same dimensions")
}

/// `A_kh = I_k ⊗ (I_h/k + K_h) - (1/k)·S_k ⊗ I_h`.
pub fn heat_spacetime_matrix(g: &Grid1D, t: &TimeGrid) -> CsrMatrix {
    let diag = kron(&CsrMatrix::identity(t.n_k), &heat_step_matrix(g, t));
    let sub = kron(&shift_matrix(t.n_k), &CsrMatrix::identity(g.n_dofs()));
    diag.add_scaled(1.0, &sub, -1.0 / t.k()).expect("same dimensions")
}

/// Stacked right-hand side: block `j` is `F^j`, the first block also gets `u0/k`.
pub fn heat_spacetime_rhs(g: &Grid1D, t: &TimeGrid, force: &[f64], u0: &[f64]) -> Result<Vec<f64>, FdError> {
    let n = g.n_dofs();
    check_len(force, n * t.n_k)?;
    check_len(u0, n)?;
    let mut rhs = force.to_vec();
    let inv_k = 1.0 / t.k();
    rhs[..n].iter_mut().zip(u0).for_each(|(r, u)| *r += inv_k * u);
    Ok(rhs)
}

fn check_len(v: &[f64], expected: usize) -> Result<(), FdError> {
    if v.len() != expected {
        return Err(FdError::Length {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Monolithic space-time heat solver with a factored `A_kh`.
pub struct HeatSpaceTime {
    grid: Grid1D,
    time: TimeGrid,
    system: Arc<FactoredMatrix>,
}

impl HeatSpaceTime {
    pub fn new(grid: Grid1D, time: TimeGrid) -> Result<Self, FdError> {
        let system = Arc::new(FactoredMatrix::new(heat_spacetime_matrix(&grid, &time))?);
        Ok(Self { grid, time, system })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn matrix(&self) -> &CsrMatrix {
        self.system.matrix()
    }

    /// Stacked states `[U¹; …; U^{n_k}]` as one tape variable.
    pub fn solve(&self, tape: &mut Tape, force: VarId, u0: VarId) -> Result<VarId, FdError> {
        let n = self.grid.n_dofs();
        check_len(tape.value(force), n * self.time.n_k)?;
        check_len(tape.value(u0), n)?;
        let first = tape.scale(u0, 1.0 / self.time.k())?;
        let rest = tape.constant(vec![0.0; n * (self.time.n_k - 1)]);
        let ic = tape.concat(&[first, rest])?;
        let rhs = tape.add(force, ic)?;
        Ok(tape.linear_solve(&self.system, rhs)?)
    }
}

/// Backward-Euler time stepping sharing one factorization of `I/k + K_h`.
pub struct BackwardEuler {
    grid: Grid1D,
    time: TimeGrid,
    step: Arc<FactoredMatrix>,
}

impl BackwardEuler {
    pub fn new(grid: Grid1D, time: TimeGrid) -> Result<Self, FdError> {
        let step = Arc::new(FactoredMatrix::new(heat_step_matrix(&grid, &time))?);
        Ok(Self { grid, time, step })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    /// States `U¹…U^{n_k}`. `forces`, when given, holds one vector per step;
    /// `None` means zero forcing.
    pub fn chain(&self, tape: &mut Tape, forces: Option<&[VarId]>, u0: VarId) -> Result<Vec<VarId>, FdError> {
        let n = self.grid.n_dofs();
        check_len(tape.value(u0), n)?;
        if let Some(f) = forces {
            if f.len() != self.time.n_k {
                return Err(FdError::Length {
                    expected: self.time.n_k,
                    found: f.len(),
                });
            }
        }
        let inv_k = 1.0 / self.time.k();
        let mut states = Vec::with_capacity(self.time.n_k);
        let mut prev = u0;
        for j in 0..self.time.n_k {
            let mut rhs = tape.scale(prev, inv_k)?;
            if let Some(f) = forces {
                check_len(tape.value(f[j]), n)?;
                rhs = tape.add(f[j], rhs)?;
            }
            prev = tape.linear_solve(&self.step, rhs)?;
            states.push(prev);
        }
        Ok(states)
    }
}

pub fn backward_euler_chain(
    tape: &mut Tape,
    g: &Grid1D,
    t: &TimeGrid,
    forces: Option<&[VarId]>,
    u0: VarId,
) -> Result<Vec<VarId>, FdError> {
    BackwardEuler::new(*g, *t)?.chain(tape, forces, u0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn stiffness_n4() {
        let k = poisson1d_stiffness(&Grid1D::new(4).unwrap());
        assert_eq!(
            k.to_dense(),
            vec![vec![32.0, -16.0, 0.0], vec![-16.0, 32.0, -16.0], vec![0.0, -16.0, 32.0]]
        );
        assert!(k.is_symmetric(0.0));
    }

    #[test]
    fn stiffness_row_sums() {
        let g = Grid1D::new(7).unwrap();
        let sums = poisson1d_stiffness(&g).spmv(&vec![1.0; g.n_dofs()]).unwrap();
        let inv_h2 = 49.0;
        assert_eq!(sums[0], inv_h2);
        assert_eq!(sums[5], inv_h2);
        assert!(sums[1..5].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stiffness_n2() {
        assert_eq!(poisson1d_stiffness(&Grid1D::new(2).unwrap()).to_dense(), vec![vec![8.0]]);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(1).is_err());
        assert!(TimeGrid::new(0, 1.0).is_err());
        assert!(TimeGrid::new(3, 0.0).is_err());
        let g = Grid1D::new(10).unwrap();
        assert_eq!(g.h() * 10.0, 1.0);
    }

    #[test]
    fn constant_force_is_exact_quadratic() {
        let g = Grid1D::new(50).unwrap();
        let u = poisson1d_solution(&g, &Forcing::Constant(-1.0)).unwrap();
        assert!((u[24] + 0.125).abs() < 1e-13, "{}", u[24]);
        for (x, ui) in g.nodes().iter().zip(&u) {
            assert!((ui + x * (1.0 - x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_force_zero_solution() {
        let g = Grid1D::new(9).unwrap();
        assert!(poisson1d_solution(&g, &Forcing::Constant(0.0)).unwrap().iter().all(|&u| u == 0.0));
    }

    #[test]
    fn second_order_convergence() {
        let err = |n: usize| {
            let g = Grid1D::new(n).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|x| PI * PI * (PI * x).sin()).collect();
            let u = poisson1d_solution(&g, &Forcing::Nodal(f)).unwrap();
            g.nodes()
                .iter()
                .zip(&u)
                .map(|(x, u)| (u - (PI * x).sin()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(50) / err(100);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn spacetime_small_case() {
        let g = Grid1D::new(2).unwrap();
        let t = TimeGrid::new(2, 1.0).unwrap();
        assert_eq!(
            heat_spacetime_matrix(&g, &t).to_dense(),
            vec![vec![10.0, 0.0], vec![-2.0, 10.0]]
        );
    }

    #[test]
    fn single_step_reduces_to_step_matrix() {
        let g = Grid1D::new(5).unwrap();
        let t = TimeGrid::new(1, 0.3).unwrap();
        assert_eq!(heat_spacetime_matrix(&g, &t).to_dense(), heat_step_matrix(&g, &t).to_dense());
    }

    #[test]
    fn rhs_blocks() {
        let g = Grid1D::new(3).unwrap();
        let t = TimeGrid::new(3, 1.5).unwrap();
        assert!(heat_spacetime_rhs(&g, &t, &[0.0; 6], &[0.0; 2]).unwrap().iter().all(|&v| v == 0.0));
        let r = heat_spacetime_rhs(&g, &t, &[0.0; 6], &[1.0; 2]).unwrap();
        assert_eq!(r, vec![2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(heat_spacetime_rhs(&g, &t, &[0.0; 5], &[1.0; 2]).is_err());
    }

    #[test]
    fn backward_euler_scalar_step() {
        let g = Grid1D::new(2).unwrap();
        let t = TimeGrid::new(1, 0.5).unwrap();
        let mut tape = Tape::new();
        let u0 = tape.param(vec![1.0]);
        let states = backward_euler_chain(&mut tape, &g, &t, None, u0).unwrap();
        assert!((tape.value(states[0])[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn backward_euler_rest_state() {
        let g = Grid1D::new(6).unwrap();
        let t = TimeGrid::new(4, 1.0).unwrap();
        let mut tape = Tape::new();
        let u0 = tape.param(vec![0.0; 5]);
        let zero: Vec<_> = (0..4).map(|_| tape.constant(vec![0.0; 5])).collect();
        let states = backward_euler_chain(&mut tape, &g, &t, Some(&zero), u0).unwrap();
        assert!(states.iter().all(|&s| tape.value(s).iter().all(|&v| v == 0.0)));
    }
}
