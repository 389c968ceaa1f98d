use std::sync::Arc;

use super::assembly::{check_len, mass_matrix, stiffness_matrix, CellQuadrature};
use super::mesh::{EdgeTag, RectMesh};
use super::FemError;
use crate::autodiff::{NewtonConfig, ResidualSystem, Tape, VarId};
use crate::fd::TimeGrid;
use crate::sparse::CsrMatrix;

/// Crank–Nicolson operators for `u_t - Δu + u² = f` with `u = 0` on the
/// boundary, for a fixed step size `k`.
///
/// One step solves
/// `M u + k/2 K u + k/2 N(u) = M u' - k/2 K u' - k/2 N(u') + k/2 M (f' + f)`
/// on interior rows, where `N(u)_a = (u², φ_a)` and primes mark the previous
/// step, and `u_a = 0` on boundary rows.
pub struct HeatOperators {
    mesh: RectMesh,
    k: f64,
    mass: CsrMatrix,
    dirichlet: Vec<bool>,
    quad: Vec<CellQuadrature>,
    /// `M + k/2 K` with boundary rows replaced by the identity.
    lhs: CsrMatrix,
    /// `M - k/2 K` with boundary rows zeroed.
    rhs: CsrMatrix,
    rhs_t: CsrMatrix,
}

impl HeatOperators {
    pub fn new(mesh: RectMesh, k: f64) -> Result<Self, FemError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(FemError::InvalidMesh(format!("time step must be positive, got {k}")));
        }
        let dirichlet = mesh.tagged_nodes(EdgeTag::Dirichlet);
        let mass = mass_matrix(&mesh);
        let stiff = stiffness_matrix(&mesh, |_| true);
        let n = mesh.n_nodes();

        let lhs_full = mass.add_scaled(1.0, &stiff, 0.5 * k)?;
        let rhs_full = mass.add_scaled(1.0, &stiff, -0.5 * k)?;
        let interior = |m: &CsrMatrix| -> Vec<(usize, usize, f64)> {
            m.triplets().filter(|&(i, _, _)| !dirichlet[i]).collect()
        };
        let mut lhs_t = interior(&lhs_full);
        lhs_t.extend((0..n).filter(|&i| dirichlet[i]).map(|i| (i, i, 1.0)));
        let lhs = CsrMatrix::from_triplets(n, &lhs_t)?;
        let rhs = CsrMatrix::from_triplets(n, &interior(&rhs_full))?;
        let rhs_t = rhs.transpose();
        let quad = mesh.cells().iter().map(CellQuadrature::new).collect();
        Ok(Self {
            mesh,
            k,
            mass,
            dirichlet,
            quad,
            lhs,
            rhs,
            rhs_t,
        })
    }

    pub fn mesh(&self) -> &RectMesh {
        &self.mesh
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    /// `N(u)_a = (u², φ_a)`, zero on boundary rows.
    pub fn nonlinear_term(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (cell, cq) in self.mesh.cells().iter().zip(&self.quad) {
            for q in 0..4 {
                let uq: f64 = (0..4).map(|b| cq.phi[q][b] * u[cell.nodes[b]]).sum();
                for a in 0..4 {
                    out[cell.nodes[a]] += cq.weights[q] * uq * uq * cq.phi[q][a];
                }
            }
        }
        self.zero_boundary(&mut out);
        out
    }

    /// `N'(u)` with boundary rows removed. The full `N'(u)` is symmetric.
    fn nonlinear_jacobian(&self, u: &[f64]) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.quad.len() * 16);
        for (cell, cq) in self.mesh.cells().iter().zip(&self.quad) {
            let uq: Vec<f64> = (0..4)
                .map(|q| (0..4).map(|b| cq.phi[q][b] * u[cell.nodes[b]]).sum())
                .collect();
            for a in 0..4 {
                if self.dirichlet[cell.nodes[a]] {
                    continue;
                }
                for b in 0..4 {
                    let v: f64 = (0..4)
                        .map(|q| 2.0 * cq.weights[q] * uq[q] * cq.phi[q][a] * cq.phi[q][b])
                        .sum();
                    t.push((cell.nodes[a], cell.nodes[b], v));
                }
            }
        }
        CsrMatrix::from_triplets(self.n_nodes(), &t).expect("cell nodes are mesh nodes")
    }

    fn zero_boundary(&self, v: &mut [f64]) {
        v.iter_mut().zip(&self.dirichlet).filter(|(_, &d)| d).for_each(|(x, _)| *x = 0.0);
    }

    /// `k/2 · M (f_prev + f_n)` on interior rows.
    pub fn source_term(&self, f_prev: &[f64], f_n: &[f64]) -> Result<Vec<f64>, FemError> {
        check_len(f_prev, self.n_nodes())?;
        check_len(f_n, self.n_nodes())?;
        let sum: Vec<f64> = f_prev.iter().zip(f_n).map(|(a, b)| a + b).collect();
        let mut out = self.mass.spmv(&sum)?;
        out.iter_mut().for_each(|x| *x *= 0.5 * self.k);
        self.zero_boundary(&mut out);
        Ok(out)
    }
}

/// One Crank–Nicolson step as a residual system in the new state `u_n`,
/// parametrized by the previous state `u_{n-1}`.
pub struct NonlinearHeatStep {
    ops: Arc<HeatOperators>,
    source: Vec<f64>,
}

impl NonlinearHeatStep {
    pub fn new(ops: Arc<HeatOperators>, f_prev: &[f64], f_n: &[f64]) -> Result<Self, FemError> {
        let source = ops.source_term(f_prev, f_n)?;
        Ok(Self { ops, source })
    }
}

impl ResidualSystem for NonlinearHeatStep {
    fn n_state(&self) -> usize {
        self.ops.n_nodes()
    }

    fn n_params(&self) -> usize {
        self.ops.n_nodes()
    }

    fn residual(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let half_k = 0.5 * self.ops.k;
        let lhs = self.ops.lhs.spmv(u).expect("state length");
        let rhs = self.ops.rhs.spmv(p).expect("parameter length");
        let nu = self.ops.nonlinear_term(u);
        let np = self.ops.nonlinear_term(p);
        (0..u.len())
            .map(|i| lhs[i] + half_k * nu[i] - rhs[i] + half_k * np[i] - self.source[i])
            .collect()
    }

    fn jacobian(&self, u: &[f64], _p: &[f64]) -> CsrMatrix {
        let nj = self.ops.nonlinear_jacobian(u);
        self.ops.lhs.add_scaled(1.0, &nj, 0.5 * self.ops.k).expect("same dimensions")
    }

    fn residual_params_vjp(&self, _u: &[f64], p: &[f64], v: &[f64]) -> Vec<f64> {
        // ∂R/∂p = -(M - k/2 K) + k/2 N'(p) on interior rows
        let a = self.ops.rhs_t.spmv(v).expect("vector length");
        let mut vi = v.to_vec();
        self.ops.zero_boundary(&mut vi);
        let b = self.ops.nonlinear_jacobian(p).spmv_transpose(&vi).expect("vector length");
        a.iter().zip(&b).map(|(a, b)| -a + 0.5 * self.ops.k * b).collect()
    }
}

/// Crank–Nicolson time stepping with a space-time source `f(x, y, t)`.
pub struct CrankNicolson {
    ops: Arc<HeatOperators>,
    time: TimeGrid,
    /// Nodal source at `t_0, …, t_{n_k}`.
    sources: Vec<Vec<f64>>,
    newton: NewtonConfig,
}

impl CrankNicolson {
    pub fn new(
        mesh: RectMesh,
        time: TimeGrid,
        f: impl Fn(f64, f64, f64) -> f64,
        newton: NewtonConfig,
    ) -> Result<Self, FemError> {
        let sources = (0..=time.n_k())
            .map(|j| {
                let t = j as f64 * time.k();
                mesh.interpolate(|x, y| f(x, y, t))
            })
            .collect();
        let ops = Arc::new(HeatOperators::new(mesh, time.k())?);
        Ok(Self {
            ops,
            time,
            sources,
            newton,
        })
    }

    pub fn operators(&self) -> &Arc<HeatOperators> {
        &self.ops
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn mesh(&self) -> &RectMesh {
        self.ops.mesh()
    }

    pub fn step_system(&self, j: usize) -> Result<NonlinearHeatStep, FemError> {
        NonlinearHeatStep::new(self.ops.clone(), &self.sources[j], &self.sources[j + 1])
    }

    /// States `u_1, …, u_{n_k}` starting from `u0`, each Newton solve warm
    /// started from the previous state.
    pub fn chain(&self, tape: &mut Tape, u0: VarId) -> Result<Vec<VarId>, FemError> {
        check_len(tape.value(u0), self.ops.n_nodes())?;
        let mut states = Vec::with_capacity(self.time.n_k());
        let mut prev = u0;
        for j in 0..self.time.n_k() {
            let sys = Arc::new(self.step_system(j)?);
            let init = tape.value(prev).to_vec();
            prev = tape.nonlinear_solve(sys, prev, &init, &self.newton)?;
            states.push(prev);
        }
        Ok(states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;
    use std::f64::consts::PI;

    fn manufactured_source(x: f64, y: f64, t: f64) -> f64 {
        let s = (PI * x).sin() * (PI * y).sin();
        (-2.0 * t * (t * t).exp() + t.exp() * s + (t * t).exp() + 2.0 * PI * PI * (t * t).exp())
            * (-2.0 * t * t + t).exp()
            * s
    }

    #[test]
    fn rest_state() {
        let ops = Arc::new(HeatOperators::new(RectMesh::unit_square(3, 3).unwrap(), 0.1).unwrap());
        let zero = vec![0.0; 16];
        let step = NonlinearHeatStep::new(ops, &zero, &zero).unwrap();
        assert!(step.residual(&zero, &zero).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mesh = RectMesh::unit_square(3, 3).unwrap();
        let u = mesh.interpolate(|x, y| 1.0 + x * y + 0.5 * x);
        let p = mesh.interpolate(|x, y| (x - y).cos());
        let f = mesh.interpolate(|x, _| x);
        let step = NonlinearHeatStep::new(Arc::new(HeatOperators::new(mesh, 0.2).unwrap()), &f, &f).unwrap();
        let jac = step.jacobian(&u, &p).to_dense();
        let eps = 1e-6;
        for j in 0..u.len() {
            let (mut up, mut um) = (u.clone(), u.clone());
            up[j] += eps;
            um[j] -= eps;
            let (rp, rm) = (step.residual(&up, &p), step.residual(&um, &p));
            for i in 0..u.len() {
                let fd = (rp[i] - rm[i]) / (2.0 * eps);
                assert!((fd - jac[i][j]).abs() < 1e-6, "({i},{j}): {fd} vs {}", jac[i][j]);
            }
        }
    }

    #[test]
    fn parameter_vjp_matches_finite_differences() {
        let mesh = RectMesh::unit_square(3, 3).unwrap();
        let u = mesh.interpolate(|x, y| x + y);
        let p = mesh.interpolate(|x, y| 1.0 + x * x - y);
        let v: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let zero = vec![0.0; 16];
        let step = NonlinearHeatStep::new(Arc::new(HeatOperators::new(mesh, 0.3).unwrap()), &zero, &zero).unwrap();
        let g = step.residual_params_vjp(&u, &p, &v);
        let eps = 1e-6;
        for j in 0..16 {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp[j] += eps;
            pm[j] -= eps;
            let (rp, rm) = (step.residual(&u, &pp), step.residual(&u, &pm));
            let fd: f64 = (0..16).map(|i| v[i] * (rp[i] - rm[i]) / (2.0 * eps)).sum();
            assert!((fd - g[j]).abs() < 1e-7, "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn one_step_gradient_check() {
        let mesh = RectMesh::unit_square(3, 3).unwrap();
        let cn = CrankNicolson::new(
            mesh.clone(),
            TimeGrid::new(1, 0.1).unwrap(),
            manufactured_source,
            NewtonConfig::default(),
        )
        .unwrap();
        let u0 = mesh.interpolate(|x, y| (PI * x).sin() * (PI * y).sin() + 0.3 * x);
        let report = gradient_check(
            |t, p| {
                let states = cn.chain(t, p).map_err(|e| match e {
                    FemError::Autodiff(a) => a,
                    other => panic!("{other}"),
                })?;
                t.norm2(states[0])
            },
            &u0,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn manufactured_solution_at_center() {
        let mesh = RectMesh::unit_square(10, 10).unwrap();
        let cn = CrankNicolson::new(
            mesh.clone(),
            TimeGrid::new(100, 1.0).unwrap(),
            manufactured_source,
            NewtonConfig::default(),
        )
        .unwrap();
        let mut tape = Tape::new();
        let u0 = tape.constant(mesh.interpolate(|x, y| (PI * x).sin() * (PI * y).sin()));
        let states = cn.chain(&mut tape, u0).unwrap();
        let center = mesh.find_node(0.5, 0.5).unwrap();
        let u_t = tape.value(*states.last().unwrap())[center];
        assert!((u_t - 1.0).abs() < 0.05, "u(1/2, 1/2, 1) = {u_t}");
    }
}
