use std::sync::Arc;

use super::mesh::{Cell, EdgeTag, RectMesh};
use super::FemError;
use crate::autodiff::{AffineMatrix, ParamDependentMatrix, ParamDomain};
use crate::sparse::{lu_factorize, CsrMatrix};

/// Points and weights on the reference square or interval `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// 2×2 Gauss rule, exact for bicubic integrands.
    pub fn gauss_2x2() -> Self {
        let g = 1.0 / 3f64.sqrt();
        let points = vec![[-g, -g], [g, -g], [g, g], [-g, g]];
        Self {
            points,
            weights: vec![1.0; 4],
        }
    }

    /// Two-point Gauss rule on `[-1, 1]`; the second coordinate is unused.
    pub fn gauss_2() -> Self {
        let g = 1.0 / 3f64.sqrt();
        Self {
            points: vec![[-g, 0.0], [g, 0.0]],
            weights: vec![1.0, 1.0],
        }
    }
}

const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Q1 basis data of one cell at the 2×2 Gauss points.
#[derive(Debug, Clone)]
pub(crate) struct CellQuadrature {
    /// Physical weights, reference weight times Jacobian determinant.
    pub weights: [f64; 4],
    pub points: [[f64; 2]; 4],
    /// `phi[q][a]`
    pub phi: [[f64; 4]; 4],
    /// `grad[q][a]`
    pub grad: [[[f64; 2]; 4]; 4],
}

impl CellQuadrature {
    pub fn new(cell: &Cell) -> Self {
        let rule = QuadratureRule::gauss_2x2();
        let (hx, hy) = (cell.width(), cell.height());
        let det = 0.25 * hx * hy;
        let mut out = Self {
            weights: [0.0; 4],
            points: [[0.0; 2]; 4],
            phi: [[0.0; 4]; 4],
            grad: [[[0.0; 2]; 4]; 4],
        };
        for (q, (&[xi, eta], &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            out.weights[q] = w * det;
            out.points[q] = [
                cell.x[0] + 0.5 * (xi + 1.0) * hx,
                cell.y[0] + 0.5 * (eta + 1.0) * hy,
            ];
            for (a, &[sa, ta]) in CORNERS.iter().enumerate() {
                out.phi[q][a] = 0.25 * (1.0 + sa * xi) * (1.0 + ta * eta);
                out.grad[q][a] = [
                    0.25 * sa * (1.0 + ta * eta) * 2.0 / hx,
                    0.25 * ta * (1.0 + sa * xi) * 2.0 / hy,
                ];
            }
        }
        out
    }

    pub fn stiffness(&self) -> [[f64; 4]; 4] {
        let mut k = [[0.0; 4]; 4];
        for q in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += self.weights[q] * dot2(self.grad[q][a], self.grad[q][b]);
                }
            }
        }
        k
    }

    pub fn mass(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for q in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += self.weights[q] * self.phi[q][a] * self.phi[q][b];
                }
            }
        }
        m
    }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cell_matrix_triplets(mesh: &RectMesh, keep: impl Fn(&Cell) -> bool, local: impl Fn(&CellQuadrature) -> [[f64; 4]; 4]) -> CsrMatrix {
    let mut t = Vec::new();
    for cell in mesh.cells().iter().filter(|c| keep(c)) {
        let m = local(&CellQuadrature::new(cell));
        for a in 0..4 {
            for b in 0..4 {
                t.push((cell.nodes[a], cell.nodes[b], m[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), &t).expect("cell nodes are mesh nodes")
}

/// `(∇u, ∇φ)` restricted to cells accepted by `keep`.
pub fn stiffness_matrix(mesh: &RectMesh, keep: impl Fn(&Cell) -> bool) -> CsrMatrix {
    cell_matrix_triplets(mesh, keep, CellQuadrature::stiffness)
}

/// `(u, φ)` over the whole mesh.
pub fn mass_matrix(mesh: &RectMesh) -> CsrMatrix {
    cell_matrix_triplets(mesh, |_| true, CellQuadrature::mass)
}

/// Diagonal of the row-summed mass matrix.
pub fn lumped_mass(mesh: &RectMesh) -> Vec<f64> {
    mass_matrix(mesh).spmv(&vec![1.0; mesh.n_nodes()]).expect("square")
}

/// `(u, φ)` on the edges carrying `tag`.
pub fn boundary_mass(mesh: &RectMesh, tag: EdgeTag) -> CsrMatrix {
    let rule = QuadratureRule::gauss_2();
    let mut t = Vec::new();
    for e in mesh.boundary().iter().filter(|e| e.tag == tag) {
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let s = p[0];
            let phi = [0.5 * (1.0 - s), 0.5 * (1.0 + s)];
            for a in 0..2 {
                for b in 0..2 {
                    t.push((e.nodes[a], e.nodes[b], 0.5 * e.length * w * phi[a] * phi[b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), &t).expect("edge nodes are mesh nodes")
}

/// `(g, φ)` on the edges carrying `tag`.
pub fn boundary_load(mesh: &RectMesh, tag: EdgeTag, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let rule = QuadratureRule::gauss_2();
    let coords = mesh.coords();
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for e in mesh.boundary().iter().filter(|e| e.tag == tag) {
        let (a, b) = (coords[e.nodes[0]], coords[e.nodes[1]]);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let s = p[0];
            let phi = [0.5 * (1.0 - s), 0.5 * (1.0 + s)];
            let x = phi[0] * a[0] + phi[1] * b[0];
            let y = phi[0] * a[1] + phi[1] * b[1];
            let gv = g(x, y);
            for k in 0..2 {
                rhs[e.nodes[k]] += 0.5 * e.length * w * gv * phi[k];
            }
        }
    }
    rhs
}

/// `(f, φ)` with `f` evaluated at the quadrature points.
pub fn load_vector(mesh: &RectMesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for cell in mesh.cells() {
        let cq = CellQuadrature::new(cell);
        for q in 0..4 {
            let fq = f(cq.points[q][0], cq.points[q][1]);
            for a in 0..4 {
                rhs[cell.nodes[a]] += cq.weights[q] * fq * cq.phi[q][a];
            }
        }
    }
    rhs
}

/// Thermal fin: `A(μ) = Σ_i κ_i K_i + Bi·M_R` with `μ = (κ_0, …, κ_4, Bi)`
/// and a unit Neumann flux at the bottom of the post.
pub struct FinSystem {
    mesh: RectMesh,
    matrix: Arc<AffineMatrix>,
    rhs: Vec<f64>,
}

pub const FIN_PARAMS: usize = 6;

impl FinSystem {
    pub fn new(mesh: RectMesh) -> Result<Self, FemError> {
        let subdomains = mesh.n_subdomains();
        if subdomains != FIN_PARAMS - 1 {
            return Err(FemError::InvalidMesh(format!(
                "fin system needs 5 subdomains, mesh has {subdomains}"
            )));
        }
        let mut blocks: Vec<CsrMatrix> = (0..subdomains)
            .map(|i| stiffness_matrix(&mesh, |c| c.subdomain == i))
            .collect();
        blocks.push(boundary_mass(&mesh, EdgeTag::Robin));
        let matrix = Arc::new(AffineMatrix::from_blocks(&blocks, None, ParamDomain::Positive)?);
        let rhs = boundary_load(&mesh, EdgeTag::Neumann, |_, _| 1.0);
        Ok(Self { mesh, matrix, rhs })
    }

    pub fn mesh(&self) -> &RectMesh {
        &self.mesh
    }

    pub fn matrix(&self) -> &Arc<AffineMatrix> {
        &self.matrix
    }

    pub fn family(&self) -> Arc<dyn ParamDependentMatrix> {
        self.matrix.clone()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// Solution for the given `μ`.
    pub fn solve(&self, mu: &[f64]) -> Result<Vec<f64>, FemError> {
        check_len(mu, FIN_PARAMS)?;
        let a = self.matrix.matrix(mu)?;
        Ok(lu_factorize(&a)?.solve(&self.rhs)?)
    }
}

/// `-∇·(κ∇u) = f` on a Dirichlet-bounded mesh with `u = 0` on the boundary
/// and `κ` given by its nodal values.
///
/// The matrix is affine in the nodal `κ`. Boundary rows and columns are
/// replaced by the identity, with a zero right-hand side.
pub struct KappaPoissonSystem {
    mesh: RectMesh,
    matrix: Arc<AffineMatrix>,
    rhs: Vec<f64>,
    dirichlet: Vec<bool>,
}

impl KappaPoissonSystem {
    pub fn new(mesh: RectMesh, f: impl Fn(f64, f64) -> f64) -> Result<Self, FemError> {
        let n = mesh.n_nodes();
        let dirichlet = mesh.tagged_nodes(EdgeTag::Dirichlet);

        let mut pattern = Vec::new();
        let mut sens = Vec::new();
        for cell in mesh.cells() {
            let cq = CellQuadrature::new(cell);
            for a in 0..4 {
                let na = cell.nodes[a];
                if dirichlet[na] {
                    continue;
                }
                for b in 0..4 {
                    let nb = cell.nodes[b];
                    if dirichlet[nb] {
                        continue;
                    }
                    pattern.push((na, nb, 0.0));
                    for q in 0..4 {
                        let kab = cq.weights[q] * dot2(cq.grad[q][a], cq.grad[q][b]);
                        for c in 0..4 {
                            sens.push(((na, nb), cell.nodes[c], kab * cq.phi[q][c]));
                        }
                    }
                }
            }
        }
        pattern.extend((0..n).filter(|&i| dirichlet[i]).map(|i| (i, i, 0.0)));
        let pattern = CsrMatrix::from_triplets(n, &pattern)?;
        let pos = |i, j| pattern.position(i, j).expect("entry is in the pattern");
        let sens: Vec<_> = sens.into_iter().map(|((i, j), c, v)| (pos(i, j), c, v)).collect();
        let sensitivity = CsrMatrix::from_triplets_rect(pattern.nnz(), n, &sens)?;
        let mut offset = vec![0.0; pattern.nnz()];
        for i in (0..n).filter(|&i| dirichlet[i]) {
            offset[pos(i, i)] = 1.0;
        }
        let matrix = Arc::new(AffineMatrix::new(pattern, offset, sensitivity, ParamDomain::Positive)?);

        let mut rhs = load_vector(&mesh, f);
        rhs.iter_mut().zip(&dirichlet).filter(|(_, &d)| d).for_each(|(r, _)| *r = 0.0);
        Ok(Self {
            mesh,
            matrix,
            rhs,
            dirichlet,
        })
    }

    pub fn mesh(&self) -> &RectMesh {
        &self.mesh
    }

    pub fn matrix(&self) -> &Arc<AffineMatrix> {
        &self.matrix
    }

    pub fn family(&self) -> Arc<dyn ParamDependentMatrix> {
        self.matrix.clone()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn solve(&self, kappa: &[f64]) -> Result<Vec<f64>, FemError> {
        check_len(kappa, self.mesh.n_nodes())?;
        let a = self.matrix.matrix(kappa)?;
        Ok(lu_factorize(&a)?.solve(&self.rhs)?)
    }
}

pub(crate) fn check_len(v: &[f64], expected: usize) -> Result<(), FemError> {
    if v.len() != expected {
        return Err(FemError::Length {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}
