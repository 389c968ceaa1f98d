use super::FemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    Neumann,
    Robin,
    Dirichlet,
}

/// Axis-aligned quadrilateral. Nodes are ordered counter-clockwise from the
/// lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub nodes: [usize; 4],
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub subdomain: usize,
}

impl Cell {
    pub fn width(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn height(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub length: f64,
    pub tag: EdgeTag,
}

/// Union of cells of a tensor grid. Nodes are numbered row by row
/// (increasing `y`, then increasing `x`), skipping grid points that touch
/// no kept cell.
#[derive(Debug, Clone)]
pub struct RectMesh {
    xs: Vec<f64>,
    ys: Vec<f64>,
    coords: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    boundary: Vec<BoundaryEdge>,
}

impl RectMesh {
    /// Keeps the cells for which `subdomain(xc, yc)` returns `Some`, with
    /// `(xc, yc)` the cell center. Each exterior edge is tagged by
    /// `tag(xm, ym)` evaluated at its midpoint.
    pub fn from_grid(
        xs: Vec<f64>,
        ys: Vec<f64>,
        subdomain: impl Fn(f64, f64) -> Option<usize>,
        tag: impl Fn(f64, f64) -> EdgeTag,
    ) -> Result<Self, FemError> {
        for (name, lines) in [("x", &xs), ("y", &ys)] {
            if lines.len() < 2 || lines.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(FemError::InvalidMesh(format!(
                    "{name} grid lines must be strictly increasing with at least two entries"
                )));
            }
        }
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        let mut kept = vec![None; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let xc = 0.5 * (xs[i] + xs[i + 1]);
                let yc = 0.5 * (ys[j] + ys[j + 1]);
                kept[j * nx + i] = subdomain(xc, yc);
            }
        }
        if kept.iter().all(Option::is_none) {
            return Err(FemError::InvalidMesh("no cells selected".into()));
        }

        let grid_node = |i: usize, j: usize| j * (nx + 1) + i;
        let mut used = vec![false; (nx + 1) * (ny + 1)];
        for j in 0..ny {
            for i in 0..nx {
                if kept[j * nx + i].is_some() {
                    for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                        used[grid_node(a, b)] = true;
                    }
                }
            }
        }
        let mut number = vec![usize::MAX; used.len()];
        let mut coords = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                if used[grid_node(i, j)] {
                    number[grid_node(i, j)] = coords.len();
                    coords.push([xs[i], ys[j]]);
                }
            }
        }
        let node = |i, j| number[grid_node(i, j)];

        let is_kept = |i: isize, j: isize| {
            i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && kept[j as usize * nx + i as usize].is_some()
        };
        let mut cells = Vec::new();
        let mut boundary = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let Some(sub) = kept[j * nx + i] else { continue };
                cells.push(Cell {
                    nodes: [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)],
                    x: [xs[i], xs[i + 1]],
                    y: [ys[j], ys[j + 1]],
                    subdomain: sub,
                });
                let (ii, jj) = (i as isize, j as isize);
                let edges = [
                    (is_kept(ii, jj - 1), [node(i, j), node(i + 1, j)]),
                    (is_kept(ii + 1, jj), [node(i + 1, j), node(i + 1, j + 1)]),
                    (is_kept(ii, jj + 1), [node(i + 1, j + 1), node(i, j + 1)]),
                    (is_kept(ii - 1, jj), [node(i, j + 1), node(i, j)]),
                ];
                for (neighbour, nodes) in edges {
                    if neighbour {
                        continue;
                    }
                    let (a, b) = (coords[nodes[0]], coords[nodes[1]]);
                    let length = (b[0] - a[0]).abs() + (b[1] - a[1]).abs();
                    let tag = tag(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]));
                    boundary.push(BoundaryEdge { nodes, length, tag });
                }
            }
        }
        Ok(Self {
            xs,
            ys,
            coords,
            cells,
            boundary,
        })
    }

    /// Thermal fin: a post `(2.5, 3.5) × (0, 4)` (subdomain 0) with four
    /// fins `((0, 2.5) ∪ (3.5, 6)) × (i - 0.25, i)` (subdomain `i`). The
    /// bottom of the post is Neumann, every other exterior edge Robin.
    pub fn fin(nx_per_unit: usize) -> Result<Self, FemError> {
        if nx_per_unit == 0 {
            return Err(FemError::InvalidMesh("nx_per_unit must be at least 1".into()));
        }
        let xs = subdivide(&[0.0, 2.5, 3.5, 6.0], nx_per_unit);
        let ys = subdivide(&[0.0, 0.75, 1.0, 1.75, 2.0, 2.75, 3.0, 3.75, 4.0], nx_per_unit);
        Self::from_grid(
            xs,
            ys,
            |x, y| {
                if x > 2.5 && x < 3.5 {
                    return Some(0);
                }
                (1..=4).find(|&i| y > i as f64 - 0.25 && y < i as f64)
            },
            |x, y| {
                if y == 0.0 && x > 2.5 && x < 3.5 {
                    EdgeTag::Neumann
                } else {
                    EdgeTag::Robin
                }
            },
        )
    }

    /// `nx × ny` cells on the unit square, all boundary edges Dirichlet.
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self, FemError> {
        if nx == 0 || ny == 0 {
            return Err(FemError::InvalidMesh("unit square needs at least one cell per direction".into()));
        }
        let lines = |n: usize| (0..=n).map(|i| i as f64 / n as f64).collect();
        Self::from_grid(lines(nx), lines(ny), |_, _| Some(0), |_, _| EdgeTag::Dirichlet)
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn x_lines(&self) -> &[f64] {
        &self.xs
    }

    pub fn y_lines(&self) -> &[f64] {
        &self.ys
    }

    pub fn n_subdomains(&self) -> usize {
        self.cells.iter().map(|c| c.subdomain + 1).max().unwrap_or(0)
    }

    pub fn area(&self) -> f64 {
        self.cells.iter().map(Cell::area).sum()
    }

    pub fn tagged_length(&self, tag: EdgeTag) -> f64 {
        self.boundary.iter().filter(|e| e.tag == tag).map(|e| e.length).sum()
    }

    /// Nodes lying on an edge with the given tag.
    pub fn tagged_nodes(&self, tag: EdgeTag) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes()];
        for e in self.boundary.iter().filter(|e| e.tag == tag) {
            mask[e.nodes[0]] = true;
            mask[e.nodes[1]] = true;
        }
        mask
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.coords.iter().map(|&[x, y]| f(x, y)).collect()
    }

    /// Index of the node at `(x, y)`, if there is one.
    pub fn find_node(&self, x: f64, y: f64) -> Option<usize> {
        self.coords
            .iter()
            .position(|c| (c[0] - x).abs() < 1e-12 && (c[1] - y).abs() < 1e-12)
    }
}

/// Splits each interval between consecutive breakpoints into
/// `ceil(len · per_unit)` equal pieces.
fn subdivide(breaks: &[f64], per_unit: usize) -> Vec<f64> {
    let mut lines = vec![breaks[0]];
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        let n = ((len * per_unit as f64) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..n {
            lines.push(w[0] + len * k as f64 / n as f64);
        }
        lines.push(w[1]);
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fin_geometry() {
        for n in [1, 2, 4] {
            let m = RectMesh::fin(n).unwrap();
            // post 1 × 4 plus four fins of width 2 · 2.5 and height 0.25
            assert!((m.area() - 9.0).abs() < 1e-12, "area {}", m.area());
            assert!((m.tagged_length(EdgeTag::Neumann) - 1.0).abs() < 1e-12);
            assert_eq!(m.n_subdomains(), 5);
            for &x in &[0.0, 2.5, 3.5, 6.0] {
                assert!(m.x_lines().contains(&x));
            }
            for &y in &[0.0, 0.75, 1.0, 1.75, 2.0, 2.75, 3.0, 3.75, 4.0] {
                assert!(m.y_lines().contains(&y));
            }
            let sub_area: f64 = m.cells().iter().filter(|c| c.subdomain == 0).map(Cell::area).sum();
            assert!((sub_area - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fin_cells_lie_in_one_subdomain() {
        let m = RectMesh::fin(2).unwrap();
        for c in m.cells() {
            if c.subdomain == 0 {
                assert!(c.x[0] >= 2.5 && c.x[1] <= 3.5);
            } else {
                let top = c.subdomain as f64;
                assert!(c.y[0] >= top - 0.25 && c.y[1] <= top);
                assert!(c.x[1] <= 2.5 || c.x[0] >= 3.5);
            }
        }
    }

    #[test]
    fn fin_boundary_perimeter() {
        // post sides between fins plus fin outlines
        let m = RectMesh::fin(1).unwrap();
        let total = m.tagged_length(EdgeTag::Robin) + m.tagged_length(EdgeTag::Neumann);
        let post_sides = 2.0 * (4.0 - 4.0 * 0.25);
        let fins = 8.0 * (2.0 * 2.5 + 0.25);
        let top = 1.0;
        assert!((total - (1.0 + post_sides + fins + top)).abs() < 1e-12, "{total}");
    }

    #[test]
    fn unit_square_numbering() {
        let m = RectMesh::unit_square(2, 3).unwrap();
        assert_eq!(m.n_nodes(), 12);
        assert_eq!(m.coords()[4], [1.0 / 2.0, 1.0 / 3.0]);
        assert_eq!(m.cells()[0].nodes, [0, 1, 4, 3]);
        assert_eq!(m.boundary().len(), 10);
        assert_eq!(m.tagged_nodes(EdgeTag::Dirichlet).iter().filter(|&&b| b).count(), 10);
        assert_eq!(m.find_node(0.5, 1.0), Some(10));
    }

    #[test]
    fn invalid_grids() {
        assert!(RectMesh::fin(0).is_err());
        assert!(RectMesh::unit_square(0, 3).is_err());
        assert!(RectMesh::from_grid(vec![0.0, 0.0], vec![0.0, 1.0], |_, _| Some(0), |_, _| EdgeTag::Robin).is_err());
        assert!(RectMesh::from_grid(vec![0.0, 1.0], vec![0.0, 1.0], |_, _| None, |_, _| EdgeTag::Robin).is_err());
    }
}
