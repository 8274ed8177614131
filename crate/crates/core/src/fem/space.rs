//! Lagrange P1/P2 spaces on a [`TriMesh`].
//!
//! Scalar dofs are numbered vertices first, then edge midpoints (P2 only),
//! in the order of [`Topology::edges`]. Vector spaces store all dofs of the
//! first component before those of the second.

use std::sync::Arc;

use crate::mesh::{Point, Topology, TriMesh};

use super::FemError;

#[derive(Clone, Debug)]
pub struct FunctionSpace {
    topology: Arc<Topology>,
    degree: usize,
    components: usize,
    num_vertices: usize,
}

impl FunctionSpace {
    pub fn new(mesh: &TriMesh, degree: usize, components: usize) -> Result<Self, FemError> {
        if !(1..=2).contains(&degree) {
            return Err(FemError::UnsupportedDegree(degree));
        }
        if !(1..=2).contains(&components) {
            return Err(FemError::Components(components));
        }
        Ok(FunctionSpace {
            topology: mesh.shared_topology(),
            degree,
            components,
            num_vertices: mesh.num_vertices(),
        })
    }

    pub fn p1(mesh: &TriMesh) -> Self {
        Self::new(mesh, 1, 1).expect("valid parameters")
    }

    pub fn p1_vector(mesh: &TriMesh) -> Self {
        Self::new(mesh, 1, 2).expect("valid parameters")
    }

    pub fn p2_vector(mesh: &TriMesh) -> Self {
        Self::new(mesh, 2, 2).expect("valid parameters")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Dofs of one component.
    pub fn scalar_dofs(&self) -> usize {
        match self.degree {
            1 => self.num_vertices,
            _ => self.num_vertices + self.topology.edges().len(),
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.components * self.scalar_dofs()
    }

    /// Global index of scalar dof `dof` in component `component`.
    #[inline]
    pub fn index(&self, component: usize, dof: usize) -> usize {
        component * self.scalar_dofs() + dof
    }

    /// Scalar dofs of triangle `t`: vertices, then the midpoints of the edges
    /// opposite to local vertices 0, 1, 2 (P2 only).
    pub fn element_dofs(&self, t: usize) -> Vec<usize> {
        let tri = self.topology.triangles()[t];
        let mut dofs = tri.to_vec();
        if self.degree == 2 {
            let edges = self.topology.triangle_edges()[t];
            dofs.extend(edges.iter().map(|e| self.num_vertices + e));
        }
        dofs
    }

    /// Scalar dof of the midpoint of edge `edge`.
    pub fn edge_dof(&self, edge: usize) -> usize {
        debug_assert_eq!(self.degree, 2);
        self.num_vertices + edge
    }

    /// Coordinates of every scalar dof.
    pub fn dof_points(&self, mesh: &TriMesh) -> Vec<Point> {
        let v = mesh.vertices();
        let mut pts = v.to_vec();
        if self.degree == 2 {
            pts.extend(
                self.topology
                    .edges()
                    .iter()
                    .map(|&[a, b]| [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])]),
            );
        }
        pts
    }

    pub fn same_mesh_family(&self, mesh: &TriMesh) -> bool {
        Arc::ptr_eq(&self.topology, &mesh.shared_topology())
    }
}

/// Coefficient vector over a [`FunctionSpace`].
#[derive(Clone, Debug)]
pub struct Field {
    space: FunctionSpace,
    values: Vec<f64>,
}

impl Field {
    pub fn new(space: FunctionSpace, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != space.num_dofs() {
            return Err(FemError::Length {
                got: values.len(),
                expected: space.num_dofs(),
            });
        }
        Ok(Field { space, values })
    }

    pub fn zeros(space: FunctionSpace) -> Self {
        let n = space.num_dofs();
        Field {
            space,
            values: vec![0.0; n],
        }
    }

    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values of one component.
    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.space.scalar_dofs();
        &self.values[c * n..(c + 1) * n]
    }

    /// Vertex values of a 2-component field as points.
    pub fn vertex_vectors(&self) -> Vec<Point> {
        assert_eq!(self.space.components, 2);
        let (x, y) = (self.component(0), self.component(1));
        (0..self.space.num_vertices).map(|v| [x[v], y[v]]).collect()
    }
}

/// Affine geometry of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    /// Constant gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
    pub points: [Point; 3],
}

impl ElementGeometry {
    pub fn new(points: [Point; 3]) -> Self {
        let [a, b, c] = points;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        // ∇λ_i is the inward edge normal of the opposite edge over twice the area
        let g = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
        ElementGeometry {
            area: 0.5 * det,
            grad_lambda: [g(b, c), g(c, a), g(a, b)],
            points,
        }
    }

    pub fn of(mesh: &TriMesh, t: usize) -> Self {
        Self::new(mesh.triangle_points(t))
    }

    pub fn map(&self, l: [f64; 3]) -> Point {
        let [a, b, c] = self.points;
        [
            l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
            l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
        ]
    }

    /// Barycentric coordinates of `p` (unclamped).
    pub fn barycentric(&self, p: Point) -> [f64; 3] {
        let a = self.points[0];
        let g = self.grad_lambda;
        let d = [p[0] - a[0], p[1] - a[1]];
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// P2 shape functions at barycentric point `l`, local order as in
/// [`FunctionSpace::element_dofs`].
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

/// Physical gradients of the P2 shape functions.
pub fn p2_gradients(l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
    }
    for k in 0..3 {
        let (a, b) = ((k + 1) % 3, (k + 2) % 3);
        out[3 + k] = [
            4.0 * (l[a] * g[b][0] + l[b] * g[a][0]),
            4.0 * (l[a] * g[b][1] + l[b] * g[a][1]),
        ];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::unit_square;

    #[test]
    fn p2_dof_count() {
        let m = unit_square();
        let s = FunctionSpace::new(&m, 2, 2).unwrap();
        assert_eq!(s.scalar_dofs(), 4 + 5);
        assert_eq!(s.num_dofs(), 18);
        assert_eq!(FunctionSpace::p1(&m).num_dofs(), 4);
        assert!(FunctionSpace::new(&m, 3, 1).is_err());
    }

    #[test]
    fn p2_basis_is_nodal_and_reproduces_quadratics() {
        let geo = ElementGeometry::new([[0.3, 0.1], [1.4, 0.2], [0.5, 1.3]]);
        let nodes: [[f64; 3]; 6] = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
        ];
        for (i, n) in nodes.iter().enumerate() {
            let v = p2_values(*n);
            for (j, vj) in v.iter().enumerate() {
                assert!((vj - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
        // interpolate f = x^2 + 3xy - y and compare value and gradient inside
        let f = |p: Point| p[0] * p[0] + 3.0 * p[0] * p[1] - p[1];
        let df = |p: Point| [2.0 * p[0] + 3.0 * p[1], 3.0 * p[0] - 1.0];
        let coef: Vec<f64> = nodes.iter().map(|n| f(geo.map(*n))).collect();
        let l = [0.2, 0.5, 0.3];
        let p = geo.map(l);
        let v: f64 = p2_values(l).iter().zip(&coef).map(|(a, b)| a * b).sum();
        let g = p2_gradients(l, &geo.grad_lambda);
        let gx: f64 = g.iter().zip(&coef).map(|(a, b)| a[0] * b).sum();
        let gy: f64 = g.iter().zip(&coef).map(|(a, b)| a[1] * b).sum();
        assert!((v - f(p)).abs() < 1e-13);
        assert!((gx - df(p)[0]).abs() < 1e-12 && (gy - df(p)[1]).abs() < 1e-12);
        let back = geo.barycentric(p);
        for k in 0..3 {
            assert!((back[k] - l[k]).abs() < 1e-14);
        }
    }
}
