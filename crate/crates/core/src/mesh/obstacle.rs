use super::{MeshError, Point, TriMesh};

/// Ordered traversal of the obstacle boundary.
///
/// Edge `i` runs from `points[i]` to `points[(i + 1) % n]` with the fluid on its
/// left, so the loop turns clockwise around the obstacle. Normals point out of
/// the obstacle into the fluid.
#[derive(Clone, Debug)]
pub struct ObstacleLoop {
    vertices: Vec<usize>,
    points: Vec<Point>,
    boundary_edges: Vec<usize>,
    triangles: Vec<usize>,
    normals: Vec<Point>,
    lengths: Vec<f64>,
}

impl ObstacleLoop {
    pub(super) fn new(mesh: &TriMesh) -> Result<Self, MeshError> {
        let order = mesh.topology().obstacle_edges();
        if order.is_empty() {
            return Err(MeshError::NoObstacle);
        }
        let edges = mesh.boundary_edges();
        let vertices: Vec<usize> = order.iter().map(|&i| edges[i].vertices[0]).collect();
        let points: Vec<Point> = vertices.iter().map(|&v| mesh.vertices()[v]).collect();
        let triangles = order.iter().map(|&i| edges[i].triangle).collect();
        Ok(Self::from_parts(
            vertices,
            points,
            order.to_vec(),
            triangles,
        ))
    }

    /// Loop over bare coordinates, listed clockwise around the enclosed body.
    /// Mesh indices are synthetic (`0..n`).
    pub fn from_points(points: Vec<Point>) -> Self {
        let n = points.len();
        Self::from_parts(
            (0..n).collect(),
            points,
            (0..n).collect(),
            vec![usize::MAX; n],
        )
    }

    fn from_parts(
        vertices: Vec<usize>,
        points: Vec<Point>,
        boundary_edges: Vec<usize>,
        triangles: Vec<usize>,
    ) -> Self {
        let n = points.len();
        let mut normals = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = d[0].hypot(d[1]);
            lengths.push(len);
            normals.push([-d[1] / len, d[0] / len]);
        }
        ObstacleLoop {
            vertices,
            points,
            boundary_edges,
            triangles,
            normals,
            lengths,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mesh vertex index of loop vertex `i`.
    pub fn vertex(&self, i: usize) -> usize {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Index into [`TriMesh::boundary_edges`] of loop edge `i`.
    pub fn boundary_edge(&self, i: usize) -> usize {
        self.boundary_edges[i]
    }

    /// Fluid triangle adjacent to loop edge `i`.
    pub fn triangle(&self, i: usize) -> usize {
        self.triangles[i]
    }

    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Endpoints of edge `i`.
    pub fn edge_points(&self, i: usize) -> [Point; 2] {
        [self.points[i], self.points[(i + 1) % self.len()]]
    }

    /// Loop-vertex indices of edge `i`.
    pub fn edge_vertices(&self, i: usize) -> [usize; 2] {
        [i, (i + 1) % self.len()]
    }

    pub fn perimeter(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Unit vertex normals: the normalized sum of the two adjacent edge normals
    /// (the angle bisector, exact for regular polygons).
    pub fn vertex_normals(&self) -> Vec<Point> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let a = self.normals[(i + n - 1) % n];
                let b = self.normals[i];
                let s = [a[0] + b[0], a[1] + b[1]];
                let len = s[0].hypot(s[1]);
                if len > 0.0 {
                    [s[0] / len, s[1] / len]
                } else {
                    b
                }
            })
            .collect()
    }

    /// Enclosed area by the shoelace formula (positive for the clockwise loop).
    pub fn shoelace_area(&self) -> f64 {
        let n = self.len();
        let mut twice = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            twice += a[0] * b[1] - b[0] * a[1];
        }
        -0.5 * twice
    }

    /// Centroid of the enclosed polygon by the direct polygon formula.
    pub fn polygon_centroid(&self) -> Point {
        let n = self.len();
        let (mut cx, mut cy, mut twice) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            let cross = a[0] * b[1] - b[0] * a[1];
            twice += cross;
            cx += (a[0] + b[0]) * cross;
            cy += (a[1] + b[1]) * cross;
        }
        [cx / (3.0 * twice), cy / (3.0 * twice)]
    }
}
