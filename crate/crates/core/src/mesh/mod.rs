//! Triangle meshes of the flow domain.
//!
//! A [`TriMesh`] stores vertex coordinates next to a shared, immutable
//! [`Topology`]. Moving vertices (the retraction used by the optimizer) only
//! replaces the coordinates, so every deformed mesh of one optimization run
//! shares the topology of the initial mesh.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod generate;
pub mod gmsh;
mod obstacle;
mod quality;
pub mod vtu;

pub use obstacle::ObstacleLoop;
pub use quality::{triangle_quality, QualityReport};

pub type Point = [f64; 2];

/// Boundary part a boundary edge belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMarker {
    Inflow,
    Outflow,
    Wall,
    Obstacle,
}

impl BoundaryMarker {
    pub const ALL: [BoundaryMarker; 4] = [
        BoundaryMarker::Inflow,
        BoundaryMarker::Outflow,
        BoundaryMarker::Wall,
        BoundaryMarker::Obstacle,
    ];

    /// Precedence when a vertex touches several boundary parts. Obstacle
    /// vertices never touch the outer boundary in a valid mesh; between the
    /// outer parts the Dirichlet data of inflow/outflow wins over the wall.
    fn precedence(self) -> u8 {
        match self {
            BoundaryMarker::Obstacle => 3,
            BoundaryMarker::Inflow | BoundaryMarker::Outflow => 2,
            BoundaryMarker::Wall => 1,
        }
    }

    pub fn is_outer(self) -> bool {
        !matches!(self, BoundaryMarker::Obstacle)
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryMarker::Inflow => "inflow",
            BoundaryMarker::Outflow => "outflow",
            BoundaryMarker::Wall => "wall",
            BoundaryMarker::Obstacle => "obstacle",
        }
    }
}

/// A boundary edge, oriented so that its adjacent triangle lies on the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
    pub triangle: usize,
    /// Index into [`Topology::edges`].
    pub edge: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {vertex}, but the mesh has {count} vertices")]
    VertexOutOfRange {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("triangle {0} has zero or negative area")]
    DegenerateTriangle(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonConforming(usize, usize),
    #[error("boundary edge ({0}, {1}) carries no marker")]
    UnmarkedBoundaryEdge(usize, usize),
    #[error("marked edge ({0}, {1}) is not a boundary edge of the triangulation")]
    MarkedInteriorEdge(usize, usize),
    #[error("obstacle edges do not form a closed chain at vertex {0}")]
    ObstacleNotClosed(usize),
    #[error("obstacle edges form {0} separate loops, expected one")]
    MultipleObstacleLoops(usize),
    #[error("mesh has no obstacle boundary")]
    NoObstacle,
    #[error("displacement has {got} entries, mesh has {expected} vertices")]
    DisplacementLength { got: usize, expected: usize },
    #[error("displacement does not vanish at outer boundary vertex {0}")]
    OuterBoundaryMoved(usize),
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Connectivity shared by a mesh and all of its deformations.
#[derive(Debug)]
pub struct Topology {
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    /// Unique edges as (smaller, larger) vertex pairs.
    edges: Vec<[usize; 2]>,
    /// Local edge `k` of a triangle is the edge opposite to its local vertex `k`.
    triangle_edges: Vec<[usize; 3]>,
    vertex_marker: Vec<Option<BoundaryMarker>>,
    /// Boundary-edge indices of the obstacle, in loop order.
    obstacle_edges: Vec<usize>,
}

impl Topology {
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn vertex_marker(&self, vertex: usize) -> Option<BoundaryMarker> {
        self.vertex_marker[vertex]
    }

    pub fn obstacle_edges(&self) -> &[usize] {
        &self.obstacle_edges
    }
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Point>,
    topology: Arc<Topology>,
}

/// Result of moving the vertices of a mesh.
#[derive(Clone, Debug)]
pub enum Retraction {
    Valid {
        mesh: TriMesh,
        worst_quality: f64,
    },
    /// Some triangle lost its positive orientation; the step must be shortened.
    Invalid {
        triangle: usize,
    },
}

impl Retraction {
    pub fn is_valid(&self) -> bool {
        matches!(self, Retraction::Valid { .. })
    }
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh, normalizing triangles to counterclockwise orientation.
    ///
    /// `marked_edges` must mark every boundary edge of the triangulation and
    /// nothing else. Vertex order within a marked edge is irrelevant.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        marked_edges: &[([usize; 2], BoundaryMarker)],
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut triangles = triangles;
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange {
                        triangle: t,
                        vertex: v,
                        count: nv,
                    });
                }
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area < 0.0 {
                tri.swap(1, 2);
            } else if area == 0.0 || !area.is_finite() {
                return Err(MeshError::DegenerateTriangle(t));
            }
        }

        // edge -> (edge index, adjacent triangles)
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = edge_key(a, b);
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                edge_tris[id].push((t, k));
                if edge_tris[id].len() > 2 {
                    return Err(MeshError::NonConforming(key.0, key.1));
                }
                local[k] = id;
            }
            triangle_edges.push(local);
        }

        let mut marker_of: HashMap<(usize, usize), BoundaryMarker> = HashMap::new();
        for &([a, b], marker) in marked_edges {
            let key = edge_key(a, b);
            match edge_map.get(&key) {
                Some(&id) if edge_tris[id].len() == 1 => {
                    marker_of.insert(key, marker);
                }
                _ => return Err(MeshError::MarkedInteriorEdge(a, b)),
            }
        }

        let mut boundary_edges = Vec::new();
        for (id, tris) in edge_tris.iter().enumerate() {
            if tris.len() != 1 {
                continue;
            }
            let (t, k) = tris[0];
            let tri = triangles[t];
            // counterclockwise triangle: edge (k+1 -> k+2) has the triangle on its left
            let oriented = [tri[(k + 1) % 3], tri[(k + 2) % 3]];
            let [a, b] = edges[id];
            let marker = *marker_of
                .get(&(a, b))
                .ok_or(MeshError::UnmarkedBoundaryEdge(a, b))?;
            boundary_edges.push(BoundaryEdge {
                vertices: oriented,
                marker,
                triangle: t,
                edge: id,
            });
        }

        let mut vertex_marker: Vec<Option<BoundaryMarker>> = vec![None; nv];
        for e in &boundary_edges {
            for &v in &e.vertices {
                let slot = &mut vertex_marker[v];
                *slot = match *slot {
                    Some(m) if m.precedence() >= e.marker.precedence() => Some(m),
                    _ => Some(e.marker),
                };
            }
        }

        let obstacle_edges = order_obstacle_edges(&boundary_edges)?;

        Ok(TriMesh {
            vertices,
            topology: Arc::new(Topology {
                triangles,
                boundary_edges,
                edges,
                triangle_edges,
                vertex_marker,
                obstacle_edges,
            }),
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub(crate) fn shared_topology(&self) -> Arc<Topology> {
        Arc::clone(&self.topology)
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.topology.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.topology.boundary_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.topology.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.topology.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// Sum of the (signed) triangle areas.
    pub fn area(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn vertex_marker(&self, vertex: usize) -> Option<BoundaryMarker> {
        self.topology.vertex_marker[vertex]
    }

    /// Whether the vertex lies on the inflow, outflow or wall boundary.
    pub fn is_outer_boundary_vertex(&self, vertex: usize) -> bool {
        self.vertex_marker(vertex)
            .is_some_and(BoundaryMarker::is_outer)
    }

    pub fn has_obstacle(&self) -> bool {
        !self.topology.obstacle_edges.is_empty()
    }

    /// True when both meshes share one topology (same run, possibly deformed).
    pub fn same_topology(&self, other: &TriMesh) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology)
    }

    pub fn obstacle_loop(&self) -> Result<ObstacleLoop, MeshError> {
        ObstacleLoop::new(self)
    }

    pub fn element_quality(&self) -> QualityReport {
        quality::element_quality(self)
    }

    /// Copy of this mesh with replaced vertex coordinates and unchanged topology.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<TriMesh, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::DisplacementLength {
                got: vertices.len(),
                expected: self.vertices.len(),
            });
        }
        Ok(TriMesh {
            vertices,
            topology: Arc::clone(&self.topology),
        })
    }

    /// Moves every vertex by `scale * displacement` (the node-addition retraction).
    ///
    /// The displacement must vanish on the outer boundary. A triangle that
    /// loses its positive orientation yields [`Retraction::Invalid`].
    pub fn apply_displacement(
        &self,
        displacement: &[Point],
        scale: f64,
    ) -> Result<Retraction, MeshError> {
        if displacement.len() != self.vertices.len() {
            return Err(MeshError::DisplacementLength {
                got: displacement.len(),
                expected: self.vertices.len(),
            });
        }
        for (v, d) in displacement.iter().enumerate() {
            if self.is_outer_boundary_vertex(v) && (d[0] != 0.0 || d[1] != 0.0) {
                return Err(MeshError::OuterBoundaryMoved(v));
            }
        }
        let vertices: Vec<Point> = self
            .vertices
            .iter()
            .zip(displacement)
            .map(|(p, d)| [p[0] + scale * d[0], p[1] + scale * d[1]])
            .collect();
        let mesh = TriMesh {
            vertices,
            topology: Arc::clone(&self.topology),
        };
        for t in 0..mesh.num_triangles() {
            let area = mesh.triangle_area(t);
            if !(area > 0.0) {
                return Ok(Retraction::Invalid { triangle: t });
            }
        }
        let worst_quality = mesh.element_quality().worst;
        Ok(Retraction::Valid {
            mesh,
            worst_quality,
        })
    }
}

fn order_obstacle_edges(boundary_edges: &[BoundaryEdge]) -> Result<Vec<usize>, MeshError> {
    let obstacle: Vec<usize> = (0..boundary_edges.len())
        .filter(|&i| boundary_edges[i].marker == BoundaryMarker::Obstacle)
        .collect();
    if obstacle.is_empty() {
        return Ok(Vec::new());
    }
    let mut outgoing: HashMap<usize, usize> = HashMap::new();
    let mut incoming: HashMap<usize, usize> = HashMap::new();
    for &i in &obstacle {
        let [a, b] = boundary_edges[i].vertices;
        if outgoing.insert(a, i).is_some() {
            return Err(MeshError::ObstacleNotClosed(a));
        }
        if incoming.insert(b, i).is_some() {
            return Err(MeshError::ObstacleNotClosed(b));
        }
    }
    for &i in &obstacle {
        let [a, b] = boundary_edges[i].vertices;
        if !incoming.contains_key(&a) {
            return Err(MeshError::ObstacleNotClosed(a));
        }
        if !outgoing.contains_key(&b) {
            return Err(MeshError::ObstacleNotClosed(b));
        }
    }

    // start from the edge with the smallest start vertex for a deterministic order
    let start = *obstacle
        .iter()
        .min_by_key(|&&i| boundary_edges[i].vertices[0])
        .expect("non-empty");
    let mut ordered = vec![start];
    let mut current = start;
    loop {
        let next = outgoing[&boundary_edges[current].vertices[1]];
        if next == start {
            break;
        }
        ordered.push(next);
        current = next;
    }
    if ordered.len() != obstacle.len() {
        // count the remaining cycles for the diagnostic
        let mut seen: std::collections::HashSet<usize> = ordered.iter().copied().collect();
        let mut loops = 1;
        for &i in &obstacle {
            if seen.contains(&i) {
                continue;
            }
            loops += 1;
            let mut c = i;
            while seen.insert(c) {
                c = outgoing[&boundary_edges[c].vertices[1]];
            }
        }
        return Err(MeshError::MultipleObstacleLoops(loops));
    }
    Ok(ordered)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Unit square split along its diagonal, all edges walls.
    pub fn unit_square() -> TriMesh {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let triangles = vec![[0, 1, 2], [0, 2, 3]];
        let marks = [
            ([0, 1], BoundaryMarker::Wall),
            ([1, 2], BoundaryMarker::Wall),
            ([2, 3], BoundaryMarker::Wall),
            ([3, 0], BoundaryMarker::Wall),
        ];
        TriMesh::new(vertices, triangles, &marks).unwrap()
    }

    /// Square box [-2,2]^2 with a square hole [-1,1]^2 (obstacle), 8 triangles.
    pub fn box_with_square_hole() -> TriMesh {
        let vertices = vec![
            [-2.0, -2.0],
            [2.0, -2.0],
            [2.0, 2.0],
            [-2.0, 2.0],
            [-1.0, -1.0],
            [1.0, -1.0],
            [1.0, 1.0],
            [-1.0, 1.0],
        ];
        let triangles = vec![
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        let marks = [
            ([0, 1], BoundaryMarker::Wall),
            ([1, 2], BoundaryMarker::Outflow),
            ([2, 3], BoundaryMarker::Wall),
            ([3, 0], BoundaryMarker::Inflow),
            ([4, 5], BoundaryMarker::Obstacle),
            ([5, 6], BoundaryMarker::Obstacle),
            ([6, 7], BoundaryMarker::Obstacle),
            ([7, 4], BoundaryMarker::Obstacle),
        ];
        TriMesh::new(vertices, triangles, &marks).unwrap()
    }
}
