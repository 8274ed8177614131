//! Built-in generator for the channel-with-circular-obstacle geometry.

use serde::{Deserialize, Serialize};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use thiserror::Error;

use super::{BoundaryMarker, MeshError, Point, TriMesh};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelGeometry {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub center: Point,
    pub radius: f64,
    /// Number of equal arcs discretizing the obstacle.
    pub obstacle_segments: usize,
    /// Target edge length away from the obstacle.
    pub far_field_size: f64,
    /// Growth of the target edge length per unit distance from the obstacle.
    pub grading: f64,
    /// Minimum angle requested from the Delaunay refinement, in degrees.
    pub min_angle_deg: f64,
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        Self::desk()
    }
}

impl ChannelGeometry {
    /// Desk-scale resolution (~2,500 triangles, 160 obstacle edges).
    pub fn desk() -> Self {
        ChannelGeometry {
            x_min: -3.0,
            x_max: 6.0,
            y_min: -2.0,
            y_max: 2.0,
            center: [0.0, 0.0],
            radius: 0.5,
            obstacle_segments: 160,
            far_field_size: 0.28,
            grading: 0.35,
            min_angle_deg: 28.0,
        }
    }

    /// Resolution comparable to the reference experiment (633 obstacle edges).
    pub fn paper() -> Self {
        ChannelGeometry {
            obstacle_segments: 633,
            far_field_size: 0.136,
            grading: 0.25,
            ..Self::desk()
        }
    }

    fn size_at(&self, p: Point) -> f64 {
        let h0 = std::f64::consts::TAU * self.radius / self.obstacle_segments as f64;
        let d = ((p[0] - self.center[0]).hypot(p[1] - self.center[1]) - self.radius).max(0.0);
        (h0 + self.grading * d).min(self.far_field_size)
    }

    /// Mirror symmetry about the horizontal line through the centre is exact
    /// when the box is symmetric and the obstacle has an even segment count.
    fn is_symmetric(&self) -> bool {
        self.obstacle_segments % 2 == 0
            && (self.y_max - self.center[1] - (self.center[1] - self.y_min)).abs() < 1e-12
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("infeasible geometry: {0}")]
    Infeasible(String),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Places points along the segment `a -> b` (both included) following the size field.
fn split_segment(geom: &ChannelGeometry, a: Point, b: Point) -> Vec<Point> {
    // march from the finer end so steps never jump over the refined region
    let reversed = geom.size_at(b) < geom.size_at(a);
    let (from, to) = if reversed { (b, a) } else { (a, b) };
    let len = (to[0] - from[0]).hypot(to[1] - from[1]);
    let mut ts = vec![0.0];
    let mut t = 0.0;
    loop {
        let p = [
            from[0] + t * (to[0] - from[0]),
            from[1] + t * (to[1] - from[1]),
        ];
        t += geom.size_at(p) / len;
        if t >= 1.0 {
            break;
        }
        ts.push(t);
    }
    // drop a last interior point that would leave a short final gap
    if ts.len() > 1 && 1.0 - ts[ts.len() - 1] < 0.5 * (t - ts[ts.len() - 1]) {
        ts.pop();
    }
    let stretch = 1.0 / if ts.len() > 1 { t.max(1.0) } else { 1.0 };
    let mut out: Vec<Point> = ts
        .iter()
        .map(|&s| s * stretch)
        .chain(std::iter::once(1.0))
        .map(|s| {
            let mut q = [
                from[0] + s * (to[0] - from[0]),
                from[1] + s * (to[1] - from[1]),
            ];
            // keep exact coordinates on axis-aligned segments
            if from[0] == to[0] {
                q[0] = from[0];
            }
            if from[1] == to[1] {
                q[1] = from[1];
            }
            q
        })
        .collect();
    out[0] = from;
    let last = out.len() - 1;
    out[last] = to;
    if reversed {
        out.reverse();
    }
    out
}

fn circle_point(geom: &ChannelGeometry, k: usize) -> Point {
    let n = geom.obstacle_segments;
    // counterclockwise, starting at the downstream point (angle 0)
    let theta = std::f64::consts::TAU * k as f64 / n as f64;
    let mut p = [
        geom.center[0] + geom.radius * theta.cos(),
        geom.center[1] + geom.radius * theta.sin(),
    ];
    if 2 * k == n {
        p[1] = geom.center[1];
    }
    if k == 0 {
        p[1] = geom.center[1];
    }
    p
}

struct Polyline {
    points: Vec<Point>,
}

/// Triangulates the region bounded by `outer` (closed polygon) minus the
/// obstacle polygon, with Delaunay refinement.
fn triangulate(
    geom: &ChannelGeometry,
    boundary: &[Polyline],
    obstacle: &[Point],
) -> Result<(Vec<Point>, Vec<[usize; 3]>), GenerateError> {
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    for line in boundary {
        let mut prev = None;
        for p in &line.points {
            let h = cdt
                .insert(Point2::new(p[0], p[1]))
                .map_err(|e| GenerateError::Triangulation(format!("{e:?}")))?;
            if let Some(q) = prev {
                if q != h {
                    cdt.add_constraint(q, h);
                }
            }
            prev = Some(h);
        }
    }
    let far_area = 3f64.sqrt() / 4.0 * geom.far_field_size * geom.far_field_size;
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(geom.min_angle_deg))
        .with_max_allowed_area(far_area)
        .keep_constraint_edges()
        .exclude_outer_faces(true)
        .with_max_additional_vertices(2_000_000);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(GenerateError::Triangulation(
            "refinement did not complete".into(),
        ));
    }

    let points: Vec<Point> = cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let (pa, pb, pc) = (points[a], points[b], points[c]);
        let centroid = [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0];
        if point_in_polygon(centroid, obstacle) || !inside_box(geom, centroid) {
            continue;
        }
        triangles.push([a, b, c]);
    }
    Ok((points, triangles))
}

fn inside_box(geom: &ChannelGeometry, p: Point) -> bool {
    p[0] > geom.x_min && p[0] < geom.x_max && p[1] > geom.y_min && p[1] < geom.y_max
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Drops unused vertices and classifies boundary edges by position.
fn assemble(
    geom: &ChannelGeometry,
    points: Vec<Point>,
    triangles: Vec<[usize; 3]>,
) -> Result<TriMesh, GenerateError> {
    let mut remap = vec![usize::MAX; points.len()];
    let mut vertices = Vec::new();
    let mut tris = Vec::with_capacity(triangles.len());
    for t in triangles {
        let mut out = [0; 3];
        for (k, &v) in t.iter().enumerate() {
            if remap[v] == usize::MAX {
                remap[v] = vertices.len();
                vertices.push(points[v]);
            }
            out[k] = remap[v];
        }
        tris.push(out);
    }

    let mut count: std::collections::HashMap<(usize, usize), usize> = Default::default();
    for t in &tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut marks = Vec::new();
    let mut boundary: Vec<(usize, usize)> = count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|(e, _)| e)
        .collect();
    boundary.sort_unstable();
    for (a, b) in boundary {
        let (pa, pb) = (vertices[a], vertices[b]);
        let marker = if pa[0] == geom.x_min && pb[0] == geom.x_min {
            BoundaryMarker::Inflow
        } else if pa[0] == geom.x_max && pb[0] == geom.x_max {
            BoundaryMarker::Outflow
        } else if (pa[1] == geom.y_min && pb[1] == geom.y_min)
            || (pa[1] == geom.y_max && pb[1] == geom.y_max)
        {
            BoundaryMarker::Wall
        } else {
            BoundaryMarker::Obstacle
        };
        marks.push(([a, b], marker));
    }
    Ok(TriMesh::new(vertices, tris, &marks)?)
}

/// Generates the channel `[x_min, x_max] x [y_min, y_max]` minus a disk.
pub fn channel_with_circle(geom: &ChannelGeometry) -> Result<TriMesh, GenerateError> {
    let [cx, cy] = geom.center;
    let clearance = (cx - geom.x_min)
        .min(geom.x_max - cx)
        .min(cy - geom.y_min)
        .min(geom.y_max - cy);
    if !(geom.radius > 0.0) || geom.radius >= clearance {
        return Err(GenerateError::Infeasible(format!(
            "radius {} does not fit into the box (clearance {clearance})",
            geom.radius
        )));
    }
    if geom.obstacle_segments < 3 {
        return Err(GenerateError::Infeasible(
            "obstacle needs at least 3 segments".into(),
        ));
    }
    if !(geom.far_field_size > 0.0 && geom.grading > 0.0) {
        return Err(GenerateError::Infeasible(
            "size parameters must be positive".into(),
        ));
    }
    let n = geom.obstacle_segments;
    let circle: Vec<Point> = (0..n).map(|k| circle_point(geom, k)).collect();
    let (x0, x1, y0, y1) = (geom.x_min, geom.x_max, geom.y_min, geom.y_max);

    if geom.is_symmetric() {
        // upper half, then mirror across y = cy
        let mut arc: Vec<Point> = circle[..=n / 2].to_vec();
        arc.reverse(); // from (cx - r) over the top to (cx + r)
        let boundary = vec![
            Polyline {
                points: split_segment(geom, [x0, cy], arc[0]),
            },
            Polyline {
                points: arc.clone(),
            },
            Polyline {
                points: split_segment(geom, *arc.last().unwrap(), [x1, cy]),
            },
            Polyline {
                points: split_segment(geom, [x1, cy], [x1, y1]),
            },
            Polyline {
                points: split_segment(geom, [x1, y1], [x0, y1]),
            },
            Polyline {
                points: split_segment(geom, [x0, y1], [x0, cy]),
            },
        ];
        let (points, triangles) = triangulate(geom, &boundary, &circle)?;
        let mut all = points.clone();
        let mut mirror = vec![usize::MAX; points.len()];
        for (i, p) in points.iter().enumerate() {
            if p[1] == cy {
                mirror[i] = i;
            } else {
                mirror[i] = all.len();
                all.push([p[0], 2.0 * cy - p[1]]);
            }
        }
        let mut tris = triangles.clone();
        tris.extend(
            triangles
                .iter()
                .map(|t| [mirror[t[0]], mirror[t[2]], mirror[t[1]]]),
        );
        assemble(geom, all, tris)
    } else {
        let mut closed = circle.clone();
        closed.push(circle[0]);
        let boundary = vec![
            Polyline { points: closed },
            Polyline {
                points: split_segment(geom, [x0, y0], [x1, y0]),
            },
            Polyline {
                points: split_segment(geom, [x1, y0], [x1, y1]),
            },
            Polyline {
                points: split_segment(geom, [x1, y1], [x0, y1]),
            },
            Polyline {
                points: split_segment(geom, [x0, y1], [x0, y0]),
            },
        ];
        let (points, triangles) = triangulate(geom, &boundary, &circle)?;
        assemble(geom, points, triangles)
    }
}

/// Markers of the four sides of an axis-aligned rectangle.
#[derive(Clone, Copy, Debug)]
pub struct SideMarkers {
    pub left: BoundaryMarker,
    pub right: BoundaryMarker,
    pub bottom: BoundaryMarker,
    pub top: BoundaryMarker,
}

impl SideMarkers {
    /// Inflow on the left, outflow on the right, walls elsewhere.
    pub fn channel() -> Self {
        SideMarkers {
            left: BoundaryMarker::Inflow,
            right: BoundaryMarker::Outflow,
            bottom: BoundaryMarker::Wall,
            top: BoundaryMarker::Wall,
        }
    }
}

/// Structured `nx x ny` grid of the rectangle, each cell cut along its
/// rising diagonal.
pub fn rectangle(
    min: Point,
    max: Point,
    nx: usize,
    ny: usize,
    sides: SideMarkers,
) -> Result<TriMesh, GenerateError> {
    if nx == 0 || ny == 0 || !(max[0] > min[0] && max[1] > min[1]) {
        return Err(GenerateError::Infeasible("empty rectangle".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([lerp(min[0], max[0], i, nx), lerp(min[1], max[1], j, ny)]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut marks = Vec::new();
    for i in 0..nx {
        marks.push(([id(i, 0), id(i + 1, 0)], sides.bottom));
        marks.push(([id(i, ny), id(i + 1, ny)], sides.top));
    }
    for j in 0..ny {
        marks.push(([id(0, j), id(0, j + 1)], sides.left));
        marks.push(([id(nx, j), id(nx, j + 1)], sides.right));
    }
    Ok(TriMesh::new(vertices, triangles, &marks)?)
}

/// Structured annulus around the origin: obstacle on the inner circle, wall
/// on the outer one. Rings are equally spaced in radius.
pub fn annulus(
    inner: f64,
    outer: f64,
    segments: usize,
    rings: usize,
) -> Result<TriMesh, GenerateError> {
    if !(inner > 0.0 && outer > inner) || segments < 3 || rings == 0 {
        return Err(GenerateError::Infeasible("invalid annulus".into()));
    }
    let id = |k: usize, j: usize| j * segments + k % segments;
    let mut vertices = Vec::with_capacity(segments * (rings + 1));
    for j in 0..=rings {
        let r = lerp(inner, outer, j, rings);
        for k in 0..segments {
            let (s, c) = (std::f64::consts::TAU * k as f64 / segments as f64).sin_cos();
            vertices.push([r * c, r * s]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * segments * rings);
    for j in 0..rings {
        for k in 0..segments {
            triangles.push([id(k, j), id(k + 1, j), id(k + 1, j + 1)]);
            triangles.push([id(k, j), id(k + 1, j + 1), id(k, j + 1)]);
        }
    }
    let mut marks = Vec::new();
    for k in 0..segments {
        marks.push(([id(k, 0), id(k + 1, 0)], BoundaryMarker::Obstacle));
        marks.push(([id(k, rings), id(k + 1, rings)], BoundaryMarker::Wall));
    }
    Ok(TriMesh::new(vertices, triangles, &marks)?)
}

fn lerp(a: f64, b: f64, i: usize, n: usize) -> f64 {
    if i == n {
        b
    } else {
        a + (b - a) * i as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_mesh_is_valid_and_symmetric() {
        let mesh = channel_with_circle(&ChannelGeometry::desk()).unwrap();
        let lp = mesh.obstacle_loop().unwrap();
        assert_eq!(lp.len(), 160);
        let nt = mesh.num_triangles();
        assert!((1500..4000).contains(&nt), "{nt} triangles");
        // every vertex has a mirror image
        let mut pts: Vec<(i64, i64)> = mesh
            .vertices()
            .iter()
            .map(|p| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64))
            .collect();
        pts.sort_unstable();
        for p in mesh.vertices() {
            let m = ((p[0] * 1e9).round() as i64, (-p[1] * 1e9).round() as i64);
            assert!(pts.binary_search(&m).is_ok());
        }
        let area = 36.0 - lp.shoelace_area();
        assert!((mesh.area() - area).abs() < 1e-10 * area);
        let q = mesh.element_quality();
        eprintln!("desk mesh: {nt} triangles, worst quality {}", q.worst);
        assert!(q.worst < 4.0);
    }

    #[test]
    fn paper_resolution_has_633_obstacle_edges() {
        let mesh = channel_with_circle(&ChannelGeometry::paper()).unwrap();
        let lp = mesh.obstacle_loop().unwrap();
        assert_eq!(lp.len(), 633);
        let triangles = mesh.num_triangles() as f64;
        assert!(
            (triangles / 10_150.0 - 1.0).abs() < 0.02,
            "{triangles} triangles"
        );
        assert!(mesh.element_quality().worst < 5.0);
        assert!((lp.perimeter() - std::f64::consts::PI).abs() < 1e-4);
    }

    #[test]
    fn oversized_obstacle_is_infeasible() {
        let geom = ChannelGeometry {
            radius: 3.0,
            ..ChannelGeometry::desk()
        };
        assert!(matches!(
            channel_with_circle(&geom),
            Err(GenerateError::Infeasible(_))
        ));
    }

    #[test]
    fn structured_rectangle_and_annulus() {
        let m = rectangle([0.0, -1.0], [1.0, 1.0], 4, 8, SideMarkers::channel()).unwrap();
        assert_eq!(m.num_triangles(), 64);
        assert!((m.area() - 2.0).abs() < 1e-14);
        assert!(!m.has_obstacle());
        let a = annulus(0.5, 2.0, 32, 6).unwrap();
        let lp = a.obstacle_loop().unwrap();
        assert_eq!(lp.len(), 32);
        // fluid lies outside the inner circle
        let p = lp.points()[0];
        let n = lp.normals()[0];
        assert!(p[0] * n[0] + p[1] * n[1] > 0.0);
    }
}
