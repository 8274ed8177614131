//! Volume assembly: Taylor-Hood Stokes, P1 linear elasticity, P1 Poisson.

use crate::mesh::{BoundaryMarker, Point, TriMesh};

use super::quadrature::triangle_rule;
use super::space::{p2_gradients, p2_values, ElementGeometry, FunctionSpace};
use super::sparse::{CsrMatrix, SparseSystem, TripletBuilder};
use super::FemError;

const VOLUME_DEGREE: usize = 4;

/// Assembled Stokes saddle-point system.
///
/// Unknowns are ordered `[v_x, v_y, p]` with P2 velocity and P1 pressure.
/// The weak form of `Δv + ∇p = 0, div v = 0` is
/// `∫ ∇v:∇w + ∫ p div w = 0` and `∫ q div v = 0`, a symmetric matrix
/// `[[K, Bᵀ], [B, 0]]`.
#[derive(Clone, Debug)]
pub struct StokesSystem {
    pub system: SparseSystem,
    pub velocity: FunctionSpace,
    pub pressure: FunctionSpace,
    /// Pressure dof held at zero during the solve.
    pub pinned_pressure: usize,
    /// Divergence operator `B` (pressure rows, velocity columns), before elimination.
    pub divergence: CsrMatrix,
}

impl StokesSystem {
    pub fn pressure_offset(&self) -> usize {
        self.velocity.num_dofs()
    }
}

/// Velocity Dirichlet data of the channel problem: `inflow` on
/// inflow/outflow parts, zero on walls and the obstacle.
pub fn channel_boundary(
    inflow: &dyn Fn(Point) -> Point,
) -> impl Fn(BoundaryMarker, Point) -> Point + '_ {
    move |marker, p| match marker {
        BoundaryMarker::Inflow | BoundaryMarker::Outflow => inflow(p),
        BoundaryMarker::Wall | BoundaryMarker::Obstacle => [0.0, 0.0],
    }
}

/// Velocity Dirichlet values at every boundary dof of `space`. Vertices use
/// the dominant marker of the mesh (inflow/outflow over wall).
pub fn velocity_boundary_values(
    mesh: &TriMesh,
    space: &FunctionSpace,
    boundary: &dyn Fn(BoundaryMarker, Point) -> Point,
) -> Result<Vec<(usize, Point)>, FemError> {
    let pts = space.dof_points(mesh);
    let data = |marker: BoundaryMarker, p: Point| -> Result<Point, FemError> {
        let v = boundary(marker, p);
        if !(v[0].is_finite() && v[1].is_finite()) {
            return Err(FemError::InconsistentBoundaryData(format!(
                "non-finite boundary velocity at ({}, {})",
                p[0], p[1]
            )));
        }
        Ok(v)
    };
    let mut out = Vec::new();
    for v in 0..mesh.num_vertices() {
        if let Some(m) = mesh.vertex_marker(v) {
            out.push((v, data(m, pts[v])?));
        }
    }
    if space.degree() == 2 {
        for e in mesh.boundary_edges() {
            let d = space.edge_dof(e.edge);
            out.push((d, data(e.marker, pts[d])?));
        }
    }
    Ok(out)
}

/// Channel problem: `inflow` on inflow/outflow, no-slip elsewhere, `f = 0`.
pub fn assemble_stokes(
    mesh: &TriMesh,
    inflow: &dyn Fn(Point) -> Point,
) -> Result<StokesSystem, FemError> {
    assemble_stokes_with(mesh, &channel_boundary(inflow), None)
}

/// General Stokes system `Δv + ∇p = −f` with velocity data on every
/// boundary part.
pub fn assemble_stokes_with(
    mesh: &TriMesh,
    boundary: &dyn Fn(BoundaryMarker, Point) -> Point,
    force: Option<&dyn Fn(Point) -> Point>,
) -> Result<StokesSystem, FemError> {
    let vel = FunctionSpace::p2_vector(mesh);
    let pre = FunctionSpace::p1(mesh);
    let nv = vel.num_dofs();
    let n = nv + pre.num_dofs();
    let rule = triangle_rule(VOLUME_DEGREE)?;
    let force_rule = triangle_rule(6)?;

    let mut a = TripletBuilder::with_capacity(n, n, mesh.num_triangles() * (2 * 36 + 4 * 18));
    let mut b = TripletBuilder::with_capacity(pre.num_dofs(), nv, mesh.num_triangles() * 36);
    let mut rhs = vec![0.0; n];
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        if !(geo.area > 0.0) {
            return Err(FemError::InvalidMesh(format!(
                "triangle {t} is not positively oriented"
            )));
        }
        let dofs = vel.element_dofs(t);
        let tri = mesh.triangles()[t];
        let mut k = [[0.0; 6]; 6];
        let mut bx = [[0.0; 6]; 3];
        let mut by = [[0.0; 6]; 3];
        for (l, w) in rule.barycentric.iter().zip(&rule.weights) {
            let wj = 2.0 * geo.area * w;
            let g = p2_gradients(*l, &geo.grad_lambda);
            for i in 0..6 {
                for j in 0..6 {
                    k[i][j] += wj * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
            for q in 0..3 {
                for j in 0..6 {
                    bx[q][j] += wj * l[q] * g[j][0];
                    by[q][j] += wj * l[q] * g[j][1];
                }
            }
        }
        for c in 0..2 {
            for i in 0..6 {
                for j in 0..6 {
                    a.add(vel.index(c, dofs[i]), vel.index(c, dofs[j]), k[i][j]);
                }
            }
        }
        for q in 0..3 {
            let row = nv + tri[q];
            for j in 0..6 {
                let (cx, cy) = (vel.index(0, dofs[j]), vel.index(1, dofs[j]));
                a.add(row, cx, bx[q][j]);
                a.add(cx, row, bx[q][j]);
                a.add(row, cy, by[q][j]);
                a.add(cy, row, by[q][j]);
                b.add(tri[q], cx, bx[q][j]);
                b.add(tri[q], cy, by[q][j]);
            }
        }
        if let Some(f) = force {
            for (l, w) in force_rule.barycentric.iter().zip(&force_rule.weights) {
                let wj = 2.0 * geo.area * w;
                let fv = f(geo.map(*l));
                let phi = p2_values(*l);
                for j in 0..6 {
                    rhs[vel.index(0, dofs[j])] += wj * fv[0] * phi[j];
                    rhs[vel.index(1, dofs[j])] += wj * fv[1] * phi[j];
                }
            }
        }
    }

    let mut system = SparseSystem::new(a.build(), rhs, true)?;
    let mut dirichlet = Vec::new();
    for (d, v) in velocity_boundary_values(mesh, &vel, boundary)? {
        dirichlet.push((vel.index(0, d), v[0]));
        dirichlet.push((vel.index(1, d), v[1]));
    }
    let pinned = 0;
    dirichlet.push((nv + pinned, 0.0));
    system.apply_dirichlet(&dirichlet);
    Ok(StokesSystem {
        system,
        velocity: vel,
        pressure: pre,
        pinned_pressure: pinned,
        divergence: b.build(),
    })
}

/// P1 vector elasticity operator `∫ 2μ ε(U):ε(V) + λ div U div V` with
/// per-vertex `mu`, unknowns ordered `[u_x, u_y]`. No boundary conditions.
pub fn assemble_elasticity(mesh: &TriMesh, mu: &[f64], lambda: f64) -> Result<CsrMatrix, FemError> {
    let nv = mesh.num_vertices();
    if mu.len() != nv {
        return Err(FemError::Length {
            got: mu.len(),
            expected: nv,
        });
    }
    if let Some(v) = mu.iter().position(|&m| !(m > 0.0)) {
        return Err(FemError::NonPositiveMu {
            vertex: v,
            value: mu[v],
        });
    }
    let mut a = TripletBuilder::with_capacity(2 * nv, 2 * nv, 36 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        let tri = mesh.triangles()[t];
        let g = geo.grad_lambda;
        // μ is linear and the gradients constant, so ∫μ is exact
        let mu_int = geo.area * (mu[tri[0]] + mu[tri[1]] + mu[tri[2]]) / 3.0;
        let lam_int = geo.area * lambda;
        for i in 0..3 {
            for j in 0..3 {
                let gg = g[i][0] * g[j][0] + g[i][1] * g[j][1];
                for ca in 0..2 {
                    for cb in 0..2 {
                        let delta = if ca == cb { gg } else { 0.0 };
                        let v =
                            mu_int * (delta + g[i][cb] * g[j][ca]) + lam_int * g[i][ca] * g[j][cb];
                        a.add(ca * nv + tri[i], cb * nv + tri[j], v);
                    }
                }
            }
        }
    }
    Ok(a.build())
}

/// P1 stiffness matrix `∫ ∇u·∇v`.
pub fn p1_stiffness(mesh: &TriMesh) -> CsrMatrix {
    let nv = mesh.num_vertices();
    let mut a = TripletBuilder::with_capacity(nv, nv, 9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        let tri = mesh.triangles()[t];
        let g = geo.grad_lambda;
        for i in 0..3 {
            for j in 0..3 {
                a.add(
                    tri[i],
                    tri[j],
                    geo.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]),
                );
            }
        }
    }
    a.build()
}

/// P1 mass matrix `∫ u v`.
pub fn p1_mass(mesh: &TriMesh) -> CsrMatrix {
    let nv = mesh.num_vertices();
    let mut a = TripletBuilder::with_capacity(nv, nv, 9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let area = mesh.triangle_area(t);
        let tri = mesh.triangles()[t];
        for i in 0..3 {
            for j in 0..3 {
                a.add(tri[i], tri[j], area * if i == j { 2.0 } else { 1.0 } / 12.0);
            }
        }
    }
    a.build()
}

/// Laplace problem with boundary data per marker. Every marker present in
/// the mesh must be listed; `None` leaves that part with the natural
/// (zero-flux) condition. At vertices shared by several parts the marker
/// precedence of the mesh decides, falling back to any listed value.
pub fn assemble_poisson(
    mesh: &TriMesh,
    boundary: &[(BoundaryMarker, Option<f64>)],
) -> Result<SparseSystem, FemError> {
    let entry = |m: BoundaryMarker| boundary.iter().rev().find(|(k, _)| *k == m).map(|p| p.1);
    for e in mesh.boundary_edges() {
        if entry(e.marker).is_none() {
            return Err(FemError::MissingMarker(e.marker));
        }
    }
    let nv = mesh.num_vertices();
    let mut value: Vec<Option<f64>> = (0..nv)
        .map(|v| mesh.vertex_marker(v).and_then(|m| entry(m).flatten()))
        .collect();
    // a vertex whose dominant part is natural still takes Dirichlet data
    // from a neighbouring part
    for e in mesh.boundary_edges() {
        if let Some(Some(g)) = entry(e.marker) {
            for &v in &e.vertices {
                value[v].get_or_insert(g);
            }
        }
    }
    let mut sys = SparseSystem::new(p1_stiffness(mesh), vec![0.0; nv], true)?;
    let bc: Vec<(usize, f64)> = value
        .iter()
        .enumerate()
        .filter_map(|(v, g)| g.map(|g| (v, g)))
        .collect();
    sys.apply_dirichlet(&bc);
    Ok(sys)
}

/// Vertex-wise P1 interpolation of `f`.
pub fn interpolate_p1(mesh: &TriMesh, f: impl Fn(Point) -> f64) -> Vec<f64> {
    mesh.vertices().iter().map(|&p| f(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sparse::solve;
    use crate::mesh::generate::{
        annulus, channel_with_circle, rectangle, ChannelGeometry, SideMarkers,
    };

    #[test]
    fn stokes_matrix_is_symmetric_and_has_no_zero_rows() {
        let m = rectangle([0.0, -1.0], [1.0, 1.0], 3, 4, SideMarkers::channel()).unwrap();
        let s = assemble_stokes(&m, &|p| [1.0 - p[1] * p[1], 0.0]).unwrap();
        assert_eq!(s.system.matrix.max_asymmetry(), 0.0);
        assert!(s.system.zero_rows().is_empty());
    }

    #[test]
    fn all_wall_square_gives_zero_solution() {
        // the two-triangle square has fewer free velocity than pressure dofs
        let walls = SideMarkers {
            left: BoundaryMarker::Wall,
            right: BoundaryMarker::Wall,
            ..SideMarkers::channel()
        };
        let m = rectangle([0.0, 0.0], [1.0, 1.0], 4, 4, walls).unwrap();
        let s = assemble_stokes(&m, &|_| [1.0, 1.0]).unwrap();
        let x = solve(&s.system).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-14));
    }

    fn rigid_energy(a: &CsrMatrix, mesh: &TriMesh, f: impl Fn(Point) -> Point) -> f64 {
        let nv = mesh.num_vertices();
        let mut u = vec![0.0; 2 * nv];
        for (v, p) in mesh.vertices().iter().enumerate() {
            let d = f(*p);
            u[v] = d[0];
            u[nv + v] = d[1];
        }
        a.bilinear(&u, &u)
    }

    #[test]
    fn elasticity_kills_rigid_motions_and_is_linear_in_mu() {
        let m = channel_with_circle(&ChannelGeometry {
            obstacle_segments: 24,
            far_field_size: 0.8,
            ..ChannelGeometry::desk()
        })
        .unwrap();
        let mu: Vec<f64> = m.vertices().iter().map(|p| 1.0 + p[0] * p[0]).collect();
        let a = assemble_elasticity(&m, &mu, 0.7).unwrap();
        assert!(a.max_asymmetry() <= 1e-12);
        assert!(rigid_energy(&a, &m, |_| [0.3, -1.2]).abs() < 1e-11);
        assert!(rigid_energy(&a, &m, |p| [-p[1], p[0]]).abs() < 1e-11);
        let a0 = assemble_elasticity(&m, &mu, 0.0).unwrap();
        let mu2: Vec<f64> = mu.iter().map(|v| 2.0 * v).collect();
        let a2 = assemble_elasticity(&m, &mu2, 0.0).unwrap();
        for (i, j, v) in a0.triplets() {
            assert_eq!(a2.get(i, j), 2.0 * v);
        }
        assert!(matches!(
            assemble_elasticity(&m, &vec![0.0; m.num_vertices()], 0.0),
            Err(FemError::NonPositiveMu { .. })
        ));
    }

    #[test]
    fn poisson_constant_and_linear() {
        let m = annulus(0.5, 2.0, 24, 5).unwrap();
        let sys = assemble_poisson(
            &m,
            &[
                (BoundaryMarker::Obstacle, Some(3.0)),
                (BoundaryMarker::Wall, Some(3.0)),
            ],
        )
        .unwrap();
        assert!(solve(&sys).unwrap().iter().all(|v| (v - 3.0).abs() < 1e-12));

        let strip = rectangle([0.0, 0.0], [4.0, 1.0], 12, 3, SideMarkers::channel()).unwrap();
        let sys = assemble_poisson(
            &strip,
            &[
                (BoundaryMarker::Inflow, Some(0.0)),
                (BoundaryMarker::Outflow, Some(1.0)),
                (BoundaryMarker::Wall, None),
            ],
        )
        .unwrap();
        let u = solve(&sys).unwrap();
        for (p, v) in strip.vertices().iter().zip(&u) {
            assert!((v - p[0] / 4.0).abs() < 1e-10);
        }
        let missing = assemble_poisson(&strip, &[(BoundaryMarker::Inflow, Some(0.0))]);
        assert!(matches!(missing, Err(FemError::MissingMarker(_))));
    }
}
