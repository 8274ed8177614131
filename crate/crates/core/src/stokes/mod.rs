//! State equation, energy dissipation and the boundary density of its shape
//! derivative.
//!
//! Sign convention: `Δv + ∇p = −f` with unit viscosity. For a perturbation
//! field `V` of the obstacle boundary Γ, the dissipation changes by
//! `dJ[V] = −∫_Γ ⟨V, n_f⟩ Σᵢ (∂vᵢ/∂n)² ds` where `n_f` is the outer normal of
//! the flow domain (pointing into the obstacle). With the obstacle normal
//! `n = −n_f` used throughout this crate the sign flips:
//! `dJ[V] = +∫_Γ ⟨V, n⟩ Σᵢ (∂vᵢ/∂n)² ds`. [`objective_density`] returns the
//! nonnegative integrand; signs are applied in `shape_calculus`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::assemble::{assemble_stokes_with, channel_boundary};
use crate::fem::quadrature::triangle_rule;
use crate::fem::space::{p2_gradients, p2_values, ElementGeometry};
use crate::fem::{FemError, Field, LuSolver, SurfaceDensity};
use crate::mesh::{BoundaryEdge, BoundaryMarker, MeshError, ObstacleLoop, Point, TriMesh};

#[derive(Debug, Error)]
pub enum StokesError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Far-field velocity prescribed on inflow and outflow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase", deny_unknown_fields)]
pub enum InflowProfile {
    /// `(magnitude, 0)`.
    Uniform { magnitude: f64 },
    /// `(magnitude · 4 (y − y₀)(y₁ − y) / (y₁ − y₀)², 0)` across the channel height.
    Parabolic { magnitude: f64 },
}

impl Default for InflowProfile {
    fn default() -> Self {
        InflowProfile::Uniform { magnitude: 1.0 }
    }
}

impl InflowProfile {
    /// Velocity function for a mesh, using the vertical extent of its
    /// inflow/outflow vertices as channel height.
    pub fn velocity(&self, mesh: &TriMesh) -> impl Fn(Point) -> Point {
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for e in mesh.boundary_edges() {
            if matches!(e.marker, BoundaryMarker::Inflow | BoundaryMarker::Outflow) {
                for &v in &e.vertices {
                    y0 = y0.min(mesh.vertices()[v][1]);
                    y1 = y1.max(mesh.vertices()[v][1]);
                }
            }
        }
        let profile = *self;
        move |p: Point| match profile {
            InflowProfile::Uniform { magnitude } => [magnitude, 0.0],
            InflowProfile::Parabolic { magnitude } => {
                let h = y1 - y0;
                [magnitude * 4.0 * (p[1] - y0) * (y1 - p[1]) / (h * h), 0.0]
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct StokesSolution {
    mesh: TriMesh,
    velocity: Field,
    pressure: Field,
    dissipation: f64,
}

impl StokesSolution {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    /// P2 vector field `[v_x, v_y]`.
    pub fn velocity(&self) -> &Field {
        &self.velocity
    }

    /// P1 pressure with zero mean.
    pub fn pressure(&self) -> &Field {
        &self.pressure
    }

    /// Cached energy dissipation `J`.
    pub fn dissipation(&self) -> f64 {
        self.dissipation
    }

    /// Local P2 coefficients of both velocity components on triangle `t`.
    fn element_velocity(&self, t: usize) -> [[f64; 6]; 2] {
        let dofs = self.velocity.space().element_dofs(t);
        let mut c = [[0.0; 6]; 2];
        for k in 0..2 {
            let comp = self.velocity.component(k);
            for j in 0..6 {
                c[k][j] = comp[dofs[j]];
            }
        }
        c
    }

    /// Velocity gradient `G[i][j] = ∂vᵢ/∂x_j` in triangle `t` at barycentric `l`.
    pub fn velocity_gradient(&self, t: usize, l: [f64; 3]) -> [[f64; 2]; 2] {
        let geo = ElementGeometry::of(&self.mesh, t);
        let g = p2_gradients(l, &geo.grad_lambda);
        let c = self.element_velocity(t);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..6 {
                out[i][0] += c[i][j] * g[j][0];
                out[i][1] += c[i][j] * g[j][1];
            }
        }
        out
    }

    /// Velocity in triangle `t` at barycentric `l`.
    pub fn velocity_at(&self, t: usize, l: [f64; 3]) -> Point {
        let phi = p2_values(l);
        let c = self.element_velocity(t);
        let v = |k: usize| c[k].iter().zip(&phi).map(|(a, b)| a * b).sum();
        [v(0), v(1)]
    }

    /// Velocity at the mesh vertices.
    pub fn vertex_velocity(&self) -> Vec<Point> {
        let (x, y) = (self.velocity.component(0), self.velocity.component(1));
        (0..self.mesh.num_vertices())
            .map(|v| [x[v], y[v]])
            .collect()
    }

    /// `Σᵢ (∂vᵢ/∂n)²` from the gradient of triangle `t` at barycentric `l`.
    pub fn normal_derivative_squared(&self, t: usize, l: [f64; 3], n: Point) -> f64 {
        let g = self.velocity_gradient(t, l);
        (0..2)
            .map(|i| {
                let d = g[i][0] * n[0] + g[i][1] * n[1];
                d * d
            })
            .sum()
    }

    /// Density `Σᵢ (∂vᵢ/∂n)²` at the endpoints of a boundary edge, evaluated
    /// in its adjacent triangle; `n` is the given unit normal.
    pub fn edge_density(&self, edge: &BoundaryEdge, n: Point) -> [f64; 2] {
        let t = edge.triangle;
        let tri = self.mesh.triangles()[t];
        let at = |v: usize| {
            let mut l = [0.0; 3];
            l[tri
                .iter()
                .position(|&w| w == v)
                .expect("edge vertex in its triangle")] = 1.0;
            self.normal_derivative_squared(t, l, n)
        };
        [at(edge.vertices[0]), at(edge.vertices[1])]
    }

    /// `max_q |∫ q div v|` over the P1 hat functions `q`.
    pub fn incompressibility_residual(&self) -> f64 {
        let rule = triangle_rule(4).expect("supported degree");
        let mut r = vec![0.0; self.mesh.num_vertices()];
        for t in 0..self.mesh.num_triangles() {
            let geo = ElementGeometry::of(&self.mesh, t);
            let tri = self.mesh.triangles()[t];
            for (l, w) in rule.barycentric.iter().zip(&rule.weights) {
                let g = self.velocity_gradient(t, *l);
                let div = g[0][0] + g[1][1];
                for q in 0..3 {
                    r[tri[q]] += 2.0 * geo.area * w * l[q] * div;
                }
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖v − exact‖_{L²}` with a degree-6 rule.
    pub fn velocity_l2_error(&self, exact: impl Fn(Point) -> Point) -> f64 {
        let rule = triangle_rule(6).expect("supported degree");
        let mut s = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let geo = ElementGeometry::of(&self.mesh, t);
            for (l, w) in rule.barycentric.iter().zip(&rule.weights) {
                let v = self.velocity_at(t, *l);
                let e = exact(geo.map(*l));
                s += 2.0 * geo.area * w * ((v[0] - e[0]).powi(2) + (v[1] - e[1]).powi(2));
            }
        }
        s.sqrt()
    }

    /// `‖p − exact‖_{L²}`; `exact` must have zero mean.
    pub fn pressure_l2_error(&self, exact: impl Fn(Point) -> f64) -> f64 {
        let rule = triangle_rule(6).expect("supported degree");
        let p = self.pressure.values();
        let mut s = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let geo = ElementGeometry::of(&self.mesh, t);
            let tri = self.mesh.triangles()[t];
            for (l, w) in rule.barycentric.iter().zip(&rule.weights) {
                let ph = l[0] * p[tri[0]] + l[1] * p[tri[1]] + l[2] * p[tri[2]];
                s += 2.0 * geo.area * w * (ph - exact(geo.map(*l))).powi(2);
            }
        }
        s.sqrt()
    }

    /// `∫ p` over the flow domain.
    pub fn pressure_integral(&self) -> f64 {
        pressure_integral(&self.mesh, self.pressure.values())
    }
}

fn pressure_integral(mesh: &TriMesh, p: &[f64]) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| {
            let tri = mesh.triangles()[t];
            mesh.triangle_area(t) * (p[tri[0]] + p[tri[1]] + p[tri[2]]) / 3.0
        })
        .sum()
}

/// Channel problem: `inflow` on inflow/outflow, no-slip on walls and Γ, `f = 0`.
pub fn solve_stokes(
    mesh: &TriMesh,
    inflow: &dyn Fn(Point) -> Point,
) -> Result<StokesSolution, StokesError> {
    solve_stokes_with(mesh, &channel_boundary(inflow), None)
}

/// Stokes problem with velocity data on every boundary part and optional
/// body force.
pub fn solve_stokes_with(
    mesh: &TriMesh,
    boundary: &dyn Fn(BoundaryMarker, Point) -> Point,
    force: Option<&dyn Fn(Point) -> Point>,
) -> Result<StokesSolution, StokesError> {
    let sys = assemble_stokes_with(mesh, boundary, force)?;
    let x = LuSolver::new(&sys.system.matrix)?.solve(&sys.system.rhs)?;
    let off = sys.pressure_offset();
    let mut p = x[off..].to_vec();
    let mean = pressure_integral(mesh, &p) / mesh.area();
    p.iter_mut().for_each(|v| *v -= mean);
    let velocity = Field::new(sys.velocity, x[..off].to_vec())?;
    let pressure = Field::new(sys.pressure, p)?;
    let mut sol = StokesSolution {
        mesh: mesh.clone(),
        velocity,
        pressure,
        dissipation: 0.0,
    };
    sol.dissipation = dissipation(&sol);
    Ok(sol)
}

/// `J = ∫ Σᵢⱼ (∂vᵢ/∂x_j)² dx`, exact for P2 velocities.
pub fn dissipation(solution: &StokesSolution) -> f64 {
    let rule = triangle_rule(2).expect("supported degree");
    let mesh = &solution.mesh;
    let mut j = 0.0;
    for t in 0..mesh.num_triangles() {
        let area = mesh.triangle_area(t);
        for (l, w) in rule.barycentric.iter().zip(&rule.weights) {
            let g = solution.velocity_gradient(t, *l);
            let s = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1];
            j += 2.0 * area * w * s;
        }
    }
    j
}

/// Per-edge density `ρ = Σᵢ (∂vᵢ/∂n)²` on Γ from the fluid-side gradient at
/// the edge endpoints. With the obstacle normal `n` of [`ObstacleLoop`],
/// `dJ[V] = ∫_Γ ⟨n,V⟩ ρ ds`.
pub fn objective_density(
    solution: &StokesSolution,
    lp: &ObstacleLoop,
) -> Result<SurfaceDensity, StokesError> {
    let mesh = &solution.mesh;
    if !mesh.has_obstacle() || lp.len() != mesh.topology().obstacle_edges().len() {
        return Err(StokesError::Mesh(MeshError::NoObstacle));
    }
    let edges = mesh.boundary_edges();
    let values = (0..lp.len())
        .map(|i| solution.edge_density(&edges[lp.boundary_edge(i)], lp.normals()[i]))
        .collect();
    Ok(SurfaceDensity::new(values))
}

/// Exact derivative of the discrete dissipation with respect to the vertex
/// positions: entry `a` is `∂J_h/∂x_a` with the boundary data held fixed.
///
/// For a P1 vector field `W` with `D = ∇W`, the solution pair `(v, p)` gives
/// `dJ_h[W] = Σ_T ∫_T |G|² div W − 2 GᵀG : D + 2p (div v div W − tr(G D))`
/// where `G = ∇v`.
pub fn node_sensitivity(solution: &StokesSolution) -> Vec<Point> {
    let mesh = &solution.mesh;
    let rule = triangle_rule(2).expect("supported degree");
    let p = solution.pressure.values();
    let mut out = vec![[0.0; 2]; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        let tri = mesh.triangles()[t];
        for (l, w) in rule.barycentric.iter().zip(&rule.weights) {
            let wj = 2.0 * geo.area * w;
            let g = solution.velocity_gradient(t, *l);
            let ph = l[0] * p[tri[0]] + l[1] * p[tri[1]] + l[2] * p[tri[2]];
            let sq = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1];
            let div = g[0][0] + g[1][1];
            // GᵀG
            let mut gtg = [[0.0; 2]; 2];
            for k in 0..2 {
                for j in 0..2 {
                    gtg[k][j] = g[0][k] * g[0][j] + g[1][k] * g[1][j];
                }
            }
            for a in 0..3 {
                let d = geo.grad_lambda[a];
                for k in 0..2 {
                    let val = (sq + 2.0 * ph * div) * d[k]
                        - 2.0 * (gtg[k][0] * d[0] + gtg[k][1] * d[1])
                        - 2.0 * ph * (g[0][k] * d[0] + g[1][k] * d[1]);
                    out[tri[a]][k] += wj * val;
                }
            }
        }
    }
    out
}

/// Smooth Stokes solution on `[0,1]×[−1,1]` with body force, used for
/// convergence studies: `v = (eˣ cos y, −eˣ sin y)`, `p = sin x cos y − p̄`,
/// `f = −∇p`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ManufacturedChannel;

impl ManufacturedChannel {
    pub fn velocity(p: Point) -> Point {
        [p[0].exp() * p[1].cos(), -p[0].exp() * p[1].sin()]
    }

    pub fn pressure(p: Point) -> f64 {
        // mean of sin x cos y over the rectangle
        let mean = (1.0 - 1f64.cos()) * 2.0 * 1f64.sin() / 2.0;
        p[0].sin() * p[1].cos() - mean
    }

    pub fn force(p: Point) -> Point {
        [-p[0].cos() * p[1].cos(), p[0].sin() * p[1].sin()]
    }

    /// Velocity and pressure L² errors on the structured `n × 2n` mesh.
    pub fn errors(&self, n: usize) -> Result<(f64, f64), StokesError> {
        let mesh = crate::mesh::generate::rectangle(
            [0.0, -1.0],
            [1.0, 1.0],
            n,
            2 * n,
            crate::mesh::generate::SideMarkers::channel(),
        )
        .map_err(|e| StokesError::Fem(FemError::InvalidMesh(e.to_string())))?;
        let sol = solve_stokes_with(&mesh, &|_, p| Self::velocity(p), Some(&Self::force))?;
        Ok((
            sol.velocity_l2_error(Self::velocity),
            sol.pressure_l2_error(Self::pressure),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{channel_with_circle, rectangle, ChannelGeometry, SideMarkers};

    fn poiseuille(n: usize) -> StokesSolution {
        let m = rectangle([0.0, -1.0], [1.0, 1.0], n, 2 * n, SideMarkers::channel()).unwrap();
        solve_stokes(&m, &|p| [1.0 - p[1] * p[1], 0.0]).unwrap()
    }

    #[test]
    fn poiseuille_is_reproduced() {
        let s = poiseuille(3);
        assert!(s.velocity_l2_error(|p| [1.0 - p[1] * p[1], 0.0]) < 1e-12);
        assert!(s.pressure_l2_error(|p| 2.0 * p[0] - 1.0) < 1e-11);
        assert!((s.dissipation() - 8.0 / 3.0).abs() < 1e-12);
        assert!(s.pressure_integral().abs() < 1e-12);
        assert!(s.incompressibility_residual() < 1e-12);
    }

    #[test]
    fn wall_density_of_poiseuille_is_four() {
        let s = poiseuille(4);
        let m = s.mesh().clone();
        for e in m
            .boundary_edges()
            .iter()
            .filter(|e| e.marker == BoundaryMarker::Wall)
        {
            let y = m.vertices()[e.vertices[0]][1];
            let d = s.edge_density(e, [0.0, y.signum()]);
            assert!((d[0] - 4.0).abs() < 1e-10 && (d[1] - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_field_dissipation_and_normal_derivative() {
        let m = rectangle([0.0, 0.0], [2.0, 1.5], 3, 2, SideMarkers::channel()).unwrap();
        // ∇v = [[0, 2], [0, 0]] plus an affine offset: v = (1 + 2y, 3)
        let v = |p: Point| [1.0 + 2.0 * p[1], 3.0];
        let sol = solve_stokes_with(&m, &|_, p| v(p), None).unwrap();
        assert!((sol.dissipation() - 4.0 * 3.0).abs() < 1e-11);
        let l = [0.2, 0.3, 0.5];
        assert!(sol.normal_derivative_squared(0, l, [1.0, 0.0]).abs() < 1e-20);
        assert!((sol.normal_derivative_squared(0, l, [0.0, 1.0]) - 4.0).abs() < 1e-11);
        // zero data gives the zero solution
        let zero = solve_stokes_with(&m, &|_, _| [0.0, 0.0], None).unwrap();
        assert_eq!(zero.dissipation(), 0.0);
    }

    #[test]
    fn channel_flow_is_divergence_free_and_density_nonnegative() {
        let m = channel_with_circle(&ChannelGeometry {
            obstacle_segments: 40,
            far_field_size: 0.6,
            ..ChannelGeometry::desk()
        })
        .unwrap();
        let s = solve_stokes(&m, &InflowProfile::default().velocity(&m)).unwrap();
        assert!(s.dissipation() > 0.0);
        assert!(s.incompressibility_residual() < 1e-9);
        let lp = m.obstacle_loop().unwrap();
        let rho = objective_density(&s, &lp).unwrap();
        assert!(rho.min_value() >= 0.0);
        assert!(rho.max_abs() > 0.0);
    }

    #[test]
    fn node_sensitivity_matches_central_differences() {
        let m = channel_with_circle(&ChannelGeometry {
            obstacle_segments: 24,
            far_field_size: 0.8,
            ..ChannelGeometry::desk()
        })
        .unwrap();
        let inflow = InflowProfile::default();
        let j = |mesh: &TriMesh| {
            solve_stokes(mesh, &inflow.velocity(mesh))
                .unwrap()
                .dissipation()
        };
        let r = node_sensitivity(&solve_stokes(&m, &inflow.velocity(&m)).unwrap());
        let fields: [fn(Point) -> Point; 3] = [
            |p| [(3.0 * p[0]).sin(), (2.0 * p[1]).cos()],
            |p| [p[1] * p[1], p[0] * p[1]],
            |p| [(p[0] + p[1]).cos(), -(p[0] * p[1]).sin()],
        ];
        for f in fields {
            let w: Vec<Point> = (0..m.num_vertices())
                .map(|v| {
                    if m.is_outer_boundary_vertex(v) {
                        [0.0, 0.0]
                    } else {
                        f(m.vertices()[v])
                    }
                })
                .collect();
            let h = 1e-6;
            let moved = |t: f64| match m.apply_displacement(&w, t).unwrap() {
                crate::mesh::Retraction::Valid { mesh, .. } => mesh,
                crate::mesh::Retraction::Invalid { .. } => {
                    panic!("perturbation inverted a triangle")
                }
            };
            let fd = (j(&moved(h)) - j(&moved(-h))) / (2.0 * h);
            let exact: f64 = r
                .iter()
                .zip(&w)
                .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
                .sum();
            assert!(
                (exact - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                "{exact} vs {fd}"
            );
        }
    }

    #[test]
    fn parabolic_profile_peaks_mid_channel() {
        let m = rectangle([0.0, -2.0], [1.0, 2.0], 2, 4, SideMarkers::channel()).unwrap();
        let f = InflowProfile::Parabolic { magnitude: 1.5 }.velocity(&m);
        assert_eq!(f([0.0, 0.0]), [1.5, 0.0]);
        assert_eq!(f([0.0, 2.0])[0], 0.0);
    }

    #[test]
    fn taylor_hood_orders_on_smooth_solution() {
        let mfs = ManufacturedChannel::default();
        let errs: Vec<(f64, f64)> = [4, 8, 16].iter().map(|&n| mfs.errors(n).unwrap()).collect();
        for w in errs.windows(2) {
            assert!((w[0].0 / w[1].0).log2() >= 2.8, "{errs:?}");
            assert!((w[0].1 / w[1].1).log2() >= 1.8, "{errs:?}");
        }
    }
}
