//! Riesz representatives of shape derivatives under the Steklov-Poincaré
//! metric gˢ and the Laplace-Beltrami (Sobolev) metric g¹.
//!
//! Both metrics start from a density `γ` with `dL[V] = ∫_Γ γ ⟨V, n⟩ ds`.
//!
//! * gˢ: solve the elasticity problem `a(U, V) = ∫_Γ γ ⟨n, V⟩ ds` for all `V`
//!   vanishing on the outer boundary; `U` is both the gradient and the mesh
//!   motion, and `g(U, W) = a(U, W)`.
//! * g¹: project `γ` onto continuous P1 on Γ, solve `(M + A K) α = M γ̄`,
//!   and extend `α n` into the domain by elasticity with Dirichlet data on
//!   Γ. `g(α, β) = αᵀ (M + A K) β`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::sparse::dot;
use crate::fem::{
    assemble_elasticity, assemble_poisson, l2_project, normal_load, solve,
    surface_helmholtz_matrix, surface_mass, CsrMatrix, FemError, LuSolver, SparseSystem,
    SurfaceDensity,
};
use crate::mesh::{BoundaryMarker, MeshError, ObstacleLoop, Point, TriMesh};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("tangent vectors of different metrics cannot be paired")]
    VariantMismatch,
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    LaplaceBeltrami,
    SteklovPoincare,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKind,
    /// Weight of the tangential derivative term of g¹.
    pub a: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// First Lamé parameter. Takes precedence over `young_modulus`/`poisson_ratio`.
    pub lambda_elas: Option<f64>,
    pub young_modulus: Option<f64>,
    pub poisson_ratio: Option<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            kind: MetricKind::SteklovPoincare,
            a: 0.1,
            mu_min: 1.0,
            mu_max: 500.0,
            lambda_elas: None,
            young_modulus: None,
            poisson_ratio: None,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.a > 0.0) {
            return Err(MetricError::InvalidConfig(format!(
                "A must be positive, got {}",
                self.a
            )));
        }
        if !(self.mu_min > 0.0 && self.mu_min <= self.mu_max) {
            return Err(MetricError::InvalidConfig(format!(
                "need 0 < mu_min <= mu_max, got [{}, {}]",
                self.mu_min, self.mu_max
            )));
        }
        self.lambda()?;
        Ok(())
    }

    /// Resolved `λ_elas`: direct value, else from `E, ν`, else 0.
    pub fn lambda(&self) -> Result<f64, MetricError> {
        if let Some(l) = self.lambda_elas {
            return Ok(l);
        }
        match (self.young_modulus, self.poisson_ratio) {
            (Some(e), Some(nu)) => Ok(lame_from_young(e, nu)?.0),
            (None, None) => Ok(0.0),
            _ => Err(MetricError::InvalidConfig(
                "young_modulus and poisson_ratio must be given together".into(),
            )),
        }
    }
}

/// `(λ, μ)` from Young's modulus and Poisson's ratio.
pub fn lame_from_young(e: f64, nu: f64) -> Result<(f64, f64), MetricError> {
    if !(e > 0.0 && nu > -1.0 && nu < 0.5) {
        return Err(MetricError::InvalidConfig(format!(
            "invalid E = {e}, nu = {nu}"
        )));
    }
    Ok((
        nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        e / (2.0 * (1.0 + nu)),
    ))
}

/// Nodal `μ_elas` and constant `λ_elas`.
#[derive(Clone, Debug, PartialEq)]
pub struct LameField {
    pub mu: Vec<f64>,
    pub lambda: f64,
}

/// Harmonic `μ` with `μ_max` on Γ and `μ_min` on the outer boundary.
pub fn compute_mu_field(
    mesh: &TriMesh,
    mu_min: f64,
    mu_max: f64,
    lambda: f64,
) -> Result<LameField, MetricError> {
    if !(mu_min > 0.0 && mu_min <= mu_max) {
        return Err(MetricError::InvalidConfig(format!(
            "need 0 < mu_min <= mu_max, got [{mu_min}, {mu_max}]"
        )));
    }
    let sys = assemble_poisson(
        mesh,
        &[
            (BoundaryMarker::Obstacle, Some(mu_max)),
            (BoundaryMarker::Inflow, Some(mu_min)),
            (BoundaryMarker::Outflow, Some(mu_min)),
            (BoundaryMarker::Wall, Some(mu_min)),
        ],
    )?;
    Ok(LameField {
        mu: solve(&sys)?,
        lambda,
    })
}

/// Element of the tangent space at one iterate.
///
/// Coefficient vectors are P1 vector fields ordered `[x components, y
/// components]` over the mesh vertices; `alpha` lives on the obstacle loop
/// nodes.
#[derive(Clone, Debug, PartialEq)]
pub enum TangentVector {
    SteklovPoincare {
        displacement: Vec<f64>,
    },
    LaplaceBeltrami {
        alpha: Vec<f64>,
        extension: Vec<f64>,
    },
}

impl TangentVector {
    pub fn kind(&self) -> MetricKind {
        match self {
            TangentVector::SteklovPoincare { .. } => MetricKind::SteklovPoincare,
            TangentVector::LaplaceBeltrami { .. } => MetricKind::LaplaceBeltrami,
        }
    }

    /// Volume displacement used to move the mesh.
    pub fn displacement(&self) -> &[f64] {
        match self {
            TangentVector::SteklovPoincare { displacement } => displacement,
            TangentVector::LaplaceBeltrami { extension, .. } => extension,
        }
    }

    pub fn vertex_displacement(&self) -> Vec<Point> {
        split(self.displacement())
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.combine(s, None)
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &TangentVector) -> Result<Self, MetricError> {
        if self.kind() != other.kind() {
            return Err(MetricError::VariantMismatch);
        }
        Ok(self.combine(1.0, Some((s, other))))
    }

    fn combine(&self, a: f64, other: Option<(f64, &TangentVector)>) -> Self {
        let lin = |x: &[f64], y: Option<(f64, &[f64])>| -> Vec<f64> {
            match y {
                Some((s, y)) => x.iter().zip(y).map(|(u, v)| a * u + s * v).collect(),
                None => x.iter().map(|u| a * u).collect(),
            }
        };
        match (self, other) {
            (TangentVector::SteklovPoincare { displacement }, o) => {
                TangentVector::SteklovPoincare {
                    displacement: lin(displacement, o.map(|(s, w)| (s, w.displacement()))),
                }
            }
            (TangentVector::LaplaceBeltrami { alpha, extension }, o) => {
                let oa = o.and_then(|(s, w)| match w {
                    TangentVector::LaplaceBeltrami { alpha, .. } => Some((s, alpha.as_slice())),
                    _ => None,
                });
                TangentVector::LaplaceBeltrami {
                    alpha: lin(alpha, oa),
                    extension: lin(extension, o.map(|(s, w)| (s, w.displacement()))),
                }
            }
        }
    }
}

fn split(v: &[f64]) -> Vec<Point> {
    let n = v.len() / 2;
    (0..n).map(|i| [v[i], v[n + i]]).collect()
}

fn outer_dofs(mesh: &TriMesh) -> Vec<usize> {
    let nv = mesh.num_vertices();
    (0..nv)
        .filter(|&v| mesh.is_outer_boundary_vertex(v))
        .flat_map(|v| [v, nv + v])
        .collect()
}

struct LaplaceBeltramiParts {
    helmholtz: CsrMatrix,
    helmholtz_solver: LuSolver,
    mass: CsrMatrix,
    vertex_normals: Vec<Point>,
}

/// Operators of one iterate, factorized once and reused for Riesz solves,
/// inner products and extensions.
pub struct MetricContext {
    kind: MetricKind,
    mesh: TriMesh,
    lp: ObstacleLoop,
    elasticity: CsrMatrix,
    outer: Vec<usize>,
    solver: Option<LuSolver>,
    /// Elasticity with the outer boundary and Γ held fixed.
    extension_solver: LuSolver,
    lb: Option<LaplaceBeltramiParts>,
}

impl MetricContext {
    pub fn new(
        mesh: &TriMesh,
        lame: &LameField,
        config: &MetricConfig,
    ) -> Result<Self, MetricError> {
        config.validate()?;
        let lp = mesh.obstacle_loop()?;
        let elasticity = assemble_elasticity(mesh, &lame.mu, lame.lambda)?;
        let outer = outer_dofs(mesh);
        let nv = mesh.num_vertices();
        let mut fixed: Vec<(usize, f64)> = outer.iter().map(|&d| (d, 0.0)).collect();
        for &v in lp.vertices() {
            fixed.push((v, 0.0));
            fixed.push((nv + v, 0.0));
        }
        let mut sys = SparseSystem::new(elasticity.clone(), vec![0.0; 2 * nv], true)?;
        sys.apply_dirichlet(&fixed);
        let extension_solver = LuSolver::new(&sys.matrix)?;
        let (solver, lb) = match config.kind {
            MetricKind::SteklovPoincare => {
                let mut sys = SparseSystem::new(elasticity.clone(), vec![0.0; 2 * nv], true)?;
                sys.apply_dirichlet(&outer.iter().map(|&d| (d, 0.0)).collect::<Vec<_>>());
                (Some(LuSolver::new(&sys.matrix)?), None)
            }
            MetricKind::LaplaceBeltrami => {
                let helmholtz = surface_helmholtz_matrix(&lp, config.a)?;
                let parts = LaplaceBeltramiParts {
                    helmholtz_solver: LuSolver::new(&helmholtz)?,
                    helmholtz,
                    mass: surface_mass(&lp),
                    vertex_normals: lp.vertex_normals(),
                };
                (None, Some(parts))
            }
        };
        Ok(MetricContext {
            kind: config.kind,
            mesh: mesh.clone(),
            lp,
            elasticity,
            outer,
            solver,
            extension_solver,
            lb,
        })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn obstacle_loop(&self) -> &ObstacleLoop {
        &self.lp
    }

    /// Unconstrained elasticity operator of this iterate.
    pub fn elasticity(&self) -> &CsrMatrix {
        &self.elasticity
    }

    /// Riesz representative of `γ`, the metric gradient.
    pub fn riesz(&self, gamma: &SurfaceDensity) -> Result<TangentVector, MetricError> {
        match self.kind {
            MetricKind::SteklovPoincare => {
                let mut b = normal_load(gamma, &self.lp, self.mesh.num_vertices())?;
                for &d in &self.outer {
                    b[d] = 0.0;
                }
                let displacement = self.solver.as_ref().expect("gS solver").solve(&b)?;
                Ok(TangentVector::SteklovPoincare { displacement })
            }
            MetricKind::LaplaceBeltrami => {
                let lb = self.lb.as_ref().expect("g1 parts");
                let projected = l2_project(gamma, &self.lp)?;
                let rhs = lb.mass.mul_vec(&projected);
                let alpha = lb.helmholtz_solver.solve(&rhs)?;
                let extension = self.extend(&alpha)?;
                Ok(TangentVector::LaplaceBeltrami { alpha, extension })
            }
        }
    }

    /// Riesz representative of a covector `b` on the vertex displacements,
    /// supported on Γ (entries elsewhere are ignored). For g¹ the covector
    /// acts on the extension of `β n` with the vertex normals.
    pub fn riesz_covector(&self, b: &[f64]) -> Result<TangentVector, MetricError> {
        let nv = self.mesh.num_vertices();
        if b.len() != 2 * nv {
            return Err(FemError::Length {
                got: b.len(),
                expected: 2 * nv,
            }
            .into());
        }
        match self.kind {
            MetricKind::SteklovPoincare => {
                let mut load = vec![0.0; 2 * nv];
                for &v in self.lp.vertices() {
                    load[v] = b[v];
                    load[nv + v] = b[nv + v];
                }
                let displacement = self.solver.as_ref().expect("gS solver").solve(&load)?;
                Ok(TangentVector::SteklovPoincare { displacement })
            }
            MetricKind::LaplaceBeltrami => {
                let lb = self.lb.as_ref().expect("g1 parts");
                let rhs: Vec<f64> = self
                    .lp
                    .vertices()
                    .iter()
                    .zip(&lb.vertex_normals)
                    .map(|(&v, n)| b[v] * n[0] + b[nv + v] * n[1])
                    .collect();
                let alpha = lb.helmholtz_solver.solve(&rhs)?;
                let extension = self.extend(&alpha)?;
                Ok(TangentVector::LaplaceBeltrami { alpha, extension })
            }
        }
    }

    /// Restricts a covector `r` on all vertex displacements to Γ through the
    /// elastic extension: the result `b` satisfies `b·U = r·E(U|_Γ)` where
    /// `E` extends Γ data elastically with the outer boundary fixed.
    pub fn fold_to_boundary(&self, r: &[Point]) -> Result<Vec<f64>, MetricError> {
        let nv = self.mesh.num_vertices();
        if r.len() != nv {
            return Err(FemError::Length {
                got: r.len(),
                expected: nv,
            }
            .into());
        }
        let mut interior = vec![0.0; 2 * nv];
        for (v, x) in r.iter().enumerate() {
            interior[v] = x[0];
            interior[nv + v] = x[1];
        }
        for &d in &self.outer {
            interior[d] = 0.0;
        }
        for &v in self.lp.vertices() {
            interior[v] = 0.0;
            interior[nv + v] = 0.0;
        }
        let z = self.extension_solver.solve(&interior)?;
        let az = self.elasticity.mul_vec(&z);
        let mut b = vec![0.0; 2 * nv];
        for &v in self.lp.vertices() {
            b[v] = r[v][0] - az[v];
            b[nv + v] = r[v][1] - az[nv + v];
        }
        Ok(b)
    }

    /// Elastic extension of the normal field `α n` (g¹ only).
    pub fn extend(&self, alpha: &[f64]) -> Result<Vec<f64>, MetricError> {
        let lb = self.lb.as_ref().ok_or(MetricError::VariantMismatch)?;
        if alpha.len() != self.lp.len() {
            return Err(FemError::Length {
                got: alpha.len(),
                expected: self.lp.len(),
            }
            .into());
        }
        let nv = self.mesh.num_vertices();
        let mut g = vec![0.0; 2 * nv];
        for (i, &v) in self.lp.vertices().iter().enumerate() {
            let n = lb.vertex_normals[i];
            g[v] = alpha[i] * n[0];
            g[nv + v] = alpha[i] * n[1];
        }
        // symmetric elimination: move the boundary data to the right-hand side
        let lift = self.elasticity.mul_vec(&g);
        let mut rhs: Vec<f64> = lift.iter().map(|v| -v).collect();
        for &d in &self.outer {
            rhs[d] = 0.0;
        }
        for &v in self.lp.vertices() {
            rhs[v] = g[v];
            rhs[nv + v] = g[nv + v];
        }
        Ok(self.extension_solver.solve(&rhs)?)
    }

    /// Re-derives the mesh motion of `q` on this iterate: for g¹ the
    /// extension is recomputed from `α`, for gˢ `q` is returned unchanged.
    pub fn realize(&self, q: &TangentVector) -> Result<TangentVector, MetricError> {
        match q {
            TangentVector::SteklovPoincare { .. } => Ok(q.clone()),
            TangentVector::LaplaceBeltrami { alpha, .. } => Ok(TangentVector::LaplaceBeltrami {
                alpha: alpha.clone(),
                extension: self.extend(alpha)?,
            }),
        }
    }

    pub fn inner(&self, u: &TangentVector, w: &TangentVector) -> Result<f64, MetricError> {
        match (u, w) {
            (
                TangentVector::SteklovPoincare { displacement: a },
                TangentVector::SteklovPoincare { displacement: b },
            ) if self.kind == MetricKind::SteklovPoincare => Ok(self.elasticity.bilinear(a, b)),
            (
                TangentVector::LaplaceBeltrami { alpha: a, .. },
                TangentVector::LaplaceBeltrami { alpha: b, .. },
            ) if self.kind == MetricKind::LaplaceBeltrami => {
                Ok(self.lb.as_ref().expect("g1 parts").helmholtz.bilinear(a, b))
            }
            _ => Err(MetricError::VariantMismatch),
        }
    }

    pub fn norm(&self, u: &TangentVector) -> Result<f64, MetricError> {
        Ok(self.inner(u, u)?.max(0.0).sqrt())
    }

    /// `∫_Γ γ ⟨w, n⟩ ds`: the trace of the displacement for gˢ, the normal
    /// amplitude `β` for g¹ (whose tangent vectors are `β n`).
    pub fn pairing(&self, gamma: &SurfaceDensity, w: &TangentVector) -> Result<f64, MetricError> {
        match w {
            TangentVector::SteklovPoincare { displacement } => {
                let b = normal_load(gamma, &self.lp, self.mesh.num_vertices())?;
                Ok(dot(&b, displacement))
            }
            TangentVector::LaplaceBeltrami { alpha, .. } => {
                Ok(gamma.integrate_against(&self.lp, alpha))
            }
        }
    }

    /// Displacement restricted to the loop vertices.
    pub fn boundary_trace(&self, displacement: &[f64]) -> Vec<Point> {
        let nv = self.mesh.num_vertices();
        self.lp
            .vertices()
            .iter()
            .map(|&v| [displacement[v], displacement[nv + v]])
            .collect()
    }
}

/// `‖U‖_{L²(Γ)}` of a P1 vector field given at the loop vertices.
pub fn boundary_l2_norm(lp: &ObstacleLoop, trace: &[Point]) -> f64 {
    let n = lp.len();
    (0..n)
        .map(|i| {
            let (a, b) = (trace[i], trace[(i + 1) % n]);
            lp.lengths()[i] / 3.0
                * (a[0] * a[0]
                    + a[1] * a[1]
                    + a[0] * b[0]
                    + a[1] * b[1]
                    + b[0] * b[0]
                    + b[1] * b[1])
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖U_t‖_{L²(Γ)}` of the tangential part relative to the vertex normals.
pub fn tangential_l2_norm(lp: &ObstacleLoop, trace: &[Point]) -> f64 {
    let normals = lp.vertex_normals();
    let tangential: Vec<Point> = trace
        .iter()
        .zip(&normals)
        .map(|(u, n)| {
            let un = u[0] * n[0] + u[1] * n[1];
            [u[0] - un * n[0], u[1] - un * n[1]]
        })
        .collect();
    boundary_l2_norm(lp, &tangential)
}

/// gˢ gradient of `γ` on `mesh`.
pub fn riesz_steklov_poincare(
    mesh: &TriMesh,
    gamma: &SurfaceDensity,
    lame: &LameField,
) -> Result<TangentVector, MetricError> {
    let config = MetricConfig {
        kind: MetricKind::SteklovPoincare,
        lambda_elas: Some(lame.lambda),
        ..MetricConfig::default()
    };
    MetricContext::new(mesh, lame, &config)?.riesz(gamma)
}

/// g¹ gradient of `γ` on `mesh`.
pub fn riesz_laplace_beltrami(
    mesh: &TriMesh,
    gamma: &SurfaceDensity,
    config: &MetricConfig,
    lame: &LameField,
) -> Result<TangentVector, MetricError> {
    let config = MetricConfig {
        kind: MetricKind::LaplaceBeltrami,
        ..*config
    };
    MetricContext::new(mesh, lame, &config)?.riesz(gamma)
}

/// Inner product of two tangent vectors on `mesh`.
pub fn inner_product(
    u: &TangentVector,
    w: &TangentVector,
    context: &MetricContext,
) -> Result<f64, MetricError> {
    context.inner(u, w)
}
