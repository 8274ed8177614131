use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Problem;
use crate::fem::{normal_load, SurfaceDensity};
use crate::mesh::{MeshError, ObstacleLoop, Point, Retraction, TriMesh};
use crate::metrics::{
    boundary_l2_norm, compute_mu_field, tangential_l2_norm, LameField, MetricConfig, MetricContext,
    MetricError, TangentVector,
};
use crate::shape_calculus::{
    al_density, barycenter, constraint_densities, constraints, volume, AlParameters,
    ConstraintVector, GeometricReference,
};
use crate::stokes::{
    node_sensitivity, objective_density, solve_stokes, InflowProfile, StokesError, StokesSolution,
};

#[derive(Debug, Error)]
pub enum ShapeProblemError {
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("expected 3 multipliers, got {0}")]
    Multipliers(usize),
}

/// How the derivative of `J` enters the gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeDerivative {
    /// Boundary integral `∫_Γ ρ ⟨V, n⟩` with `ρ = Σᵢ (∂vᵢ/∂n)²`.
    Hadamard,
    /// Derivative of the discrete `J_h` along the elastic mesh motion
    /// generated by boundary displacements, restricted to the vertex-normal
    /// components on Γ.
    #[default]
    Discrete,
}

/// Energy dissipation of Stokes flow around the obstacle with barycenter and
/// volume fixed to their initial values.
pub struct ShapeProblem {
    inflow: InflowProfile,
    reference: GeometricReference,
    lame: LameField,
    metric: MetricConfig,
    derivative: ShapeDerivative,
}

pub struct ShapeEvaluation {
    pub solution: StokesSolution,
    pub obstacle: ObstacleLoop,
    pub j: f64,
    pub c: ConstraintVector,
}

impl ShapeProblem {
    /// Captures the geometric reference and the `μ_elas` field from `initial`.
    pub fn new(
        initial: &TriMesh,
        inflow: InflowProfile,
        metric: MetricConfig,
    ) -> Result<Self, ShapeProblemError> {
        metric.validate()?;
        let lame = compute_mu_field(initial, metric.mu_min, metric.mu_max, metric.lambda()?)?;
        let reference = GeometricReference::from_loop(&initial.obstacle_loop()?);
        Ok(ShapeProblem {
            inflow,
            reference,
            lame,
            metric,
            derivative: ShapeDerivative::default(),
        })
    }

    /// Same problem with another metric and the same reference and `μ` field.
    pub fn with_metric(&self, metric: MetricConfig) -> Result<Self, ShapeProblemError> {
        metric.validate()?;
        Ok(ShapeProblem {
            inflow: self.inflow,
            reference: self.reference,
            lame: LameField {
                mu: self.lame.mu.clone(),
                lambda: metric.lambda()?,
            },
            metric,
            derivative: self.derivative,
        })
    }

    pub fn with_derivative(mut self, derivative: ShapeDerivative) -> Self {
        self.derivative = derivative;
        self
    }

    pub fn derivative(&self) -> ShapeDerivative {
        self.derivative
    }

    pub fn reference(&self) -> &GeometricReference {
        &self.reference
    }

    pub fn lame(&self) -> &LameField {
        &self.lame
    }

    pub fn metric_config(&self) -> &MetricConfig {
        &self.metric
    }

    pub fn inflow(&self) -> InflowProfile {
        self.inflow
    }

    /// Shape derivative density of `L_A` at an evaluated iterate.
    pub fn density(
        &self,
        e: &ShapeEvaluation,
        params: &AlParameters,
    ) -> Result<SurfaceDensity, ShapeProblemError> {
        let rho = objective_density(&e.solution, &e.obstacle)?;
        let vol = volume(&e.obstacle);
        let bc = barycenter(&e.obstacle);
        let densities = constraint_densities(&e.obstacle, vol, bc);
        Ok(al_density(&rho, &densities, &e.c, params))
    }

    fn vertex_step(mesh: &TriMesh, q: &TangentVector) -> Vec<Point> {
        let mut d = q.vertex_displacement();
        for (v, p) in d.iter_mut().enumerate() {
            if mesh.is_outer_boundary_vertex(v) {
                *p = [0.0, 0.0];
            }
        }
        d
    }

    fn trace(mesh: &TriMesh, lp: &ObstacleLoop, q: &TangentVector, t: f64) -> Vec<Point> {
        let d = q.displacement();
        let nv = mesh.num_vertices();
        lp.vertices()
            .iter()
            .map(|&v| [t * d[v], t * d[nv + v]])
            .collect()
    }
}

impl Problem for ShapeProblem {
    type Point = TriMesh;
    type Tangent = TangentVector;
    type Evaluation = ShapeEvaluation;
    type Metric = MetricContext;
    type Error = ShapeProblemError;

    fn evaluate(&self, mesh: &TriMesh) -> Result<ShapeEvaluation, ShapeProblemError> {
        let solution = solve_stokes(mesh, &self.inflow.velocity(mesh))?;
        let obstacle = mesh.obstacle_loop()?;
        let c = constraints(&obstacle, &self.reference);
        Ok(ShapeEvaluation {
            j: solution.dissipation(),
            solution,
            obstacle,
            c,
        })
    }

    fn objective(&self, e: &ShapeEvaluation) -> f64 {
        e.j
    }

    fn constraints(&self, e: &ShapeEvaluation) -> Vec<f64> {
        e.c.to_vec()
    }

    fn metric(&self, mesh: &TriMesh) -> Result<MetricContext, ShapeProblemError> {
        Ok(MetricContext::new(mesh, &self.lame, &self.metric)?)
    }

    fn gradient(
        &self,
        metric: &MetricContext,
        e: &ShapeEvaluation,
        lambda: &[f64],
        mu: f64,
    ) -> Result<TangentVector, ShapeProblemError> {
        let lambda: [f64; 3] = lambda
            .try_into()
            .map_err(|_| ShapeProblemError::Multipliers(lambda.len()))?;
        let params = AlParameters { lambda, mu };
        match self.derivative {
            ShapeDerivative::Hadamard => Ok(metric.riesz(&self.density(e, &params)?)?),
            ShapeDerivative::Discrete => {
                let mut b = metric.fold_to_boundary(&node_sensitivity(&e.solution))?;
                let nv = e.solution.mesh().num_vertices();
                // tangential node motion only redistributes the discretization
                for (&v, n) in e
                    .obstacle
                    .vertices()
                    .iter()
                    .zip(e.obstacle.vertex_normals())
                {
                    let bn = b[v] * n[0] + b[nv + v] * n[1];
                    b[v] = bn * n[0];
                    b[nv + v] = bn * n[1];
                }
                let zero = SurfaceDensity::zeros(e.obstacle.len());
                let densities =
                    constraint_densities(&e.obstacle, volume(&e.obstacle), barycenter(&e.obstacle));
                let delta = al_density(&zero, &densities, &e.c, &params);
                for (x, y) in b
                    .iter_mut()
                    .zip(normal_load(&delta, &e.obstacle, nv).map_err(MetricError::from)?)
                {
                    *x += y;
                }
                Ok(metric.riesz_covector(&b)?)
            }
        }
    }

    fn inner(&self, metric: &MetricContext, u: &TangentVector, w: &TangentVector) -> f64 {
        metric.inner(u, w).expect("tangent vectors of one metric")
    }

    fn combine(&self, a: f64, u: &TangentVector, b: f64, w: &TangentVector) -> TangentVector {
        u.scaled(a)
            .axpy(b, w)
            .expect("tangent vectors of one metric")
    }

    fn realize(
        &self,
        metric: &MetricContext,
        q: TangentVector,
    ) -> Result<TangentVector, ShapeProblemError> {
        Ok(metric.realize(&q)?)
    }

    fn retract(
        &self,
        mesh: &TriMesh,
        q: &TangentVector,
        t: f64,
    ) -> Result<Option<TriMesh>, ShapeProblemError> {
        match mesh.apply_displacement(&Self::vertex_step(mesh, q), t)? {
            Retraction::Valid { mesh, .. } => Ok(Some(mesh)),
            Retraction::Invalid { .. } => Ok(None),
        }
    }

    fn step_norm(&self, mesh: &TriMesh, q: &TangentVector, t: f64) -> f64 {
        match mesh.obstacle_loop() {
            Ok(lp) => boundary_l2_norm(&lp, &Self::trace(mesh, &lp, q, t)),
            Err(_) => f64::NAN,
        }
    }

    fn quality(&self, mesh: &TriMesh) -> f64 {
        mesh.element_quality().worst
    }

    fn tangential_norm(&self, mesh: &TriMesh, q: &TangentVector, t: f64) -> f64 {
        match mesh.obstacle_loop() {
            Ok(lp) => tangential_l2_norm(&lp, &Self::trace(mesh, &lp, q, t)),
            Err(_) => f64::NAN,
        }
    }
}
