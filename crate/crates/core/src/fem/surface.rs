//! Densities and P1 operators on the closed obstacle curve Γ.
//!
//! Loop nodes are the loop vertices `0..n`; edge `i` joins nodes `i` and
//! `i + 1 (mod n)`.

use crate::mesh::{ObstacleLoop, Point};

use super::sparse::{CsrMatrix, LuSolver, SparseSystem, TripletBuilder};
use super::FemError;

/// Piecewise linear, edgewise discontinuous scalar on Γ: two endpoint
/// values per loop edge.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceDensity {
    values: Vec<[f64; 2]>,
}

impl SurfaceDensity {
    pub fn new(values: Vec<[f64; 2]>) -> Self {
        SurfaceDensity { values }
    }

    pub fn zeros(edges: usize) -> Self {
        Self::constant(edges, 0.0)
    }

    pub fn constant(edges: usize, c: f64) -> Self {
        SurfaceDensity {
            values: vec![[c, c]; edges],
        }
    }

    /// Continuous density from loop-node values.
    pub fn from_nodal(nodal: &[f64]) -> Self {
        let n = nodal.len();
        SurfaceDensity {
            values: (0..n).map(|i| [nodal[i], nodal[(i + 1) % n]]).collect(),
        }
    }

    /// Samples `f` at the loop vertices.
    pub fn from_fn(lp: &ObstacleLoop, f: impl Fn(Point) -> f64) -> Self {
        let nodal: Vec<f64> = lp.points().iter().map(|&p| f(p)).collect();
        Self::from_nodal(&nodal)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn edge(&self, i: usize) -> [f64; 2] {
        self.values[i]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SurfaceDensity {
            values: self
                .values
                .iter()
                .map(|v| [factor * v[0], factor * v[1]])
                .collect(),
        }
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &SurfaceDensity) -> Self {
        assert_eq!(self.len(), other.len());
        SurfaceDensity {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| [a[0] + factor * b[0], a[1] + factor * b[1]])
                .collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, lp: &ObstacleLoop) -> Result<(), FemError> {
        if self.len() != lp.len() {
            return Err(FemError::Length {
                got: self.len(),
                expected: lp.len(),
            });
        }
        Ok(())
    }

    pub fn integral(&self, lp: &ObstacleLoop) -> f64 {
        self.values
            .iter()
            .zip(lp.lengths())
            .map(|(v, l)| 0.5 * l * (v[0] + v[1]))
            .sum()
    }

    pub fn l2_norm(&self, lp: &ObstacleLoop) -> f64 {
        self.values
            .iter()
            .zip(lp.lengths())
            .map(|(v, l)| l / 3.0 * (v[0] * v[0] + v[0] * v[1] + v[1] * v[1]))
            .sum::<f64>()
            .sqrt()
    }

    /// `∫_Γ γ β ds` for a continuous P1 `β` given by loop-node values.
    pub fn integrate_against(&self, lp: &ObstacleLoop, nodal: &[f64]) -> f64 {
        let n = lp.len();
        (0..n)
            .map(|i| {
                let [g0, g1] = self.values[i];
                let (b0, b1) = (nodal[i], nodal[(i + 1) % n]);
                lp.lengths()[i] / 6.0 * (2.0 * g0 * b0 + g0 * b1 + g1 * b0 + 2.0 * g1 * b1)
            })
            .sum()
    }

    /// `∫_Γ γ ⟨V, n⟩ ds` for a P1 vector field `V` given at the loop nodes,
    /// with the exterior edge normals of the obstacle.
    pub fn integrate_normal(&self, lp: &ObstacleLoop, field: &[Point]) -> f64 {
        let n = lp.len();
        (0..n)
            .map(|i| {
                let nrm = lp.normals()[i];
                let [g0, g1] = self.values[i];
                let v0 = field[i][0] * nrm[0] + field[i][1] * nrm[1];
                let j = (i + 1) % n;
                let v1 = field[j][0] * nrm[0] + field[j][1] * nrm[1];
                lp.lengths()[i] / 6.0 * (2.0 * g0 * v0 + g0 * v1 + g1 * v0 + 2.0 * g1 * v1)
            })
            .sum()
    }
}

/// Load vector `∫_Γ γ φ_i ds` over the loop nodes.
pub fn surface_load(density: &SurfaceDensity, lp: &ObstacleLoop) -> Result<Vec<f64>, FemError> {
    density.check(lp)?;
    let n = lp.len();
    let mut b = vec![0.0; n];
    for i in 0..n {
        let [g0, g1] = density.edge(i);
        let l = lp.lengths()[i];
        b[i] += l * (2.0 * g0 + g1) / 6.0;
        b[(i + 1) % n] += l * (g0 + 2.0 * g1) / 6.0;
    }
    Ok(b)
}

/// Load vector `∫_Γ γ n_c φ_v ds` over a P1 vector space on the whole mesh
/// (`[x components, y components]`, `num_vertices` per component).
pub fn normal_load(
    density: &SurfaceDensity,
    lp: &ObstacleLoop,
    num_vertices: usize,
) -> Result<Vec<f64>, FemError> {
    density.check(lp)?;
    let n = lp.len();
    let mut b = vec![0.0; 2 * num_vertices];
    for i in 0..n {
        let [g0, g1] = density.edge(i);
        let l = lp.lengths()[i];
        let nrm = lp.normals()[i];
        let (va, vb) = (lp.vertex(i), lp.vertex((i + 1) % n));
        let (wa, wb) = (l * (2.0 * g0 + g1) / 6.0, l * (g0 + 2.0 * g1) / 6.0);
        for c in 0..2 {
            b[c * num_vertices + va] += nrm[c] * wa;
            b[c * num_vertices + vb] += nrm[c] * wb;
        }
    }
    Ok(b)
}

fn loop_matrix(lp: &ObstacleLoop, element: impl Fn(f64) -> [[f64; 2]; 2]) -> CsrMatrix {
    let n = lp.len();
    let mut b = TripletBuilder::with_capacity(n, n, 4 * n);
    for i in 0..n {
        let e = element(lp.lengths()[i]);
        let idx = [i, (i + 1) % n];
        for r in 0..2 {
            for c in 0..2 {
                b.add(idx[r], idx[c], e[r][c]);
            }
        }
    }
    b.build()
}

/// 1D P1 mass matrix along the closed loop.
pub fn surface_mass(lp: &ObstacleLoop) -> CsrMatrix {
    loop_matrix(lp, |l| [[l / 3.0, l / 6.0], [l / 6.0, l / 3.0]])
}

/// 1D P1 stiffness matrix `∫ α′β′` along the closed loop (periodic).
pub fn surface_stiffness(lp: &ObstacleLoop) -> CsrMatrix {
    loop_matrix(lp, |l| [[1.0 / l, -1.0 / l], [-1.0 / l, 1.0 / l]])
}

/// `M + A K`, the discrete form of `∫_Γ αβ + A α′β′ ds`.
pub fn surface_helmholtz_matrix(lp: &ObstacleLoop, a: f64) -> Result<CsrMatrix, FemError> {
    if !(a > 0.0) {
        return Err(FemError::InvalidParameter(format!(
            "surface Helmholtz weight A must be positive, got {a}"
        )));
    }
    Ok(surface_mass(lp).add_scaled(&surface_stiffness(lp), a))
}

/// System `(M + A K) α = rhs` on the loop nodes.
pub fn assemble_surface_helmholtz(
    lp: &ObstacleLoop,
    a: f64,
    rhs: Vec<f64>,
) -> Result<SparseSystem, FemError> {
    SparseSystem::new(surface_helmholtz_matrix(lp, a)?, rhs, true)
}

/// L² projection of a discontinuous density onto continuous P1 on Γ.
pub fn l2_project(density: &SurfaceDensity, lp: &ObstacleLoop) -> Result<Vec<f64>, FemError> {
    let b = surface_load(density, lp)?;
    LuSolver::new(&surface_mass(lp))?.solve(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sparse::solve;
    use nalgebra::{DMatrix, DVector};

    fn regular(n: usize, r: f64) -> ObstacleLoop {
        // clockwise around the body
        let pts = (0..n)
            .map(|k| {
                let t = -std::f64::consts::TAU * k as f64 / n as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        ObstacleLoop::from_points(pts)
    }

    #[test]
    fn projection_is_identity_on_continuous_p1() {
        let lp = regular(7, 1.3);
        let nodal = [0.3, -1.0, 2.0, 0.0, 5.5, 1.0, -0.25];
        let p = l2_project(&SurfaceDensity::from_nodal(&nodal), &lp).unwrap();
        for (a, b) in p.iter().zip(&nodal) {
            assert!((a - b).abs() < 1e-13);
        }
        let c = l2_project(&SurfaceDensity::constant(7, -2.0), &lp).unwrap();
        assert!(c.iter().all(|v| (v + 2.0).abs() < 1e-13));
    }

    #[test]
    fn sawtooth_projection_matches_dense_solve() {
        let n = 6;
        let lp = regular(n, 1.0);
        // ramps of alternating sign, jumping at every node
        let saw = SurfaceDensity::new(
            (0..n)
                .map(|i| [if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0])
                .collect(),
        );
        let p = l2_project(&saw, &lp).unwrap();
        // independent dense mass matrix and load
        let h = lp.lengths()[0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for i in 0..n {
            let j = (i + 1) % n;
            m[(i, i)] += h / 3.0;
            m[(j, j)] += h / 3.0;
            m[(i, j)] += h / 6.0;
            m[(j, i)] += h / 6.0;
            let [g0, g1] = saw.edge(i);
            b[i] += h * (2.0 * g0 + g1) / 6.0;
            b[j] += h * (g0 + 2.0 * g1) / 6.0;
        }
        let oracle = m.lu().solve(&b).unwrap();
        let mean: f64 = p.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-14);
        assert!(p.iter().any(|v| v.abs() > 0.1));
        for i in 0..n {
            assert!(p[i].abs() < 1.0);
            assert!((p[i] - oracle[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn helmholtz_row_sums_and_constants() {
        let lp = regular(13, 0.7);
        let a = surface_helmholtz_matrix(&lp, 0.1).unwrap();
        let m = surface_mass(&lp);
        for i in 0..13 {
            let ra: f64 = a.row(i).1.iter().sum();
            let rm: f64 = m.row(i).1.iter().sum();
            assert!((ra - rm).abs() < 1e-12);
        }
        let rhs = surface_load(&SurfaceDensity::constant(13, 4.0), &lp).unwrap();
        let x = solve(&assemble_surface_helmholtz(&lp, 0.1, rhs).unwrap()).unwrap();
        assert!(x.iter().all(|v| (v - 4.0).abs() < 1e-12));
        assert!(surface_helmholtz_matrix(&lp, 0.0).is_err());
    }

    #[test]
    fn small_weight_approaches_projection() {
        let lp = regular(20, 1.0);
        let g = SurfaceDensity::new((0..20).map(|i| [i as f64, -(i as f64)]).collect());
        let proj = l2_project(&g, &lp).unwrap();
        let rhs = surface_load(&g, &lp).unwrap();
        let x = solve(&assemble_surface_helmholtz(&lp, 1e-12, rhs).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&proj) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn cosine_on_circle_is_damped_by_one_plus_a() {
        let a = 0.1;
        let lp = regular(512, 1.0);
        let g = SurfaceDensity::from_fn(&lp, |p| p[0]);
        let rhs = surface_load(&g, &lp).unwrap();
        let x = solve(&assemble_surface_helmholtz(&lp, a, rhs).unwrap()).unwrap();
        for (p, v) in lp.points().iter().zip(&x) {
            assert!((v - p[0] / (1.0 + a)).abs() < 1e-4);
        }
    }

    #[test]
    fn normal_integrals() {
        // unit square body, clockwise: (0,0) -> (0,1) -> (1,1) -> (1,0)
        let lp = ObstacleLoop::from_points(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        let one = SurfaceDensity::constant(4, 1.0);
        assert!((one.integral(&lp) - 4.0).abs() < 1e-15);
        // V = x: flux through the boundary equals the area
        let v: Vec<Point> = lp.points().to_vec();
        assert!((one.integrate_normal(&lp, &v) - 2.0).abs() < 1e-14);
        let b = normal_load(&one, &lp, 4).unwrap();
        let flat: f64 = (0..4).map(|k| b[k] * v[k][0] + b[4 + k] * v[k][1]).sum();
        assert!((flat - 2.0).abs() < 1e-14);
    }
}
