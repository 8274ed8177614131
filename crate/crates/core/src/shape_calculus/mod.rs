//! Geometric constraints, their shape derivatives and the augmented
//! Lagrangian.
//!
//! All boundary integrals run over the obstacle loop with the normal `n`
//! pointing out of the obstacle into the fluid. A shape derivative is
//! represented by a density `γ` with `dF[V] = ∫_Γ γ ⟨V, n⟩ ds`.

use serde::{Deserialize, Serialize};

use crate::fem::SurfaceDensity;
use crate::mesh::{ObstacleLoop, Point};

/// Constraint values `(bc_x − bc₀_x, bc_y − bc₀_y, vol − vol₀)`.
pub type ConstraintVector = [f64; 3];

pub fn norm(c: &ConstraintVector) -> f64 {
    c.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Volume and barycenter of the initial shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricReference {
    pub vol0: f64,
    pub bc0: Point,
}

impl GeometricReference {
    pub fn from_loop(lp: &ObstacleLoop) -> Self {
        let vol0 = volume(lp);
        GeometricReference {
            vol0,
            bc0: barycenter_with_volume(lp, vol0),
        }
    }
}

/// Multipliers and penalty of the augmented Lagrangian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlParameters {
    pub lambda: [f64; 3],
    pub mu: f64,
}

/// `vol(Ω) = ½ ∫_Γ ⟨s, n⟩ ds`, exact on the polygon.
pub fn volume(lp: &ObstacleLoop) -> f64 {
    (0..lp.len())
        .map(|i| {
            let [a, b] = lp.edge_points(i);
            let n = lp.normals()[i];
            // ⟨s, n⟩ is linear along the edge: midpoint rule is exact
            0.5 * lp.lengths()[i] * (0.5 * (a[0] + b[0]) * n[0] + 0.5 * (a[1] + b[1]) * n[1])
        })
        .sum()
}

/// `bcᵢ(Ω) = 1/(2 vol) ∫_Γ sᵢ² nᵢ ds`, exact on the polygon.
pub fn barycenter(lp: &ObstacleLoop) -> Point {
    barycenter_with_volume(lp, volume(lp))
}

fn barycenter_with_volume(lp: &ObstacleLoop, vol: f64) -> Point {
    let mut m = [0.0; 2];
    for i in 0..lp.len() {
        let [a, b] = lp.edge_points(i);
        let n = lp.normals()[i];
        let l = lp.lengths()[i];
        for k in 0..2 {
            m[k] += l * (a[k] * a[k] + a[k] * b[k] + b[k] * b[k]) / 3.0 * n[k];
        }
    }
    [m[0] / (2.0 * vol), m[1] / (2.0 * vol)]
}

pub fn constraints(lp: &ObstacleLoop, reference: &GeometricReference) -> ConstraintVector {
    let vol = volume(lp);
    let bc = barycenter_with_volume(lp, vol);
    [
        bc[0] - reference.bc0[0],
        bc[1] - reference.bc0[1],
        vol - reference.vol0,
    ]
}

/// Densities `δᵢ` with `dcᵢ[V] = ∫_Γ δᵢ ⟨V, n⟩ ds`:
/// `δ₁ = (x − bc_x)/vol`, `δ₂ = (y − bc_y)/vol`, `δ₃ = 1`.
pub fn constraint_densities(lp: &ObstacleLoop, vol: f64, bc: Point) -> [SurfaceDensity; 3] {
    [
        SurfaceDensity::from_fn(lp, |p| (p[0] - bc[0]) / vol),
        SurfaceDensity::from_fn(lp, |p| (p[1] - bc[1]) / vol),
        SurfaceDensity::constant(lp.len(), 1.0),
    ]
}

/// `L_A = J + λᵀc + (μ/2) cᵀc`.
pub fn al_value(j: f64, c: &ConstraintVector, params: &AlParameters) -> f64 {
    let lc: f64 = params.lambda.iter().zip(c).map(|(l, v)| l * v).sum();
    j + lc + 0.5 * params.mu * c.iter().map(|v| v * v).sum::<f64>()
}

/// Density of `dL_A`: `γ = ρ + Σᵢ (λᵢ + μ cᵢ) δᵢ`, where `ρ` is the
/// objective density (see [`crate::stokes::objective_density`] for the sign).
pub fn al_density(
    objective: &SurfaceDensity,
    densities: &[SurfaceDensity; 3],
    c: &ConstraintVector,
    params: &AlParameters,
) -> SurfaceDensity {
    let mut g = objective.clone();
    for i in 0..3 {
        g = g.axpy(params.lambda[i] + params.mu * c[i], &densities[i]);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn polygon(n: usize, r: f64, center: Point) -> ObstacleLoop {
        // clockwise around the body
        ObstacleLoop::from_points(
            (0..n)
                .map(|k| {
                    let t = -std::f64::consts::TAU * k as f64 / n as f64;
                    [center[0] + r * t.cos(), center[1] + r * t.sin()]
                })
                .collect(),
        )
    }

    fn square() -> ObstacleLoop {
        ObstacleLoop::from_points(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
    }

    #[test]
    fn unit_square() {
        let lp = square();
        assert!((volume(&lp) - 1.0).abs() < 1e-15);
        let bc = barycenter(&lp);
        assert!((bc[0] - 0.5).abs() < 1e-15 && (bc[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_centroid() {
        let lp = ObstacleLoop::from_points(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let bc = barycenter(&lp);
        assert!((bc[0] - 1.0 / 3.0).abs() < 1e-15 && (bc[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn regular_633_gon() {
        let lp = polygon(633, 0.5, [0.0, 0.0]);
        let exact = 633.0 / 2.0 * 0.25 * (std::f64::consts::TAU / 633.0).sin();
        assert!((volume(&lp) / exact - 1.0).abs() < 1e-12);
        assert!((volume(&lp) - 0.785_385_266_394_230_6).abs() < 1e-12);
        assert!((volume(&lp) - std::f64::consts::FRAC_PI_4).abs() < 2e-5);
    }

    #[test]
    fn translation_and_scaling() {
        let base = polygon(40, 0.5, [0.0, 0.0]);
        let reference = GeometricReference::from_loop(&base);
        let t = 0.013;
        let moved = polygon(40, 0.5, [t, 0.0]);
        let c = constraints(&moved, &reference);
        assert!((c[0] - t).abs() < 1e-14 && c[1].abs() < 1e-14 && c[2].abs() < 1e-14);
        let k = 1.1;
        let scaled = polygon(40, 0.5 * k, [0.0, 0.0]);
        let c = constraints(&scaled, &reference);
        assert!(c[0].abs() < 1e-14 && c[1].abs() < 1e-14);
        assert!((c[2] - (k * k - 1.0) * reference.vol0).abs() < 1e-13);
        assert_eq!(constraints(&base, &reference), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn first_density_on_circle() {
        let lp = polygon(64, 0.8, [0.0, 0.0]);
        let vol = volume(&lp);
        let d = constraint_densities(&lp, vol, [0.0, 0.0]);
        for (i, p) in lp.points().iter().enumerate() {
            let theta = p[1].atan2(p[0]);
            assert!((d[0].edge(i)[0] - 0.8 * theta.cos() / vol).abs() < 1e-14);
        }
        assert!(d[2].values().iter().all(|v| *v == [1.0, 1.0]));
    }

    #[test]
    fn volume_derivative_matches_inflation() {
        let lp = polygon(50, 0.5, [0.1, -0.2]);
        let vol = volume(&lp);
        let d = constraint_densities(&lp, vol, barycenter(&lp));
        let h = 1e-5;
        let normals = lp.vertex_normals();
        let inflated = ObstacleLoop::from_points(
            lp.points()
                .iter()
                .zip(&normals)
                .map(|(p, n)| [p[0] + h * n[0], p[1] + h * n[1]])
                .collect(),
        );
        let fd = (volume(&inflated) - vol) / h;
        let exact = d[2].integrate_normal(&lp, &normals);
        assert!((fd / exact - 1.0).abs() < 1e-3);
        // and ≈ perimeter
        assert!((exact / lp.perimeter() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn barycenter_derivative_matches_fd() {
        let lp = ObstacleLoop::from_points(vec![
            [0.0, 0.0],
            [-0.2, 1.0],
            [0.7, 1.4],
            [1.5, 0.9],
            [1.1, -0.3],
        ]);
        let v: Vec<Point> = lp
            .points()
            .iter()
            .map(|p| [0.3 * p[1] + 0.1, -0.2 * p[0] * p[0]])
            .collect();
        let vol = volume(&lp);
        let bc = barycenter(&lp);
        let d = constraint_densities(&lp, vol, bc);
        let h = 1e-6;
        let moved = |s: f64| {
            ObstacleLoop::from_points(
                lp.points()
                    .iter()
                    .zip(&v)
                    .map(|(p, w)| [p[0] + s * w[0], p[1] + s * w[1]])
                    .collect(),
            )
        };
        let (bp, bm) = (barycenter(&moved(h)), barycenter(&moved(-h)));
        for k in 0..2 {
            let fd = (bp[k] - bm[k]) / (2.0 * h);
            let exact = d[k].integrate_normal(&lp, &v);
            assert!(
                (fd - exact).abs() < 1e-8 * (1.0 + exact.abs()),
                "{k}: {fd} vs {exact}"
            );
        }
    }

    #[test]
    fn augmented_lagrangian_value() {
        let p = AlParameters {
            lambda: [0.0, 0.0, 2.0],
            mu: 100.0,
        };
        assert_eq!(al_value(1.0, &[0.0, 0.0, 1.0], &p), 53.0);
        assert_eq!(al_value(1.5, &[0.0; 3], &p), 1.5);
        let zero = AlParameters {
            lambda: [0.0; 3],
            mu: 0.0,
        };
        assert_eq!(al_value(1.5, &[0.3, 0.1, -2.0], &zero), 1.5);
    }

    #[test]
    fn density_examples() {
        let lp = square();
        let d = constraint_densities(&lp, 1.0, [0.5, 0.5]);
        let rho = SurfaceDensity::zeros(4);
        let g = al_density(
            &rho,
            &d,
            &[0.0; 3],
            &AlParameters {
                lambda: [0.0; 3],
                mu: 10.0,
            },
        );
        assert_eq!(g.max_abs(), 0.0);
        let g = al_density(
            &rho,
            &d,
            &[0.0; 3],
            &AlParameters {
                lambda: [0.0, 0.0, 1.0],
                mu: 0.0,
            },
        );
        assert!(g.values().iter().all(|v| *v == [1.0, 1.0]));
    }

    proptest! {
        #[test]
        fn density_is_affine_in_multipliers(
            l1 in prop::array::uniform3(-5.0f64..5.0),
            l2 in prop::array::uniform3(-5.0f64..5.0),
            c in prop::array::uniform3(-0.1f64..0.1),
            mu in 0.0f64..200.0,
        ) {
            let lp = polygon(12, 0.5, [0.2, 0.1]);
            let d = constraint_densities(&lp, volume(&lp), barycenter(&lp));
            let rho = SurfaceDensity::from_fn(&lp, |p| p[0] * p[0] + 0.5);
            let g = |l: [f64; 3]| al_density(&rho, &d, &c, &AlParameters { lambda: l, mu });
            let sum = [l1[0] + l2[0], l1[1] + l2[1], l1[2] + l2[2]];
            let lhs = g(sum);
            let rhs = g(l1).axpy(1.0, &g(l2)).axpy(-1.0, &g([0.0; 3]));
            for (a, b) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
            }
        }

        #[test]
        fn boundary_integrals_match_polygon_formulas(
            radii in prop::collection::vec(0.3f64..1.5, 5..40),
            cx in -2.0f64..2.0, cy in -2.0f64..2.0,
        ) {
            let n = radii.len();
            let lp = ObstacleLoop::from_points(
                radii.iter().enumerate().map(|(k, r)| {
                    let t = -std::f64::consts::TAU * k as f64 / n as f64;
                    [cx + r * t.cos(), cy + r * t.sin()]
                }).collect(),
            );
            let v = volume(&lp);
            prop_assert!((v / lp.shoelace_area() - 1.0).abs() < 1e-12);
            let bc = barycenter(&lp);
            let oracle = lp.polygon_centroid();
            let scale = 1.0 + cx.abs() + cy.abs();
            prop_assert!((bc[0] - oracle[0]).abs() < 1e-12 * scale);
            prop_assert!((bc[1] - oracle[1]).abs() < 1e-12 * scale);
        }
    }
}
