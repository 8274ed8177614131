//! Symmetric triangle rules (Dunavant) and Gauss-Legendre edge rules.
//!
//! The reference triangle is `(0,0), (1,0), (0,1)` with area 1/2; the
//! reference edge is `[0, 1]`.

use super::FemError;

pub const MAX_DEGREE: usize = 6;

#[derive(Clone, Debug)]
pub struct TriangleRule {
    /// Barycentric coordinates `(l0, l1, l2)`; the reference point is `(l1, l2)`.
    pub barycentric: Vec<[f64; 3]>,
    /// Weights summing to 1/2.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.barycentric.iter().map(|l| [l[1], l[2]])
    }
}

#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    /// Weights summing to 1.
    pub weights: Vec<f64>,
}

/// Rule pair exact up to `degree` on both reference shapes.
pub fn quadrature(degree: usize) -> Result<(TriangleRule, EdgeRule), FemError> {
    Ok((triangle_rule(degree)?, edge_rule(degree)?))
}

struct Orbit {
    weight: f64,
    kind: OrbitKind,
}

enum OrbitKind {
    Centroid,
    /// `(a, a, 1 - 2a)` and its 3 permutations.
    Two(f64),
    /// `(a, b, 1 - a - b)` and its 6 permutations.
    Three(f64, f64),
}

use OrbitKind::*;

fn orbits(degree: usize) -> Vec<Orbit> {
    let o = |weight, kind| Orbit { weight, kind };
    match degree {
        0 | 1 => vec![o(1.0, Centroid)],
        2 => vec![o(1.0 / 3.0, Two(1.0 / 6.0))],
        // the 4th-order rule serves degree 3 as well and has positive weights
        3 | 4 => vec![
            o(0.223_381_589_678_011, Two(0.445_948_490_915_965)),
            o(0.109_951_743_655_322, Two(0.091_576_213_509_771)),
        ],
        5 => vec![
            o(0.225, Centroid),
            o(0.132_394_152_788_506, Two(0.470_142_064_105_115)),
            o(0.125_939_180_544_827, Two(0.101_286_507_323_456)),
        ],
        _ => vec![
            o(0.116_786_275_726_379, Two(0.249_286_745_170_910)),
            o(0.050_844_906_370_207, Two(0.063_089_014_491_502)),
            o(
                0.082_851_075_618_374,
                Three(0.053_145_049_844_817, 0.310_352_451_033_784),
            ),
        ],
    }
}

pub fn triangle_rule(degree: usize) -> Result<TriangleRule, FemError> {
    if degree > MAX_DEGREE {
        return Err(FemError::UnsupportedDegree(degree));
    }
    let mut barycentric = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits(degree) {
        let pts: Vec<[f64; 3]> = match orbit.kind {
            Centroid => vec![[1.0 / 3.0; 3]],
            Two(a) => {
                let c = 1.0 - 2.0 * a;
                vec![[c, a, a], [a, c, a], [a, a, c]]
            }
            Three(a, b) => {
                let c = 1.0 - a - b;
                vec![
                    [a, b, c],
                    [a, c, b],
                    [b, a, c],
                    [b, c, a],
                    [c, a, b],
                    [c, b, a],
                ]
            }
        };
        for p in pts {
            barycentric.push(p);
            weights.push(0.5 * orbit.weight);
        }
    }
    Ok(TriangleRule {
        barycentric,
        weights,
    })
}

pub fn edge_rule(degree: usize) -> Result<EdgeRule, FemError> {
    if degree > MAX_DEGREE {
        return Err(FemError::UnsupportedDegree(degree));
    }
    // Gauss-Legendre nodes/weights on [-1, 1]
    let (x, w): (Vec<f64>, Vec<f64>) = match degree / 2 + 1 {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = 0.6f64.sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        _ => {
            let s = (6.0 / 5.0f64).sqrt();
            let inner = ((3.0 - 2.0 * s) / 7.0).sqrt();
            let outer = ((3.0 + 2.0 * s) / 7.0).sqrt();
            let wi = (18.0 + 30f64.sqrt()) / 36.0;
            let wo = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-outer, -inner, inner, outer], vec![wo, wi, wi, wo])
        }
    };
    Ok(EdgeRule {
        points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|v| 0.5 * v).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // closed form of the monomial moments of the reference triangle
    fn moment(i: u32, j: u32) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    #[test]
    fn centroid_rule() {
        let r = triangle_rule(1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weights[0], 0.5);
        let p: Vec<_> = r.points().collect();
        assert!((p[0][0] - 1.0 / 3.0).abs() < 1e-16 && (p[0][1] - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn x2y_with_degree_four() {
        let r = triangle_rule(4).unwrap();
        let s: f64 = r
            .points()
            .zip(&r.weights)
            .map(|(p, w)| w * p[0] * p[0] * p[1])
            .sum();
        assert!((s - 1.0 / 60.0).abs() < 1e-14);
    }

    #[test]
    fn all_triangle_rules_exact() {
        for deg in 0..=MAX_DEGREE {
            let r = triangle_rule(deg).unwrap();
            let total: f64 = r.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-14);
            for i in 0..=deg as u32 {
                for j in 0..=(deg as u32 - i) {
                    let s: f64 = r
                        .points()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(i as i32) * p[1].powi(j as i32))
                        .sum();
                    assert!(
                        (s - moment(i, j)).abs() < 1e-14,
                        "degree {deg}, x^{i} y^{j}: {s}"
                    );
                }
            }
        }
    }

    #[test]
    fn edge_rules_exact() {
        let r = edge_rule(3).unwrap();
        let s: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(x, w)| w * x.powi(3))
            .sum();
        assert!((s - 0.25).abs() < 1e-15);
        for deg in 0..=MAX_DEGREE {
            let r = edge_rule(deg).unwrap();
            for k in 0..=deg as i32 {
                let s: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(k))
                    .sum();
                assert!((s - 1.0 / (k + 1) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degree_seven_is_rejected() {
        assert!(matches!(quadrature(7), Err(FemError::UnsupportedDegree(7))));
    }
}
