use crate::mesh::{ObstacleLoop, Point};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeDistance {
    Distance(f64),
    /// Some normal ray from the first loop misses the second one within the
    /// search radius.
    NotComparable,
}

impl ShapeDistance {
    pub fn value(self) -> Option<f64> {
        match self {
            ShapeDistance::Distance(d) => Some(d),
            ShapeDistance::NotComparable => None,
        }
    }
}

/// `∫_{Γ_a} dist_n ds` with the search radius set to a quarter of the
/// equivalent radius `perimeter / 2π` of `a`.
pub fn shape_distance(a: &ObstacleLoop, b: &ObstacleLoop) -> ShapeDistance {
    shape_distance_within(a, b, 0.25 * a.perimeter() / std::f64::consts::TAU)
}

/// Normal distance from every vertex of `a` to `b`, measured along the
/// vertex normal in either direction and integrated along `a` with the
/// trapezoid rule.
pub fn shape_distance_within(a: &ObstacleLoop, b: &ObstacleLoop, radius: f64) -> ShapeDistance {
    let normals = a.vertex_normals();
    let mut dist = Vec::with_capacity(a.len());
    for (p, n) in a.points().iter().zip(&normals) {
        let nearest = (0..b.len())
            .filter_map(|j| {
                let [s, e] = b.edge_points(j);
                ray_hit(*p, *n, s, e)
            })
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min);
        if nearest > radius {
            return ShapeDistance::NotComparable;
        }
        dist.push(nearest);
    }
    let n = a.len();
    let total = (0..n)
        .map(|i| 0.5 * a.lengths()[i] * (dist[i] + dist[(i + 1) % n]))
        .sum();
    ShapeDistance::Distance(total)
}

/// Signed parameter `t` with `p + t n` on segment `[s, e]`.
fn ray_hit(p: Point, n: Point, s: Point, e: Point) -> Option<f64> {
    let d = [e[0] - s[0], e[1] - s[1]];
    let den = n[0] * (-d[1]) - n[1] * (-d[0]);
    if den.abs() < 1e-300 {
        return None;
    }
    let r = [s[0] - p[0], s[1] - p[1]];
    // p + t n = s + u d
    let t = (r[0] * (-d[1]) - r[1] * (-d[0])) / den;
    let u = (n[0] * r[1] - n[1] * r[0]) / den;
    let tol = 1e-12;
    (-tol..=1.0 + tol).contains(&u).then_some(t)
}
