use super::{Point, TriMesh};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Per-element condition numbers and the worst of them.
#[derive(Clone, Debug)]
pub struct QualityReport {
    pub per_element: Vec<f64>,
    pub worst: f64,
}

/// 2-norm condition number of the linear map taking the unit-side equilateral
/// triangle onto `(a, b, c)`. Equals 1 for equilateral triangles and is
/// `+inf` for degenerate or inverted ones.
pub fn triangle_quality(a: Point, b: Point, c: Point) -> f64 {
    // physical edge matrix P = [b - a, c - a]; reference R = [[1, 1/2], [0, sqrt3/2]]
    let p = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
    // B = P R^{-1}, R^{-1} = [[1, -1/sqrt3], [0, 2/sqrt3]]
    let inv = [[1.0, -0.5 / SQRT3_2], [0.0, 1.0 / SQRT3_2]];
    let m = [
        [
            p[0][0] * inv[0][0] + p[0][1] * inv[1][0],
            p[0][0] * inv[0][1] + p[0][1] * inv[1][1],
        ],
        [
            p[1][0] * inv[0][0] + p[1][1] * inv[1][0],
            p[1][0] * inv[0][1] + p[1][1] * inv[1][1],
        ],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0) {
        return f64::INFINITY;
    }
    let frob2 = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
    // sigma_max^2 + sigma_min^2 = |B|_F^2, sigma_max * sigma_min = det
    let ratio = frob2 / det;
    let disc = (ratio * ratio - 4.0).max(0.0);
    0.5 * (ratio + disc.sqrt())
}

pub(super) fn element_quality(mesh: &TriMesh) -> QualityReport {
    let per_element: Vec<f64> = (0..mesh.num_triangles())
        .map(|t| {
            let [a, b, c] = mesh.triangle_points(t);
            triangle_quality(a, b, c)
        })
        .collect();
    let worst = per_element.iter().copied().fold(1.0_f64, f64::max);
    QualityReport { per_element, worst }
}
