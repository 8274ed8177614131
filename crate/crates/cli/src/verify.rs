//! Oracle suite run by `shapeopt verify` on the configured mesh.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapeopt::fem::SurfaceDensity;
use shapeopt::mesh::generate::{rectangle, SideMarkers};
use shapeopt::mesh::{ObstacleLoop, Point, Retraction, TriMesh};
use shapeopt::metrics::{compute_mu_field, MetricConfig, MetricContext, MetricKind, TangentVector};
use shapeopt::optimizer::{augmented_lagrangian, Problem, ShapeDerivative, ShapeProblem};
use shapeopt::shape_calculus::{barycenter, volume, AlParameters};
use shapeopt::stokes::{node_sensitivity, solve_stokes, ManufacturedChannel};

use crate::config::ExperimentConfig;

/// Multipliers of the derivative checks. Near the converged multipliers the
/// objective and constraint parts of `dL_A` cancel and relative errors lose
/// their meaning, so moderate values are used.
const CHECK_LAMBDA: [f64; 3] = [0.5, -0.5, 1.0];
const CHECK_MU: f64 = 100.0;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<22} {}", self.name, self.detail)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Fault injection: flips the sign of the analytic shape derivatives.
    pub flip_derivative_sign: bool,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    check(name, false, format!("error: {e}"))
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn run_checks(config: &ExperimentConfig, mesh: &TriMesh, options: VerifyOptions) -> Vec<Check> {
    let mut checks = poiseuille();
    checks.push(convergence_orders());
    checks.extend(geometry(mesh, config.seed));
    checks.push(hadamard_derivative(config, mesh, options));
    checks.push(discrete_derivative(config, mesh, options));
    for kind in [MetricKind::SteklovPoincare, MetricKind::LaplaceBeltrami] {
        checks.push(riesz(config, mesh, kind));
    }
    checks
}

fn poiseuille() -> Vec<Check> {
    let exact = |p: Point| [1.0 - p[1] * p[1], 0.0];
    let solve = || {
        let mesh = rectangle([0.0, -1.0], [1.0, 1.0], 4, 8, SideMarkers::channel())
            .map_err(|e| e.to_string())?;
        solve_stokes(&mesh, &exact).map_err(|e| e.to_string())
    };
    match solve() {
        Ok(s) => {
            let ev = s.velocity_l2_error(exact);
            let ep = s.pressure_l2_error(|p| 2.0 * p[0] - 1.0);
            let rj = relative(s.dissipation(), 8.0 / 3.0);
            vec![
                check(
                    "poiseuille-exact",
                    ev < 1e-10 && ep < 1e-10,
                    format!("velocity error {ev:.2e}, pressure error {ep:.2e} (limit 1e-10)"),
                ),
                check(
                    "poiseuille-dissipation",
                    rj < 1e-3,
                    format!(
                        "J = {:.12}, relative error to 8/3 {rj:.2e} (limit 1e-3)",
                        s.dissipation()
                    ),
                ),
            ]
        }
        Err(e) => vec![failed("poiseuille-exact", e)],
    }
}

fn convergence_orders() -> Check {
    let errors: Result<Vec<(f64, f64)>, _> = [4, 8, 16]
        .iter()
        .map(|&n| ManufacturedChannel.errors(n))
        .collect();
    match errors {
        Ok(e) => {
            let ov = (e[1].0 / e[2].0).log2();
            let op = (e[1].1 / e[2].1).log2();
            check(
                "convergence-orders",
                ov >= 2.8 && op >= 1.8,
                format!("velocity order {ov:.3} (>= 2.8), pressure order {op:.3} (>= 1.8)"),
            )
        }
        Err(e) => failed("convergence-orders", e),
    }
}

/// Area and centroid by the shoelace formula.
fn shoelace(points: &[Point]) -> (f64, Point) {
    let n = points.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (points[i], points[(i + 1) % n]);
        let cross = p[0] * q[1] - q[0] * p[1];
        a += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    let a = 0.5 * a;
    (a, [cx / (6.0 * a), cy / (6.0 * a)])
}

/// Counter-clockwise star-shaped polygon around a random center.
pub fn random_star(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = rng.gen_range(3..64);
    let c = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
        .iter()
        .map(|&t| {
            let r = rng.gen_range(0.2..1.5);
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect()
}

fn geometry_error(points: &[Point], lp: &ObstacleLoop) -> f64 {
    let (a, c) = shoelace(points);
    let bc = barycenter(lp);
    let scale = c[0].abs().max(c[1].abs()).max(1.0);
    relative(volume(lp), a)
        .max((bc[0] - c[0]).abs() / scale)
        .max((bc[1] - c[1]).abs() / scale)
}

fn geometry(mesh: &TriMesh, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    match mesh.obstacle_loop() {
        Ok(lp) => {
            // the obstacle loop runs clockwise around the hole
            let mut pts = lp.points().to_vec();
            pts.reverse();
            let err = geometry_error(&pts, &lp);
            out.push(check(
                "shoelace-obstacle",
                err <= 1e-12,
                format!("relative error {err:.2e} (limit 1e-12)"),
            ));
        }
        Err(e) => out.push(failed("shoelace-obstacle", e)),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..100)
        .map(|_| {
            let pts = random_star(&mut rng);
            let mut cw = pts.clone();
            cw.reverse();
            geometry_error(&pts, &ObstacleLoop::from_points(cw))
        })
        .fold(0.0, f64::max);
    out.push(check(
        "shoelace-random-stars",
        worst <= 1e-12,
        format!("worst relative error {worst:.2e} over 100 polygons (limit 1e-12)"),
    ));
    out
}

/// Smooth random field supported in a disk of radius 1.8 around `center`
/// (radial and tangential Fourier modes times a C² cutoff).
pub fn smooth_field(rng: &mut ChaCha8Rng, center: Point) -> impl Fn(Point) -> Point {
    let radial: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let tangential: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    move |p: Point| {
        let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
        let r = dx.hypot(dy);
        let (r0, r1) = (1.0, 1.8);
        if r >= r1 {
            return [0.0, 0.0];
        }
        let cutoff = if r <= r0 {
            1.0
        } else {
            let t = (r1 - r) / (r1 - r0);
            t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        };
        let theta = dy.atan2(dx);
        let mode = |c: &[(f64, f64)]| -> f64 {
            c.iter()
                .enumerate()
                .map(|(k, (a, b))| a * (k as f64 * theta).cos() + b * (k as f64 * theta).sin())
                .sum()
        };
        let (fr, ft) = (mode(&radial), mode(&tangential));
        let (ct, st) = (theta.cos(), theta.sin());
        [cutoff * (fr * ct - ft * st), cutoff * (fr * st + ft * ct)]
    }
}

fn displaced(mesh: &TriMesh, w: &[Point], t: f64) -> Result<TriMesh, String> {
    match mesh.apply_displacement(w, t).map_err(|e| e.to_string())? {
        Retraction::Valid { mesh, .. } => Ok(mesh),
        Retraction::Invalid { .. } => Err("perturbation inverted a triangle".into()),
    }
}

fn vertex_field(mesh: &TriMesh, f: &dyn Fn(Point) -> Point) -> Vec<Point> {
    (0..mesh.num_vertices())
        .map(|v| {
            if mesh.is_outer_boundary_vertex(v) {
                [0.0, 0.0]
            } else {
                f(mesh.vertices()[v])
            }
        })
        .collect()
}

fn problem(config: &ExperimentConfig, mesh: &TriMesh) -> Result<ShapeProblem, String> {
    Ok(ShapeProblem::new(mesh, config.inflow, config.metric)
        .map_err(|e| e.to_string())?
        .with_derivative(ShapeDerivative::Hadamard))
}

fn lagrangian(problem: &ShapeProblem, mesh: &TriMesh) -> Result<f64, String> {
    let e = problem.evaluate(mesh).map_err(|e| e.to_string())?;
    Ok(augmented_lagrangian(e.j, &e.c, &CHECK_LAMBDA, CHECK_MU))
}

/// Central differences of `L_A` (h = 1e-4) against `∫_Γ γ ⟨V, n⟩` for five
/// smooth random fields.
fn hadamard_derivative(config: &ExperimentConfig, mesh: &TriMesh, options: VerifyOptions) -> Check {
    let name = "fd-hadamard";
    let run = || -> Result<f64, String> {
        let problem = problem(config, mesh)?;
        let e = problem.evaluate(mesh).map_err(|e| e.to_string())?;
        let params = AlParameters {
            lambda: CHECK_LAMBDA,
            mu: CHECK_MU,
        };
        let mut gamma: SurfaceDensity = problem.density(&e, &params).map_err(|e| e.to_string())?;
        if options.flip_derivative_sign {
            gamma = gamma.scaled(-1.0);
        }
        let center = barycenter(&e.obstacle);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let field = smooth_field(&mut rng, center);
            let w = vertex_field(mesh, &field);
            let fd = (lagrangian(&problem, &displaced(mesh, &w, h)?)?
                - lagrangian(&problem, &displaced(mesh, &w, -h)?)?)
                / (2.0 * h);
            let trace: Vec<Point> = e.obstacle.vertices().iter().map(|&v| w[v]).collect();
            let analytic = gamma.integrate_normal(&e.obstacle, &trace);
            worst = worst.max(relative(analytic, fd));
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => check(
            name,
            worst <= 5e-2,
            format!("worst relative error {worst:.2e} over 5 fields (limit 5e-2)"),
        ),
        Err(e) => failed(name, e),
    }
}

/// Node sensitivities of the discrete `J` against central differences (h = 1e-6).
fn discrete_derivative(config: &ExperimentConfig, mesh: &TriMesh, options: VerifyOptions) -> Check {
    let name = "fd-discrete";
    let run = || -> Result<f64, String> {
        let problem = problem(config, mesh)?;
        let j = |m: &TriMesh| problem.evaluate(m).map(|e| e.j).map_err(|e| e.to_string());
        let e = problem.evaluate(mesh).map_err(|e| e.to_string())?;
        let sign = if options.flip_derivative_sign {
            -1.0
        } else {
            1.0
        };
        let r = node_sensitivity(&e.solution);
        let center = barycenter(&e.obstacle);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..3 {
            let field = smooth_field(&mut rng, center);
            let w = vertex_field(mesh, &field);
            let fd = (j(&displaced(mesh, &w, h)?)? - j(&displaced(mesh, &w, -h)?)?) / (2.0 * h);
            let exact: f64 = sign
                * r.iter()
                    .zip(&w)
                    .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
                    .sum::<f64>();
            worst = worst.max(relative(exact, fd));
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => check(
            name,
            worst <= 1e-5,
            format!("worst relative error {worst:.2e} over 3 fields (limit 1e-5)"),
        ),
        Err(e) => failed(name, e),
    }
}

/// `g(riesz(γ), w) = ∫_Γ γ ⟨w, n⟩` for ten random tangents.
fn riesz(config: &ExperimentConfig, mesh: &TriMesh, kind: MetricKind) -> Check {
    let name = match kind {
        MetricKind::SteklovPoincare => "riesz-steklov-poincare",
        MetricKind::LaplaceBeltrami => "riesz-laplace-beltrami",
    };
    let run = || -> Result<f64, String> {
        let metric = MetricConfig {
            kind,
            ..config.metric
        };
        let lambda = metric.lambda().map_err(|e| e.to_string())?;
        let lame = compute_mu_field(mesh, metric.mu_min, metric.mu_max, lambda)
            .map_err(|e| e.to_string())?;
        let ctx = MetricContext::new(mesh, &lame, &metric).map_err(|e| e.to_string())?;
        let lp = ctx.obstacle_loop().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
        let gamma = SurfaceDensity::new(
            (0..lp.len())
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect(),
        );
        let u = ctx.riesz(&gamma).map_err(|e| e.to_string())?;
        let nv = mesh.num_vertices();
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let (w, rhs) = match kind {
                MetricKind::SteklovPoincare => {
                    let mut d = vec![0.0; 2 * nv];
                    for v in (0..nv).filter(|&v| !mesh.is_outer_boundary_vertex(v)) {
                        d[v] = rng.gen_range(-1.0..1.0);
                        d[nv + v] = rng.gen_range(-1.0..1.0);
                    }
                    let trace: Vec<Point> =
                        lp.vertices().iter().map(|&v| [d[v], d[nv + v]]).collect();
                    let rhs = gamma.integrate_normal(&lp, &trace);
                    (TangentVector::SteklovPoincare { displacement: d }, rhs)
                }
                MetricKind::LaplaceBeltrami => {
                    let beta: Vec<f64> = (0..lp.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let rhs = gamma.integrate_against(&lp, &beta);
                    let extension = ctx.extend(&beta).map_err(|e| e.to_string())?;
                    (
                        TangentVector::LaplaceBeltrami {
                            alpha: beta,
                            extension,
                        },
                        rhs,
                    )
                }
            };
            let lhs = ctx.inner(&u, &w).map_err(|e| e.to_string())?;
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => check(
            name,
            worst <= 1e-8,
            format!("worst relative error {worst:.2e} over 10 tangents (limit 1e-8)"),
        ),
        Err(e) => failed(name, e),
    }
}
