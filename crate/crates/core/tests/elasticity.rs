use nalgebra::DMatrix;
use proptest::prelude::*;
use shapeopt::fem::sparse::{dot, norm2};
use shapeopt::fem::{assemble_elasticity, LuSolver, SparseSystem};
use shapeopt::mesh::generate::{rectangle, SideMarkers};
use shapeopt::mesh::TriMesh;

/// 5 x 4 grid, 30 vertices; clamping the 5 left vertices leaves 50 free dofs.
fn probe() -> (TriMesh, Vec<usize>) {
    let mesh = rectangle([0.0, 0.0], [1.25, 1.0], 5, 4, SideMarkers::channel()).unwrap();
    let nv = mesh.num_vertices();
    let clamped: Vec<usize> = (0..nv)
        .filter(|&v| mesh.vertices()[v][0] == 0.0)
        .flat_map(|v| [v, nv + v])
        .collect();
    (mesh, clamped)
}

fn eliminated(mesh: &TriMesh, clamped: &[usize], mu: &[f64], lambda: f64) -> SparseSystem {
    let a = assemble_elasticity(mesh, mu, lambda).unwrap();
    let n = a.rows();
    let mut system = SparseSystem::new(a, vec![0.0; n], true).unwrap();
    system.apply_dirichlet(&clamped.iter().map(|&d| (d, 0.0)).collect::<Vec<_>>());
    system
}

/// Smallest eigenvalue of the free block by inverse iteration.
fn smallest_eigenvalue(system: &SparseSystem, clamped: &[usize]) -> f64 {
    let lu = LuSolver::new(&system.matrix).unwrap();
    let n = system.dim();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    for &d in clamped {
        x[d] = 0.0;
    }
    let mut rayleigh = 0.0;
    for _ in 0..200 {
        let s = norm2(&x);
        x.iter_mut().for_each(|v| *v /= s);
        let y = lu.solve(&x).unwrap();
        let next = 1.0 / dot(&x, &y);
        let done = (next - rayleigh).abs() <= 1e-13 * next.abs();
        rayleigh = next;
        x = y;
        if done {
            break;
        }
    }
    rayleigh
}

fn free_block(system: &SparseSystem, clamped: &[usize]) -> DMatrix<f64> {
    let free: Vec<usize> = (0..system.dim()).filter(|d| !clamped.contains(d)).collect();
    DMatrix::from_fn(free.len(), free.len(), |i, j| {
        system.matrix.get(free[i], free[j])
    })
}

#[test]
fn probe_has_fifty_free_dofs() {
    let (mesh, clamped) = probe();
    assert_eq!(2 * mesh.num_vertices() - clamped.len(), 50);
}

#[test]
fn inverse_iteration_matches_dense_spectrum() {
    let (mesh, clamped) = probe();
    let mu: Vec<f64> = mesh.vertices().iter().map(|p| 1.0 + p[0] * p[1]).collect();
    let system = eliminated(&mesh, &clamped, &mu, 0.3);
    let lmin = smallest_eigenvalue(&system, &clamped);
    let dense = free_block(&system, &clamped).symmetric_eigenvalues().min();
    assert!(lmin > 0.0);
    assert!((lmin - dense).abs() <= 1e-9 * dense, "{lmin} vs {dense}");
}

#[test]
fn unclamped_operator_is_singular() {
    // rigid motions are in the kernel without Dirichlet data
    let (mesh, _) = probe();
    let mu = vec![1.0; mesh.num_vertices()];
    let a = assemble_elasticity(&mesh, &mu, 0.5).unwrap();
    let dense = DMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j));
    let eig = dense.symmetric_eigenvalues();
    assert_eq!(eig.iter().filter(|e| e.abs() < 1e-10).count(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eliminated_operator_is_symmetric_positive_definite(
        mu in prop::collection::vec(0.1f64..10.0, 30),
        lambda in 0.0f64..5.0,
    ) {
        let (mesh, clamped) = probe();
        let system = eliminated(&mesh, &clamped, &mu, lambda);
        let scale = system.matrix.triplets().fold(0.0f64, |m, (_, _, v)| m.max(v.abs()));
        prop_assert!(system.matrix.max_asymmetry() <= 1e-12 * scale);
        prop_assert!(smallest_eigenvalue(&system, &clamped) > 0.0);
        prop_assert!(free_block(&system, &clamped).cholesky().is_some());
    }
}
