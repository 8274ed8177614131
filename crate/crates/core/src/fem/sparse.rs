//! Compressed-row matrices, Dirichlet elimination and the direct solver.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par};

use super::FemError;

/// Accumulates `(row, col, value)` contributions; duplicates are summed.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        TripletBuilder {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(rows: usize, cols: usize, capacity: usize) -> Self {
        TripletBuilder {
            rows,
            cols,
            entries: Vec::with_capacity(capacity),
        }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.entries.push((row, col, value));
    }

    /// Builds the CSR matrix. Square matrices always store their diagonal.
    pub fn build(mut self) -> CsrMatrix {
        if self.rows == self.cols {
            for i in 0..self.rows {
                self.entries.push((i, i, 0.0));
            }
        }
        // stable sort keeps the summation order of duplicates deterministic
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("non-empty") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(n, m);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.add(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        dot(x, &ay)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.cols, self.rows, self.nnz());
        for (i, j, v) in self.triplets() {
            b.add(j, i, v);
        }
        b.build()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= factor);
        m
    }

    /// `self + factor * other` for matrices of equal shape.
    pub fn add_scaled(&self, other: &CsrMatrix, factor: f64) -> CsrMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut b = TripletBuilder::with_capacity(self.rows, self.cols, self.nnz() + other.nnz());
        for (i, j, v) in self.triplets() {
            b.add(i, j, v);
        }
        for (i, j, v) in other.triplets() {
            b.add(i, j, factor * v);
        }
        b.build()
    }

    /// Symmetric Dirichlet elimination of a square matrix: constrained rows
    /// and columns are zeroed with 1 on the diagonal. Returns the lifting
    /// `A[:, D] g` that the right-hand side must lose on free rows.
    fn eliminate(&mut self, constrained: &[Option<f64>]) -> Vec<f64> {
        let mut lift = vec![0.0; self.rows];
        for (i, lift_i) in lift.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            if constrained[i].is_some() {
                for k in r {
                    self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
                }
            } else {
                for k in r {
                    if let Some(g) = constrained[self.col_idx[k]] {
                        *lift_i += self.values[k] * g;
                        self.values[k] = 0.0;
                    }
                }
            }
        }
        lift
    }

    /// Dense copy, for small debugging matrices.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (i, j, v) in self.triplets() {
            d[i][j] += v;
        }
        d
    }

    /// MatrixMarket coordinate text (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.rows, self.cols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {v:e}", i + 1, j + 1);
        }
        s
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, FemError> {
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.rows, self.cols, &triplets)
            .map_err(|e| FemError::Solver(format!("matrix conversion failed: {e:?}")))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Square matrix with right-hand side.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub symmetric: bool,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>, symmetric: bool) -> Result<Self, FemError> {
        if matrix.rows() != matrix.cols() || matrix.rows() != rhs.len() {
            return Err(FemError::Dimension {
                rows: matrix.rows(),
                cols: matrix.cols(),
                rhs: rhs.len(),
            });
        }
        Ok(SparseSystem {
            matrix,
            rhs,
            symmetric,
        })
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Imposes `x[dof] = value` by symmetric elimination. Repeated dofs keep
    /// the last value.
    pub fn apply_dirichlet(&mut self, values: &[(usize, f64)]) {
        let mut constrained = vec![None; self.dim()];
        for &(d, g) in values {
            constrained[d] = Some(g);
        }
        let lift = self.matrix.eliminate(&constrained);
        for (i, c) in constrained.iter().enumerate() {
            match c {
                Some(g) => self.rhs[i] = *g,
                None => self.rhs[i] -= lift[i],
            }
        }
    }

    /// Indices of rows without a single nonzero entry.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.matrix.row(i).1.iter().all(|&v| v == 0.0))
            .collect()
    }

    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        ax.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Residual bound of the solve contract: `‖Ax − b‖ ≤ 1e-10 (1 + ‖b‖)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Sparse LU factorization reusable for several right-hand sides.
pub struct LuSolver {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for LuSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuSolver")
            .field("dim", &self.matrix.rows())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

impl LuSolver {
    pub fn new(matrix: &CsrMatrix) -> Result<Self, FemError> {
        if matrix.rows() != matrix.cols() {
            return Err(FemError::Dimension {
                rows: matrix.rows(),
                cols: matrix.cols(),
                rhs: matrix.rows(),
            });
        }
        // sequential kernels give bitwise reproducible factors
        faer::set_global_parallelism(Par::Seq);
        let lu = matrix
            .to_faer()?
            .sp_lu()
            .map_err(|e| FemError::Solver(format!("LU factorization failed: {e:?}")))?;
        Ok(LuSolver {
            matrix: matrix.clone(),
            lu,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_in_place(x.as_mut());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `A x = rhs` with up to three steps of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        if rhs.len() != self.matrix.rows() {
            return Err(FemError::Dimension {
                rows: self.matrix.rows(),
                cols: self.matrix.cols(),
                rhs: rhs.len(),
            });
        }
        let bound = RESIDUAL_TOLERANCE * (1.0 + norm2(rhs));
        let mut x = self.raw_solve(rhs);
        let mut res = residual(&self.matrix, &x, rhs);
        let mut norm = norm2(&res);
        for _ in 0..3 {
            if norm <= 0.01 * bound || !norm.is_finite() {
                break;
            }
            let dx = self.raw_solve(&res);
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let cres = residual(&self.matrix, &candidate, rhs);
            let cnorm = norm2(&cres);
            if !(cnorm < norm) {
                break;
            }
            x = candidate;
            res = cres;
            norm = cnorm;
        }
        if !(norm <= bound) {
            return Err(FemError::Solver(format!(
                "residual {norm:e} exceeds {bound:e} (dimension {}, nnz {}); matrix singular or badly conditioned",
                self.matrix.rows(),
                self.matrix.nnz()
            )));
        }
        Ok(x)
    }
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

/// Solves a system under the residual contract.
pub fn solve(system: &SparseSystem) -> Result<Vec<f64>, FemError> {
    LuSolver::new(&system.matrix)?.solve(&system.rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let sys =
            SparseSystem::new(CsrMatrix::identity(4), vec![1.0, -2.0, 3.5, 0.0], true).unwrap();
        assert_eq!(solve(&sys).unwrap(), vec![1.0, -2.0, 3.5, 0.0]);
    }

    #[test]
    fn two_by_two_spd() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let x = solve(&SparseSystem::new(a, vec![1.0, 0.0], true).unwrap()).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((x[1] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.add(0, 1, 1.0);
        b.add(0, 1, 2.5);
        b.add(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.get(1, 0), -1.0);
        // stored (zero) diagonal
        assert_eq!(m.nnz(), 4);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(solve(&SparseSystem::new(a, vec![1.0, 0.0], true).unwrap()).is_err());
    }

    #[test]
    fn dirichlet_elimination_is_symmetric_and_exact() {
        // 1D Laplacian with x0 = 1, x4 = 3: linear profile
        let n = 5;
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n - 1 {
            b.add(i, i, 1.0);
            b.add(i + 1, i + 1, 1.0);
            b.add(i, i + 1, -1.0);
            b.add(i + 1, i, -1.0);
        }
        let mut sys = SparseSystem::new(b.build(), vec![0.0; n], true).unwrap();
        sys.apply_dirichlet(&[(0, 1.0), (4, 3.0)]);
        assert_eq!(sys.matrix.max_asymmetry(), 0.0);
        assert!(sys.zero_rows().is_empty());
        let x = solve(&sys).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - (1.0 + 0.5 * i as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn matrix_market_header() {
        let s = CsrMatrix::identity(2).to_matrix_market();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1e0\n"));
    }
}
