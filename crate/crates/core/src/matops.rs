//! Dense real-matrix primitives used by every other module.
//!
//! Matrices are `nalgebra` dynamic matrices of `f64`, stored column-major, so
//! [`vec_mat`] (columns stacked top to bottom) is a direct view of storage and
//! matches the commutation-matrix convention `K * vec(A) = vec(A')`.
//!
//! All projections and least-squares solves go through orthogonal
//! decompositions (QR / SVD); explicit inverses of normal-equation matrices
//! appear only in test oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense column-major matrix of 64-bit reals.
pub type Matrix = DMatrix<f64>;

/// A matrix is treated as rank deficient when the ratio of its smallest to
/// largest singular value falls below this threshold.
pub const RANK_RTOL: f64 = 1e-10;

/// Least-squares solution with rank diagnostics.
#[derive(Debug, Clone)]
pub struct OlsSolution {
    /// q x c coefficient matrix, one column per right-hand-side column.
    pub coefficients: Matrix,
    /// Numerical rank of the design at [`RANK_RTOL`].
    pub rank: usize,
    /// Ratio of extreme singular values of the design (inf for rank 0).
    pub condition: f64,
}

/// Numerical rank and condition (ratio of extreme singular values).
pub fn rank_and_condition(a: &Matrix) -> (usize, f64) {
    let svd = a.clone().svd(false, false);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax <= 0.0 {
        return (0, f64::INFINITY);
    }
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank = sv.iter().filter(|&&s| s > RANK_RTOL * smax).count();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    (rank, condition)
}

/// Minimum-norm least squares via singular value decomposition.
///
/// Solves `min ||design * x - rhs||` column by column. Singular values below
/// `RANK_RTOL` times the largest are treated as zero. With
/// `require_full_rank`, a design of numerical rank < q is an error instead.
pub fn ols_solve(design: &Matrix, rhs: &Matrix, require_full_rank: bool) -> Result<OlsSolution> {
    let (n, q) = design.shape();
    if rhs.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "ols_solve: design has {n} rows but rhs has {}",
            rhs.nrows()
        )));
    }
    if n < q {
        return Err(Error::DimensionMismatch(format!(
            "ols_solve: underdetermined system ({n} rows < {q} columns)"
        )));
    }
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank = sv.iter().filter(|&&s| s > RANK_RTOL * smax).count();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if require_full_rank && rank < q {
        return Err(Error::RankDeficient {
            matrix: "design".to_string(),
            rank,
            expected: q,
            condition,
        });
    }
    let eps = if smax > 0.0 { RANK_RTOL * smax } else { f64::MIN_POSITIVE };
    let coefficients = svd
        .solve(rhs, eps)
        .map_err(|e| Error::InvalidConfig(format!("svd solve failed: {e}")))?;
    Ok(OlsSolution {
        coefficients,
        rank,
        condition,
    })
}

/// Residual-maker (annihilator) matrix `M_A = I - A (A'A)^{-1} A'`.
///
/// Computed as `I - Q Q'` from a thin QR of `A`; requires `A` to have full
/// column rank at [`RANK_RTOL`]. The result is symmetrized to suppress
/// round-off asymmetry.
pub fn residual_maker(a: &Matrix) -> Result<Matrix> {
    let (t, m) = a.shape();
    if t < m {
        return Err(Error::DimensionMismatch(format!(
            "residual_maker: {t} rows < {m} columns"
        )));
    }
    let (rank, condition) = rank_and_condition(a);
    if rank < m {
        return Err(Error::RankDeficient {
            matrix: "annihilator basis".to_string(),
            rank,
            expected: m,
            condition,
        });
    }
    let q = a.clone().qr().q();
    let mut mat = Matrix::identity(t, t) - &q * q.transpose();
    // enforce exact symmetry
    for i in 0..t {
        for j in 0..i {
            let v = 0.5 * (mat[(i, j)] + mat[(j, i)]);
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    Ok(mat)
}

/// Kronecker product: block (i, j) of the result is `a[(i, j)] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Column-major vectorization: columns of `a` stacked top to bottom.
pub fn vec_mat(a: &Matrix) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_mat`]: reshape a vector into a `rows x cols` matrix,
/// first column first.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "unvec: vector of length {} cannot fill {rows} x {cols}",
            v.len()
        )));
    }
    Ok(Matrix::from_column_slice(rows, cols, v.as_slice()))
}

/// The T^2 x T^2 commutation matrix `K` with `K * vec(A) = vec(A')` for every
/// T x T matrix `A`. `K` is a symmetric permutation with `K * K = I`.
pub fn commutation_matrix(t: usize) -> Matrix {
    let mut k = Matrix::zeros(t * t, t * t);
    for i in 0..t {
        for j in 0..t {
            k[(i * t + j, j * t + i)] = 1.0;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut SmallRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn ols_identity_design() {
        let design = Matrix::identity(2, 2);
        let rhs = Matrix::from_column_slice(2, 1, &[3.0, 5.0]);
        let sol = ols_solve(&design, &rhs, true).unwrap();
        assert_eq!(sol.rank, 2);
        assert_abs_diff_eq!(sol.coefficients[(0, 0)], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.coefficients[(1, 0)], 5.0, epsilon = 1e-14);
    }

    #[test]
    fn ols_intercept_only_is_mean() {
        let design = Matrix::from_element(4, 1, 1.0);
        let rhs = Matrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let sol = ols_solve(&design, &rhs, true).unwrap();
        assert_abs_diff_eq!(sol.coefficients[(0, 0)], 2.5, epsilon = 1e-14);
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let mut rng = SmallRng::seed_from_u64(7);
        let design = random_matrix(&mut rng, 5, 3);
        let rhs = random_matrix(&mut rng, 5, 1);
        // explicit-inverse oracle: (X'X)^{-1} X'y
        let xtx = design.transpose() * &design;
        let oracle = xtx.try_inverse().unwrap() * design.transpose() * &rhs;
        let sol = ols_solve(&design, &rhs, true).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(sol.coefficients[(i, 0)], oracle[(i, 0)], epsilon = 1e-10);
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let mut rng = SmallRng::seed_from_u64(11);
        let design = random_matrix(&mut rng, 20, 4);
        let rhs = random_matrix(&mut rng, 20, 2);
        let sol = ols_solve(&design, &rhs, true).unwrap();
        let resid = rhs - &design * &sol.coefficients;
        let cross = design.transpose() * resid;
        let scale = design.norm() * 1e-10;
        assert!(cross.amax() < scale, "X'e = {:?}", cross);
    }

    #[test]
    fn ols_rank_deficient_detected() {
        let design = Matrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let rhs = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let err = ols_solve(&design, &rhs, true).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
        // without the full-rank demand we still get a minimum-norm solution
        let sol = ols_solve(&design, &rhs, false).unwrap();
        assert_eq!(sol.rank, 1);
        assert!(sol.condition > 1e10);
    }

    #[test]
    fn residual_maker_centering_matrix() {
        let a = Matrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let m = residual_maker(&a).unwrap();
        let expected = [[0.5, -0.5], [-0.5, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(m[(i, j)], expected[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn residual_maker_coordinate_projection() {
        let a = Matrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let m = residual_maker(&a).unwrap();
        let expected = Matrix::from_diagonal(&DVector::from_column_slice(&[0.0, 1.0, 1.0]));
        assert!((m - expected).amax() < 1e-14);
    }

    #[test]
    fn residual_maker_staggered_means_oracle() {
        // 3x2 staggered adoption mean matrix with fractions 0.5 and 0.25.
        let a = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 0.5, 0.0, 0.5, 0.25]);
        let m = residual_maker(&a).unwrap();
        // frozen from the explicit pseudo-inverse oracle: col(A) = span{e2, e3}
        let expected = Matrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.0, 0.0]));
        assert!((&m - expected).amax() < 1e-12);
        assert!((&m * a).amax() < 1e-12);
    }

    #[test]
    fn residual_maker_properties_random() {
        let mut rng = SmallRng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 6, 3);
            let m = residual_maker(&a).unwrap();
            assert!((&m - m.transpose()).amax() < 1e-12, "symmetry");
            assert!((&m * &m - &m).amax() < 1e-12, "idempotence");
            assert!((&m * &a).amax() < 1e-10 * a.amax().max(1.0), "annihilation");
        }
    }

    #[test]
    fn residual_maker_rejects_rank_deficient() {
        let a = Matrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert!(matches!(
            residual_maker(&a),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn kron_trivial_cases() {
        let i2 = Matrix::identity(2, 2);
        let two = Matrix::from_element(1, 1, 2.0);
        assert_eq!(kron(&i2, &two), 2.0 * Matrix::identity(2, 2));

        let col = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let row = Matrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let expected = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(kron(&col, &row), expected);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(B X A') = (A kron B) vec(X)
        let mut rng = SmallRng::seed_from_u64(19);
        let a = random_matrix(&mut rng, 2, 3);
        let b = random_matrix(&mut rng, 3, 2);
        let x = random_matrix(&mut rng, 2, 3);
        let lhs = vec_mat(&(&b * &x * a.transpose()));
        let rhs = kron(&a, &b) * vec_mat(&x);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn vec_column_major_and_roundtrip() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        let v = vec_mat(&a);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0]);

        let col = Matrix::from_column_slice(3, 1, &[5.0, 6.0, 7.0]);
        assert_eq!(vec_mat(&col).as_slice(), &[5.0, 6.0, 7.0]);

        let mut rng = SmallRng::seed_from_u64(23);
        let b = random_matrix(&mut rng, 4, 3);
        let back = unvec(&vec_mat(&b), 4, 3).unwrap();
        assert_eq!(b, back);
    }

    #[test]
    fn commutation_matrix_definition() {
        assert_eq!(commutation_matrix(1), Matrix::identity(1, 1));

        let k2 = commutation_matrix(2);
        let v = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        let kv = &k2 * v;
        assert_eq!(kv.as_slice(), &[1.0, 3.0, 2.0, 4.0]);

        let k4 = commutation_matrix(4);
        assert!((&k4 * &k4 - Matrix::identity(16, 16)).amax() == 0.0);
        let mut rng = SmallRng::seed_from_u64(31);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 4, 4);
            let lhs = &k4 * vec_mat(&a);
            let rhs = vec_mat(&a.transpose());
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn commutation_matrix_is_permutation() {
        let k = commutation_matrix(3);
        for i in 0..9 {
            let row_ones = (0..9).filter(|&j| k[(i, j)] == 1.0).count();
            let row_zeros = (0..9).filter(|&j| k[(i, j)] == 0.0).count();
            assert_eq!(row_ones, 1);
            assert_eq!(row_zeros, 8);
            let col_ones = (0..9).filter(|&j| k[(j, i)] == 1.0).count();
            assert_eq!(col_ones, 1);
        }
    }
}
