//! Dense decompositions used by the manifold layer.
//!
//! Everything here is a thin, defensively-checked wrapper over nalgebra's
//! factorizations, normalized to fixed conventions: QR with a positive
//! diagonal, eigenvalues sorted ascending, singular values sorted descending.

use nalgebra as na;

use crate::error::{Error, Result};

/// Column-major dense matrix of f64; the only matrix type used in the crate.
pub type DenseMatrix = na::DMatrix<f64>;

/// Relative threshold under which an R diagonal entry counts as zero.
const QR_RANK_RTOL: f64 = 1e-12;
/// Relative threshold on sigma_min/sigma_max under which a polar factor is rejected.
const POLAR_RANK_RTOL: f64 = 1e-10;
/// Relative threshold on lambda_min/lambda_max under which an SPD inverse square root is rejected.
const SPD_RTOL: f64 = 1e-12;
/// Residual norm ||Y^T Y - I||_F at which the series projection gives up.
const SERIES_TRUST_RADIUS: f64 = 0.5;

pub(crate) fn ensure_finite(m: &DenseMatrix, context: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

fn ensure_tall(m: &DenseMatrix, context: &'static str) -> Result<()> {
    if m.nrows() < m.ncols() {
        return Err(Error::ShapeMismatch {
            context,
            expected: "nrows >= ncols".to_string(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn ensure_square(m: &DenseMatrix, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch {
            context,
            expected: "square matrix".to_string(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// Thin QR factorization Y = QR with the diagonal of R forced positive,
/// which makes the factorization unique for full-rank input.
pub fn qr_positive(y: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    ensure_finite(y, "qr_positive input")?;
    ensure_tall(y, "qr_positive")?;
    let m = y.ncols();
    let qr = y.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let scale = y.norm().max(f64::MIN_POSITIVE);
    for j in 0..m {
        let d = r[(j, j)];
        if d.abs() <= QR_RANK_RTOL * scale {
            return Err(Error::RankDeficient("qr_positive"));
        }
        if d < 0.0 {
            // Flipping the sign of column j of Q and row j of R preserves QR.
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok((q, r))
}

/// Orthonormal factor of the positive-diagonal thin QR.
pub fn qf(y: &DenseMatrix) -> Result<DenseMatrix> {
    let (q, _) = qr_positive(y)?;
    Ok(q)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted ascending.
///
/// The input is symmetrized first, so mild asymmetry from roundoff is
/// tolerated. Returns (eigenvalues ascending, matching eigenvector columns).
pub fn sym_eig(s: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    ensure_finite(s, "sym_eig input")?;
    ensure_square(s, "sym_eig")?;
    let sym = (s + s.transpose()) * 0.5;
    let eig = na::SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Thin SVD Y = U diag(sigma) V^T with singular values sorted descending.
///
/// Returns (U: n x m, sigma: length m, V: m x m).
pub fn svd_thin(y: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    ensure_finite(y, "svd_thin input")?;
    ensure_tall(y, "svd_thin")?;
    let svd = y.clone().svd(true, true);
    let u = svd.u.expect("svd requested U");
    let v_t = svd.v_t.expect("svd requested V^T");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    Ok((u, sigma, v_t.transpose()))
}

/// Inverse matrix square root S^{-1/2} of a symmetric positive definite matrix.
pub fn inv_sqrt_spd(s: &DenseMatrix) -> Result<DenseMatrix> {
    let (values, vectors) = sym_eig(s)?;
    let max = values.last().copied().unwrap_or(0.0);
    let min = values.first().copied().unwrap_or(0.0);
    if !(max > 0.0) || min <= SPD_RTOL * max {
        return Err(Error::NotPositiveDefinite("inv_sqrt_spd"));
    }
    let inv_sqrt = DenseMatrix::from_diagonal(&na::DVector::from_iterator(
        values.len(),
        values.iter().map(|l| 1.0 / l.sqrt()),
    ));
    let m = &vectors * inv_sqrt * vectors.transpose();
    // Symmetrize to kill the O(eps) asymmetry the triple product introduces.
    Ok((&m + m.transpose()) * 0.5)
}

/// Orthonormal polar factor of a full-rank tall matrix, via SVD: U V^T.
///
/// This is the nearest matrix with orthonormal columns in the Frobenius
/// sense. [`polar_factor_via_gram`] computes the same factor through
/// Y (Y^T Y)^{-1/2}; the two routes are kept separate so they can be checked
/// against each other.
pub fn polar_factor(y: &DenseMatrix) -> Result<DenseMatrix> {
    let (u, sigma, v) = svd_thin(y)?;
    let max = sigma.first().copied().unwrap_or(0.0);
    let min = sigma.last().copied().unwrap_or(0.0);
    if !(max > 0.0) || min <= POLAR_RANK_RTOL * max {
        return Err(Error::RankDeficient("polar_factor"));
    }
    Ok(u * v.transpose())
}

/// Orthonormal polar factor computed as Y (Y^T Y)^{-1/2}.
///
/// Less robust than the SVD route for ill-conditioned input (the Gram matrix
/// squares the condition number); primarily a cross-check.
pub fn polar_factor_via_gram(y: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_finite(y, "polar_factor input")?;
    ensure_tall(y, "polar_factor")?;
    let gram = y.transpose() * y;
    let inv_sqrt = inv_sqrt_spd(&gram).map_err(|e| match e {
        Error::NotPositiveDefinite(_) => Error::RankDeficient("polar_factor (gram route)"),
        other => other,
    })?;
    Ok(y * inv_sqrt)
}

/// Truncated Neumann-type series for the polar factor of a matrix already
/// close to having orthonormal columns.
///
/// With E = Y^T Y - I, the factor Y (I + E)^{-1/2} is expanded to the given
/// order (1, 2 or 3): I - E/2 + 3E^2/8 - 5E^3/16. The expansion is only
/// trusted for ||E||_F < 0.5.
pub fn polar_factor_series(y: &DenseMatrix, order: usize) -> Result<DenseMatrix> {
    if !(1..=3).contains(&order) {
        return Err(Error::ConfigInvalid(format!(
            "series order must be 1, 2 or 3, got {order}"
        )));
    }
    ensure_finite(y, "polar_factor_series input")?;
    ensure_tall(y, "polar_factor_series")?;
    let m = y.ncols();
    let e = y.transpose() * y - DenseMatrix::identity(m, m);
    let residual = e.norm();
    if residual >= SERIES_TRUST_RADIUS {
        return Err(Error::TooFarFromManifold(residual));
    }
    let mut sum = DenseMatrix::identity(m, m) - &e * 0.5;
    if order >= 2 {
        let e2 = &e * &e;
        sum += &e2 * (3.0 / 8.0);
        if order >= 3 {
            sum -= (&e2 * &e) * (5.0 / 16.0);
        }
    }
    Ok(y * sum)
}

/// Frobenius norm; alias for readability at call sites that mix norms.
pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    m.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::from_row_slice(rows, cols, data)
    }

    fn assert_mat_eq(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        assert!(
            (a - b).norm() <= tol,
            "matrices differ by {:.3e} (tol {:.1e}):\n{}\nvs\n{}",
            (a - b).norm(),
            tol,
            a,
            b
        );
    }

    #[test]
    fn qr_positive_identity_is_fixed_point() {
        let id = DenseMatrix::identity(3, 3);
        let (q, r) = qr_positive(&id).unwrap();
        assert_mat_eq(&q, &id, 1e-14);
        assert_mat_eq(&r, &id, 1e-14);
    }

    #[test]
    fn qr_positive_permutation_keeps_positive_diagonal() {
        let y = mat(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (q, r) = qr_positive(&y).unwrap();
        assert_mat_eq(&q, &y, 1e-14);
        assert_mat_eq(&r, &DenseMatrix::identity(2, 2), 1e-14);
    }

    #[test]
    fn qr_positive_column_vector() {
        let y = mat(2, 1, &[2.0, 0.0]);
        let (q, r) = qr_positive(&y).unwrap();
        assert_mat_eq(&q, &mat(2, 1, &[1.0, 0.0]), 1e-14);
        assert_abs_diff_eq!(r[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn qr_positive_rejects_rank_deficiency() {
        let y = mat(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        assert!(matches!(qr_positive(&y), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn qr_positive_rejects_wide_and_non_finite() {
        let wide = mat(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            qr_positive(&wide),
            Err(Error::ShapeMismatch { .. })
        ));
        let bad = mat(2, 1, &[f64::NAN, 1.0]);
        assert!(matches!(qr_positive(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn qf_normalizes_single_column() {
        let q = qf(&mat(2, 1, &[3.0, 4.0])).unwrap();
        assert_mat_eq(&q, &mat(2, 1, &[0.6, 0.8]), 1e-14);
    }

    #[test]
    fn qf_of_upper_triangular_system() {
        let y = mat(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let q = qf(&y).unwrap();
        let expected = mat(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_mat_eq(&q, &expected, 1e-14);
    }

    #[test]
    fn sym_eig_sorts_ascending() {
        let s = mat(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let (values, vectors) = sym_eig(&s).unwrap();
        assert_abs_diff_eq!(values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(values[1], 3.0, epsilon = 1e-12);
        // Eigenvector columns match the sorted eigenvalues.
        for (i, &l) in values.iter().enumerate() {
            let v = vectors.column(i);
            assert!((&s * v - l * v).norm() < 1e-12);
        }
    }

    #[test]
    fn sym_eig_of_exchange_matrix() {
        let s = mat(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (values, vectors) = sym_eig(&s).unwrap();
        assert_abs_diff_eq!(values[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(values[1], 1.0, epsilon = 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for (i, &value) in values.iter().enumerate() {
            let v = vectors.column(i);
            assert_abs_diff_eq!(v[0].abs(), inv_sqrt2, epsilon = 1e-12);
            assert_abs_diff_eq!(v[1].abs(), inv_sqrt2, epsilon = 1e-12);
            assert!((&s * v - value * v).norm() < 1e-12);
        }
        // Orthonormal basis.
        assert_mat_eq(
            &(vectors.transpose() * &vectors),
            &DenseMatrix::identity(2, 2),
            1e-12,
        );
    }

    #[test]
    fn sym_eig_identity_has_unit_spectrum() {
        let (values, _) = sym_eig(&DenseMatrix::identity(4, 4)).unwrap();
        for v in values {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn svd_thin_sorts_descending_and_reconstructs() {
        let y = mat(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let (u, sigma, v) = svd_thin(&y).unwrap();
        assert_eq!(sigma.len(), 2);
        assert_abs_diff_eq!(sigma[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma[1], 1.0, epsilon = 1e-12);
        let rebuilt = &u * DenseMatrix::from_diagonal(&na::DVector::from_vec(sigma)) * v.transpose();
        assert_mat_eq(&rebuilt, &y, 1e-12);
    }

    #[test]
    fn svd_thin_of_exchange_matrix_has_unit_spectrum() {
        let y = mat(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (_, sigma, _) = svd_thin(&y).unwrap();
        assert_abs_diff_eq!(sigma[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inv_sqrt_spd_identity_and_diagonal() {
        let id = DenseMatrix::identity(3, 3);
        assert_mat_eq(&inv_sqrt_spd(&id).unwrap(), &id, 1e-13);
        let s = mat(1, 1, &[4.0]);
        assert_abs_diff_eq!(inv_sqrt_spd(&s).unwrap()[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn inv_sqrt_spd_two_by_two() {
        // Eigenpairs of [[2,1],[1,2]]: lambda=1 at (1,-1)/sqrt2, lambda=3 at (1,1)/sqrt2.
        // S^{-1/2} = [[ (1+1/sqrt3)/2, (1/sqrt3-1)/2 ], [ ..., ... ]].
        let s = mat(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let m = inv_sqrt_spd(&s).unwrap();
        let a = (1.0 + 1.0 / 3.0_f64.sqrt()) / 2.0;
        let b = (1.0 / 3.0_f64.sqrt() - 1.0) / 2.0;
        assert_mat_eq(&m, &mat(2, 2, &[a, b, b, a]), 1e-12);
        assert_mat_eq(&(&m * &s * &m), &DenseMatrix::identity(2, 2), 1e-9);
    }

    #[test]
    fn inv_sqrt_spd_rejects_indefinite() {
        let s = mat(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            inv_sqrt_spd(&s),
            Err(Error::NotPositiveDefinite(_))
        ));
        let singular = mat(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            inv_sqrt_spd(&singular),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn polar_factor_fixed_points_and_scaling() {
        let id = DenseMatrix::identity(3, 3);
        assert_mat_eq(&polar_factor(&(2.0 * &id)).unwrap(), &id, 1e-13);
        let x = mat(2, 1, &[3.0, 4.0]);
        assert_mat_eq(&polar_factor(&x).unwrap(), &mat(2, 1, &[0.6, 0.8]), 1e-13);
    }

    #[test]
    fn polar_factor_rejects_singular() {
        let y = mat(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(polar_factor(&y), Err(Error::RankDeficient(_))));
        assert!(matches!(
            polar_factor_via_gram(&y),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn polar_routes_agree_on_seeded_matrices() {
        for seed in 0..20u64 {
            let y = crate::manifold::gaussian_matrix(8, 3, seed) + DenseMatrix::identity(8, 3);
            let a = polar_factor(&y).unwrap();
            let b = polar_factor_via_gram(&y).unwrap();
            assert_mat_eq(&a, &b, 1e-9);
        }
    }

    #[test]
    fn series_projection_is_exact_on_orthonormal_input() {
        let y = mat(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        for order in 1..=3 {
            assert_mat_eq(&polar_factor_series(&y, order).unwrap(), &y, 1e-14);
        }
    }

    #[test]
    fn series_projection_matches_scalar_expansion() {
        // For Y = (1+e) I the exact factor is I; order 1 leaves the known
        // scalar remainder (1+e)(1 - (2e+e^2)/2).
        let e = 0.01;
        let y = DenseMatrix::identity(2, 2) * (1.0 + e);
        let got = polar_factor_series(&y, 1).unwrap();
        let expected = (1.0 + e) * (1.0 - 0.5 * (2.0 * e + e * e));
        assert_abs_diff_eq!(got[(0, 0)], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got[(1, 1)], expected, epsilon = 1e-15);
    }

    #[test]
    fn series_projection_order_three_is_close_to_polar() {
        for seed in 0..10u64 {
            let q = qf(&crate::manifold::gaussian_matrix(10, 4, seed)).unwrap();
            let y = &q + crate::manifold::gaussian_matrix(10, 4, seed + 100) * 1e-3;
            let exact = polar_factor(&y).unwrap();
            let approx3 = polar_factor_series(&y, 3).unwrap();
            assert!((exact - approx3).norm() < 1e-7);
        }
    }

    #[test]
    fn series_projection_error_shrinks_with_order() {
        for seed in 0..10u64 {
            let q = qf(&crate::manifold::gaussian_matrix(10, 4, seed)).unwrap();
            let y = &q + crate::manifold::gaussian_matrix(10, 4, seed + 50) * 2e-2;
            let exact = polar_factor(&y).unwrap();
            let errs: Vec<f64> = (1..=3)
                .map(|ord| (polar_factor_series(&y, ord).unwrap() - &exact).norm())
                .collect();
            assert!(errs[1] < errs[0] && errs[2] < errs[1], "errs = {errs:?}");
        }
    }

    #[test]
    fn series_projection_rejects_far_input() {
        let y = DenseMatrix::identity(2, 2) * 2.0;
        assert!(matches!(
            polar_factor_series(&y, 3),
            Err(Error::TooFarFromManifold(_))
        ));
        assert!(matches!(
            polar_factor_series(&y, 0),
            Err(Error::ConfigInvalid(_))
        ));
        assert!(matches!(
            polar_factor_series(&y, 4),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn qr_reconstructs_on_seeded_matrices() {
        for seed in 0..20u64 {
            let y = crate::manifold::gaussian_matrix(9, 4, seed);
            let (q, r) = qr_positive(&y).unwrap();
            assert_mat_eq(&(&q * &r), &y, 1e-10 * y.norm().max(1.0));
            assert_mat_eq(
                &(q.transpose() * &q),
                &DenseMatrix::identity(4, 4),
                1e-11,
            );
            for j in 0..4 {
                assert!(r[(j, j)] > 0.0);
                for i in (j + 1)..4 {
                    assert_abs_diff_eq!(r[(i, j)], 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn polar_factor_is_frobenius_nearest() {
        // The polar factor minimizes ||Y - X||_F over orthonormal X; spot
        // check against random competitors.
        for seed in 0..5u64 {
            let y = crate::manifold::gaussian_matrix(7, 3, seed) + DenseMatrix::identity(7, 3);
            let p = polar_factor(&y).unwrap();
            let best = (&y - &p).norm();
            for trial in 0..100u64 {
                let z = qf(&crate::manifold::gaussian_matrix(7, 3, 1000 + 100 * seed + trial))
                    .unwrap();
                assert!((&y - z).norm() >= best - 1e-12);
            }
        }
    }
}
