//! Benchmark objectives on the sphere and Stiefel manifolds, with their
//! Euclidean gradients and reference optima.
//!
//! Three problems: Rayleigh-quotient maximization (as minimization of
//! -x^T A x on the sphere), the Brockett trace cost on Stiefel, and
//! orthogonal Procrustes. Each carries an oracle that computes f_star (and
//! the minimizer when known), used to report per-iteration error curves.

use crate::error::{Error, Result};
use crate::manifold::{self, Manifold};
use crate::matops::{self, DenseMatrix};

/// Tolerated relative asymmetry of problem matrices declared symmetric.
const SYMMETRY_RTOL: f64 = 1e-12;
/// sigma_min/sigma_max below this makes the Procrustes closed form non-unique.
const CROSS_PRODUCT_RTOL: f64 = 1e-12;
/// Brockett oracle pairing is brute-forced over column permutations up to
/// this block size; beyond it the sorted pairing rule is used.
const BRUTE_FORCE_MAX_COLS: usize = 4;

/// A smooth objective together with its problem data.
#[derive(Debug, Clone)]
pub enum Problem {
    /// f(x) = -x^T A x on the sphere; minimized at the leading eigenvector.
    Rayleigh { a: DenseMatrix },
    /// f(X) = tr(X^T A X N) on St(n, m) with N = diag(weights).
    Brockett { a: DenseMatrix, weights: Vec<f64> },
    /// f(X) = ||A X - B||_F^2 on St(n, m).
    Procrustes { a: DenseMatrix, b: DenseMatrix },
}

/// Reference optimum for a problem instance.
#[derive(Debug, Clone)]
pub struct OracleInfo {
    pub f_star: f64,
    /// A global minimizer when one is available in closed form.
    pub x_star: Option<DenseMatrix>,
    /// How f_star was obtained; "numerical" marks values that are not
    /// guaranteed global.
    pub method: &'static str,
}

fn ensure_symmetric(a: &DenseMatrix, context: &'static str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch {
            context,
            expected: "square matrix".to_string(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let asym = (a - a.transpose()).norm();
    if asym > SYMMETRY_RTOL * a.norm().max(1.0) {
        return Err(Error::ConfigInvalid(format!(
            "{context}: matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

impl Problem {
    pub fn rayleigh(a: DenseMatrix) -> Result<Self> {
        matops::ensure_finite(&a, "rayleigh matrix")?;
        ensure_symmetric(&a, "rayleigh")?;
        Ok(Problem::Rayleigh { a })
    }

    /// Brockett cost with ascending non-negative diagonal weights; the number
    /// of weights fixes the Stiefel block size.
    pub fn brockett(a: DenseMatrix, weights: Vec<f64>) -> Result<Self> {
        matops::ensure_finite(&a, "brockett matrix")?;
        ensure_symmetric(&a, "brockett")?;
        if weights.is_empty() || weights.len() > a.nrows() {
            return Err(Error::ShapeInvalid(format!(
                "brockett needs 1 <= m <= n weights, got m={}, n={}",
                weights.len(),
                a.nrows()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::ConfigInvalid(
                "brockett weights must be finite and non-negative".to_string(),
            ));
        }
        if weights.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::ConfigInvalid(
                "brockett weights must be sorted ascending".to_string(),
            ));
        }
        Ok(Problem::Brockett { a, weights })
    }

    pub fn procrustes(a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        matops::ensure_finite(&a, "procrustes A")?;
        matops::ensure_finite(&b, "procrustes B")?;
        let (l, n) = a.shape();
        let (lb, m) = b.shape();
        if l != lb {
            return Err(Error::ShapeMismatch {
                context: "procrustes",
                expected: format!("B with {l} rows"),
                got: format!("{lb}x{m}"),
            });
        }
        if n < m || l < n {
            return Err(Error::ShapeInvalid(format!(
                "procrustes needs l >= n >= m, got l={l}, n={n}, m={m}"
            )));
        }
        Ok(Problem::Procrustes { a, b })
    }

    /// The manifold the problem naturally lives on, with default projection
    /// and retraction.
    pub fn domain(&self) -> Manifold {
        match self {
            Problem::Rayleigh { a } => {
                Manifold::sphere(a.nrows()).expect("validated at construction")
            }
            Problem::Brockett { a, weights } => {
                Manifold::stiefel(a.nrows(), weights.len()).expect("validated at construction")
            }
            Problem::Procrustes { a, b } => {
                Manifold::stiefel(a.ncols(), b.ncols()).expect("validated at construction")
            }
        }
    }

    /// Ambient shape of feasible points.
    pub fn point_shape(&self) -> (usize, usize) {
        match self {
            Problem::Rayleigh { a } => (a.nrows(), 1),
            Problem::Brockett { a, weights } => (a.nrows(), weights.len()),
            Problem::Procrustes { a, b } => (a.ncols(), b.ncols()),
        }
    }

    fn check_point(&self, x: &DenseMatrix, context: &'static str) -> Result<()> {
        let expected = self.point_shape();
        if x.shape() != expected {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("{}x{}", expected.0, expected.1),
                got: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        Ok(())
    }

    /// Objective value at a feasible point.
    pub fn value(&self, x: &DenseMatrix) -> Result<f64> {
        self.check_point(x, "value")?;
        Ok(match self {
            Problem::Rayleigh { a } => -x.dot(&(a * x)),
            Problem::Brockett { a, weights } => {
                // tr(X^T A X N) with diagonal N: sum_j w_j * (x_j^T A x_j).
                let ax = a * x;
                (0..weights.len())
                    .map(|j| weights[j] * x.column(j).dot(&ax.column(j)))
                    .sum()
            }
            Problem::Procrustes { a, b } => (a * x - b).norm_squared(),
        })
    }

    /// Euclidean gradient in the ambient space.
    pub fn euclidean_grad(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_point(x, "euclidean_grad")?;
        Ok(match self {
            Problem::Rayleigh { a } => a * x * -2.0,
            Problem::Brockett { a, weights } => {
                let mut g = a * x * 2.0;
                for (j, w) in weights.iter().enumerate() {
                    g.column_mut(j).scale_mut(*w);
                }
                g
            }
            Problem::Procrustes { a, b } => a.transpose() * (a * x - b) * 2.0,
        })
    }

    /// Gradient in the manifold's tangent space: ambient gradient projected.
    pub fn riemannian_grad(&self, m: &Manifold, x: &DenseMatrix) -> Result<DenseMatrix> {
        m.riemannian_gradient(x, &self.euclidean_grad(x)?)
    }

    /// Reference optimum. Closed-form (eigendecomposition / SVD) where one
    /// exists; unbalanced Procrustes falls back to a long multi-start
    /// gradient-descent run and is tagged "numerical".
    pub fn oracle(&self) -> Result<OracleInfo> {
        match self {
            Problem::Rayleigh { a } => {
                let (values, vectors) = matops::sym_eig(a)?;
                let n = values.len();
                let x_star = DenseMatrix::from_column_slice(
                    n,
                    1,
                    vectors.column(n - 1).as_slice(),
                );
                Ok(OracleInfo {
                    f_star: -values[n - 1],
                    x_star: Some(x_star),
                    method: "eigendecomposition",
                })
            }
            Problem::Brockett { a, weights } => self.brockett_oracle(a, weights),
            Problem::Procrustes { a, b } => {
                if a.ncols() == b.ncols() {
                    // Balanced case: the minimizer over the orthogonal group
                    // is the orthonormal polar factor of A^T B.
                    let cross = a.transpose() * b;
                    let (u, sigma, v) = matops::svd_thin(&cross)?;
                    let max = sigma.first().copied().unwrap_or(0.0);
                    let min = sigma.last().copied().unwrap_or(0.0);
                    if !(max > 0.0) || min <= CROSS_PRODUCT_RTOL * max {
                        return Err(Error::SingularCrossProduct);
                    }
                    let x_star = u * v.transpose();
                    let f_star = self.value(&x_star)?;
                    Ok(OracleInfo {
                        f_star,
                        x_star: Some(x_star),
                        method: "svd closed form",
                    })
                } else {
                    self.procrustes_numerical_oracle(a, b)
                }
            }
        }
    }

    /// Eigendecomposition oracle for the Brockett cost. Which eigenvector
    /// goes in which column depends on pairing weights with eigenvalues; up
    /// to 4 columns every permutation is tried, beyond that the sorted
    /// pairing (largest weight with smallest eigenvalue) is used.
    fn brockett_oracle(&self, a: &DenseMatrix, weights: &[f64]) -> Result<OracleInfo> {
        let m = weights.len();
        let (_, vectors) = matops::sym_eig(a)?;
        let n = vectors.nrows();
        // Candidate columns: eigenvectors of the m smallest eigenvalues.
        let build = |perm: &[usize]| {
            let mut x = DenseMatrix::zeros(n, m);
            for (j, &src) in perm.iter().enumerate() {
                x.set_column(j, &vectors.column(src));
            }
            x
        };
        let (x_star, method) = if m <= BRUTE_FORCE_MAX_COLS {
            let mut perm: Vec<usize> = (0..m).collect();
            let mut best: Option<(f64, DenseMatrix)> = None;
            permute(&mut perm, 0, &mut |p| {
                let x = build(p);
                let f = self.value(&x).expect("shape fixed by construction");
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, x));
                }
            });
            let (_, x) = best.expect("at least one permutation");
            (x, "eigendecomposition, permutation-validated pairing")
        } else {
            // Ascending weights pair with descending eigenvalues among the m
            // smallest: column j gets eigenvector m-1-j.
            let perm: Vec<usize> = (0..m).rev().collect();
            (build(&perm), "eigendecomposition, sorted pairing")
        };
        let f_star = self.value(&x_star)?;
        Ok(OracleInfo {
            f_star,
            x_star: Some(x_star),
            method,
        })
    }

    /// Long multi-start projected gradient descent; trusted reference, not a
    /// certificate of global optimality.
    fn procrustes_numerical_oracle(&self, a: &DenseMatrix, b: &DenseMatrix) -> Result<OracleInfo> {
        let manifold = Manifold::stiefel(a.ncols(), b.ncols())?;
        // Step size from the smoothness constant 2 sigma_max(A)^2.
        let (_, sigma, _) = matops::svd_thin(a)?;
        let smax = sigma.first().copied().unwrap_or(1.0).max(1e-12);
        let h = 0.25 / (smax * smax);
        let iters = 50_000;
        let mut best: Option<(f64, DenseMatrix)> = None;
        for restart in 0..3u64 {
            let mut x = manifold.random_point(0x0a_c1e5 + restart);
            for _ in 0..iters {
                let g = self.riemannian_grad(&manifold, &x)?;
                x = manifold.retract(&x, &(g * -h))?;
            }
            let f = self.value(&x)?;
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
        let (f_star, x_star) = best.expect("restarts ran");
        Ok(OracleInfo {
            f_star,
            x_star: Some(x_star),
            method: "numerical",
        })
    }
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Symmetric matrix with a prescribed spectrum and a seeded random
/// orthonormal eigenbasis: Q diag(spectrum) Q^T.
pub fn gen_symmetric(spectrum: &[f64], seed: u64) -> Result<DenseMatrix> {
    if spectrum.is_empty() {
        return Err(Error::ShapeInvalid("empty spectrum".to_string()));
    }
    if spectrum.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("gen_symmetric spectrum"));
    }
    let n = spectrum.len();
    let mut attempt = seed;
    let q = loop {
        match matops::qf(&manifold::gaussian_matrix(n, n, attempt)) {
            Ok(q) => break q,
            Err(_) => attempt = attempt.wrapping_add(1),
        }
    };
    let d = DenseMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(spectrum));
    let a = &q * d * q.transpose();
    Ok((&a + a.transpose()) * 0.5)
}

/// Procrustes instance with a planted solution: A is Gaussian l x n, X0 is a
/// random Stiefel point, B = A X0 + sigma * noise. Returns (A, B, X0); with
/// sigma = 0 the optimal value is exactly 0 at X0.
pub fn gen_procrustes_planted(
    l: usize,
    n: usize,
    m: usize,
    sigma: f64,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    if n < m || l < n {
        return Err(Error::ShapeInvalid(format!(
            "procrustes generator needs l >= n >= m >= 1, got l={l}, n={n}, m={m}"
        )));
    }
    if m < 1 {
        return Err(Error::ShapeInvalid("procrustes generator needs m >= 1".into()));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::ConfigInvalid(format!(
            "noise level must be finite and >= 0, got {sigma}"
        )));
    }
    let a = manifold::gaussian_matrix(l, n, seed);
    let x0 = Manifold::stiefel(n, m)?.random_point(seed.wrapping_add(1));
    let mut b = &a * &x0;
    if sigma > 0.0 {
        b += manifold::gaussian_matrix(l, m, seed.wrapping_add(2)) * sigma;
    }
    Ok((a, b, x0))
}

/// Procrustes instance without the planted point; see
/// [`gen_procrustes_planted`].
pub fn gen_procrustes(
    l: usize,
    n: usize,
    m: usize,
    sigma: f64,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    gen_procrustes_planted(l, n, m, sigma, seed).map(|(a, b, _)| (a, b))
}

/// Log-spaced spectrum in [1/kappa, 1] * scale... kept simple: n values
/// log-spaced from `lo` to `hi` inclusive.
pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo, "log_spaced wants n>=2, hi>lo>0");
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
