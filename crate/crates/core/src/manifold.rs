//! Geometry of the unit sphere and the Stiefel manifold, embedded in
//! Euclidean matrix space.
//!
//! Points are plain [`DenseMatrix`] values: n x 1 columns on the sphere
//! S^{n-1}, n x m matrices with orthonormal columns on St(n, m). Tangent
//! vectors live in the same ambient space and are kept tangent by explicit
//! projection; [`Manifold::tangency_violation`] measures how well that is
//! holding up.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matops::{self, DenseMatrix};

/// How ambient points are pulled back onto the manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointProjection {
    /// y / ||y||; sphere only.
    Normalize,
    /// Orthonormal polar factor via SVD; Stiefel only.
    Polar,
    /// Orthonormal factor of the positive-diagonal QR; Stiefel only.
    Qf,
    /// Truncated series for the polar factor; Stiefel only, valid only near
    /// the manifold.
    PolarSeries { order: usize },
}

/// How tangent steps are mapped back onto the manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetractionMethod {
    /// Exact geodesic flow; sphere only.
    Exponential,
    /// (x + v) / ||x + v||; sphere only.
    ProjectiveNormalize,
    /// (X + V)(I + V^T V)^{-1/2}; Stiefel only.
    Polar,
    /// qf(X + V); Stiefel only.
    Qf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    /// S^{n-1} embedded in R^n, points stored n x 1.
    Sphere { n: usize },
    /// St(n, m): n x m matrices with orthonormal columns, n >= m.
    Stiefel { n: usize, m: usize },
}

/// A manifold together with its configured projection and retraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifold {
    shape: Shape,
    projection: PointProjection,
    retraction: RetractionMethod,
}

/// Angle below which the sphere exponential map and parallel transport
/// switch to their small-angle limits.
const SMALL_ANGLE: f64 = 1e-8;
/// 1 + x^T y below this counts as antipodal; transport refuses.
const ANTIPODAL_TOL: f64 = 1e-8;
/// Norm below which a projected random tangent draw is considered degenerate.
const DEGENERATE_DRAW: f64 = 1e-8;

impl Manifold {
    /// Unit sphere in R^n with the exponential retraction.
    pub fn sphere(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::ShapeInvalid(format!(
                "sphere needs ambient dimension >= 2, got {n}"
            )));
        }
        Ok(Self {
            shape: Shape::Sphere { n },
            projection: PointProjection::Normalize,
            retraction: RetractionMethod::Exponential,
        })
    }

    /// Stiefel manifold St(n, m) with polar projection and retraction.
    pub fn stiefel(n: usize, m: usize) -> Result<Self> {
        if m < 1 || n < m {
            return Err(Error::ShapeInvalid(format!(
                "Stiefel needs n >= m >= 1, got n={n}, m={m}"
            )));
        }
        Ok(Self {
            shape: Shape::Stiefel { n, m },
            projection: PointProjection::Polar,
            retraction: RetractionMethod::Polar,
        })
    }

    /// Replace the point projection, rejecting combinations that do not
    /// apply to this manifold.
    pub fn with_projection(mut self, projection: PointProjection) -> Result<Self> {
        let ok = match self.shape {
            Shape::Sphere { .. } => matches!(projection, PointProjection::Normalize),
            Shape::Stiefel { .. } => match projection {
                PointProjection::Normalize => false,
                PointProjection::Polar | PointProjection::Qf => true,
                PointProjection::PolarSeries { order } => (1..=3).contains(&order),
            },
        };
        if !ok {
            return Err(Error::ConfigInvalid(format!(
                "projection {:?} does not apply to {:?}",
                projection, self.shape
            )));
        }
        self.projection = projection;
        Ok(self)
    }

    /// Replace the retraction, rejecting combinations that do not apply.
    pub fn with_retraction(mut self, retraction: RetractionMethod) -> Result<Self> {
        let ok = match self.shape {
            Shape::Sphere { .. } => matches!(
                retraction,
                RetractionMethod::Exponential | RetractionMethod::ProjectiveNormalize
            ),
            Shape::Stiefel { .. } => {
                matches!(retraction, RetractionMethod::Polar | RetractionMethod::Qf)
            }
        };
        if !ok {
            return Err(Error::ConfigInvalid(format!(
                "retraction {:?} does not apply to {:?}",
                retraction, self.shape
            )));
        }
        self.retraction = retraction;
        Ok(self)
    }

    pub fn projection(&self) -> PointProjection {
        self.projection
    }

    pub fn retraction(&self) -> RetractionMethod {
        self.retraction
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.shape, Shape::Sphere { .. })
    }

    /// Ambient shape of points: (n, 1) on the sphere, (n, m) on Stiefel.
    pub fn point_shape(&self) -> (usize, usize) {
        match self.shape {
            Shape::Sphere { n } => (n, 1),
            Shape::Stiefel { n, m } => (n, m),
        }
    }

    /// Intrinsic dimension, for reporting.
    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Sphere { n } => n - 1,
            Shape::Stiefel { n, m } => n * m - m * (m + 1) / 2,
        }
    }

    fn check_shape(&self, y: &DenseMatrix, context: &'static str) -> Result<()> {
        let expected = self.point_shape();
        if y.shape() != expected {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("{}x{}", expected.0, expected.1),
                got: format!("{}x{}", y.nrows(), y.ncols()),
            });
        }
        Ok(())
    }

    /// Pull an ambient point onto the manifold with the configured method.
    pub fn project_point(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_shape(y, "project_point")?;
        matops::ensure_finite(y, "project_point input")?;
        match self.shape {
            Shape::Sphere { .. } => {
                let norm = y.norm();
                if !(norm > 0.0) {
                    return Err(Error::DegenerateInput("cannot normalize the zero vector"));
                }
                Ok(y / norm)
            }
            Shape::Stiefel { .. } => match self.projection {
                PointProjection::Polar => matops::polar_factor(y).map_err(|e| match e {
                    Error::RankDeficient(_) => {
                        Error::DegenerateInput("rank-deficient point has no unique polar factor")
                    }
                    other => other,
                }),
                PointProjection::Qf => matops::qf(y).map_err(|e| match e {
                    Error::RankDeficient(_) => {
                        Error::DegenerateInput("rank-deficient point has no QR projection")
                    }
                    other => other,
                }),
                PointProjection::PolarSeries { order } => matops::polar_factor_series(y, order),
                PointProjection::Normalize => unreachable!("rejected at construction"),
            },
        }
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at x.
    ///
    /// Sphere: z - (x^T z) x. Stiefel: z - x sym(x^T z).
    pub fn project_tangent(&self, x: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_shape(x, "project_tangent base")?;
        self.check_shape(z, "project_tangent vector")?;
        match self.shape {
            Shape::Sphere { .. } => {
                let dot = x.dot(z);
                Ok(z - x * dot)
            }
            Shape::Stiefel { .. } => {
                let xtz = x.transpose() * z;
                let sym = (&xtz + xtz.transpose()) * 0.5;
                Ok(z - x * sym)
            }
        }
    }

    /// Map a tangent step onto the manifold with the configured retraction.
    pub fn retract(&self, x: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_shape(x, "retract base")?;
        self.check_shape(v, "retract step")?;
        matops::ensure_finite(v, "retract step")?;
        match self.retraction {
            RetractionMethod::Exponential => {
                let theta = v.norm();
                let w = if theta < SMALL_ANGLE {
                    // cos(theta) ~ 1 and sin(theta)/theta ~ 1 - theta^2/6 to
                    // well below f64 resolution at this scale.
                    x + v * (1.0 - theta * theta / 6.0)
                } else {
                    x * theta.cos() + v * (theta.sin() / theta)
                };
                // The combination has unit norm only for an exactly unit base
                // and exactly tangent step; renormalizing costs one digit of
                // nothing and stops per-step roundoff from compounding.
                let norm = w.norm();
                if !(norm > 0.0) {
                    return Err(Error::DegenerateInput("retraction step cancels the point"));
                }
                Ok(w / norm)
            }
            RetractionMethod::ProjectiveNormalize => {
                let w = x + v;
                let norm = w.norm();
                if !(norm > 0.0) {
                    return Err(Error::DegenerateInput("retraction step cancels the point"));
                }
                Ok(w / norm)
            }
            RetractionMethod::Polar => {
                // Polar factor of X + V. For a tangent step off an orthonormal
                // base this equals (X + V)(I + V^T V)^{-1/2}; taking the polar
                // of the sum itself also absorbs any drift the base has
                // accumulated, where the closed form would let it compound.
                matops::polar_factor(&(x + v))
            }
            RetractionMethod::Qf => matops::qf(&(x + v)),
        }
    }

    /// Carry a tangent vector at `from` to the tangent space at `to`.
    ///
    /// On the sphere with the exponential retraction this is exact parallel
    /// transport along the minimal geodesic; every other configuration uses
    /// orthogonal projection onto the tangent space at `to`.
    pub fn transport(
        &self,
        from: &DenseMatrix,
        to: &DenseMatrix,
        w: &DenseMatrix,
    ) -> Result<DenseMatrix> {
        self.check_shape(from, "transport source")?;
        self.check_shape(to, "transport target")?;
        self.check_shape(w, "transport vector")?;
        if self.is_sphere() && self.retraction == RetractionMethod::Exponential {
            let dot = from.dot(to).clamp(-1.0, 1.0);
            if 1.0 + dot <= ANTIPODAL_TOL {
                return Err(Error::AntipodalPoints);
            }
            // cos and sin of the angle are taken as the dot product and the
            // norm of the tangential residual; recovering the angle through
            // acos and re-applying cos/sin loses ~1/sin(theta) digits near
            // zero and lets roundoff pump a radial component into
            // transported velocities.
            let residual = to - from * dot;
            let sin_t = residual.norm();
            if sin_t < SMALL_ANGLE {
                return Ok(w.clone());
            }
            // u is the unit tangent at `from` pointing toward `to`.
            let u = residual / sin_t;
            let along = u.dot(w);
            Ok(w + &u * ((dot - 1.0) * along) - from * (sin_t * along))
        } else {
            self.project_tangent(to, w)
        }
    }

    /// Riemannian gradient from a Euclidean one: orthogonal projection onto
    /// the tangent space (the metric is inherited from the embedding).
    pub fn riemannian_gradient(
        &self,
        x: &DenseMatrix,
        euclidean_grad: &DenseMatrix,
    ) -> Result<DenseMatrix> {
        self.project_tangent(x, euclidean_grad)
    }

    /// Distance from the constraint set: | ||y|| - 1 | on the sphere,
    /// ||Y^T Y - I||_F on Stiefel. Panics on wrong shape.
    pub fn constraint_violation(&self, y: &DenseMatrix) -> f64 {
        assert_eq!(y.shape(), self.point_shape(), "constraint_violation shape");
        match self.shape {
            Shape::Sphere { .. } => (y.norm() - 1.0).abs(),
            Shape::Stiefel { m, .. } => {
                (y.transpose() * y - DenseMatrix::identity(m, m)).norm()
            }
        }
    }

    /// How far v is from the tangent space at x: |x^T v| on the sphere,
    /// ||sym(X^T V)||_F on Stiefel. Panics on wrong shape.
    pub fn tangency_violation(&self, x: &DenseMatrix, v: &DenseMatrix) -> f64 {
        assert_eq!(x.shape(), self.point_shape(), "tangency_violation shape");
        assert_eq!(v.shape(), self.point_shape(), "tangency_violation shape");
        match self.shape {
            Shape::Sphere { .. } => x.dot(v).abs(),
            Shape::Stiefel { .. } => {
                let xtv = x.transpose() * v;
                ((&xtv + xtv.transpose()) * 0.5).norm()
            }
        }
    }

    /// Deterministic point on the manifold: a seeded Gaussian draw projected
    /// by the canonical projection (normalize / polar), retrying with an
    /// incremented seed on a degenerate draw.
    pub fn random_point(&self, seed: u64) -> DenseMatrix {
        let (rows, cols) = self.point_shape();
        let mut attempt = seed;
        loop {
            let g = gaussian_matrix(rows, cols, attempt);
            let projected = match self.shape {
                Shape::Sphere { .. } => {
                    let norm = g.norm();
                    if norm > DEGENERATE_DRAW {
                        Some(g / norm)
                    } else {
                        None
                    }
                }
                Shape::Stiefel { .. } => matops::polar_factor(&g).ok(),
            };
            if let Some(p) = projected {
                return p;
            }
            attempt = attempt.wrapping_add(1);
        }
    }

    /// Deterministic tangent vector at x with the requested norm (zero norm
    /// gives the zero vector). Retries with an incremented seed if the
    /// projected draw degenerates.
    pub fn random_tangent(&self, x: &DenseMatrix, seed: u64, norm: f64) -> Result<DenseMatrix> {
        self.check_shape(x, "random_tangent base")?;
        let (rows, cols) = self.point_shape();
        if norm == 0.0 {
            return Ok(DenseMatrix::zeros(rows, cols));
        }
        let mut attempt = seed;
        loop {
            let g = gaussian_matrix(rows, cols, attempt);
            let t = self.project_tangent(x, &g)?;
            let tnorm = t.norm();
            if tnorm > DEGENERATE_DRAW {
                return Ok(t * (norm / tnorm));
            }
            attempt = attempt.wrapping_add(1);
        }
    }
}

/// Seeded standard-Gaussian matrix, filled in row-major order so the draw is
/// reproducible across backends.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    DenseMatrix::from_row_slice(rows, cols, &data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn col(data: &[f64]) -> DenseMatrix {
        DenseMatrix::from_column_slice(data.len(), 1, data)
    }

    #[test]
    fn sphere_projection_normalizes() {
        let m = Manifold::sphere(2).unwrap();
        let p = m.project_point(&col(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(p[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.8, epsilon = 1e-15);
        assert!(matches!(
            m.project_point(&col(&[0.0, 0.0])),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn constructors_reject_bad_shapes_and_combos() {
        assert!(Manifold::sphere(1).is_err());
        assert!(Manifold::stiefel(2, 3).is_err());
        assert!(Manifold::stiefel(3, 0).is_err());
        assert!(Manifold::sphere(3)
            .unwrap()
            .with_projection(PointProjection::Polar)
            .is_err());
        assert!(Manifold::sphere(3)
            .unwrap()
            .with_retraction(RetractionMethod::Qf)
            .is_err());
        assert!(Manifold::stiefel(4, 2)
            .unwrap()
            .with_retraction(RetractionMethod::Exponential)
            .is_err());
        assert!(Manifold::stiefel(4, 2)
            .unwrap()
            .with_projection(PointProjection::PolarSeries { order: 4 })
            .is_err());
    }

    #[test]
    fn sphere_tangent_projection_removes_radial_part() {
        let m = Manifold::sphere(3).unwrap();
        let x = col(&[1.0, 0.0, 0.0]);
        let z = col(&[2.0, 1.0, -1.0]);
        let t = m.project_tangent(&x, &z).unwrap();
        assert_abs_diff_eq!(t[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[2], -1.0, epsilon = 1e-15);
        // Idempotent.
        let t2 = m.project_tangent(&x, &t).unwrap();
        assert!((t2 - &t).norm() < 1e-15);
    }

    #[test]
    fn stiefel_tangent_projection_symmetric_part_vanishes() {
        let m = Manifold::stiefel(5, 2).unwrap();
        let x = m.random_point(3);
        let z = gaussian_matrix(5, 2, 4);
        let t = m.project_tangent(&x, &z).unwrap();
        assert!(m.tangency_violation(&x, &t) < 1e-14);
        let t2 = m.project_tangent(&x, &t).unwrap();
        assert!((t2 - &t).norm() < 1e-14);
    }

    #[test]
    fn tangent_projection_is_self_adjoint() {
        for (mf, seed) in [
            (Manifold::sphere(6).unwrap(), 10u64),
            (Manifold::stiefel(6, 3).unwrap(), 11u64),
        ] {
            let x = mf.random_point(seed);
            let (r, c) = mf.point_shape();
            let z = gaussian_matrix(r, c, seed + 1);
            let w = gaussian_matrix(r, c, seed + 2);
            let pz = mf.project_tangent(&x, &z).unwrap();
            let pw = mf.project_tangent(&x, &w).unwrap();
            assert_abs_diff_eq!(pz.dot(&w), z.dot(&pw), epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_exponential_quarter_circle() {
        let m = Manifold::sphere(2).unwrap();
        let x = col(&[1.0, 0.0]);
        let v = col(&[0.0, std::f64::consts::FRAC_PI_2]);
        let y = m.retract(&x, &v).unwrap();
        assert_abs_diff_eq!(y[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sphere_exponential_small_step_is_first_order() {
        let m = Manifold::sphere(2).unwrap();
        let x = col(&[1.0, 0.0]);
        let v = col(&[0.0, 1e-9]);
        let y = m.retract(&x, &v).unwrap();
        assert_abs_diff_eq!(y[1], 1e-9, epsilon = 1e-22);
        assert!(m.constraint_violation(&y) < 1e-15);
    }

    #[test]
    fn projective_normalize_retraction() {
        let m = Manifold::sphere(2)
            .unwrap()
            .with_retraction(RetractionMethod::ProjectiveNormalize)
            .unwrap();
        let x = col(&[1.0, 0.0]);
        let v = col(&[0.0, 1.0]);
        let y = m.retract(&x, &v).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(y[0], s, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], s, epsilon = 1e-15);
    }

    #[test]
    fn stiefel_retractions_zero_step_is_identity() {
        for method in [RetractionMethod::Polar, RetractionMethod::Qf] {
            let m = Manifold::stiefel(6, 2)
                .unwrap()
                .with_retraction(method)
                .unwrap();
            let x = m.random_point(7);
            let y = m.retract(&x, &DenseMatrix::zeros(6, 2)).unwrap();
            assert!((y - &x).norm() < 1e-12);
        }
    }

    #[test]
    fn retractions_land_on_manifold() {
        let sphere_cfgs = [
            RetractionMethod::Exponential,
            RetractionMethod::ProjectiveNormalize,
        ];
        for method in sphere_cfgs {
            let m = Manifold::sphere(8)
                .unwrap()
                .with_retraction(method)
                .unwrap();
            for seed in 0..5u64 {
                let x = m.random_point(seed);
                let v = m.random_tangent(&x, seed + 10, 0.7).unwrap();
                let y = m.retract(&x, &v).unwrap();
                assert!(m.constraint_violation(&y) < 1e-12);
            }
        }
        for method in [RetractionMethod::Polar, RetractionMethod::Qf] {
            let m = Manifold::stiefel(8, 3)
                .unwrap()
                .with_retraction(method)
                .unwrap();
            for seed in 0..5u64 {
                let x = m.random_point(seed);
                let v = m.random_tangent(&x, seed + 10, 0.7).unwrap();
                let y = m.retract(&x, &v).unwrap();
                assert!(m.constraint_violation(&y) < 1e-12);
            }
        }
    }

    #[test]
    fn retraction_first_order_slope() {
        // ||(R_x(t v) - x)/t - v|| must vanish linearly in t; the fitted
        // log-log slope over three decades stays near 1.
        let configs: Vec<Manifold> = vec![
            Manifold::sphere(10).unwrap(),
            Manifold::sphere(10)
                .unwrap()
                .with_retraction(RetractionMethod::ProjectiveNormalize)
                .unwrap(),
            Manifold::stiefel(10, 3).unwrap(),
            Manifold::stiefel(10, 3)
                .unwrap()
                .with_retraction(RetractionMethod::Qf)
                .unwrap(),
        ];
        for (i, m) in configs.iter().enumerate() {
            let x = m.random_point(40 + i as u64);
            let v = m.random_tangent(&x, 50 + i as u64, 1.0).unwrap();
            let ts = [1e-2, 1e-3, 1e-4];
            let errs: Vec<f64> = ts
                .iter()
                .map(|&t| {
                    let y = m.retract(&x, &(&v * t)).unwrap();
                    ((y - &x) / t - &v).norm()
                })
                .collect();
            let slope = crate::testutil::fit_slope(&ts, &errs);
            assert!(slope > 0.9, "slope {slope} for config {i}, errs {errs:?}");
        }
    }

    #[test]
    fn parallel_transport_quarter_circle() {
        let m = Manifold::sphere(3).unwrap();
        let x = col(&[1.0, 0.0, 0.0]);
        let y = col(&[0.0, 1.0, 0.0]);
        // The direction of travel rotates onto -x; the orthogonal direction
        // is untouched.
        let w = col(&[0.0, 1.0, 0.5]);
        let t = m.transport(&x, &y, &w).unwrap();
        assert_abs_diff_eq!(t[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn parallel_transport_is_isometric() {
        let m = Manifold::sphere(7).unwrap();
        for seed in 0..10u64 {
            let x = m.random_point(seed);
            let y = m.random_point(seed + 100);
            let w = m.random_tangent(&x, seed + 200, 1.3).unwrap();
            let t = m.transport(&x, &y, &w).unwrap();
            assert_abs_diff_eq!(t.norm(), w.norm(), epsilon = 1e-12);
            assert!(m.tangency_violation(&y, &t) < 1e-12);
        }
    }

    #[test]
    fn transport_rejects_antipodal_points() {
        let m = Manifold::sphere(3).unwrap();
        let x = col(&[1.0, 0.0, 0.0]);
        let y = col(&[-1.0, 0.0, 0.0]);
        let w = col(&[0.0, 1.0, 0.0]);
        assert!(matches!(
            m.transport(&x, &y, &w),
            Err(Error::AntipodalPoints)
        ));
    }

    #[test]
    fn projection_transport_used_off_exponential_sphere() {
        let m = Manifold::sphere(4)
            .unwrap()
            .with_retraction(RetractionMethod::ProjectiveNormalize)
            .unwrap();
        let x = m.random_point(1);
        let y = m.random_point(2);
        let w = m.random_tangent(&x, 3, 1.0).unwrap();
        let t = m.transport(&x, &y, &w).unwrap();
        let p = m.project_tangent(&y, &w).unwrap();
        assert!((t - p).norm() < 1e-15);
    }

    #[test]
    fn stiefel_transport_is_projection() {
        let m = Manifold::stiefel(6, 2).unwrap();
        let x = m.random_point(1);
        let y = m.random_point(2);
        let w = m.random_tangent(&x, 3, 1.0).unwrap();
        let t = m.transport(&x, &y, &w).unwrap();
        assert!(m.tangency_violation(&y, &t) < 1e-13);
        // Projection never grows a vector.
        assert!(t.norm() <= w.norm() + 1e-13);
    }

    #[test]
    fn random_draws_are_deterministic_and_on_manifold() {
        for m in [Manifold::sphere(9).unwrap(), Manifold::stiefel(9, 4).unwrap()] {
            let a = m.random_point(123);
            let b = m.random_point(123);
            assert_eq!(a, b);
            assert!(m.constraint_violation(&a) < 1e-12);
            let t1 = m.random_tangent(&a, 5, 2.5).unwrap();
            let t2 = m.random_tangent(&a, 5, 2.5).unwrap();
            assert_eq!(t1, t2);
            assert_abs_diff_eq!(t1.norm(), 2.5, epsilon = 1e-12);
            assert!(m.tangency_violation(&a, &t1) < 1e-12);
            let z = m.random_tangent(&a, 5, 0.0).unwrap();
            assert_eq!(z.norm(), 0.0);
        }
    }

    #[test]
    fn stiefel_with_m_one_matches_sphere() {
        // St(n, 1) is the sphere; every geometric operation must agree to
        // tight tolerance whichever module handles it.
        let n = 7;
        let sphere = Manifold::sphere(n)
            .unwrap()
            .with_retraction(RetractionMethod::ProjectiveNormalize)
            .unwrap();
        let stiefel = Manifold::stiefel(n, 1).unwrap();
        let tol = 1e-12;
        for seed in 0..8u64 {
            let y = gaussian_matrix(n, 1, seed);
            let ps = sphere.project_point(&y).unwrap();
            let pt = stiefel.project_point(&y).unwrap();
            assert!((&ps - &pt).norm() < tol, "point projection, seed {seed}");

            let z = gaussian_matrix(n, 1, seed + 30);
            let ts = sphere.project_tangent(&ps, &z).unwrap();
            let tt = stiefel.project_tangent(&pt, &z).unwrap();
            assert!((&ts - &tt).norm() < tol, "tangent projection, seed {seed}");

            let rs = sphere.retract(&ps, &ts).unwrap();
            let rt = stiefel.retract(&pt, &tt).unwrap();
            assert!((&rs - &rt).norm() < tol, "retraction, seed {seed}");

            // Both configurations transport by projection here.
            let w = gaussian_matrix(n, 1, seed + 60);
            let ws = sphere.project_tangent(&ps, &w).unwrap();
            let gs = sphere.transport(&ps, &rs, &ws).unwrap();
            let gt = stiefel.transport(&pt, &rt, &ws).unwrap();
            assert!((&gs - &gt).norm() < tol, "transport, seed {seed}");
        }
        // qf-based configuration agrees as well: qf of a column normalizes it.
        let stiefel_qf = Manifold::stiefel(n, 1)
            .unwrap()
            .with_projection(PointProjection::Qf)
            .unwrap()
            .with_retraction(RetractionMethod::Qf)
            .unwrap();
        let y = gaussian_matrix(n, 1, 99);
        let a = sphere.project_point(&y).unwrap();
        let b = stiefel_qf.project_point(&y).unwrap();
        assert!((&a - &b).norm() < tol);
    }

    #[test]
    fn gaussian_matrix_is_seed_deterministic() {
        let a = gaussian_matrix(4, 3, 7);
        let b = gaussian_matrix(4, 3, 7);
        assert_eq!(a, b);
        let c = gaussian_matrix(4, 3, 8);
        assert_ne!(a, c);
    }
}
