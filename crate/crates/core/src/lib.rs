//! Accelerated first-order optimization on embedded manifolds.
//!
//! The crate provides momentum integrators with polynomial convergence rates
//! for smooth objectives constrained to the unit sphere and the Stiefel
//! manifold, plus a Riemannian gradient-descent baseline and a small
//! experiment harness that writes deterministic CSV traces.

// Checks written as `!(x > 0.0)` reject NaN along with out-of-range values;
// the positive-comparison rewrite clippy suggests would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod integrators;
pub mod manifold;
pub mod matops;
pub mod problems;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    /// Least-squares slope of ln(err) against ln(t); order-of-accuracy fits.
    pub(crate) fn fit_slope(ts: &[f64], errs: &[f64]) -> f64 {
        let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.max(1e-300).ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        cov / var
    }
}
