//! Gauss–Legendre quadrature with panel subdivision.
//!
//! The oscillatory Hankel-type integrals behind the real-space kernel
//! evaluator are handled by splitting the half-line into panels shorter
//! than the local oscillation length and applying a fixed-order
//! Gauss–Legendre rule on each.  Convergence is then verified by doubling
//! the panel count until two successive refinements agree, which yields
//! an honest a-posteriori error estimate instead of a hoped-for one.

use std::sync::OnceLock;

use crate::error::{FksError, Result};

/// Orders for which node tables are precomputed.
const CACHED_ORDERS: [usize; 4] = [8, 16, 24, 32];

/// Legendre polynomial value and derivative at `x` by the three-term
/// recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Compute Gauss–Legendre nodes and weights on `(-1, 1)` by Newton
/// iteration from the Chebyshev-like initial guesses.
fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Enforce exact symmetry so reversed panels integrate identically.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let node = 0.5 * (nodes[j] - nodes[i]);
        let weight = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -node;
        nodes[j] = node;
        weights[i] = weight;
        weights[j] = weight;
    }
    (nodes, weights)
}

/// Cached Gauss–Legendre rule of the given order.
///
/// Orders 8, 16, 24 and 32 are precomputed once per process; other
/// orders are rejected so call sites stay on the vetted tables.
pub fn gauss_legendre(order: usize) -> Result<(&'static [f64], &'static [f64])> {
    static TABLES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        CACHED_ORDERS
            .iter()
            .map(|&n| compute_gauss_legendre(n))
            .collect()
    });
    match CACHED_ORDERS.iter().position(|&n| n == order) {
        Some(slot) => {
            let (nodes, weights) = &tables[slot];
            Ok((nodes, weights))
        }
        None => Err(FksError::InvalidParam(format!(
            "Gauss-Legendre order {order} is not cached (use one of {CACHED_ORDERS:?})"
        ))),
    }
}

/// Integrate `f` over each interval `[edges[i], edges[i+1]]` with a
/// fixed-order Gauss–Legendre rule and sum the results.
pub fn integrate_panels(
    f: &mut impl FnMut(f64) -> f64,
    edges: &[f64],
    order: usize,
) -> Result<f64> {
    if edges.len() < 2 {
        return Err(FksError::InvalidParam(
            "panel integration needs at least two edges".into(),
        ));
    }
    let (nodes, weights) = gauss_legendre(order)?;
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (&x, &w) in nodes.iter().zip(weights) {
            acc += w * f(mid + half * x);
        }
        total += half * acc;
    }
    Ok(total)
}

/// Result of an adaptive panel integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    /// Converged value of the integral.
    pub value: f64,
    /// A-posteriori error estimate: the difference between the last two
    /// refinement levels.
    pub error_estimate: f64,
}

/// Integrate over the given panel decomposition, doubling the number of
/// subpanels per interval until two successive levels agree to `abs_tol`.
///
/// Returns the refined value together with the achieved error estimate,
/// or [`FksError::QuadratureNonConvergence`] carrying the best achieved
/// estimate if `max_doublings` levels are exhausted.
pub fn integrate_adaptive(
    f: &mut impl FnMut(f64) -> f64,
    edges: &[f64],
    order: usize,
    abs_tol: f64,
    max_doublings: usize,
) -> Result<QuadResult> {
    if !(abs_tol > 0.0) {
        return Err(FksError::InvalidParam(format!(
            "quadrature tolerance must be positive, got {abs_tol}"
        )));
    }
    let mut splits = 1usize;
    let mut prev = integrate_split(f, edges, order, splits)?;
    let mut best_err = f64::INFINITY;
    for _ in 0..max_doublings {
        splits *= 2;
        let next = integrate_split(f, edges, order, splits)?;
        best_err = (next - prev).abs();
        prev = next;
        if best_err < abs_tol {
            return Ok(QuadResult {
                value: next,
                error_estimate: best_err,
            });
        }
    }
    Err(FksError::QuadratureNonConvergence {
        achieved: best_err,
        tol: abs_tol,
    })
}

/// Panel integration with each interval split into `splits` equal parts.
fn integrate_split(
    f: &mut impl FnMut(f64) -> f64,
    edges: &[f64],
    order: usize,
    splits: usize,
) -> Result<f64> {
    if edges.len() < 2 {
        return Err(FksError::InvalidParam(
            "panel integration needs at least two edges".into(),
        ));
    }
    let (nodes, weights) = gauss_legendre(order)?;
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let step = (b - a) / splits as f64;
        for s in 0..splits {
            let lo = a + step * s as f64;
            let mid = lo + 0.5 * step;
            let half = 0.5 * step;
            let mut acc = 0.0;
            for (&x, &w) in nodes.iter().zip(weights) {
                acc += w * f(mid + half * x);
            }
            total += half * acc;
        }
    }
    Ok(total)
}

/// Geometrically spaced edges from `a` to `b` (both positive), `count`
/// intervals.  Used for radial panelings that must resolve behavior near
/// the origin without wasting panels far out.
pub fn geometric_edges(a: f64, b: f64, count: usize) -> Result<Vec<f64>> {
    if !(a > 0.0 && b > a) || count == 0 {
        return Err(FksError::InvalidParam(format!(
            "geometric edges need 0 < a < b and count >= 1, got a={a}, b={b}, count={count}"
        )));
    }
    let ratio = (b / a).powf(1.0 / count as f64);
    let mut edges = Vec::with_capacity(count + 1);
    let mut x = a;
    for _ in 0..count {
        edges.push(x);
        x *= ratio;
    }
    edges.push(b);
    Ok(edges)
}

/// Linearly spaced edges from `a` to `b`, `count` intervals.
pub fn linear_edges(a: f64, b: f64, count: usize) -> Result<Vec<f64>> {
    if !(b > a) || count == 0 {
        return Err(FksError::InvalidParam(format!(
            "linear edges need a < b and count >= 1, got a={a}, b={b}, count={count}"
        )));
    }
    let step = (b - a) / count as f64;
    let mut edges: Vec<f64> = (0..count).map(|i| a + step * i as f64).collect();
    edges.push(b);
    Ok(edges)
}
