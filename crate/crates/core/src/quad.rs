//! Quadrature rules: generalized Gauss-Laguerre and Gauss-Legendre nodes via
//! Golub-Welsch, plus an adaptive Simpson integrator used as a fallback when
//! the fixed rules fail their self-consistency check.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

type RuleCache = Mutex<HashMap<(usize, i64), Arc<Vec<(f64, f64)>>>>;

static LAGUERRE_CACHE: OnceLock<RuleCache> = OnceLock::new();
static LEGENDRE_CACHE: OnceLock<RuleCache> = OnceLock::new();

/// Gamma function at a positive integer argument.
pub fn gamma_int(n: usize) -> f64 {
    assert!(n >= 1, "gamma_int requires n >= 1");
    let mut acc = 1.0_f64;
    for k in 2..n {
        acc *= k as f64;
    }
    acc
}

/// Nodes and weights of the symmetric tridiagonal Jacobi matrix with the
/// given diagonal and off-diagonal, with weights `scale * v0^2`.
fn golub_welsch(diag: &[f64], off: &[f64], scale: f64) -> Vec<(f64, f64)> {
    let n = diag.len();
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for (i, &d) in diag.iter().enumerate() {
        jacobi[(i, i)] = d;
    }
    for (i, &b) in off.iter().enumerate() {
        jacobi[(i, i + 1)] = b;
        jacobi[(i + 1, i)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (node, scale * v0 * v0)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Generalized Gauss-Laguerre rule of order `n` for the weight
/// `x^alpha * e^(-x)` on `[0, inf)`, with integer `alpha >= 0`.
pub fn gauss_laguerre(n: usize, alpha: usize) -> Arc<Vec<(f64, f64)>> {
    let cache = LAGUERRE_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, alpha as i64);
    if let Some(rule) = cache.lock().unwrap().get(&key) {
        return Arc::clone(rule);
    }
    let a = alpha as f64;
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + a + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| (k as f64 * (k as f64 + a)).sqrt()).collect();
    let rule = Arc::new(golub_welsch(&diag, &off, gamma_int(alpha + 1)));
    cache.lock().unwrap().insert(key, Arc::clone(&rule));
    rule
}

/// Gauss-Legendre rule of order `n` on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<Vec<(f64, f64)>> {
    let cache = LEGENDRE_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, -1);
    if let Some(rule) = cache.lock().unwrap().get(&key) {
        return Arc::clone(rule);
    }
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let kf = k as f64;
            kf / (4.0 * kf * kf - 1.0).sqrt()
        })
        .collect();
    let rule = Arc::new(golub_welsch(&diag, &off, 2.0));
    cache.lock().unwrap().insert(key, Arc::clone(&rule));
    rule
}

/// Integrates `f` over `[a, b]` with an `n`-point Gauss-Legendre rule.
pub fn integrate_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Regularized upper incomplete gamma Q(n, x) for integer n.
pub fn gamma_tail(n: usize, x: f64) -> f64 {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for k in 1..n {
        term *= x / k as f64;
        sum += term;
    }
    (-x).exp() * sum
}

/// Smallest x with Q(n, x) below `tail`.
pub fn gamma_tail_cutoff(n: usize, tail: f64) -> f64 {
    let mut lo = 1.0_f64;
    let mut hi = 2.0_f64;
    while gamma_tail(n, hi) > tail {
        hi *= 2.0;
        if hi > 1e6 {
            return hi;
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gamma_tail(n, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Result of an adaptive integration; `converged` is false when the depth
/// limit was hit anywhere.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveResult {
    pub value: f64,
    pub converged: bool,
}

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    converged: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || !delta.is_finite() {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *converged = false;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1, converged)
        + simpson_step(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1, converged)
}

/// Adaptive Simpson integration of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> AdaptiveResult {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut converged = true;
    let value = simpson_step(&f, a, fa, b, fb, fm, whole, tol, 60, &mut converged);
    AdaptiveResult { value, converged }
}
