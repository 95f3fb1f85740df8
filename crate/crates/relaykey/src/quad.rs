//! Adaptive quadrature on finite intervals.
//!
//! Each panel is integrated with a 15-point Gauss-Legendre rule; the error
//! estimate is the difference between the whole-panel value and the sum over
//! its two halves, and panels are bisected until the local share of the
//! tolerance is met.

use crate::{ModelError, Result};
use std::sync::OnceLock;

const N: usize = 15;

fn gl15() -> &'static ([f64; N], [f64; N]) {
    static TABLE: OnceLock<([f64; N], [f64; N])> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Legendre roots by Newton iteration, weights 2 / ((1-x^2) P'(x)^2).
        let mut xs = [0.0; N];
        let mut ws = [0.0; N];
        let n = N as f64;
        for i in 0..N {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(x);
            xs[i] = x;
            ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (xs, ws)
    })
}

fn legendre(x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=N {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = (N as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (xs, ws) = gl15();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for i in 0..N {
        acc += ws[i] * f(mid + half * xs[i]);
    }
    acc * half
}

struct Ctx<'a, F> {
    f: &'a F,
    eps_rel: f64,
    worst_err: f64,
}

fn recurse<F: Fn(f64) -> f64>(ctx: &mut Ctx<F>, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = panel(ctx.f, a, mid);
    let right = panel(ctx.f, mid, b);
    let refined = left + right;
    let err = (whole - refined).abs();
    if err <= tol.max(ctx.eps_rel * refined.abs()) || depth >= 52 || mid <= a || mid >= b {
        if depth >= 52 {
            ctx.worst_err = ctx.worst_err.max(err);
        }
        return refined + (refined - whole) / 15.0;
    }
    recurse(ctx, a, mid, left, 0.5 * tol, depth + 1) + recurse(ctx, mid, b, right, 0.5 * tol, depth + 1)
}

/// Integrates `f` over [a, b] to absolute tolerance `eps_abs` (with a
/// relative-tolerance escape hatch `eps_rel` for large values).
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps_abs: f64, eps_rel: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(ModelError::Domain("quadrature endpoints must be finite".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut ctx = Ctx { f: &f, eps_rel, worst_err: 0.0 };
    let whole = panel(&f, a, b);
    let v = recurse(&mut ctx, a, b, whole, eps_abs, 0);
    if ctx.worst_err > eps_abs.max(eps_rel * v.abs()) * 100.0 {
        return Err(ModelError::Quadrature { err: ctx.worst_err, tol: eps_abs });
    }
    Ok(v)
}

/// Integrates over [a, b] split at the given interior breakpoints (useful when
/// the integrand has a known kink or near-step).
pub fn adaptive_split<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    eps_abs: f64,
    eps_rel: f64,
) -> Result<f64> {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|x| *x > a && *x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += adaptive(&f, w[0], w[1], eps_abs / (pts.len() - 1) as f64, eps_rel)?;
    }
    Ok(total)
}
