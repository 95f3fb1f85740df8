//! Optimizers for the probing/broadcast power split `beta`.
//!
//! Three routes to a "best" split:
//! - brute-force scan of the exact throughput on a 0.001 grid;
//! - gradient ascent on the closed-form throughput lower bound (valid inside
//!   its proven unimodality region, with a grid fallback outside it);
//! - Newton-Raphson with a bisection safeguard for the outage-constrained
//!   key-rate maximum, which sits where the outage constraint is active.

use crate::rate::{
    key_rate_m, lb_unimodal, outage_probability, outage_probability_dbeta, throughput_lower_bound,
    throughput_with, LosWeight,
};
use crate::{domain_err, LosParam, ModelError, Result};

/// How a reported optimum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    GridThroughput,
    GradientLowerBound,
    GridLowerBound,
    NewtonConstrained,
    GridConstrained,
}

#[derive(Debug, Clone, Copy)]
pub struct OptResult {
    pub beta_star: f64,
    /// Objective value at `beta_star` (throughput, bound, or key rate
    /// depending on the method).
    pub objective: f64,
    pub iterations: u32,
    pub converged: bool,
    pub method: OptMethod,
}

const GRID_STEP: f64 = 1e-3;

fn grid_argmax(mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64, u32)> {
    let mut best_beta = GRID_STEP;
    let mut best = f64::NEG_INFINITY;
    let mut n = 0;
    for i in 1..1000 {
        let beta = i as f64 * GRID_STEP;
        let v = f(beta)?;
        n += 1;
        if v > best {
            best = v;
            best_beta = beta;
        }
    }
    Ok((best_beta, best, n))
}

/// Exhaustive 0.001-grid maximization of the exact throughput
/// `M(beta) * (1 - P_out(beta))`. Ties resolve toward the smaller `beta`.
pub fn optimize_throughput_grid(c: LosParam, rho: f64, weight: LosWeight) -> Result<OptResult> {
    let (beta_star, objective, iterations) =
        grid_argmax(|beta| throughput_with(weight, c, rho, beta))?;
    Ok(OptResult { beta_star, objective, iterations, converged: true, method: OptMethod::GridThroughput })
}

/// Maximizes the closed-form throughput lower bound.
///
/// Inside the proven unimodality region (`(1-c)/2 * rho > 1.862`) this hill-
/// climbs from `beta = 0.5` in fixed 0.001 steps along the sign of the
/// central-difference gradient until the gradient changes sign (the bound is
/// extremely flat near its peak, so a gradient-proportional step would stall
/// early), then polishes the bracketed optimum by bisecting the gradient.
/// Outside the region it falls back to the 0.001 grid scan.
pub fn optimize_lower_bound(c: LosParam, rho: f64) -> Result<OptResult> {
    let f = |b: f64| throughput_lower_bound(c, rho, b);
    if !lb_unimodal(c, rho) {
        let (beta_star, objective, iterations) = grid_argmax(f)?;
        return Ok(OptResult {
            beta_star,
            objective,
            iterations,
            converged: true,
            method: OptMethod::GridLowerBound,
        });
    }
    const H: f64 = 1e-6;
    const LO: f64 = 1e-3;
    const HI: f64 = 0.999;
    let grad = |b: f64| -> Result<f64> {
        let (bl, bh) = ((b - H).max(LO / 2.0), (b + H).min(1.0 - 1e-9));
        Ok((f(bh)? - f(bl)?) / (bh - bl))
    };
    let mut beta = 0.5;
    let mut g = grad(beta)?;
    let mut iterations = 0u32;
    let mut bracket: Option<(f64, f64)> = None;
    if g == 0.0 {
        bracket = Some((beta, beta));
    }
    while bracket.is_none() && iterations < 2_000 {
        iterations += 1;
        let next = (beta + 0.001 * g.signum()).clamp(LO, HI);
        if next == beta {
            // pinned at a domain edge; the maximum sits on the boundary
            bracket = Some((next, next));
            break;
        }
        let g_next = grad(next)?;
        if g_next == 0.0 {
            beta = next;
            bracket = Some((next, next));
            break;
        }
        if g_next.signum() != g.signum() {
            bracket = Some(if beta < next { (beta, next) } else { (next, beta) });
            break;
        }
        beta = next;
        g = g_next;
    }
    let converged = bracket.is_some();
    if let Some((mut lo, mut hi)) = bracket {
        // bisect the gradient sign change to pin the stationary point
        if lo < hi {
            let sign_lo = grad(lo)?.signum();
            while hi - lo > 1e-9 {
                iterations += 1;
                let mid = 0.5 * (lo + hi);
                if grad(mid)?.signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        beta = 0.5 * (lo + hi);
    }
    Ok(OptResult {
        beta_star: beta,
        objective: f(beta)?,
        iterations,
        converged,
        method: OptMethod::GradientLowerBound,
    })
}

/// Exhaustive 0.001-grid maximization of the throughput lower bound, as a
/// cross-check for the gradient path.
pub fn optimize_lower_bound_grid(c: LosParam, rho: f64) -> Result<OptResult> {
    let (beta_star, objective, iterations) = grid_argmax(|b| throughput_lower_bound(c, rho, b))?;
    Ok(OptResult {
        beta_star,
        objective,
        iterations,
        converged: true,
        method: OptMethod::GridLowerBound,
    })
}

/// Largest `beta` keeping the exact outage at or below `eta`: solves
/// `P_out(beta) = eta` by Newton-Raphson on the analytic derivative with a
/// bisection safeguard. Because the key rate increases in `beta` while the
/// outage does too, this is the outage-constrained key-rate optimum.
pub fn constrained_keyrate_beta(c: LosParam, rho: f64, eta: f64) -> Result<OptResult> {
    if !(0.0 < eta && eta < 1.0) {
        return Err(domain_err(format!("outage target must be in (0,1), got {eta}")));
    }
    let p = |b: f64| outage_probability(c, rho, b);
    let mut lo = 1e-9;
    let mut hi = 1.0 - 1e-9;
    let (plo, phi) = (p(lo)?, p(hi)?);
    if plo > eta || phi < eta {
        return Err(ModelError::NoRoot(format!(
            "outage target {eta} outside the attainable range [{plo:.3e}, {phi:.3e}]"
        )));
    }
    let mut beta = 0.5;
    let mut iterations = 0u32;
    let mut converged = false;
    while iterations < 200 {
        iterations += 1;
        let residual = p(beta)? - eta;
        if residual.abs() <= 1e-10 {
            converged = true;
            break;
        }
        if residual > 0.0 {
            hi = beta;
        } else {
            lo = beta;
        }
        let slope = outage_probability_dbeta(c, rho, beta)?;
        let newton = beta - residual / slope;
        beta = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(OptResult {
        beta_star: beta,
        objective: key_rate_m(c, rho, beta)?,
        iterations,
        converged,
        method: OptMethod::NewtonConstrained,
    })
}

/// Grid-scan counterpart of [`constrained_keyrate_beta`]: the largest grid
/// `beta` with `P_out <= eta` (the key rate is increasing, so that point
/// maximizes it among feasible grid points).
pub fn constrained_keyrate_grid(c: LosParam, rho: f64, eta: f64) -> Result<OptResult> {
    let mut best: Option<(f64, f64)> = None;
    let mut iterations = 0;
    for i in 1..1000 {
        let beta = i as f64 * GRID_STEP;
        iterations += 1;
        let pout = outage_probability(c, rho, beta)?;
        if pout <= eta {
            best = Some((beta, key_rate_m(c, rho, beta)?));
        }
    }
    let (beta_star, objective) = best.ok_or_else(|| {
        ModelError::NoRoot(format!("no grid beta satisfies the outage target {eta}"))
    })?;
    Ok(OptResult { beta_star, objective, iterations, converged: true, method: OptMethod::GridConstrained })
}
