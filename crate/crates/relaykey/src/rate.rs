//! Closed-form key rate, Marcum-Q outage probability, throughput, and the
//! piecewise throughput lower bound.
//!
//! Conventions: `a = (1 - c)/2` is the per-dimension scattered power of the
//! Ricean coefficient, `rho` the linear SNR. The key rate of one probing
//! round is
//!
//! `M = log2(1 + a^2 b^2 rho^2 / (9 + 6 a b rho))`            (b = beta)
//!
//! and the broadcast is in outage when `|h|^2` falls below the threshold
//! `h = (2^M - 1) / ((1 - b) rho)`, which for a Ricean power variable is a
//! Marcum-Q tail.

use crate::special::i0_scaled;
use crate::{domain_err, LosParam, Result};
use statrs::function::gamma::{gamma_ur, ln_gamma};

/// Weighting of the LOS power inside the noncentrality of the `|h|^2` law.
///
/// `Full` uses the total LOS power of the complex coefficient
/// (noncentrality `2K`, `K = c/(1-c)`), which matches the sampled channel
/// model exactly and is the default everywhere. `Half` counts one real
/// dimension only (noncentrality `K`); the bundled reference table of
/// optimized power splits was generated under this convention and
/// [`crate::optimize`] reproduces it with `Half`. The two coincide at `c = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosWeight {
    Full,
    Half,
}

/// Key rate, outage and throughput at one operating point.
#[derive(Debug, Clone, Copy)]
pub struct RateReport {
    pub m: f64,
    pub h_threshold: f64,
    pub p_out: f64,
    pub theta: f64,
    /// Piecewise lower bound on theta; 0 where it is not defined (c = 1).
    pub theta_lb: f64,
}

fn check_common(c: LosParam, rho: f64, beta: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(domain_err(format!("rho must be positive, got {rho}")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(domain_err(format!("beta must be in [0,1], got {beta}")));
    }
    let _ = c;
    Ok(())
}

/// Secret-key rate in bits per channel use.
pub fn key_rate_m(c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    check_common(c, rho, beta)?;
    let a = 0.5 * (1.0 - c.value());
    let abr = a * beta * rho;
    Ok((1.0 + abr * abr / (9.0 + 6.0 * abr)).log2())
}

/// Alias of [`key_rate_m`] used by the LOS-monotonicity checks: the rate is
/// strictly decreasing in the LOS fraction for fixed (rho, beta).
pub fn mi_vs_los(c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    key_rate_m(c, rho, beta)
}

/// First-order Marcum-Q function `Q_1(alpha, lambda)`.
///
/// Evaluated through the noncentral-chi-square tail with 2 degrees of
/// freedom: `Q_1(alpha, lambda) = P(X > lambda^2)` for
/// `X ~ ncx2(2, alpha^2)`, expanded as a Poisson mixture of central
/// chi-square tails. The series is truncated once the unaccounted Poisson
/// mass drops below 1e-13 (the remaining contribution is bracketed by that
/// mass), giving absolute error well under 1e-10. Summation starts at the
/// Poisson mode so large noncentralities neither underflow nor lose mass.
pub fn marcum_q1(alpha: f64, lambda: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !(lambda >= 0.0) || !alpha.is_finite() || !lambda.is_finite() {
        return Err(domain_err(format!("marcum_q1 needs alpha, lambda >= 0, got ({alpha}, {lambda})")));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let d = 0.5 * alpha * alpha; // Poisson rate
    let y = 0.5 * lambda * lambda; // chi-square tail point (in half units)
    const CUT: f64 = 1e-17;

    // Poisson(j; d) pmf at the mode, in log space so huge d cannot underflow
    let j0 = if d > 1.0 { d.floor() as i64 } else { 0 };
    let p0 = if j0 == 0 {
        (-d).exp()
    } else {
        (-d + (j0 as f64) * d.ln() - ln_gamma(j0 as f64 + 1.0)).exp()
    };
    // tail of chi2 with 2(j+1) dof at 2y is the regularized upper gamma Q(j+1, y)
    let t0 = gamma_ur(j0 as f64 + 1.0, y);

    let mut q = p0 * t0;
    let mut mass = p0;

    // upward sweep from the mode: p_{j+1} = p_j d/(j+1), T_{j+1} = T_j + pois(j+1; y)
    let mut p = p0;
    let mut t = t0;
    let mut j = j0;
    while (p > CUT || j < j0 + 4) && j < j0 + 100_000_000 {
        j += 1;
        p *= d / j as f64;
        t = (t + (-y + (j as f64) * y.ln() - ln_gamma(j as f64 + 1.0)).exp()).min(1.0);
        q += p * t;
        mass += p;
    }
    // downward sweep: p_{j-1} = p_j j/d, T_{j-1} = T_j - pois(j; y)
    let mut p = p0;
    let mut t = t0;
    let mut j = j0;
    while j > 0 && (p > CUT || j > j0 - 4) {
        t = (t - (-y + (j as f64) * y.ln() - ln_gamma(j as f64 + 1.0)).exp()).max(0.0);
        p *= j as f64 / d;
        j -= 1;
        q += p * t;
        mass += p;
    }
    // unaccounted Poisson mass multiplies chi-square tails in [0, 1]
    let rem = (1.0 - mass).max(0.0);
    Ok((q + 0.5 * rem).clamp(0.0, 1.0))
}

/// Outage threshold on `|h|^2` for the XOR broadcast: `(2^M - 1)/((1-b) rho)`.
pub fn outage_threshold_h(c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    check_common(c, rho, beta)?;
    if beta >= 1.0 {
        return Err(domain_err("outage threshold diverges at beta = 1"));
    }
    let a = 0.5 * (1.0 - c.value());
    let abr = a * beta * rho;
    // (2^M - 1) expanded to avoid the exp/log round trip
    Ok(abr * abr / (9.0 + 6.0 * abr) / ((1.0 - beta) * rho))
}

/// Broadcast outage probability `P(|h|^2 <= h)` with the default (exact) LOS
/// weighting. See [`outage_probability_with`].
pub fn outage_probability(c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    outage_probability_with(LosWeight::Full, c, rho, beta)
}

/// Broadcast outage probability under the chosen LOS-noncentrality weighting.
///
/// `P_out = 1 - Q_1(sqrt(nc), sqrt(2 h / (1 - c)))` with `nc = 2c/(1-c)`
/// (`Full`) or `c/(1-c)` (`Half`). At `c = 1` the channel is deterministic
/// with `|h| = 1` and the outage is the indicator `[M >= log2(1 + (1-b) rho)]`.
pub fn outage_probability_with(w: LosWeight, c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    check_common(c, rho, beta)?;
    if beta >= 1.0 {
        return Err(domain_err("outage probability needs beta < 1"));
    }
    let cv = c.value();
    if cv == 1.0 {
        let m = key_rate_m(c, rho, beta)?;
        return Ok(if m >= (1.0 + (1.0 - beta) * rho).log2() { 1.0 } else { 0.0 });
    }
    let h = outage_threshold_h(c, rho, beta)?;
    let nc = match w {
        LosWeight::Full => 2.0 * cv / (1.0 - cv),
        LosWeight::Half => cv / (1.0 - cv),
    };
    let lambda = (2.0 * h / (1.0 - cv)).sqrt();
    Ok(1.0 - marcum_q1(nc.sqrt(), lambda)?)
}

/// Outage probability of a broadcast at an arbitrary rate `rate_bits`
/// (bits/channel-use) instead of the protocol key rate: the exact-weight
/// Ricean tail of `P(log2(1 + |h|^2 (1-beta) rho) < rate_bits)`.
pub fn outage_probability_at_rate(c: LosParam, rho: f64, beta: f64, rate_bits: f64) -> Result<f64> {
    check_common(c, rho, beta)?;
    if beta >= 1.0 {
        return Err(domain_err("outage probability needs beta < 1"));
    }
    if !(rate_bits >= 0.0) || !rate_bits.is_finite() {
        return Err(domain_err(format!("rate must be >= 0, got {rate_bits}")));
    }
    if rate_bits == 0.0 {
        return Ok(0.0);
    }
    let cv = c.value();
    let h = (rate_bits.exp2() - 1.0) / ((1.0 - beta) * rho);
    if cv == 1.0 {
        return Ok(if h > 1.0 { 1.0 } else { 0.0 });
    }
    let nc = 2.0 * cv / (1.0 - cv);
    let lambda = (2.0 * h / (1.0 - cv)).sqrt();
    Ok(1.0 - marcum_q1(nc.sqrt(), lambda)?)
}

/// Derivative of the (Full-weight) outage probability in `beta`; used by the
/// Newton-Raphson constrained optimizer.
pub fn outage_probability_dbeta(c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    check_common(c, rho, beta)?;
    let cv = c.value();
    if cv >= 1.0 || beta >= 1.0 {
        return Err(domain_err("outage derivative needs c < 1 and beta < 1"));
    }
    let a = 0.5 * (1.0 - cv);
    let h = outage_threshold_h(c, rho, beta)?;
    // d/dh of (1 - Q1) is the ncx2 density at the threshold
    let z = 2.0 * (cv * h).sqrt() / (1.0 - cv);
    let expo = -((h.sqrt() - cv.sqrt()).powi(2)) / (1.0 - cv);
    let dens = expo.exp() * i0_scaled(z) / (1.0 - cv);
    let denom = (1.0 - beta) * (9.0 + 6.0 * a * beta * rho);
    let dh = a * a * rho * beta * (18.0 - 9.0 * beta + 6.0 * a * beta * rho) / (denom * denom);
    Ok(dens * dh)
}

/// Throughput `Theta = M (1 - P_out)` and its companions at one point.
pub fn throughput(c: LosParam, rho: f64, beta: f64) -> Result<RateReport> {
    let m = key_rate_m(c, rho, beta)?;
    let h = outage_threshold_h(c, rho, beta)?;
    let p_out = outage_probability(c, rho, beta)?;
    let theta_lb = if c.value() < 1.0 && beta > 0.0 && beta < 1.0 {
        throughput_lower_bound(c, rho, beta)?
    } else {
        0.0
    };
    Ok(RateReport { m, h_threshold: h, p_out, theta: m * (1.0 - p_out), theta_lb })
}

/// Throughput under the chosen LOS weighting (scalar convenience for
/// optimizer objectives).
pub fn throughput_with(w: LosWeight, c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    Ok(key_rate_m(c, rho, beta)? * (1.0 - outage_probability_with(w, c, rho, beta)?))
}

/// Piecewise lower bound on the throughput.
///
/// With `a = (1-c)/2` and branch point `beta_min = 9 / (6 a rho)`:
///
/// - `beta <= beta_min`: `log2(1 + a^2 b^2 rho^2 / 18) * damp`
/// - `beta >  beta_min`: `log2(1 + a b rho / 12) * damp`
///
/// where `damp = exp(-c/(2a)) * exp(-b / (12 (1 - b)))`. The bound is valid
/// for every `beta` in (0,1) and is unimodal when `a rho > 1.862`.
pub fn throughput_lower_bound(c: LosParam, rho: f64, beta: f64) -> Result<f64> {
    check_common(c, rho, beta)?;
    let cv = c.value();
    if cv >= 1.0 {
        return Err(domain_err("lower bound undefined at c = 1"));
    }
    if beta <= 0.0 || beta >= 1.0 {
        return Err(domain_err("lower bound needs beta in (0,1)"));
    }
    let a = 0.5 * (1.0 - cv);
    let beta_min = 9.0 / (6.0 * a * rho);
    let damp = (-cv / (2.0 * a)).exp() * (-beta / (12.0 * (1.0 - beta))).exp();
    let rate_part = if beta <= beta_min {
        let abr = a * beta * rho;
        (1.0 + abr * abr / 18.0).log2()
    } else {
        (1.0 + a * beta * rho / 12.0).log2()
    };
    Ok(rate_part * damp)
}

/// Branch point of the lower bound, `9 / (6 a rho)`.
pub fn lb_branch_point(c: LosParam, rho: f64) -> f64 {
    9.0 / (6.0 * 0.5 * (1.0 - c.value()) * rho)
}

/// `a rho > 1.862` guarantees the lower bound is unimodal in beta.
pub fn lb_unimodal(c: LosParam, rho: f64) -> bool {
    0.5 * (1.0 - c.value()) * rho > 1.862
}

#[cfg(test)]
mod tests {
    use super::*;

    fn los(c: f64) -> LosParam {
        LosParam::new(c).unwrap()
    }

    #[test]
    fn marcum_edge_cases() {
        assert_eq!(marcum_q1(0.7, 0.0).unwrap(), 1.0);
        let b: f64 = 1.3;
        assert!((marcum_q1(0.0, b).unwrap() - (-b * b / 2.0).exp()).abs() < 1e-14);
        assert!(marcum_q1(-1.0, 2.0).is_err());
        assert!(marcum_q1(1.0, f64::NAN).is_err());
    }

    #[test]
    fn rate_zeroes() {
        assert_eq!(key_rate_m(los(1.0), 100.0, 0.5).unwrap(), 0.0);
        assert_eq!(key_rate_m(los(0.4), 77.0, 0.0).unwrap(), 0.0);
        assert_eq!(outage_threshold_h(los(0.3), 10.0, 0.0).unwrap(), 0.0);
        assert_eq!(outage_threshold_h(los(1.0), 10.0, 0.6).unwrap(), 0.0);
        assert!(outage_threshold_h(los(0.0), 10.0, 1.0).is_err());
    }

    #[test]
    fn deterministic_channel_never_outages_below_capacity() {
        // at c = 1 the key rate is zero, so the indicator is always 0
        assert_eq!(outage_probability(los(1.0), 50.0, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn outage_derivative_matches_finite_difference() {
        for &(c, rho, beta) in &[(0.0, 20.0, 0.5), (0.3, 63.0, 0.7), (0.8, 200.0, 0.9), (0.5, 6.3, 0.3)] {
            let d = outage_probability_dbeta(los(c), rho, beta).unwrap();
            let e = 1e-6;
            let hi = outage_probability(los(c), rho, beta + e).unwrap();
            let lo = outage_probability(los(c), rho, beta - e).unwrap();
            let fd = (hi - lo) / (2.0 * e);
            assert!((d - fd).abs() < 1e-6 * (1.0 + fd.abs()), "c={c} rho={rho} beta={beta}: {d} vs {fd}");
        }
    }

    #[test]
    fn lower_bound_vanishes_at_zero_beta() {
        for &(c, rho) in &[(0.0, 20.0), (0.4, 100.0)] {
            let v = throughput_lower_bound(los(c), rho, 1e-9).unwrap();
            assert!((0.0..1e-12).contains(&v));
        }
    }

    #[test]
    fn lower_bound_branches_are_continuous() {
        for &(c, rho) in &[(0.0, 20.0), (0.3, 63.245_553_203_367_59), (0.6, 632.0)] {
            let bm = lb_branch_point(los(c), rho);
            if bm >= 1.0 {
                continue;
            }
            let below = throughput_lower_bound(los(c), rho, bm - 1e-12).unwrap();
            let above = throughput_lower_bound(los(c), rho, bm + 1e-12).unwrap();
            assert!((below - above).abs() < 1e-9, "branch jump at c={c}, rho={rho}");
        }
    }
}
