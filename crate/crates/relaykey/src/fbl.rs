//! Finite-blocklength (dispersion-based) outage of the broadcast phase.
//!
//! For a code of blocklength `L` and rate `R` bits per channel use over the
//! relay-to-node broadcast with instantaneous SNR `Gamma`, the normal
//! approximation gives a conditional block-error probability
//! `Q( sqrt(L / V(Gamma)) * (C(Gamma) - R) )` with capacity
//! `C = log2(1 + Gamma)` and dispersion `V`. Averaging over the Ricean
//! fading of `Gamma` yields the outage probability of short-code broadcasts.

use crate::rate::marcum_q1;
use crate::special::{i0_scaled, norm_sf, LOG2_E};
use crate::{domain_err, quad, LosParam, Result};

/// Operating point of a finite-blocklength broadcast.
#[derive(Debug, Clone, Copy)]
pub struct FblParams {
    /// Blocklength in channel uses (also the coherence-blocks per round).
    pub l: u32,
    /// Code rate in bits per channel use (`R = E[N_XOR] / L`).
    pub rate: f64,
    pub c: LosParam,
    /// SNR of the power budget (linear).
    pub rho: f64,
    /// Probing power fraction; the broadcast runs at `(1 - beta) * rho`.
    pub beta: f64,
}

impl FblParams {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(domain_err("blocklength must be >= 1"));
        }
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(domain_err(format!("rate must be >= 0, got {}", self.rate)));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(domain_err(format!("rho must be positive, got {}", self.rho)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(domain_err(format!("beta must be in [0,1), got {}", self.beta)));
        }
        Ok(())
    }
}

/// Channel dispersion `V(Gamma) = (Gamma/2) (Gamma+2) / (Gamma+1)^2 * log2(e)^2`.
pub fn channel_dispersion(gamma_snr: f64) -> Result<f64> {
    if !(gamma_snr >= 0.0) {
        return Err(domain_err(format!("dispersion needs Gamma >= 0, got {gamma_snr}")));
    }
    let g1 = gamma_snr + 1.0;
    Ok(0.5 * gamma_snr * (gamma_snr + 2.0) / (g1 * g1) * LOG2_E * LOG2_E)
}

/// Conditional block-error probability given the instantaneous SNR.
pub fn conditional_error(l: u32, rate: f64, gamma_snr: f64) -> Result<f64> {
    let v = channel_dispersion(gamma_snr)?;
    let cap = gamma_snr.ln_1p() * LOG2_E;
    if v == 0.0 {
        // zero-SNR endpoint: the normal approximation degenerates to the
        // step indicator [C < R]
        return Ok(if cap < rate { 1.0 } else { 0.0 });
    }
    let arg = (l as f64 / v).sqrt() * (cap - rate);
    if !arg.is_finite() {
        return Ok(if cap < rate { 1.0 } else { 0.0 });
    }
    Ok(norm_sf(arg))
}

/// Outage probability of the finite-blocklength broadcast, averaged over the
/// Ricean law of `Gamma = |h|^2 (1-beta) rho`.
///
/// The integrand has a near-step transition at `2^R - 1` once `L` is large,
/// so the quadrature domain is split there; the upper limit is chosen so the
/// discarded SNR tail carries less than 1e-12 mass.
pub fn fbl_outage_probability(p: &FblParams) -> Result<f64> {
    p.validate()?;
    if p.rate == 0.0 {
        // a zero-rate payload is always delivered
        return Ok(0.0);
    }
    let c = p.c.value();
    let bcast = (1.0 - p.beta) * p.rho;
    if c == 1.0 {
        // deterministic channel: Gamma is an atom at the mean SNR
        return conditional_error(p.l, p.rate, bcast);
    }
    let a = (1.0 - c) / 2.0;
    // Gamma = s * X with X ~ noncentral chi^2(2 dof, delta)
    let s = a * bcast;
    let delta = 2.0 * c / (1.0 - c);
    let alpha = delta.sqrt();
    // truncation point of the X tail
    let mut xmax = 4.0 * (1.0 + delta) + 50.0;
    while marcum_q1(alpha, xmax.sqrt())? > 1e-12 {
        xmax *= 2.0;
        if xmax > 1e12 {
            return Err(domain_err("SNR density tail failed to decay"));
        }
    }
    let gmax = s * xmax;
    let density = move |g: f64| -> f64 {
        let x = g / s;
        let z = alpha * x.sqrt();
        0.5 * (z - 0.5 * (x + delta)).exp() * i0_scaled(z) / s
    };
    let l = p.l;
    let rate = p.rate;
    let g_rate = (rate.exp2() - 1.0).min(gmax);
    let integrand = move |g: f64| -> f64 {
        if g <= 0.0 {
            return 0.0;
        }
        conditional_error(l, rate, g).unwrap_or(0.0) * density(g)
    };
    // The error probability transitions from ~1 to ~0 over |C - R| of a few
    // dispersion standard deviations. Anchoring breakpoints at both edges of
    // that window (not just at the step itself) keeps the transition visible
    // to the subdivision even when [g_rate, gmax] spans orders of magnitude.
    let width = 10.0 * (1.0 + g_rate) * channel_dispersion(g_rate)?.sqrt()
        / ((l as f64).sqrt() * LOG2_E);
    let mut breaks = [g_rate - width, g_rate, g_rate + width];
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let interior: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&g| g > 0.0 && g < gmax)
        .collect();
    let v = quad::adaptive_split(integrand, 0.0, gmax, &interior, 1e-11, 1e-10)?;
    Ok(v.clamp(0.0, 1.0))
}
