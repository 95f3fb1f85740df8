//! Practical bit extraction from reciprocal channel probes.
//!
//! Both ends of a link quantize their probe observations against two
//! thresholds around the observation mean. A sample produces a bit only when
//! *both* sides see it outside the guard band (the indices are exchanged in
//! the clear); a kept sample maps to 1 iff the observation is at or above the
//! upper threshold. Widening the band trades key length for bit agreement.

use crate::pmf::{binomial_pmf, KahanSum, Pmf};
use crate::special::{norm_pdf, norm_sf};
use crate::{domain_err, quad, LosParam, ModelError, Result};

/// Joint law of the two probe observations of one sample.
///
/// Marginals are `N(mean, var)`; the pair is bivariate Gaussian with
/// correlation `corr`. See `channel::run_probe_phase` for the construction.
#[derive(Debug, Clone, Copy)]
pub struct ProbeLaw {
    pub mean: f64,
    pub var: f64,
    pub corr: f64,
}

/// Probe-observation law for line-of-sight fraction `c`, SNR `rho`, and
/// power split `beta`.
pub fn probe_law(los: LosParam, rho: f64, beta: f64) -> Result<ProbeLaw> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(domain_err(format!("rho must be positive and finite, got {rho}")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(domain_err(format!("beta must be in [0,1], got {beta}")));
    }
    let c = los.value();
    let a = (1.0 - c) / 2.0;
    let v_sig = a * beta * rho / 3.0;
    let var = v_sig + 0.5;
    Ok(ProbeLaw { mean: (beta * rho * c / 6.0).sqrt(), var, corr: v_sig / var })
}

/// Guard band expressed as threshold offsets from the observation mean, in
/// units of the observation standard deviation. `w_lo` is normally negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardBand {
    pub w_lo: f64,
    pub w_hi: f64,
}

impl GuardBand {
    pub fn symmetric(w: f64) -> Self {
        GuardBand { w_lo: -w, w_hi: w }
    }

    /// Absolute `(lower, upper)` thresholds under `law`.
    pub fn thresholds(&self, law: &ProbeLaw) -> (f64, f64) {
        let sd = law.var.sqrt();
        (law.mean + self.w_lo * sd, law.mean + self.w_hi * sd)
    }
}

/// P(X >= a, Y >= b) for a centered bivariate Gaussian with common variance
/// `v` and correlation `r`, via a single one-dimensional integral
/// `int_a^inf phi_v(x) * SF((b - r x)/sqrt(v (1-r^2))) dx`.
///
/// This form keeps full relative accuracy for far-tail quadrants where a
/// rectangle-CDF difference would lose everything to cancellation.
fn upper_quadrant(a: f64, b: f64, v: f64, r: f64) -> Result<f64> {
    let sd = v.sqrt();
    if r.abs() >= 1.0 {
        return Err(domain_err("quadrant integral needs |corr| < 1"));
    }
    if r == 0.0 {
        return Ok(norm_sf(a / sd) * norm_sf(b / sd));
    }
    let s_cond = (v * (1.0 - r * r)).sqrt();
    let ub = 13.5 * sd;
    if a >= ub {
        return Ok(0.0);
    }
    quad::adaptive(
        |x| norm_pdf(x / sd) / sd * norm_sf((b - r * x) / s_cond),
        a,
        ub,
        1e-18,
        1e-12,
    )
}

/// Probability that a sample survives reconciliation (both observations
/// outside the band), including the mismatch quadrants.
pub fn p_epsilon(law: &ProbeLaw, band: &GuardBand) -> Result<f64> {
    let (v, r) = (law.var, law.corr);
    let sd = v.sqrt();
    let (t_lo, t_hi) = (band.w_lo * sd, band.w_hi * sd);
    let hh = upper_quadrant(t_hi, t_hi, v, r)?;
    let ll = upper_quadrant(-t_lo, -t_lo, v, r)?;
    let hl = upper_quadrant(t_hi, -t_lo, v, -r)?;
    Ok((hh + ll + 2.0 * hl).clamp(0.0, 1.0))
}

/// Joint probability that a sample is kept *and* the two sides disagree.
pub fn mismatch_probability(law: &ProbeLaw, band: &GuardBand) -> Result<f64> {
    let (v, r) = (law.var, law.corr);
    let sd = v.sqrt();
    let (t_lo, t_hi) = (band.w_lo * sd, band.w_hi * sd);
    let hl = upper_quadrant(t_hi, -t_lo, v, -r)?;
    Ok(2.0 * hl)
}

/// Outcome of a guard-band search.
#[derive(Debug, Clone, Copy)]
pub struct BandSelection {
    pub band: GuardBand,
    /// Per-sample keep probability at the selected band.
    pub p_keep: f64,
    /// Joint keep-and-disagree probability at the selected band.
    pub p_mismatch: f64,
}

/// Smallest symmetric guard band whose conditional bit-error rate
/// `p_mismatch / p_keep` does not exceed `target`. Bisection on the
/// half-width to 1e-4; the returned width is the feasible bracket end, so
/// the constraint is guaranteed to hold at it.
pub fn select_guard_band(law: &ProbeLaw, target: f64) -> Result<BandSelection> {
    if !(target > 0.0 && target < 1.0) {
        return Err(domain_err(format!("error-rate target must be in (0,1), got {target}")));
    }
    let ratio = |w: f64| -> Result<f64> {
        let band = GuardBand::symmetric(w);
        let pk = p_epsilon(law, &band)?;
        if pk <= 0.0 {
            return Ok(f64::NAN);
        }
        Ok(mismatch_probability(law, &band)? / pk)
    };
    let feasible = |w: f64| -> Result<bool> {
        let q = ratio(w)?;
        Ok(q.is_finite() && q <= target)
    };
    if feasible(0.0)? {
        let band = GuardBand::symmetric(0.0);
        return Ok(BandSelection {
            band,
            p_keep: p_epsilon(law, &band)?,
            p_mismatch: mismatch_probability(law, &band)?,
        });
    }
    let mut hi = 1.0;
    while !feasible(hi)? {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(ModelError::NoRoot(
                "no guard band within 64 standard deviations meets the error-rate target".into(),
            ));
        }
    }
    let mut lo = if hi == 1.0 { 0.0 } else { hi / 2.0 };
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let band = GuardBand::symmetric(hi);
    Ok(BandSelection {
        band,
        p_keep: p_epsilon(law, &band)?,
        p_mismatch: mismatch_probability(law, &band)?,
    })
}

/// Quantizes both observation streams and keeps the consensus positions.
/// Returns the two sides' bit strings; positions match, values may differ
/// where the channel pushed the observations to opposite sides of the band.
pub fn quantize_and_reconcile(
    x_a: &[f64],
    x_b: &[f64],
    t_lo: f64,
    t_hi: f64,
) -> Result<(Vec<bool>, Vec<bool>)> {
    if x_a.len() != x_b.len() {
        return Err(ModelError::LengthMismatch(format!(
            "probe streams differ: {} vs {}",
            x_a.len(),
            x_b.len()
        )));
    }
    if !(t_lo <= t_hi) {
        return Err(domain_err("guard band thresholds must satisfy lo <= hi"));
    }
    let outside = |x: f64| x <= t_lo || x >= t_hi;
    let mut bits_a = Vec::new();
    let mut bits_b = Vec::new();
    for (&xa, &xb) in x_a.iter().zip(x_b) {
        if outside(xa) && outside(xb) {
            bits_a.push(xa >= t_hi);
            bits_b.push(xb >= t_hi);
        }
    }
    Ok((bits_a, bits_b))
}

/// Number of key bits one link produces in a round: each of the `2l` probe
/// samples independently survives reconciliation with probability `p_keep`.
pub fn key_length_pmf(l: u32, p_keep: f64) -> Result<Pmf> {
    binomial_pmf(2 * l, p_keep)
}

/// PMF of `A - B` for independent integer variables with the given PMFs
/// (cross-correlation of the mass vectors).
pub fn difference_pmf(a: &Pmf, b: &Pmf) -> Pmf {
    let off = a.min_support() - b.max_support();
    let len = (a.max_support() - b.min_support() - off + 1) as usize;
    let mut masses = vec![0.0; len];
    for (i, m) in masses.iter_mut().enumerate() {
        let d = off + i as i64;
        let mut acc = KahanSum::default();
        for (j, &pb) in b.masses.iter().enumerate() {
            let k = b.min_support() + j as i64;
            acc.add(a.prob(k + d) * pb);
        }
        *m = acc.value();
    }
    Pmf { support_offset: off, masses }
}
