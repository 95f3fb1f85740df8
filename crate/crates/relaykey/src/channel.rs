//! Ricean fading channel sampler.
//!
//! A unit-power channel coefficient is drawn as
//! `h = sqrt(c/2) * (1 + i) + sqrt(1 - c) * w`, where `w` is standard
//! circularly-symmetric complex Gaussian (variance 1/2 per real dimension)
//! and `c` in [0, 1] is the fraction of energy in the deterministic
//! line-of-sight component. `E|h|^2 = 1` for every `c`.

use crate::{LosParam, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deterministic RNG for one Monte Carlo trial: all trials share a seed and
/// get distinct streams, so the set of trials is identical regardless of how
/// many threads it is sharded over.
#[inline]
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One fading draw with line-of-sight fraction `c`.
pub fn sample_channel<R: rand::Rng + ?Sized>(los: LosParam, rng: &mut R) -> Complex64 {
    let c = los.value();
    let s = ((1.0 - c) / 2.0).sqrt();
    let g1: f64 = StandardNormal.sample(rng);
    let g2: f64 = StandardNormal.sample(rng);
    let lam = (c / 2.0).sqrt();
    Complex64::new(lam + s * g1, lam + s * g2)
}

/// Observations both ends of a link collect about the same fading state
/// during the probing phase.
#[derive(Debug, Clone, Copy)]
pub struct ProbePair {
    /// Observation at the first terminal.
    pub x_a: f64,
    /// Observation at the second terminal.
    pub x_b: f64,
}

/// Draws the pair of reciprocal probe observations for one round.
///
/// Each side observes the in-phase component of the shared fade through its
/// own receiver noise: `x = sqrt(beta*rho/3) * Re(h) + n` with
/// `n ~ N(0, 1/2)` (probe power `beta*rho` split across the three slots of
/// the key agreement phase, noise at the per-dimension floor). The joint law
/// is bivariate Gaussian with mean `sqrt(beta*rho*c/6)`, per-observation
/// variance `a*beta*rho/3 + 1/2`, and covariance `a*beta*rho/3` where
/// `a = (1-c)/2` - exactly the law the quantizer design in `keygen` assumes.
pub fn run_probe_phase<R: rand::Rng + ?Sized>(
    los: LosParam,
    rho: f64,
    beta: f64,
    rng: &mut R,
) -> Result<ProbePair> {
    let c = los.value();
    if !(rho > 0.0) || !(0.0..=1.0).contains(&beta) {
        return Err(crate::domain_err("probe phase needs rho > 0 and beta in [0,1]"));
    }
    let a = (1.0 - c) / 2.0;
    let amp = (beta * rho / 3.0).sqrt();
    let g: f64 = StandardNormal.sample(rng);
    let h_re = (c / 2.0).sqrt() + a.sqrt() * g;
    let n_a: f64 = StandardNormal.sample(rng);
    let n_b: f64 = StandardNormal.sample(rng);
    let noise = 0.5f64.sqrt();
    Ok(ProbePair {
        x_a: amp * h_re + noise * n_a,
        x_b: amp * h_re + noise * n_b,
    })
}
