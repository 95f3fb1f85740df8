//! Finite probability mass functions over integers, with compensated
//! summation so convolution/recursion chains over ~1e4-point supports do not
//! drift.

use crate::{domain_err, Result};
use statrs::function::gamma::ln_gamma;

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// PMF on a contiguous integer support `offset..offset + masses.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    pub support_offset: i64,
    pub masses: Vec<f64>,
}

impl Pmf {
    pub fn new(support_offset: i64, masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(domain_err("pmf needs a non-empty support"));
        }
        if masses.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(domain_err("pmf masses must be finite and non-negative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(domain_err(format!("pmf masses sum to {total}, expected 1 +/- 1e-9")));
        }
        Ok(Pmf { support_offset, masses })
    }

    pub fn point_mass(at: i64) -> Self {
        Pmf { support_offset: at, masses: vec![1.0] }
    }

    #[inline]
    pub fn prob(&self, k: i64) -> f64 {
        let idx = k - self.support_offset;
        if idx < 0 || idx as usize >= self.masses.len() {
            0.0
        } else {
            self.masses[idx as usize]
        }
    }

    pub fn min_support(&self) -> i64 {
        self.support_offset
    }

    pub fn max_support(&self) -> i64 {
        self.support_offset + self.masses.len() as i64 - 1
    }

    pub fn total(&self) -> f64 {
        let mut acc = KahanSum::default();
        for &m in &self.masses {
            acc.add(m);
        }
        acc.value()
    }

    pub fn mean(&self) -> f64 {
        let mut acc = KahanSum::default();
        for (i, &m) in self.masses.iter().enumerate() {
            acc.add((self.support_offset + i as i64) as f64 * m);
        }
        acc.value()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let mut acc = KahanSum::default();
        for (i, &m) in self.masses.iter().enumerate() {
            let d = (self.support_offset + i as i64) as f64 - mu;
            acc.add(d * d * m);
        }
        acc.value()
    }

    /// P(X > k).
    pub fn tail_above(&self, k: i64) -> f64 {
        let mut acc = KahanSum::default();
        for (i, &m) in self.masses.iter().enumerate() {
            if self.support_offset + i as i64 > k {
                acc.add(m);
            }
        }
        acc.value()
    }

    /// Drops trailing/leading zero mass (keeps at least one entry).
    pub fn trimmed(mut self) -> Self {
        let last = self.masses.iter().rposition(|&m| m > 0.0).unwrap_or(0);
        self.masses.truncate(last + 1);
        let first = self.masses.iter().position(|&m| m > 0.0).unwrap_or(0);
        if first > 0 {
            self.masses.drain(..first);
            self.support_offset += first as i64;
        }
        self
    }
}

/// Binomial(n, p) PMF. The modal mass is seeded from the log-gamma form
/// (no underflow ladder for large n) and neighbours follow from the exact
/// term ratio; renormalizing then cancels the common log-form rounding, so
/// small cases come out bit-exact.
pub fn binomial_pmf(n: u32, p: f64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(domain_err(format!("binomial p must be in [0,1], got {p}")));
    }
    if p == 0.0 {
        return Ok(Pmf::point_mass(0));
    }
    if p == 1.0 {
        return Ok(Pmf::point_mass(n as i64));
    }
    let nf = n as f64;
    let q = 1.0 - p;
    let mode = (((nf + 1.0) * p).floor() as u32).min(n);
    let mf = mode as f64;
    let ln_mode = ln_gamma(nf + 1.0) - ln_gamma(mf + 1.0) - ln_gamma(nf - mf + 1.0)
        + mf * p.ln()
        + (nf - mf) * q.ln();
    let mut masses = vec![0.0; n as usize + 1];
    masses[mode as usize] = ln_mode.exp();
    for k in (0..mode).rev() {
        // f(k) = f(k+1) * (k+1) q / ((n-k) p)
        let kf = k as f64;
        masses[k as usize] = masses[k as usize + 1] * (kf + 1.0) * q / ((nf - kf) * p);
    }
    for k in mode + 1..=n {
        let kf = k as f64;
        masses[k as usize] = masses[k as usize - 1] * (nf - kf + 1.0) * p / (kf * q);
    }
    let mut acc = KahanSum::default();
    for &m in &masses {
        acc.add(m);
    }
    let total = acc.value();
    for m in &mut masses {
        *m /= total;
    }
    Pmf::new(0, masses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_case() {
        let b = binomial_pmf(2, 0.5).unwrap();
        assert_eq!(b.support_offset, 0);
        for (i, &want) in [0.25, 0.5, 0.25].iter().enumerate() {
            assert!((b.masses[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn binomial_moments() {
        let b = binomial_pmf(200, 0.3).unwrap();
        assert!((b.total() - 1.0).abs() < 1e-12);
        assert!((b.mean() - 60.0).abs() < 1e-10);
        assert!((b.variance() - 42.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_binomials() {
        assert_eq!(binomial_pmf(10, 0.0).unwrap(), Pmf::point_mass(0));
        assert_eq!(binomial_pmf(10, 1.0).unwrap(), Pmf::point_mass(10));
    }

    #[test]
    fn rejects_bad_masses() {
        assert!(Pmf::new(0, vec![0.5, 0.4]).is_err());
        assert!(Pmf::new(0, vec![1.1, -0.1]).is_err());
        assert!(Pmf::new(0, vec![]).is_err());
    }
}
