//! The relay's XOR-broadcast buffer machine and the exact distribution of the
//! broadcast key length under buffer constraints.
//!
//! Per round the relay holds two fresh pairwise keys `k_AR` (length `N_AR`)
//! and `k_BR` (length `N_BR`) and broadcasts `k_XOR`:
//!
//! - equal lengths: plain XOR;
//! - `N_AR < N_BR`: XOR against the first `N_AR` bits of `k_BR`; the unused
//!   tail is pushed onto a LIFO stack shared (by construction) with node B;
//! - `N_AR > N_BR` and the deficit fits the spendable buffer: `k_BR` is
//!   extended with popped stack bits and the full `k_AR` is sent;
//! - otherwise `k_AR` is truncated to `N_BR` bits and the buffer is left
//!   untouched (all-or-nothing padding).
//!
//! Node B inverts the XOR with its own `k_BR` copy and buffer replica. The
//! closed-form recursions below give the buffer-occupancy PMF and the mean
//! broadcast length for the min / intermediate / optimal buffer policies.

use crate::keygen::difference_pmf;
use crate::pmf::{KahanSum, Pmf};
use crate::{domain_err, BitKey, ModelError, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Everything a simulated round produces, for trajectory dumps and audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundOutcome {
    pub n_ar: usize,
    pub n_br: usize,
    pub n_xor: usize,
    pub buffer_before: usize,
    pub buffer_after: usize,
    pub outage: bool,
    /// `n_xor` on success, 0 on outage.
    pub delivered_bits: usize,
}

/// Buffer policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Unbounded reserve: deficits are always fully padded. Stack bits are
    /// used first; any shortfall comes from a pre-shared synthetic pad.
    Optimal,
    /// No buffer: surplus bits are discarded and deficits never padded.
    Min,
    /// The stack accumulates surplus from round 1 but may be spent only in
    /// rounds strictly after `switch_on`.
    Intermediate { switch_on: u64 },
}

/// One replica of the shared LIFO buffer (node R and node B each hold one).
#[derive(Debug, Clone)]
pub struct BufferState {
    scheme: SchemeKind,
    stack: Vec<bool>,
    round: u64,
    pad: Option<ChaCha12Rng>,
}

impl BufferState {
    /// Fresh replica at round 0. `pad_seed` seeds the synthetic pad of the
    /// Optimal scheme (both replicas must be built with the same seed); it is
    /// ignored by the other schemes.
    pub fn new(scheme: SchemeKind, pad_seed: u64) -> Self {
        let pad = match scheme {
            SchemeKind::Optimal => Some(ChaCha12Rng::seed_from_u64(pad_seed)),
            _ => None,
        };
        BufferState { scheme, stack: Vec::new(), round: 0, pad }
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    /// Stack occupancy in bits.
    pub fn size(&self) -> usize {
        self.stack.len()
    }

    /// Completed rounds.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Bits the upcoming round may spend on padding.
    fn spendable(&self) -> usize {
        match self.scheme {
            SchemeKind::Min => 0,
            SchemeKind::Optimal => usize::MAX,
            SchemeKind::Intermediate { switch_on } => {
                if self.round + 1 > switch_on {
                    self.stack.len()
                } else {
                    0
                }
            }
        }
    }

    fn push_surplus(&mut self, bits: &[bool]) {
        if self.scheme != SchemeKind::Min {
            self.stack.extend_from_slice(bits);
        }
    }

    fn pop_pad(&mut self, n: usize) -> Result<Vec<bool>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            if let Some(b) = self.stack.pop() {
                out.push(b);
            } else if let Some(pad) = self.pad.as_mut() {
                out.push(pad.next_u32() & 1 == 1);
            } else {
                return Err(domain_err("buffer pop exceeded available bits"));
            }
        }
        Ok(out)
    }
}

#[inline]
fn xor(a: &[bool], b: &[bool]) -> BitKey {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x ^ y).collect()
}

/// Builds the round's broadcast message at node R and commits the buffer
/// update. Returns `k_XOR`; its length is `N_XOR`.
pub fn build_xor_message(
    k_ar: &[bool],
    k_br: &[bool],
    buf: &mut BufferState,
    scheme: SchemeKind,
) -> Result<BitKey> {
    if scheme != buf.scheme {
        return Err(ModelError::Config(
            "scheme does not match the buffer replica's scheme".into(),
        ));
    }
    let (n_ar, n_br) = (k_ar.len(), k_br.len());
    let k_xor = if n_ar <= n_br {
        let out = xor(k_ar, &k_br[..n_ar]);
        buf.push_surplus(&k_br[n_ar..]);
        out
    } else if n_ar - n_br <= buf.spendable() {
        let pad = buf.pop_pad(n_ar - n_br)?;
        let mut extended = k_br.to_vec();
        extended.extend_from_slice(&pad);
        xor(k_ar, &extended)
    } else {
        xor(&k_ar[..n_br], k_br)
    };
    buf.round += 1;
    Ok(k_xor)
}

/// Recovers node R's key at node B from the broadcast and commits the same
/// buffer update to node B's replica. `k_xor_hat` is the decoded broadcast
/// (its length `N_XOR` arrives over the control channel), `k_br` node B's own
/// pairwise key for the round.
pub fn recover_at_node_b(
    k_xor_hat: &[bool],
    k_br: &[bool],
    buf_b: &mut BufferState,
) -> Result<BitKey> {
    let (n_xor, n_br) = (k_xor_hat.len(), k_br.len());
    let k_ar_hat = if n_xor == n_br {
        xor(k_xor_hat, k_br)
    } else if n_xor < n_br {
        let out = xor(k_xor_hat, &k_br[..n_xor]);
        buf_b.push_surplus(&k_br[n_xor..]);
        out
    } else {
        let pad = buf_b.pop_pad(n_xor - n_br)?;
        let mut extended = k_br.to_vec();
        extended.extend_from_slice(&pad);
        xor(k_xor_hat, &extended)
    };
    buf_b.round += 1;
    Ok(k_ar_hat)
}

/// Test hook: errors unless the two replicas agree bit for bit.
pub fn ensure_replicas_match(node_r: &BufferState, node_b: &BufferState) -> Result<()> {
    if node_r.round != node_b.round {
        return Err(ModelError::ReplicaDivergence(format!(
            "round counters differ: {} vs {}",
            node_r.round, node_b.round
        )));
    }
    if node_r.stack != node_b.stack {
        return Err(ModelError::ReplicaDivergence(format!(
            "stack contents differ after round {}",
            node_r.round
        )));
    }
    Ok(())
}

fn check_nonneg_support(p: &Pmf, what: &str) -> Result<()> {
    if p.min_support() < 0 {
        return Err(domain_err(format!("{what} must have non-negative support")));
    }
    Ok(())
}

/// One spending-round update of the buffer-occupancy PMF:
/// `B' = B - D` when `D <= B`, else `B' = B` (the all-or-nothing rule).
fn spend_step(cur: &Pmf, d: &Pmf) -> Pmf {
    let grow = (-d.min_support()).max(0) as usize;
    // dense over [0, max]: cur may start above 0 (e.g. a known occupancy)
    let new_len = cur.max_support() as usize + grow + 1;
    // tails[b] = P(D > b), b >= 0
    let mut tails = vec![0.0; new_len];
    {
        let mut acc = KahanSum::default();
        let mut d_idx = d.max_support();
        for b in (0..new_len as i64).rev() {
            while d_idx > b {
                acc.add(d.prob(d_idx));
                d_idx -= 1;
            }
            tails[b as usize] = acc.value();
        }
    }
    let mut masses = vec![0.0; new_len];
    for (b, m) in masses.iter_mut().enumerate() {
        let b = b as i64;
        let mut acc = KahanSum::default();
        acc.add(cur.prob(b) * tails[b as usize]);
        for (j, &pd) in d.masses.iter().enumerate() {
            let dv = d.min_support() + j as i64;
            if pd > 0.0 {
                acc.add(pd * cur.prob(b + dv));
            }
        }
        *m = acc.value();
    }
    Pmf { support_offset: 0, masses }
}

/// One accumulation-only update: `B' = B + max(0, -D)` (surplus is pushed,
/// nothing is spent).
fn accumulate_step(cur: &Pmf, d: &Pmf) -> Pmf {
    let grow = (-d.min_support()).max(0) as usize;
    // g_masses[g] = P(max(0, -D) = g)
    let mut g_masses = vec![0.0; grow + 1];
    {
        let mut acc = KahanSum::default();
        for dv in 0..=d.max_support() {
            acc.add(d.prob(dv));
        }
        g_masses[0] = acc.value();
    }
    for (g, slot) in g_masses.iter_mut().enumerate().skip(1) {
        *slot = d.prob(-(g as i64));
    }
    let new_len = cur.max_support() as usize + grow + 1;
    let mut masses = vec![0.0; new_len];
    for (b, m) in masses.iter_mut().enumerate() {
        let mut acc = KahanSum::default();
        for (g, &pg) in g_masses.iter().enumerate() {
            if pg > 0.0 && b >= g {
                acc.add(pg * cur.prob((b - g) as i64));
            }
        }
        *m = acc.value();
    }
    Pmf { support_offset: 0, masses }
}

/// Buffer-occupancy PMFs for the `rounds` spending rounds that follow a
/// switch-on with a *known* occupancy `b0`. Element `j` (0-based) is the PMF
/// of the occupancy after `j + 1` spending rounds.
pub fn buffer_pmf_recursion(d_pmf: &Pmf, b0: u64, rounds: u32) -> Result<Vec<Pmf>> {
    buffer_pmf_recursion_from(&Pmf::point_mass(b0 as i64), d_pmf, rounds)
}

/// Same recursion started from an arbitrary occupancy distribution.
pub fn buffer_pmf_recursion_from(start: &Pmf, d_pmf: &Pmf, rounds: u32) -> Result<Vec<Pmf>> {
    check_nonneg_support(start, "buffer occupancy PMF")?;
    if rounds == 0 {
        return Err(domain_err("recursion needs rounds >= 1"));
    }
    let mut out = Vec::with_capacity(rounds as usize);
    let mut cur = start.clone();
    for _ in 0..rounds {
        cur = spend_step(&cur, d_pmf);
        out.push(cur.clone());
    }
    Ok(out)
}

/// Occupancy PMF after `rounds` accumulation-only rounds from an empty
/// buffer (the pre-switch-on phase of the intermediate scheme).
pub fn accumulation_pmf(d_pmf: &Pmf, rounds: u32) -> Result<Pmf> {
    let mut cur = Pmf::point_mass(0);
    for _ in 0..rounds {
        cur = accumulate_step(&cur, d_pmf);
    }
    Ok(cur)
}

/// Mean broadcast length of a round entered with exactly `b` buffered bits,
/// for i.i.d. `N_AR, N_BR ~ key_pmf`:
///
/// `E = sum_{z1 > b} P(z1) * sum_{z2 <= z1-b-1} z2 P(z2)
///    + sum_{z2} P(z2) * sum_{z1 <= min(n, b+z2)} z1 P(z1)`
///
/// (first term: deficit exceeds the buffer, key truncated to `N_BR`; second:
/// full `N_AR` delivered). For `b >= n` this is exactly the key-PMF mean.
pub fn expected_nxor_given_buffer(key_pmf: &Pmf, b: u64) -> Result<f64> {
    check_nonneg_support(key_pmf, "key-length PMF")?;
    let n = key_pmf.max_support();
    let b = b as i64;
    // s1[k] = sum_{z <= k} z P(z)
    let mut s1 = vec![0.0; (n + 1) as usize];
    {
        let mut acc = KahanSum::default();
        for (k, slot) in s1.iter_mut().enumerate() {
            acc.add(k as f64 * key_pmf.prob(k as i64));
            *slot = acc.value();
        }
    }
    let s1_at = |k: i64| -> f64 {
        if k < 0 {
            0.0
        } else {
            s1[k.min(n) as usize]
        }
    };
    let mut acc = KahanSum::default();
    for z1 in (b + 1)..=n {
        acc.add(key_pmf.prob(z1) * s1_at(z1 - b - 1));
    }
    for z2 in 0..=n {
        acc.add(key_pmf.prob(z2) * s1_at(b + z2));
    }
    Ok(acc.value())
}

/// Mean broadcast length of a round whose entering occupancy follows
/// `buffer_pmf`: the mixture of `expected_nxor_given_buffer` over it.
pub fn expected_nxor(key_pmf: &Pmf, buffer_pmf: &Pmf) -> Result<f64> {
    check_nonneg_support(buffer_pmf, "buffer occupancy PMF")?;
    let n = key_pmf.max_support();
    let mean = key_pmf.mean();
    let mut cond = Vec::new();
    let mut acc = KahanSum::default();
    for (i, &pb) in buffer_pmf.masses.iter().enumerate() {
        if pb == 0.0 {
            continue;
        }
        let b = buffer_pmf.min_support() + i as i64;
        let e = if b >= n {
            mean
        } else {
            while cond.len() <= b as usize {
                cond.push(expected_nxor_given_buffer(key_pmf, cond.len() as u64)?);
            }
            cond[b as usize]
        };
        acc.add(pb * e);
    }
    Ok(acc.value())
}

/// Mean broadcast length of the min scheme (empty buffer every round).
pub fn min_scheme_expected_nxor(key_pmf: &Pmf) -> Result<f64> {
    expected_nxor_given_buffer(key_pmf, 0)
}

/// Mean broadcast length of the optimal scheme (never truncates).
pub fn optimal_scheme_expected_nxor(key_pmf: &Pmf) -> f64 {
    key_pmf.mean()
}

/// Mean broadcast length of the intermediate scheme for rounds `1..=rounds`,
/// with spending enabled from round `switch_on + 1`. Rounds up to the
/// switch-on behave as the min scheme while the buffer accumulates; later
/// rounds mix the conditional mean over the evolving occupancy PMF.
pub fn intermediate_expected_nxor_curve(
    key_pmf: &Pmf,
    switch_on: u64,
    rounds: u64,
) -> Result<Vec<f64>> {
    check_nonneg_support(key_pmf, "key-length PMF")?;
    let d_pmf = difference_pmf(key_pmf, key_pmf);
    let e_min = min_scheme_expected_nxor(key_pmf)?;
    let mut curve = Vec::with_capacity(rounds as usize);
    let mut cur: Option<Pmf> = None;
    for m in 1..=rounds {
        if m <= switch_on {
            curve.push(e_min);
        } else {
            let occupancy = match cur.take() {
                Some(p) => p,
                None => accumulation_pmf(&d_pmf, switch_on as u32)?,
            };
            curve.push(expected_nxor(key_pmf, &occupancy)?);
            cur = Some(spend_step(&occupancy, &d_pmf));
        }
    }
    Ok(curve)
}
