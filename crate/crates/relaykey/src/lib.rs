//! Numerical library and Monte Carlo simulator for buffer-aided relay key
//! generation at the physical layer.
//!
//! A relay R shares reciprocal-channel probes with two nodes A and B over L
//! coherence-blocks (power fraction `beta` of the budget), each pair distills
//! a secret bit string, and R broadcasts the XOR of the two strings (power
//! fraction `1 - beta`), padding length mismatches from a LIFO buffer of
//! previously unused bits. The crate provides:
//!
//! - closed-form key rate, Marcum-Q outage and throughput, plus a piecewise
//!   lower bound with known unimodality regions ([`rate`]);
//! - optimizers for the power split `beta` ([`optimize`]);
//! - the two-level-crossing key generator with guard-band selection and exact
//!   key-length distributions ([`keygen`]);
//! - the XOR-broadcast buffer machine and exact buffer-occupancy recursions
//!   ([`buffer`]);
//! - finite-blocklength (dispersion-based) outage of the broadcast ([`fbl`]);
//! - an end-to-end protocol simulator with analytic cross-checks ([`sim`]).

// domain guards are written `!(x > lo)` on purpose: the negation also
// rejects NaN, which `x <= lo` would silently let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buffer;
pub mod channel;
pub mod fbl;
pub mod keygen;
pub mod optimize;
pub mod pmf;
pub mod quad;
pub mod rate;
pub mod sim;
pub mod special;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature failed to reach requested tolerance (err={err:.3e}, tol={tol:.3e})")]
    Quadrature { err: f64, tol: f64 },
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("buffer replica inconsistency: {0}")]
    ReplicaDivergence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A secret bit string (index 0 transmitted first; stack pushes append).
pub type BitKey = Vec<bool>;

fn domain_err(msg: impl Into<String>) -> ModelError {
    ModelError::Domain(msg.into())
}

/// Line-of-sight fraction of the Ricean channel, `c` in [0, 1].
/// `c = 0` is pure Rayleigh scattering, `c = 1` a deterministic channel;
/// the Rice factor is `K = c / (1 - c)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct LosParam(f64);

impl From<LosParam> for f64 {
    fn from(c: LosParam) -> f64 {
        c.0
    }
}

impl TryFrom<f64> for LosParam {
    type Error = ModelError;

    fn try_from(c: f64) -> Result<Self> {
        LosParam::new(c)
    }
}

impl LosParam {
    pub fn new(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) || !c.is_finite() {
            return Err(domain_err(format!("LOS fraction must be in [0,1], got {c}")));
        }
        Ok(LosParam(c))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// One relay-network operating point.
#[derive(Debug, Clone, Copy)]
pub struct LinkParams {
    pub c: LosParam,
    /// SNR as a linear power ratio, `rho = P / gamma` with unit noise power.
    pub rho: f64,
    /// Coherence-blocks per key-generation round.
    pub l: u32,
    /// Fraction of the power budget spent on probing; `1 - beta` feeds the broadcast.
    pub beta: f64,
}

impl LinkParams {
    pub fn new(c: LosParam, rho: f64, l: u32, beta: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(domain_err(format!("rho must be positive, got {rho}")));
        }
        if !(0.0 < beta && beta < 1.0) {
            return Err(domain_err(format!("beta must be in (0,1), got {beta}")));
        }
        if l == 0 {
            return Err(domain_err("L must be >= 1"));
        }
        Ok(LinkParams { c, rho, l, beta })
    }
}

/// Converts an SNR quoted in dB to the linear ratio used internally.
///
/// The complex noise is normalized to unit total power, i.e. 1/2 per real
/// dimension, and quoted dB figures are referenced to the per-dimension
/// noise floor: `rho = 2 * 10^(dB/10)`.
#[inline]
pub fn db_to_rho(db: f64) -> f64 {
    2.0 * 10f64.powf(db / 10.0)
}
