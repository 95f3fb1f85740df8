//! End-to-end Monte Carlo protocol simulator, plus the beta-optimization
//! objective for the practical (finite-blocklength, two-level keygen) regime.
//!
//! A trial runs `rounds` protocol rounds: probe both links, quantize and
//! reconcile bits, build the relay's XOR broadcast, draw the broadcast
//! channel and decide outage under the configured model, then recover at
//! node B and check the buffer replicas. Trials are sharded over threads;
//! every trial owns RNG substream `(seed, trial)`, so reports are
//! bit-identical regardless of thread count.
//!
//! Reconciliation idealization: a kept sample's bit is taken from the
//! relay's observation at both ends of a link. The residual disagreement
//! probability is capped by the configured `epsilon` target and treated as
//! resolved by the information-reconciliation layer; `keygen` quantifies it.

use crate::buffer::{
    build_xor_message, ensure_replicas_match, intermediate_expected_nxor_curve,
    min_scheme_expected_nxor, optimal_scheme_expected_nxor, recover_at_node_b, BufferState,
    RoundOutcome, SchemeKind,
};
use crate::channel::{run_probe_phase, sample_channel, trial_rng};
use crate::fbl::{conditional_error, fbl_outage_probability, FblParams};
use crate::keygen::{key_length_pmf, probe_law, quantize_and_reconcile, select_guard_band};
use crate::optimize::{optimize_throughput_grid, OptResult};
use crate::rate::{key_rate_m, throughput, LosWeight, RateReport};
use crate::special::LOG2_E;
use crate::{db_to_rho, domain_err, BitKey, LosParam, Result};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Power split: a fixed value or "optimize".
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Fixed(f64),
    Keyword(BetaKeyword),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaKeyword {
    Optimize,
}

/// Buffer policy, config-file shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeSpec {
    Optimal,
    Min,
    Intermediate { switch_on: u64 },
}

impl SchemeSpec {
    pub fn kind(self) -> SchemeKind {
        match self {
            SchemeSpec::Optimal => SchemeKind::Optimal,
            SchemeSpec::Min => SchemeKind::Min,
            SchemeSpec::Intermediate { switch_on } => SchemeKind::Intermediate { switch_on },
        }
    }
}

/// How a round's broadcast success is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutageModel {
    /// Hard threshold: outage iff `log2(1 + Gamma) < N_XOR / L`.
    AsymptoticMarcumQ,
    /// Dispersion-based block error drawn with its conditional probability.
    FiniteBlocklength,
}

/// Where per-round key bits come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KeySource {
    /// Deterministic `floor(L * M)` bits per round per link: the optimal
    /// key generation stand-in behind the closed-form throughput.
    Fluid,
    /// Two-level-crossing quantization of sampled probes.
    #[default]
    Practical,
}

/// Experimental knobs for one simulator run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub c_ar: LosParam,
    pub c_br: LosParam,
    pub rho_db: f64,
    pub beta: BetaSpec,
    #[serde(rename = "L")]
    pub l: u32,
    pub rounds: u32,
    pub trials: u32,
    pub scheme: SchemeSpec,
    /// Target conditional bit-error rate of the guard-band selection.
    pub epsilon: f64,
    pub outage_model: OutageModel,
    pub seed: u64,
    #[serde(default)]
    pub key_source: KeySource,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.rounds == 0 || self.trials == 0 {
            return Err(domain_err("L, rounds and trials must all be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(domain_err(format!(
                "epsilon must be in (0,1), got {}",
                self.epsilon
            )));
        }
        if !self.rho_db.is_finite() {
            return Err(domain_err("rho_db must be finite"));
        }
        if let BetaSpec::Fixed(b) = self.beta {
            if !(0.0 < b && b < 1.0) {
                return Err(domain_err(format!("beta must be in (0,1), got {b}")));
            }
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        db_to_rho(self.rho_db)
    }

    pub fn symmetric(&self) -> bool {
        self.c_ar == self.c_br
    }
}

/// Aggregated outcome of a simulator run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub beta_used: f64,
    /// Mean broadcast length per round index (length = rounds).
    pub mean_nxor_per_round: Vec<f64>,
    /// Delivered key bits per coherence-block per round.
    pub throughput_estimate: f64,
    pub throughput_stderr: f64,
    pub outage_rate: f64,
    pub outage_stderr: f64,
    /// Closed-form figures at the broadcast link's parameters.
    pub analytic_reference: Option<RateReport>,
}

/// Resolves the configured power split. "optimize" maximizes the analytic
/// throughput for the asymptotic model and the practical objective (on the
/// documented coarse grid) for the finite-blocklength model.
pub fn resolve_beta(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.beta {
        BetaSpec::Fixed(b) => Ok(b),
        BetaSpec::Keyword(BetaKeyword::Optimize) => match cfg.outage_model {
            OutageModel::AsymptoticMarcumQ => {
                let r: OptResult =
                    optimize_throughput_grid(cfg.c_br, cfg.rho(), LosWeight::Half)?;
                Ok(r.beta_star)
            }
            OutageModel::FiniteBlocklength => {
                let (beta, _) = practical_beta_argmax(cfg, &practical_beta_grid())?;
                Ok(beta)
            }
        },
    }
}

/// Coarse grid used when optimizing the practical objective: 0.70 to 0.98
/// in steps of 0.0125 (the objective is flat near its peak; finer grids only
/// move the argmax within the plateau).
pub fn practical_beta_grid() -> Vec<f64> {
    (0..23).map(|i| 0.70 + 0.0125 * i as f64).collect()
}

fn scheme_pad_seed(seed: u64, trial: u64) -> u64 {
    // distinct from the probe stream; both replicas of a trial share it
    (seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(trial.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

/// Per-link constants a trial needs every round.
#[derive(Debug, Clone, Copy)]
enum KeyDraw {
    /// Quantize fresh probes against fixed thresholds.
    Practical { c: LosParam, t_lo: f64, t_hi: f64 },
    /// Emit exactly this many uniform bits.
    Fluid { bits: usize },
}

struct TrialOutput {
    nxor_per_round: Vec<u32>,
    delivered_total: u64,
    outage_rounds: u32,
    trajectory: Option<Vec<RoundOutcome>>,
}

fn run_trial(
    cfg: &ExperimentConfig,
    beta: f64,
    scheme: SchemeKind,
    links: &(KeyDraw, KeyDraw),
    trial: u64,
    want_trajectory: bool,
) -> Result<TrialOutput> {
    let mut rng = trial_rng(cfg.seed, trial);
    let rho = cfg.rho();
    let l = cfg.l;
    let bcast_power = (1.0 - beta) * rho;
    let mut buf_r = BufferState::new(scheme, scheme_pad_seed(cfg.seed, trial));
    let mut buf_b = buf_r.clone();
    let mut nxor_per_round = Vec::with_capacity(cfg.rounds as usize);
    let mut delivered_total = 0u64;
    let mut outage_rounds = 0u32;
    let mut trajectory = want_trajectory.then(Vec::new);

    for _ in 0..cfg.rounds {
        let k_ar = draw_link_key(&links.0, rho, beta, l, &mut rng)?;
        let k_br = draw_link_key(&links.1, rho, beta, l, &mut rng)?;
        let (n_ar, n_br) = (k_ar.len(), k_br.len());
        let buffer_before = buf_r.size();
        let k_xor = build_xor_message(&k_ar, &k_br, &mut buf_r, scheme)?;
        let n_xor = k_xor.len();
        let gamma = sample_channel(cfg.c_br, &mut rng).norm_sqr() * bcast_power;
        let rate_bits = n_xor as f64 / l as f64;
        let outage = match cfg.outage_model {
            OutageModel::AsymptoticMarcumQ => gamma.ln_1p() * LOG2_E < rate_bits,
            OutageModel::FiniteBlocklength => {
                rng.gen::<f64>() < conditional_error(l, rate_bits, gamma)?
            }
        };
        // the buffer update commits whether or not the broadcast survived;
        // both ends learn the outcome over the public channel
        let k_ar_hat = recover_at_node_b(&k_xor, &k_br, &mut buf_b)?;
        debug_assert!(k_ar_hat[..] == k_ar[..n_xor]);
        ensure_replicas_match(&buf_r, &buf_b)?;
        let delivered = if outage { 0 } else { n_xor };
        delivered_total += delivered as u64;
        outage_rounds += u32::from(outage);
        nxor_per_round.push(n_xor as u32);
        if let Some(t) = trajectory.as_mut() {
            t.push(RoundOutcome {
                n_ar,
                n_br,
                n_xor,
                buffer_before,
                buffer_after: buf_r.size(),
                outage,
                delivered_bits: delivered,
            });
        }
    }
    Ok(TrialOutput { nxor_per_round, delivered_total, outage_rounds, trajectory })
}

fn draw_link_key<R: Rng + ?Sized>(
    link: &KeyDraw,
    rho: f64,
    beta: f64,
    l: u32,
    rng: &mut R,
) -> Result<BitKey> {
    match *link {
        KeyDraw::Practical { c, t_lo, t_hi } => {
            let n = 2 * l as usize;
            let mut x_a = Vec::with_capacity(n);
            let mut x_b = Vec::with_capacity(n);
            for _ in 0..n {
                let p = run_probe_phase(c, rho, beta, rng)?;
                x_a.push(p.x_a);
                x_b.push(p.x_b);
            }
            // the relay-side string is the reconciled key at both ends
            let (_, bits_relay) = quantize_and_reconcile(&x_a, &x_b, t_lo, t_hi)?;
            Ok(bits_relay)
        }
        KeyDraw::Fluid { bits } => Ok(draw_random_bits(bits, rng)),
    }
}

fn draw_random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> BitKey {
    (0..n).map(|_| rng.gen::<bool>()).collect()
}

fn batch_stats(per_trial: &[f64]) -> (f64, f64) {
    let n = per_trial.len();
    let mean = per_trial.iter().sum::<f64>() / n as f64;
    let nb = n.min(30);
    if nb < 2 {
        return (mean, 0.0);
    }
    let mut batch_means = Vec::with_capacity(nb);
    for b in 0..nb {
        let lo = b * n / nb;
        let hi = (b + 1) * n / nb;
        let m = per_trial[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        batch_means.push(m);
    }
    let bm = batch_means.iter().sum::<f64>() / nb as f64;
    let var = batch_means.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>() / (nb - 1) as f64;
    (mean, (var / nb as f64).sqrt())
}

/// Runs the configured experiment; optionally returns trial 0's per-round
/// trajectory for dumping.
pub fn run_experiment_full(
    cfg: &ExperimentConfig,
    want_trajectory: bool,
) -> Result<(ExperimentReport, Option<Vec<RoundOutcome>>)> {
    cfg.validate()?;
    let asymmetric = !cfg.symmetric();
    // With unequal LOS the surplus-banking protocol is not used: the relay
    // truncates to the shorter key every round (the buffer stays idle), and
    // all broadcast math runs at the broadcast link's LOS.
    let scheme = if asymmetric { SchemeKind::Min } else { cfg.scheme.kind() };
    let beta = resolve_beta(cfg)?;
    let rho = cfg.rho();
    let prep_link = |c: LosParam| -> Result<KeyDraw> {
        match cfg.key_source {
            KeySource::Practical => {
                let law = probe_law(c, rho, beta)?;
                let sel = select_guard_band(&law, cfg.epsilon)?;
                let (t_lo, t_hi) = sel.band.thresholds(&law);
                Ok(KeyDraw::Practical { c, t_lo, t_hi })
            }
            KeySource::Fluid => Ok(KeyDraw::Fluid {
                bits: (cfg.l as f64 * key_rate_m(c, rho, beta)?).floor() as usize,
            }),
        }
    };
    let links = (prep_link(cfg.c_ar)?, prep_link(cfg.c_br)?);

    let outputs: Vec<TrialOutput> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, beta, scheme, &links, t, want_trajectory && t == 0))
        .collect::<Result<_>>()?;

    let rounds = cfg.rounds as usize;
    let mut nxor_sums = vec![0u64; rounds];
    for out in &outputs {
        for (m, &v) in out.nxor_per_round.iter().enumerate() {
            nxor_sums[m] += v as u64;
        }
    }
    let trials_f = cfg.trials as f64;
    let mean_nxor_per_round: Vec<f64> =
        nxor_sums.iter().map(|&s| s as f64 / trials_f).collect();
    let per_block = (cfg.l as f64) * (cfg.rounds as f64);
    let thr: Vec<f64> =
        outputs.iter().map(|o| o.delivered_total as f64 / per_block).collect();
    let out_rate: Vec<f64> =
        outputs.iter().map(|o| o.outage_rounds as f64 / cfg.rounds as f64).collect();
    let (throughput_estimate, throughput_stderr) = batch_stats(&thr);
    let (outage_rate, outage_stderr) = batch_stats(&out_rate);
    let analytic_reference = throughput(cfg.c_br, rho, beta).ok();
    let trajectory = outputs.into_iter().next().and_then(|o| o.trajectory);
    Ok((
        ExperimentReport {
            beta_used: beta,
            mean_nxor_per_round,
            throughput_estimate,
            throughput_stderr,
            outage_rate,
            outage_stderr,
            analytic_reference,
        },
        trajectory,
    ))
}

/// Runs the configured experiment end to end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_full(cfg, false).map(|(r, _)| r)
}

/// Dedicated entry point for the unequal-LOS mode: requires `c_ar != c_br`
/// and runs the truncate-to-shorter protocol (see `run_experiment_full`).
pub fn asymmetric_mode(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.symmetric() {
        return Err(domain_err("asymmetric mode needs c_ar != c_br"));
    }
    run_experiment(cfg)
}

/// One evaluated point of the practical throughput objective.
#[derive(Debug, Clone, Copy)]
pub struct PracticalPoint {
    pub beta: f64,
    /// Per-sample keep probability at the selected guard band.
    pub p_keep: f64,
    /// Mean broadcast length (bits/round) under the configured scheme.
    pub e_nxor: f64,
    /// Code rate of the broadcast, `E[N_XOR] / L`.
    pub rate: f64,
    /// Finite-blocklength outage at that rate.
    pub fbl_pout: f64,
    /// `E[N_XOR] * (1 - P_out) / L`: delivered bits per coherence-block.
    pub objective: f64,
}

/// Evaluates the practical objective `E[N_XOR] (1 - P_out(R))` (normalized
/// per coherence-block) at one `beta`, composing the guard-band analytics
/// with the finite-blocklength outage at rate `R = E[N_XOR]/L`.
///
/// For the intermediate scheme the mean at round `rounds` is used.
pub fn practical_point(
    c: LosParam,
    rho: f64,
    beta: f64,
    l: u32,
    epsilon: f64,
    scheme: SchemeSpec,
    rounds: u32,
) -> Result<PracticalPoint> {
    let law = probe_law(c, rho, beta)?;
    let sel = select_guard_band(&law, epsilon)?;
    let key_pmf = key_length_pmf(l, sel.p_keep)?;
    let e_nxor = match scheme {
        SchemeSpec::Optimal => optimal_scheme_expected_nxor(&key_pmf),
        SchemeSpec::Min => min_scheme_expected_nxor(&key_pmf)?,
        SchemeSpec::Intermediate { switch_on } => {
            let curve =
                intermediate_expected_nxor_curve(&key_pmf, switch_on, rounds.max(1) as u64)?;
            *curve.last().expect("rounds >= 1")
        }
    };
    let rate = e_nxor / l as f64;
    let fbl_pout = fbl_outage_probability(&FblParams { l, rate, c, rho, beta })?;
    Ok(PracticalPoint {
        beta,
        p_keep: sel.p_keep,
        e_nxor,
        rate,
        fbl_pout,
        objective: e_nxor * (1.0 - fbl_pout) / l as f64,
    })
}

/// The scalar practical objective at one `beta` under `cfg`'s fixed knobs.
pub fn practical_throughput_objective(cfg: &ExperimentConfig, beta: f64) -> Result<f64> {
    Ok(practical_point(cfg.c_br, cfg.rho(), beta, cfg.l, cfg.epsilon, cfg.scheme, cfg.rounds)?
        .objective)
}

/// Argmax of the practical objective over an explicit beta grid
/// (ties toward the smaller beta).
pub fn practical_beta_argmax(cfg: &ExperimentConfig, grid: &[f64]) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(domain_err("beta grid must be non-empty"));
    }
    let points: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&b| practical_throughput_objective(cfg, b).map(|v| (b, v)))
        .collect::<Result<_>>()?;
    let mut best = points[0];
    for &(b, v) in &points[1..] {
        if v > best.1 {
            best = (b, v);
        }
    }
    Ok(best)
}

/// Sweep rows for the key-length/outage tradeoff: for each beta, the mean
/// key length and FBL outage of both the optimal and min schemes.
#[derive(Debug, Clone, Copy)]
pub struct KeyLengthSweepRow {
    pub beta: f64,
    pub e_opt: f64,
    pub pout_opt: f64,
    pub e_min: f64,
    pub pout_min: f64,
}

pub fn key_length_sweep(
    c: LosParam,
    rho: f64,
    l: u32,
    epsilon: f64,
    betas: &[f64],
) -> Result<Vec<KeyLengthSweepRow>> {
    betas
        .par_iter()
        .map(|&beta| {
            let opt = practical_point(c, rho, beta, l, epsilon, SchemeSpec::Optimal, 1)?;
            let min = practical_point(c, rho, beta, l, epsilon, SchemeSpec::Min, 1)?;
            Ok(KeyLengthSweepRow {
                beta,
                e_opt: opt.e_nxor,
                pout_opt: opt.fbl_pout,
                e_min: min.e_nxor,
                pout_min: min.fbl_pout,
            })
        })
        .collect()
}

/// Finds where the optimal-scheme outage column crosses `target` by linear
/// interpolation over the sweep grid, then linearly interpolates the key
/// lengths at the crossing.
pub fn interpolate_at_outage(
    rows: &[KeyLengthSweepRow],
    target_pout: f64,
) -> Result<(f64, f64, f64)> {
    for w in rows.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (a.pout_opt, b.pout_opt);
        if (pa - target_pout) * (pb - target_pout) <= 0.0 && pa != pb {
            let t = (target_pout - pa) / (pb - pa);
            let beta = a.beta + t * (b.beta - a.beta);
            let e_opt = a.e_opt + t * (b.e_opt - a.e_opt);
            let e_min = a.e_min + t * (b.e_min - a.e_min);
            return Ok((beta, e_opt, e_min));
        }
    }
    Err(crate::ModelError::NoRoot(format!(
        "outage level {target_pout} not crossed on the sweep grid"
    )))
}

/// Integer-level fast path: empirical mean broadcast length per round under
/// a scheme, sampling only the key-length pair per round (the bit content
/// is irrelevant to the lengths). Deterministic given the seed.
pub fn empirical_nxor_curve(
    l: u32,
    p_keep: f64,
    scheme: SchemeKind,
    rounds: u32,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p_keep) {
        return Err(domain_err("p_keep must be in [0,1]"));
    }
    let n = 2 * l as u64;
    let bin = Binomial::new(n, p_keep).map_err(|e| domain_err(e.to_string()))?;
    let sums: Vec<u64> = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; rounds as usize],
            |mut acc, t| {
                let mut rng = trial_rng(seed, t);
                let mut b: u64 = 0;
                for (m, slot) in acc.iter_mut().enumerate() {
                    let n_ar = bin.sample(&mut rng);
                    let n_br = bin.sample(&mut rng);
                    let spendable = match scheme {
                        SchemeKind::Min => 0,
                        SchemeKind::Optimal => u64::MAX,
                        SchemeKind::Intermediate { switch_on } => {
                            if (m as u64 + 1) > switch_on {
                                b
                            } else {
                                0
                            }
                        }
                    };
                    let n_xor = if n_ar <= n_br {
                        if scheme != SchemeKind::Min {
                            b += n_br - n_ar;
                        }
                        n_ar
                    } else if n_ar - n_br <= spendable {
                        b -= (n_ar - n_br).min(b);
                        n_ar
                    } else {
                        n_br
                    };
                    *slot += n_xor;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; rounds as usize],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(sums.into_iter().map(|s| s as f64 / trials as f64).collect())
}

/// Integer-level fast path for the occupancy distribution: histogram of the
/// buffer size after `rounds` spending rounds from a known occupancy `b0`
/// (the process behind the closed-form occupancy recursion).
pub fn empirical_spend_histogram(
    l: u32,
    p_keep: f64,
    b0: u64,
    rounds: u32,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p_keep) {
        return Err(domain_err("p_keep must be in [0,1]"));
    }
    let n = 2 * l as u64;
    let bin = Binomial::new(n, p_keep).map_err(|e| domain_err(e.to_string()))?;
    let max_b = (b0 + rounds as u64 * n) as usize;
    let counts: Vec<u64> = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; max_b + 1],
            |mut acc, t| {
                let mut rng = trial_rng(seed, t);
                let mut b = b0 as i64;
                for _ in 0..rounds {
                    let d = bin.sample(&mut rng) as i64 - bin.sample(&mut rng) as i64;
                    if d <= b {
                        b -= d;
                    }
                }
                acc[b as usize] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; max_b + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

const MC_CHUNK: u64 = 1 << 16;

/// Monte Carlo estimate (mean, stderr) of the hard-threshold outage at an
/// arbitrary broadcast rate, by direct channel sampling. Draws are split
/// into fixed 2^16-sample substreams, so the estimate is seed-deterministic
/// under any thread count.
pub fn mc_outage_estimate(
    c: LosParam,
    rho: f64,
    beta: f64,
    rate_bits: f64,
    draws: u64,
    seed: u64,
) -> (f64, f64) {
    let bcast = (1.0 - beta) * rho;
    let chunks = draws.div_ceil(MC_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = trial_rng(seed, ch);
            let n = MC_CHUNK.min(draws - ch * MC_CHUNK);
            let mut h = 0u64;
            for _ in 0..n {
                let gamma = sample_channel(c, &mut rng).norm_sqr() * bcast;
                h += u64::from(gamma.ln_1p() * LOG2_E < rate_bits);
            }
            h
        })
        .sum();
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

/// Monte Carlo estimate (mean, stderr) of the finite-blocklength outage:
/// the average of the conditional block-error probability over channel
/// draws. Chunked like `mc_outage_estimate` for determinism.
pub fn mc_fbl_estimate(p: &FblParams, draws: u64, seed: u64) -> Result<(f64, f64)> {
    p.validate()?;
    let bcast = (1.0 - p.beta) * p.rho;
    let chunks = draws.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = trial_rng(seed, ch);
            let n = MC_CHUNK.min(draws - ch * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let gamma = sample_channel(p.c, &mut rng).norm_sqr() * bcast;
                let e = conditional_error(p.l, p.rate, gamma)?;
                s += e;
                s2 += e * e;
            }
            Ok((s, s2))
        })
        .collect::<Result<_>>()?;
    let n = draws as f64;
    let (s, s2) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok((mean, (var / n).sqrt()))
}
