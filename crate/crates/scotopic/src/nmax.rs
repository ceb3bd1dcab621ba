//! Photon-cutoff search: decides how many per-photon accuracies the data can
//! actually support.
//!
//! The reconstruction tabulates accuracies up to a cutoff and carries one
//! probe coordinate for the first photon number past it. If the data drags
//! the probe's posterior away from its prior, accuracies above the cutoff
//! still hold signal and the cutoff must grow. Agreement is scored by a
//! standardized quantile shift between prior and posterior probe chains,
//! against a threshold calibrated from prior-only replications.

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::density_mode;
use crate::error::{Error, Result};
use crate::mcmc::{sample_posterior, ChainSet, McmcConfig};
use crate::prior::{PriorSpec, MAX_NMAX};
use crate::rng::{derive_seed, stream_rng};
use crate::source::{PhotonProbMatrix, SourceConfig};

/// Fewest prior-only replications accepted when calibrating the threshold;
/// below this the 97.5% quantile estimate is too noisy to act on.
pub const MIN_CALIBRATION_REPS: usize = 500;

/// Highest probe floor the search will set. Data that pins the top accuracy
/// at 1 would otherwise push the floor onto 1 itself and leave the probe no
/// room to live in.
pub const MAX_PROBE_FLOOR: f64 = 1.0 - 1e-4;

/// Quantile level of the null max |C| distribution used as the threshold.
const CUTOFF_QUANTILE: f64 = 0.975;

/// Probability levels at which prior and posterior quantiles are compared.
/// The closed ends are left out: empirical quantiles there reduce to sample
/// extremes, which never stabilize.
pub fn quantile_grid() -> Vec<f64> {
    (1..=99).map(|i| f64::from(i) / 100.0).collect()
}

/// Empirical quantile of a chain: the element at rank round(q * len) of the
/// ascending order statistics, 1-based and clamped into range.
pub fn inverse_cdf(chain: &[f64], q: f64) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::EmptyChain("inverse_cdf"));
    }
    check_quantile(q)?;
    let mut sorted = chain.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("chain values are comparable"));
    Ok(sorted_quantile(&sorted, q))
}

fn check_quantile(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {q} outside (0, 1]")));
    }
    Ok(())
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).round() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Quantile shift between two chains at level `q`, first minus second.
pub fn delta_statistic(prior: &[f64], posterior: &[f64], q: f64) -> Result<f64> {
    Ok(inverse_cdf(prior, q)? - inverse_cdf(posterior, q)?)
}

/// Standardized quantile shift at level `q` between two groups of chains.
///
/// Every prior chain is paired with every posterior chain; the statistic is
/// the mean pairwise shift over its sample standard deviation, so chain-to-
/// chain quantile noise sets the scale. Zero spread with zero mean counts as
/// perfect agreement and returns zero.
pub fn c_statistic(
    prior_chains: &[Vec<f64>],
    posterior_chains: &[Vec<f64>],
    q: f64,
) -> Result<f64> {
    check_quantile(q)?;
    let prior = sorted_copies(prior_chains)?;
    let posterior = sorted_copies(posterior_chains)?;
    Ok(c_from_sorted(&prior, &posterior, q))
}

/// Largest |C| across the whole quantile grid; the search's evidence score.
pub fn max_abs_c(prior_chains: &[Vec<f64>], posterior_chains: &[Vec<f64>]) -> Result<f64> {
    let prior = sorted_copies(prior_chains)?;
    let posterior = sorted_copies(posterior_chains)?;
    Ok(max_abs_c_sorted(&prior, &posterior))
}

fn sorted_copies(chains: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "the shift statistic needs at least 2 chains per side, got {}",
            chains.len()
        )));
    }
    chains
        .iter()
        .map(|c| {
            if c.is_empty() {
                return Err(Error::EmptyChain("c_statistic"));
            }
            let mut v = c.clone();
            v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("chain values are comparable"));
            Ok(v)
        })
        .collect()
}

fn c_from_sorted(prior: &[Vec<f64>], posterior: &[Vec<f64>], q: f64) -> f64 {
    let mut deltas = Vec::with_capacity(prior.len() * posterior.len());
    for p in prior {
        let pq = sorted_quantile(p, q);
        for s in posterior {
            deltas.push(pq - sorted_quantile(s, q));
        }
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 && mean == 0.0 {
        return 0.0;
    }
    mean / sd
}

fn max_abs_c_sorted(prior: &[Vec<f64>], posterior: &[Vec<f64>]) -> f64 {
    quantile_grid()
        .iter()
        .map(|&q| c_from_sorted(prior, posterior, q).abs())
        .fold(0.0, f64::max)
}

/// Decision threshold for the cutoff search, together with the settings it
/// was calibrated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffCalibration {
    pub n_mult: usize,
    pub n_mc: usize,
    pub replications: usize,
    pub extension_shape: (f64, f64),
    pub cutoff: f64,
}

impl CutoffCalibration {
    /// Key identifying the settings this threshold is valid for.
    pub fn cache_key(&self) -> String {
        calibration_cache_key(self.n_mult, self.extension_shape)
    }
}

/// Cache key for a threshold calibrated under the given settings. Chain
/// length and replication count are deliberately absent: the threshold is
/// insensitive to the first and the second only sets its noise.
pub fn calibration_cache_key(n_mult: usize, extension_shape: (f64, f64)) -> String {
    format!(
        "nmult{}-shape{:.6}-{:.6}-grid{:016x}",
        n_mult, extension_shape.0, extension_shape.1, grid_hash()
    )
}

fn grid_hash() -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for q in quantile_grid() {
        h ^= q.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Calibrates the acceptance threshold as the 97.5% quantile of max |C|
/// between two groups of chains drawn independently from the same raw
/// extension law, so a genuine shift must beat what sampling noise alone
/// produces.
pub fn calibrate_cutoff(
    n_mult: usize,
    n_mc: usize,
    replications: usize,
    extension_shape: (f64, f64),
    seed: u64,
) -> Result<CutoffCalibration> {
    if n_mult < 2 {
        return Err(Error::InvalidParameter(format!(
            "threshold calibration needs at least 2 chains per side, got {n_mult}"
        )));
    }
    if n_mc == 0 {
        return Err(Error::EmptyChain("calibrate_cutoff"));
    }
    if replications < MIN_CALIBRATION_REPS {
        return Err(Error::InvalidParameter(format!(
            "threshold calibration needs at least {MIN_CALIBRATION_REPS} replications, got {replications}"
        )));
    }
    let law = BetaSampler::new(extension_shape.0, extension_shape.1).map_err(|e| {
        Error::InvalidParameter(format!("extension shape {extension_shape:?} rejected: {e}"))
    })?;
    let mut maxima: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, &[rep as u64]);
            let prior = null_chain_group(&law, n_mult, n_mc, &mut rng);
            let posterior = null_chain_group(&law, n_mult, n_mc, &mut rng);
            max_abs_c_sorted(&prior, &posterior)
        })
        .collect();
    maxima.sort_unstable_by(|a, b| a.partial_cmp(b).expect("max |C| values are comparable"));
    let cutoff = sorted_quantile(&maxima, CUTOFF_QUANTILE);
    Ok(CutoffCalibration { n_mult, n_mc, replications, extension_shape, cutoff })
}

/// One group of `n_mult` independent chains from the raw extension law,
/// each already sorted.
fn null_chain_group<R: Rng + ?Sized>(
    law: &BetaSampler<f64>,
    n_mult: usize,
    n_mc: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n_mult)
        .map(|_| {
            let mut chain: Vec<f64> = (0..n_mc).map(|_| law.sample(rng)).collect();
            chain.sort_unstable_by(|a, b| a.partial_cmp(b).expect("beta draws are finite"));
            chain
        })
        .collect()
}

/// Schedules and switches for the cutoff search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    /// Sampler settings for the scanning stage.
    pub low: McmcConfig,
    /// Sampler settings for the confirmation stage.
    pub high: McmcConfig,
    /// Use the posterior mode of the top accuracy itself as the new probe
    /// floor instead of converting it to the detection-probability scale.
    pub accuracy_scale_floor: bool,
    /// Hard bound on the photon cutoff.
    pub max_nmax: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            low: McmcConfig::low(),
            high: McmcConfig::high(),
            accuracy_scale_floor: false,
            max_nmax: MAX_NMAX,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        self.low.validate()?;
        self.high.validate()?;
        if self.low.n_mult != self.high.n_mult {
            return Err(Error::InvalidParameter(format!(
                "both stages must multiplex alike, got {} and {}",
                self.low.n_mult, self.high.n_mult
            )));
        }
        if self.max_nmax == 0 || self.max_nmax > MAX_NMAX {
            return Err(Error::InvalidParameter(format!(
                "cutoff bound {} outside supported range 1..={MAX_NMAX}",
                self.max_nmax
            )));
        }
        Ok(())
    }
}

/// Which schedule produced a search step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Low,
    High,
}

/// One sampler run inside the cutoff search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionStep {
    pub n_max: usize,
    pub p_min: f64,
    pub max_abs_c: f64,
    pub stage: Stage,
}

/// Outcome of the cutoff search: the accepted cutoff, every step taken to
/// reach it and the confirmation-stage chains at acceptance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmaxResult {
    pub n_max_final: usize,
    pub trace: Vec<DetectionStep>,
    pub chains: ChainSet,
}

/// Searches for the smallest photon cutoff whose probe coordinate the data
/// leaves untouched.
///
/// The search starts one above the rounded top of the intensity grid. Each
/// candidate runs the cheap scanning schedule first; evidence past the
/// threshold grows the cutoff by one and raises the probe floor to what the
/// top accuracy's posterior mode implies. A candidate that passes the scan
/// must also pass the longer confirmation schedule unchanged, otherwise the
/// scan resumes one cutoff higher. Walking past the hard bound fails with
/// the last evidence score attached.
pub fn detect_nmax(
    sigma: &[u32],
    config: &SourceConfig,
    template: &PriorSpec,
    detect: &DetectConfig,
    calibration: &CutoffCalibration,
    seed: u64,
) -> Result<NmaxResult> {
    config.validate()?;
    template.validate()?;
    detect.validate()?;
    if calibration.n_mult != detect.low.n_mult {
        return Err(Error::InvalidParameter(format!(
            "threshold calibrated for {} multiplexed runs, sampler uses {}",
            calibration.n_mult, detect.low.n_mult
        )));
    }
    if calibration.extension_shape != template.extension_shape {
        return Err(Error::InvalidParameter(format!(
            "threshold calibrated for extension shape {:?}, prior uses {:?}",
            calibration.extension_shape, template.extension_shape
        )));
    }
    let grid = config.nbar_grid();
    let top = grid.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut n_max = top.round() as usize + 1;
    let mut p_min = template.p_min;
    let mut trace: Vec<DetectionStep> = Vec::new();
    let mut run = 0u64;
    loop {
        if n_max > detect.max_nmax {
            let last_c = trace.last().map_or(f64::INFINITY, |s| s.max_abs_c);
            return Err(Error::SearchExhausted { bound: detect.max_nmax, last_c });
        }
        let spec = respec(template, n_max, p_min)?;
        let rho = PhotonProbMatrix::build(config, n_max, true)?;

        let low_set =
            sample_posterior(sigma, config.trials, &rho, &spec, &detect.low, derive_seed(seed, &[run]))?;
        run += 1;
        let c_low = max_abs_c(&low_set.prior_extensions(), &low_set.posterior_extensions())?;
        trace.push(DetectionStep { n_max, p_min, max_abs_c: c_low, stage: Stage::Low });
        if !(c_low < calibration.cutoff) {
            (n_max, p_min) = grow(&low_set, p_min, detect)?;
            continue;
        }

        let high_set =
            sample_posterior(sigma, config.trials, &rho, &spec, &detect.high, derive_seed(seed, &[run]))?;
        run += 1;
        let c_high = max_abs_c(&high_set.prior_extensions(), &high_set.posterior_extensions())?;
        trace.push(DetectionStep { n_max, p_min, max_abs_c: c_high, stage: Stage::High });
        if c_high < calibration.cutoff {
            return Ok(NmaxResult { n_max_final: n_max, trace, chains: high_set });
        }
        (n_max, p_min) = grow(&high_set, p_min, detect)?;
    }
}

/// The template's hyper-shape choices carried over to a new cutoff.
fn respec(template: &PriorSpec, n_max: usize, p_min: f64) -> Result<PriorSpec> {
    let mut spec = PriorSpec::new(n_max, p_min)?;
    spec.extension_shape = template.extension_shape;
    spec.validate()?;
    Ok(spec)
}

/// Next candidate after rejecting a cutoff: one photon higher, with the
/// probe floor raised to the detection probability implied by the top
/// accuracy's posterior mode. The floor never backs off; lowering it would
/// let the probe slide under accuracies the data has already pinned. It also
/// never reaches 1, which would squeeze the probe's support away entirely.
fn grow(set: &ChainSet, p_min: f64, detect: &DetectConfig) -> Result<(usize, f64)> {
    let top = set.n_max;
    let mode = density_mode(&set.squeezed_posterior(|d| d.accuracy(top)))?;
    let candidate = if detect.accuracy_scale_floor { mode } else { 2.0 * mode - 1.0 };
    Ok((top + 1, p_min.max(candidate.clamp(0.0, MAX_PROBE_FLOOR))))
}
