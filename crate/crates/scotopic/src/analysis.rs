//! Chain summaries and figures of merit: highest-density intervals, kernel
//! density modes, the evidence ratio at chance, reconstruction error, and
//! aggregation of replicated runs into success probabilities with credible
//! intervals.

use rand::Rng;
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Minimum chain length for interval and mode estimates.
const MIN_CHAIN: usize = 100;

/// Shortest contiguous interval containing at least `mass` of the chain.
///
/// The interval spans ceil(mass·len) consecutive order statistics, so the
/// fraction of the chain inside is within sample-count granularity of the
/// requested mass.
pub fn hdi(chain: &[f64], mass: f64) -> Result<(f64, f64)> {
    if !(0.0 < mass && mass < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "interval mass {mass} outside (0, 1)"
        )));
    }
    if chain.len() < MIN_CHAIN {
        return Err(Error::ChainTooShort {
            what: "hdi",
            len: chain.len(),
        });
    }
    let mut sorted = chain.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("chain values are finite"));
    let k = (mass * sorted.len() as f64).ceil() as usize;
    let k = k.clamp(1, sorted.len());
    let mut best = (sorted[0], sorted[k - 1]);
    let mut best_len = best.1 - best.0;
    for i in 1..=(sorted.len() - k) {
        let len = sorted[i + k - 1] - sorted[i];
        if len < best_len {
            best_len = len;
            best = (sorted[i], sorted[i + k - 1]);
        }
    }
    Ok(best)
}

/// Largest chain evaluated by direct summation; bigger chains are binned.
const EXACT_EVAL_MAX: usize = 4096;

/// Gaussian kernel density estimate with optional reflection at fixed
/// boundaries. Evaluation sums kernels directly for small chains and
/// through a fine binning for large ones, so both stay cheap.
#[derive(Debug, Clone)]
pub struct Kde {
    data: KdeData,
    n: usize,
    h: f64,
    bounds: Option<(f64, f64)>,
    point_mass: Option<f64>,
}

#[derive(Debug, Clone)]
enum KdeData {
    Exact(Vec<f64>),
    Binned {
        grid_lo: f64,
        bin_width: f64,
        weights: Vec<f64>,
    },
}

impl Kde {
    /// Fits the estimator to `samples` with Silverman's bandwidth; when
    /// `bounds` is given, sample mass is mirrored back inside at both ends.
    pub fn new(samples: &[f64], bounds: Option<(f64, f64)>) -> Result<Kde> {
        if samples.is_empty() {
            return Err(Error::EmptyChain("kde"));
        }
        let n = samples.len();
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        if hi == lo {
            return Ok(Kde {
                data: KdeData::Exact(Vec::new()),
                n,
                h: 0.0,
                bounds,
                point_mass: Some(lo),
            });
        }
        let h = silverman_bandwidth(samples);
        let data = if n <= EXACT_EVAL_MAX {
            KdeData::Exact(samples.to_vec())
        } else {
            // Bins fine enough that displacing a sample to its bin centre
            // moves the kernel argument by at most an eighth of a bandwidth.
            let bins = (((hi - lo) / (h / 4.0)).ceil() as usize).clamp(2048, 1 << 18);
            let bin_width = (hi - lo) / bins as f64;
            let mut weights = vec![0.0; bins];
            for &x in samples {
                let j = (((x - lo) / bin_width) as usize).min(bins - 1);
                weights[j] += 1.0;
            }
            KdeData::Binned {
                grid_lo: lo,
                bin_width,
                weights,
            }
        };
        Ok(Kde {
            data,
            n,
            h,
            bounds,
            point_mass: None,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Density estimate at `x`.
    pub fn density(&self, x: f64) -> f64 {
        if let Some(v) = self.point_mass {
            return if x == v { f64::INFINITY } else { 0.0 };
        }
        let mut s = self.kernel_sum(x);
        if let Some((lo, hi)) = self.bounds {
            s += self.kernel_sum(2.0 * lo - x);
            s += self.kernel_sum(2.0 * hi - x);
        }
        s / (self.n as f64 * self.h)
    }

    fn kernel_sum(&self, t: f64) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        match &self.data {
            KdeData::Exact(samples) => {
                let mut s = 0.0;
                for &x in samples {
                    let u = (t - x) / self.h;
                    s += (-0.5 * u * u).exp() / norm;
                }
                s
            }
            KdeData::Binned {
                grid_lo,
                bin_width,
                weights,
            } => {
                let window = 8.0 * self.h;
                let lo_idx = ((t - window - grid_lo) / bin_width).floor().max(0.0) as usize;
                let hi_idx =
                    (((t + window - grid_lo) / bin_width).ceil().max(0.0) as usize).min(weights.len());
                let mut s = 0.0;
                for j in lo_idx..hi_idx {
                    let w = weights[j];
                    if w == 0.0 {
                        continue;
                    }
                    let c = grid_lo + (j as f64 + 0.5) * bin_width;
                    let u = (t - c) / self.h;
                    s += w * (-0.5 * u * u).exp() / norm;
                }
                s
            }
        }
    }
}

fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    let iqr = interpolated_quantile(&sorted, 0.75) - interpolated_quantile(&sorted, 0.25);
    // Heavy ties can zero the interquartile range while the spread is real.
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Argmax of the smoothed density on a 512-point grid over the sample range,
/// with reflection at the range ends.
pub fn density_mode(chain: &[f64]) -> Result<f64> {
    if chain.len() < MIN_CHAIN {
        return Err(Error::ChainTooShort {
            what: "density_mode",
            len: chain.len(),
        });
    }
    let lo = chain.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = chain.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    let kde = Kde::new(chain, Some((lo, hi)))?;
    let mut best_x = lo;
    let mut best_d = f64::NEG_INFINITY;
    for g in 0..512 {
        let x = lo + (hi - lo) * g as f64 / 511.0;
        let d = kde.density(x);
        if d > best_d {
            best_d = d;
            best_x = x;
        }
    }
    Ok(best_x)
}

/// Evidence ratio in decibels at `point`: 10·log₁₀ of posterior over prior
/// density, both estimated with reflection at the chance and ceiling
/// boundaries of the accuracy domain.
pub fn savage_dickey(prior_chain: &[f64], posterior_chain: &[f64], point: f64) -> Result<f64> {
    let bounds = Some((0.5, 1.0));
    let prior = Kde::new(prior_chain, bounds)?.density(point);
    if prior <= 0.0 || !prior.is_finite() {
        return Err(Error::ZeroPriorDensity);
    }
    let posterior = Kde::new(posterior_chain, bounds)?.density(point);
    Ok(10.0 * (posterior / prior).log10())
}

/// Mean squared error between reconstructed accuracy modes and the model's
/// accuracies for photon numbers 1..=n_max.
pub fn mse_accuracies(modes: &[f64], truth: &[f64], n_max: usize) -> Result<f64> {
    if modes.len() != n_max || truth.len() != n_max || n_max == 0 {
        return Err(Error::LengthMismatch(format!(
            "expected {n_max} modes and truths, got {} and {}",
            modes.len(),
            truth.len()
        )));
    }
    Ok(modes
        .iter()
        .zip(truth)
        .map(|(m, t)| (m - t) * (m - t))
        .sum::<f64>()
        / n_max as f64)
}

/// Highest-density interval at one mass level.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HdiInterval {
    pub mass: f64,
    pub low: f64,
    pub high: f64,
}

/// Location and interval summary of one scalar chain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub hdis: Vec<HdiInterval>,
    pub density_probes: Vec<(f64, f64)>,
}

/// Summarizes one chain: moments, mode, HDIs at the requested mass levels,
/// and density estimates at the probe points.
pub fn summarize_parameter(
    chain: &[f64],
    masses: &[f64],
    probe_points: &[f64],
) -> Result<ParameterSummary> {
    if chain.len() < MIN_CHAIN {
        return Err(Error::ChainTooShort {
            what: "summarize_parameter",
            len: chain.len(),
        });
    }
    let mean = chain.iter().sum::<f64>() / chain.len() as f64;
    let mut sorted = chain.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = interpolated_quantile(&sorted, 0.5);
    let mode = density_mode(chain)?;
    let mut hdis = Vec::with_capacity(masses.len());
    for &mass in masses {
        let (low, high) = hdi(chain, mass)?;
        hdis.push(HdiInterval { mass, low, high });
    }
    let density_probes = if probe_points.is_empty() {
        Vec::new()
    } else {
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let kde = Kde::new(chain, Some((lo, hi)))?;
        probe_points.iter().map(|&p| (p, kde.density(p))).collect()
    };
    Ok(ParameterSummary {
        mean,
        median,
        mode,
        hdis,
        density_probes,
    })
}

/// One replication's merit inputs: the evidence ratio, the chance-adjacent
/// accuracy's HDI, whether the true value fell inside it, and the
/// reconstruction error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReplicationRecord {
    pub r_sd: f64,
    pub a1_hdi: (f64, f64),
    pub a1_in_hdi: bool,
    pub mse: f64,
}

/// Posterior mean and central credible interval for a success probability.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CredibleInterval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Mean, spread, and bootstrap interval of a per-replication statistic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BootstrapStat {
    pub mean: f64,
    pub sd: f64,
    pub boot_low: f64,
    pub boot_high: f64,
}

/// Aggregated figures of merit over replications.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeritReport {
    pub n_replications: usize,
    pub p_success: CredibleInterval,
    pub p_a1_in_hdi: CredibleInterval,
    pub hdi_length: Option<BootstrapStat>,
    pub n_hdi_kept: usize,
    pub mse: BootstrapStat,
    pub bootstrap_resamples: usize,
}

/// Knobs for merit aggregation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeritConfig {
    /// Replications with an evidence ratio below this count as successes.
    pub r_sd_threshold: f64,
    /// Mass of the central credible interval on success probabilities.
    pub ci_mass: f64,
    /// HDIs whose lower bound is at or below this are dropped from the
    /// length statistics (they touch the chance boundary).
    pub hdi_exclusion_floor: f64,
    /// Replaces the conjugate success posterior beta(k+1, n−k+1) with
    /// beta(k+1, 101), fixing the second shape as if every design ran
    /// exactly 100 replications.
    pub fixed_denominator_posterior: bool,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for MeritConfig {
    fn default() -> Self {
        MeritConfig {
            r_sd_threshold: -5.0,
            ci_mass: 0.95,
            hdi_exclusion_floor: 0.501,
            fixed_denominator_posterior: false,
            bootstrap_resamples: 10_000,
            seed: 0,
        }
    }
}

/// Posterior summary of a success probability after observing `k` successes
/// in `n` trials, starting from a flat prior.
pub fn success_interval(
    k: usize,
    n: usize,
    ci_mass: f64,
    fixed_denominator: bool,
) -> Result<CredibleInterval> {
    if k > n || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "success count {k} out of {n}"
        )));
    }
    if !(0.0 < ci_mass && ci_mass < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "interval mass {ci_mass} outside (0, 1)"
        )));
    }
    let a = (k + 1) as f64;
    let b = if fixed_denominator {
        101.0
    } else {
        (n - k + 1) as f64
    };
    let law = Beta::new(a, b).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let tail = (1.0 - ci_mass) / 2.0;
    Ok(CredibleInterval {
        mean: a / (a + b),
        low: beta_quantile(&law, tail),
        high: beta_quantile(&law, 1.0 - tail),
    })
}

// The generic bisection behind inverse_cdf stops short of full precision;
// a few Newton steps polish the root to machine accuracy.
fn beta_quantile(law: &Beta, p: f64) -> f64 {
    let mut x = law.inverse_cdf(p);
    for _ in 0..4 {
        let pdf = law.pdf(x);
        if !(pdf > 0.0) || !pdf.is_finite() {
            break;
        }
        let next = (x - (law.cdf(x) - p) / pdf).clamp(0.0, 1.0);
        if !next.is_finite() || (next - x).abs() < 1e-15 {
            x = if next.is_finite() { next } else { x };
            break;
        }
        x = next;
    }
    x
}

/// Aggregates replication records into the report used to rank experimental
/// designs.
pub fn merit_from_replications(
    records: &[ReplicationRecord],
    cfg: &MeritConfig,
) -> Result<MeritReport> {
    if records.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replications, got {}",
            records.len()
        )));
    }
    let n = records.len();
    let k_success = records
        .iter()
        .filter(|r| r.r_sd < cfg.r_sd_threshold)
        .count();
    let k_cover = records.iter().filter(|r| r.a1_in_hdi).count();
    let p_success = success_interval(k_success, n, cfg.ci_mass, cfg.fixed_denominator_posterior)?;
    let p_a1_in_hdi = success_interval(k_cover, n, cfg.ci_mass, cfg.fixed_denominator_posterior)?;

    let kept: Vec<f64> = records
        .iter()
        .filter(|r| r.a1_hdi.0 > cfg.hdi_exclusion_floor)
        .map(|r| r.a1_hdi.1 - r.a1_hdi.0)
        .collect();
    let mut rng = stream_rng(cfg.seed, &[0x626f6f74]);
    let hdi_length = if kept.is_empty() {
        None
    } else {
        Some(bootstrap_stat(
            &kept,
            cfg.bootstrap_resamples,
            cfg.ci_mass,
            &mut rng,
        ))
    };
    let mses: Vec<f64> = records.iter().map(|r| r.mse).collect();
    let mse = bootstrap_stat(&mses, cfg.bootstrap_resamples, cfg.ci_mass, &mut rng);

    Ok(MeritReport {
        n_replications: n,
        p_success,
        p_a1_in_hdi,
        hdi_length,
        n_hdi_kept: kept.len(),
        mse,
        bootstrap_resamples: cfg.bootstrap_resamples,
    })
}

fn bootstrap_stat<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    ci_mass: f64,
    rng: &mut R,
) -> BootstrapStat {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                s += values[rng.gen_range(0..n)];
            }
            s / n as f64
        })
        .collect();
    means.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    let tail = (1.0 - ci_mass) / 2.0;
    BootstrapStat {
        mean,
        sd,
        boot_low: interpolated_quantile(&means, tail),
        boot_high: interpolated_quantile(&means, 1.0 - tail),
    }
}
