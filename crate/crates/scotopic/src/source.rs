//! Poissonian light source: photon-number statistics, intensity grids and
//! pulse-to-pulse intensity noise.
//!
//! A nominal intensity of `nbar` photons per pulse produces `n` photons with
//! probability `exp(-nbar) * nbar^n / n!`. The [`PhotonProbMatrix`] tabulates
//! these probabilities for every intensity of an experiment's grid up to a
//! photon cutoff, optionally with one extra column used by the reconstruction
//! to probe whether the cutoff is high enough.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Smallest intensity a noisy draw can produce; keeps downstream Poisson
/// sampling and pmf evaluation in-domain when noise drives a draw negative.
pub const INTENSITY_FLOOR: f64 = 1e-6;

/// Experimental geometry: the intensity grid and per-point trial plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Lowest nominal intensity, photons per pulse.
    pub nbar_min: f64,
    /// Highest nominal intensity, photons per pulse.
    pub nbar_max: f64,
    /// Number of equidistant intensities between the two.
    pub points: usize,
    /// Trials per intensity.
    pub trials: u32,
    /// Per-point standard deviation of the pulse intensity noise,
    /// photons per pulse. Length must equal `points`.
    pub noise_sd: Vec<f64>,
}

impl SourceConfig {
    /// Noise-free configuration over an equidistant grid.
    pub fn noiseless(nbar_min: f64, nbar_max: f64, points: usize, trials: u32) -> Result<Self> {
        Self::new(nbar_min, nbar_max, points, trials, vec![0.0; points])
    }

    pub fn new(
        nbar_min: f64,
        nbar_max: f64,
        points: usize,
        trials: u32,
        noise_sd: Vec<f64>,
    ) -> Result<Self> {
        let cfg = Self { nbar_min, nbar_max, points, trials, noise_sd };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nbar_min > 0.0) || !self.nbar_min.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "nbar_min must be positive and finite, got {}",
                self.nbar_min
            )));
        }
        if !(self.nbar_max >= self.nbar_min) || !self.nbar_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "nbar_max must be finite and at least nbar_min, got {}",
                self.nbar_max
            )));
        }
        if self.points == 0 {
            return Err(Error::InvalidParameter("points must be at least 1".into()));
        }
        if self.noise_sd.len() != self.points {
            return Err(Error::LengthMismatch(format!(
                "noise_sd has {} entries for {} data points",
                self.noise_sd.len(),
                self.points
            )));
        }
        if self.noise_sd.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise_sd entries must be non-negative and finite".into(),
            ));
        }
        Ok(())
    }

    /// The equidistant intensity grid. A single-point grid is `[nbar_min]`;
    /// `nbar_max` is ignored in that case.
    pub fn nbar_grid(&self) -> Vec<f64> {
        if self.points == 1 {
            if self.nbar_max != self.nbar_min {
                log::warn!(
                    "single-point grid: nbar_max = {} ignored, using [{}]",
                    self.nbar_max,
                    self.nbar_min
                );
            }
            return vec![self.nbar_min];
        }
        let step = (self.nbar_max - self.nbar_min) / (self.points - 1) as f64;
        (0..self.points).map(|d| self.nbar_min + d as f64 * step).collect()
    }
}

/// Probability of drawing exactly `n` photons from a pulse of mean `nbar`.
///
/// Evaluated in log space so large `n` neither overflows the factorial nor
/// underflows prematurely.
pub fn poisson_pmf(nbar: f64, n: u32) -> Result<f64> {
    if !(nbar > 0.0) || !nbar.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "poisson_pmf needs nbar > 0, got {nbar}"
        )));
    }
    let nf = f64::from(n);
    Ok((nf * nbar.ln() - nbar - ln_gamma(nf + 1.0)).exp())
}

/// Per-intensity photon-number probabilities, one row per data point.
///
/// Rows cover photon counts `0..=n_max`; an augmented matrix carries one
/// extra column for count `n_max + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonProbMatrix {
    rows: Vec<Vec<f64>>,
    nbar_grid: Vec<f64>,
    n_max: usize,
    augmented: bool,
}

impl PhotonProbMatrix {
    /// Tabulates the matrix for `config`'s grid.
    pub fn build(config: &SourceConfig, n_max: usize, augmented: bool) -> Result<Self> {
        config.validate()?;
        Self::from_grid(&config.nbar_grid(), n_max, augmented)
    }

    /// Tabulates the matrix for an explicit intensity grid.
    pub fn from_grid(nbar_grid: &[f64], n_max: usize, augmented: bool) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        let cols = n_max + 1 + usize::from(augmented);
        let rows = nbar_grid
            .iter()
            .map(|&nbar| (0..cols as u32).map(|n| poisson_pmf(nbar, n)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Self { rows, nbar_grid: nbar_grid.to_vec(), n_max, augmented })
    }

    pub fn points(&self) -> usize {
        self.rows.len()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn augmented(&self) -> bool {
        self.augmented
    }

    /// Number of photon-count columns (`n_max + 1`, plus one if augmented).
    pub fn cols(&self) -> usize {
        self.n_max + 1 + usize::from(self.augmented)
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.rows[d]
    }

    pub fn nbar_grid(&self) -> &[f64] {
        &self.nbar_grid
    }

    /// Probability mass beyond the last tabulated column for row `d`.
    pub fn tail_mass(&self, d: usize) -> f64 {
        (1.0 - self.rows[d].iter().sum::<f64>()).max(0.0)
    }
}

/// One pulse's actual mean intensity: nominal plus a fresh normal deviation,
/// clamped to [`INTENSITY_FLOOR`].
pub fn sample_noisy_intensity<R: Rng + ?Sized>(
    nbar_nominal: f64,
    sigma: f64,
    rng: &mut R,
) -> f64 {
    if sigma == 0.0 {
        return nbar_nominal.max(INTENSITY_FLOOR);
    }
    let noise = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    (nbar_nominal + noise.sample(rng)).max(INTENSITY_FLOOR)
}

/// Draws a photon count by walking the Poisson CDF with a single uniform.
///
/// Exact for the intensities this crate works at (nbar well below 100);
/// the loop guard only exists to bound pathological inputs.
pub fn sample_photon_count<R: Rng + ?Sized>(nbar: f64, rng: &mut R) -> u32 {
    debug_assert!(nbar > 0.0);
    let u: f64 = rng.gen();
    let mut pmf = (-nbar).exp();
    let mut cdf = pmf;
    let mut n = 0u32;
    while u > cdf && n < 1000 {
        n += 1;
        pmf *= nbar / f64::from(n);
        cdf += pmf;
    }
    n
}
