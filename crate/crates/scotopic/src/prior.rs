//! Ordered beta prior over per-photon detection probabilities.
//!
//! The prior targets the detection-probability vector p̃ = 2ã − 1. A draw
//! fixes shape parameters (α, β) from folded-normal hyper-priors whose scales
//! depend on the photon cutoff, takes `n_max` beta(α, β) samples, sorts them
//! ascending and prefixes 0, so the implied accuracies start at chance and
//! rise with photon number. An extra coordinate above the cutoff lives on
//! [p_min, 1] and follows a rescaled beta(2.5, 0.5).
//!
//! The hyper-prior is read as a Normal(1, scale) folded at zero; this choice
//! is deliberate (a "half-normal with nonzero mean" admits several readings)
//! and the scale polynomials below are tuned so the marginal of p̃₁ barely
//! moves when the cutoff changes.

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Largest photon cutoff the hyper-prior scale polynomials support.
pub const MAX_NMAX: usize = 17;

/// Shape pair of the beta law for the raw extension coordinate.
pub const EXTENSION_SHAPE: (f64, f64) = (2.5, 0.5);

/// Smallest distance a detection probability keeps from the closed ends of
/// [0, 1]; draws that round onto an end are pulled back inside.
const P_CLAMP: f64 = 1e-12;

/// Additive nudge used to break exact ties after sorting.
const TIE_STEP: f64 = 1e-15;

/// Scale of the folded-normal hyper-prior on α for a given photon cutoff.
pub fn alpha_scale(n_max: usize) -> f64 {
    let n = n_max as f64;
    0.5 + n / 2.0 - n * n / 35.0
}

/// Scale of the folded-normal hyper-prior on β for a given photon cutoff.
pub fn beta_scale(n_max: usize) -> f64 {
    let n = n_max as f64;
    12.0 - n / 1.8 - n * n / 200.0
}

/// Hyper-parameters fixing one prior over detection probabilities.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorSpec {
    pub n_max: usize,
    pub alpha_sd: f64,
    pub beta_sd: f64,
    pub p_min: f64,
    pub extension_shape: (f64, f64),
}

impl PriorSpec {
    /// Builds the spec for a photon cutoff, deriving both hyper-scales.
    pub fn new(n_max: usize, p_min: f64) -> Result<Self> {
        let spec = PriorSpec {
            n_max,
            alpha_sd: alpha_scale(n_max),
            beta_sd: beta_scale(n_max),
            p_min,
            extension_shape: EXTENSION_SHAPE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.n_max > MAX_NMAX {
            return Err(Error::InvalidParameter(format!(
                "photon cutoff {} outside supported range 1..={MAX_NMAX}",
                self.n_max
            )));
        }
        if !(self.alpha_sd > 0.0) || !(self.beta_sd > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hyper-prior scales must be positive, got alpha_sd {} beta_sd {}",
                self.alpha_sd, self.beta_sd
            )));
        }
        if !(0.0..1.0).contains(&self.p_min) {
            return Err(Error::InvalidParameter(format!(
                "p_min {} outside [0, 1)",
                self.p_min
            )));
        }
        if !(self.extension_shape.0 > 0.0) || !(self.extension_shape.1 > 0.0) {
            return Err(Error::InvalidParameter(
                "extension shape parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One point in the prior's parameter space.
///
/// `p_tilde` is the ordered vector [0, p̃₁, …, p̃_nmax]; `extension` is the
/// coordinate for the first photon number past the cutoff, already mapped to
/// [p_min, 1].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorParams {
    pub alpha: f64,
    pub beta: f64,
    pub p_tilde: Vec<f64>,
    pub extension: Option<f64>,
}

impl DetectorParams {
    pub fn n_max(&self) -> usize {
        self.p_tilde.len() - 1
    }

    /// Accuracy (1 + p̃ₙ)/2 for one explicit photon number.
    pub fn accuracy(&self, n: usize) -> f64 {
        (1.0 + self.p_tilde[n]) / 2.0
    }

    /// Accuracy vector ã = (1 + p̃)/2, extension included when present.
    pub fn a_tilde(&self) -> Vec<f64> {
        let mut a: Vec<f64> = self.p_tilde.iter().map(|p| (1.0 + p) / 2.0).collect();
        if let Some(ext) = self.extension {
            a.push((1.0 + ext) / 2.0);
        }
        a
    }
}

/// Draws `n_max` beta(α, β) samples, sorts ascending and prefixes 0, keeping
/// every coordinate strictly inside (0, 1) and the order strict.
pub fn sample_ordered_given_shapes<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    n_max: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sampler = BetaSampler::new(alpha, beta).map_err(|e| {
        Error::InvalidParameter(format!("beta shapes ({alpha}, {beta}) rejected: {e}"))
    })?;
    let mut p = Vec::with_capacity(n_max + 1);
    p.push(0.0);
    for _ in 0..n_max {
        let draw: f64 = sampler.sample(rng);
        p.push(draw.clamp(P_CLAMP, 1.0 - P_CLAMP));
    }
    p[1..].sort_unstable_by(|a, b| a.partial_cmp(b).expect("beta draws are finite"));
    for i in 1..p.len() {
        if p[i] <= p[i - 1] {
            p[i] = p[i - 1] + TIE_STEP;
        }
    }
    Ok(p)
}

/// Samples one configuration from the prior, extension coordinate included.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> Result<DetectorParams> {
    spec.validate()?;
    let alpha_law = Normal::new(1.0, spec.alpha_sd)
        .map_err(|e| Error::InvalidParameter(format!("alpha hyper-prior: {e}")))?;
    let beta_law = Normal::new(1.0, spec.beta_sd)
        .map_err(|e| Error::InvalidParameter(format!("beta hyper-prior: {e}")))?;
    let alpha = sample_folded(&alpha_law, rng);
    let beta = sample_folded(&beta_law, rng);
    let p_tilde = sample_ordered_given_shapes(alpha, beta, spec.n_max, rng)?;
    let ext_law = BetaSampler::new(spec.extension_shape.0, spec.extension_shape.1)
        .expect("validated extension shape");
    let x: f64 = ext_law.sample(rng);
    let x = x.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let extension = spec.p_min + (1.0 - spec.p_min) * x;
    Ok(DetectorParams {
        alpha,
        beta,
        p_tilde,
        extension: Some(extension),
    })
}

fn sample_folded<R: Rng + ?Sized>(law: &Normal<f64>, rng: &mut R) -> f64 {
    let x: f64 = law.sample(rng);
    x.abs().max(P_CLAMP)
}

/// Log density at `x` of |N(loc, scale)| (a Normal folded at zero).
pub fn log_folded_normal_pdf(x: f64, loc: f64, scale: f64) -> f64 {
    if x < 0.0 || !(scale > 0.0) {
        return f64::NEG_INFINITY;
    }
    let t1 = -(x - loc) * (x - loc) / (2.0 * scale * scale);
    let t2 = -(x + loc) * (x + loc) / (2.0 * scale * scale);
    let hi = t1.max(t2);
    let lo = t1.min(t2);
    hi + (1.0 + (lo - hi).exp()).ln() - (scale * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

/// Log beta(a, b) density at `x`; −∞ outside the open unit interval.
pub fn log_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(a > 0.0) || !(b > 0.0) || x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log density of the sorted vector [0, p̃₁ … p̃_nmax] under iid beta(α, β)
/// draws followed by sorting: n_max!·Π beta-pdf on the support where the
/// order is strict; −∞ off the support.
pub fn log_ordered_beta_density(p_tilde: &[f64], alpha: f64, beta: f64) -> f64 {
    if p_tilde.is_empty() || p_tilde[0] != 0.0 || !(alpha > 0.0) || !(beta > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n_max = p_tilde.len() - 1;
    let lb = ln_beta(alpha, beta);
    let mut sum = ln_gamma(n_max as f64 + 1.0);
    for i in 1..=n_max {
        let p = p_tilde[i];
        if p <= p_tilde[i - 1] || p >= 1.0 {
            return f64::NEG_INFINITY;
        }
        sum += (alpha - 1.0) * p.ln() + (beta - 1.0) * (1.0 - p).ln() - lb;
    }
    sum
}

/// Log density of the extension coordinate on [p_min, 1]: a beta(shape) law
/// on the rescaled variable, Jacobian included.
pub fn log_extension_density(ext: f64, p_min: f64, shape: (f64, f64)) -> f64 {
    if !(0.0..1.0).contains(&p_min) {
        return f64::NEG_INFINITY;
    }
    let width = 1.0 - p_min;
    let x = (ext - p_min) / width;
    log_beta_pdf(x, shape.0, shape.1) - width.ln()
}

/// Joint log prior density of a draw; −∞ encodes every support violation.
pub fn log_prior_density(draw: &DetectorParams, spec: &PriorSpec) -> f64 {
    if draw.n_max() != spec.n_max {
        return f64::NEG_INFINITY;
    }
    let mut sum = log_folded_normal_pdf(draw.alpha, 1.0, spec.alpha_sd)
        + log_folded_normal_pdf(draw.beta, 1.0, spec.beta_sd)
        + log_ordered_beta_density(&draw.p_tilde, draw.alpha, draw.beta);
    if let Some(ext) = draw.extension {
        sum += log_extension_density(ext, spec.p_min, spec.extension_shape);
    }
    sum
}
