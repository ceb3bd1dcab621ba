//! n-photon detection accuracies and the optics behind the stimulus geometry.
//!
//! The visual model is binomial: each of `n` arriving photons is detected
//! independently with probability `p1`, and seeing any of them suffices, so
//! the detection probability is `p_n = 1 - (1 - p1)^n`. In a 2AFC task an
//! undetected pulse still earns the right answer half the time, giving the
//! accuracy map `a = (1 + p) / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::poisson_pmf;

/// Probability that at least one of `n` photons is detected.
pub fn detection_probability(p1: f64, n: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidParameter(format!(
            "detection probability needs p1 in [0,1], got {p1}"
        )));
    }
    // powi keeps the n = 0 case exact and avoids log-domain round-off.
    Ok(1.0 - (1.0 - p1).powi(n as i32))
}

/// Maps a detection probability to 2AFC accuracy: chance level plus half the
/// detection probability.
pub fn accuracy_from_probability(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "accuracy map needs a probability in [0,1], got {p}"
        )));
    }
    Ok((1.0 + p) / 2.0)
}

/// Ground-truth accuracy model for the simulated observer.
///
/// Either generated from a single-photon detection probability (in which
/// case accuracies for arbitrarily large photon counts are available), or
/// given as an explicit tabulated vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionModel {
    p1: Option<f64>,
    accuracies: Vec<f64>,
}

impl PerceptionModel {
    /// Builds the binomial model, tabulating accuracies for counts
    /// `0..=n_max_model`.
    pub fn from_p1(p1: f64, n_max_model: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidParameter(format!(
                "perception model needs p1 in [0,1], got {p1}"
            )));
        }
        let accuracies = (0..=n_max_model as u32)
            .map(|n| accuracy_from_probability(detection_probability(p1, n)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { p1: Some(p1), accuracies })
    }

    /// Builds the binomial model with the tabulation cutoff chosen so that
    /// the untabulated Poisson tail at `nbar_max` is below 1e-9.
    pub fn from_p1_for_intensity(p1: f64, nbar_max: f64) -> Result<Self> {
        Self::from_p1(p1, tail_cutoff(nbar_max, 1e-9)?)
    }

    /// Wraps an explicit accuracy vector `[a_0, a_1, ...]`.
    pub fn from_accuracies(accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::InvalidParameter("accuracy vector is empty".into()));
        }
        if accuracies[0] != 0.5 {
            return Err(Error::InvalidParameter(format!(
                "a_0 must be exactly 0.5, got {}",
                accuracies[0]
            )));
        }
        for w in accuracies.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidParameter(
                    "accuracies must be non-decreasing".into(),
                ));
            }
        }
        if accuracies.iter().any(|a| !(0.5..=1.0).contains(a)) {
            return Err(Error::InvalidParameter(
                "accuracies must lie in [0.5, 1]".into(),
            ));
        }
        Ok(Self { p1: None, accuracies })
    }

    pub fn p1(&self) -> Option<f64> {
        self.p1
    }

    /// Largest tabulated photon count.
    pub fn n_max_model(&self) -> usize {
        self.accuracies.len() - 1
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    /// Accuracy for `n` photons. Counts beyond the tabulation fall back to
    /// the generator when one exists; an explicit vector saturates at its
    /// last entry.
    pub fn accuracy(&self, n: u32) -> f64 {
        if let Some(a) = self.accuracies.get(n as usize) {
            return *a;
        }
        match self.p1 {
            Some(p1) => {
                (1.0 + (1.0 - (1.0 - p1).powi(n as i32))) / 2.0
            }
            None => *self.accuracies.last().expect("validated non-empty"),
        }
    }

    /// First `len` accuracies as a vector (generated past the tabulation
    /// when needed).
    pub fn accuracy_vector(&self, len: usize) -> Vec<f64> {
        (0..len as u32).map(|n| self.accuracy(n)).collect()
    }
}

/// Smallest cutoff m with an upper Poisson tail below `bound` at `nbar`.
pub fn tail_cutoff(nbar: f64, bound: f64) -> Result<usize> {
    if !(nbar > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tail cutoff needs nbar > 0, got {nbar}"
        )));
    }
    let mut mass = 0.0;
    for m in 0..1000u32 {
        mass += poisson_pmf(nbar, m)?;
        if 1.0 - mass < bound {
            return Ok(m as usize);
        }
    }
    Err(Error::InvalidParameter(format!(
        "tail below {bound} not reached within 1000 terms at nbar {nbar}"
    )))
}

/// Expected 2AFC accuracy at mean intensity implied by `rho_row`:
/// `1 - sum_n (1 - a_n) * rho_n`. Photon counts beyond the row's length are
/// implicitly treated as perfectly detected.
pub fn ensemble_accuracy(accuracies: &[f64], rho_row: &[f64]) -> Result<f64> {
    if accuracies.len() != rho_row.len() {
        return Err(Error::LengthMismatch(format!(
            "{} accuracies vs {} probabilities",
            accuracies.len(),
            rho_row.len()
        )));
    }
    let miss: f64 = accuracies
        .iter()
        .zip(rho_row)
        .map(|(a, r)| (1.0 - a) * r)
        .sum();
    Ok(1.0 - miss)
}

/// Stimulus geometry parameters for the retinal coverage estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsParams {
    /// Wavelength in meters.
    pub wavelength: f64,
    /// Refractive index of the eye medium.
    pub n_eye: f64,
    /// Beam convergence half-angle in radians.
    pub theta: f64,
    /// Eye diameter in meters.
    pub eye_diameter: f64,
    /// Retinal area of a single rod cell in square meters.
    pub rod_area: f64,
}

impl OpticsParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("wavelength", self.wavelength),
            ("n_eye", self.n_eye),
            ("theta", self.theta),
            ("eye_diameter", self.eye_diameter),
            ("rod_area", self.rod_area),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "optics parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// How the stimulus is delivered to the retina.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeamGeometry {
    /// Diffraction-limited focus: spot radius is the beam waist
    /// `w0 = wavelength / (pi * n_eye * theta)`.
    Focused,
    /// Maxwellian view: the beam fans out to radius
    /// `eye_diameter * theta / n_eye` on the retina.
    Maxwellian,
}

/// Illuminated retinal area and the rod count it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetinalCoverage {
    /// Spot area in square meters.
    pub area: f64,
    /// Area divided by the per-rod area.
    pub rod_count: f64,
}

/// Diagnostics helper estimating how many rods the stimulus spreads over.
pub fn retinal_coverage(params: &OpticsParams, geometry: BeamGeometry) -> Result<RetinalCoverage> {
    params.validate()?;
    let radius = match geometry {
        BeamGeometry::Focused => {
            params.wavelength / (std::f64::consts::PI * params.n_eye * params.theta)
        }
        BeamGeometry::Maxwellian => params.eye_diameter * params.theta / params.n_eye,
    };
    let area = std::f64::consts::PI * radius * radius;
    Ok(RetinalCoverage { area, rod_count: area / params.rod_area })
}
