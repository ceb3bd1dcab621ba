//! Trial-by-trial simulation of the 2AFC experiment.
//!
//! Each trial draws a fresh noisy pulse intensity, a Poisson photon count at
//! that intensity, and a Bernoulli correctness flag at the model's accuracy
//! for that count. Counts of correct responses are accumulated per data
//! point. Every data point owns its own derived random stream, so results
//! are reproducible bit for bit regardless of execution order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::perception::PerceptionModel;
use crate::rng::stream_rng;
use crate::source::{sample_noisy_intensity, sample_photon_count, SourceConfig};

/// Outcome of a simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Correct-response count per data point, each in `0..=trials`.
    pub correct: Vec<u32>,
    pub config: SourceConfig,
    pub model: PerceptionModel,
    pub seed: u64,
    /// Per-data-point histogram of drawn photon numbers (diagnostics).
    pub photon_histogram: Vec<Vec<u64>>,
}

impl SimulationResult {
    /// Fraction of correct responses per data point.
    pub fn correct_fractions(&self) -> Vec<f64> {
        self.correct
            .iter()
            .map(|&c| f64::from(c) / f64::from(self.config.trials.max(1)))
            .collect()
    }
}

/// Runs one trial: noisy intensity, photon draw, Bernoulli response.
pub fn run_trial<R: Rng + ?Sized>(
    nbar_nominal: f64,
    noise_sd: f64,
    model: &PerceptionModel,
    rng: &mut R,
) -> bool {
    let intensity = sample_noisy_intensity(nbar_nominal, noise_sd, rng);
    let n = sample_photon_count(intensity, rng);
    let accuracy = model.accuracy(n);
    rng.gen::<f64>() < accuracy
}

/// Runs one trial and also reports the photon count drawn.
fn run_trial_counted<R: Rng + ?Sized>(
    nbar_nominal: f64,
    noise_sd: f64,
    model: &PerceptionModel,
    rng: &mut R,
) -> (bool, u32) {
    let intensity = sample_noisy_intensity(nbar_nominal, noise_sd, rng);
    let n = sample_photon_count(intensity, rng);
    let accuracy = model.accuracy(n);
    (rng.gen::<f64>() < accuracy, n)
}

/// Simulates the full experiment described by `config`.
///
/// Data point `d` draws from the stream `(seed, [d])`, so the per-point loop
/// parallelizes without changing any outcome.
pub fn run_experiment(
    config: &SourceConfig,
    model: &PerceptionModel,
    seed: u64,
) -> Result<SimulationResult> {
    config.validate()?;
    let grid = config.nbar_grid();
    let per_point: Vec<(u32, Vec<u64>)> = grid
        .par_iter()
        .enumerate()
        .map(|(d, &nbar)| {
            let mut rng = stream_rng(seed, &[d as u64]);
            let noise_sd = config.noise_sd[d];
            let mut correct = 0u32;
            let mut hist: Vec<u64> = Vec::new();
            for _ in 0..config.trials {
                let (ok, n) = run_trial_counted(nbar, noise_sd, model, &mut rng);
                if ok {
                    correct += 1;
                }
                let slot = n as usize;
                if slot >= hist.len() {
                    hist.resize(slot + 1, 0);
                }
                hist[slot] += 1;
            }
            (correct, hist)
        })
        .collect();
    let (correct, photon_histogram) = per_point.into_iter().unzip();
    Ok(SimulationResult {
        correct,
        config: config.clone(),
        model: model.clone(),
        seed,
        photon_histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::ensemble_accuracy;
    use crate::source::PhotonProbMatrix;

    #[test]
    fn blind_model_hits_chance_level() {
        let model = PerceptionModel::from_p1(0.0, 5).unwrap();
        let mut rng = stream_rng(21, &[0]);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| run_trial(1.0, 0.0, &model, &mut rng))
            .count();
        let frac = hits as f64 / trials as f64;
        let band = 3.0 * (0.25f64 / trials as f64).sqrt();
        assert!((frac - 0.5).abs() < band, "frac {frac}");
    }

    #[test]
    fn perfect_detector_misses_only_vacuum() {
        let model = PerceptionModel::from_accuracies(vec![0.5, 1.0]).unwrap();
        let mut rng = stream_rng(22, &[0]);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| run_trial(3.0, 0.0, &model, &mut rng))
            .count();
        let frac = hits as f64 / trials as f64;
        let want = 1.0 - 0.5 * (-3.0f64).exp();
        let band = 3.0 * (want * (1.0 - want) / trials as f64).sqrt();
        assert!((frac - want).abs() < band, "frac {frac} vs {want}");
    }

    #[test]
    fn trial_fraction_matches_ensemble_accuracy() {
        let nbar = 1.0;
        let model = PerceptionModel::from_p1_for_intensity(0.05, nbar).unwrap();
        let mut rng = stream_rng(23, &[0]);
        let trials = 1_000_000;
        let hits = (0..trials)
            .filter(|_| run_trial(nbar, 0.0, &model, &mut rng))
            .count();
        let frac = hits as f64 / trials as f64;
        let rho = PhotonProbMatrix::from_grid(&[nbar], model.n_max_model(), false).unwrap();
        let want = ensemble_accuracy(model.accuracies(), rho.row(0)).unwrap();
        let band = 3.0 * (want * (1.0 - want) / trials as f64).sqrt();
        assert!((frac - want).abs() < band, "frac {frac} vs {want}");
    }

    #[test]
    fn zero_trials_gives_zero_counts() {
        let config = SourceConfig::noiseless(1.0, 3.0, 5, 0).unwrap();
        let model = PerceptionModel::from_p1(0.05, 10).unwrap();
        let result = run_experiment(&config, &model, 1).unwrap();
        assert_eq!(result.correct, vec![0; 5]);
    }

    #[test]
    fn reference_setting_tracks_model_accuracies() {
        let config = SourceConfig::noiseless(1.0, 3.0, 5, 1000).unwrap();
        let model = PerceptionModel::from_p1_for_intensity(0.05, 3.0).unwrap();
        let result = run_experiment(&config, &model, 20240601).unwrap();
        let rho =
            PhotonProbMatrix::build(&config, model.n_max_model(), false).unwrap();
        for d in 0..5 {
            let a_d = ensemble_accuracy(model.accuracies(), rho.row(d)).unwrap();
            let frac = f64::from(result.correct[d]) / 1000.0;
            let band = 3.0 * (a_d * (1.0 - a_d) / 1000.0).sqrt();
            assert!((frac - a_d).abs() < band, "d={d}: {frac} vs {a_d}");
        }
    }

    #[test]
    fn same_seed_reproduces_bit_exactly() {
        let config = SourceConfig::new(1.0, 3.0, 5, 500, vec![0.05; 5]).unwrap();
        let model = PerceptionModel::from_p1(0.05, 12).unwrap();
        let a = run_experiment(&config, &model, 77).unwrap();
        let b = run_experiment(&config, &model, 77).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&config, &model, 78).unwrap();
        assert_ne!(a.correct, c.correct);
    }

    #[test]
    fn result_is_thread_count_invariant() {
        let config = SourceConfig::noiseless(1.0, 3.0, 5, 2000).unwrap();
        let model = PerceptionModel::from_p1(0.05, 12).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_experiment(&config, &model, 5).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_experiment(&config, &model, 5).unwrap());
        assert_eq!(single, multi);
    }

    #[test]
    fn histogram_counts_every_trial() {
        let config = SourceConfig::noiseless(1.0, 3.0, 3, 750).unwrap();
        let model = PerceptionModel::from_p1(0.05, 12).unwrap();
        let result = run_experiment(&config, &model, 9).unwrap();
        for hist in &result.photon_histogram {
            assert_eq!(hist.iter().sum::<u64>(), 750);
        }
    }
}
