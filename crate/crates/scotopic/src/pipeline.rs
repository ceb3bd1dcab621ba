//! End-to-end drivers: one reconstruction from counts to posterior summaries,
//! and replicated simulate-reconstruct cycles aggregated into merit reports.
//!
//! The cutoff search's confirmation run doubles as the final reconstruction:
//! its chains are already the long-schedule posterior at the accepted cutoff,
//! so everything downstream (summaries, evidence ratio, reconstruction error)
//! reads from those chains directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    merit_from_replications, mse_accuracies, savage_dickey, summarize_parameter, MeritConfig,
    MeritReport, ParameterSummary, ReplicationRecord,
};
use crate::error::{Error, Result};
use crate::mcmc::ChainSet;
use crate::nmax::{detect_nmax, CutoffCalibration, DetectConfig, NmaxResult};
use crate::perception::{ensemble_accuracy, tail_cutoff, PerceptionModel};
use crate::prior::PriorSpec;
use crate::rng::derive_seed;
use crate::simulate::{run_experiment, SimulationResult};
use crate::source::{PhotonProbMatrix, SourceConfig};

/// The bundled example design: five equidistant intensities from 1 to 3
/// photons per pulse.
pub fn reference_source(trials: u32) -> SourceConfig {
    SourceConfig::noiseless(1.0, 3.0, 5, trials).expect("fixed arguments are valid")
}

/// The bundled example observer: binomial with a 5% single-photon detection
/// probability, tabulated far past the example grid's top intensity.
pub fn reference_model() -> PerceptionModel {
    PerceptionModel::from_p1_for_intensity(0.05, 3.0).expect("fixed arguments are valid")
}

/// Ensemble accuracy of the generating model at every grid intensity,
/// tabulated far enough that the untabulated Poisson tail is negligible.
pub fn true_ensemble_accuracies(
    model: &PerceptionModel,
    config: &SourceConfig,
) -> Result<Vec<f64>> {
    let grid = config.nbar_grid();
    let top = grid.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let cutoff = tail_cutoff(top, 1e-12)?.max(1);
    let rho = PhotonProbMatrix::from_grid(&grid, cutoff, false)?;
    let acc = model.accuracy_vector(cutoff + 1);
    (0..grid.len()).map(|d| ensemble_accuracy(&acc, rho.row(d))).collect()
}

/// Posterior product of one reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reconstruction {
    /// Cutoff search outcome, confirmation chains included.
    pub detection: NmaxResult,
    /// Chain summaries for ã₁ … ã_nmax.
    pub accuracy_summaries: Vec<ParameterSummary>,
    /// Chain summary for the probe accuracy past the cutoff.
    pub extension_summary: ParameterSummary,
    /// Evidence ratio of posterior to prior density at chance for ã₁, dB.
    pub r_sd: f64,
    /// Posterior-mean ensemble accuracy per data point.
    pub ensemble_posterior_mean: Vec<f64>,
    /// Observed fraction of correct responses per data point.
    pub raw_fractions: Vec<f64>,
    /// Generating model's ensemble accuracy per data point.
    pub truth_ensemble: Vec<f64>,
    /// The posterior-mean ensemble beats the raw fractions at a majority of
    /// data points.
    pub ensemble_vote: bool,
    /// Generating accuracies a₁ … a_nmax.
    pub truth: Vec<f64>,
    /// Mean squared error of the accuracy modes against the truth.
    pub mse: f64,
    /// This reconstruction reduced to its merit inputs.
    pub record: ReplicationRecord,
    /// Any multiplex failed the split R-hat check.
    pub flagged: bool,
}

/// Full reconstruction from a simulated experiment: cutoff search, chain
/// summaries at `hdi_mass`, evidence ratio at chance, per-point ensemble
/// reconstruction and error against the generating model.
pub fn run_reconstruction(
    sim: &SimulationResult,
    template: &PriorSpec,
    detect: &DetectConfig,
    calibration: &CutoffCalibration,
    hdi_mass: f64,
    seed: u64,
) -> Result<Reconstruction> {
    let detection = detect_nmax(&sim.correct, &sim.config, template, detect, calibration, seed)?;
    let chains = &detection.chains;
    let n_max = chains.n_max;

    let mut accuracy_summaries = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        accuracy_summaries.push(summarize_parameter(
            &chains.squeezed_posterior(|d| d.accuracy(n)),
            &[hdi_mass],
            &[],
        )?);
    }
    let extension_summary = summarize_parameter(
        &chains.squeezed_posterior(|d| d.extension.map_or(f64::NAN, |e| (1.0 + e) / 2.0)),
        &[hdi_mass],
        &[],
    )?;

    let r_sd = savage_dickey(
        &chains.squeezed_prior(|d| d.accuracy(1)),
        &chains.squeezed_posterior(|d| d.accuracy(1)),
        0.5,
    )?;

    let rho = PhotonProbMatrix::build(&sim.config, n_max, true)?;
    let ensemble_posterior_mean = posterior_mean_ensemble(chains, &rho)?;
    let raw_fractions = sim.correct_fractions();
    let truth_ensemble = true_ensemble_accuracies(&sim.model, &sim.config)?;
    let closer = (0..raw_fractions.len())
        .filter(|&d| {
            (ensemble_posterior_mean[d] - truth_ensemble[d]).abs()
                < (raw_fractions[d] - truth_ensemble[d]).abs()
        })
        .count();
    let ensemble_vote = 2 * closer > raw_fractions.len();

    let truth: Vec<f64> = (1..=n_max as u32).map(|n| sim.model.accuracy(n)).collect();
    let modes: Vec<f64> = accuracy_summaries.iter().map(|s| s.mode).collect();
    let mse = mse_accuracies(&modes, &truth, n_max)?;

    let a1_interval = accuracy_summaries[0].hdis[0];
    let record = ReplicationRecord {
        r_sd,
        a1_hdi: (a1_interval.low, a1_interval.high),
        a1_in_hdi: truth[0] >= a1_interval.low && truth[0] <= a1_interval.high,
        mse,
    };
    let flagged = chains.flagged;

    Ok(Reconstruction {
        detection,
        accuracy_summaries,
        extension_summary,
        r_sd,
        ensemble_posterior_mean,
        raw_fractions,
        truth_ensemble,
        ensemble_vote,
        truth,
        mse,
        record,
        flagged,
    })
}

/// Posterior mean of the ensemble accuracy at every data point, extension
/// coordinate included.
fn posterior_mean_ensemble(chains: &ChainSet, rho: &PhotonProbMatrix) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; rho.points()];
    let mut count = 0usize;
    for m in &chains.multiplexes {
        for chain in &m.posterior_chains {
            for draw in chain {
                let a = draw.a_tilde();
                for (d, sum) in sums.iter_mut().enumerate() {
                    *sum += ensemble_accuracy(&a, rho.row(d))?;
                }
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyChain("posterior_mean_ensemble"));
    }
    Ok(sums.into_iter().map(|s| s / count as f64).collect())
}

/// Debug check: runs the cutoff search against a flattened likelihood (zero
/// trials) and reports whether the probe passed untouched at the starting
/// cutoff, scan and confirmation both.
pub fn prior_recovery_check(
    config: &SourceConfig,
    template: &PriorSpec,
    detect: &DetectConfig,
    calibration: &CutoffCalibration,
    seed: u64,
) -> Result<bool> {
    let mut flat = config.clone();
    flat.trials = 0;
    let sigma = vec![0u32; flat.points];
    let detection = detect_nmax(&sigma, &flat, template, detect, calibration, seed)?;
    Ok(detection.trace.len() == 2)
}

/// One experimental design replicated end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationPlan {
    pub source: SourceConfig,
    pub model: PerceptionModel,
    pub replications: usize,
    /// Credible-interval level used in summaries and merit records.
    pub hdi_mass: f64,
    pub detect: DetectConfig,
    pub merit: MeritConfig,
}

impl ReplicationPlan {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.detect.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".into(),
            ));
        }
        if !(0.0 < self.hdi_mass && self.hdi_mass < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "hdi mass {} outside (0, 1)",
                self.hdi_mass
            )));
        }
        Ok(())
    }
}

/// Replication results for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    /// Merit inputs of every successful replication, in replication order.
    pub records: Vec<ReplicationRecord>,
    /// Accepted cutoff per successful replication.
    pub n_max_finals: Vec<usize>,
    /// Posterior mode of ã₁ per successful replication.
    pub a1_modes: Vec<f64>,
    /// Whether the ensemble reconstruction beat the raw fractions, per
    /// successful replication.
    pub ensemble_votes: Vec<bool>,
    /// Replications whose chains failed the split R-hat check.
    pub flagged_replications: usize,
    /// Failed replications as (replication index, error message).
    pub failures: Vec<(usize, String)>,
    /// Aggregated merit, absent when fewer than 2 replications survived.
    pub merit: Option<MeritReport>,
}

/// Runs the plan's simulate-reconstruct cycles and aggregates the merit
/// figures. Replication `r` draws its simulation from the stream
/// `(seed, [r, 0])` and its chains from `(seed, [r, 1])`, so outcomes do not
/// depend on scheduling. Failed replications are recorded, not fatal.
pub fn run_replications(
    plan: &ReplicationPlan,
    template: &PriorSpec,
    calibration: &CutoffCalibration,
    seed: u64,
) -> Result<CellReport> {
    plan.validate()?;
    template.validate()?;
    let outcomes: Vec<(usize, Result<Reconstruction>)> = (0..plan.replications)
        .into_par_iter()
        .map(|r| {
            let result = run_experiment(
                &plan.source,
                &plan.model,
                derive_seed(seed, &[r as u64, 0]),
            )
            .and_then(|sim| {
                run_reconstruction(
                    &sim,
                    template,
                    &plan.detect,
                    calibration,
                    plan.hdi_mass,
                    derive_seed(seed, &[r as u64, 1]),
                )
            });
            (r, result)
        })
        .collect();

    let mut report = CellReport {
        records: Vec::new(),
        n_max_finals: Vec::new(),
        a1_modes: Vec::new(),
        ensemble_votes: Vec::new(),
        flagged_replications: 0,
        failures: Vec::new(),
        merit: None,
    };
    for (r, outcome) in outcomes {
        match outcome {
            Ok(recon) => {
                report.records.push(recon.record);
                report.n_max_finals.push(recon.detection.n_max_final);
                report.a1_modes.push(recon.accuracy_summaries[0].mode);
                report.ensemble_votes.push(recon.ensemble_vote);
                report.flagged_replications += usize::from(recon.flagged);
            }
            Err(e) => report.failures.push((r, e.to_string())),
        }
    }
    if report.records.len() >= 2 {
        report.merit = Some(merit_from_replications(&report.records, &plan.merit)?);
    }
    Ok(report)
}
