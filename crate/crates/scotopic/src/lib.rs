//! Simulation and Bayesian reconstruction of few-photon two-alternative
//! forced-choice (2AFC) detection experiments.
//!
//! The crate models an observer reporting which of two intervals contained a
//! weak light pulse. The light source is Poissonian, so a nominal intensity
//! of `nbar` photons per pulse scatters the actual photon number trial by
//! trial. From the per-intensity counts of correct answers the crate
//! reconstructs the observer's n-photon detection accuracies by Markov chain
//! Monte Carlo over an ordered prior, decides how many accuracies the data
//! can support, and aggregates replicated reconstructions into figures of
//! merit for planning experiments.
//!
//! Module map:
//!
//! * [`source`] — Poisson photon statistics, intensity grids, pulse noise.
//! * [`perception`] — n-photon accuracy models and retinal coverage estimates.
//! * [`simulate`] — seeded trial-by-trial experiment simulation.
//! * [`prior`] — the ordered accuracy prior and its hyper-priors.
//! * [`mcmc`] — likelihood, the adaptive Metropolis-within-Gibbs sampler,
//!   multiplexed chain sets and convergence diagnostics.
//! * [`nmax`] — prior/posterior comparison statistics, cutoff calibration and
//!   the two-stage search for the number of supportable accuracies.
//! * [`analysis`] — chain summaries: highest-density intervals, density modes,
//!   evidence ratios, reconstruction error and replication merit reports.
//! * [`pipeline`] — end-to-end reconstruction and replication drivers.
//! * [`rng`] — deterministic seed derivation for parallel substreams.

pub mod analysis;
pub mod error;
pub mod mcmc;
pub mod nmax;
pub mod perception;
pub mod pipeline;
pub mod prior;
pub mod rng;
pub mod simulate;
pub mod source;

pub use error::{Error, Result};
