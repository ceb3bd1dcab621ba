//! Binomial likelihood of the correct-answer counts and the adaptive
//! random-walk Metropolis-within-Gibbs sampler behind every reconstruction.
//!
//! Sampling happens in an unconstrained space: log hyper-shapes, a
//! stick-breaking image of the ordered probability vector and a logit of the
//! rescaled extension coordinate. The mapped prior density plus the change of
//! variables plus the coefficient-free likelihood form the target; proposals
//! that leave the support are rejected through a non-finite target.
//!
//! A run consists of `n_mult` independent multiplexes of the same data, each
//! with `n_chains` chains. Every multiplex retains `n_mc` draws pooled over
//! its chains at equal thinning offsets past warmup, next to the same number
//! of exact prior draws. Squeezing concatenates the multiplexes into one long
//! chain for parameter summaries.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::perception::ensemble_accuracy;
use crate::prior::{log_prior_density, sample_prior, DetectorParams, PriorSpec};
use crate::rng::stream_rng;
use crate::source::PhotonProbMatrix;

const LOG_STEP_MIN: f64 = -10.0;
const LOG_STEP_MAX: f64 = 3.0;
const SIG_CLAMP: f64 = 1e-12;
const INIT_ATTEMPTS: usize = 100;

/// Sampler settings. `n_iter` counts sweeps per chain including warmup.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_warmup: usize,
    pub n_thin: usize,
    pub n_mult: usize,
    pub target_accept: f64,
    pub adapt_decay: f64,
    pub initial_step: f64,
    pub rhat_threshold: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::high()
    }
}

impl McmcConfig {
    /// Reference settings for a full-length run: 3 chains of 15000 sweeps,
    /// 2500 warmup, thinning 3, 7 multiplexes.
    pub fn high() -> Self {
        McmcConfig {
            n_chains: 3,
            n_iter: 15000,
            n_warmup: 2500,
            n_thin: 3,
            n_mult: 7,
            target_accept: 0.44,
            adapt_decay: 0.6,
            initial_step: 0.5,
            rhat_threshold: 1.05,
        }
    }

    /// Short-run settings used while scanning for the accuracy count.
    pub fn low() -> Self {
        McmcConfig {
            n_iter: 5000,
            ..Self::high()
        }
    }

    pub fn with_n_iter(mut self, n_iter: usize) -> Self {
        self.n_iter = n_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::ChainPlan("needs at least one chain".into()));
        }
        if self.n_mult == 0 {
            return Err(Error::ChainPlan("needs at least one multiplex".into()));
        }
        if self.n_thin == 0 {
            return Err(Error::ChainPlan("thinning stride must be positive".into()));
        }
        if self.n_iter <= self.n_warmup {
            return Err(Error::ChainPlan(format!(
                "n_iter {} must exceed warmup {}",
                self.n_iter, self.n_warmup
            )));
        }
        let post = self.n_iter - self.n_warmup;
        if (self.n_chains * post) % self.n_thin != 0 {
            return Err(Error::ChainPlan(format!(
                "{} chains x {post} post-warmup sweeps not divisible by thinning {}",
                self.n_chains, self.n_thin
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target acceptance {} outside (0, 1)",
                self.target_accept
            )));
        }
        if !(self.adapt_decay > 0.0 && self.adapt_decay <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "adaptation decay {} outside (0, 1]",
                self.adapt_decay
            )));
        }
        if !self.initial_step.is_finite() || !(self.initial_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial step {} must be positive",
                self.initial_step
            )));
        }
        if !(self.rhat_threshold > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "R-hat threshold {} must exceed 1",
                self.rhat_threshold
            )));
        }
        Ok(())
    }

    /// Retained draws pooled over the chains of one multiplex.
    pub fn n_mc(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.n_chains * (self.n_iter - self.n_warmup) / self.n_thin)
    }

    /// Retained draws per chain; the first chains absorb any remainder.
    pub fn chain_quotas(&self) -> Result<Vec<usize>> {
        let n_mc = self.n_mc()?;
        let base = n_mc / self.n_chains;
        let rem = n_mc % self.n_chains;
        Ok((0..self.n_chains)
            .map(|c| base + usize::from(c < rem))
            .collect())
    }
}

/// Log likelihood of per-intensity correct-answer counts, binomial
/// coefficient included. `a_tilde` must carry one accuracy per column of
/// `rho`, the residual-tail accuracy last.
pub fn log_likelihood(
    sigma: &[u32],
    trials: u32,
    rho: &PhotonProbMatrix,
    a_tilde: &[f64],
) -> Result<f64> {
    if sigma.len() != rho.points() {
        return Err(Error::LengthMismatch(format!(
            "{} counts vs {} intensities",
            sigma.len(),
            rho.points()
        )));
    }
    if a_tilde.len() != rho.cols() {
        return Err(Error::LengthMismatch(format!(
            "{} accuracies vs {} photon columns",
            a_tilde.len(),
            rho.cols()
        )));
    }
    let mut total = 0.0;
    for (d, &s) in sigma.iter().enumerate() {
        if s > trials {
            return Err(Error::InvalidParameter(format!(
                "count {s} exceeds {trials} trials"
            )));
        }
        let acc = ensemble_accuracy(a_tilde, rho.row(d))?;
        total += ln_binomial(trials as u64, s as u64);
        if s > 0 {
            total += s as f64 * acc.ln();
        }
        if s < trials {
            total += (trials - s) as f64 * (1.0 - acc).ln();
        }
    }
    Ok(total)
}

struct LikelihoodContext {
    rows: Vec<Vec<f64>>,
    successes: Vec<f64>,
    failures: Vec<f64>,
}

impl LikelihoodContext {
    fn new(sigma: &[u32], trials: u32, rho: &PhotonProbMatrix) -> Self {
        LikelihoodContext {
            rows: (0..rho.points()).map(|d| rho.row(d).to_vec()).collect(),
            successes: sigma.iter().map(|&s| s as f64).collect(),
            failures: sigma.iter().map(|&s| (trials - s) as f64).collect(),
        }
    }

    /// Coefficient-free log likelihood; the dropped constant cancels in
    /// every Metropolis ratio. Photon mass beyond the tabulated columns
    /// contributes no misses, mirroring `ensemble_accuracy`.
    fn log_lik(&self, a_tilde: &[f64]) -> f64 {
        let mut total = 0.0;
        for (d, row) in self.rows.iter().enumerate() {
            let mut miss = 0.0;
            for (r, a) in row.iter().zip(a_tilde) {
                miss += (1.0 - a) * r;
            }
            let acc = 1.0 - miss;
            if self.successes[d] > 0.0 {
                total += self.successes[d] * acc.ln();
            }
            if self.failures[d] > 0.0 {
                total += self.failures[d] * (1.0 - acc).ln();
            }
        }
        total
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(s: f64) -> f64 {
    (s / (1.0 - s)).ln()
}

struct StateEval {
    z: Vec<f64>,
    params: DetectorParams,
    log_prior_jac: f64,
    log_lik: f64,
}

impl StateEval {
    fn target(&self) -> f64 {
        self.log_prior_jac + self.log_lik
    }
}

/// Maps an unconstrained vector [log α, log β, z₁…z_nmax, w] to parameters,
/// evaluates prior plus Jacobian plus likelihood and rejects any support
/// violation by returning None.
fn eval_state(
    z: Vec<f64>,
    spec: &PriorSpec,
    ctx: &LikelihoodContext,
    reuse_ll: Option<f64>,
) -> Option<StateEval> {
    let n_max = spec.n_max;
    let alpha = z[0].exp();
    let beta = z[1].exp();
    let mut log_jac = z[0] + z[1];
    let mut p_tilde = Vec::with_capacity(n_max + 1);
    p_tilde.push(0.0);
    let mut prev = 0.0f64;
    for i in 0..n_max {
        let s = sigmoid(z[2 + i]);
        log_jac += (1.0 - prev).ln() + s.ln() + (1.0 - s).ln();
        prev += (1.0 - prev) * s;
        p_tilde.push(prev);
    }
    let x = sigmoid(z[2 + n_max]);
    log_jac += (1.0 - spec.p_min).ln() + x.ln() + (1.0 - x).ln();
    let params = DetectorParams {
        alpha,
        beta,
        p_tilde,
        extension: Some(spec.p_min + (1.0 - spec.p_min) * x),
    };
    let log_prior_jac = log_prior_density(&params, spec) + log_jac;
    if !log_prior_jac.is_finite() {
        return None;
    }
    let log_lik = match reuse_ll {
        Some(v) => v,
        None => ctx.log_lik(&params.a_tilde()),
    };
    if !log_lik.is_finite() {
        return None;
    }
    Some(StateEval {
        z,
        params,
        log_prior_jac,
        log_lik,
    })
}

fn encode(draw: &DetectorParams, spec: &PriorSpec) -> Vec<f64> {
    let n_max = draw.n_max();
    let mut z = Vec::with_capacity(n_max + 3);
    z.push(draw.alpha.ln());
    z.push(draw.beta.ln());
    let mut prev = 0.0;
    for i in 1..=n_max {
        let s = ((draw.p_tilde[i] - prev) / (1.0 - prev)).clamp(SIG_CLAMP, 1.0 - SIG_CLAMP);
        z.push(logit(s));
        prev = draw.p_tilde[i];
    }
    let ext = draw.extension.expect("prior draws carry the extension");
    let x = ((ext - spec.p_min) / (1.0 - spec.p_min)).clamp(SIG_CLAMP, 1.0 - SIG_CLAMP);
    z.push(logit(x));
    z
}

fn run_chain(
    ctx: &LikelihoodContext,
    spec: &PriorSpec,
    cfg: &McmcConfig,
    quota: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DetectorParams>> {
    let dim = spec.n_max + 3;
    let mut cur = None;
    for _ in 0..INIT_ATTEMPTS {
        let draw = sample_prior(spec, rng)?;
        if let Some(eval) = eval_state(encode(&draw, spec), spec, ctx, None) {
            cur = Some(eval);
            break;
        }
    }
    let mut cur = cur.ok_or_else(|| {
        Error::InvalidParameter(format!(
            "no finite starting point in {INIT_ATTEMPTS} prior draws"
        ))
    })?;
    let mut log_step = vec![cfg.initial_step.ln(); dim];
    let mut retained = Vec::with_capacity(quota);
    for sweep in 1..=cfg.n_iter {
        let warm = sweep <= cfg.n_warmup;
        let gamma = (sweep as f64).powf(-cfg.adapt_decay);
        for coord in 0..dim {
            let noise: f64 = rng.sample(StandardNormal);
            let mut z = cur.z.clone();
            z[coord] += log_step[coord].exp() * noise;
            let reuse = if coord < 2 { Some(cur.log_lik) } else { None };
            let mut accepted = false;
            if let Some(cand) = eval_state(z, spec, ctx, reuse) {
                let delta = cand.target() - cur.target();
                if delta >= 0.0 || rng.gen::<f64>() < delta.exp() {
                    cur = cand;
                    accepted = true;
                }
            }
            if warm {
                let move_size = gamma * (f64::from(accepted) - cfg.target_accept);
                log_step[coord] = (log_step[coord] + move_size).clamp(LOG_STEP_MIN, LOG_STEP_MAX);
            }
        }
        if !warm {
            let k = sweep - cfg.n_warmup - 1;
            if k % cfg.n_thin == 0 && retained.len() < quota {
                retained.push(cur.params.clone());
            }
        }
    }
    if retained.len() != quota {
        return Err(Error::ChainPlan(format!(
            "retained {} draws where the plan promised {quota}",
            retained.len()
        )));
    }
    Ok(retained)
}

/// Split-half potential scale reduction over parallel chains of one scalar.
/// Each chain is cut in two, so a single drifting chain is caught as well.
/// NaN signals chains too short to judge.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let min_len = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = min_len / 2;
    if half < 2 {
        return f64::NAN;
    }
    let mut means = Vec::with_capacity(chains.len() * 2);
    let mut vars = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        for seg in [&chain[..half], &chain[half..2 * half]] {
            let (m, v) = mean_and_var(seg);
            means.push(m);
            vars.push(v);
        }
    }
    let w = means_of(&vars);
    let (_, between) = mean_and_var(&means);
    if w == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let n = half as f64;
    (((n - 1.0) / n * w + between) / w).sqrt()
}

fn means_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_and_var(values: &[f64]) -> (f64, f64) {
    let mean = means_of(values);
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() as f64 - 1.0);
    (mean, var)
}

fn draw_scalar(d: &DetectorParams, k: usize, n_max: usize) -> f64 {
    if k == 0 {
        d.alpha
    } else if k == 1 {
        d.beta
    } else if k < 2 + n_max {
        d.accuracy(k - 1)
    } else {
        d.extension.map_or(f64::NAN, |e| (1.0 + e) / 2.0)
    }
}

/// Chains of one multiplex: per-chain retained posterior draws and the same
/// quota of exact prior draws, with split R-hat per scalar parameter
/// (α, β, ã₁…ã_nmax, extension accuracy).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MultiplexChains {
    pub multiplex: usize,
    pub posterior_chains: Vec<Vec<DetectorParams>>,
    pub prior_chains: Vec<Vec<DetectorParams>>,
    pub rhat: Vec<f64>,
    pub flagged: bool,
}

impl MultiplexChains {
    pub fn pooled_posterior<F: Fn(&DetectorParams) -> f64>(&self, f: F) -> Vec<f64> {
        self.posterior_chains.iter().flatten().map(f).collect()
    }

    pub fn pooled_prior<F: Fn(&DetectorParams) -> f64>(&self, f: F) -> Vec<f64> {
        self.prior_chains.iter().flatten().map(f).collect()
    }
}

/// Output of one multiplexed run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ChainSet {
    pub n_max: usize,
    pub p_min: f64,
    pub n_mc: usize,
    pub multiplexes: Vec<MultiplexChains>,
    pub flagged: bool,
}

impl ChainSet {
    pub fn n_mult(&self) -> usize {
        self.multiplexes.len()
    }

    /// One scalar across all multiplexes and chains, posterior side.
    pub fn squeezed_posterior<F: Fn(&DetectorParams) -> f64>(&self, f: F) -> Vec<f64> {
        self.multiplexes
            .iter()
            .flat_map(|m| m.posterior_chains.iter().flatten())
            .map(f)
            .collect()
    }

    /// One scalar across all multiplexes and chains, prior side.
    pub fn squeezed_prior<F: Fn(&DetectorParams) -> f64>(&self, f: F) -> Vec<f64> {
        self.multiplexes
            .iter()
            .flat_map(|m| m.prior_chains.iter().flatten())
            .map(f)
            .collect()
    }

    /// Pooled posterior extension coordinate per multiplex.
    pub fn posterior_extensions(&self) -> Vec<Vec<f64>> {
        self.multiplexes
            .iter()
            .map(|m| m.pooled_posterior(|d| d.extension.unwrap_or(f64::NAN)))
            .collect()
    }

    /// Pooled prior extension coordinate per multiplex.
    pub fn prior_extensions(&self) -> Vec<Vec<f64>> {
        self.multiplexes
            .iter()
            .map(|m| m.pooled_prior(|d| d.extension.unwrap_or(f64::NAN)))
            .collect()
    }
}

/// Runs `n_mult` multiplexes of `n_chains` adaptive chains against the
/// counts in `sigma` and pairs them with prior chains of the same shape.
/// With `trials` 0 the likelihood is flat and the posterior must reproduce
/// the prior. Seeded per (multiplex, chain), so results do not depend on
/// thread scheduling.
pub fn sample_posterior(
    sigma: &[u32],
    trials: u32,
    rho: &PhotonProbMatrix,
    spec: &PriorSpec,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<ChainSet> {
    spec.validate()?;
    cfg.validate()?;
    if !rho.augmented() {
        return Err(Error::InvalidParameter(
            "photon matrix must carry the probe column past the cutoff".into(),
        ));
    }
    if rho.n_max() != spec.n_max {
        return Err(Error::LengthMismatch(format!(
            "photon matrix cutoff {} vs prior cutoff {}",
            rho.n_max(),
            spec.n_max
        )));
    }
    if sigma.len() != rho.points() {
        return Err(Error::LengthMismatch(format!(
            "{} counts vs {} intensities",
            sigma.len(),
            rho.points()
        )));
    }
    if let Some(&bad) = sigma.iter().find(|&&s| s > trials) {
        return Err(Error::InvalidParameter(format!(
            "count {bad} exceeds {trials} trials"
        )));
    }
    let n_mc = cfg.n_mc()?;
    let quotas = cfg.chain_quotas()?;
    let ctx = LikelihoodContext::new(sigma, trials, rho);
    let tasks: Vec<(usize, usize)> = (0..cfg.n_mult)
        .flat_map(|m| (0..cfg.n_chains).map(move |c| (m, c)))
        .collect();
    let chains = tasks
        .par_iter()
        .map(|&(m, c)| -> Result<(Vec<DetectorParams>, Vec<DetectorParams>)> {
            let mut post_rng = stream_rng(seed, &[m as u64, c as u64, 0]);
            let posterior = run_chain(&ctx, spec, cfg, quotas[c], &mut post_rng)?;
            let mut prior_rng = stream_rng(seed, &[m as u64, c as u64, 1]);
            let mut prior = Vec::with_capacity(quotas[c]);
            for _ in 0..quotas[c] {
                prior.push(sample_prior(spec, &mut prior_rng)?);
            }
            Ok((posterior, prior))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut it = chains.into_iter();
    let mut multiplexes = Vec::with_capacity(cfg.n_mult);
    let mut any_flagged = false;
    for m in 0..cfg.n_mult {
        let mut posterior_chains = Vec::with_capacity(cfg.n_chains);
        let mut prior_chains = Vec::with_capacity(cfg.n_chains);
        for _ in 0..cfg.n_chains {
            let (post, prior) = it.next().expect("one task per (multiplex, chain)");
            posterior_chains.push(post);
            prior_chains.push(prior);
        }
        let rhat: Vec<f64> = (0..spec.n_max + 3)
            .map(|k| {
                let scalar_chains: Vec<Vec<f64>> = posterior_chains
                    .iter()
                    .map(|ch| ch.iter().map(|d| draw_scalar(d, k, spec.n_max)).collect())
                    .collect();
                split_rhat(&scalar_chains)
            })
            .collect();
        let flagged = rhat.iter().any(|&r| !(r <= cfg.rhat_threshold));
        if flagged {
            let worst = rhat.iter().fold(f64::NAN, |a, &b| a.max(b));
            log::warn!("multiplex {m}: split R-hat up to {worst:.3} exceeds {}", cfg.rhat_threshold);
        }
        any_flagged |= flagged;
        multiplexes.push(MultiplexChains {
            multiplex: m,
            posterior_chains,
            prior_chains,
            rhat,
            flagged,
        });
    }
    Ok(ChainSet {
        n_max: spec.n_max,
        p_min: spec.p_min,
        n_mc,
        multiplexes,
        flagged: any_flagged,
    })
}
