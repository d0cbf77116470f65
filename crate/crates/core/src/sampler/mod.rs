//! Adaptive random-walk Metropolis over an arbitrary log density.
//!
//! Each chain runs on its own ChaCha substream derived from the master seed,
//! so the output does not depend on how chains are scheduled across threads.
//!
//! Warmup is split into four equal windows. The first uses a unit diagonal
//! proposal, the second a diagonal built from the first window's variances,
//! and the last two a full covariance estimated from the previous window.
//! The global step size follows a Robbins–Monro recursion on the acceptance
//! probability throughout warmup. Everything is frozen once warmup ends.

mod diagnostics;
mod seed;

pub use diagnostics::{
    compute_ess, compute_rhat, effective_sample_size, split_rhat, DiagnosticError, Diagnostics,
};
pub use seed::{derive_substream_seed, splitmix64};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceptance rate below which a chain is reported as stuck.
pub const DEGENERATE_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Retained draws per chain.
    pub draws: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub init_step_scale: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 2000,
            draws: 5000,
            seed: 0,
            target_acceptance: 0.30,
            init_step_scale: 0.1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::InvalidConfig("mcmc.chains must be at least 1".into()));
        }
        if self.warmup < 100 {
            return Err(Error::InvalidConfig("mcmc.warmup must be at least 100".into()));
        }
        if self.draws < 1 {
            return Err(Error::InvalidConfig("mcmc.draws must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig("mcmc.target_acceptance must lie in (0, 1)".into()));
        }
        if !(self.init_step_scale > 0.0 && self.init_step_scale.is_finite()) {
            return Err(Error::InvalidConfig("mcmc.init_step_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Retained draws of all chains, stored row-major and chain after chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    dim: usize,
    values: Vec<f64>,
    chain_ids: Vec<usize>,
    accept_rate: Vec<f64>,
    diagnostics: Diagnostics,
}

impl PosteriorDraws {
    /// Wraps externally produced chains (each flattened row-major, equal
    /// lengths). The acceptance rate is taken as the fraction of moves.
    pub fn from_chains(dim: usize, chains: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 || chains.is_empty() {
            return Err(Error::Domain("draws need at least one chain and one dimension".into()));
        }
        let len = chains[0].len();
        if len == 0 || len % dim != 0 || chains.iter().any(|c| c.len() != len) {
            return Err(Error::Domain("chains must be non-empty, equal-length and row-aligned".into()));
        }
        let rows = len / dim;
        let accept_rate = chains
            .iter()
            .map(|c| {
                if rows < 2 {
                    return 0.0;
                }
                let moves = c.chunks(dim).zip(c.chunks(dim).skip(1)).filter(|(a, b)| a != b).count();
                moves as f64 / (rows - 1) as f64
            })
            .collect();
        Ok(Self::assemble(dim, chains, accept_rate))
    }

    fn assemble(dim: usize, chains: Vec<Vec<f64>>, accept_rate: Vec<f64>) -> Self {
        let rows = chains[0].len() / dim;
        let chain_ids = (0..chains.len()).flat_map(|c| std::iter::repeat_n(c, rows)).collect();
        let values = chains.concat();
        let mut draws = Self {
            dim,
            values,
            chain_ids,
            accept_rate,
            diagnostics: Diagnostics { rhat: Vec::new(), ess: Vec::new(), warnings: Vec::new() },
        };
        let rhat = compute_rhat(&draws);
        let ess = compute_ess(&draws);
        let warnings = draws
            .accept_rate
            .iter()
            .enumerate()
            .filter(|(_, &a)| a < DEGENERATE_ACCEPTANCE)
            .map(|(c, a)| format!("chain {c} acceptance rate {a:.4} is below {DEGENERATE_ACCEPTANCE}"))
            .collect();
        draws.diagnostics = Diagnostics { rhat, ess, warnings };
        draws
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chain_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain_ids.is_empty()
    }

    pub fn n_chains(&self) -> usize {
        self.accept_rate.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.len() / self.n_chains()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn chain_ids(&self) -> &[usize] {
        &self.chain_ids
    }

    pub fn accept_rate(&self) -> &[f64] {
        &self.accept_rate
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Per-chain traces of parameter `j`.
    pub fn parameter_chains(&self, j: usize) -> Vec<Vec<f64>> {
        let per = self.draws_per_chain();
        (0..self.n_chains())
            .map(|c| (c * per..(c + 1) * per).map(|i| self.values[i * self.dim + j]).collect())
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.rows() {
            for (acc, x) in m.iter_mut().zip(row) {
                *acc += x;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Sample covariance, row-major `dim x dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let mean = self.mean();
        let d = self.dim;
        let mut cov = vec![0.0; d * d];
        for row in self.rows() {
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
        }
        let denom = self.len() as f64 - 1.0;
        cov.iter_mut().for_each(|v| *v /= denom);
        cov
    }
}

/// Runs all chains from the same starting point.
pub fn sample_posterior<F>(log_density: F, init: &[f64], cfg: &McmcConfig) -> Result<PosteriorDraws>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    sample_posterior_jittered(log_density, init, &vec![0.0; init.len()], cfg)
}

/// Runs all chains, each started at `center + jitter_sd * z` with `z`
/// standard normal drawn from the chain's own substream. A start with a
/// non-finite density falls back to `center`.
pub fn sample_posterior_jittered<F>(
    log_density: F,
    center: &[f64],
    jitter_sd: &[f64],
    cfg: &McmcConfig,
) -> Result<PosteriorDraws>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let dim = center.len();
    if dim == 0 || jitter_sd.len() != dim {
        return Err(Error::SamplerInit("initial point and jitter must share a non-zero length".into()));
    }
    let lp0 = log_density(center);
    if !lp0.is_finite() {
        return Err(Error::SamplerInit(format!("log density at the initial point is {lp0}")));
    }
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_substream_seed(cfg.seed, c as u64));
            let mut start: Vec<f64> = center
                .iter()
                .zip(jitter_sd)
                .map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut lp = log_density(&start);
            if !lp.is_finite() {
                start.copy_from_slice(center);
                lp = lp0;
            }
            run_chain(&log_density, start, lp, cfg, &mut rng)
        })
        .collect();
    let accept_rate = outputs.iter().map(|o| o.accept_rate).collect();
    let chains = outputs.into_iter().map(|o| o.draws).collect();
    Ok(PosteriorDraws::assemble(dim, chains, accept_rate))
}

struct ChainOutput {
    draws: Vec<f64>,
    accept_rate: f64,
}

/// Running mean and scatter matrix (Welford).
struct Moments {
    n: usize,
    mean: Vec<f64>,
    scatter: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], scatter: vec![0.0; dim * dim] }
    }

    fn push(&mut self, x: &[f64]) {
        let d = x.len();
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for a in 0..d {
            let after = x[a] - self.mean[a];
            for b in 0..d {
                self.scatter[a * d + b] += delta[b] * after;
            }
        }
    }

    /// Covariance shrunk towards `1e-3 * I`, as Stan does for its metric.
    fn regularized_covariance(&self, diagonal_only: bool) -> Vec<f64> {
        let d = self.mean.len();
        let n = self.n as f64;
        let w = n / (n + 5.0);
        let ridge = 1e-3 * 5.0 / (n + 5.0);
        let mut cov = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                if diagonal_only && a != b {
                    continue;
                }
                cov[a * d + b] = w * self.scatter[a * d + b] / (n - 1.0);
            }
            cov[a * d + a] += ridge;
        }
        cov
    }
}

/// Lower Cholesky factor of a row-major SPD matrix.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn run_chain<F>(log_density: &F, mut x: Vec<f64>, mut lp: f64, cfg: &McmcConfig, rng: &mut ChaCha8Rng) -> ChainOutput
where
    F: Fn(&[f64]) -> f64,
{
    let d = x.len();
    let warmup = cfg.warmup;
    let window = warmup / 4;
    let boundaries = [window, 2 * window, 3 * window];
    let default_log_scale = (2.38 / (d as f64).sqrt()).ln();

    let mut chol = identity(d);
    let mut log_scale = cfg.init_step_scale.ln();
    let mut stage_step = 0usize;
    let mut moments = Moments::new(d);

    let mut z = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut draws = Vec::with_capacity(cfg.draws * d);
    let mut accepted = 0usize;

    for t in 0..warmup + cfg.draws {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let scale = log_scale.exp();
        for i in 0..d {
            let mut step = 0.0;
            for k in 0..=i {
                step += chol[i * d + k] * z[k];
            }
            y[i] = x[i] + scale * step;
        }
        let ly = log_density(&y);
        let log_ratio = if ly.is_finite() { ly - lp } else { f64::NEG_INFINITY };
        let u: f64 = rng.random();
        let accept = u.ln() < log_ratio;
        if accept {
            x.copy_from_slice(&y);
            lp = ly;
        }

        if t < warmup {
            let accept_prob = log_ratio.min(0.0).exp();
            stage_step += 1;
            log_scale += (stage_step as f64).powf(-0.6) * (accept_prob - cfg.target_acceptance);
            moments.push(&x);
            if let Some(stage) = boundaries.iter().position(|&b| b == t + 1) {
                let cov = moments.regularized_covariance(stage == 0);
                if let Some(l) = cholesky(&cov, d) {
                    chol = l;
                    log_scale = default_log_scale;
                    stage_step = 0;
                }
                moments = Moments::new(d);
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.extend_from_slice(&x);
        }
    }

    ChainOutput {
        draws,
        accept_rate: accepted as f64 / cfg.draws as f64,
    }
}
