//! Split-R̂ and multi-chain effective sample size.

use thiserror::Error;

use super::PosteriorDraws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DiagnosticError {
    #[error("within-chain variance is zero")]
    ZeroVariance,
    #[error("need at least 4 draws per chain to split chains")]
    TooFewDraws,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub rhat: Vec<Result<f64, DiagnosticError>>,
    pub ess: Vec<f64>,
    /// Human-readable problems, e.g. a proposal that almost never moves.
    pub warnings: Vec<String>,
}

impl Diagnostics {
    /// Largest finite R̂; `None` if any parameter failed.
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat
            .iter()
            .try_fold(f64::NEG_INFINITY, |acc, r| r.ok().map(|v| acc.max(v)))
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split-R̂ for one parameter. Chains are trimmed to the shortest, then
/// halved (the middle draw of an odd-length chain is dropped).
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64, DiagnosticError> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    if half < 2 {
        return Err(DiagnosticError::TooFewDraws);
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[n - half..n]);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within = mean(&halves.iter().map(|h| sample_variance(h)).collect::<Vec<_>>());
    if !(within > 0.0) {
        return Err(DiagnosticError::ZeroVariance);
    }
    let h = half as f64;
    let between_over_n = sample_variance(&means);
    let var_plus = (h - 1.0) / h * within + between_over_n;
    Ok((var_plus / within).sqrt())
}

/// Lag-`lag` autocovariance (biased, divided by `n`).
fn autocovariance(xs: &[f64], mean: f64, lag: usize) -> f64 {
    let n = xs.len();
    let mut acc = 0.0;
    for i in 0..n - lag {
        acc += (xs[i] - mean) * (xs[i + lag] - mean);
    }
    acc / n as f64
}

/// Effective sample size with Geyer's initial positive sequence truncation
/// and monotone adjustment, pooled over chains. Result is clamped to
/// `[1, total draws]`.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let total = (m * n) as f64;
    if m == 0 || n < 2 {
        return total.max(1.0);
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let acov0: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| autocovariance(c, mu, 0))
        .collect();
    let within = mean(&acov0) * nf / (nf - 1.0);
    let between_over_n = if m > 1 { sample_variance(&means) } else { 0.0 };
    let var_plus = within * (nf - 1.0) / nf + between_over_n;
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return 1.0;
    }
    let rho = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (within - acov) / var_plus
    };

    // Sum of pairs (rho_{2k} + rho_{2k+1}) while positive, made monotone.
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum_pairs;
    let ess = if tau > 0.0 { total / tau } else { total };
    ess.clamp(1.0, total)
}

/// Split-R̂ for every parameter of `draws`.
pub fn compute_rhat(draws: &PosteriorDraws) -> Vec<Result<f64, DiagnosticError>> {
    (0..draws.dim())
        .map(|j| {
            let chains = draws.parameter_chains(j);
            let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
            split_rhat(&refs)
        })
        .collect()
}

/// ESS for every parameter of `draws`.
pub fn compute_ess(draws: &PosteriorDraws) -> Vec<f64> {
    (0..draws.dim())
        .map(|j| {
            let chains = draws.parameter_chains(j);
            let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
            effective_sample_size(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    fn refs(chains: &[Vec<f64>]) -> Vec<&[f64]> {
        chains.iter().map(Vec::as_slice).collect()
    }

    /// Textbook split-R̂ written out on explicit halves.
    fn rhat_oracle(chains: &[Vec<f64>]) -> f64 {
        let n = chains[0].len();
        let h = n / 2;
        let mut pieces = Vec::new();
        for c in chains {
            pieces.push(c[..h].to_vec());
            pieces.push(c[n - h..].to_vec());
        }
        let k = pieces.len() as f64;
        let hf = h as f64;
        let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / hf).collect();
        let grand = means.iter().sum::<f64>() / k;
        let b = hf / (k - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
        let w = pieces
            .iter()
            .zip(&means)
            .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (hf - 1.0))
            .sum::<f64>()
            / k;
        (((hf - 1.0) / hf * w + b / hf) / w).sqrt()
    }

    #[test]
    fn iid_rhat_near_one() {
        let chains = iid_chains(4, 5000, 1);
        let r = split_rhat(&refs(&chains)).unwrap();
        assert!((0.99..=1.01).contains(&r), "rhat {r}");
        assert!((r - rhat_oracle(&chains)).abs() < 1e-12);
    }

    #[test]
    fn separated_chains_rhat_large() {
        let mut chains = iid_chains(2, 1000, 2);
        for x in chains[0].iter_mut() {
            *x -= 10.0;
        }
        for x in chains[1].iter_mut() {
            *x += 10.0;
        }
        let r = split_rhat(&refs(&chains)).unwrap();
        let oracle = rhat_oracle(&chains);
        assert!((r - oracle).abs() < 1e-10);
        // With unit within-chain variance, var+ is about 1 + 400 * 4/3 / 2.
        assert!(r > 3.0, "rhat {r}");
    }

    #[test]
    fn constant_chains_flagged() {
        let chains = vec![vec![1.5; 100], vec![1.5; 100]];
        assert_eq!(split_rhat(&refs(&chains)), Err(DiagnosticError::ZeroVariance));
        let short = vec![vec![1.0, 2.0, 3.0]];
        assert_eq!(split_rhat(&refs(&short)), Err(DiagnosticError::TooFewDraws));
    }

    #[test]
    fn iid_ess_close_to_n() {
        let chains = iid_chains(1, 20_000, 3);
        let ess = effective_sample_size(&refs(&chains));
        assert!((16_000.0..=24_000.0).contains(&ess), "ess {ess}");
        let chains = iid_chains(4, 5000, 4);
        let ess = effective_sample_size(&refs(&chains));
        assert!((16_000.0..=20_000.0).contains(&ess), "ess {ess}");
    }

    #[test]
    fn repeated_pairs_halve_ess() {
        let base = &iid_chains(1, 10_000, 5)[0];
        let doubled: Vec<f64> = base.iter().flat_map(|&x| [x, x]).collect();
        let ess = effective_sample_size(&[&doubled]);
        assert!(ess < 0.6 * doubled.len() as f64, "ess {ess}");
    }

    #[test]
    fn strongly_autocorrelated_chain_has_tiny_ess() {
        let noise = &iid_chains(1, 20_000, 6)[0];
        let rho: f64 = 0.99;
        let mut x = 0.0;
        let ar: Vec<f64> = noise
            .iter()
            .map(|e| {
                x = rho * x + (1.0 - rho * rho).sqrt() * e;
                x
            })
            .collect();
        let ess = effective_sample_size(&[&ar]);
        // Asymptotic value is n (1 - rho) / (1 + rho) ≈ 100.
        assert!(ess < 0.05 * ar.len() as f64, "ess {ess}");
        assert!(ess > 20.0, "ess {ess}");
    }

    #[test]
    fn short_chain_is_clamped() {
        for chain in [[0.3, -1.2], [1.0, 1.0], [5.0, 5.1]] {
            let ess = effective_sample_size(&[&chain]);
            assert!((1.0..=2.0).contains(&ess), "ess {ess}");
        }
    }
}
