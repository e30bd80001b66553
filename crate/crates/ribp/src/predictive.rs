//! Importance-sampled predictive probabilities for new rows.
//!
//! The proposal is the exact posterior of `pi` under the *unrestricted*
//! truncated model given the same matrix: independent
//! `Beta(alpha/K + m_k, N + 1 - m_k)` coordinates. Reweighting to the
//! restricted posterior leaves the per-draw log-weight
//! `sum_n [log f(S_n) - log PoiBin(S_n | pi)]`; the predictive is the
//! self-normalized average of the restricted new-row probability.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, RowSumLawTable, TruncatedBetaProcessPrior};
use crate::poibin::{poibin_pmf_recursive, BernoulliProfile, LOG_ZERO};

/// One proposal draw of the profile with its restricted-model log-weight.
#[derive(Debug, Clone)]
pub struct WeightedPiSample {
    pub pi: BernoulliProfile,
    pub log_weight: f64,
}

/// T independent draws from the unrestricted conjugate posterior of `pi`
/// given `z`, each carrying the restriction log-weight.
pub fn sample_weighted_posterior_pi<R: Rng + ?Sized>(
    z: &FeatureMatrix,
    prior: &TruncatedBetaProcessPrior,
    f: &RowSumLawTable,
    t: usize,
    rng: &mut R,
) -> Result<Vec<WeightedPiSample>> {
    if z.n_cols() != prior.k {
        return Err(Error::Domain(
            "matrix and prior truncation levels must agree".into(),
        ));
    }
    if t == 0 {
        return Err(Error::Domain("need at least one proposal draw".into()));
    }
    let n = z.n_rows();
    let shape = prior.alpha / prior.k as f64;
    let dists: Vec<Beta<f64>> = (0..prior.k)
        .map(|k| {
            Beta::new(shape + z.col_count(k) as f64, (n - z.col_count(k)) as f64 + 1.0)
                .map_err(|e| Error::Numerical(format!("beta proposal: {e}")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let mut pi = BernoulliProfile::new(vec![0.5; prior.k])?;
        for (k, d) in dists.iter().enumerate() {
            pi.set(k, d.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16))?;
        }
        let log_weight = importance_log_weight(&pi, z, f)?;
        out.push(WeightedPiSample { pi, log_weight });
    }
    Ok(out)
}

/// `sum_n [log f(S_n) - log PoiBin(S_n | pi)]`; `LOG_ZERO` when some row
/// sum is infeasible under the profile.
pub fn importance_log_weight(
    pi: &BernoulliProfile,
    z: &FeatureMatrix,
    f: &RowSumLawTable,
) -> Result<f64> {
    let s_max = z.row_sums().iter().copied().max().unwrap_or(0);
    let poibin = poibin_pmf_recursive(pi, s_max)?;
    let mut lw = 0.0;
    for &s in z.row_sums() {
        let lf = f.log_prob(s);
        let lpb = poibin.log_prob(s);
        if lf == LOG_ZERO || lpb == LOG_ZERO {
            return Ok(LOG_ZERO);
        }
        lw += lf - lpb;
    }
    Ok(lw)
}

/// Restricted log-probability of one new row given a fixed profile:
/// the conditional Bernoulli factor times `f(S)`, i.e.
/// `sum_k [z_k log pi_k + (1-z_k) log(1-pi_k)] + log f(S) - log PoiBin(S)`.
pub fn new_row_logprob(
    z_new: &[u8],
    pi: &BernoulliProfile,
    f: &RowSumLawTable,
) -> Result<f64> {
    if z_new.len() != pi.len() {
        return Err(Error::Domain("row length must match the profile".into()));
    }
    let mut lp = 0.0;
    let mut s = 0usize;
    for (k, &b) in z_new.iter().enumerate() {
        let p = pi.get(k);
        match b {
            0 => {
                if p == 1.0 {
                    return Ok(LOG_ZERO);
                }
                lp += (1.0 - p).ln();
            }
            1 => {
                if p == 0.0 {
                    return Ok(LOG_ZERO);
                }
                lp += p.ln();
                s += 1;
            }
            other => {
                return Err(Error::Domain(format!("matrix entries must be 0/1, got {other}")))
            }
        }
    }
    let lf = f.log_prob(s);
    if lf == LOG_ZERO {
        return Ok(LOG_ZERO);
    }
    let lpb = poibin_pmf_recursive(pi, s)?.log_prob(s);
    if lpb == LOG_ZERO {
        return Ok(LOG_ZERO);
    }
    Ok(lp + lf - lpb)
}

/// Self-normalized importance estimate of the predictive log-probability
/// of a new row. Errors if every weight is zero.
pub fn predictive_logprob(
    z_new: &[u8],
    samples: &[WeightedPiSample],
    f: &RowSumLawTable,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EstimationFailure("no proposal draws".into()));
    }
    let max_w = samples
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_w == f64::NEG_INFINITY {
        return Err(Error::EstimationFailure(
            "all importance weights are zero; the proposal never hits the restricted support"
                .into(),
        ));
    }
    let mut num = 0.0f64; // sum of w * p(z_new | pi)
    let mut den = 0.0f64; // sum of w
    for s in samples {
        if s.log_weight == f64::NEG_INFINITY {
            continue;
        }
        let w = (s.log_weight - max_w).exp();
        den += w;
        let lp = new_row_logprob(z_new, &s.pi, f)?;
        if lp != LOG_ZERO {
            num += w * lp.exp();
        }
    }
    if num <= 0.0 {
        return Ok(LOG_ZERO);
    }
    Ok((num / den).ln())
}

/// Batch variant of `predictive_logprob` for many query rows against the
/// same weighted sample set: the Poisson-binomial table of each draw is
/// built once (up to the largest query row sum) and shared, so the cost is
/// O(T (K S_max + R K)) for R rows instead of O(T R K S_max).
pub fn predictive_logprobs_batch(
    rows: &[Vec<u8>],
    samples: &[WeightedPiSample],
    f: &RowSumLawTable,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EstimationFailure("no proposal draws".into()));
    }
    let max_w = samples
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_w == f64::NEG_INFINITY {
        return Err(Error::EstimationFailure(
            "all importance weights are zero; the proposal never hits the restricted support"
                .into(),
        ));
    }
    let s_max = rows.iter().map(|r| bit_sum(r)).max().unwrap_or(0);
    let mut nums = vec![0.0f64; rows.len()];
    let mut den = 0.0f64;
    for s in samples {
        if s.log_weight == f64::NEG_INFINITY {
            continue;
        }
        let w = (s.log_weight - max_w).exp();
        den += w;
        if s.pi.probs().iter().any(|&p| p == 0.0 || p == 1.0) {
            // Boundary coordinates break the shared log-odds shortcut.
            for (row, num) in rows.iter().zip(&mut nums) {
                let lp = new_row_logprob(row, &s.pi, f)?;
                if lp != LOG_ZERO {
                    *num += w * lp.exp();
                }
            }
            continue;
        }
        let k = s.pi.len();
        let poibin = poibin_pmf_recursive(&s.pi, s_max.min(k))?;
        // Per-draw log odds sum: start from the all-zero row and add
        // log(pi/(1-pi)) per active entry.
        let base: f64 = s.pi.probs().iter().map(|&p| (1.0 - p).ln()).sum();
        for (row, num) in rows.iter().zip(&mut nums) {
            let mut lp = base;
            let mut sum = 0usize;
            for (kk, &b) in row.iter().enumerate() {
                if b == 1 {
                    let p = s.pi.get(kk);
                    lp += p.ln() - (1.0 - p).ln();
                    sum += 1;
                }
            }
            let lf = f.log_prob(sum);
            let lpb = poibin.log_prob(sum);
            if lf == LOG_ZERO || lpb == LOG_ZERO {
                continue;
            }
            *num += w * (lp + lf - lpb).exp();
        }
    }
    Ok(nums
        .into_iter()
        .map(|n| if n > 0.0 { (n / den).ln() } else { LOG_ZERO })
        .collect())
}

fn bit_sum(row: &[u8]) -> usize {
    row.iter().map(|&b| b as usize).sum()
}

/// Effective sample size `(sum w)^2 / sum w^2` of the weight set.
pub fn effective_sample_size(samples: &[WeightedPiSample]) -> f64 {
    let max_w = samples
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_w == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for s in samples {
        if s.log_weight == f64::NEG_INFINITY {
            continue;
        }
        let w = (s.log_weight - max_w).exp();
        sum += w;
        sum_sq += w * w;
    }
    if sum_sq == 0.0 {
        0.0
    } else {
        sum * sum / sum_sq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RowSumLaw;
    use crate::quadrature::gauss_legendre_01;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn degenerate_table(s: usize, k: usize) -> RowSumLawTable {
        RowSumLawTable::new(RowSumLaw::Degenerate(s), k).unwrap()
    }

    #[test]
    fn degenerate_k1_row_is_certain() {
        // K = 1 with row sums fixed to 1: the only feasible row is (1),
        // whatever pi is, so the predictive is exactly 1.
        let f = degenerate_table(1, 1);
        let prior = TruncatedBetaProcessPrior::new(2.0, 1).unwrap();
        let z = FeatureMatrix::from_rows(vec![vec![1], vec![1]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = sample_weighted_posterior_pi(&z, &prior, &f, 200, &mut rng).unwrap();
        let lp = predictive_logprob(&[1], &samples, &f).unwrap();
        assert!(lp.abs() < 1e-12, "log predictive {lp} should be 0");
        let lp0 = predictive_logprob(&[0], &samples, &f).unwrap();
        assert_eq!(lp0, LOG_ZERO);
    }

    #[test]
    fn estimator_normalizes_over_rows() {
        // Summing the estimated predictive over every possible new row must
        // give 1 (each draw's restricted law is normalized, and the
        // estimator is linear in the new-row probability).
        let f = RowSumLawTable::new(RowSumLaw::Poisson(1.2), 3).unwrap();
        let prior = TruncatedBetaProcessPrior::new(1.5, 3).unwrap();
        let z = FeatureMatrix::from_rows(vec![vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = sample_weighted_posterior_pi(&z, &prior, &f, 500, &mut rng).unwrap();
        let mut total = 0.0;
        for code in 0..8u8 {
            let row = [code & 1, (code >> 1) & 1, (code >> 2) & 1];
            let lp = predictive_logprob(&row, &samples, &f).unwrap();
            if lp != LOG_ZERO {
                total += lp.exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }

    #[test]
    fn matches_quadrature_on_tiny_model() {
        // K = 2, N = 2, alpha = 2 so the prior on each pi_k is uniform.
        // The exact predictive integrates the restricted row probability
        // against the restricted posterior density over [0,1]^2.
        let k = 2;
        let f = RowSumLawTable::new(RowSumLaw::Poisson(0.9), k).unwrap();
        let prior = TruncatedBetaProcessPrior::new(2.0, k).unwrap();
        let z = FeatureMatrix::from_rows(vec![vec![1, 0], vec![1, 1]]).unwrap();
        let z_new = [0u8, 1u8];

        // Unnormalized restricted posterior density of (pi1, pi2) times the
        // new-row restricted probability, integrated by tensor quadrature.
        let (nodes, weights) = gauss_legendre_01(48);
        let mut numer = 0.0;
        let mut denom = 0.0;
        for (i, &p1) in nodes.iter().enumerate() {
            for (j, &p2) in nodes.iter().enumerate() {
                let pi = BernoulliProfile::new(vec![p1, p2]).unwrap();
                let post = crate::model::restricted_matrix_logprob(&z, &pi, &f)
                    .unwrap()
                    .exp();
                let w = weights[i] * weights[j] * post;
                denom += w;
                let lp = new_row_logprob(&z_new, &pi, &f).unwrap();
                numer += w * lp.exp();
            }
        }
        let exact = numer / denom;

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let samples =
            sample_weighted_posterior_pi(&z, &prior, &f, 200_000, &mut rng).unwrap();
        let est = predictive_logprob(&z_new, &samples, &f).unwrap().exp();
        assert!(
            (est - exact).abs() < 1e-3,
            "estimate {est} vs quadrature {exact}"
        );
        let ess = effective_sample_size(&samples);
        assert!(ess > 1000.0, "ESS {ess} unexpectedly small");
    }

    #[test]
    fn batch_matches_per_row_estimates() {
        let f = RowSumLawTable::new(RowSumLaw::Poisson(1.1), 4).unwrap();
        let prior = TruncatedBetaProcessPrior::new(2.0, 4).unwrap();
        let z = FeatureMatrix::from_rows(vec![vec![1, 0, 1, 0], vec![0, 1, 0, 0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let samples = sample_weighted_posterior_pi(&z, &prior, &f, 300, &mut rng).unwrap();
        let rows: Vec<Vec<u8>> = (0..16u8)
            .map(|c| (0..4).map(|i| (c >> i) & 1).collect())
            .collect();
        let batch = predictive_logprobs_batch(&rows, &samples, &f).unwrap();
        for (row, &b) in rows.iter().zip(&batch) {
            let single = predictive_logprob(row, &samples, &f).unwrap();
            if single == LOG_ZERO {
                assert_eq!(b, LOG_ZERO);
            } else {
                assert!((b - single).abs() < 1e-10, "row {row:?}: {b} vs {single}");
            }
        }
    }

    #[test]
    fn weights_invariant_to_row_order() {
        let f = RowSumLawTable::new(RowSumLaw::Poisson(1.0), 3).unwrap();
        let rows = vec![vec![1, 0, 1], vec![0, 1, 0], vec![1, 1, 0]];
        let mut rev = rows.clone();
        rev.reverse();
        let z1 = FeatureMatrix::from_rows(rows).unwrap();
        let z2 = FeatureMatrix::from_rows(rev).unwrap();
        let pi = BernoulliProfile::new(vec![0.3, 0.6, 0.2]).unwrap();
        let w1 = importance_log_weight(&pi, &z1, &f).unwrap();
        let w2 = importance_log_weight(&pi, &z2, &f).unwrap();
        assert!((w1 - w2).abs() < 1e-12);
    }
}
