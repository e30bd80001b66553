//! Baseline truncated Indian-buffet sampler without row-sum restriction:
//! conjugate Beta draws for the column weights and per-entry Gibbs for the
//! matrix. Used by the experiments as the comparison model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use ribp::model::{
    sample_prior_pi, sample_unrestricted_matrix, FeatureMatrix, ObservationModel,
    TruncatedBetaProcessPrior,
};
use ribp::poibin::BernoulliProfile;
use ribp::{Error, Result};

pub struct IbpSampler<'a> {
    prior: TruncatedBetaProcessPrior,
    obs: &'a dyn ObservationModel,
    pub pi: BernoulliProfile,
    pub z: FeatureMatrix,
    rng: ChaCha8Rng,
}

impl<'a> IbpSampler<'a> {
    pub fn new(
        prior: TruncatedBetaProcessPrior,
        obs: &'a dyn ObservationModel,
        n_rows: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = sample_prior_pi(&prior, &mut rng);
        let z = sample_unrestricted_matrix(&pi, n_rows, &mut rng);
        Self { prior, obs, pi, z, rng }
    }

    /// Unnormalized log-posterior of the current state, for picking the
    /// best visited sample.
    pub fn log_joint(&self) -> f64 {
        let mut lp = self.prior.log_density(&self.pi);
        let n = self.z.n_rows();
        for (k, &m_k) in self.z.col_counts().iter().enumerate() {
            let p = self.pi.get(k);
            if m_k > 0 {
                lp += m_k as f64 * p.ln();
            }
            if n - m_k > 0 {
                lp += (n - m_k) as f64 * (1.0 - p).ln();
            }
        }
        lp + self.obs.full_loglik(&self.z)
    }

    pub fn sweep(&mut self) -> Result<()> {
        let n = self.z.n_rows();
        let k = self.z.n_cols();
        for row in 0..n {
            let obs = self.obs;
            // The scorer stays valid while only this row changes.
            let scorer = obs.row_scorer(&self.z, row);
            for col in 0..k {
                let cur = self.z.get(row, col);
                let p = self.pi.get(col);
                let mut cand = self.z.row(row).to_vec();
                cand[col] = 0;
                let g0 = scorer.loglik(&cand);
                cand[col] = 1;
                let g1 = scorer.loglik(&cand);
                let w1 = if p > 0.0 { p.ln() + g1 } else { f64::NEG_INFINITY };
                let w0 = if p < 1.0 { (1.0 - p).ln() + g0 } else { f64::NEG_INFINITY };
                let new = if w1 == f64::NEG_INFINITY {
                    0
                } else if w0 == f64::NEG_INFINITY {
                    1
                } else {
                    let p1 = 1.0 / (1.0 + (w0 - w1).exp());
                    u8::from(self.rng.random::<f64>() < p1)
                };
                if new != cur {
                    let old_row = self.z.row(row).to_vec();
                    self.z.set(row, col, new)?;
                    self.obs.notify_row_change(&self.z, row, &old_row);
                }
            }
        }
        // Conjugate update of every column weight.
        let shape = self.prior.alpha / self.prior.k as f64;
        for col in 0..k {
            let m_k = self.z.col_count(col) as f64;
            let dist = Beta::new(shape + m_k, 1.0 + n as f64 - m_k)
                .map_err(|e| Error::Numerical(format!("beta draw: {e}")))?;
            let v: f64 = dist.sample(&mut self.rng);
            self.pi.set(col, v.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ribp::model::UniformObservation;

    #[test]
    fn prior_chain_preserves_column_means() {
        // With a uniform likelihood the chain samples the prior; the
        // stationary P(z_nk = 1) is E[pi_k] = (alpha/K)/(alpha/K + 1).
        let alpha = 2.0;
        let k = 3;
        let prior = TruncatedBetaProcessPrior::new(alpha, k).unwrap();
        let obs = UniformObservation;
        let mut s = IbpSampler::new(prior, &obs, 2, 11);
        let mut active = 0usize;
        let reps = 30_000;
        for _ in 0..reps {
            s.sweep().unwrap();
            active += s.z.row_sums().iter().sum::<usize>();
        }
        let mean = active as f64 / (reps * 2) as f64;
        let shape = alpha / k as f64;
        let expect = k as f64 * shape / (shape + 1.0);
        assert!((mean - expect).abs() < 0.05, "mean {mean} vs {expect}");
    }
}
