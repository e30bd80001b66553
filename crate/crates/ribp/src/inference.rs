//! MCMC for the truncated restricted model.
//!
//! Update operators:
//! - per-entry Gibbs when the row-sum law is non-degenerate, with odds
//!   `pi_k f(a+1) / PoiBin(a+1|pi) * g(..z=1..)` against
//!   `(1-pi_k) f(a) / PoiBin(a|pi) * g(..z=0..)` where `a` is the rest of
//!   the row's sum and the Poisson-binomial runs over the full profile;
//! - location Gibbs when the row sum is fixed, resampling where each
//!   active entry sits with weights `pi_k/(1-pi_k) * g`;
//! - whole-row Metropolis-Hastings with prior-conditional independence
//!   proposals (`S' ~ f`, row from the conditional Bernoulli law), so the
//!   prior terms cancel and the acceptance ratio is the likelihood ratio;
//! - per-coordinate (or block) Metropolis-Hastings on `pi` with the
//!   conjugate unrestricted-posterior proposal `Beta(alpha/K + m_k,
//!   N + 1 - m_k)`; the Beta kernel cancels the posterior numerator
//!   exactly, leaving the Poisson-binomial ratio
//!   `prod_n PoiBin(S_n|pi) / PoiBin(S_n|pi')`.
//!
//! The sampler keeps the log-joint and the Poisson-binomial table for the
//! current profile cached and updates them incrementally; a periodic audit
//! recomputes both from scratch.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::model::{
    restricted_matrix_logprob, sample_prior_pi, sample_restricted_rows, FeatureMatrix,
    ObservationModel, RowSumLawTable, TruncatedBetaProcessPrior,
};
use crate::poibin::{
    poibin_pmf_dft, poibin_pmf_recursive, BernoulliProfile, CondBernoulliTable, LOG_ZERO,
};

/// Which exact Poisson-binomial route backs the cached table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoiBinCompute {
    Recursive,
    Dft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiUpdateMode {
    PerCoordinate,
    Block,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub thin: usize,
    pub seed: u64,
    /// Attempt a full-row MH pass every this many sweeps; 0 disables.
    pub row_mh_period: usize,
    pub pi_update_mode: PiUpdateMode,
    pub poibin_method: PoiBinCompute,
    /// Update pi at all; tests of the Z-operators fix pi.
    pub update_pi: bool,
    /// Visit rows in random order instead of ascending.
    pub random_scan: bool,
    /// Recompute the log-joint from scratch every this many sweeps; 0 disables.
    pub audit_period: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iterations: 1000,
            thin: 1,
            seed: 0,
            row_mh_period: 1,
            pi_update_mode: PiUpdateMode::PerCoordinate,
            poibin_method: PoiBinCompute::Recursive,
            update_pi: true,
            random_scan: false,
            audit_period: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Domain("n_iterations must be >= 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Domain("thin must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-sweep diagnostics record.
#[derive(Debug, Clone, Copy)]
pub struct SweepDiagnostics {
    pub iteration: usize,
    pub log_joint: f64,
    pub accept_rate_pi: f64,
    pub accept_rate_row: f64,
    pub mean_row_sum: f64,
    pub n_active_columns: usize,
}

impl SweepDiagnostics {
    pub const CSV_HEADER: &'static str =
        "iteration,log_joint,accept_rate_pi,accept_rate_row,mean_row_sum,n_active_columns";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            self.log_joint,
            self.accept_rate_pi,
            self.accept_rate_row,
            self.mean_row_sum,
            self.n_active_columns
        )
    }
}

/// Current (pi, Z) with their cached derived quantities.
pub struct SamplerState {
    pub pi: BernoulliProfile,
    pub z: FeatureMatrix,
    /// PoiBin(s | pi) for s = 0..=s_cap, s_cap = max support of f.
    cached_poibin: Vec<f64>,
    pub log_joint: f64,
    pub rng: ChaCha8Rng,
}

impl SamplerState {
    pub fn cached_poibin(&self) -> &[f64] {
        &self.cached_poibin
    }
}

pub struct Sampler<'a> {
    prior: TruncatedBetaProcessPrior,
    f: RowSumLawTable,
    obs: &'a dyn ObservationModel,
    config: SamplerConfig,
    pub state: SamplerState,
    cond_tables: HashMap<usize, CondBernoulliTable>,
    max_audit_drift: f64,
}

fn log_poibin(table: &[f64], s: usize) -> f64 {
    match table.get(s) {
        Some(&p) if p > 0.0 => p.ln(),
        _ => LOG_ZERO,
    }
}

impl<'a> Sampler<'a> {
    /// Initializes with a prior draw of pi and restricted prior rows of Z.
    pub fn new(
        prior: TruncatedBetaProcessPrior,
        f: RowSumLawTable,
        obs: &'a dyn ObservationModel,
        n_rows: usize,
        config: SamplerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let pi = sample_prior_pi(&prior, &mut rng);
        let z = sample_restricted_rows(&pi, &f, n_rows, &mut rng)?;
        Self::from_parts(prior, f, obs, pi, z, rng, config)
    }

    /// Starts from an explicit (pi, Z); every row sum must be supported.
    pub fn with_state(
        prior: TruncatedBetaProcessPrior,
        f: RowSumLawTable,
        obs: &'a dyn ObservationModel,
        pi: BernoulliProfile,
        z: FeatureMatrix,
        config: SamplerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::from_parts(prior, f, obs, pi, z, rng, config)
    }

    fn from_parts(
        prior: TruncatedBetaProcessPrior,
        f: RowSumLawTable,
        obs: &'a dyn ObservationModel,
        pi: BernoulliProfile,
        z: FeatureMatrix,
        rng: ChaCha8Rng,
        config: SamplerConfig,
    ) -> Result<Self> {
        if pi.len() != prior.k || z.n_cols() != prior.k {
            return Err(Error::Domain(
                "profile, matrix, and prior truncation levels must agree".into(),
            ));
        }
        for &s in z.row_sums() {
            if f.prob(s) <= 0.0 {
                return Err(Error::Domain(format!(
                    "initial state has row sum {s} outside the support of f"
                )));
            }
        }
        let n_mandatory = (0..pi.len()).filter(|&k| pi.get(k) == 1.0).count();
        if let crate::model::RowSumLaw::Degenerate(s) = f.law() {
            if n_mandatory > *s {
                return Err(Error::Domain(format!(
                    "{n_mandatory} columns have pi_k = 1 but rows are fixed to sum {s}"
                )));
            }
        }
        let cached_poibin = compute_poibin(&pi, f.max_support(), config.poibin_method)?;
        let mut sampler = Sampler {
            prior,
            f,
            obs,
            config,
            state: SamplerState { pi, z, cached_poibin, log_joint: 0.0, rng },
            cond_tables: HashMap::new(),
            max_audit_drift: 0.0,
        };
        sampler.state.log_joint = sampler.full_log_joint()?;
        Ok(sampler)
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn f(&self) -> &RowSumLawTable {
        &self.f
    }

    pub fn max_audit_drift(&self) -> f64 {
        self.max_audit_drift
    }

    /// Log-joint from scratch: prior density of pi, restricted matrix
    /// probability, and the observation likelihood.
    pub fn full_log_joint(&self) -> Result<f64> {
        let prior_term = self.prior.log_density(&self.state.pi);
        let matrix_term = restricted_matrix_logprob(&self.state.z, &self.state.pi, &self.f)?;
        let obs_term = self.obs.full_loglik(&self.state.z);
        Ok(prior_term + matrix_term + obs_term)
    }

    fn refresh_poibin(&mut self) -> Result<()> {
        self.state.cached_poibin = compute_poibin(
            &self.state.pi,
            self.f.max_support(),
            self.config.poibin_method,
        )?;
        self.cond_tables.clear();
        Ok(())
    }

    /// Gibbs update of one entry when row sums are random. Exposed for
    /// operator-level correctness tests; `sweep` batches the per-row work.
    pub fn gibbs_entry_random_s(&mut self, n: usize, k: usize) -> Result<()> {
        if self.f.law().is_degenerate() {
            return Err(Error::Domain(
                "per-entry Gibbs requires a non-degenerate row-sum law".into(),
            ));
        }
        let obs = self.obs;
        let scorer = obs.row_scorer(&self.state.z, n);
        self.gibbs_entry_with_scorer(n, k, scorer.as_ref())
    }

    fn gibbs_entry_with_scorer(
        &mut self,
        n: usize,
        k: usize,
        scorer: &dyn crate::model::RowScorer,
    ) -> Result<()> {
        let cur = self.state.z.get(n, k);
        let s_n = self.state.z.row_sum(n);
        let a = s_n - cur as usize;
        let pi_k = self.state.pi.get(k);

        let mut row = self.state.z.row(n).to_vec();
        row[k] = 0;
        let g0 = scorer.loglik(&row);
        row[k] = 1;
        let g1 = scorer.loglik(&row);

        let w0 = if pi_k < 1.0 {
            (1.0 - pi_k).ln() + self.f.log_prob(a) - log_poibin(&self.state.cached_poibin, a) + g0
        } else {
            LOG_ZERO
        };
        let w1 = if pi_k > 0.0 {
            pi_k.ln() + self.f.log_prob(a + 1)
                - log_poibin(&self.state.cached_poibin, a + 1)
                + g1
        } else {
            LOG_ZERO
        };
        if w0 == LOG_ZERO && w1 == LOG_ZERO {
            return Err(Error::InvariantViolation(format!(
                "both Gibbs branch weights are zero at entry ({n}, {k})"
            )));
        }
        let new = if w1 == LOG_ZERO {
            0
        } else if w0 == LOG_ZERO {
            1
        } else {
            let p1 = 1.0 / (1.0 + (w0 - w1).exp());
            u8::from(self.state.rng.random::<f64>() < p1)
        };
        if new != cur {
            let old_row = self.state.z.row(n).to_vec();
            self.state.z.set(n, k, new)?;
            self.obs.notify_row_change(&self.state.z, n, &old_row);
            let (w_new, w_old) = if new == 1 { (w1, w0) } else { (w0, w1) };
            self.state.log_joint += w_new - w_old;
        }
        Ok(())
    }

    /// Gibbs update of where the j-th active entry of row n sits, for
    /// fixed row sums. Weights are `pi_k/(1-pi_k) * g`; the row sum, the
    /// f factor, and the Poisson-binomial normalizer are all unchanged.
    ///
    /// Caution: `j` indexes the active entries in sorted column order, a
    /// label that changes identity when an entry moves. The kernel leaves
    /// the target invariant only if `j` is drawn uniformly at random per
    /// call (see `gibbs_location_random_entry`); cycling j = 0..S
    /// deterministically couples the selection to the state and biases
    /// the chain.
    pub fn gibbs_location_fixed_s(&mut self, n: usize, j: usize) -> Result<()> {
        if !self.f.law().is_degenerate() {
            return Err(Error::Domain(
                "location Gibbs requires a degenerate row-sum law".into(),
            ));
        }
        let obs = self.obs;
        let scorer = obs.row_scorer(&self.state.z, n);
        self.gibbs_location_with_scorer(n, j, scorer.as_ref())
    }

    /// Location Gibbs with the active entry chosen uniformly at random,
    /// which makes the move reversible with respect to the target.
    pub fn gibbs_location_random_entry(&mut self, n: usize) -> Result<()> {
        let s = self.state.z.row_sum(n);
        if s == 0 {
            return Ok(());
        }
        let j = self.state.rng.random_range(0..s);
        self.gibbs_location_fixed_s(n, j)
    }

    fn gibbs_location_with_scorer(
        &mut self,
        n: usize,
        j: usize,
        scorer: &dyn crate::model::RowScorer,
    ) -> Result<()> {
        let row = self.state.z.row(n).to_vec();
        let active: Vec<usize> = (0..row.len()).filter(|&k| row[k] == 1).collect();
        if j >= active.len() {
            return Err(Error::Domain(format!(
                "row {n} has only {} active entries",
                active.len()
            )));
        }
        let cur = active[j];
        if self.state.pi.get(cur) == 1.0 {
            // Mandatory-active column; nothing to resample.
            return Ok(());
        }
        // Candidates: the current column plus every inactive column that is
        // not mandatory-active.
        let mut candidates = vec![cur];
        candidates.extend(
            (0..row.len()).filter(|&k| row[k] == 0 && self.state.pi.get(k) < 1.0),
        );
        if candidates.len() == 1 {
            return Ok(());
        }
        let mut weights = Vec::with_capacity(candidates.len());
        let mut cand_row = row.clone();
        cand_row[cur] = 0;
        for &k in &candidates {
            let pi_k = self.state.pi.get(k);
            if pi_k == 0.0 {
                weights.push(LOG_ZERO);
                continue;
            }
            cand_row[k] = 1;
            let g = scorer.loglik(&cand_row);
            cand_row[k] = 0;
            weights.push((pi_k / (1.0 - pi_k)).ln() + g);
        }
        let choice = sample_categorical_log(&weights, &mut self.state.rng).ok_or_else(|| {
            Error::InvariantViolation(format!("all location weights zero at row {n}"))
        })?;
        let new = candidates[choice];
        if new != cur {
            let old_row = row.clone();
            self.state.z.set(n, cur, 0)?;
            self.state.z.set(n, new, 1)?;
            self.obs.notify_row_change(&self.state.z, n, &old_row);
            // Weight difference covers the pi odds and the likelihood.
            let w_cur = weights[0];
            self.state.log_joint += weights[choice] - w_cur;
        }
        Ok(())
    }

    /// Whole-row independence MH: propose `S' ~ f` and a conditional
    /// Bernoulli row; the acceptance ratio reduces to the likelihood ratio.
    /// Returns whether the proposal was accepted.
    pub fn mh_row(&mut self, n: usize) -> Result<bool> {
        let s_new = self.f.sample(&mut self.state.rng);
        if !self.cond_tables.contains_key(&s_new) {
            match CondBernoulliTable::new(&self.state.pi, s_new) {
                Ok(t) => {
                    self.cond_tables.insert(s_new, t);
                }
                // Infeasible sum under the current profile: rejected proposal.
                Err(Error::InfeasibleSum { .. }) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        let proposal = self.cond_tables[&s_new].sample(&mut self.state.rng);
        let obs = self.obs;
        let scorer = obs.row_scorer(&self.state.z, n);
        let g_old = scorer.loglik(self.state.z.row(n));
        let g_new = scorer.loglik(proposal.bits());
        let log_alpha = g_new - g_old;
        let accept = log_alpha >= 0.0 || self.state.rng.random::<f64>().ln() < log_alpha;
        if accept {
            let old_row = self.state.z.row(n).to_vec();
            let delta = self.row_term(proposal.bits(), g_new) - self.row_term(&old_row, g_old);
            self.state.z.set_row(n, proposal.bits())?;
            self.obs.notify_row_change(&self.state.z, n, &old_row);
            self.state.log_joint += delta;
        }
        Ok(accept)
    }

    /// Contribution of one row to the log-joint: the pi-product entries it
    /// owns, its f / PoiBin correction, and the full likelihood value.
    fn row_term(&self, row: &[u8], g_full: f64) -> f64 {
        let mut t = 0.0;
        let mut s = 0usize;
        for (k, &b) in row.iter().enumerate() {
            if b == 1 {
                let p = self.state.pi.get(k);
                t += p.ln() - (1.0 - p).ln();
                s += 1;
            }
        }
        t + self.f.log_prob(s) - log_poibin(&self.state.cached_poibin, s) + g_full
    }

    /// MH update of coordinate k of pi with the conjugate unrestricted
    /// proposal. Returns whether the proposal was accepted.
    pub fn mh_pi_coordinate(&mut self, k: usize) -> Result<bool> {
        let n = self.state.z.n_rows();
        let m_k = self.state.z.col_count(k);
        let a = self.prior.alpha / self.prior.k as f64 + m_k as f64;
        let b = (n - m_k) as f64 + 1.0;
        let proposal_dist = Beta::new(a, b)
            .map_err(|e| Error::Numerical(format!("beta proposal: {e}")))?;
        let pi_new = proposal_dist.sample(&mut self.state.rng);
        if !(pi_new > 0.0 && pi_new < 1.0) {
            return Ok(false); // boundary underflow: reject, logged by caller
        }
        let mut pi_prop = self.state.pi.clone();
        pi_prop.set(k, pi_new)?;
        let poibin_new =
            compute_poibin(&pi_prop, self.f.max_support(), self.config.poibin_method)?;
        let mut log_alpha = 0.0;
        for &s in self.state.z.row_sums() {
            let old = log_poibin(&self.state.cached_poibin, s);
            let new = log_poibin(&poibin_new, s);
            if new == LOG_ZERO {
                return Ok(false);
            }
            log_alpha += old - new;
        }
        let accept = log_alpha >= 0.0 || self.state.rng.random::<f64>().ln() < log_alpha;
        if accept {
            let pi_old = self.state.pi.get(k);
            let shape = self.prior.alpha / self.prior.k as f64;
            let mut delta = (m_k as f64 + shape - 1.0) * (pi_new.ln() - pi_old.ln())
                + ((n - m_k) as f64) * ((1.0 - pi_new).ln() - (1.0 - pi_old).ln());
            for &s in self.state.z.row_sums() {
                delta += log_poibin(&self.state.cached_poibin, s) - log_poibin(&poibin_new, s);
            }
            self.state.pi = pi_prop;
            self.state.cached_poibin = poibin_new;
            self.cond_tables.clear();
            self.state.log_joint += delta;
        }
        Ok(accept)
    }

    /// Block variant: propose every coordinate at once, accept jointly.
    pub fn mh_pi_block(&mut self) -> Result<bool> {
        let n = self.state.z.n_rows();
        let shape = self.prior.alpha / self.prior.k as f64;
        let mut pi_prop = self.state.pi.clone();
        for k in 0..self.prior.k {
            let m_k = self.state.z.col_count(k);
            let dist = Beta::new(shape + m_k as f64, (n - m_k) as f64 + 1.0)
                .map_err(|e| Error::Numerical(format!("beta proposal: {e}")))?;
            let v = dist.sample(&mut self.state.rng);
            if !(v > 0.0 && v < 1.0) {
                return Ok(false);
            }
            pi_prop.set(k, v)?;
        }
        let poibin_new =
            compute_poibin(&pi_prop, self.f.max_support(), self.config.poibin_method)?;
        let mut log_alpha = 0.0;
        for &s in self.state.z.row_sums() {
            let new = log_poibin(&poibin_new, s);
            if new == LOG_ZERO {
                return Ok(false);
            }
            log_alpha += log_poibin(&self.state.cached_poibin, s) - new;
        }
        let accept = log_alpha >= 0.0 || self.state.rng.random::<f64>().ln() < log_alpha;
        if accept {
            let mut delta = 0.0;
            for k in 0..self.prior.k {
                let m_k = self.state.z.col_count(k) as f64;
                let old = self.state.pi.get(k);
                let new = pi_prop.get(k);
                delta += (m_k + shape - 1.0) * (new.ln() - old.ln())
                    + (n as f64 - m_k) * ((1.0 - new).ln() - (1.0 - old).ln());
            }
            for &s in self.state.z.row_sums() {
                delta += log_poibin(&self.state.cached_poibin, s) - log_poibin(&poibin_new, s);
            }
            self.state.pi = pi_prop;
            self.state.cached_poibin = poibin_new;
            self.cond_tables.clear();
            self.state.log_joint += delta;
        }
        Ok(accept)
    }

    /// One full pass: all Z updates, optional row MH, pi update, audit,
    /// diagnostics. `iteration` is only recorded in the diagnostics.
    pub fn sweep(&mut self, iteration: usize) -> Result<SweepDiagnostics> {
        let n = self.state.z.n_rows();
        let degenerate = self.f.law().is_degenerate();

        let mut order: Vec<usize> = (0..n).collect();
        if self.config.random_scan {
            for i in (1..order.len()).rev() {
                let j = self.state.rng.random_range(0..=i);
                order.swap(i, j);
            }
        }
        for &row in &order {
            // One scorer per row: it stays valid while only this row
            // changes (RowScorer contract).
            let obs = self.obs;
            let scorer = obs.row_scorer(&self.state.z, row);
            if degenerate {
                let s = self.state.z.row_sum(row);
                for _ in 0..s {
                    let j = self.state.rng.random_range(0..s);
                    self.gibbs_location_with_scorer(row, j, scorer.as_ref())?;
                }
            } else {
                for col in 0..self.state.z.n_cols() {
                    self.gibbs_entry_with_scorer(row, col, scorer.as_ref())?;
                }
            }
        }

        let mut row_attempts = 0usize;
        let mut row_accepts = 0usize;
        if self.config.row_mh_period > 0 && iteration % self.config.row_mh_period == 0 {
            for row in 0..n {
                row_attempts += 1;
                if self.mh_row(row)? {
                    row_accepts += 1;
                }
            }
        }

        let mut pi_accepts = 0usize;
        let mut pi_attempts = 0usize;
        if self.config.update_pi {
            match self.config.pi_update_mode {
                PiUpdateMode::PerCoordinate => {
                    for k in 0..self.prior.k {
                        pi_attempts += 1;
                        if self.mh_pi_coordinate(k)? {
                            pi_accepts += 1;
                        }
                    }
                }
                PiUpdateMode::Block => {
                    pi_attempts += 1;
                    if self.mh_pi_block()? {
                        pi_accepts += 1;
                    }
                }
            }
        }

        if self.config.audit_period > 0 && iteration % self.config.audit_period == 0 {
            self.audit()?;
        }
        if !self.state.log_joint.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite log-joint at iteration {iteration}; state: pi = {:?}, row sums = {:?}",
                self.state.pi.probs(),
                self.state.z.row_sums()
            )));
        }

        let mean_row_sum =
            self.state.z.row_sums().iter().sum::<usize>() as f64 / n.max(1) as f64;
        Ok(SweepDiagnostics {
            iteration,
            log_joint: self.state.log_joint,
            accept_rate_pi: if pi_attempts > 0 {
                pi_accepts as f64 / pi_attempts as f64
            } else {
                f64::NAN
            },
            accept_rate_row: if row_attempts > 0 {
                row_accepts as f64 / row_attempts as f64
            } else {
                f64::NAN
            },
            mean_row_sum,
            n_active_columns: self.state.z.n_active_cols(),
        })
    }

    /// Recomputes the log-joint and Poisson-binomial cache from scratch;
    /// errors if the incremental value drifted beyond 1e-6.
    pub fn audit(&mut self) -> Result<()> {
        self.refresh_poibin()?;
        let fresh = self.full_log_joint()?;
        let drift = (fresh - self.state.log_joint).abs();
        self.max_audit_drift = self.max_audit_drift.max(drift);
        if drift > 1e-6 {
            return Err(Error::InvariantViolation(format!(
                "log-joint cache drifted by {drift} (incremental {}, fresh {fresh})",
                self.state.log_joint
            )));
        }
        self.state.log_joint = fresh;
        Ok(())
    }

    /// Runs the configured number of sweeps, returning thinned diagnostics.
    pub fn run(&mut self) -> Result<Vec<SweepDiagnostics>> {
        let mut trace = Vec::new();
        for it in 1..=self.config.n_iterations {
            let diag = self.sweep(it)?;
            if it % self.config.thin == 0 {
                trace.push(diag);
            }
        }
        Ok(trace)
    }
}

fn compute_poibin(
    pi: &BernoulliProfile,
    s_max: usize,
    method: PoiBinCompute,
) -> Result<Vec<f64>> {
    let s_max = s_max.min(pi.len());
    Ok(match method {
        PoiBinCompute::Recursive => {
            poibin_pmf_recursive(pi, s_max)?.mass().to_vec()
        }
        PoiBinCompute::Dft => {
            let full = poibin_pmf_dft(pi);
            full.mass()[..=s_max].to_vec()
        }
    })
}

/// Draws an index from unnormalized log-weights; None if all are LOG_ZERO.
fn sample_categorical_log<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<usize> {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return None;
    }
    let w: Vec<f64> = log_w.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &v) in w.iter().enumerate() {
        acc += v;
        if u < acc {
            return Some(i);
        }
    }
    Some(w.len() - 1)
}

/// Exhaustive posterior over all 2^(N K) matrices for enumerable toys:
/// restricted-model probability times likelihood, normalized. Returns a
/// dense vector indexed by the row-major bit code of the matrix.
pub fn exact_posterior_small(
    pi: &BernoulliProfile,
    f: &RowSumLawTable,
    obs: &dyn ObservationModel,
    n: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let cells = n * k;
    if cells > 20 {
        return Err(Error::EnumerationTooLarge { actual: cells, cap: 20 });
    }
    let count = 1usize << cells;
    let mut probs = vec![0.0f64; count];
    let mut logs = vec![LOG_ZERO; count];
    let mut best = LOG_ZERO;
    for (code, slot) in logs.iter_mut().enumerate() {
        let z = matrix_from_code(code as u64, n, k);
        let lp = restricted_matrix_logprob(&z, pi, f)?;
        if lp == LOG_ZERO {
            continue;
        }
        let total = lp + obs.full_loglik(&z);
        *slot = total;
        best = best.max(total);
    }
    if best == LOG_ZERO {
        return Err(Error::Domain("no feasible matrix under f and pi".into()));
    }
    let mut norm = 0.0;
    for (slot, lp) in probs.iter_mut().zip(&logs) {
        if *lp != LOG_ZERO {
            *slot = (lp - best).exp();
            norm += *slot;
        }
    }
    for p in &mut probs {
        *p /= norm;
    }
    Ok(probs)
}

/// Decodes a row-major bit code into an N x K matrix.
pub fn matrix_from_code(code: u64, n: usize, k: usize) -> FeatureMatrix {
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|i| (0..k).map(|j| (code >> (i * k + j) & 1) as u8).collect())
        .collect();
    FeatureMatrix::from_rows(rows).expect("bits are 0/1")
}

/// Encodes a matrix back into its row-major bit code.
pub fn matrix_code(z: &FeatureMatrix) -> u64 {
    let mut code = 0u64;
    for i in 0..z.n_rows() {
        for j in 0..z.n_cols() {
            if z.get(i, j) == 1 {
                code |= 1 << (i * z.n_cols() + j);
            }
        }
    }
    code
}
