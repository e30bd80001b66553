//! Domain types and generative primitives for the truncated restricted IBP.

use rand::Rng;

use crate::error::{Error, Result};
use crate::poibin::{
    cond_bernoulli_logprob, poibin_pmf_recursive, BernoulliProfile, BinaryRow,
    CondBernoulliTable, LOG_ZERO,
};

/// N x K binary matrix with cached row sums and column counts.
///
/// The caches are maintained through [`FeatureMatrix::set`] and
/// [`FeatureMatrix::set_row`]; a monotone version counter lets observation
/// models detect staleness of their own derived caches.
#[derive(Debug)]
pub struct FeatureMatrix {
    n: usize,
    k: usize,
    entries: Vec<u8>, // row-major
    row_sums: Vec<usize>,
    col_counts: Vec<usize>,
    id: u64,
    version: u64,
}

impl Clone for FeatureMatrix {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            k: self.k,
            entries: self.entries.clone(),
            row_sums: self.row_sums.clone(),
            col_counts: self.col_counts.clone(),
            id: next_matrix_id(),
            version: 0,
        }
    }
}

impl PartialEq for FeatureMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.k == other.k && self.entries == other.entries
    }
}

impl Eq for FeatureMatrix {}

fn next_matrix_id() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

impl FeatureMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            entries: vec![0; n * k],
            row_sums: vec![0; n],
            col_counts: vec![0; k],
            id: next_matrix_id(),
            version: 0,
        }
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, |r| r.len());
        let mut z = Self::zeros(n, k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Domain(format!(
                    "row {i} has length {}, expected {k}",
                    row.len()
                )));
            }
            z.set_row(i, row)?;
        }
        Ok(z)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.k
    }

    /// Identity of this matrix object; fresh on every clone, so an
    /// (id, version) pair uniquely tags a matrix state.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, n: usize, k: usize) -> u8 {
        self.entries[n * self.k + k]
    }

    pub fn set(&mut self, n: usize, k: usize, value: u8) -> Result<()> {
        if value > 1 {
            return Err(Error::Domain("entries must be 0 or 1".into()));
        }
        let idx = n * self.k + k;
        let old = self.entries[idx];
        if old != value {
            self.entries[idx] = value;
            if value == 1 {
                self.row_sums[n] += 1;
                self.col_counts[k] += 1;
            } else {
                self.row_sums[n] -= 1;
                self.col_counts[k] -= 1;
            }
        }
        self.version += 1;
        Ok(())
    }

    pub fn row(&self, n: usize) -> &[u8] {
        &self.entries[n * self.k..(n + 1) * self.k]
    }

    pub fn set_row(&mut self, n: usize, row: &[u8]) -> Result<()> {
        if row.len() != self.k {
            return Err(Error::Domain(format!(
                "row length {} does not match K = {}",
                row.len(),
                self.k
            )));
        }
        if row.iter().any(|&b| b > 1) {
            return Err(Error::Domain("entries must be 0 or 1".into()));
        }
        let mut sum = 0usize;
        for (j, &b) in row.iter().enumerate() {
            let idx = n * self.k + j;
            let old = self.entries[idx];
            if old != b {
                if b == 1 {
                    self.col_counts[j] += 1;
                } else {
                    self.col_counts[j] -= 1;
                }
                self.entries[idx] = b;
            }
            sum += b as usize;
        }
        self.row_sums[n] = sum;
        self.version += 1;
        Ok(())
    }

    pub fn row_sum(&self, n: usize) -> usize {
        self.row_sums[n]
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    pub fn col_count(&self, k: usize) -> usize {
        self.col_counts[k]
    }

    pub fn col_counts(&self) -> &[usize] {
        &self.col_counts
    }

    pub fn n_active_cols(&self) -> usize {
        self.col_counts.iter().filter(|&&m| m > 0).count()
    }

    /// Recomputes both caches from the entries; used by audits and tests.
    pub fn caches_coherent(&self) -> bool {
        let mut rs = vec![0usize; self.n];
        let mut cc = vec![0usize; self.k];
        for i in 0..self.n {
            for j in 0..self.k {
                if self.get(i, j) == 1 {
                    rs[i] += 1;
                    cc[j] += 1;
                }
            }
        }
        rs == self.row_sums && cc == self.col_counts
    }

    /// CSV: one row per line, entries 0/1 comma-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|b| b.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| match t.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected 0 or 1, found {other:?}"),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

/// Truncated beta-process prior: K atoms, each Beta(alpha/K, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedBetaProcessPrior {
    pub alpha: f64,
    pub k: usize,
}

impl TruncatedBetaProcessPrior {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("alpha = {alpha} must be positive")));
        }
        if k == 0 {
            return Err(Error::Domain("truncation level K must be >= 1".into()));
        }
        Ok(Self { alpha, k })
    }

    /// Log-density of a profile under the prior; LOG_ZERO on the boundary
    /// when alpha/K < 1.
    pub fn log_density(&self, pi: &BernoulliProfile) -> f64 {
        let a = self.alpha / self.k as f64;
        pi.probs()
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    a.ln() + (a - 1.0) * p.ln()
                } else if a == 1.0 {
                    0.0
                } else if a > 1.0 {
                    LOG_ZERO
                } else {
                    f64::INFINITY // integrable singularity at 0 for a < 1
                }
            })
            .sum()
    }
}

/// K independent Beta(alpha/K, 1) draws via the inverse CDF `u^{K/alpha}`,
/// which stays stable when the shape parameter underflows for large K.
pub fn sample_prior_pi<R: Rng + ?Sized>(
    prior: &TruncatedBetaProcessPrior,
    rng: &mut R,
) -> BernoulliProfile {
    let exponent = prior.k as f64 / prior.alpha;
    let probs = (0..prior.k)
        .map(|_| rng.random::<f64>().powf(exponent))
        .collect();
    BernoulliProfile::new(probs).expect("inverse-CDF draws are in [0, 1]")
}

/// The restriction distribution `f` over per-row feature counts.
///
/// Laws with infinite support are truncated to `{0..K}` and renormalized
/// before use; the truncated model cannot express sums above K.
#[derive(Debug, Clone, PartialEq)]
pub enum RowSumLaw {
    Degenerate(usize),
    Poisson(f64),
    NegBinomial { r: f64, p: f64 },
    Table(Vec<f64>),
}

impl RowSumLaw {
    /// Truncated, normalized pmf over `0..=k_max`.
    pub fn truncated_pmf(&self, k_max: usize) -> Result<Vec<f64>> {
        let mut pmf = match self {
            RowSumLaw::Degenerate(s) => {
                if *s > k_max {
                    return Err(Error::Domain(format!(
                        "degenerate row sum {s} exceeds K = {k_max}"
                    )));
                }
                let mut v = vec![0.0; k_max + 1];
                v[*s] = 1.0;
                v
            }
            RowSumLaw::Poisson(lambda) => {
                if !(*lambda > 0.0) {
                    return Err(Error::Domain(format!("lambda = {lambda} must be positive")));
                }
                // Unnormalized log pmf, exponentiated with a max shift.
                let logs: Vec<f64> = (0..=k_max)
                    .map(|s| s as f64 * lambda.ln() - ln_factorial(s))
                    .collect();
                exp_normalize(&logs)
            }
            RowSumLaw::NegBinomial { r, p } => {
                if !(*r > 0.0) || !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::Domain(format!(
                        "negative binomial parameters r = {r}, p = {p} out of range"
                    )));
                }
                // pmf(s) = C(s + r - 1, s) (1-p)^r p^s
                let logs: Vec<f64> = (0..=k_max)
                    .map(|s| {
                        ln_gamma(s as f64 + r) - ln_gamma(*r) - ln_factorial(s)
                            + s as f64 * p.ln()
                    })
                    .collect();
                exp_normalize(&logs)
            }
            RowSumLaw::Table(t) => {
                if t.len() != k_max + 1 {
                    return Err(Error::Domain(format!(
                        "table length {} does not match K + 1 = {}",
                        t.len(),
                        k_max + 1
                    )));
                }
                if t.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::Domain("table entries must be finite and >= 0".into()));
                }
                let total: f64 = t.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Domain("table has zero total mass".into()));
                }
                t.iter().map(|v| v / total).collect()
            }
        };
        let total: f64 = pmf.iter().sum();
        for v in &mut pmf {
            *v /= total;
        }
        Ok(pmf)
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, RowSumLaw::Degenerate(_))
    }
}

fn ln_factorial(s: usize) -> f64 {
    ln_gamma(s as f64 + 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

fn exp_normalize(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.iter().map(|v| v / total).collect()
}

/// A row-sum law with its pmf pre-truncated to `{0..K}`, ready for
/// repeated lookups and draws.
#[derive(Debug, Clone)]
pub struct RowSumLawTable {
    law: RowSumLaw,
    pmf: Vec<f64>,
}

impl RowSumLawTable {
    pub fn new(law: RowSumLaw, k_max: usize) -> Result<Self> {
        let pmf = law.truncated_pmf(k_max)?;
        Ok(Self { law, pmf })
    }

    pub fn law(&self) -> &RowSumLaw {
        &self.law
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.pmf.get(s).copied().unwrap_or(0.0)
    }

    pub fn log_prob(&self, s: usize) -> f64 {
        let p = self.prob(s);
        if p > 0.0 {
            p.ln()
        } else {
            LOG_ZERO
        }
    }

    /// Largest row sum with positive mass.
    pub fn max_support(&self) -> usize {
        self.pmf
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("normalized pmf has positive mass")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, &p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.max_support()
    }
}

/// Independent Bernoulli(pi_k) entries, N rows: the unrestricted truncated
/// Bernoulli process.
pub fn sample_unrestricted_matrix<R: Rng + ?Sized>(
    pi: &BernoulliProfile,
    n: usize,
    rng: &mut R,
) -> FeatureMatrix {
    let k = pi.len();
    let mut z = FeatureMatrix::zeros(n, k);
    for i in 0..n {
        let row: Vec<u8> = pi
            .probs()
            .iter()
            .map(|&p| u8::from(rng.random::<f64>() < p))
            .collect();
        z.set_row(i, &row).expect("row length matches");
    }
    z
}

/// N i.i.d. restricted rows: draw `S_n ~ f` (truncated), then a conditional
/// Bernoulli row with that sum. Errors name the first infeasible sum drawn.
pub fn sample_restricted_rows<R: Rng + ?Sized>(
    pi: &BernoulliProfile,
    f: &RowSumLawTable,
    n: usize,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    let k = pi.len();
    let mut z = FeatureMatrix::zeros(n, k);
    let mut tables: Vec<Option<CondBernoulliTable>> = vec![None; f.max_support() + 1];
    for i in 0..n {
        let s = f.sample(rng);
        if tables[s].is_none() {
            tables[s] = Some(CondBernoulliTable::new(pi, s)?);
        }
        let row = tables[s].as_ref().unwrap().sample(rng);
        z.set_row(i, row.bits())?;
    }
    Ok(z)
}

/// Log-probability of a matrix under the truncated restricted model given
/// the profile: the Bernoulli product over columns plus the per-row
/// `log f(S_n) - log PoiBin(S_n | pi)` correction.
pub fn restricted_matrix_logprob(
    z: &FeatureMatrix,
    pi: &BernoulliProfile,
    f: &RowSumLawTable,
) -> Result<f64> {
    if z.n_cols() != pi.len() {
        return Err(Error::Domain(format!(
            "matrix has {} columns, profile has {}",
            z.n_cols(),
            pi.len()
        )));
    }
    let n = z.n_rows();
    let mut lp = 0.0f64;
    for (k, &m_k) in z.col_counts().iter().enumerate() {
        let p = pi.get(k);
        if m_k > 0 {
            if p == 0.0 {
                return Ok(LOG_ZERO);
            }
            lp += m_k as f64 * p.ln();
        }
        let zeros = n - m_k;
        if zeros > 0 {
            if p == 1.0 {
                return Ok(LOG_ZERO);
            }
            lp += zeros as f64 * (1.0 - p).ln();
        }
    }
    let s_max = z.row_sums().iter().copied().max().unwrap_or(0);
    let poibin = poibin_pmf_recursive(pi, s_max)?;
    for &s in z.row_sums() {
        let lf = f.log_prob(s);
        let lpb = poibin.log_prob(s);
        if lf == LOG_ZERO || lpb == LOG_ZERO {
            return Ok(LOG_ZERO);
        }
        lp += lf - lpb;
    }
    Ok(lp)
}

/// Probability of the data given a binary matrix, with enough structure
/// for row-wise MCMC updates: a full evaluation and a per-row rescoring
/// hook that shares work across candidate rows.
pub trait ObservationModel {
    fn full_loglik(&self, z: &FeatureMatrix) -> f64;

    /// Scorer for candidate replacements of row `n`; `loglik(row)` must
    /// equal `full_loglik` of the matrix with row `n` replaced. The scorer
    /// must stay valid while only row `n` of the matrix changes (its
    /// answer is a function of the other rows and the candidate), so
    /// samplers may reuse one scorer across consecutive updates of the
    /// same row.
    fn row_scorer<'a>(&'a self, z: &FeatureMatrix, n: usize) -> Box<dyn RowScorer + 'a> {
        Box::new(NaiveRowScorer { obs: self.as_dyn(), z: z.clone(), n })
    }

    /// After the sampler commits a new row, models maintaining caches get
    /// to update them. `z` already holds the new row.
    fn notify_row_change(&self, _z: &FeatureMatrix, _n: usize, _old_row: &[u8]) {}

    fn as_dyn(&self) -> &dyn ObservationModel;

    /// Difference `full_loglik(Z with row n replaced) - full_loglik(Z)`.
    fn row_delta_loglik(&self, z: &FeatureMatrix, n: usize, row: &[u8]) -> f64 {
        self.row_scorer(z, n).loglik(row) - self.full_loglik(z)
    }
}

pub trait RowScorer {
    fn loglik(&self, row: &[u8]) -> f64;
}

struct NaiveRowScorer<'a> {
    obs: &'a dyn ObservationModel,
    z: FeatureMatrix,
    n: usize,
}

impl RowScorer for NaiveRowScorer<'_> {
    fn loglik(&self, row: &[u8]) -> f64 {
        let mut z = self.z.clone();
        z.set_row(self.n, row).expect("candidate row length matches");
        self.obs.full_loglik(&z)
    }
}

/// Constant likelihood; turns the sampler into a prior sampler and feeds
/// the enumeration-based correctness tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformObservation;

impl ObservationModel for UniformObservation {
    fn full_loglik(&self, _z: &FeatureMatrix) -> f64 {
        0.0
    }

    fn row_scorer<'a>(&'a self, _z: &FeatureMatrix, _n: usize) -> Box<dyn RowScorer + 'a> {
        struct Zero;
        impl RowScorer for Zero {
            fn loglik(&self, _row: &[u8]) -> f64 {
                0.0
            }
        }
        Box::new(Zero)
    }

    fn as_dyn(&self) -> &dyn ObservationModel {
        self
    }
}

/// Evaluate the conditional Bernoulli log-probability of one matrix row.
pub fn row_cond_logprob(z: &FeatureMatrix, n: usize, pi: &BernoulliProfile) -> Result<f64> {
    let row = BinaryRow::new(z.row(n).to_vec())?;
    cond_bernoulli_logprob(pi, &row)
}
