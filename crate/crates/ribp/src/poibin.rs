//! Poisson-binomial distribution and conditional Bernoulli sampling.
//!
//! The Poisson-binomial is the law of the number of successes among
//! independent Bernoulli trials with heterogeneous probabilities. The
//! conditional Bernoulli distribution is the law of the success locations
//! given their total; it is the per-row conditional of every restricted
//! model in this crate. Two exact pmf routes are provided (a prefix DP and
//! a characteristic-function DFT) together with a skew-normal approximation
//! that is never used where exactness matters.

use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Sentinel for log of zero probability.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// A finite sequence of success probabilities, the atoms of a truncated
/// beta process. Entries may be exactly 0 or 1; Metropolis proposals can
/// reach the boundary and feasibility is checked explicitly downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliProfile {
    probs: Vec<f64>,
}

impl BernoulliProfile {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("profile must have K >= 1 entries".into()));
        }
        for (k, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!(
                    "profile entry {k} = {p} is not in [0, 1]"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probs[k]
    }

    /// Replaces one coordinate, keeping the [0,1] invariant.
    pub fn set(&mut self, k: usize, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} is not in [0, 1]")));
        }
        self.probs[k] = p;
        Ok(())
    }

    /// Single CSV line of probabilities.
    pub fn to_csv_line(&self) -> String {
        self.probs
            .iter()
            .map(|p| format!("{p}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let probs = line
            .trim()
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line: 1, msg: format!("bad probability {t:?}: {e}") })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }
}

/// Which route produced a [`PoiBinPmf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoiBinMethod {
    Recursive,
    Dft,
    SkewNormal,
}

/// Probability mass function of the number of successes; `mass[s]` is the
/// probability of exactly `s` successes among all trials of the profile.
#[derive(Debug, Clone)]
pub struct PoiBinPmf {
    mass: Vec<f64>,
    method: PoiBinMethod,
}

impl PoiBinPmf {
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn method(&self) -> PoiBinMethod {
        self.method
    }

    /// Mass at `s`, zero beyond the computed range.
    pub fn prob(&self, s: usize) -> f64 {
        self.mass.get(s).copied().unwrap_or(0.0)
    }

    pub fn log_prob(&self, s: usize) -> f64 {
        let p = self.prob(s);
        if p > 0.0 {
            p.ln()
        } else {
            LOG_ZERO
        }
    }
}

/// A binary row with its cached sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRow {
    bits: Vec<u8>,
    sum: usize,
}

impl BinaryRow {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("row entries must be 0 or 1".into()));
        }
        let sum = bits.iter().map(|&b| b as usize).sum();
        Ok(Self { bits, sum })
    }

    pub fn zeros(k: usize) -> Self {
        Self { bits: vec![0; k], sum: 0 }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn sum(&self) -> usize {
        self.sum
    }
}

/// Exact Poisson-binomial pmf over `0..=s_max` by the standard prefix DP.
///
/// `mass[s]` is the probability that all `K` trials yield exactly `s`
/// successes; the DP carries only the first `s_max + 1` entries, so the
/// cost is `O(K * s_max)`.
pub fn poibin_pmf_recursive(p: &BernoulliProfile, s_max: usize) -> Result<PoiBinPmf> {
    let k = p.len();
    if s_max > k {
        return Err(Error::Domain(format!("s_max = {s_max} exceeds K = {k}")));
    }
    let mut q = vec![0.0f64; s_max + 1];
    q[0] = 1.0;
    for (i, &pk) in p.probs().iter().enumerate() {
        let hi = (i + 1).min(s_max);
        for s in (1..=hi).rev() {
            q[s] = q[s] * (1.0 - pk) + q[s - 1] * pk;
        }
        q[0] *= 1.0 - pk;
    }
    Ok(PoiBinPmf { mass: q, method: PoiBinMethod::Recursive })
}

/// Full exact pmf via the characteristic function at the `K + 1` roots of
/// unity, inverse-transformed. `O(K^2)`; agrees with the recursive route
/// to ~1e-10 absolute for K up to a few hundred.
pub fn poibin_pmf_dft(p: &BernoulliProfile) -> PoiBinPmf {
    let k = p.len();
    let m = k + 1;
    let omega = 2.0 * std::f64::consts::PI / m as f64;
    // Characteristic function x_l = prod_k (1 - p_k + p_k e^{i omega l}).
    let mut x = vec![Complex64::new(0.0, 0.0); m];
    for (l, xl) in x.iter_mut().enumerate() {
        let root = Complex64::from_polar(1.0, omega * l as f64);
        let mut acc = Complex64::new(1.0, 0.0);
        for &pk in p.probs() {
            acc *= Complex64::new(1.0 - pk, 0.0) + root * pk;
        }
        *xl = acc;
    }
    let mut mass = vec![0.0f64; m];
    for (s, ms) in mass.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, &xl) in x.iter().enumerate() {
            acc += xl * Complex64::from_polar(1.0, -omega * (l * s) as f64);
        }
        *ms = (acc.re / m as f64).max(0.0);
    }
    PoiBinPmf { mass, method: PoiBinMethod::Dft }
}

/// Skew-normal (Edgeworth, continuity-corrected) approximation to the mass
/// at `s`. Moment-matched: mean, variance, and third central moment of the
/// Poisson-binomial. Approximate by construction; excluded from every
/// exactness oracle. Falls back to the exact degenerate answer when the
/// variance is zero.
pub fn poibin_pmf_skew_normal(p: &BernoulliProfile, s: usize) -> Result<f64> {
    let k = p.len();
    if s > k {
        return Err(Error::Domain(format!("s = {s} exceeds K = {k}")));
    }
    let mu: f64 = p.probs().iter().sum();
    let var: f64 = p.probs().iter().map(|&pk| pk * (1.0 - pk)).sum();
    if var == 0.0 {
        // All entries exactly 0 or 1: point mass at the forced sum.
        let forced = mu.round() as usize;
        return Ok(if s == forced { 1.0 } else { 0.0 });
    }
    let m3: f64 = p
        .probs()
        .iter()
        .map(|&pk| pk * (1.0 - pk) * (1.0 - 2.0 * pk))
        .sum();
    let sigma = var.sqrt();
    let gamma = m3 / (sigma * sigma * sigma);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let g = |x: f64| {
        let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        normal.cdf(x) + gamma * (1.0 - x * x) * phi / 6.0
    };
    let hi = (s as f64 + 0.5 - mu) / sigma;
    let lo = (s as f64 - 0.5 - mu) / sigma;
    Ok((g(hi) - g(lo)).max(0.0))
}

/// Log-probability of a row under the conditional Bernoulli law: the
/// Bernoulli product divided by the Poisson-binomial mass at the row sum.
/// Returns [`LOG_ZERO`] when the row sum is infeasible or the row hits a
/// hard 0/1 entry of the profile.
pub fn cond_bernoulli_logprob(p: &BernoulliProfile, z: &BinaryRow) -> Result<f64> {
    if z.len() != p.len() {
        return Err(Error::Domain(format!(
            "row length {} does not match profile length {}",
            z.len(),
            p.len()
        )));
    }
    let s = z.sum();
    let mut log_num = 0.0f64;
    for (&pk, &b) in p.probs().iter().zip(z.bits()) {
        let term = if b == 1 { pk } else { 1.0 - pk };
        if term == 0.0 {
            return Ok(LOG_ZERO);
        }
        log_num += term.ln();
    }
    let denom = poibin_pmf_recursive(p, s)?.prob(s);
    if denom <= 0.0 {
        return Ok(LOG_ZERO);
    }
    Ok(log_num - denom.ln())
}

/// Suffix-pmf tables for sequential conditional Bernoulli sampling.
///
/// `suffix[k][j]` is the probability of exactly `j` successes among trials
/// `k..K`. Construction is `O(K * S)`; each sample costs `O(K)`. Cache one
/// table per (profile, target sum) pair when drawing many rows.
#[derive(Debug, Clone)]
pub struct CondBernoulliTable {
    probs: Vec<f64>,
    target: usize,
    suffix: Vec<Vec<f64>>,
}

impl CondBernoulliTable {
    pub fn new(p: &BernoulliProfile, target: usize) -> Result<Self> {
        let k = p.len();
        if target > k {
            return Err(Error::Domain(format!("S = {target} exceeds K = {k}")));
        }
        // suffix[k] has entries 0..=min(target, K - k).
        let mut suffix: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
        suffix[k] = vec![1.0];
        for i in (0..k).rev() {
            let pk = p.get(i);
            let cap = target.min(k - i);
            let mut row = vec![0.0f64; cap + 1];
            for (j, rj) in row.iter_mut().enumerate() {
                let stay = suffix[i + 1].get(j).copied().unwrap_or(0.0);
                let take = if j > 0 {
                    suffix[i + 1].get(j - 1).copied().unwrap_or(0.0)
                } else {
                    0.0
                };
                *rj = (1.0 - pk) * stay + pk * take;
            }
            suffix[i] = row;
        }
        if suffix[0][target] <= 0.0 {
            return Err(Error::InfeasibleSum { s: target });
        }
        Ok(Self { probs: p.probs().to_vec(), target, suffix })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Probability that the full profile yields exactly the target sum.
    pub fn total_prob(&self) -> f64 {
        self.suffix[0][self.target]
    }

    /// Draws one row with the exact conditional Bernoulli law: scan the
    /// trials, including trial `k` with probability
    /// `p_k * P(rem - 1 successes in k+1..K) / P(rem successes in k..K)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BinaryRow {
        let k = self.probs.len();
        let mut bits = vec![0u8; k];
        let mut rem = self.target;
        for i in 0..k {
            if rem == 0 {
                break;
            }
            let denom = self.suffix[i].get(rem).copied().unwrap_or(0.0);
            let take_branch = self.probs[i]
                * self.suffix[i + 1].get(rem - 1).copied().unwrap_or(0.0);
            // denom > 0 along every reachable path; guard against roundoff.
            let p_take = if denom > 0.0 { (take_branch / denom).clamp(0.0, 1.0) } else { 1.0 };
            if rem == k - i || rng.random::<f64>() < p_take {
                bits[i] = 1;
                rem -= 1;
            }
        }
        BinaryRow { bits, sum: self.target }
    }
}

/// Convenience wrapper: one conditional Bernoulli draw with sum `s`.
pub fn cond_bernoulli_sample<R: Rng + ?Sized>(
    p: &BernoulliProfile,
    s: usize,
    rng: &mut R,
) -> Result<BinaryRow> {
    Ok(CondBernoulliTable::new(p, s)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded_profile(k: usize, seed: u64) -> BernoulliProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BernoulliProfile::new((0..k).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Brute-force oracle: pmf by summing over all 2^K outcomes.
    fn enumerate_pmf(p: &BernoulliProfile) -> Vec<f64> {
        let k = p.len();
        assert!(k <= 20);
        let mut mass = vec![0.0f64; k + 1];
        for code in 0u32..(1u32 << k) {
            let mut prob = 1.0;
            let mut s = 0usize;
            for (i, &pk) in p.probs().iter().enumerate() {
                if code >> i & 1 == 1 {
                    prob *= pk;
                    s += 1;
                } else {
                    prob *= 1.0 - pk;
                }
            }
            mass[s] += prob;
        }
        mass
    }

    #[test]
    fn recursive_fair_coins() {
        let p = BernoulliProfile::new(vec![0.5, 0.5]).unwrap();
        let pmf = poibin_pmf_recursive(&p, 2).unwrap();
        assert_eq!(pmf.mass(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn recursive_forced_success() {
        let p = BernoulliProfile::new(vec![1.0, 0.3]).unwrap();
        let pmf = poibin_pmf_recursive(&p, 2).unwrap();
        let exp = [0.0, 0.7, 0.3];
        for (a, b) in pmf.mass().iter().zip(exp) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn recursive_matches_enumeration() {
        let p = seeded_profile(12, 7);
        let pmf = poibin_pmf_recursive(&p, 12).unwrap();
        let oracle = enumerate_pmf(&p);
        for (a, b) in pmf.mass().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "recursive vs enumeration: {a} vs {b}");
        }
    }

    #[test]
    fn recursive_s_max_out_of_range() {
        let p = seeded_profile(4, 1);
        assert!(poibin_pmf_recursive(&p, 5).is_err());
    }

    #[test]
    fn dft_trivial_cases() {
        let p = BernoulliProfile::new(vec![0.5, 0.5]).unwrap();
        let pmf = poibin_pmf_dft(&p);
        let exp = [0.25, 0.5, 0.25];
        for (a, b) in pmf.mass().iter().zip(exp) {
            assert!((a - b).abs() < 1e-12);
        }
        let p1 = BernoulliProfile::new(vec![0.2]).unwrap();
        let pmf1 = poibin_pmf_dft(&p1);
        assert!((pmf1.prob(0) - 0.8).abs() < 1e-12);
        assert!((pmf1.prob(1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn dft_matches_recursive_k100() {
        let p = seeded_profile(100, 42);
        let rec = poibin_pmf_recursive(&p, 100).unwrap();
        let dft = poibin_pmf_dft(&p);
        for s in 0..=100 {
            assert!(
                (rec.prob(s) - dft.prob(s)).abs() < 1e-10,
                "s={s}: {} vs {}",
                rec.prob(s),
                dft.prob(s)
            );
        }
    }

    #[test]
    fn exact_pmf_normalizes() {
        for seed in 0..4 {
            let p = seeded_profile(50, seed);
            let total: f64 = poibin_pmf_recursive(&p, 50).unwrap().mass().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn skew_normal_central_binomial() {
        let p = BernoulliProfile::new(vec![0.5; 1000]).unwrap();
        let approx = poibin_pmf_skew_normal(&p, 500).unwrap();
        let exact = poibin_pmf_recursive(&p, 501).unwrap().prob(500);
        assert!((approx - exact).abs() / exact < 1e-2);
    }

    #[test]
    fn skew_normal_degenerate_fallback() {
        let p = BernoulliProfile::new(vec![1.0; 5]).unwrap();
        assert_eq!(poibin_pmf_skew_normal(&p, 5).unwrap(), 1.0);
        assert_eq!(poibin_pmf_skew_normal(&p, 3).unwrap(), 0.0);
    }

    #[test]
    fn skew_normal_seeded_central() {
        let p = seeded_profile(200, 3);
        let mu: f64 = p.probs().iter().sum();
        let s = mu.round() as usize;
        let approx = poibin_pmf_skew_normal(&p, s).unwrap();
        let exact = poibin_pmf_recursive(&p, s).unwrap().prob(s);
        assert!((approx - exact).abs() < 1e-3);
    }

    #[test]
    fn cond_logprob_symmetric() {
        let p = BernoulliProfile::new(vec![0.5; 3]).unwrap();
        let z = BinaryRow::new(vec![1, 0, 0]).unwrap();
        let lp = cond_bernoulli_logprob(&p, &z).unwrap();
        assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn cond_logprob_two_outcomes() {
        // Sum-1 outcomes of p=(0.9, 0.1): (1,0) has mass 0.9*0.9, (0,1) 0.1*0.1.
        let p = BernoulliProfile::new(vec![0.9, 0.1]).unwrap();
        let z = BinaryRow::new(vec![1, 0]).unwrap();
        let lp = cond_bernoulli_logprob(&p, &z).unwrap();
        assert!((lp - (0.81f64 / 0.82).ln()).abs() < 1e-12);
    }

    #[test]
    fn cond_logprob_normalizes_over_constraint_set() {
        let p = seeded_profile(8, 11);
        let mut total = 0.0;
        for code in 0u32..(1 << 8) {
            if code.count_ones() != 3 {
                continue;
            }
            let bits: Vec<u8> = (0..8).map(|i| (code >> i & 1) as u8).collect();
            let z = BinaryRow::new(bits).unwrap();
            total += cond_bernoulli_logprob(&p, &z).unwrap().exp();
        }
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cond_logprob_infeasible_is_log_zero() {
        let p = BernoulliProfile::new(vec![1.0, 1.0]).unwrap();
        let z = BinaryRow::new(vec![1, 0]).unwrap();
        assert_eq!(cond_bernoulli_logprob(&p, &z).unwrap(), LOG_ZERO);
    }

    #[test]
    fn sample_boundary_sums() {
        let p = seeded_profile(6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(cond_bernoulli_sample(&p, 0, &mut rng).unwrap().sum(), 0);
            let full = cond_bernoulli_sample(&p, 6, &mut rng).unwrap();
            assert_eq!(full.bits(), &[1u8; 6]);
        }
    }

    #[test]
    fn sample_two_point_frequency() {
        // P(z1 = 1 | S = 1) = 0.81/0.82 under p = (0.9, 0.1).
        let p = BernoulliProfile::new(vec![0.9, 0.1]).unwrap();
        let table = CondBernoulliTable::new(&p, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut hits = 0u32;
        for _ in 0..n {
            if table.sample(&mut rng).bits()[0] == 1 {
                hits += 1;
            }
        }
        let target = 0.81 / 0.82;
        let se = (target * (1.0 - target) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - target).abs() < 3.0 * se, "freq {freq} vs {target}");
    }

    #[test]
    fn sample_infeasible_sum_rejected() {
        let p = BernoulliProfile::new(vec![0.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            cond_bernoulli_sample(&p, 2, &mut rng),
            Err(Error::InfeasibleSum { s: 2 })
        ));
    }

    #[test]
    fn degenerate_entries_concentrate_support() {
        // pi_1 = 1 forces z_1 = 1 whenever S >= 1 and the rest can't carry S.
        let p = BernoulliProfile::new(vec![1.0, 0.5, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let z = cond_bernoulli_sample(&p, 2, &mut rng).unwrap();
            assert_eq!(z.bits(), &[1, 1, 0]);
        }
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = seeded_profile(9, 2);
        let q = BernoulliProfile::from_csv_line(&p.to_csv_line()).unwrap();
        assert_eq!(p, q);
    }
}
