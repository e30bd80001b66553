//! Enumeration lab for exchangeability of urn schemes.
//!
//! Three toy constructions over triples of colored balls:
//! - the unrestricted three-urn scheme (one Pólya urn per coordinate),
//!   which is exchangeable — two-step predictives agree in either order,
//!   exactly, in rational arithmetic;
//! - its *direct* restriction to exactly one red per sample, obtained by
//!   renormalizing the marginal predictive, which is **not** exchangeable
//!   (witness states give strictly different order-swapped products);
//! - the *latent* restriction, which renormalizes the conditional law
//!   given the urn weights before mixing, and is exchangeable again
//!   (verified by quadrature over the weights).
//!
//! Plus the sum-restricted gamma-Poisson predictive, which collapses to a
//! Chinese restaurant process.

use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::quadrature::integrate_unit_cube;

pub type Rat = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Red,
    Blue,
}

pub type Triple = [Color; 3];

pub const RED: Color = Color::Red;
pub const BLUE: Color = Color::Blue;

/// Triple with a single red in the given position.
pub fn one_red(k: usize) -> Triple {
    let mut t = [BLUE; 3];
    t[k] = RED;
    t
}

/// Per-urn tallies. Urn `i` holds `m[i]` red and `n + 1 - m[i]` blue
/// balls out of `n + 1`; drawing a ball returns it plus a copy, so a red
/// draw bumps both `m[i]` and (after the whole triple) `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UrnState {
    pub m: [i64; 3],
    pub n: i64,
}

impl UrnState {
    pub fn new(m: [i64; 3], n: i64) -> Result<Self> {
        if n < 0 || m.iter().any(|&v| v < 0 || v > n + 1) {
            return Err(Error::Domain(format!(
                "urn counts {m:?} incompatible with {n} samples"
            )));
        }
        Ok(Self { m, n })
    }

    /// One red and one blue ball in each urn, no samples drawn.
    pub fn fresh() -> Self {
        Self { m: [1, 1, 1], n: 1 }
    }

    pub fn observe(&self, x: &Triple) -> Self {
        let mut m = self.m;
        for (mi, c) in m.iter_mut().zip(x) {
            if *c == RED {
                *mi += 1;
            }
        }
        Self { m, n: self.n + 1 }
    }
}

/// Probability of drawing the color triple `x`: the product of per-urn
/// draw probabilities `m_i/(n+1)` for red and `(n+1-m_i)/(n+1)` for blue.
pub fn three_urn_predictive(state: &UrnState, x: &Triple) -> Rat {
    let total = state.n + 1;
    let mut p = Rat::one();
    for (&mi, c) in state.m.iter().zip(x) {
        let num = match c {
            Color::Red => mi,
            Color::Blue => total - mi,
        };
        p *= Rat::new(num, total);
    }
    p
}

/// Two-step predictive of `(x_a, x_b)` and of `(x_b, x_a)`, updating the
/// urns in between. The scheme is exchangeable, so the products agree
/// exactly; the boolean reports that equality.
pub fn verify_pair_exchangeability_unrestricted(
    state: &UrnState,
    x_a: &Triple,
    x_b: &Triple,
) -> (Rat, Rat, bool) {
    let p_ab = three_urn_predictive(state, x_a)
        * three_urn_predictive(&state.observe(x_a), x_b);
    let p_ba = three_urn_predictive(state, x_b)
        * three_urn_predictive(&state.observe(x_b), x_a);
    (p_ab, p_ba, p_ab == p_ba)
}

/// Direct restriction to exactly one red per triple: renormalize the
/// unrestricted predictive over the three one-red triples. The weight of
/// urn `k` is `m_k * prod_{i != k} (n+1-m_i)`, i.e. `m_k/(n+1-m_k)` up to
/// a common factor.
pub fn direct_restricted_predictive(state: &UrnState, k: usize) -> Result<Rat> {
    let weights = direct_restriction_weights(state);
    let total: Rat = weights.iter().sum();
    if total == Rat::zero() {
        return Err(Error::Domain(
            "no urn can produce a red ball; the restricted predictive is undefined".into(),
        ));
    }
    Ok(weights[k] / total)
}

fn direct_restriction_weights(state: &UrnState) -> [Rat; 3] {
    let total = state.n + 1;
    let mut w = [Rat::zero(); 3];
    for k in 0..3 {
        let mut prod = Rat::new(state.m[k], 1);
        for i in 0..3 {
            if i != k {
                prod *= Rat::new(total - state.m[i], 1);
            }
        }
        w[k] = prod;
    }
    w
}

/// Two-step direct-restricted products in both orders. For generic states
/// these differ — the restriction breaks exchangeability — and the boolean
/// flags the strict inequality.
pub fn verify_direct_restriction_not_exchangeable(
    state: &UrnState,
    k_a: usize,
    k_b: usize,
) -> Result<(Rat, Rat, bool)> {
    let step = |first: usize, second: usize| -> Result<Rat> {
        let p1 = direct_restricted_predictive(state, first)?;
        let next = state.observe(&one_red(first));
        let p2 = direct_restricted_predictive(&next, second)?;
        Ok(p1 * p2)
    };
    let p_ab = step(k_a, k_b)?;
    let p_ba = step(k_b, k_a)?;
    Ok((p_ab, p_ba, p_ab != p_ba))
}

/// Unnormalized latent-restricted likelihood of a one-red-per-sample
/// history, as a function of the urn weights `pi`: each sample
/// contributes `pi_k prod_{i != k}(1 - pi_i)` divided by the
/// normalizer `sum_j pi_j prod_{i != j}(1 - pi_i)`.
fn latent_history_density(pi: &[f64], history: &[usize]) -> f64 {
    let w = |k: usize| -> f64 {
        let mut v = pi[k];
        for i in 0..3 {
            if i != k {
                v *= 1.0 - pi[i];
            }
        }
        v
    };
    let norm = w(0) + w(1) + w(2);
    if norm <= 0.0 {
        return 0.0;
    }
    history.iter().map(|&k| w(k) / norm).product()
}

/// Marginal probability of a restricted history under independent
/// uniform priors on the three urn weights, by tensor quadrature.
pub fn latent_restricted_history_prob(history: &[usize], tol: f64) -> Result<f64> {
    if history.iter().any(|&k| k >= 3) {
        return Err(Error::Domain("history entries must index one of 3 urns".into()));
    }
    let (value, achieved) =
        integrate_unit_cube(3, |pi| latent_history_density(pi, history), tol, 512);
    if achieved >= tol {
        return Err(Error::Numerical(format!(
            "quadrature did not converge: achieved {achieved}, wanted {tol}"
        )));
    }
    Ok(value)
}

/// Predictive over the three one-red triples given a restricted history,
/// under the latent (conditional-law) restriction: ratios of history
/// integrals. This construction is exchangeable in the history.
pub fn latent_restricted_three_urn_predictive(
    history: &[usize],
    tol: f64,
) -> Result<[f64; 3]> {
    let denom = latent_restricted_history_prob(history, tol)?;
    let mut out = [0.0; 3];
    let mut extended = history.to_vec();
    for (k, slot) in out.iter_mut().enumerate() {
        extended.push(k);
        *slot = latent_restricted_history_prob(&extended, tol)? / denom;
        extended.pop();
    }
    Ok(out)
}

/// Feature counts for the sum-restricted gamma-Poisson predictive; the
/// concentration stays rational so every check is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IGapState {
    pub m: Vec<i64>,
    pub theta: Rat,
}

impl IGapState {
    pub fn new(m: Vec<i64>, theta: Rat) -> Result<Self> {
        if m.iter().any(|&v| v < 0) || theta < Rat::zero() {
            return Err(Error::Domain("counts and concentration must be nonnegative".into()));
        }
        Ok(Self { m, theta })
    }

    pub fn total(&self) -> i64 {
        self.m.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IGapChoice {
    Seen(usize),
    New,
}

/// Sum-to-one restricted gamma-Poisson predictive: `m_k/(sum m + theta)`
/// for a seen feature, `theta/(sum m + theta)` for a new one.
pub fn restricted_igap_predictive(state: &IGapState, choice: IGapChoice) -> Result<Rat> {
    let denom = Rat::new(state.total(), 1) + state.theta;
    if denom == Rat::zero() {
        return Err(Error::Domain("empty state with zero concentration".into()));
    }
    Ok(match choice {
        IGapChoice::Seen(k) => {
            if k >= state.m.len() {
                return Err(Error::Domain(format!("feature {k} has never been seen")));
            }
            Rat::new(state.m[k], 1) / denom
        }
        IGapChoice::New => state.theta / denom,
    })
}

/// Independently coded Chinese restaurant predictive: existing table `k`
/// with probability `c_k/(n + theta)`, a new table with `theta/(n + theta)`.
fn crp_predictive(counts: &[i64], theta: Rat, choice: IGapChoice) -> Rat {
    let n: i64 = counts.iter().sum();
    let denom = Rat::new(n, 1) + theta;
    match choice {
        IGapChoice::Seen(k) => Rat::new(counts[k], 1) / denom,
        IGapChoice::New => theta / denom,
    }
}

/// Walks `n_steps` deterministic updates (always reinforcing the currently
/// most likely choice, opening new features as the CRP dictates) and
/// compares the two predictive implementations exactly at every state.
pub fn crp_equivalence_check(initial: &IGapState, n_steps: usize) -> Result<bool> {
    let mut state = initial.clone();
    for _ in 0..n_steps {
        for k in 0..state.m.len() {
            if restricted_igap_predictive(&state, IGapChoice::Seen(k))?
                != crp_predictive(&state.m, state.theta, IGapChoice::Seen(k))
            {
                return Ok(false);
            }
        }
        if restricted_igap_predictive(&state, IGapChoice::New)?
            != crp_predictive(&state.m, state.theta, IGapChoice::New)
        {
            return Ok(false);
        }
        // Reinforce the argmax (ties to the lowest index); open a new
        // feature when the concentration dominates every count.
        let best = (0..state.m.len()).max_by_key(|&k| state.m[k]);
        match best {
            Some(k) if Rat::new(state.m[k], 1) >= state.theta => state.m[k] += 1,
            _ => state.m.push(1),
        }
    }
    Ok(true)
}

/// Restricted sum-2 row law on a fixed 3-feature truncation plus an
/// aggregated "new features" bucket: the negative-binomial predictive
/// numerators with the per-count geometric factors cancelled, i.e.
/// `prod_k C(x_k + m_k - 1, x_k)` times the rising factorial
/// `theta(theta+1)...(theta+x_new-1)/x_new!`, renormalized over all
/// compositions of 2.
pub fn igap_sum2_direct_law(state: &IGapState) -> Result<Vec<(Vec<i64>, i64, Rat)>> {
    let k = state.m.len();
    let mut entries: Vec<(Vec<i64>, i64, Rat)> = Vec::new();
    let mut total = Rat::zero();
    // Enumerate x over seen features plus x_new with sum exactly 2.
    let mut stack = vec![(vec![], 0i64)];
    while let Some((prefix, used)) = stack.pop() {
        if prefix.len() == k {
            let x_new = 2 - used;
            let mut w = rising_factorial(state.theta, x_new) / Rat::new(factorial(x_new), 1);
            for (xi, &mi) in prefix.iter().zip(&state.m) {
                w *= neg_binom_numerator(*xi, mi);
            }
            total += w;
            entries.push((prefix, x_new, w));
            continue;
        }
        for v in 0..=(2 - used) {
            let mut p = prefix.clone();
            p.push(v);
            stack.push((p, used + v));
        }
    }
    if total == Rat::zero() {
        return Err(Error::Domain("restricted sum-2 law has empty support".into()));
    }
    for e in &mut entries {
        e.2 /= total;
    }
    Ok(entries)
}

/// `C(x + m - 1, x)` as a rational (1 when x = 0, 0 when m = 0 < x).
fn neg_binom_numerator(x: i64, m: i64) -> Rat {
    rising_factorial(Rat::new(m, 1), x) / Rat::new(factorial(x), 1)
}

fn rising_factorial(base: Rat, terms: i64) -> Rat {
    let mut p = Rat::one();
    for i in 0..terms {
        p *= base + Rat::new(i, 1);
    }
    p
}

fn factorial(x: i64) -> i64 {
    (1..=x).product::<i64>().max(1)
}

/// Law of two sequential CRP draws aggregated to (seen-feature counts,
/// count in new features), for comparison with the direct sum-2 law.
pub fn igap_sum2_via_two_crp_draws(state: &IGapState) -> Vec<(Vec<i64>, i64, Rat)> {
    let k = state.m.len();
    let mut acc: std::collections::BTreeMap<(Vec<i64>, i64), Rat> =
        std::collections::BTreeMap::new();
    // First draw: seen feature j or a new table.
    let mut firsts: Vec<(IGapChoice, Rat)> = (0..k)
        .map(|j| {
            (IGapChoice::Seen(j), crp_predictive(&state.m, state.theta, IGapChoice::Seen(j)))
        })
        .collect();
    firsts.push((IGapChoice::New, crp_predictive(&state.m, state.theta, IGapChoice::New)));
    for (first, p1) in firsts {
        if p1 == Rat::zero() {
            continue;
        }
        // State after the first draw; a fresh table becomes one extra count.
        let mut counts = state.m.clone();
        let mut new_open = 0i64;
        match first {
            IGapChoice::Seen(j) => counts[j] += 1,
            IGapChoice::New => new_open = 1,
        }
        let n2: i64 = counts.iter().sum::<i64>() + new_open;
        let denom2 = Rat::new(n2, 1) + state.theta;
        // Second draw: seen feature, the just-opened table, or another new.
        for j in 0..k {
            let p2 = Rat::new(counts[j], 1) / denom2;
            if p2 != Rat::zero() {
                let mut x: Vec<i64> =
                    counts.iter().zip(&state.m).map(|(c, m)| c - m).collect();
                x[j] += 1;
                let key = (x, new_open);
                *acc.entry(key).or_insert(Rat::zero()) += p1 * p2;
            }
        }
        if new_open == 1 {
            let p_join = Rat::new(1, 1) / denom2;
            let x: Vec<i64> = counts.iter().zip(&state.m).map(|(c, m)| c - m).collect();
            *acc.entry((x.clone(), 2)).or_insert(Rat::zero()) += p1 * p_join;
            let p_new2 = state.theta / denom2;
            if p_new2 != Rat::zero() {
                *acc.entry((x, 2)).or_insert(Rat::zero()) += p1 * p_new2;
            }
        } else {
            let p_new2 = state.theta / denom2;
            if p_new2 != Rat::zero() {
                let x: Vec<i64> = counts.iter().zip(&state.m).map(|(c, m)| c - m).collect();
                *acc.entry((x, 1)).or_insert(Rat::zero()) += p1 * p_new2;
            }
        }
    }
    acc.into_iter().map(|((x, xn), p)| (x, xn, p)).collect()
}
