//! Runs the urn-scheme exchangeability checks and reports each as a
//! named pass/fail line plus a CSV of the compared quantities.

use std::path::Path;

use num_rational::Ratio;

use ribp::exchangeability::{
    crp_equivalence_check, direct_restricted_predictive, igap_sum2_direct_law,
    igap_sum2_via_two_crp_draws, latent_restricted_three_urn_predictive, one_red,
    three_urn_predictive, verify_pair_exchangeability_unrestricted, Color, IGapState, UrnState,
};
use ribp::Result;

use crate::io::write_csv;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub check: String,
    pub value_a: String,
    pub value_b: String,
    pub pass: bool,
}

fn rat_str(r: Ratio<i64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn run_checks() -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();

    // Unrestricted urn scheme: the two orders of a specific pair of draws
    // have the same probability, 1/216 each.
    let state = UrnState::new([1, 1, 2], 2)?;
    let x_a = [Color::Red, Color::Blue, Color::Red];
    let x_b = [Color::Red, Color::Red, Color::Blue];
    let (p_ab, p_ba, ok) = verify_pair_exchangeability_unrestricted(&state, &x_a, &x_b);
    let exact = ok && p_ab == Ratio::new(1, 216);
    results.push(CheckResult {
        check: "unrestricted_pair_1_216".into(),
        value_a: rat_str(p_ab),
        value_b: rat_str(p_ba),
        pass: exact,
    });

    // Unrestricted scheme is exchangeable for every small state and every
    // ordered pair of draws.
    let mut all_ok = true;
    let mut pairs = 0usize;
    for n in 1..=4i64 {
        for m0 in 0..=n + 1 {
            for m1 in 0..=n + 1 {
                for m2 in 0..=n + 1 {
                    let state = UrnState::new([m0, m1, m2], n)?;
                    let triples: Vec<[Color; 3]> = (0..8)
                        .map(|b| {
                            let bit = |i: usize| {
                                if b >> i & 1 == 1 { Color::Red } else { Color::Blue }
                            };
                            [bit(0), bit(1), bit(2)]
                        })
                        .collect();
                    for a in &triples {
                        for b in &triples {
                            let (_, _, ok) =
                                verify_pair_exchangeability_unrestricted(&state, a, b);
                            all_ok &= ok;
                            pairs += 1;
                        }
                    }
                }
            }
        }
    }
    results.push(CheckResult {
        check: "unrestricted_full_sweep".into(),
        value_a: pairs.to_string(),
        value_b: "all orders equal".into(),
        pass: all_ok,
    });

    // Direct restriction to one-red outcomes is not exchangeable:
    // the witness state gives 3/28 for one order and 1/8 for the other.
    let state = UrnState::new([2, 1, 0], 3)?;
    let p_ab = direct_restricted_predictive(&state, 0)?
        * direct_restricted_predictive(&state.observe(&one_red(0)), 1)?;
    let p_ba = direct_restricted_predictive(&state, 1)?
        * direct_restricted_predictive(&state.observe(&one_red(1)), 0)?;
    let witness_ok = p_ab == Ratio::new(3, 28) && p_ba == Ratio::new(1, 8) && p_ab != p_ba;
    results.push(CheckResult {
        check: "direct_restriction_order_dependent".into(),
        value_a: rat_str(p_ab),
        value_b: rat_str(p_ba),
        pass: witness_ok,
    });

    // Restricting at the latent level restores exchangeability: swapping
    // two history entries leaves the next-draw predictive unchanged.
    let tol = 1e-8;
    let hist_a = [0usize, 1, 0, 2];
    let hist_b = [2usize, 0, 1, 0];
    let pred_a = latent_restricted_three_urn_predictive(&hist_a, tol)?;
    let pred_b = latent_restricted_three_urn_predictive(&hist_b, tol)?;
    let max_diff = pred_a
        .iter()
        .zip(&pred_b)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    results.push(CheckResult {
        check: "latent_restriction_exchangeable".into(),
        value_a: format!("{pred_a:?}"),
        value_b: format!("{pred_b:?}"),
        pass: max_diff < 1e-6,
    });

    // The count-restricted gamma-Poisson scheme at sum one agrees with a
    // Chinese-restaurant-process predictive exactly, over a long walk.
    let igap = IGapState { m: vec![3, 1, 1], theta: Ratio::new(1, 1) };
    let crp_ok = crp_equivalence_check(&igap, 25)?;
    results.push(CheckResult {
        check: "igap_sum1_equals_crp".into(),
        value_a: "restricted predictive".into(),
        value_b: "crp predictive".into(),
        pass: crp_ok,
    });

    // At sum two, the direct law equals the composition of two
    // sequential draws, term by term and in exact arithmetic.
    let mut sum2_ok = true;
    for theta in [Ratio::new(1, 1), Ratio::new(1, 2), Ratio::new(7, 3)] {
        let st = IGapState { m: vec![2, 1], theta };
        let as_map = |v: Vec<(Vec<i64>, i64, Ratio<i64>)>| {
            v.into_iter()
                .map(|(x, x_new, p)| ((x, x_new), p))
                .collect::<std::collections::BTreeMap<_, _>>()
        };
        sum2_ok &= as_map(igap_sum2_direct_law(&st)?) == as_map(igap_sum2_via_two_crp_draws(&st));
    }
    results.push(CheckResult {
        check: "igap_sum2_equals_two_draws".into(),
        value_a: "direct law".into(),
        value_b: "sequential law".into(),
        pass: sum2_ok,
    });

    // Sanity: the plain three-urn predictive from fresh urns is uniform.
    let fresh = UrnState::fresh();
    let uniform = (0..8).all(|b| {
        let bit = |i: usize| if b >> i & 1 == 1 { Color::Red } else { Color::Blue };
        three_urn_predictive(&fresh, &[bit(0), bit(1), bit(2)]) == Ratio::new(1, 8)
    });
    results.push(CheckResult {
        check: "fresh_urns_uniform".into(),
        value_a: "each outcome".into(),
        value_b: "1/8".into(),
        pass: uniform,
    });

    Ok(results)
}

pub fn run(out: Option<&Path>) -> Result<bool> {
    let results = run_checks()?;
    let mut all = true;
    for r in &results {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {} vs {}", r.check, r.value_a, r.value_b);
        all &= r.pass;
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|r| {
                vec![
                    r.check.clone(),
                    r.value_a.clone(),
                    r.value_b.clone(),
                    r.pass.to_string(),
                ]
            })
            .collect();
        write_csv(&dir.join("exchangeability.csv"), "check,value_a,value_b,pass", &rows)?;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        let results = run_checks().unwrap();
        assert_eq!(results.len(), 7);
        for r in &results {
            assert!(r.pass, "{} failed: {} vs {}", r.check, r.value_a, r.value_b);
        }
    }
}
