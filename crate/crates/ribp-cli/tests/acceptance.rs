//! End-to-end acceptance checks. Each test prints a single PASS/FAIL line
//! naming the capability it certifies; run with `--nocapture` to see them.

use std::time::Instant;

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use ribp::exchangeability::{
    crp_equivalence_check, direct_restricted_predictive, latent_restricted_three_urn_predictive,
    one_red, verify_pair_exchangeability_unrestricted, Color, IGapState, UrnState,
};
use ribp::inference::{
    exact_posterior_small, matrix_code, Sampler, SamplerConfig,
};
use ribp::linear_gaussian::{LinearGaussianData, LinearGaussianModel};
use ribp::model::{
    FeatureMatrix, ObservationModel, RowSumLaw, RowSumLawTable, TruncatedBetaProcessPrior,
    UniformObservation,
};
use ribp::poibin::{
    poibin_pmf_dft, poibin_pmf_recursive, BernoulliProfile, BinaryRow, CondBernoulliTable,
};
use ribp::predictive::{
    effective_sample_size, new_row_logprob, predictive_logprob, sample_weighted_posterior_pi,
};
use ribp::quadrature::gauss_legendre_01;

fn report(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {detail}");
    assert!(pass, "{name}: {detail}");
}

fn profile(p: &[f64]) -> BernoulliProfile {
    BernoulliProfile::new(p.to_vec()).unwrap()
}

/// Sum-count distribution by brute force over all 2^K outcomes.
fn poibin_brute(p: &[f64]) -> Vec<f64> {
    let k = p.len();
    let mut pmf = vec![0.0; k + 1];
    for code in 0u64..(1 << k) {
        let mut prob = 1.0;
        let mut sum = 0;
        for (i, &pi) in p.iter().enumerate() {
            if code >> i & 1 == 1 {
                prob *= pi;
                sum += 1;
            } else {
                prob *= 1.0 - pi;
            }
        }
        pmf[sum] += prob;
    }
    pmf
}

#[test]
fn acceptance_1_sum_count_kernel_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_err_brute = 0.0f64;
    for k in 1..=15 {
        let p: Vec<f64> = (0..k).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let prof = profile(&p);
        let pmf = poibin_pmf_recursive(&prof, k).unwrap();
        let brute = poibin_brute(&p);
        for s in 0..=k {
            max_err_brute = max_err_brute.max((pmf.prob(s) - brute[s]).abs());
        }
    }
    let mut max_err_dft = 0.0f64;
    for k in [2usize, 17, 50, 128, 200] {
        let p: Vec<f64> = (0..k).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let prof = profile(&p);
        let rec = poibin_pmf_recursive(&prof, k).unwrap();
        let dft = poibin_pmf_dft(&prof);
        for s in 0..=k {
            max_err_dft = max_err_dft.max((rec.prob(s) - dft.prob(s)).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = max_err_brute <= 1e-12 && max_err_dft <= 1e-10 && elapsed < 5.0;
    report(
        "sum-count kernel exactness",
        pass,
        &format!(
            "enumeration err {max_err_brute:.2e} (<=1e-12), transform err {max_err_dft:.2e} (<=1e-10), {elapsed:.2}s (<5s)"
        ),
    );
}

#[test]
fn acceptance_2_fixed_sum_row_sampler() {
    // Enumerated normalization: the table's total mass over all rows with
    // the target sum matches the enumerated sum exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut max_norm_err = 0.0f64;
    for k in 2..=12 {
        let p: Vec<f64> = (0..k).map(|_| 0.05 + 0.9 * rand::Rng::random::<f64>(&mut rng)).collect();
        let prof = profile(&p);
        for s in 1..k {
            let table = CondBernoulliTable::new(&prof, s).unwrap();
            let mut brute = 0.0;
            for code in 0u64..(1 << k) {
                if (code.count_ones() as usize) != s {
                    continue;
                }
                let mut prob = 1.0;
                for (i, &pi) in p.iter().enumerate() {
                    prob *= if code >> i & 1 == 1 { pi } else { 1.0 - pi };
                }
                brute += prob;
            }
            max_norm_err = max_norm_err.max((table.total_prob() - brute).abs() / brute);
        }
    }

    // Goodness of fit of the sampler against enumerated row probabilities.
    let mut min_p_value = 1.0f64;
    for (k, s, seed) in [(5usize, 2usize, 7u64), (8, 3, 8)] {
        let p: Vec<f64> = (0..k)
            .map(|i| 0.15 + 0.7 * (i as f64 / (k - 1) as f64))
            .collect();
        let prof = profile(&p);
        let table = CondBernoulliTable::new(&prof, s).unwrap();
        let norm = table.total_prob();
        let mut expect = std::collections::HashMap::new();
        for code in 0u64..(1 << k) {
            if (code.count_ones() as usize) != s {
                continue;
            }
            let mut prob = 1.0;
            for (i, &pi) in p.iter().enumerate() {
                prob *= if code >> i & 1 == 1 { pi } else { 1.0 - pi };
            }
            expect.insert(code, prob / norm);
        }
        let draws = 100_000usize;
        let mut counts: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..draws {
            let row = table.sample(&mut rng);
            let mut code = 0u64;
            for (i, &b) in row.bits().iter().enumerate() {
                code |= (b as u64) << i;
            }
            *counts.entry(code).or_default() += 1;
        }
        let stat: f64 = expect
            .iter()
            .map(|(code, &pr)| {
                let e = pr * draws as f64;
                let o = *counts.get(code).unwrap_or(&0) as f64;
                (o - e).powi(2) / e
            })
            .sum();
        let dof = (expect.len() - 1) as f64;
        let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
        min_p_value = min_p_value.min(p_value);
    }
    let pass = max_norm_err <= 1e-9 && min_p_value > 0.001;
    report(
        "fixed-sum row sampler",
        pass,
        &format!("normalization err {max_norm_err:.2e} (<=1e-9), min GOF p {min_p_value:.4} (>0.001)"),
    );
}

fn fixed_pi_sampler<'a>(
    pi: &[f64],
    f: RowSumLawTable,
    obs: &'a dyn ObservationModel,
    z0: Vec<Vec<u8>>,
    seed: u64,
) -> Sampler<'a> {
    let prior = TruncatedBetaProcessPrior::new(1.0, pi.len()).unwrap();
    let config = SamplerConfig {
        update_pi: false,
        row_mh_period: 0,
        audit_period: 0,
        seed,
        ..SamplerConfig::default()
    };
    Sampler::with_state(
        prior,
        f,
        obs,
        profile(pi),
        FeatureMatrix::from_rows(z0).unwrap(),
        config,
    )
    .unwrap()
}

fn chain_tv(
    sampler: &mut Sampler,
    exact: &[f64],
    steps: usize,
    mut op: impl FnMut(&mut Sampler),
) -> f64 {
    let mut counts = vec![0usize; exact.len()];
    for _ in 0..steps {
        op(sampler);
        counts[matrix_code(&sampler.state.z) as usize] += 1;
    }
    0.5 * exact
        .iter()
        .zip(&counts)
        .map(|(&p, &c)| (p - c as f64 / steps as f64).abs())
        .sum::<f64>()
}

#[test]
fn acceptance_3_sampler_operators_hit_exact_posterior() {
    let steps = 100_000;

    // Entry-flip update; row sums free under a Poisson law.
    let t0 = Instant::now();
    let pi = [0.35, 0.6, 0.15];
    let f = RowSumLawTable::new(RowSumLaw::Poisson(1.0), 3).unwrap();
    let obs = UniformObservation;
    let exact = exact_posterior_small(&profile(&pi), &f, &obs, 2, 3).unwrap();
    let mut s = fixed_pi_sampler(&pi, f, &obs, vec![vec![1, 0, 0], vec![0, 1, 0]], 17);
    let tv_entry = chain_tv(&mut s, &exact, steps, |s| {
        for n in 0..2 {
            for k in 0..3 {
                s.gibbs_entry_random_s(n, k).unwrap();
            }
        }
    });
    let t_entry = t0.elapsed().as_secs_f64();

    // Location update; row sums pinned at two.
    let t0 = Instant::now();
    let pi = [0.5, 0.25, 0.65, 0.1];
    let f = RowSumLawTable::new(RowSumLaw::Degenerate(2), 4).unwrap();
    let exact = exact_posterior_small(&profile(&pi), &f, &obs, 1, 4).unwrap();
    let mut s = fixed_pi_sampler(&pi, f, &obs, vec![vec![1, 1, 0, 0]], 3);
    let tv_loc = chain_tv(&mut s, &exact, steps, |s| {
        for _ in 0..2 {
            s.gibbs_location_random_entry(0).unwrap();
        }
    });
    let t_loc = t0.elapsed().as_secs_f64();

    // Whole-row proposal against a tilted likelihood, so some proposals
    // are rejected and the acceptance ratio is actually exercised.
    struct Tilt;
    impl ObservationModel for Tilt {
        fn full_loglik(&self, z: &FeatureMatrix) -> f64 {
            (0..z.n_rows()).map(|n| 0.8 * z.get(n, 0) as f64).sum()
        }
        fn as_dyn(&self) -> &dyn ObservationModel {
            self
        }
    }
    let t0 = Instant::now();
    let pi = [0.4, 0.3, 0.5];
    let f = RowSumLawTable::new(RowSumLaw::Poisson(1.2), 3).unwrap();
    let tilt = Tilt;
    let exact = exact_posterior_small(&profile(&pi), &f, &tilt, 1, 3).unwrap();
    let mut s = fixed_pi_sampler(&pi, f, &tilt, vec![vec![0, 1, 0]], 41);
    let tv_row = chain_tv(&mut s, &exact, steps, |s| {
        s.mh_row(0).unwrap();
    });
    let t_row = t0.elapsed().as_secs_f64();

    // Weight update with one feature and one row: the stationary density
    // is known up to a constant, so compare the chain mean to quadrature.
    let t0 = Instant::now();
    let alpha = 1.4f64;
    let prior = TruncatedBetaProcessPrior::new(alpha, 1).unwrap();
    let f = RowSumLawTable::new(RowSumLaw::Table(vec![0.3, 0.7]), 1).unwrap();
    let config = SamplerConfig {
        update_pi: true,
        row_mh_period: 0,
        audit_period: 0,
        seed: 4,
        ..SamplerConfig::default()
    };
    let mut s = Sampler::with_state(
        prior,
        f,
        &obs,
        profile(&[0.5]),
        FeatureMatrix::from_rows(vec![vec![1]]).unwrap(),
        config,
    )
    .unwrap();
    // Density for z = [1]: pi^alpha * f(1) / pi = pi^(alpha - 1) on (0,1),
    // so the mean is alpha / (alpha + 1).
    let mut acc = 0.0;
    for step in 0..steps {
        s.mh_pi_coordinate(0).unwrap();
        if step >= steps / 10 {
            acc += s.state.pi.get(0);
        }
    }
    let mean = acc / (steps - steps / 10) as f64;
    let expect = alpha / (alpha + 1.0);
    let pi_err = (mean - expect).abs();
    let t_pi = t0.elapsed().as_secs_f64();

    // Full sweeps with a conjugate-Gaussian likelihood keep the running
    // log joint within auditing tolerance of a from-scratch recompute.
    let t0 = Instant::now();
    let n = 6;
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = nalgebra::DMatrix::from_fn(n, d, |_, _| rand::Rng::random::<f64>(&mut rng) - 0.5);
    let data = LinearGaussianData::new(x, 0.5, 1.0).unwrap();
    let model = LinearGaussianModel::new(data, 5).unwrap();
    let prior = TruncatedBetaProcessPrior::new(2.0, 5).unwrap();
    let f = RowSumLawTable::new(RowSumLaw::Poisson(1.5), 5).unwrap();
    let config = SamplerConfig {
        n_iterations: 400,
        row_mh_period: 2,
        audit_period: 10,
        seed: 12,
        ..SamplerConfig::default()
    };
    let mut sweeper = Sampler::new(prior, f, &model, n, config).unwrap();
    sweeper.run().unwrap();
    let drift = sweeper.max_audit_drift();
    let t_audit = t0.elapsed().as_secs_f64();

    let times_ok = [t_entry, t_loc, t_row, t_pi, t_audit].iter().all(|&t| t < 120.0);
    let pass = tv_entry < 0.02 && tv_loc < 0.02 && tv_row < 0.02 && pi_err < 0.01
        && drift <= 1e-6 && times_ok;
    report(
        "sampler operator stationarity",
        pass,
        &format!(
            "TV entry {tv_entry:.4}, location {tv_loc:.4}, row {tv_row:.4} (<0.02); weight mean err {pi_err:.4} (<0.01); audit drift {drift:.2e} (<=1e-6); per-op times {t_entry:.0}/{t_loc:.0}/{t_row:.0}/{t_pi:.0}/{t_audit:.0}s (<120s)"
        ),
    );
}

#[test]
fn acceptance_4_exchangeability_lab() {
    let start = Instant::now();

    // Unrestricted urn scheme: both orders of a fixed pair give exactly 1/216.
    let state = UrnState::new([1, 1, 2], 2).unwrap();
    let x_a = [Color::Red, Color::Blue, Color::Red];
    let x_b = [Color::Red, Color::Red, Color::Blue];
    let (p_ab, p_ba, sym) = verify_pair_exchangeability_unrestricted(&state, &x_a, &x_b);
    let urn_ok = sym && p_ab == Ratio::new(1, 216) && p_ba == Ratio::new(1, 216);

    // Outcome-level restriction breaks exchangeability: 3/28 vs 1/8.
    let state = UrnState::new([2, 1, 0], 3).unwrap();
    let q_ab = direct_restricted_predictive(&state, 0).unwrap()
        * direct_restricted_predictive(&state.observe(&one_red(0)), 1).unwrap();
    let q_ba = direct_restricted_predictive(&state, 1).unwrap()
        * direct_restricted_predictive(&state.observe(&one_red(1)), 0).unwrap();
    let direct_ok = q_ab == Ratio::new(3, 28) && q_ba == Ratio::new(1, 8) && q_ab != q_ba;

    // Restricting at the latent level restores exchangeability.
    let pred_a = latent_restricted_three_urn_predictive(&[0, 1, 0, 2], 1e-8).unwrap();
    let pred_b = latent_restricted_three_urn_predictive(&[2, 0, 1, 0], 1e-8).unwrap();
    let latent_err = pred_a
        .iter()
        .zip(&pred_b)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    // Count-restricted gamma-Poisson at sum one equals the CRP exactly.
    let igap = IGapState::new(vec![3, 1, 1], Ratio::new(1, 1)).unwrap();
    let crp_ok = crp_equivalence_check(&igap, 25).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let pass = urn_ok && direct_ok && latent_err <= 1e-6 && crp_ok && elapsed < 60.0;
    report(
        "exchangeability lab",
        pass,
        &format!(
            "pair prob {}/{} (=1/216 both orders), restricted {}/{} vs {}/{} (unequal), latent swap err {latent_err:.2e} (<=1e-6), sum-one CRP match {crp_ok}, {elapsed:.1}s (<60s)",
            p_ab.numer(), p_ab.denom(), q_ab.numer(), q_ab.denom(), q_ba.numer(), q_ba.denom()
        ),
    );
}

#[test]
fn acceptance_5_importance_predictive_vs_quadrature() {
    let start = Instant::now();
    let alpha = 2.0;
    let k = 2;
    let prior = TruncatedBetaProcessPrior::new(alpha, k).unwrap();
    let f = RowSumLawTable::new(RowSumLaw::Poisson(0.9), k).unwrap();
    let z = FeatureMatrix::from_rows(vec![vec![1, 0], vec![1, 1]]).unwrap();
    let z_new = [1u8, 0u8];

    // Ground truth by tensor quadrature over the two weight coordinates:
    // E[p(new row | pi) | restricted data] under the truncated prior.
    let (nodes, weights) = gauss_legendre_01(64);
    let shape = alpha / k as f64;
    let mut numer = 0.0;
    let mut denom = 0.0;
    for (&p0, &w0) in nodes.iter().zip(&weights) {
        for (&p1, &w1) in nodes.iter().zip(&weights) {
            let pi = profile(&[p0, p1]);
            let prior_dens = (shape * p0.powf(shape - 1.0)) * (shape * p1.powf(shape - 1.0));
            let data_lik = {
                let mut l = 1.0;
                for r in 0..z.n_rows() {
                    let row = BinaryRow::new(z.row(r).to_vec()).unwrap();
                    let mut bern = 1.0;
                    for (j, &b) in row.bits().iter().enumerate() {
                        let p = pi.get(j);
                        bern *= if b == 1 { p } else { 1.0 - p };
                    }
                    let pmf = poibin_pmf_recursive(&pi, k).unwrap();
                    l *= bern * f.prob(row.sum()) / pmf.prob(row.sum());
                }
                l
            };
            let pred = new_row_logprob(&z_new, &pi, &f).unwrap().exp();
            numer += w0 * w1 * prior_dens * data_lik * pred;
            denom += w0 * w1 * prior_dens * data_lik;
        }
    }
    let truth = numer / denom;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = sample_weighted_posterior_pi(&z, &prior, &f, 100_000, &mut rng).unwrap();
    let est = predictive_logprob(&z_new, &samples, &f).unwrap().exp();
    let ess = effective_sample_size(&samples);
    let err = (est - truth).abs();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = err < 1e-3 && elapsed < 60.0;
    report(
        "importance-sampled predictive",
        pass,
        &format!("|est - quadrature| {err:.2e} (<1e-3), ESS {ess:.0} of 100000, {elapsed:.1}s (<60s)"),
    );
}

#[test]
fn acceptance_6_image_study() {
    use ribp_cli::synth_images::{run, ImagesConfig};
    let start = Instant::now();
    let cfg = ImagesConfig::default();
    assert_eq!((cfg.n_images, cfg.k, cfg.sweeps), (50, 100, 10_000));
    let noisy = run(&cfg, None).unwrap();

    // Noise-free images with a sharper likelihood recover the four
    // generating features.
    let clean_cfg = ImagesConfig { noise: 0.0, sigma_x: 0.25, sweeps: 2000, ..cfg };
    let clean = run(&clean_cfg, None).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let pass = noisy.mse_ribp <= noisy.mse_ibp
        && noisy.ribp_rows_always_two
        && clean.features_recovered
        && elapsed < 600.0;
    report(
        "synthetic image study",
        pass,
        &format!(
            "mse restricted {:.5} <= unrestricted {:.5}; row sums fixed at two {}; noise-free features recovered: {}; {elapsed:.0}s (<600s)",
            noisy.mse_ribp, noisy.mse_ibp, noisy.ribp_rows_always_two, clean.features_recovered
        ),
    );
}

#[test]
fn acceptance_7_text_study() {
    use ribp_cli::synth_text::{run, TextConfig};
    let start = Instant::now();
    let cfg = TextConfig::default();
    assert_eq!(
        (cfg.n_groups, cfg.vocab, cfg.train_per_group, cfg.test_per_group),
        (5, 500, 40, 40)
    );
    let r = run(&cfg, None).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = r.mean_logpred_ribp > r.mean_logpred_ibp
        && r.correct_at_ribp[0] >= r.correct_at_ibp[0]
        && elapsed < 900.0;
    report(
        "synthetic text study",
        pass,
        &format!(
            "held-out log predictive restricted {:.2} > unrestricted {:.2}; correct-at-1 {:.3} >= {:.3}; min group ESS {:.0}; {elapsed:.0}s (<900s)",
            r.mean_logpred_ribp,
            r.mean_logpred_ibp,
            r.correct_at_ribp[0],
            r.correct_at_ibp[0],
            r.ess_per_group.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
    );
}
