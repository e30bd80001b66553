//! `fit` and `predict` subcommands: run the sampler on a data matrix from
//! a CSV file, and score query rows against a conditioning matrix with
//! the importance-sampled predictive.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ribp::inference::{Sampler, SamplerConfig, SweepDiagnostics};
use ribp::linear_gaussian::{LinearGaussianData, LinearGaussianModel};
use ribp::model::{
    FeatureMatrix, ObservationModel, RowSumLawTable, TruncatedBetaProcessPrior,
    UniformObservation,
};
use ribp::predictive::{
    effective_sample_size, predictive_logprobs_batch, sample_weighted_posterior_pi,
};
use ribp::{Error, Result};

use crate::config::{parse_row_sum_law, Config};
use crate::io::write_csv;

/// Reads a comma-separated numeric matrix, one row per line.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad number '{}': {e}", cell.trim()),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, msg: "matrix file has no data rows".into() });
    }
    Ok(rows)
}

fn binary_matrix(rows: &[Vec<f64>], path: &Path) -> Result<FeatureMatrix> {
    let bits: Vec<Vec<u8>> = rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| {
                    if v == 0.0 {
                        Ok(0u8)
                    } else if v == 1.0 {
                        Ok(1u8)
                    } else {
                        Err(Error::Domain(format!(
                            "{} contains non-binary value {v}",
                            path.display()
                        )))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    FeatureMatrix::from_rows(bits)
}

pub struct FitArgs {
    pub data: PathBuf,
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
    pub chains: usize,
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let rows = read_matrix_csv(&args.data)?;
    let n = rows.len();
    let k = args.config.get_usize("k", 50)?;
    let alpha = args.config.get_f64("alpha", 2.0)?;
    let law = parse_row_sum_law(args.config.get_or("row_sum_law", "poisson:3.0"))?;
    let sweeps = args.config.get_u64("sweeps", 1000)? as usize;
    let thin = args.config.get_usize("thin", 1)?;
    let sigma_x = args.config.get_f64("sigma_x", 0.5)?;
    let sigma_a = args.config.get_f64("sigma_a", 1.0)?;
    let observation = args.config.get_or("observation", "linear_gaussian").to_string();

    std::fs::create_dir_all(&args.out)?;

    let run_chain = |chain: usize| -> Result<(Vec<SweepDiagnostics>, FeatureMatrix)> {
        let prior = TruncatedBetaProcessPrior::new(alpha, k)?;
        let f = RowSumLawTable::new(law.clone(), k)?;
        let uniform = UniformObservation;
        let lg_model;
        let obs: &dyn ObservationModel = match observation.as_str() {
            "uniform" => &uniform,
            "linear_gaussian" => {
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                let x = nalgebra::DMatrix::from_row_slice(n, rows[0].len(), &flat);
                let data = LinearGaussianData::new(x, sigma_x, sigma_a)?;
                lg_model = LinearGaussianModel::new(data, k)?;
                &lg_model
            }
            other => {
                return Err(Error::Domain(format!(
                    "unknown observation model '{other}' (expected linear_gaussian or uniform)"
                )))
            }
        };
        let config = SamplerConfig {
            n_iterations: sweeps,
            thin,
            seed: args.seed.wrapping_add(chain as u64),
            ..Default::default()
        };
        let mut sampler = Sampler::new(prior, f, obs, n, config)?;
        let trace = sampler.run()?;
        Ok((trace, sampler.state.z.clone()))
    };

    let mut traces = Vec::with_capacity(args.chains);
    if args.chains <= 1 {
        traces.push(run_chain(0)?);
    } else {
        // Chains are independent; give each its own thread and seed.
        let results = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..args.chains)
                .map(|c| scope.spawn(move || run_chain(c)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect::<Vec<_>>()
        });
        for r in results {
            traces.push(r?);
        }
    }

    for (chain, (trace, z)) in traces.iter().enumerate() {
        let lines: Vec<Vec<String>> = trace.iter().map(|d| vec![d.to_csv_line()]).collect();
        write_csv(
            &args.out.join(format!("trace_chain{chain}.csv")),
            SweepDiagnostics::CSV_HEADER,
            &lines,
        )?;
        std::fs::write(args.out.join(format!("z_chain{chain}.csv")), z.to_csv())?;
    }
    for (chain, (trace, _)) in traces.iter().enumerate() {
        if let Some(last) = trace.last() {
            println!(
                "chain {chain}: final log joint {:.4}, mean row sum {:.3}, active columns {}",
                last.log_joint, last.mean_row_sum, last.n_active_columns
            );
        }
    }
    Ok(())
}

pub struct PredictArgs {
    pub data: PathBuf,
    pub query: PathBuf,
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let z = binary_matrix(&read_matrix_csv(&args.data)?, &args.data)?;
    let query_z = binary_matrix(&read_matrix_csv(&args.query)?, &args.query)?;
    let query_rows: Vec<Vec<u8>> =
        (0..query_z.n_rows()).map(|i| query_z.row(i).to_vec()).collect();
    let k = z.n_cols();
    let alpha = args.config.get_f64("alpha", 2.0)?;
    let law = parse_row_sum_law(args.config.get_or("row_sum_law", "poisson:3.0"))?;
    let t = args.config.get_usize("samples", 2000)?;
    if query_rows.iter().any(|r| r.len() != k) {
        return Err(Error::Domain(format!(
            "query rows must have {k} columns to match the conditioning matrix"
        )));
    }

    let prior = TruncatedBetaProcessPrior::new(alpha, k)?;
    let f = RowSumLawTable::new(law, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let samples = sample_weighted_posterior_pi(&z, &prior, &f, t, &mut rng)?;
    let logps = predictive_logprobs_batch(&query_rows, &samples, &f)?;
    let ess = effective_sample_size(&samples);

    std::fs::create_dir_all(&args.out)?;
    let rows: Vec<Vec<String>> = logps
        .iter()
        .enumerate()
        .map(|(i, lp)| vec![i.to_string(), lp.to_string()])
        .collect();
    write_csv(&args.out.join("predictive.csv"), "row,log_predictive", &rows)?;
    write_csv(
        &args.out.join("ess.csv"),
        "metric,value",
        &[vec!["ess".to_string(), ess.to_string()]],
    )?;
    for (i, lp) in logps.iter().enumerate() {
        println!("row {i}: log predictive {lp:.6}");
    }
    println!("effective sample size: {ess:.1} of {t}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_round_trips() {
        let dir = std::env::temp_dir().join("ribp_fitpred_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let z = FeatureMatrix::from_rows(vec![vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
        std::fs::write(&path, z.to_csv()).unwrap();
        let back = binary_matrix(&read_matrix_csv(&path).unwrap(), &path).unwrap();
        assert_eq!(back.to_csv(), z.to_csv());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn ragged_rows_report_the_line() {
        let dir = std::env::temp_dir().join("ribp_fitpred_ragged");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        std::fs::write(&path, "1,0,1\n0,1\n").unwrap();
        let err = read_matrix_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn predict_normalizes_over_exhaustive_queries() {
        // With two columns, the four possible rows must carry total
        // predictive mass one.
        let dir = std::env::temp_dir().join("ribp_fitpred_norm");
        std::fs::create_dir_all(&dir).unwrap();
        let data = dir.join("data.csv");
        let query = dir.join("query.csv");
        std::fs::write(&data, "1,0\n0,1\n1,1\n").unwrap();
        std::fs::write(&query, "0,0\n1,0\n0,1\n1,1\n").unwrap();
        let mut config = Config::default();
        config.set("alpha", "1.5");
        config.set("row_sum_law", "table:0.25,0.5,0.25");
        config.set("samples", "20000");
        let args = PredictArgs {
            data,
            query,
            config,
            seed: 11,
            out: dir.join("out"),
        };
        cmd_predict(&args).unwrap();
        let text = std::fs::read_to_string(dir.join("out/predictive.csv")).unwrap();
        let total: f64 = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "total predictive mass {total}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
