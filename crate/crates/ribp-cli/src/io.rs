//! Output plumbing: CSV tables, P2 (ASCII) PGM rasters, left-ordered-form
//! rendering for display, and the corpus reader.
//!
//! CSV headers used by the commands (stable schema):
//! - traces: `iteration,log_joint,accept_rate_pi,accept_rate_row,mean_row_sum,n_active_columns`
//! - reports: `check,value_a,value_b,pass`
//! - predictives: `row,log_predictive`
//! - classification: `n,correct_at_n_ribp,correct_at_n_ibp`

use std::fmt::Write as _;
use std::path::Path;

use ribp::model::FeatureMatrix;
use ribp::{Error, Result};

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// ASCII (P2) grayscale raster; `pixels` in row-major order, values in
/// `0..=max_val`.
pub fn write_pgm(path: &Path, width: usize, height: usize, max_val: u16, pixels: &[u16]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Domain(format!(
            "PGM needs {} pixels, got {}",
            width * height,
            pixels.len()
        )));
    }
    let mut text = format!("P2\n{width} {height}\n{max_val}\n");
    for row in pixels.chunks(width) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        writeln!(text, "{}", line.join(" ")).expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Rescale real-valued image data into `0..=255` for PGM output.
pub fn to_gray(values: &[f64]) -> Vec<u16> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    values
        .iter()
        .map(|&v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u16)
        .collect()
}

/// Left-ordered form: columns sorted by their binary history word (first
/// row most significant), descending; all-zero columns last. Display only.
pub fn left_ordered_form(z: &FeatureMatrix) -> FeatureMatrix {
    let n = z.n_rows();
    let k = z.n_cols();
    let mut order: Vec<usize> = (0..k).collect();
    let col_word = |col: usize| -> Vec<u8> { (0..n).map(|i| z.get(i, col)).collect() };
    order.sort_by(|&a, &b| col_word(b).cmp(&col_word(a)));
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|i| order.iter().map(|&c| z.get(i, c)).collect())
        .collect();
    FeatureMatrix::from_rows(rows).expect("permuted rows stay binary")
}

/// One document per line: `label token token ...` where tokens are
/// 0-based vocabulary indices (word presence; duplicates collapse).
#[derive(Debug, Clone)]
pub struct Corpus {
    pub rows: Vec<Vec<u8>>,
    pub labels: Vec<usize>,
    pub vocab: usize,
}

pub fn parse_corpus(text: &str, vocab: usize) -> Result<Corpus> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::Parse { line: idx + 1, msg: "bad label".into() })?;
        let mut row = vec![0u8; vocab];
        for tok in parts {
            let t: usize = tok.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("bad token id {tok:?}"),
            })?;
            if t >= vocab {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("token id {t} exceeds vocabulary {vocab}"),
                });
            }
            row[t] = 1;
        }
        rows.push(row);
        labels.push(label);
    }
    Ok(Corpus { rows, labels, vocab })
}

pub fn corpus_to_text(corpus: &Corpus) -> String {
    let mut out = String::new();
    for (row, label) in corpus.rows.iter().zip(&corpus.labels) {
        out.push_str(&label.to_string());
        for (t, &b) in row.iter().enumerate() {
            if b == 1 {
                write!(out, " {t}").expect("string write");
            }
        }
        out.push('\n');
    }
    out
}
