//! Plain-text `key=value` experiment configuration, one pair per line,
//! `#` starts a comment. Serialization writes keys sorted, so
//! parse -> serialize -> parse is the identity.

use std::collections::BTreeMap;
use std::path::Path;

use ribp::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse { line: idx + 1, msg: "empty key".into() });
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        self.parse_with(key, default, |v| v.parse().ok())
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        self.parse_with(key, default, |v| v.parse().ok())
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        self.parse_with(key, default, |v| v.parse().ok())
    }

    fn parse_with<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse(v).ok_or_else(|| {
                Error::Domain(format!("config key {key:?} has unparseable value {v:?}"))
            }),
        }
    }
}

/// The row-sum law as configured: `f=degenerate:2`, `f=poisson:1.5`,
/// `f=negbinomial:2.0,0.6`, or `f=table:0.1,0.5,0.4`.
pub fn parse_row_sum_law(spec: &str) -> Result<ribp::model::RowSumLaw> {
    use ribp::model::RowSumLaw;
    let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = || -> Result<Vec<f64>> {
        args.split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Domain(format!("bad row-sum-law argument {a:?}")))
            })
            .collect()
    };
    match kind.trim() {
        "degenerate" => {
            let s = args.trim().parse::<usize>().map_err(|_| {
                Error::Domain(format!("degenerate law needs an integer sum, got {args:?}"))
            })?;
            Ok(RowSumLaw::Degenerate(s))
        }
        "poisson" => {
            let v = nums()?;
            if v.len() != 1 {
                return Err(Error::Domain("poisson law takes one rate".into()));
            }
            Ok(RowSumLaw::Poisson(v[0]))
        }
        "negbinomial" => {
            let v = nums()?;
            if v.len() != 2 {
                return Err(Error::Domain("negbinomial law takes r,p".into()));
            }
            Ok(RowSumLaw::NegBinomial { r: v[0], p: v[1] })
        }
        "table" => Ok(RowSumLaw::Table(nums()?)),
        other => Err(Error::Domain(format!("unknown row-sum law kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let text = "# experiment\nalpha = 2.0\nk=100\nseed=7 # inline comment\n\nf=degenerate:2\n";
        let c = Config::parse(text).unwrap();
        let s1 = c.serialize();
        let c2 = Config::parse(&s1).unwrap();
        assert_eq!(c, c2);
        assert_eq!(s1, c2.serialize());
        assert_eq!(c.get("alpha"), Some("2.0"));
        assert_eq!(c.get_u64("seed", 0).unwrap(), 7);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Config::parse("a=1\nnot a pair\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn row_sum_law_specs() {
        use ribp::model::RowSumLaw;
        assert_eq!(parse_row_sum_law("degenerate:2").unwrap(), RowSumLaw::Degenerate(2));
        assert_eq!(parse_row_sum_law("poisson:1.5").unwrap(), RowSumLaw::Poisson(1.5));
        assert_eq!(
            parse_row_sum_law("negbinomial:2.0,0.6").unwrap(),
            RowSumLaw::NegBinomial { r: 2.0, p: 0.6 }
        );
        assert!(parse_row_sum_law("zipf:1").is_err());
    }
}
