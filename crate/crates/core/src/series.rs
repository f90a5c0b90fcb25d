//! Time series with per-point uncertainties and their CSV form
//! (`t_seconds,value,sigma`; the sigma column is optional on input).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CSV header written by [`Series::to_csv`].
pub const CSV_HEADER: &str = "t_seconds,value,sigma";

/// Sampled signal y(t) ± σ(t).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Series {
    /// Validate lengths, finiteness, non-negative σ and increasing non-negative times.
    pub fn new(t: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() || t.len() != sigma.len() {
            return Err(Error::param("series", "columns differ in length"));
        }
        if t.iter().chain(y.iter()).chain(sigma.iter()).any(|x| !x.is_finite()) {
            return Err(Error::param("series", "non-finite entry"));
        }
        if sigma.iter().any(|s| *s < 0.0) {
            return Err(Error::param("series", "negative sigma"));
        }
        if t.iter().any(|x| *x < 0.0) {
            return Err(Error::NegativeTime(t.iter().cloned().fold(f64::INFINITY, f64::min)));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("series", "times must be strictly increasing"));
        }
        Ok(Series { t, y, sigma })
    }

    /// Series with a uniform σ.
    pub fn uniform(t: Vec<f64>, y: Vec<f64>, sigma: f64) -> Result<Self> {
        let s = vec![sigma; t.len()];
        Series::new(t, y, s)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// y → c·y, σ → |c|·σ.
    pub fn scaled(&self, c: f64) -> Series {
        Series {
            t: self.t.clone(),
            y: self.y.iter().map(|v| c * v).collect(),
            sigma: self.sigma.iter().map(|s| c.abs() * s).collect(),
        }
    }

    /// Render as CSV with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:?},{:?},{:?}\n", self.t[i], self.y[i], self.sigma[i]));
        }
        out
    }

    /// Parse CSV: optional header, `#` comments, two or three numeric columns.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let (mut t, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let line = |r: &csv::StringRecord| r.position().map_or(i + 1, |p| p.line() as usize);
            let rec = rec.map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            let ln = line(&rec);
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if t.is_empty() && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                let header: Vec<&str> = rec.iter().collect();
                if header != ["t_seconds", "value", "sigma"] && header != ["t_seconds", "value"] {
                    return Err(Error::Parse { line: ln, msg: format!("unexpected header {header:?}") });
                }
                continue;
            }
            if rec.len() < 2 || rec.len() > 3 {
                return Err(Error::Parse { line: ln, msg: format!("expected 2 or 3 columns, got {}", rec.len()) });
            }
            let num = |k: usize| -> Result<f64> {
                let f = rec.get(k).unwrap_or("");
                let x: f64 = f.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad number `{f}`") })?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Parse { line: ln, msg: "non-finite number".into() })
                }
            };
            t.push(num(0)?);
            y.push(num(1)?);
            s.push(if rec.len() == 3 { num(2)? } else { 0.0 });
        }
        Series::new(t, y, s).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
    }
}
