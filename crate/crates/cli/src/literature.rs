//! Literature rate tables for the R1 = (μ₁+μ₂−μ₁₂)/σ₁₂ test.
//!
//! CSV columns: `label,mu1,mu1_err,mu2,mu2_err,mu12,mu12_err,sigma12,sigma12_err,published,published_err`
//! (rates in 1/s; empty error cells mean "not quoted"; `published*` optional).
//! Lines starting with `#` are comments.

use serde::{Deserialize, Serialize};

use bellrelax::redfield::{r1_ratio, Measured, R1_THEORY};

use crate::CliError;

/// Published ¹³C–¹H and ¹H–¹H rate sets with their quoted R1.
pub const TABLE_IV: &str = "\
# Published longitudinal rates and the quoted (mu1+mu2-mu12)/sigma12.
label,mu1,mu1_err,mu2,mu2_err,mu12,mu12_err,sigma12,sigma12_err,published,published_err
methyl formate 4.7T tm=15s,0.0275,0.0006,0.0446,0.0008,0.0415,0.0004,0.0107,0.0004,2.86,0.15
methyl formate 4.7T tm=30s,0.0270,0.0005,0.0438,0.0008,0.0411,0.0003,0.0107,0.0003,2.78,0.12
methyl formate 9.4T tm=15s,0.0310,0.0011,0.0439,0.0013,0.0448,0.0006,0.0098,0.0006,3.1,0.3
methyl formate 9.4T tm=30s,0.0313,0.0009,0.0446,0.0013,0.0447,0.0006,0.0101,0.0006,3.2,0.3
chloroform 4.7T tm=1s,0.463,0.005,0.411,0.005,0.288,0.002,0.192,0.003,3.05,0.06
chloroform 4.7T tm=3s,0.455,0.004,0.411,0.004,0.292,0.001,0.199,0.003,2.88,0.05
chloroform 9.4T tm=1s,0.469,0.016,0.443,0.016,0.322,0.007,0.207,0.008,2.85,0.16
chloroform 9.4T tm=3s,0.477,0.016,0.437,0.014,0.316,0.004,0.212,0.010,2.82,0.17
cis-chloroacrylic acid without Ni2+,0.109,0.007,0.116,0.008,0.091,0.003,0.046,0.004,2.9,0.3
cis-chloroacrylic acid with Ni2+,0.442,0.013,0.286,0.009,0.469,0.006,0.051,0.006,5.1,0.7
chloroform free (sigma12 = mu1/2 deduced),0.09,,0.11,,0.050,0.004,0.045,,3.33,0.09
chloroform in cryptophane-D,3.6,,2.8,,4.0,1.0,1.2,0.1,2.0,0.8
";

/// One input row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiteratureRow {
    pub label: String,
    pub mu1: f64,
    #[serde(default)]
    pub mu1_err: Option<f64>,
    pub mu2: f64,
    #[serde(default)]
    pub mu2_err: Option<f64>,
    pub mu12: f64,
    #[serde(default)]
    pub mu12_err: Option<f64>,
    pub sigma12: f64,
    #[serde(default)]
    pub sigma12_err: Option<f64>,
    #[serde(default)]
    pub published: Option<f64>,
    #[serde(default)]
    pub published_err: Option<f64>,
}

/// R1 of one row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub label: String,
    pub r1: f64,
    /// First-order propagated uncertainty.
    pub sigma: f64,
    pub published: Option<f64>,
    pub published_err: Option<f64>,
    /// Tolerance used for the flag: the quoted uncertainty, else `sigma`.
    pub tolerance: f64,
    /// |R1 − 2.8| exceeds `tolerance`.
    pub flagged: bool,
}

/// Table evaluation: computed rows plus notices for skipped ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub theory: f64,
    pub rows: Vec<RatioRow>,
    pub notices: Vec<String>,
}

/// Parse the literature CSV format.
pub fn parse_literature(text: &str) -> Result<Vec<LiteratureRow>, CliError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rd.deserialize::<LiteratureRow>().enumerate() {
        let row = rec.map_err(|e| CliError::Input(format!("literature row {}: {e}", i + 1)))?;
        let values = [row.mu1, row.mu2, row.mu12, row.sigma12];
        let errs = [row.mu1_err, row.mu2_err, row.mu12_err, row.sigma12_err, row.published_err];
        if values.iter().chain(row.published.iter()).any(|x| !x.is_finite())
            || errs.iter().flatten().any(|e| !e.is_finite() || *e < 0.0)
        {
            return Err(CliError::Input(format!("literature row {} ({}): non-finite value or negative error", i + 1, row.label)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input("literature table has no rows".into()));
    }
    Ok(rows)
}

/// Evaluate R1 for every row; rows with σ₁₂ = 0 are skipped with a notice.
pub fn evaluate(rows: &[LiteratureRow]) -> RatioTable {
    let mut table = RatioTable { theory: R1_THEORY, ..Default::default() };
    for row in rows {
        let m = |v: f64, e: Option<f64>| Measured::new(v, e.unwrap_or(0.0));
        let r = r1_ratio(m(row.mu1, row.mu1_err), m(row.mu2, row.mu2_err), m(row.mu12, row.mu12_err), m(row.sigma12, row.sigma12_err));
        let (Some(r1), Some(sigma)) = (r.value, r.sigma) else {
            table.notices.push(format!("{}: sigma12 = 0, ratio undefined; row skipped", row.label));
            continue;
        };
        let tolerance = row.published_err.unwrap_or(sigma);
        table.rows.push(RatioRow {
            label: row.label.clone(),
            r1,
            sigma,
            published: row.published,
            published_err: row.published_err,
            tolerance,
            flagged: (r1 - R1_THEORY).abs() > tolerance,
        });
    }
    table
}

impl RatioTable {
    /// CSV body (without manifest header).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "r1", "r1_sigma", "published", "published_err", "tolerance", "flagged"]).expect("in-memory write");
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:?}"));
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                format!("{:?}", r.r1),
                format!("{:?}", r.sigma),
                opt(r.published),
                opt(r.published_err),
                format!("{:?}", r.tolerance),
                r.flagged.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 CSV")
    }
}
