//! Run configuration: a sectioned `key = value unit` text format.
//!
//! ```text
//! # comment
//! [micro]
//! tau_c = 39 ps
//! omega_j = 138 Hz        # converted to rad/s
//! ```
//!
//! Every physical quantity carries a unit and is stored in SI (s, rad/s, 1/s,
//! rad²/s², T, K). Frequencies given in Hz/kHz/MHz are converted to rad/s.
//! Unknown sections or keys and missing required keys are errors. The
//! canonical serialization writes SI units with shortest round-trip floats,
//! so parse → serialize → parse is the identity.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use bellrelax::spinops::BellStateId;

use crate::CliError;

/// Physical dimension of a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Seconds.
    Time,
    /// rad/s; accepts Hz, kHz, MHz.
    AngularFrequency,
    /// 1/s.
    Rate,
    /// rad²/s² (second moment of a fluctuating field).
    Moment,
    /// Tesla.
    Field,
    /// Kelvin.
    Temperature,
    /// Plain number without unit.
    Dimensionless,
    /// Non-negative integer.
    Count,
    /// Bell-state token.
    Bell,
    /// One of a fixed set of words.
    Choice(&'static [&'static str]),
}

impl Kind {
    fn canonical_unit(self) -> &'static str {
        match self {
            Kind::Time => "s",
            Kind::AngularFrequency => "rad/s",
            Kind::Rate => "1/s",
            Kind::Moment => "rad^2/s^2",
            Kind::Field => "T",
            Kind::Temperature => "K",
            Kind::Dimensionless | Kind::Count | Kind::Bell | Kind::Choice(_) => "",
        }
    }

    /// Multiplier from `unit` to SI, if the unit fits this kind.
    fn factor(self, unit: &str) -> Option<f64> {
        match (self, unit) {
            (Kind::Time, "s") => Some(1.0),
            (Kind::Time, "ms") => Some(1e-3),
            (Kind::Time, "us" | "µs") => Some(1e-6),
            (Kind::Time, "ns") => Some(1e-9),
            (Kind::Time, "ps") => Some(1e-12),
            (Kind::AngularFrequency, "rad/s") => Some(1.0),
            (Kind::AngularFrequency, "Hz") => Some(2.0 * PI),
            (Kind::AngularFrequency, "kHz") => Some(2.0 * PI * 1e3),
            (Kind::AngularFrequency, "MHz") => Some(2.0 * PI * 1e6),
            (Kind::Rate, "1/s" | "s^-1") => Some(1.0),
            (Kind::Moment, "rad^2/s^2") => Some(1.0),
            (Kind::Field, "T") => Some(1.0),
            (Kind::Field, "mT") => Some(1e-3),
            (Kind::Temperature, "K") => Some(1.0),
            (Kind::Dimensionless, "") => Some(1.0),
            _ => None,
        }
    }
}

/// (section, key, kind, description).
pub const SCHEMA: &[(&str, &str, Kind, &str)] = &[
    ("run", "seed", Kind::Count, "master seed for noise, oracles and tomography"),
    ("sample", "field", Kind::Field, "static field B; sets Larmor frequencies and polarizations"),
    ("sample", "temperature", Kind::Temperature, "sample temperature for the polarizations"),
    ("sample", "eps1", Kind::Dimensionless, "equilibrium polarization of spin 1 (overrides B/T)"),
    ("sample", "eps2", Kind::Dimensionless, "equilibrium polarization of spin 2 (overrides B/T)"),
    ("micro", "k", Kind::AngularFrequency, "intra-pair dipolar constant"),
    ("micro", "tau_c", Kind::Time, "reorientation correlation time"),
    ("micro", "omega1", Kind::AngularFrequency, "Larmor frequency of spin 1 (default γ₁B)"),
    ("micro", "omega2", Kind::AngularFrequency, "Larmor frequency of spin 2 (default γ₂B)"),
    ("micro", "omega_j", Kind::AngularFrequency, "intra-pair J coupling"),
    ("micro", "a1perp2", Kind::Moment, "⟨|α₁⊥|²⟩"),
    ("micro", "a2perp2", Kind::Moment, "⟨|α₂⊥|²⟩"),
    ("micro", "a1z2", Kind::Moment, "⟨α₁z²⟩"),
    ("micro", "a2z2", Kind::Moment, "⟨α₂z²⟩"),
    ("micro", "a1z2z", Kind::Moment, "⟨α₁zα₂z⟩"),
    ("micro", "xcorr1", Kind::Moment, "⟨F₁α₁⊥* + c.c.⟩"),
    ("micro", "xcorr2", Kind::Moment, "⟨F₁α₂⊥* + c.c.⟩"),
    ("slow_j", "aj1z2", Kind::Moment, "⟨(α^J₁z)²⟩"),
    ("slow_j", "aj2z2", Kind::Moment, "⟨(α^J₂z)²⟩"),
    ("slow_j", "aj12", Kind::Moment, "⟨α^J₁z α^J₂z⟩"),
    ("slow_j", "t1dist", Kind::Time, "distant-spin T1"),
    ("rates", "mu1", Kind::Rate, "generator μ₁"),
    ("rates", "mu2", Kind::Rate, "generator μ₂"),
    ("rates", "mu12", Kind::Rate, "generator μ₁₂ (or give mu_zq and mu_dq)"),
    ("rates", "mu_zq", Kind::Rate, "generator μ_ZQ"),
    ("rates", "mu_dq", Kind::Rate, "generator μ_DQ"),
    ("rates", "sigma12", Kind::Rate, "generator σ₁₂"),
    ("rates", "delta1", Kind::Rate, "generator δ₁"),
    ("rates", "delta2", Kind::Rate, "generator δ₂"),
    ("rates", "lambda_zq", Kind::Rate, "generator λ_ZQ"),
    ("rates", "lambda_dq", Kind::Rate, "generator λ_DQ"),
    ("grid", "t_max", Kind::Time, "last sample time"),
    ("grid", "dt", Kind::Time, "sample spacing"),
    ("grid", "cpmg_tau", Kind::Time, "CPMG half-spacing of the xx channel"),
    ("simulate", "experiments", Kind::Choice(&["battery", "bell"]), "full rate battery or the eight Bell curves"),
    ("noise", "sigma", Kind::Dimensionless, "Gaussian σ per peak, relative to gain·min(ε₁, ε₂)"),
    ("fit", "coarse_window", Kind::Time, "first-pass initial-slope window"),
    ("oracle", "ensemble", Kind::Count, "Monte Carlo ensemble size"),
    ("oracle", "dt", Kind::Time, "integrator step (default min(τ_c/50, 0.02/(Ω₁+Ω₂)))"),
    ("oracle", "t_first", Kind::Time, "start of the rate window"),
    ("oracle", "t_last", Kind::Time, "end of the rate window"),
    ("oracle", "batches", Kind::Count, "jackknife batches"),
    ("telegraph", "spins", Kind::Count, "number of distant spins"),
    ("telegraph", "j1", Kind::AngularFrequency, "J coupling of each distant spin to spin 1"),
    ("telegraph", "j2", Kind::AngularFrequency, "J coupling of each distant spin to spin 2"),
    ("telegraph", "t1dist", Kind::Time, "distant-spin T1"),
    ("telegraph", "t_max", Kind::Time, "last sample time"),
    ("telegraph", "points", Kind::Count, "number of sample times"),
    ("telegraph", "ensemble", Kind::Count, "number of telegraph histories"),
    ("tomography", "target", Kind::Bell, "Bell state to prepare"),
    ("tomography", "noise", Kind::Dimensionless, "Gaussian σ per detected peak, relative to gain·min(ε₁, ε₂)"),
    ("tomography", "gain", Kind::Dimensionless, "receiver gain g (default 1)"),
];

/// A parsed value in SI units.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Number(f64),
    Count(u64),
    Bell(BellStateId),
    Text(String),
}

/// Validated configuration keyed by `section.key`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
}

fn lookup(section: &str, key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(s, k, _, _)| *s == section && *k == key).map(|e| e.2)
}

fn config_err(line: usize, key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config { key: key.to_string(), msg: format!("line {line}: {}", msg.into()) }
}

impl RunConfig {
    /// Parse the text format.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut section: Option<String> = None;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(ln, line, "unterminated section header"))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _, _, _)| *s == name) {
                    return Err(config_err(ln, name, "unknown section"));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, rhs) = line.split_once('=').ok_or_else(|| config_err(ln, line, "expected `key = value [unit]`"))?;
            let key = key.trim();
            let sec = section.as_deref().ok_or_else(|| config_err(ln, key, "key outside of any section"))?;
            let path = format!("{sec}.{key}");
            let kind = lookup(sec, key).ok_or_else(|| config_err(ln, &path, "unknown key"))?;
            if values.contains_key(&path) {
                return Err(config_err(ln, &path, "duplicate key"));
            }
            values.insert(path.clone(), parse_value(rhs.trim(), kind).map_err(|m| config_err(ln, &path, m))?);
        }
        Ok(RunConfig { values })
    }

    /// Canonical text with SI units, in schema order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (sec, key, kind, _) in SCHEMA {
            let path = format!("{sec}.{key}");
            let Some(v) = self.values.get(&path) else { continue };
            if *sec != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{sec}]\n"));
                current = sec;
            }
            let text = match v {
                Value::Number(x) if kind.canonical_unit().is_empty() => format!("{x:?}"),
                Value::Number(x) => format!("{x:?} {}", kind.canonical_unit()),
                Value::Count(n) => n.to_string(),
                Value::Bell(b) => b.name().to_string(),
                Value::Text(t) => t.clone(),
            };
            out.push_str(&format!("{key} = {text}\n"));
        }
        out
    }

    pub fn get(&self, path: &str) -> Option<&Value> {
        self.values.get(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.values.contains_key(path)
    }

    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.values.keys().any(|k| k.starts_with(&prefix))
    }

    /// Numeric value in SI units.
    pub fn number(&self, path: &str) -> Option<f64> {
        match self.values.get(path) {
            Some(Value::Number(x)) => Some(*x),
            _ => None,
        }
    }

    /// Required numeric value.
    pub fn require(&self, path: &str) -> Result<f64, CliError> {
        self.number(path).ok_or_else(|| CliError::Config { key: path.to_string(), msg: "missing required key".into() })
    }

    pub fn number_or(&self, path: &str, default: f64) -> f64 {
        self.number(path).unwrap_or(default)
    }

    pub fn count(&self, path: &str) -> Option<u64> {
        match self.values.get(path) {
            Some(Value::Count(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn text(&self, path: &str) -> Option<&str> {
        match self.values.get(path) {
            Some(Value::Text(t)) => Some(t),
            _ => None,
        }
    }

    pub fn bell(&self, path: &str) -> Option<BellStateId> {
        match self.values.get(path) {
            Some(Value::Bell(b)) => Some(*b),
            _ => None,
        }
    }

    /// Set a value, checking it against the schema.
    pub fn set(&mut self, path: &str, value: Value) -> Result<(), CliError> {
        let (sec, key) = path
            .split_once('.')
            .ok_or_else(|| CliError::Config { key: path.into(), msg: "expected section.key".into() })?;
        let kind = lookup(sec, key).ok_or_else(|| CliError::Config { key: path.into(), msg: "unknown key".into() })?;
        let ok = match (&value, kind) {
            (Value::Count(_), Kind::Count) | (Value::Bell(_), Kind::Bell) => true,
            (Value::Text(t), Kind::Choice(opts)) => opts.contains(&t.as_str()),
            (Value::Number(x), k) => x.is_finite() && !matches!(k, Kind::Count | Kind::Bell | Kind::Choice(_)),
            _ => false,
        };
        if !ok {
            return Err(CliError::Config { key: path.into(), msg: "value does not match the key's kind".into() });
        }
        self.values.insert(path.to_string(), value);
        Ok(())
    }

    /// Master seed (0 when absent).
    pub fn seed(&self) -> u64 {
        self.count("run.seed").unwrap_or(0)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn parse_value(rhs: &str, kind: Kind) -> Result<Value, String> {
    match kind {
        Kind::Bell => BellStateId::parse(rhs).map(Value::Bell).ok_or_else(|| format!("unknown Bell state `{rhs}`")),
        Kind::Choice(opts) => {
            if opts.contains(&rhs) {
                Ok(Value::Text(rhs.to_string()))
            } else {
                Err(format!("expected one of {}, got `{rhs}`", opts.join(", ")))
            }
        }
        Kind::Count => rhs.parse::<u64>().map(Value::Count).map_err(|_| format!("expected a non-negative integer, got `{rhs}`")),
        _ => {
            let mut parts = rhs.split_whitespace();
            let num = parts.next().ok_or("missing value")?;
            let unit = parts.next().unwrap_or("");
            if parts.next().is_some() {
                return Err(format!("trailing text after unit in `{rhs}`"));
            }
            let x: f64 = num.parse().map_err(|_| format!("`{num}` is not a number"))?;
            if !x.is_finite() {
                return Err("value must be finite".into());
            }
            if unit.is_empty() && kind != Kind::Dimensionless {
                return Err(format!("missing unit (expected e.g. `{}`)", kind.canonical_unit()));
            }
            let f = kind.factor(unit).ok_or_else(|| format!("unit `{unit}` does not fit a {kind:?} quantity"))?;
            let si = x * f;
            if !si.is_finite() {
                return Err(format!("`{num} {unit}` overflows in SI units"));
            }
            Ok(Value::Number(si))
        }
    }
}
