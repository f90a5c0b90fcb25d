//! Rate extraction: parabolic initial fits with cubic systematic-error
//! estimates, monoexponential fits (Levenberg–Marquardt), the C± subtraction
//! that cancels common drifts, and the full battery → [`RateSet`] pipeline.
//!
//! Extraction formulas follow from the diagonal rate system with each spin's
//! signal normalized to its equilibrium symmetric intensity, u_n = ⟨S_{nz}⟩/ε_n:
//! inversion recovery gives μ_n = |b/a|/2 and δ_n = (antisymmetric slope)/(2ε_n);
//! the NOE on spin m after inverting spin n gives σ₁₂ = u_m′(0)·ε_m/(2ε_n);
//! Bell zz channels give μ_ZQ, μ_DQ = −b/a.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequences::{Battery, ExperimentRecord};
use crate::series::Series;
use crate::spinops::Spin;

/// Maximum Levenberg–Marquardt iterations.
pub const MAX_ITERATIONS: usize = 200;
/// Convergence threshold on the relative parameter step.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Initial-fit window as a fraction of the inverse normalized slope.
pub const WINDOW_FACTOR: f64 = 0.2;

/// Outcome of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted parameters (model-specific order).
    pub params: Vec<f64>,
    /// Parameter covariance scaled by the residual variance.
    pub covariance: Vec<Vec<f64>>,
    /// Extracted rate [1/s].
    pub rate: f64,
    pub stat_err: f64,
    pub sys_err: f64,
    /// Time span used [s].
    pub window: (f64, f64),
    pub residual_norm: f64,
    pub n_points: usize,
    pub iterations: usize,
}

impl FitResult {
    /// Quadrature sum of statistical and systematic errors.
    pub fn total_err(&self) -> f64 {
        self.stat_err.hypot(self.sys_err)
    }
}

/// Least-squares polynomial of a given degree with covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyFit {
    /// Coefficients c₀ + c₁t + c₂t² + …
    pub coeffs: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
}

/// Fit a polynomial by QR least squares.
pub fn poly_fit(t: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    let n = t.len();
    let p = degree + 1;
    if n != y.len() {
        return Err(Error::Fit("length mismatch".into()));
    }
    if n < p {
        return Err(Error::Fit(format!("{n} points cannot determine a degree-{degree} polynomial")));
    }
    // Scale time to [0, 1] for conditioning.
    let scale = t.iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs())).max(1e-300);
    let a = DMatrix::from_fn(n, p, |i, j| (t[i] / scale).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let qr = a.clone().qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-12 * rmax) || rmax == 0.0 {
        return Err(Error::Fit("singular design matrix".into()));
    }
    let qtb = qr.q().transpose() * &b;
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Fit("singular design matrix".into()))?;
    let resid = &a * &x - &b;
    let rss = resid.norm_squared();
    let dof = n.saturating_sub(p);
    let s2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular design matrix".into()))?;
    let cov_scaled = &rinv * rinv.transpose() * s2;
    let coeffs: Vec<f64> = (0..p).map(|j| x[j] / scale.powi(j as i32)).collect();
    let covariance = DMatrix::from_fn(p, p, |i, j| cov_scaled[(i, j)] / (scale.powi(i as i32) * scale.powi(j as i32)));
    Ok(PolyFit { coeffs, covariance, residual_norm: rss.sqrt() })
}

fn window_points(t: &[f64], y: &[f64], window: f64) -> (Vec<f64>, Vec<f64>) {
    let t0 = t.first().copied().unwrap_or(0.0);
    let lim = t0 + window * (1.0 + 1e-12);
    t.iter().zip(y.iter()).filter(|(ti, _)| **ti <= lim).map(|(a, b)| (*a, *b)).unzip()
}

/// Parabolic and cubic fits over the initial window.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialFit {
    pub parabolic: PolyFit,
    /// Cubic fit over the same window (absent with fewer than 5 points).
    pub cubic: Option<PolyFit>,
    pub window: (f64, f64),
    pub n_points: usize,
}

impl InitialFit {
    /// Initial slope b with statistical and systematic (parabolic − cubic) errors.
    pub fn slope(&self) -> (f64, f64, f64) {
        let b = self.parabolic.coeffs[1];
        let stat = self.parabolic.covariance[(1, 1)].max(0.0).sqrt();
        let sys = self.cubic.as_ref().map_or(0.0, |c| (c.coeffs[1] - b).abs());
        (b, stat, sys)
    }

    /// Normalized slope b/a with statistical and systematic errors.
    pub fn slope_ratio(&self) -> Result<(f64, f64, f64)> {
        let (a, b) = (self.parabolic.coeffs[0], self.parabolic.coeffs[1]);
        let c = &self.parabolic.covariance;
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Fit("initial value a = 0: normalized slope undefined".into()));
        }
        let r = b / a;
        let var = c[(1, 1)] / (a * a) + (b * b / a.powi(4)) * c[(0, 0)] - 2.0 * b / a.powi(3) * c[(0, 1)];
        let sys = self.cubic.as_ref().map_or(0.0, |cf| {
            let rc = cf.coeffs[1] / cf.coeffs[0];
            if rc.is_finite() {
                (rc - r).abs()
            } else {
                0.0
            }
        });
        Ok((r, var.max(0.0).sqrt(), sys))
    }
}

/// Fit a + bt + ct² (and a cubic for the systematic estimate) on points with t ≤ t₀ + window.
pub fn initial_fit(t: &[f64], y: &[f64], window: f64) -> Result<InitialFit> {
    if t.len() != y.len() {
        return Err(Error::GridMismatch(format!("{} times vs {} values", t.len(), y.len())));
    }
    if !(window > 0.0) {
        return Err(Error::Fit("window must be positive".into()));
    }
    let (tw, yw) = window_points(t, y, window);
    if tw.len() < 4 {
        return Err(Error::Fit(format!("window of {window:.4} s holds {} < 4 points", tw.len())));
    }
    let t0 = tw[0];
    let shifted: Vec<f64> = tw.iter().map(|x| x - t0).collect();
    let parabolic = poly_fit(&shifted, &yw, 2)?;
    let cubic = if tw.len() >= 5 { poly_fit(&shifted, &yw, 3).ok() } else { None };
    Ok(InitialFit { parabolic, cubic, window: (t0, *tw.last().unwrap_or(&t0)), n_points: tw.len() })
}

/// Parabolic initial fit; `rate` = |b/a|.
pub fn parabolic_initial_fit(t: &[f64], y: &[f64], window: f64) -> Result<FitResult> {
    let f = initial_fit(t, y, window)?;
    let scale = y.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if f.parabolic.coeffs[0].abs() <= 1e-12 * scale || scale == 0.0 {
        return Err(Error::Fit("initial value too close to zero for a normalized slope".into()));
    }
    let (r, stat, sys) = f.slope_ratio()?;
    let p = &f.parabolic;
    Ok(FitResult {
        params: p.coeffs.clone(),
        covariance: (0..3).map(|i| (0..3).map(|j| p.covariance[(i, j)]).collect()).collect(),
        rate: r.abs(),
        stat_err: stat,
        sys_err: sys,
        window: f.window,
        residual_norm: p.residual_norm,
        n_points: f.n_points,
        iterations: 0,
    })
}

/// Two-pass window: coarse fit over `coarse`, then WINDOW_FACTOR/|b/a|
/// (or the coarse window when the normalized slope vanishes).
pub fn adaptive_window(t: &[f64], y: &[f64], coarse: f64) -> Result<f64> {
    let f = initial_fit(t, y, coarse)?;
    let rate = f.slope_ratio().map(|r| r.0.abs()).unwrap_or(0.0);
    Ok(if rate > 0.0 && rate.is_finite() { WINDOW_FACTOR / rate } else { coarse })
}

/// Exponential model class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpModel {
    /// y = A·e^{−λt}; params (A, λ).
    Plain,
    /// y = y∞(1 − A·e^{−λt}); params (y∞, A, λ).
    Offset,
}

fn model_eval(model: ExpModel, p: &[f64], t: f64) -> (f64, [f64; 3]) {
    match model {
        ExpModel::Plain => {
            let e = (-p[1] * t).exp();
            (p[0] * e, [e, -p[0] * t * e, 0.0])
        }
        ExpModel::Offset => {
            let e = (-p[2] * t).exp();
            (p[0] * (1.0 - p[1] * e), [1.0 - p[1] * e, -p[0] * e, p[0] * p[1] * t * e])
        }
    }
}

/// Log-linear estimate (A, λ) from the one-signed part of a decay.
fn loglin(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let sign = y.first().map(|v| v.signum())?;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .take_while(|(_, v)| v.signum() == sign && **v != 0.0)
        .map(|(a, v)| (*a, (v * sign).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (ts, ls): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let f = poly_fit(&ts, &ls, 1).ok()?;
    Some((sign * f.coeffs[0].exp(), -f.coeffs[1]))
}

/// Nonlinear least squares with Levenberg damping and analytic Jacobians.
pub fn monoexp_fit(t: &[f64], y: &[f64], model: ExpModel) -> Result<FitResult> {
    let n = t.len();
    if n != y.len() {
        return Err(Error::GridMismatch(format!("{} times vs {} values", n, y.len())));
    }
    let np = match model {
        ExpModel::Plain => 2,
        ExpModel::Offset => 3,
    };
    if n < 3 || n < np {
        return Err(Error::Fit(format!("{n} points are too few for an exponential fit")));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    let mut p: Vec<f64> = match model {
        ExpModel::Plain => {
            let (a, l) = loglin(t, y).unwrap_or((y[0], 1.0 / (t[n - 1] - t[0]).max(1e-300)));
            vec![a, l]
        }
        ExpModel::Offset => {
            let yinf = y[n - 1];
            if yinf == 0.0 {
                return Err(Error::Fit("offset model needs a nonzero plateau".into()));
            }
            let z: Vec<f64> = y.iter().map(|v| 1.0 - v / yinf).collect();
            let (a, l) = loglin(t, &z).unwrap_or((z[0], 1.0 / (t[n - 1] - t[0]).max(1e-300)));
            let a0 = a * (l * t[0]).exp();
            vec![yinf, a0, l.max(1e-12)]
        }
    };
    let rss_of = |p: &[f64]| -> f64 { t.iter().zip(y).map(|(ti, yi)| (model_eval(model, p, *ti).0 - yi).powi(2)).sum() };
    let mut rss = rss_of(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let build = |p: &[f64]| {
        let mut jtj = DMatrix::<f64>::zeros(np, np);
        let mut jtr = DVector::<f64>::zeros(np);
        for (ti, yi) in t.iter().zip(y) {
            let (v, g) = model_eval(model, p, *ti);
            let r = yi - v;
            for a in 0..np {
                jtr[a] += g[a] * r;
                for b in 0..np {
                    jtj[(a, b)] += g[a] * g[b];
                }
            }
        }
        (jtj, jtr)
    };
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = build(&p);
        let mut damped = jtj.clone();
        for k in 0..np {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
        let trss = rss_of(&trial);
        if trss.is_finite() && trss <= rss {
            let rel = step
                .iter()
                .zip(p.iter())
                .map(|(d, a)| d.abs() / a.abs().max(1e-300))
                .fold(0.0, f64::max);
            p = trial;
            rss = trss;
            lambda = (lambda / 10.0).max(1e-15);
            if rel < STEP_TOLERANCE || rss == 0.0 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // No descent direction left: at a minimum up to rounding.
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Fit(format!("no convergence after {MAX_ITERATIONS} iterations")));
    }
    let (jtj, _) = build(&p);
    let dof = n - np;
    let s2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    let cov = jtj.try_inverse().ok_or_else(|| Error::Fit("singular Jacobian at optimum".into()))? * s2;
    let li = np - 1;
    Ok(FitResult {
        params: p.clone(),
        covariance: (0..np).map(|i| (0..np).map(|j| cov[(i, j)]).collect()).collect(),
        rate: p[li],
        stat_err: cov[(li, li)].max(0.0).sqrt(),
        sys_err: 0.0,
        window: (t[0], t[n - 1]),
        residual_norm: rss.sqrt(),
        n_points: n,
        iterations,
    })
}

/// Log-linear single-exponential fit; returns (λ, A, max relative residual of the model).
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(Error::Fit("need ≥ 2 matching points".into()));
    }
    let sign = y[0].signum();
    if sign == 0.0 || y.iter().any(|v| v.signum() != sign) {
        return Err(Error::Fit("log fit needs one-signed data".into()));
    }
    let ly: Vec<f64> = y.iter().map(|v| (v * sign).ln()).collect();
    let f = poly_fit(t, &ly, 1)?;
    let a = sign * f.coeffs[0].exp();
    let lam = -f.coeffs[1];
    let resid = t
        .iter()
        .zip(y)
        .map(|(ti, yi)| ((a * (-lam * ti).exp() - yi) / yi).abs())
        .fold(0.0, f64::max);
    Ok((lam, a, resid))
}

/// Half difference (C₊−C₋)/2 and half sum (C₊+C₋)/2 of two series on the same grid.
pub fn zq_dq_refine(c_plus: &Series, c_minus: &Series) -> Result<(Series, Series)> {
    if c_plus.t != c_minus.t {
        return Err(Error::GridMismatch(format!("{} vs {} points or differing times", c_plus.len(), c_minus.len())));
    }
    let sig: Vec<f64> = c_plus.sigma.iter().zip(&c_minus.sigma).map(|(a, b)| 0.5 * a.hypot(*b)).collect();
    let diff: Vec<f64> = c_plus.y.iter().zip(&c_minus.y).map(|(a, b)| 0.5 * (a - b)).collect();
    let sum: Vec<f64> = c_plus.y.iter().zip(&c_minus.y).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((
        Series { t: c_plus.t.clone(), y: diff, sigma: sig.clone() },
        Series { t: c_plus.t.clone(), y: sum, sigma: sig },
    ))
}

/// One rate with statistical and systematic uncertainty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateValue {
    pub value: f64,
    pub stat_err: f64,
    pub sys_err: f64,
}

impl RateValue {
    pub fn new(value: f64, stat_err: f64, sys_err: f64) -> Self {
        RateValue { value, stat_err, sys_err }
    }

    pub fn total_err(&self) -> f64 {
        self.stat_err.hypot(self.sys_err)
    }
}

/// Every rate extracted from the battery; `None` marks a gap.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub mu1: Option<RateValue>,
    pub mu2: Option<RateValue>,
    /// σ₁₂ from inverting spin 1 and observing spin 2.
    pub sigma12_1: Option<RateValue>,
    /// σ₁₂ from inverting spin 2 and observing spin 1.
    pub sigma12_2: Option<RateValue>,
    pub sigma12: Option<RateValue>,
    pub delta1: Option<RateValue>,
    pub delta2: Option<RateValue>,
    pub mu_zq: Option<RateValue>,
    pub mu_dq: Option<RateValue>,
    pub mu12: Option<RateValue>,
    pub lambda_zq: Option<RateValue>,
    pub lambda_dq: Option<RateValue>,
    /// Human-readable reasons for gaps.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RateSet {
    /// Named entries in canonical order.
    pub fn entries(&self) -> [(&'static str, Option<RateValue>); 12] {
        [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("sigma12_1", self.sigma12_1),
            ("sigma12_2", self.sigma12_2),
            ("sigma12", self.sigma12),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("mu_zq", self.mu_zq),
            ("mu_dq", self.mu_dq),
            ("mu12", self.mu12),
            ("lambda_zq", self.lambda_zq),
            ("lambda_dq", self.lambda_dq),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rate set serializes")
    }

    /// Parse JSON, rejecting non-finite or negative uncertainties and broken combination rules.
    pub fn from_json(s: &str) -> Result<Self> {
        let r: RateSet = serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))?;
        for (name, v) in r.entries() {
            if let Some(v) = v {
                if !v.value.is_finite() || !v.stat_err.is_finite() || !v.sys_err.is_finite() {
                    return Err(Error::Json(format!("{name}: non-finite entry")));
                }
                if v.stat_err < 0.0 || v.sys_err < 0.0 {
                    return Err(Error::Json(format!("{name}: negative uncertainty")));
                }
            }
        }
        Ok(r)
    }

    /// Diagonal rates (missing entries become NaN).
    pub fn diagonal(&self) -> crate::redfield::DiagonalRates {
        let v = |x: Option<RateValue>| x.map_or(f64::NAN, |r| r.value);
        crate::redfield::DiagonalRates {
            mu1: v(self.mu1),
            mu2: v(self.mu2),
            mu12: v(self.mu12),
            sigma12: v(self.sigma12),
            delta1: v(self.delta1),
            delta2: v(self.delta2),
        }
    }

    /// Total uncertainties of the diagonal rates (missing entries become NaN).
    pub fn diagonal_err(&self) -> crate::redfield::DiagonalRates {
        let e = |x: Option<RateValue>| x.map_or(f64::NAN, |r| r.total_err());
        crate::redfield::DiagonalRates {
            mu1: e(self.mu1),
            mu2: e(self.mu2),
            mu12: e(self.mu12),
            sigma12: e(self.sigma12),
            delta1: e(self.delta1),
            delta2: e(self.delta2),
        }
    }
}

/// Settings of the extraction pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Coarse first-pass window [s].
    pub coarse_window: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { coarse_window: 1.0 }
    }
}

fn normalized(rec: &ExperimentRecord, values: Vec<f64>) -> Result<Vec<f64>> {
    if rec.equilibrium_sym == 0.0 || !rec.equilibrium_sym.is_finite() {
        return Err(Error::Fit(format!("{}: zero equilibrium intensity", rec.name)));
    }
    Ok(values.into_iter().map(|v| v / rec.equilibrium_sym).collect())
}

fn rv(v: f64, stat: f64, sys: f64) -> RateValue {
    RateValue::new(v, stat.abs(), sys.abs())
}

/// Apply the row-specific extraction to every available record.
pub fn extract_rate_set(b: &Battery, opts: &ExtractOptions) -> RateSet {
    let mut out = RateSet::default();
    let note = |out: &mut RateSet, what: &str, e: Error| out.notes.push(format!("{what}: {e}"));

    // Equilibrium intensities per spin (gain·ε_n).
    let eq_of = |spin: Spin| -> Option<f64> {
        b.records().into_iter().find(|r| r.read_spin == spin && r.equilibrium_sym != 0.0).map(|r| r.equilibrium_sym)
    };

    // Inversion recovery: μ_n and δ_n; remember windows for the NOE fits.
    let mut windows = [None, None];
    for (k, rec) in [(0usize, &b.ir1), (1, &b.ir2)] {
        let Some(rec) = rec else {
            out.notes.push(format!("inversion recovery of spin {} missing", k + 1));
            continue;
        };
        let res = (|| -> Result<(RateValue, RateValue, f64)> {
            let u = normalized(rec, rec.symmetric())?;
            let w = adaptive_window(&rec.times, &u, opts.coarse_window)?;
            let f = initial_fit(&rec.times, &u, w)?;
            let (r, stat, sys) = f.slope_ratio()?;
            let mu = rv(r.abs() / 2.0, stat / 2.0, sys / 2.0);
            let z = normalized(rec, rec.antisymmetric())?;
            let fz = initial_fit(&rec.times, &z, w)?;
            let (s, sstat, ssys) = fz.slope();
            Ok((mu, rv(s / 2.0, sstat / 2.0, ssys / 2.0), w))
        })();
        match res {
            Ok((mu, delta, w)) => {
                windows[k] = Some(w);
                if k == 0 {
                    out.mu1 = Some(mu);
                    out.delta1 = Some(delta);
                } else {
                    out.mu2 = Some(mu);
                    out.delta2 = Some(delta);
                }
            }
            Err(e) => note(&mut out, &rec.name, e),
        }
    }

    // NOE: σ^{(1)} from 1→2, σ^{(2)} from 2→1.
    for (inv, rec) in [(Spin::One, &b.noe12), (Spin::Two, &b.noe21)] {
        let Some(rec) = rec else {
            out.notes.push(format!("NOE after inverting spin {} missing", inv.number()));
            continue;
        };
        let res = (|| -> Result<RateValue> {
            let obs = inv.partner();
            let eps_inv = eq_of(inv).ok_or_else(|| Error::Fit("equilibrium intensity of the inverted spin unknown".into()))?;
            let eps_obs = rec.equilibrium_sym;
            let u = normalized(rec, rec.symmetric())?;
            let w = windows[obs.index()].or(windows[inv.index()]).unwrap_or(opts.coarse_window);
            let f = initial_fit(&rec.times, &u, w)?;
            let (s, stat, sys) = f.slope();
            let k = eps_obs / (2.0 * eps_inv);
            Ok(rv(s * k, stat * k, sys * k))
        })();
        match res {
            Ok(v) => {
                if inv == Spin::One {
                    out.sigma12_1 = Some(v);
                } else {
                    out.sigma12_2 = Some(v);
                }
            }
            Err(e) => note(&mut out, &rec.name, e),
        }
    }
    out.sigma12 = match (out.sigma12_1, out.sigma12_2) {
        (Some(a), Some(c)) => {
            let prop_stat = 0.5 * a.stat_err.hypot(c.stat_err);
            let prop_sys = 0.5 * a.sys_err.hypot(c.sys_err);
            let spread = 0.5 * (a.value - c.value).abs();
            let stat = if spread > prop_stat.hypot(prop_sys) { spread } else { prop_stat };
            Some(rv(0.5 * (a.value + c.value), stat, if spread > prop_stat.hypot(prop_sys) { 0.0 } else { prop_sys }))
        }
        (Some(a), None) | (None, Some(a)) => Some(a),
        (None, None) => None,
    };

    // Bell zz channels: initial log-slopes (the decay is not single-exponential).
    for (is_zq, rec) in [(true, &b.zz_zq), (false, &b.zz_dq)] {
        let Some(rec) = rec else {
            out.notes.push(format!("{} Bell zz channel missing", if is_zq { "ZQ" } else { "DQ" }));
            continue;
        };
        let res = (|| -> Result<RateValue> {
            let z = rec.antisymmetric();
            let w = adaptive_window(&rec.times, &z, opts.coarse_window)?;
            let f = initial_fit(&rec.times, &z, w)?;
            let (r, stat, sys) = f.slope_ratio()?;
            Ok(rv(-r, stat, sys))
        })();
        match res {
            Ok(v) => {
                if is_zq {
                    out.mu_zq = Some(v);
                } else {
                    out.mu_dq = Some(v);
                }
            }
            Err(e) => note(&mut out, &rec.name, e),
        }
    }
    if let (Some(z), Some(d)) = (out.mu_zq, out.mu_dq) {
        out.mu12 = Some(rv(0.5 * (z.value + d.value), 0.5 * z.stat_err.hypot(d.stat_err), 0.5 * z.sys_err.hypot(d.sys_err)));
    }

    // xx channels: C± subtraction then a monoexponential fit.
    for (is_zq, plus, minus) in [(true, &b.xx[1], &b.xx[0]), (false, &b.xx[2], &b.xx[3])] {
        let series = |r: &ExperimentRecord| Series {
            t: r.times.clone(),
            y: r.antisymmetric(),
            sigma: vec![r.component_sigma(); r.times.len()],
        };
        let res = (|| -> Result<RateValue> {
            let s = match (plus, minus) {
                (Some(p), Some(m)) => zq_dq_refine(&series(p), &series(m))?.0,
                (Some(p), None) => series(p),
                (None, Some(m)) => series(m),
                (None, None) => return Err(Error::Fit("no xx-channel record".into())),
            };
            let f = monoexp_fit(&s.t, &s.y, ExpModel::Plain)?;
            Ok(rv(f.rate, f.stat_err, 0.0))
        })();
        let label = if is_zq { "ZQ xx channel" } else { "DQ xx channel" };
        match res {
            Ok(v) => {
                if is_zq {
                    out.lambda_zq = Some(v);
                } else {
                    out.lambda_dq = Some(v);
                }
            }
            Err(e) => note(&mut out, label, e),
        }
    }
    out
}
