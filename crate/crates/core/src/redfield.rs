//! Analytic relaxation rates of the spin pair, parameter-free ratio tests and the
//! inverse map from measured rates to microscopic fluctuation characteristics.
//!
//! Conventions: all rates in 1/s, all couplings as angular frequencies (rad/s),
//! second moments in rad²/s². The diagonal sector obeys
//! d/dt (s1z, s2z, zz) = −Γ (s1z − ε₁, s2z − ε₂, zz) with
//! Γ = [[μ₁, σ₁₂, δ₁], [σ₁₂, μ₂, δ₂], [δ₁, δ₂, μ₁₂]].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extreme-narrowing check threshold for the extraction formulas.
pub const EXTREME_NARROWING_LIMIT: f64 = 0.05;

/// Theoretical value of (μ₁+μ₂−μ₁₂)/σ₁₂.
pub const R1_THEORY: f64 = 2.8;
/// Theoretical value of (μZQ−μDQ)(ε₁+ε₂)/(δ₁ε₁+δ₂ε₂).
pub const R2_THEORY: f64 = 8.0;
/// Theoretical value of λ^d_DQ/λ^d_ZQ in extreme narrowing.
pub const R3_THEORY: f64 = 9.0 / 4.0;

/// Spectral density of the normalized correlation function C(τ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpectralDensity {
    /// C(τ) = e^{−|τ|/τ_c}: 𝒥(ω) = 2τ_c/(1+ω²τ_c²).
    Exponential { tau_c: f64 },
    /// Tabulated 𝒥(|ω|), linearly interpolated, clamped at the ends.
    Tabulated { omega: Vec<f64>, value: Vec<f64> },
}

impl SpectralDensity {
    /// Exponential-correlation model.
    pub fn exponential(tau_c: f64) -> Self {
        SpectralDensity::Exponential { tau_c }
    }

    /// Tabulated model; `omega` must be strictly increasing and non-negative.
    pub fn tabulated(omega: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if omega.is_empty() || omega.len() != value.len() {
            return Err(Error::param("spectral_table", "needs equal-length, non-empty columns"));
        }
        if omega[0] < 0.0 || omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("spectral_table", "frequencies must be non-negative and increasing"));
        }
        Ok(SpectralDensity::Tabulated { omega, value })
    }

    /// 𝒥(ω); even in ω.
    pub fn eval(&self, w: f64) -> f64 {
        let w = w.abs();
        match self {
            SpectralDensity::Exponential { tau_c } => 2.0 * tau_c / (1.0 + w * w * tau_c * tau_c),
            SpectralDensity::Tabulated { omega, value } => {
                if w <= omega[0] {
                    return value[0];
                }
                let n = omega.len();
                if w >= omega[n - 1] {
                    return value[n - 1];
                }
                let i = omega.partition_point(|&x| x <= w) - 1;
                let f = (w - omega[i]) / (omega[i + 1] - omega[i]);
                value[i] + f * (value[i + 1] - value[i])
            }
        }
    }

    /// 𝒥(0).
    pub fn j0(&self) -> f64 {
        self.eval(0.0)
    }
}

/// Slowly fluctuating z-fields from J couplings to distant spins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlowJ {
    /// ⟨(α^J_{1z})²⟩ [rad²/s²].
    pub aj1z2: f64,
    /// ⟨(α^J_{2z})²⟩ [rad²/s²].
    pub aj2z2: f64,
    /// ⟨α^J_{1z} α^J_{2z}⟩ [rad²/s²].
    pub aj12: f64,
    /// Distant-spin longitudinal relaxation time [s].
    pub t1dist: f64,
}

impl SlowJ {
    /// Zero-frequency spectral density 𝒥̃₀ = 2·T1dist of the exponential distant-spin correlation.
    pub fn j0(&self) -> f64 {
        2.0 * self.t1dist
    }

    /// ⟨(α^J_{1z} − α^J_{2z})²⟩.
    pub fn zq_second_moment(&self) -> f64 {
        self.aj1z2 + self.aj2z2 - 2.0 * self.aj12
    }

    /// ⟨(α^J_{1z} + α^J_{2z})²⟩.
    pub fn dq_second_moment(&self) -> f64 {
        self.aj1z2 + self.aj2z2 + 2.0 * self.aj12
    }
}

/// Microscopic inputs of the relaxation theory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MicroParams {
    /// Intra-pair dipolar constant k = γ₁γ₂ħ/r³ [rad/s].
    pub k: f64,
    /// Larmor angular frequency of spin 1 [rad/s].
    pub omega1: f64,
    /// Larmor angular frequency of spin 2 [rad/s].
    pub omega2: f64,
    /// Intra-pair J coupling [rad/s].
    pub omega_j: f64,
    /// Reorientation correlation time [s].
    pub tau_c: f64,
    /// ⟨|α_{1⊥}|²⟩ [rad²/s²].
    pub a1perp2: f64,
    /// ⟨|α_{2⊥}|²⟩ [rad²/s²].
    pub a2perp2: f64,
    /// ⟨α_{1z}²⟩ [rad²/s²].
    pub a1z2: f64,
    /// ⟨α_{2z}²⟩ [rad²/s²].
    pub a2z2: f64,
    /// ⟨α_{1z}α_{2z}⟩ [rad²/s²].
    pub a1z2z: f64,
    /// ⟨F₁α_{1⊥}* + F₁*α_{1⊥}⟩ [rad²/s²].
    pub xcorr1: f64,
    /// ⟨F₁α_{2⊥}* + F₁*α_{2⊥}⟩ [rad²/s²].
    pub xcorr2: f64,
    /// Slow-J field parameters.
    pub slow_j: SlowJ,
    /// Equilibrium polarization of spin 1.
    pub eps1: f64,
    /// Equilibrium polarization of spin 2.
    pub eps2: f64,
}

impl MicroParams {
    /// Exponential spectral density with this τ_c.
    pub fn spectral(&self) -> SpectralDensity {
        SpectralDensity::exponential(self.tau_c)
    }

    /// Dipolar second moments (⟨F₀²⟩, ⟨|F₁|²⟩, ⟨|F₂|²⟩).
    pub fn dipolar_moments(&self) -> (f64, f64, f64) {
        dipolar_second_moments(self.k)
    }

    /// Largest Ω·τ_c over all frequencies entering the rates.
    pub fn omega_max_tau_c(&self) -> f64 {
        (self.omega1.abs() + self.omega2.abs()) * self.tau_c
    }

    /// Check physical admissibility.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("k", self.k),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("omega_j", self.omega_j),
            ("tau_c", self.tau_c),
            ("a1perp2", self.a1perp2),
            ("a2perp2", self.a2perp2),
            ("a1z2", self.a1z2),
            ("a2z2", self.a2z2),
            ("a1z2z", self.a1z2z),
            ("xcorr1", self.xcorr1),
            ("xcorr2", self.xcorr2),
            ("aj1z2", self.slow_j.aj1z2),
            ("aj2z2", self.slow_j.aj2z2),
            ("aj12", self.slow_j.aj12),
            ("t1dist", self.slow_j.t1dist),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
        ];
        for (name, x) in finite {
            if !x.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        for (name, x) in [
            ("k", self.k),
            ("tau_c", self.tau_c),
            ("a1perp2", self.a1perp2),
            ("a2perp2", self.a2perp2),
            ("a1z2", self.a1z2),
            ("a2z2", self.a2z2),
            ("aj1z2", self.slow_j.aj1z2),
            ("aj2z2", self.slow_j.aj2z2),
            ("t1dist", self.slow_j.t1dist),
        ] {
            if x < 0.0 {
                return Err(Error::param(name, format!("must be non-negative, got {x}")));
            }
        }
        let slack = 1e-12;
        if self.a1z2z.abs() > (self.a1z2 * self.a2z2).sqrt() * (1.0 + slack) + 1e-300 {
            return Err(Error::param("a1z2z", "violates Cauchy–Schwarz |⟨α1zα2z⟩| ≤ √(⟨α1z²⟩⟨α2z²⟩)"));
        }
        if self.slow_j.aj12.abs() > (self.slow_j.aj1z2 * self.slow_j.aj2z2).sqrt() * (1.0 + slack) + 1e-300 {
            return Err(Error::param("aj12", "violates Cauchy–Schwarz"));
        }
        let report = cross_correlation_bound(self);
        if !report.spin1.pass {
            return Err(Error::param("xcorr1", format!("|xcorr1| = {:.3e} exceeds bound {:.3e}", report.spin1.lhs, report.spin1.rhs)));
        }
        if !report.spin2.pass {
            return Err(Error::param("xcorr2", format!("|xcorr2| = {:.3e} exceeds bound {:.3e}", report.spin2.lhs, report.spin2.rhs)));
        }
        Ok(())
    }
}

/// Isotropic averages (⟨F₀²⟩, ⟨|F₁|²⟩, ⟨|F₂|²⟩) = (4/5, 3/10, 3/10)·k².
pub fn dipolar_second_moments(k: f64) -> (f64, f64, f64) {
    let k2 = k * k;
    (0.8 * k2, 0.3 * k2, 0.3 * k2)
}

/// Rates of the diagonal (s1z, s2z, zz) sector [1/s].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagonalRates {
    pub mu1: f64,
    pub mu2: f64,
    pub mu12: f64,
    pub sigma12: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl DiagonalRates {
    /// Symmetric rate matrix Γ.
    pub fn gamma(&self) -> [[f64; 3]; 3] {
        [
            [self.mu1, self.sigma12, self.delta1],
            [self.sigma12, self.mu2, self.delta2],
            [self.delta1, self.delta2, self.mu12],
        ]
    }

    /// Initial zz log-decay rates (μZQ, μDQ) of zero- and double-quantum Bell PPSs.
    pub fn bell_initial_rates(&self, eps1: f64, eps2: f64) -> (f64, f64) {
        let c = 4.0 * (self.delta1 * eps1 + self.delta2 * eps2) / (eps1 + eps2);
        (self.mu12 + c, self.mu12 - c)
    }

    /// Element-wise map (used for co-scaling and error vectors).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DiagonalRates {
            mu1: f(self.mu1),
            mu2: f(self.mu2),
            mu12: f(self.mu12),
            sigma12: f(self.sigma12),
            delta1: f(self.delta1),
            delta2: f(self.delta2),
        }
    }
}

/// Decomposition of one off-diagonal eigenmode rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeRate {
    /// Intra-pair dipolar part λ^d.
    pub dipolar: f64,
    /// Local-field part λ^α.
    pub field: f64,
    /// Slow-J part λ̃^J.
    pub slow_j: f64,
}

impl ModeRate {
    /// λ^d + λ^α + λ̃^J.
    pub fn total(&self) -> f64 {
        self.dipolar + self.field + self.slow_j
    }

    /// Markovian part λ^d + λ^α.
    pub fn markovian(&self) -> f64 {
        self.dipolar + self.field
    }
}

/// Rates of the zero- and double-quantum eigenmodes 2S₁ₓS₂ₓ ± 2S₁ᵧS₂ᵧ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalRates {
    pub zq: ModeRate,
    pub dq: ModeRate,
    /// Whether `zq`/`dq` carry a genuine mechanism decomposition.
    pub decomposed: bool,
}

impl OffDiagonalRates {
    /// Rates known only as totals (e.g. measured); stored in the Markovian field slot.
    pub fn from_totals(lambda_zq: f64, lambda_dq: f64) -> Self {
        OffDiagonalRates {
            zq: ModeRate { dipolar: 0.0, field: lambda_zq, slow_j: 0.0 },
            dq: ModeRate { dipolar: 0.0, field: lambda_dq, slow_j: 0.0 },
            decomposed: false,
        }
    }

    /// Total λ_ZQ.
    pub fn lambda_zq(&self) -> f64 {
        self.zq.total()
    }

    /// Total λ_DQ.
    pub fn lambda_dq(&self) -> f64 {
        self.dq.total()
    }
}

/// Diagonal rates with the exponential spectral density.
pub fn diagonal_rates(p: &MicroParams) -> DiagonalRates {
    diagonal_rates_with(p, &p.spectral())
}

/// Diagonal rates with an arbitrary spectral density.
pub fn diagonal_rates_with(p: &MicroParams, j: &SpectralDensity) -> DiagonalRates {
    let (f0, f1, f2) = p.dipolar_moments();
    let jd = j.eval(p.omega1 - p.omega2);
    let js = j.eval(p.omega1 + p.omega2);
    let j1 = j.eval(p.omega1);
    let j2 = j.eval(p.omega2);
    let common = f0 / 16.0 * jd + f2 * js;
    let mu1 = common + f1 / 2.0 * j1 + 2.0 * p.a1perp2 * j1;
    let mu2 = common + f1 / 2.0 * j2 + 2.0 * p.a2perp2 * j2;
    let sigma12 = -f0 / 16.0 * jd + f2 * js;
    let mu12 = 0.5 * f1 * (j1 + j2) + 2.0 * p.a1perp2 * j1 + 2.0 * p.a2perp2 * j2;
    DiagonalRates { mu1, mu2, mu12, sigma12, delta1: p.xcorr1 * j1, delta2: p.xcorr2 * j2 }
}

/// Off-diagonal eigenmode rates with the exponential spectral density.
pub fn offdiagonal_rates(p: &MicroParams) -> OffDiagonalRates {
    offdiagonal_rates_with(p, &p.spectral())
}

/// Off-diagonal eigenmode rates with an arbitrary spectral density.
pub fn offdiagonal_rates_with(p: &MicroParams, j: &SpectralDensity) -> OffDiagonalRates {
    let (f0, f1, f2) = p.dipolar_moments();
    let jd = j.eval(p.omega1 - p.omega2);
    let js = j.eval(p.omega1 + p.omega2);
    let j1 = j.eval(p.omega1);
    let j2 = j.eval(p.omega2);
    let j0 = j.j0();
    let perp = p.a1perp2 * j1 + p.a2perp2 * j2;
    let zz_minus = p.a1z2 + p.a2z2 - 2.0 * p.a1z2z;
    let zz_plus = p.a1z2 + p.a2z2 + 2.0 * p.a1z2z;
    let sj = p.slow_j;
    OffDiagonalRates {
        zq: ModeRate {
            dipolar: f0 / 16.0 * jd + f1 / 4.0 * (j1 + j2),
            field: zz_minus / 2.0 * j0 + perp,
            slow_j: sj.zq_second_moment() / 2.0 * sj.j0(),
        },
        dq: ModeRate {
            dipolar: f1 / 4.0 * (j1 + j2) + f2 * js,
            field: zz_plus / 2.0 * j0 + perp,
            slow_j: sj.dq_second_moment() / 2.0 * sj.j0(),
        },
        decomposed: true,
    }
}

/// μ₁₂ = (μZQ + μDQ)/2.
pub fn mu12_from_bell_rates(mu_zq: f64, mu_dq: f64) -> f64 {
    0.5 * (mu_zq + mu_dq)
}

/// Anderson–Weiss relaxation function G(t) = exp[−∫₀ᵗ (t−t′) C̃(t′) dt′]
/// with C̃(t′) = `second_moment`·`corr(t′)` and `corr(0) = 1`, by adaptive quadrature.
pub fn anderson_weiss(t: f64, second_moment: f64, corr: &dyn Fn(f64) -> f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let f = |x: f64| (t - x) * corr(x);
    let integral = adaptive_simpson(&f, 0.0, t, 1e-13 * t * t, 48);
    Ok((-second_moment * integral).exp())
}

/// Closed form of G(t) for C̃(t′) = s·e^{−t′/T}: exp[−sT²(t/T − 1 + e^{−t/T})].
pub fn anderson_weiss_exponential(t: f64, s: f64, big_t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if big_t <= 0.0 {
        return Err(Error::param("T1dist", "must be positive"));
    }
    let x = t / big_t;
    // x − 1 + e^{−x} evaluated without cancellation for small x.
    let g = if x < 1e-3 {
        x * x / 2.0 - x * x * x / 6.0 + x.powi(4) / 24.0
    } else {
        x - 1.0 + (-x).exp()
    };
    Ok((-s * big_t * big_t * g).exp())
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    // Split into panels first so that sharply decaying correlations are resolved.
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let x0 = a + i as f64 * h;
            let x1 = x0 + h;
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            recurse(f, x0, x1, f0, fm, f1, simpson(f0, fm, f1, x0, x1), tol / panels as f64, depth)
        })
        .sum()
}

/// A value with a one-standard-deviation uncertainty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

impl Measured {
    pub fn new(value: f64, err: f64) -> Self {
        Measured { value, err }
    }

    /// Exact value (zero uncertainty).
    pub fn exact(value: f64) -> Self {
        Measured { value, err: 0.0 }
    }
}

/// One parameter-free ratio with its theoretical value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    /// `None` when the denominator vanishes (undefined ratio).
    pub value: Option<f64>,
    /// First-order propagated uncertainty.
    pub sigma: Option<f64>,
    /// Half-width of the central 68% interval from Monte Carlo resampling, when requested.
    pub sigma_mc: Option<f64>,
    pub theory: f64,
}

impl Ratio {
    fn undefined(theory: f64) -> Self {
        Ratio { value: None, sigma: None, sigma_mc: None, theory }
    }
}

/// Inputs of the parameter-free ratio tests, with one-sigma uncertainties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioInputs {
    pub diag: DiagonalRates,
    pub diag_err: DiagonalRates,
    pub offdiag: OffDiagonalRates,
    /// Uncertainties of (λ_ZQ, λ_DQ) totals.
    pub lambda_err: (f64, f64),
    pub mu_zq: Measured,
    pub mu_dq: Measured,
    pub eps1: f64,
    pub eps2: f64,
}

/// R1, R2, R3 report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    /// (μ₁+μ₂−μ₁₂)/σ₁₂, theory 2.8.
    pub r1: Ratio,
    /// (μZQ−μDQ)(ε₁+ε₂)/(δ₁ε₁+δ₂ε₂), theory 8.
    pub r2: Ratio,
    /// λ^d_DQ/λ^d_ZQ (totals when no decomposition is known), theory 9/4.
    pub r3: Ratio,
}

fn ratio_tol(x: f64, scale: f64) -> bool {
    x.abs() <= 1e-300 || x.abs() <= 1e-14 * scale
}

/// (μ₁+μ₂−μ₁₂)/σ₁₂ with linear error propagation.
pub fn r1_ratio(mu1: Measured, mu2: Measured, mu12: Measured, sigma12: Measured) -> Ratio {
    let scale = mu1.value.abs() + mu2.value.abs() + mu12.value.abs();
    if ratio_tol(sigma12.value, scale) || !sigma12.value.is_finite() {
        return Ratio::undefined(R1_THEORY);
    }
    let n = mu1.value + mu2.value - mu12.value;
    let s = sigma12.value;
    let var = (mu1.err.powi(2) + mu2.err.powi(2) + mu12.err.powi(2)) / (s * s) + (n * sigma12.err / (s * s)).powi(2);
    Ratio { value: Some(n / s), sigma: Some(var.sqrt()), sigma_mc: None, theory: R1_THEORY }
}

/// Compute R1, R2, R3. When `mc` is given, R2 additionally gets a Monte Carlo
/// uncertainty from `draws` Gaussian resamples with the given seed.
pub fn parameter_free_ratios(inp: &RatioInputs, mc: Option<(usize, u64)>) -> RatioReport {
    let r = &inp.diag;
    let e = &inp.diag_err;
    let r1 = r1_ratio(
        Measured::new(r.mu1, e.mu1),
        Measured::new(r.mu2, e.mu2),
        Measured::new(r.mu12, e.mu12),
        Measured::new(r.sigma12, e.sigma12),
    );

    let r2_of = |mzq: f64, mdq: f64, d1: f64, d2: f64| -> Option<f64> {
        let den = d1 * inp.eps1 + d2 * inp.eps2;
        let scale = (d1 * inp.eps1).abs() + (d2 * inp.eps2).abs();
        if ratio_tol(den, scale) || !den.is_finite() {
            None
        } else {
            Some((mzq - mdq) * (inp.eps1 + inp.eps2) / den)
        }
    };
    let r2 = match r2_of(inp.mu_zq.value, inp.mu_dq.value, r.delta1, r.delta2) {
        None => Ratio::undefined(R2_THEORY),
        Some(v) => {
            let den = r.delta1 * inp.eps1 + r.delta2 * inp.eps2;
            let num = inp.mu_zq.value - inp.mu_dq.value;
            let es = inp.eps1 + inp.eps2;
            let var = (es / den).powi(2) * (inp.mu_zq.err.powi(2) + inp.mu_dq.err.powi(2))
                + (num * es / (den * den)).powi(2) * ((inp.eps1 * e.delta1).powi(2) + (inp.eps2 * e.delta2).powi(2));
            let sigma_mc = mc.map(|(draws, seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut samples: Vec<f64> = Vec::with_capacity(draws);
                for _ in 0..draws {
                    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
                    let s = r2_of(
                        inp.mu_zq.value + inp.mu_zq.err * g(),
                        inp.mu_dq.value + inp.mu_dq.err * g(),
                        r.delta1 + e.delta1 * g(),
                        r.delta2 + e.delta2 * g(),
                    );
                    if let Some(s) = s {
                        samples.push(s);
                    }
                }
                samples.sort_by(f64::total_cmp);
                let q = |p: f64| samples[((samples.len() - 1) as f64 * p).round() as usize];
                0.5 * (q(0.8413) - q(0.1587))
            });
            Ratio { value: Some(v), sigma: Some(var.sqrt()), sigma_mc, theory: R2_THEORY }
        }
    };

    let o = &inp.offdiag;
    let (zq, dq, ezq, edq) = if o.decomposed {
        (o.zq.dipolar, o.dq.dipolar, 0.0, 0.0)
    } else {
        (o.lambda_zq(), o.lambda_dq(), inp.lambda_err.0, inp.lambda_err.1)
    };
    let r3 = if ratio_tol(zq, dq.abs()) {
        Ratio::undefined(R3_THEORY)
    } else {
        let v = dq / zq;
        let sigma = ((edq / zq).powi(2) + (dq * ezq / (zq * zq)).powi(2)).sqrt();
        Ratio { value: Some(v), sigma: Some(sigma), sigma_mc: None, theory: R3_THEORY }
    };
    RatioReport { r1, r2, r3 }
}

/// Microscopic characteristics (each multiplied by 𝒥₀) recovered from measured rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroExtraction {
    /// k²𝒥₀ = 4σ₁₂.
    pub k2_j0: Measured,
    /// ⟨|α_{1⊥}|²⟩𝒥₀ = μ₁/2 − σ₁₂.
    pub a1perp2_j0: Measured,
    /// ⟨|α_{2⊥}|²⟩𝒥₀ = μ₂/2 − σ₁₂.
    pub a2perp2_j0: Measured,
    /// ⟨(α_{1z}+α_{2z})²⟩𝒥₀.
    pub az_plus_sq_j0: Measured,
    /// ⟨(α_{1z}−α_{2z})²⟩𝒥₀.
    pub az_minus_sq_j0: Measured,
    /// [⟨α_{1z}²⟩+⟨α_{2z}²⟩]𝒥₀ = λ_DQ+λ_ZQ−μ₁−μ₂+(7/5)σ₁₂.
    pub az_sum_j0: Measured,
    /// ⟨α_{1z}α_{2z}⟩𝒥₀ = (λ_DQ−λ_ZQ−σ₁₂)/2.
    pub a1z2z_j0: Measured,
    /// ⟨F₁α_{1⊥}* + c.c.⟩𝒥₀ ≈ δ₁.
    pub xcorr1_j0: Measured,
    /// ⟨F₁α_{2⊥}* + c.c.⟩𝒥₀ ≈ δ₂.
    pub xcorr2_j0: Measured,
    /// Non-fatal model-consistency warnings.
    pub warnings: Vec<String>,
}

/// Invert the extreme-narrowing rate formulas. `lambda_err` are the
/// uncertainties of (λ_ZQ, λ_DQ); `omega_max_tau_c`, when known, triggers a
/// warning outside extreme narrowing.
pub fn extract_micro_from_rates(
    r: &DiagonalRates,
    r_err: &DiagonalRates,
    o: &OffDiagonalRates,
    lambda_err: (f64, f64),
    omega_max_tau_c: Option<f64>,
) -> Result<MicroExtraction> {
    let inputs = [r.mu1, r.mu2, r.sigma12, o.lambda_zq(), o.lambda_dq(), r.delta1, r.delta2];
    if inputs.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("rates", "must be finite"));
    }
    if r.sigma12 <= 0.0 {
        return Err(Error::param("sigma12", "extraction requires σ₁₂ > 0"));
    }
    // Gradient-based linear propagation over (μ₁, μ₂, σ₁₂, λ_ZQ, λ_DQ).
    let errs = [r_err.mu1, r_err.mu2, r_err.sigma12, lambda_err.0, lambda_err.1];
    let vals = [r.mu1, r.mu2, r.sigma12, o.lambda_zq(), o.lambda_dq()];
    let lin = |g: [f64; 5]| {
        let value: f64 = g.iter().zip(vals.iter()).map(|(a, b)| a * b).sum();
        let var: f64 = g.iter().zip(errs.iter()).map(|(a, b)| (a * b).powi(2)).sum();
        Measured::new(value, var.sqrt())
    };
    let k2_j0 = lin([0.0, 0.0, 4.0, 0.0, 0.0]);
    let a1 = lin([0.5, 0.0, -1.0, 0.0, 0.0]);
    let a2 = lin([0.0, 0.5, -1.0, 0.0, 0.0]);
    let plus = lin([-1.0, -1.0, 0.4, 0.0, 2.0]);
    let minus = lin([-1.0, -1.0, 2.4, 2.0, 0.0]);
    let sum = lin([-1.0, -1.0, 1.4, 1.0, 1.0]);
    let cross = lin([0.0, 0.0, -0.5, -0.5, 0.5]);

    let mut warnings = Vec::new();
    if let Some(x) = omega_max_tau_c {
        if x > EXTREME_NARROWING_LIMIT {
            warnings.push(format!(
                "Ω_max·τ_c = {x:.3} exceeds {EXTREME_NARROWING_LIMIT}: extraction formulas assume extreme narrowing"
            ));
        }
    }
    for (name, m) in [
        ("<|a1perp|^2>J0", a1),
        ("<|a2perp|^2>J0", a2),
        ("<(a1z+a2z)^2>J0", plus),
        ("<(a1z-a2z)^2>J0", minus),
        ("[<a1z^2>+<a2z^2>]J0", sum),
    ] {
        if m.value < 0.0 {
            warnings.push(format!("{name} = {:.4} is negative: rates inconsistent with the model", m.value));
        }
    }
    if cross.value.abs() > 0.5 * sum.value.max(0.0) + 1e-15 {
        warnings.push("|<a1z a2z>| exceeds (<a1z^2>+<a2z^2>)/2: rates inconsistent with the model".to_string());
    }
    Ok(MicroExtraction {
        k2_j0,
        a1perp2_j0: a1,
        a2perp2_j0: a2,
        az_plus_sq_j0: plus,
        az_minus_sq_j0: minus,
        az_sum_j0: sum,
        a1z2z_j0: cross,
        xcorr1_j0: Measured::new(r.delta1, r_err.delta1),
        xcorr2_j0: Measured::new(r.delta2, r_err.delta2),
        warnings,
    })
}

/// One side of the cross-correlation inequality |xcorr| ≤ 2√(⟨|F₁|²⟩⟨|α⊥|²⟩).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Cross-correlation inequality for both spins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub spin1: BoundCheck,
    pub spin2: BoundCheck,
}

/// Check the inequality given raw moments (any common factor such as 𝒥₀ cancels).
pub fn cross_correlation_bound_moments(f1_sq: f64, a1perp2: f64, a2perp2: f64, xcorr1: f64, xcorr2: f64) -> BoundReport {
    let check = |x: f64, a: f64| {
        let rhs = 2.0 * (f1_sq.max(0.0) * a.max(0.0)).sqrt();
        let lhs = x.abs();
        BoundCheck { lhs, rhs, pass: lhs <= rhs * (1.0 + 1e-12) }
    };
    BoundReport { spin1: check(xcorr1, a1perp2), spin2: check(xcorr2, a2perp2) }
}

/// Check the inequality for a parameter set.
pub fn cross_correlation_bound(p: &MicroParams) -> BoundReport {
    let (_, f1, _) = p.dipolar_moments();
    cross_correlation_bound_moments(f1, p.a1perp2, p.a2perp2, p.xcorr1, p.xcorr2)
}
