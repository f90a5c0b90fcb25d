//! Stochastic-Liouville Monte Carlo.
//!
//! Each ensemble member carries an internuclear unit vector undergoing
//! isotropic rotational diffusion (D = 1/(6τ_c), per-step rotation variance
//! calibrated so the rank-2 harmonics decay exactly as e^{−dt/τ_c} per step),
//! complex transverse fields α_{n⊥} = c_n F₁ + η_n with Ornstein–Uhlenbeck η_n,
//! and correlated real Ornstein–Uhlenbeck fields α_{nz}. The propagator obeys
//! dU/dt = −iH(t)U in the double-rotating frame, with the oscillating phases
//! e^{iΩt} evaluated exactly and fields linearly interpolated inside each
//! classical RK4 step. The scalar coupling ω_J is omitted: it commutes with the
//! diagonal sector and only rotates ZQ/DQ coherences within their own x/y pairs.
//!
//! Rates come from the ensemble-averaged transfer matrices
//! T_{ml}(t) = ⟨Tr{P_m U(t) P_l U(t)†}⟩ at two times t₁ < t₂ (the early
//! transient cancels in T(t₂)T(t₁)⁻¹), with jackknife errors over batches.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{batch_ranges, deterministic_sum, OracleReport, RateComparison};
use crate::dynamics::jacobi_eigen3;
use crate::error::{Error, Result};
use crate::redfield::{diagonal_rates, offdiagonal_rates, DiagonalRates, MicroParams};
use crate::spinops::{index as ix, product_basis, DensityMatrix, Mat4, C64};

/// Coupling strength (k² + Σ⟨α²⟩)·τ_c² above which a weak-coupling warning is raised.
const WEAK_COUPLING_LIMIT: f64 = 0.01;
/// Steps between unitarity checks.
const CHECK_EVERY: usize = 32;
/// Allowed growth of ‖U†U − 𝕀‖ per step.
const MAX_DRIFT_PER_STEP: f64 = 1e-6;

/// Observables tracked for rate extraction: the diagonal sector and the ZQ/DQ x/y parts.
const TRACKED: [usize; 7] = [ix::S1Z, ix::S2Z, ix::ZZ, ix::XX, ix::YY, ix::XY, ix::YX];

/// Monte Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticOptions {
    pub ensemble: usize,
    pub seed: u64,
    /// Integrator step; `None` selects min(τ_c/50, 0.02/(Ω₁+Ω₂)).
    pub dt: Option<f64>,
    /// Start of the rate window (after the initial transient) [s].
    pub t_first: f64,
    /// End of the rate window [s].
    pub t_last: f64,
    /// Jackknife batches.
    pub batches: usize,
    /// Correlation time of the local fields, if different from τ_c.
    /// Beyond the model of a single shared correlation function; for sensitivity studies only.
    pub field_tau_c: Option<f64>,
}

impl Default for StochasticOptions {
    fn default() -> Self {
        StochasticOptions {
            ensemble: 10_000,
            seed: 0x5EED,
            dt: None,
            t_first: 15.0,
            t_last: 150.0,
            batches: 20,
            field_tau_c: None,
        }
    }
}

impl StochasticOptions {
    /// The step actually requested (before alignment to the time grid).
    pub fn step(&self, p: &MicroParams) -> f64 {
        self.dt.unwrap_or_else(|| {
            let fast = (p.omega1.abs() + p.omega2.abs()).max(1e-300);
            (p.tau_c / 50.0).min(0.02 / fast)
        })
    }
}

/// Sampled orientation (and optionally field) history of one member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Per sample: Re α₁⊥, Im α₁⊥, Re α₂⊥, Im α₂⊥, α₁z, α₂z (empty for orientation-only runs).
    pub fields: Vec<[f64; 6]>,
}

/// Per-axis standard deviation s of the rotation vector such that the rank-2
/// harmonics decay by exactly e^{−dt/τ_c} per step. For a rotation vector with
/// i.i.d. N(0, s²) components, ⟨χ₂(ψ)⟩/5 = [1 + 2(1−s²)e^{−s²/2} + 2(1−4s²)e^{−2s²}]/5.
fn rotation_sigma(dt: f64, tau_c: f64) -> f64 {
    let target = (-dt / tau_c).exp();
    let f = |v: f64| (1.0 + 2.0 * (1.0 - v) * (-v / 2.0).exp() + 2.0 * (1.0 - 4.0 * v) * (-2.0 * v).exp()) / 5.0;
    let (mut lo, mut hi) = (0.0, 0.2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).sqrt()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [normal(rng), normal(rng), normal(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Rodrigues rotation of u about ω by angle |ω|.
fn rotate(u: [f64; 3], w: [f64; 3]) -> [f64; 3] {
    let a = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if a == 0.0 {
        return u;
    }
    let k = [w[0] / a, w[1] / a, w[2] / a];
    let (s, c) = a.sin_cos();
    let kxu = [k[1] * u[2] - k[2] * u[1], k[2] * u[0] - k[0] * u[2], k[0] * u[1] - k[1] * u[0]];
    let kdu = k[0] * u[0] + k[1] * u[1] + k[2] * u[2];
    let mut r = [0.0; 3];
    for i in 0..3 {
        r[i] = u[i] * c + kxu[i] * s + k[i] * kdu * (1.0 - c);
    }
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    [r[0] / n, r[1] / n, r[2] / n]
}

/// Instantaneous random amplitudes.
#[derive(Clone, Copy, Debug, Default)]
struct Amplitudes {
    f0: f64,
    f1: C64,
    f2: C64,
    a1p: C64,
    a2p: C64,
    a1z: f64,
    a2z: f64,
}

impl Amplitudes {
    fn midpoint(&self, o: &Amplitudes) -> Amplitudes {
        let h = 0.5;
        Amplitudes {
            f0: h * (self.f0 + o.f0),
            f1: (self.f1 + o.f1) * h,
            f2: (self.f2 + o.f2) * h,
            a1p: (self.a1p + o.a1p) * h,
            a2p: (self.a2p + o.a2p) * h,
            a1z: h * (self.a1z + o.a1z),
            a2z: h * (self.a2z + o.a2z),
        }
    }
}

/// Joint generator of orientation and field noise for one member.
struct Noise {
    rng: ChaCha8Rng,
    k: f64,
    u: [f64; 3],
    rot_sigma: f64,
    eta: [C64; 2],
    eta_sd: [f64; 2],
    c: [f64; 2],
    xi: [f64; 2],
    chol: [[f64; 2]; 2],
    decay: f64,
    kick: f64,
}

impl Noise {
    fn new(p: &MicroParams, dt: f64, field_tau: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1sq = 0.3 * p.k * p.k;
        let coupling = |x: f64| if f1sq > 0.0 { x / (2.0 * f1sq) } else { 0.0 };
        let c = [coupling(p.xcorr1), coupling(p.xcorr2)];
        let resid = |a: f64, c: f64| a - c * c * f1sq;
        let r = [resid(p.a1perp2, c[0]), resid(p.a2perp2, c[1])];
        if r.iter().any(|&v| v < -1e-12 * (p.a1perp2 + p.a2perp2 + f1sq)) {
            return Err(Error::param("xcorr", "cross-correlation exceeds ⟨|F₁|²⟩⟨|α⊥|²⟩ bound"));
        }
        let eta_sd = [(r[0].max(0.0) / 2.0).sqrt(), (r[1].max(0.0) / 2.0).sqrt()];
        let l11 = p.a1z2.sqrt();
        let l21 = if l11 > 0.0 { p.a1z2z / l11 } else { 0.0 };
        let l22 = (p.a2z2 - l21 * l21).max(0.0).sqrt();
        let u = random_unit(&mut rng);
        let mut eta = [C64::new(0.0, 0.0); 2];
        for (e, sd) in eta.iter_mut().zip(eta_sd) {
            *e = C64::new(sd * normal(&mut rng), sd * normal(&mut rng));
        }
        let xi = [normal(&mut rng), normal(&mut rng)];
        let decay = (-dt / field_tau).exp();
        Ok(Noise {
            rng,
            k: p.k,
            u,
            rot_sigma: rotation_sigma(dt, p.tau_c),
            eta,
            eta_sd,
            c,
            xi,
            chol: [[l11, 0.0], [l21, l22]],
            decay,
            kick: (1.0 - decay * decay).sqrt(),
        })
    }

    fn amplitudes(&self) -> Amplitudes {
        let [x, y, z] = self.u;
        let k = self.k;
        let tr = C64::new(x, -y);
        let f1 = tr * (-1.5 * k * z);
        let a1z = self.chol[0][0] * self.xi[0];
        let a2z = self.chol[1][0] * self.xi[0] + self.chol[1][1] * self.xi[1];
        Amplitudes {
            f0: k * (1.0 - 3.0 * z * z),
            f1,
            f2: tr * tr * (-0.75 * k),
            a1p: f1 * self.c[0] + self.eta[0],
            a2p: f1 * self.c[1] + self.eta[1],
            a1z,
            a2z,
        }
    }

    fn advance(&mut self) {
        let s = self.rot_sigma;
        let w = [s * normal(&mut self.rng), s * normal(&mut self.rng), s * normal(&mut self.rng)];
        self.u = rotate(self.u, w);
        for n in 0..2 {
            let sd = self.eta_sd[n] * self.kick;
            let dre = sd * normal(&mut self.rng);
            let dim = sd * normal(&mut self.rng);
            self.eta[n] = self.eta[n] * self.decay + C64::new(dre, dim);
        }
        for n in 0..2 {
            self.xi[n] = self.xi[n] * self.decay + self.kick * normal(&mut self.rng);
        }
    }

    fn field_sample(&self) -> [f64; 6] {
        let a = self.amplitudes();
        [a.a1p.re, a.a1p.im, a.a2p.re, a.a2p.im, a.a1z, a.a2z]
    }
}

/// Orientation-only rotational-diffusion trajectory.
pub fn rotational_trajectory(tau_c: f64, dt: f64, duration: f64, seed: u64) -> Result<Trajectory> {
    let p = MicroParams { k: 1.0, tau_c, ..MicroParams::default() };
    let mut t = sample_trajectory(&p, dt, duration, seed)?;
    t.fields.clear();
    Ok(t)
}

/// Orientation and local-field trajectory of `p`, sampled every `dt`.
pub fn sample_trajectory(p: &MicroParams, dt: f64, duration: f64, seed: u64) -> Result<Trajectory> {
    if !(tau_ok(p.tau_c)) {
        return Err(Error::param("tau_c", "must be finite and positive"));
    }
    if !(dt > 0.0 && dt.is_finite()) || dt > p.tau_c / 20.0 {
        return Err(Error::param("dt", format!("must be positive and ≤ τ_c/20 = {}", p.tau_c / 20.0)));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::param("duration", "must be finite and non-negative"));
    }
    let n = (duration / dt).floor() as usize + 1;
    let mut noise = Noise::new(p, dt, p.tau_c, seed)?;
    let mut out = Trajectory { dt, seed, theta: Vec::with_capacity(n), phi: Vec::with_capacity(n), fields: Vec::with_capacity(n) };
    for i in 0..n {
        if i > 0 {
            noise.advance();
        }
        let [x, y, z] = noise.u;
        out.theta.push(z.clamp(-1.0, 1.0).acos());
        out.phi.push(y.atan2(x));
        out.fields.push(noise.field_sample());
    }
    Ok(out)
}

fn tau_ok(t: f64) -> bool {
    t > 0.0 && t.is_finite()
}

/// Hamiltonian matrix at the given phases e^{iΩ₁t}, e^{iΩ₂t}, e^{i(Ω₁+Ω₂)t}, e^{i(Ω₁−Ω₂)t}.
fn hamiltonian(a: &Amplitudes, ph: [C64; 4]) -> Mat4 {
    let [e1, e2, es, ed] = ph;
    let re = |x: f64| C64::new(x, 0.0);
    let mut h = Mat4::zeros();
    let (a1, a2, f0) = (a.a1z, a.a2z, a.f0);
    h[(0, 0)] = re(0.5 * (a1 + a2) + 0.25 * f0);
    h[(1, 1)] = re(0.5 * (a1 - a2) - 0.25 * f0);
    h[(2, 2)] = re(0.5 * (a2 - a1) - 0.25 * f0);
    h[(3, 3)] = re(-0.5 * (a1 + a2) + 0.25 * f0);
    let half = a.f1 * 0.5;
    let upper = [
        (0, 1, e2 * (a.a2p + half)),
        (0, 2, e1 * (a.a1p + half)),
        (1, 3, e1 * (a.a1p - half)),
        (2, 3, e2 * (a.a2p - half)),
        (0, 3, es * a.f2),
        (1, 2, ed * (-0.25 * f0)),
    ];
    for (i, j, v) in upper {
        h[(i, j)] = v;
        h[(j, i)] = v.conj();
    }
    h
}

fn phases(p: &MicroParams, t: f64) -> [C64; 4] {
    let cis = |w: f64| {
        let (s, c) = (w * t).sin_cos();
        C64::new(c, s)
    };
    [cis(p.omega1), cis(p.omega2), cis(p.omega1 + p.omega2), cis(p.omega1 - p.omega2)]
}

fn unitarity_drift(u: &Mat4) -> f64 {
    (u.adjoint() * u - Mat4::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Propagators of one member at the requested step indices (ascending).
#[derive(Clone, Debug)]
pub struct MemberRun {
    pub propagators: Vec<Mat4>,
    /// Final ‖U†U − 𝕀‖_max.
    pub drift: f64,
}

/// Integrate one ensemble member for `steps.last()` steps of size `dt`.
pub fn simulate_member(p: &MicroParams, dt: f64, field_tau: f64, member: u64, seed: u64, steps: &[usize]) -> Result<MemberRun> {
    let mut noise = Noise::new(p, dt, field_tau, seed ^ member)?;
    let last = steps.last().copied().unwrap_or(0);
    let mut u = Mat4::identity();
    let mut out = Vec::with_capacity(steps.len());
    let mut next = 0;
    let minus_i = C64::new(0.0, -1.0);
    let mut amp0 = noise.amplitudes();
    let mut h0 = hamiltonian(&amp0, phases(p, 0.0));
    let mut drift = 0.0;
    for n in 0..=last {
        while next < steps.len() && steps[next] == n {
            out.push(u);
            next += 1;
        }
        if n == last {
            break;
        }
        let t = n as f64 * dt;
        noise.advance();
        let amp1 = noise.amplitudes();
        let hm = hamiltonian(&amp0.midpoint(&amp1), phases(p, t + 0.5 * dt));
        let h1 = hamiltonian(&amp1, phases(p, t + dt));
        let k1 = h0 * u * minus_i;
        let k2 = hm * (u + k1 * C64::new(0.5 * dt, 0.0)) * minus_i;
        let k3 = hm * (u + k2 * C64::new(0.5 * dt, 0.0)) * minus_i;
        let k4 = h1 * (u + k3 * C64::new(dt, 0.0)) * minus_i;
        u += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        amp0 = amp1;
        h0 = h1;
        if (n + 1) % CHECK_EVERY == 0 || n + 1 == last {
            let d = unitarity_drift(&u);
            let span = if (n + 1) % CHECK_EVERY == 0 { CHECK_EVERY } else { (n + 1) % CHECK_EVERY };
            if !d.is_finite() || d - drift > MAX_DRIFT_PER_STEP * span as f64 {
                return Err(Error::Diverged { member, step: n + 1, drift: d });
            }
            drift = d;
        }
    }
    Ok(MemberRun { propagators: out, drift })
}

/// Validated step and grid alignment: returns (dt, step indices) for the times.
fn grid(p: &MicroParams, opts: &StochasticOptions, times: &[f64]) -> Result<(f64, Vec<usize>)> {
    p.validate()?;
    if !tau_ok(p.tau_c) {
        return Err(Error::param("tau_c", "must be finite and positive"));
    }
    if opts.ensemble == 0 {
        return Err(Error::param("ensemble", "must be positive"));
    }
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_end <= 0.0 {
        return Err(Error::param("times", "must be finite, non-negative and not all zero"));
    }
    let dt0 = opts.step(p);
    let field_tau = opts.field_tau_c.unwrap_or(p.tau_c);
    if !(dt0 > 0.0 && dt0.is_finite()) || dt0 > p.tau_c / 20.0 || dt0 > field_tau / 20.0 {
        return Err(Error::param("dt", "must be positive and ≤ τ_c/20"));
    }
    let n = (t_end / dt0).ceil().max(1.0) as usize;
    let dt = t_end / n as f64;
    let steps = times.iter().map(|t| (t / dt).round() as usize).collect();
    Ok((dt, steps))
}

fn coupling_warnings(p: &MicroParams) -> Vec<String> {
    let strength = (p.k * p.k + p.a1perp2 + p.a2perp2 + p.a1z2 + p.a2z2) * p.tau_c * p.tau_c;
    if strength > WEAK_COUPLING_LIMIT {
        vec![format!("weak-coupling parameter (k²+Σ⟨α²⟩)τ_c² = {strength:.3} is not ≪ 1; Redfield rates may not apply")]
    } else {
        Vec::new()
    }
}

/// Ensemble-averaged coherence vectors on a uniform grid of `n_points` over [0, duration].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSeries {
    pub t: Vec<f64>,
    pub v: Vec<[f64; 15]>,
    /// Standard error of each averaged component.
    pub err: Vec<[f64; 15]>,
    pub warnings: Vec<String>,
}

/// Average coherence vector of U(t)ρ₀U(t)† over the ensemble.
pub fn stochastic_relaxation(
    p: &MicroParams,
    rho0: &DensityMatrix,
    duration: f64,
    n_points: usize,
    opts: &StochasticOptions,
) -> Result<RelaxationSeries> {
    if n_points < 2 {
        return Err(Error::param("n_points", "need at least 2"));
    }
    let times: Vec<f64> = (0..n_points).map(|i| duration * i as f64 / (n_points - 1) as f64).collect();
    let (dt, steps) = grid(p, opts, &times)?;
    let field_tau = opts.field_tau_c.unwrap_or(p.tau_c);
    let basis = product_basis();
    let width = 2 * 15 * n_points;
    let sums = deterministic_sum(0..opts.ensemble, width, |i| {
        let run = simulate_member(p, dt, field_tau, i as u64, opts.seed, &steps)?;
        let mut out = vec![0.0; width];
        for (k, u) in run.propagators.iter().enumerate() {
            let r = u * rho0.matrix() * u.adjoint();
            for (l, op) in basis.ops().iter().enumerate() {
                let x = (op.matrix() * r).trace().re;
                out[2 * (15 * k + l)] = x;
                out[2 * (15 * k + l) + 1] = x * x;
            }
        }
        Ok(out)
    })?;
    let n = opts.ensemble as f64;
    let mut v = vec![[0.0; 15]; n_points];
    let mut err = vec![[0.0; 15]; n_points];
    for k in 0..n_points {
        for l in 0..15 {
            let m = sums[2 * (15 * k + l)] / n;
            let m2 = sums[2 * (15 * k + l) + 1] / n;
            v[k][l] = m;
            err[k][l] = ((m2 - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt();
        }
    }
    let t = steps.iter().map(|&s| s as f64 * dt).collect();
    Ok(RelaxationSeries { t, v, err, warnings: coupling_warnings(p) })
}

/// Monte Carlo estimates of the eight rates with jackknife errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticRates {
    pub diagonal: DiagonalRates,
    pub diagonal_err: DiagonalRates,
    pub lambda_zq: f64,
    pub lambda_zq_err: f64,
    pub lambda_dq: f64,
    pub lambda_dq_err: f64,
    pub dt: f64,
    pub ensemble: usize,
    pub seed: u64,
    /// Rate window actually used (aligned to the step grid).
    pub window: (f64, f64),
    pub warnings: Vec<String>,
}

impl StochasticRates {
    /// (name, estimate, error) for every rate, in report order.
    pub fn entries(&self) -> [(&'static str, f64, f64); 8] {
        let (d, e) = (&self.diagonal, &self.diagonal_err);
        [
            ("mu1", d.mu1, e.mu1),
            ("mu2", d.mu2, e.mu2),
            ("sigma12", d.sigma12, e.sigma12),
            ("mu12", d.mu12, e.mu12),
            ("delta1", d.delta1, e.delta1),
            ("delta2", d.delta2, e.delta2),
            ("lambda_zq", self.lambda_zq, self.lambda_zq_err),
            ("lambda_dq", self.lambda_dq, self.lambda_dq_err),
        ]
    }
}

/// 7×7 transfer matrix over `TRACKED` (row m, column l), row-major.
fn transfer(u: &Mat4, out: &mut [f64]) {
    let basis = product_basis();
    for (c, &l) in TRACKED.iter().enumerate() {
        let r = u * basis.op(l).matrix() * u.adjoint();
        for (row, &m) in TRACKED.iter().enumerate() {
            out[7 * row + c] = (basis.op(m).matrix() * r).trace().re;
        }
    }
}

fn sector3(t: &[f64]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| t[7 * i + j])
}

/// 2×2 block of the mode pair (e_x, e_y) given in coordinates over (XX, YY, XY, YX).
fn mode_block(t: &[f64], ex: [f64; 4], ey: [f64; 4]) -> [[f64; 2]; 2] {
    let at = |r: usize, c: usize| t[7 * (3 + r) + 3 + c];
    let proj = |a: &[f64; 4], b: &[f64; 4]| {
        let mut s = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                s += a[r] * at(r, c) * b[c];
            }
        }
        s
    };
    [[proj(&ex, &ex), proj(&ex, &ey)], [proj(&ey, &ex), proj(&ey, &ey)]]
}

fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Rates [μ₁, μ₂, σ₁₂, μ₁₂, δ₁, δ₂, λ_ZQ, λ_DQ] from averaged transfer matrices.
fn rates_from(t1: &[f64], t2: &[f64], span: f64) -> Result<[f64; 8]> {
    let a = sector3(t1);
    let b = sector3(t2);
    let ainv = a.try_inverse().ok_or_else(|| Error::Fit("singular transfer matrix at t₁".into()))?;
    let m = b * ainv;
    let sym = [
        [m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), 0.5 * (m[(0, 2)] + m[(2, 0)])],
        [0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)], 0.5 * (m[(1, 2)] + m[(2, 1)])],
        [0.5 * (m[(0, 2)] + m[(2, 0)]), 0.5 * (m[(1, 2)] + m[(2, 1)]), m[(2, 2)]],
    ];
    let (ev, vec) = jacobi_eigen3(sym);
    if ev.iter().any(|&e| e <= 0.0) {
        return Err(Error::Fit("non-positive transfer eigenvalue; window too long or ensemble too small".into()));
    }
    let lam: Vec<f64> = ev.iter().map(|e| -e.ln() / span).collect();
    let g = |i: usize, j: usize| (0..3).map(|k| vec[i][k] * lam[k] * vec[j][k]).sum::<f64>();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let zq = (mode_block(t1, [r, r, 0.0, 0.0], [0.0, 0.0, r, -r]), mode_block(t2, [r, r, 0.0, 0.0], [0.0, 0.0, r, -r]));
    let dq = (mode_block(t1, [r, -r, 0.0, 0.0], [0.0, 0.0, r, r]), mode_block(t2, [r, -r, 0.0, 0.0], [0.0, 0.0, r, r]));
    let mode = |(x, y): ([[f64; 2]; 2], [[f64; 2]; 2])| -> Result<f64> {
        let q = det2(y) / det2(x);
        if !(q > 0.0) {
            return Err(Error::Fit("non-positive coherence determinant ratio".into()));
        }
        Ok(-q.ln() / (2.0 * span))
    };
    Ok([g(0, 0), g(1, 1), g(0, 1), g(2, 2), g(2, 0), g(2, 1), mode(zq)?, mode(dq)?])
}

/// Run the ensemble and extract all eight rates.
pub fn stochastic_rates(p: &MicroParams, opts: &StochasticOptions) -> Result<StochasticRates> {
    if !(opts.t_first > 0.0 && opts.t_last > opts.t_first) {
        return Err(Error::param("t_first/t_last", "need 0 < t_first < t_last"));
    }
    if opts.batches < 2 || opts.batches > opts.ensemble {
        return Err(Error::param("batches", "need 2 ≤ batches ≤ ensemble"));
    }
    let (dt, steps) = grid(p, opts, &[opts.t_first, opts.t_last])?;
    let field_tau = opts.field_tau_c.unwrap_or(p.tau_c);
    let member = |i: usize| -> Result<Vec<f64>> {
        let run = simulate_member(p, dt, field_tau, i as u64, opts.seed, &steps)?;
        let mut out = vec![0.0; 98];
        transfer(&run.propagators[0], &mut out[..49]);
        transfer(&run.propagators[1], &mut out[49..]);
        Ok(out)
    };
    let ranges = batch_ranges(opts.ensemble, opts.batches);
    let sums: Vec<Vec<f64>> = ranges.iter().map(|r| deterministic_sum(r.clone(), 98, member)).collect::<Result<_>>()?;
    let total = super::tree_sum(sums.clone());
    let span = (steps[1] - steps[0]) as f64 * dt;
    let estimate = |s: &[f64], n: f64| -> Result<[f64; 8]> {
        let avg: Vec<f64> = s.iter().map(|x| x / n).collect();
        rates_from(&avg[..49], &avg[49..], span)
    };
    let full = estimate(&total, opts.ensemble as f64)?;
    let b = opts.batches as f64;
    let mut loo = Vec::with_capacity(opts.batches);
    for (s, r) in sums.iter().zip(&ranges) {
        let rest: Vec<f64> = total.iter().zip(s).map(|(a, x)| a - x).collect();
        loo.push(estimate(&rest, (opts.ensemble - r.len()) as f64)?);
    }
    let mut err = [0.0; 8];
    for (k, e) in err.iter_mut().enumerate() {
        let mean = loo.iter().map(|x| x[k]).sum::<f64>() / b;
        let var = loo.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() * (b - 1.0) / b;
        *e = var.sqrt();
    }
    let d = |x: [f64; 8]| DiagonalRates { mu1: x[0], mu2: x[1], sigma12: x[2], mu12: x[3], delta1: x[4], delta2: x[5] };
    Ok(StochasticRates {
        diagonal: d(full),
        diagonal_err: d(err),
        lambda_zq: full[6],
        lambda_zq_err: err[6],
        lambda_dq: full[7],
        lambda_dq_err: err[7],
        dt,
        ensemble: opts.ensemble,
        seed: opts.seed,
        window: (steps[0] as f64 * dt, steps[1] as f64 * dt),
        warnings: coupling_warnings(p),
    })
}

/// Compare Monte Carlo rates with the analytic Markovian rates of `p`
/// (the slow-J contribution is not part of the stochastic model).
pub fn compare_with_analytic(p: &MicroParams, mc: &StochasticRates) -> OracleReport {
    let d = diagonal_rates(p);
    let o = offdiagonal_rates(p);
    let analytic = [d.mu1, d.mu2, d.sigma12, d.mu12, d.delta1, d.delta2, o.zq.markovian(), o.dq.markovian()];
    let mut report = OracleReport {
        ensemble: mc.ensemble,
        dt: mc.dt,
        seed: mc.seed,
        warnings: mc.warnings.clone(),
        ..OracleReport::default()
    };
    for ((name, value, err), a) in mc.entries().into_iter().zip(analytic) {
        report.rates.insert(name.to_string(), RateComparison::new(a, value, err));
    }
    report
}
