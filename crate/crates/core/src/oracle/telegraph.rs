//! Telegraph-noise model of slowly relaxing distant spins.
//!
//! Each distant spin k has S_{kz} = ±½ and flips as a Poisson process with rate
//! 1/(2T1dist), so ⟨S_{kz}(0)S_{kz}(t)⟩ = ¼e^{−t/T1dist}. The pair feels
//! α^J_{nz}(t) = Σ_k J_{nk} S_{kz}(t) and evolves under
//! H^J = α^J_{1z} S_{1z} + α^J_{2z} S_{2z}. Phases are accumulated exactly between
//! flips (event-driven), so the only error is statistical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::deterministic_sum;
use crate::error::{Error, Result};
use crate::redfield::SlowJ;
use crate::spinops::{index as ix, product_basis, DensityMatrix, C64};

/// Distant spins coupled to the pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphField {
    /// (J_{1k}, J_{2k}) per distant spin [rad/s].
    pub couplings: Vec<[f64; 2]>,
    /// Longitudinal relaxation time of the distant spins [s].
    pub t1dist: f64,
}

impl TelegraphField {
    /// N identical distant spins coupled with (j1, j2).
    pub fn uniform(n: usize, j1: f64, j2: f64, t1dist: f64) -> Self {
        TelegraphField { couplings: vec![[j1, j2]; n], t1dist }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t1dist > 0.0 && self.t1dist.is_finite()) {
            return Err(Error::param("t1dist", "must be finite and positive"));
        }
        if self.couplings.iter().flatten().any(|j| !j.is_finite()) {
            return Err(Error::param("couplings", "must be finite"));
        }
        Ok(())
    }

    /// Equivalent Gaussian second moments ⟨(α^J_{1z})²⟩, ⟨(α^J_{2z})²⟩, ⟨α^J_{1z}α^J_{2z}⟩.
    pub fn slow_j(&self) -> SlowJ {
        let s = |f: &dyn Fn(&[f64; 2]) -> f64| self.couplings.iter().map(f).sum::<f64>() / 4.0;
        SlowJ {
            aj1z2: s(&|c| c[0] * c[0]),
            aj2z2: s(&|c| c[1] * c[1]),
            aj12: s(&|c| c[0] * c[1]),
            t1dist: self.t1dist,
        }
    }

    /// ⟨h²⟩ for h = α₁ − α₂ (ZQ) and h = α₁ + α₂ (DQ).
    pub fn h_second_moments(&self) -> (f64, f64) {
        let zq = self.couplings.iter().map(|c| (c[0] - c[1]).powi(2)).sum::<f64>() / 4.0;
        let dq = self.couplings.iter().map(|c| (c[0] + c[1]).powi(2)).sum::<f64>() / 4.0;
        (zq, dq)
    }
}

/// Ensemble-averaged decay curves with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphCurves {
    pub t: Vec<f64>,
    /// ⟨cos ∫(α₁−α₂)⟩.
    pub zq: Vec<f64>,
    pub zq_err: Vec<f64>,
    /// ⟨cos ∫(α₁+α₂)⟩.
    pub dq: Vec<f64>,
    pub dq_err: Vec<f64>,
    /// ⟨Tr{2S₁ₓS₂ₓ ρ(t)}⟩ for the supplied ρ₀.
    pub xx: Vec<f64>,
    pub xx_err: Vec<f64>,
}

/// Simulate `ensemble` telegraph histories and average on the given (ascending) times.
pub fn telegraph_relaxation(
    field: &TelegraphField,
    rho0: &DensityMatrix,
    times: &[f64],
    ensemble: usize,
    seed: u64,
) -> Result<TelegraphCurves> {
    field.validate()?;
    if ensemble < 2 {
        return Err(Error::param("ensemble", "need at least 2 members"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("times", "must be finite, non-negative and ascending"));
    }
    let n_spins = field.couplings.len();
    let flip_rate = n_spins as f64 / (2.0 * field.t1dist);
    let wait = if n_spins > 0 { Some(Exp::new(flip_rate).map_err(|e| Error::param("t1dist", e.to_string()))?) } else { None };
    let basis = product_basis();
    let xx_op = *basis.op(ix::XX).matrix();
    let rho = *rho0.matrix();
    // m₁, m₂ of |↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩.
    let m = [(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)];
    let width = 6 * times.len();
    let sums = deterministic_sum(0..ensemble, width, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
        let mut s: Vec<f64> = (0..n_spins).map(|_| if rng.random::<bool>() { 0.5 } else { -0.5 }).collect();
        let alpha = |s: &[f64]| -> (f64, f64) {
            field.couplings.iter().zip(s).fold((0.0, 0.0), |(a, b), (c, x)| (a + c[0] * x, b + c[1] * x))
        };
        let (mut a1, mut a2) = alpha(&s);
        let (mut p1, mut p2, mut now) = (0.0, 0.0, 0.0);
        let mut next_flip = wait.map_or(f64::INFINITY, |w| w.sample(&mut rng));
        let mut out = vec![0.0; width];
        for (k, &t) in times.iter().enumerate() {
            while next_flip <= t {
                p1 += a1 * (next_flip - now);
                p2 += a2 * (next_flip - now);
                now = next_flip;
                let j = rng.random_range(0..n_spins);
                s[j] = -s[j];
                (a1, a2) = alpha(&s);
                next_flip = now + wait.expect("flips imply spins").sample(&mut rng);
            }
            p1 += a1 * (t - now);
            p2 += a2 * (t - now);
            now = t;
            let zq = (p1 - p2).cos();
            let dq = (p1 + p2).cos();
            let mut xx = 0.0;
            for (r, mr) in m.iter().enumerate() {
                for (c, mc) in m.iter().enumerate() {
                    let de = p1 * (mr.0 - mc.0) + p2 * (mr.1 - mc.1);
                    let rt = rho[(r, c)] * C64::new(de.cos(), -de.sin());
                    xx += (xx_op[(c, r)] * rt).re;
                }
            }
            out[6 * k..6 * k + 6].copy_from_slice(&[zq, zq * zq, dq, dq * dq, xx, xx * xx]);
        }
        Ok(out)
    })?;
    let n = ensemble as f64;
    let stat = |k: usize, o: usize| {
        let mean = sums[6 * k + o] / n;
        let m2 = sums[6 * k + o + 1] / n;
        (mean, ((m2 - mean * mean).max(0.0) / (n - 1.0)).sqrt())
    };
    let mut c = TelegraphCurves {
        t: times.to_vec(),
        zq: Vec::new(),
        zq_err: Vec::new(),
        dq: Vec::new(),
        dq_err: Vec::new(),
        xx: Vec::new(),
        xx_err: Vec::new(),
    };
    for k in 0..times.len() {
        let (a, e) = stat(k, 0);
        c.zq.push(a);
        c.zq_err.push(e);
        let (a, e) = stat(k, 2);
        c.dq.push(a);
        c.dq_err.push(e);
        let (a, e) = stat(k, 4);
        c.xx.push(a);
        c.xx_err.push(e);
    }
    Ok(c)
}
