//! Spectral readout model (J-doublet intensities), symmetric/antisymmetric
//! components, two-spin state tomography and Bell-state fidelity.
//!
//! Readout convention: the doublet of spin n detected after a readout pulse is
//! I_{n±} = g·⟨S_{nx}(½ ± S_{mz})⟩ (transverse magnetization split by the
//! partner's z-projection). Before an ideal (π/2)_{ny} readout pulse this equals
//! g·⟨S_{nz}(½ ± S_{mz})⟩, so the symmetric component is g⟨S_{nz}⟩ and the
//! antisymmetric component is g⟨2S_{1z}S_{2z}⟩. With g = 1 the equilibrium
//! symmetric intensity of spin n is ε_n.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_pulse, pulse_propagator};
use crate::error::{Error, Result};
use crate::spinops::{
    expectation, product_basis, Axis, BellStateId, DensityMatrix, Mat4, Spin, SpinOperator, C64,
};

/// Default readout gain (equilibrium symmetric intensity = ε_n).
pub const DEFAULT_GAIN: f64 = 1.0;

/// Intensities of the two components of a J-doublet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakPair {
    pub i_plus: f64,
    pub i_minus: f64,
}

impl PeakPair {
    pub fn new(i_plus: f64, i_minus: f64) -> Self {
        PeakPair { i_plus, i_minus }
    }
}

/// I₊ + I₋.
pub fn symmetric_component(p: PeakPair) -> f64 {
    p.i_plus + p.i_minus
}

/// I₊ − I₋.
pub fn antisymmetric_component(p: PeakPair) -> f64 {
    p.i_plus - p.i_minus
}

fn doublet(rho: &DensityMatrix, spin: Spin, axis: Axis, gain: f64) -> PeakPair {
    let sn = SpinOperator::single(spin, axis);
    let sm = SpinOperator::single(spin.partner(), Axis::Z);
    let half = SpinOperator::identity() * 0.5;
    let plus = sn * (half + sm);
    let minus = sn * (half - sm);
    // S_n and S_m act on different spins and commute, so both products are Hermitian.
    let e = |o: &SpinOperator| expectation(rho, o).expect("commuting product is Hermitian");
    PeakPair { i_plus: gain * e(&plus), i_minus: gain * e(&minus) }
}

/// Doublet intensities an ideal (π/2)_{ny} readout would produce from the pre-readout state.
pub fn peak_intensities(rho: &DensityMatrix, spin: Spin, gain: f64) -> PeakPair {
    doublet(rho, spin, Axis::Z, gain)
}

/// Doublet intensities detected from the current (post-readout-pulse) transverse state.
pub fn detect(rho: &DensityMatrix, spin: Spin, gain: f64) -> PeakPair {
    doublet(rho, spin, Axis::X, gain)
}

/// Reconstructed density matrix with per-element uncertainties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tomogram {
    /// Real parts of 𝕀/4 + ρ.
    pub re: [[f64; 4]; 4],
    /// Imaginary parts of 𝕀/4 + ρ.
    pub im: [[f64; 4]; 4],
    /// One-sigma uncertainty of each element (modulus).
    pub err: [[f64; 4]; 4],
    /// Reconstructed coherence vector v_l.
    pub coherence: [f64; 15],
}

impl Tomogram {
    /// Full density matrix 𝕀/4 + ρ.
    pub fn matrix(&self) -> Mat4 {
        Mat4::from_fn(|i, j| C64::new(self.re[i][j], self.im[i][j]))
    }

    /// Deviation part ρ.
    pub fn deviation(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.matrix() - Mat4::identity() * C64::new(0.25, 0.0))
    }

    /// Serialize as pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tomogram serializes")
    }

    /// Parse JSON and check Hermiticity and unit trace.
    pub fn from_json(s: &str) -> Result<Self> {
        let t: Tomogram = serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))?;
        let all = t.re.iter().chain(t.im.iter()).chain(t.err.iter()).flatten().chain(t.coherence.iter());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Json("non-finite entry".into()));
        }
        let m = t.matrix();
        let dev = crate::spinops::hermitian_deviation(&m);
        if dev > 1e-9 {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Json(format!("trace {} ≠ 1", tr.re)));
        }
        Ok(t)
    }
}

/// Tomography readout settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyOptions {
    pub gain: f64,
    /// Gaussian noise σ added to each detected peak intensity (0 = noiseless).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TomographyOptions {
    fn default() -> Self {
        TomographyOptions { gain: DEFAULT_GAIN, noise_sigma: 0.0, seed: 0 }
    }
}

/// Pre-rotation mapping S_{n,axis} onto S_{nz}: (−π/2)_y for x, (π/2)_x for y.
fn pre_rotation(rho: &DensityMatrix, spin: Spin, axis: Axis) -> DensityMatrix {
    match axis {
        Axis::X => apply_pulse(rho, spin, Axis::Y, -FRAC_PI_2),
        Axis::Y => apply_pulse(rho, spin, Axis::X, FRAC_PI_2),
        Axis::Z => *rho,
    }
}

fn rotation_gain(spin: Spin, axis: Axis) -> f64 {
    // Heisenberg check: coefficient of S_{nz} in U S_{n,axis} U†.
    let u = match axis {
        Axis::X => pulse_propagator(spin, Axis::Y, -FRAC_PI_2),
        Axis::Y => pulse_propagator(spin, Axis::X, FRAC_PI_2),
        Axis::Z => Mat4::identity(),
    };
    let s = SpinOperator::single(spin, axis);
    let z = SpinOperator::single(spin, Axis::Z);
    (z.matrix() * u * s.matrix() * u.adjoint()).trace().re
}

/// Reconstruct the state produced by `source` from 15 observable measurements.
/// Each product operator is rotated onto a z-basis observable read out as a
/// symmetric (single-spin terms) or antisymmetric (two-spin terms) component.
pub fn tomography(source: &mut dyn FnMut() -> DensityMatrix, opts: &TomographyOptions) -> Result<Tomogram> {
    if opts.gain == 0.0 || !opts.gain.is_finite() {
        return Err(Error::param("gain", "must be finite and nonzero"));
    }
    if opts.noise_sigma < 0.0 || !opts.noise_sigma.is_finite() {
        return Err(Error::param("noise_sigma", "must be finite and non-negative"));
    }
    let first = source();
    let second = source();
    let drift = first.max_abs_diff(&second);
    let scale = first.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if drift > 1e-9 * scale.max(1e-300) {
        return Err(Error::InconsistentSource(drift));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.noise_sigma).map_err(|e| Error::param("noise_sigma", e.to_string()))?;
    let mut read = |rho: &DensityMatrix, spin: Spin| -> PeakPair {
        let p = peak_intensities(rho, spin, opts.gain);
        if opts.noise_sigma > 0.0 {
            PeakPair::new(p.i_plus + noise.sample(&mut rng), p.i_minus + noise.sample(&mut rng))
        } else {
            p
        }
    };
    let axes = [Axis::X, Axis::Y, Axis::Z];
    let mut v = [0.0; 15];
    let mut sigma = [0.0; 15];
    // Both symmetric and antisymmetric components carry variance 2σ².
    let comp_sigma = opts.noise_sigma * 2f64.sqrt() / opts.gain.abs();
    for (i, &a) in axes.iter().enumerate() {
        for (spin, offset) in [(Spin::One, 0), (Spin::Two, 3)] {
            let rho = pre_rotation(&source(), spin, a);
            let c = rotation_gain(spin, a);
            v[offset + i] = symmetric_component(read(&rho, spin)) / (opts.gain * c);
            sigma[offset + i] = comp_sigma / c.abs();
        }
    }
    for (i, &a) in axes.iter().enumerate() {
        for (j, &b) in axes.iter().enumerate() {
            let rho = pre_rotation(&pre_rotation(&source(), Spin::One, a), Spin::Two, b);
            let c = rotation_gain(Spin::One, a) * rotation_gain(Spin::Two, b);
            v[6 + 3 * i + j] = antisymmetric_component(read(&rho, Spin::One)) / (opts.gain * c);
            sigma[6 + 3 * i + j] = comp_sigma / c.abs();
        }
    }
    let basis = product_basis();
    let mut m = Mat4::identity() * C64::new(0.25, 0.0);
    let mut var = [[0.0; 4]; 4];
    for (l, p) in basis.ops().iter().enumerate() {
        m += p.matrix() * C64::new(v[l], 0.0);
        for (r, row) in var.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x += (sigma[l] * p.matrix()[(r, c)].norm()).powi(2);
            }
        }
    }
    let mut re = [[0.0; 4]; 4];
    let mut im = [[0.0; 4]; 4];
    let mut err = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            re[r][c] = m[(r, c)].re;
            im[r][c] = m[(r, c)].im;
            err[r][c] = var[r][c].sqrt();
        }
    }
    Ok(Tomogram { re, im, err, coherence: v })
}

/// Fidelity ⟨Ψ|(𝕀/4 + ρ̂)|Ψ⟩ of the unit-normalized pure part ρ̂ of a deviation
/// matrix; ρ̂ is scaled to the Frobenius norm √(3/4) of a pure-state deviation.
pub fn state_fidelity(rho: &DensityMatrix, target: BellStateId) -> Result<f64> {
    let norm = rho.matrix().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm <= 1e-300 || !norm.is_finite() {
        return Err(Error::param("rho", "pure part has zero norm"));
    }
    let k = target.ket();
    let amp = (k.adjoint() * rho.matrix() * k)[(0, 0)].re;
    let f = 0.25 + amp * (0.75f64).sqrt() / norm;
    Ok(f.clamp(0.0, 1.0))
}
