//! Time evolution: ideal pulses, coherent rf evolution in the double-rotating
//! frame, closed-form relaxation of the diagonal 3-sector and the ZQ/DQ
//! 2-sector, and an idealized gradient crusher.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::redfield::{anderson_weiss_exponential, DiagonalRates, OffDiagonalRates, SlowJ};
use crate::spinops::{index as ix, Axis, CoherenceVector, DensityMatrix, Mat4, Spin, SpinOperator, C64};

/// Diagonal-sector state (⟨S_{1z}⟩, ⟨S_{2z}⟩, ⟨2S_{1z}S_{2z}⟩).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagState {
    pub s1z: f64,
    pub s2z: f64,
    pub zz: f64,
}

impl DiagState {
    pub fn new(s1z: f64, s2z: f64, zz: f64) -> Self {
        DiagState { s1z, s2z, zz }
    }

    /// Thermal equilibrium (ε₁, ε₂, 0).
    pub fn equilibrium(eps1: f64, eps2: f64) -> Self {
        DiagState { s1z: eps1, s2z: eps2, zz: 0.0 }
    }

    fn to_array(self) -> [f64; 3] {
        [self.s1z, self.s2z, self.zz]
    }

    fn from_array(a: [f64; 3]) -> Self {
        DiagState { s1z: a[0], s2z: a[1], zz: a[2] }
    }

    /// Read the sector out of a coherence vector.
    pub fn from_coherence(v: &CoherenceVector) -> Self {
        DiagState { s1z: v.v[ix::S1Z], s2z: v.v[ix::S2Z], zz: v.v[ix::ZZ] }
    }
}

/// Off-diagonal eigenmode state: plus = ⟨2S₁ₓS₂ₓ + 2S₁ᵧS₂ᵧ⟩ (ZQ), minus = ⟨2S₁ₓS₂ₓ − 2S₁ᵧS₂ᵧ⟩ (DQ).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OffDiagState {
    pub plus: f64,
    pub minus: f64,
}

impl OffDiagState {
    /// Read the sector out of a coherence vector.
    pub fn from_coherence(v: &CoherenceVector) -> Self {
        OffDiagState { plus: v.v[ix::XX] + v.v[ix::YY], minus: v.v[ix::XX] - v.v[ix::YY] }
    }
}

/// rf Hamiltonian H = −ω₁S_{1x} − ω₂S_{2x} + ω_J S_{1z}S_{2z} in the double-rotating frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfHamiltonian {
    pub omega1: f64,
    pub omega2: f64,
    pub omega_j: f64,
}

impl RfHamiltonian {
    pub fn new(omega1: f64, omega2: f64, omega_j: f64) -> Self {
        RfHamiltonian { omega1, omega2, omega_j }
    }

    /// Matrix of H (Hermitian by construction).
    pub fn matrix(&self) -> Mat4 {
        let h = SpinOperator::single(Spin::One, Axis::X) * (-self.omega1)
            + SpinOperator::single(Spin::Two, Axis::X) * (-self.omega2)
            + SpinOperator::bilinear(Axis::Z, Axis::Z) * (0.5 * self.omega_j);
        *h.matrix()
    }

    /// Propagator e^{−iHt}.
    pub fn propagator(&self, t: f64) -> Mat4 {
        hermitian_propagator(&self.matrix(), t)
    }
}

/// e^{−iHt} for Hermitian H via eigendecomposition.
pub fn hermitian_propagator(h: &Mat4, t: f64) -> Mat4 {
    let eig = SymmetricEigen::new(*h);
    let v = eig.eigenvectors;
    let mut d = Mat4::zeros();
    for i in 0..4 {
        d[(i, i)] = C64::new(0.0, -eig.eigenvalues[i] * t).exp();
    }
    v * d * v.adjoint()
}

/// ρ → UρU†.
pub fn conjugate(rho: &DensityMatrix, u: &Mat4) -> DensityMatrix {
    DensityMatrix::from_trusted(u * rho.matrix() * u.adjoint())
}

/// Propagator of an ideal pulse, exp(−iθS_{n,axis}) = cos(θ/2) − 2i sin(θ/2) S_{n,axis}.
pub fn pulse_propagator(spin: Spin, axis: Axis, angle: f64) -> Mat4 {
    let s = SpinOperator::single(spin, axis);
    let (sn, cs) = (0.5 * angle).sin_cos();
    Mat4::identity() * C64::new(cs, 0.0) + s.matrix() * C64::new(0.0, -2.0 * sn)
}

/// Ideal instantaneous hard pulse of `angle` radians about `axis` on `spin`.
pub fn apply_pulse(rho: &DensityMatrix, spin: Spin, axis: Axis, angle: f64) -> DensityMatrix {
    conjugate(rho, &pulse_propagator(spin, axis, angle))
}

/// Coherent evolution under the rf Hamiltonian for time `t`.
pub fn evolve_coherent(rho: &DensityMatrix, h: &RfHamiltonian, t: f64) -> Result<DensityMatrix> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    Ok(conjugate(rho, &h.propagator(t)))
}

/// Eigen-decomposition of a real symmetric 3×3 matrix by cyclic Jacobi
/// rotations; returns (eigenvalues, column eigenvectors).
pub fn jacobi_eigen3(a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = a;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    for _sweep in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off <= 1e-13 * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Precomputed e^{−Γt} for the diagonal sector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagonalPropagator {
    eigenvalues: [f64; 3],
    vectors: [[f64; 3]; 3],
    eq: [f64; 3],
}

impl DiagonalPropagator {
    pub fn new(r: &DiagonalRates, eps1: f64, eps2: f64) -> Self {
        let (eigenvalues, vectors) = jacobi_eigen3(r.gamma());
        DiagonalPropagator { eigenvalues, vectors, eq: [eps1, eps2, 0.0] }
    }

    /// Eigenvalues of Γ.
    pub fn eigenvalues(&self) -> [f64; 3] {
        self.eigenvalues
    }

    /// True if Γ has a negative eigenvalue (unphysical rate set; propagation still runs).
    pub fn has_negative_mode(&self) -> bool {
        self.eigenvalues.iter().any(|&l| l < 0.0)
    }

    /// x(t) = x_eq + e^{−Γt}(x₀ − x_eq).
    pub fn evolve(&self, x0: DiagState, t: f64) -> DiagState {
        let d = {
            let a = x0.to_array();
            [a[0] - self.eq[0], a[1] - self.eq[1], a[2] - self.eq[2]]
        };
        let v = &self.vectors;
        let mut out = self.eq;
        for k in 0..3 {
            let proj = v[0][k] * d[0] + v[1][k] * d[1] + v[2][k] * d[2];
            let f = (-self.eigenvalues[k] * t).exp() * proj;
            for (i, o) in out.iter_mut().enumerate() {
                *o += v[i][k] * f;
            }
        }
        DiagState::from_array(out)
    }
}

/// Relax the diagonal sector for time `t` towards (ε₁, ε₂, 0).
pub fn evolve_diagonal(x0: DiagState, r: &DiagonalRates, eq: (f64, f64), t: f64) -> Result<DiagState> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    Ok(DiagonalPropagator::new(r, eq.0, eq.1).evolve(x0, t))
}

/// Anderson–Weiss description of the slow-J fields with exponential correlation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AwContext {
    /// ⟨(α^J_{1z} − α^J_{2z})²⟩ [rad²/s²].
    pub zq_second_moment: f64,
    /// ⟨(α^J_{1z} + α^J_{2z})²⟩ [rad²/s²].
    pub dq_second_moment: f64,
    /// Correlation time T1dist [s].
    pub t1dist: f64,
}

impl AwContext {
    pub fn from_slow_j(s: &SlowJ) -> Self {
        AwContext { zq_second_moment: s.zq_second_moment(), dq_second_moment: s.dq_second_moment(), t1dist: s.t1dist }
    }

    fn factors(&self, t: f64) -> Result<(f64, f64)> {
        Ok((
            anderson_weiss_exponential(t, self.zq_second_moment, self.t1dist)?,
            anderson_weiss_exponential(t, self.dq_second_moment, self.t1dist)?,
        ))
    }
}

/// Decay factors (ZQ, DQ) over time `t`; with an AW context the slow-J part
/// follows G(t), otherwise it is the Redfield exponential e^{−λ̃t}.
pub fn offdiagonal_factors(o: &OffDiagonalRates, t: f64, aw: Option<&AwContext>) -> Result<(f64, f64)> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    Ok(match aw {
        None => ((-o.lambda_zq() * t).exp(), (-o.lambda_dq() * t).exp()),
        Some(ctx) => {
            let (gz, gd) = ctx.factors(t)?;
            ((-o.zq.markovian() * t).exp() * gz, (-o.dq.markovian() * t).exp() * gd)
        }
    })
}

/// Relax the ZQ/DQ eigenmodes for time `t`.
pub fn evolve_offdiagonal(x0: OffDiagState, o: &OffDiagonalRates, t: f64, aw: Option<&AwContext>) -> Result<OffDiagState> {
    let (fz, fd) = offdiagonal_factors(o, t, aw)?;
    Ok(OffDiagState { plus: x0.plus * fz, minus: x0.minus * fd })
}

/// Which coherences survive a gradient crusher.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrusherMode {
    /// Keep populations (S_{1z}, S_{2z}, 2S_{1z}S_{2z}) and zero-quantum coherences.
    #[default]
    ZeroQuantumPreserving,
    /// Keep populations only (heteronuclear gradients also dephase ZQ coherences).
    PopulationsOnly,
}

/// Idealized gradient: zero every component of nonzero coherence order (ZQ kept).
pub fn apply_gradient_crusher(v: &CoherenceVector) -> CoherenceVector {
    apply_gradient_crusher_mode(v, CrusherMode::ZeroQuantumPreserving)
}

/// Gradient crusher with an explicit mode.
pub fn apply_gradient_crusher_mode(v: &CoherenceVector, mode: CrusherMode) -> CoherenceVector {
    let mut out = [0.0; 15];
    out[ix::S1Z] = v.v[ix::S1Z];
    out[ix::S2Z] = v.v[ix::S2Z];
    out[ix::ZZ] = v.v[ix::ZZ];
    if mode == CrusherMode::ZeroQuantumPreserving {
        // ZQ part of the transverse bilinear block: (xx+yy)/2 and (xy−yx)/2 patterns.
        let zq_x = 0.5 * (v.v[ix::XX] + v.v[ix::YY]);
        let zq_y = 0.5 * (v.v[ix::XY] - v.v[ix::YX]);
        out[ix::XX] = zq_x;
        out[ix::YY] = zq_x;
        out[ix::XY] = zq_y;
        out[ix::YX] = -zq_y;
    }
    CoherenceVector { v: out, v_eq: v.v_eq }
}

/// Crusher acting on a density matrix.
pub fn crush(rho: &DensityMatrix, mode: CrusherMode) -> DensityMatrix {
    let v = crate::spinops::to_coherence_vector(rho);
    crate::spinops::from_coherence_vector(&apply_gradient_crusher_mode(&v, mode))
}

/// Relaxation of a full coherence vector over `t`: the diagonal sector and the
/// x/y parts of the ZQ and DQ modes relax; other components are not modeled and
/// pass through unchanged.
pub fn relax_coherence_vector(
    v: &CoherenceVector,
    r: &DiagonalRates,
    o: &OffDiagonalRates,
    eq: (f64, f64),
    t: f64,
    aw: Option<&AwContext>,
) -> Result<CoherenceVector> {
    let d = evolve_diagonal(DiagState::from_coherence(v), r, eq, t)?;
    let (fz, fd) = offdiagonal_factors(o, t, aw)?;
    let mut out = v.v;
    out[ix::S1Z] = d.s1z;
    out[ix::S2Z] = d.s2z;
    out[ix::ZZ] = d.zz;
    let zq_x = 0.5 * (v.v[ix::XX] + v.v[ix::YY]) * fz;
    let dq_x = 0.5 * (v.v[ix::XX] - v.v[ix::YY]) * fd;
    let zq_y = 0.5 * (v.v[ix::XY] - v.v[ix::YX]) * fz;
    let dq_y = 0.5 * (v.v[ix::XY] + v.v[ix::YX]) * fd;
    out[ix::XX] = zq_x + dq_x;
    out[ix::YY] = zq_x - dq_x;
    out[ix::XY] = zq_y + dq_y;
    out[ix::YX] = dq_y - zq_y;
    Ok(CoherenceVector { v: out, v_eq: v.v_eq })
}

/// Relax a density matrix (see [`relax_coherence_vector`]).
pub fn relax_density(
    rho: &DensityMatrix,
    r: &DiagonalRates,
    o: &OffDiagonalRates,
    eq: (f64, f64),
    t: f64,
    aw: Option<&AwContext>,
) -> Result<DensityMatrix> {
    let v = crate::spinops::to_coherence_vector(rho);
    Ok(crate::spinops::from_coherence_vector(&relax_coherence_vector(&v, r, o, eq, t, aw)?))
}
