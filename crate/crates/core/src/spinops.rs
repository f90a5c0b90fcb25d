//! Exact two-spin-1/2 operator algebra.
//!
//! Hilbert-space ordering is |↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩ with spin 1 as the first
//! tensor factor. Spin operators are S = σ/2 (ħ = 1). Density matrices are
//! stored as deviations: the invariant 𝕀/4 part is omitted.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex double.
pub type C64 = nalgebra::Complex<f64>;
/// Dense 4×4 complex matrix.
pub type Mat4 = Matrix4<C64>;
/// Dense 4-component complex state vector.
pub type Ket = Vector4<C64>;

/// Absolute tolerance for Hermiticity and tracelessness checks.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Which member of the pair an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    One,
    Two,
}

impl Spin {
    /// The other spin of the pair.
    pub fn partner(self) -> Spin {
        match self {
            Spin::One => Spin::Two,
            Spin::Two => Spin::One,
        }
    }

    /// Zero-based index (0 for spin 1, 1 for spin 2).
    pub fn index(self) -> usize {
        match self {
            Spin::One => 0,
            Spin::Two => 1,
        }
    }

    /// Parse `1` or `2`.
    pub fn from_number(n: u32) -> Option<Spin> {
        match n {
            1 => Some(Spin::One),
            2 => Some(Spin::Two),
            _ => None,
        }
    }

    /// One-based number.
    pub fn number(self) -> u32 {
        self.index() as u32 + 1
    }
}

/// Cartesian spin axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// Lower-case letter.
    pub fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    /// Parse `x`, `y`, `z` (case-insensitive).
    pub fn from_letter(s: &str) -> Option<Axis> {
        match s {
            "x" | "X" => Some(Axis::X),
            "y" | "Y" => Some(Axis::Y),
            "z" | "Z" => Some(Axis::Z),
            _ => None,
        }
    }
}

fn pauli_half(axis: Axis) -> Matrix2<C64> {
    let h = 0.5;
    match axis {
        Axis::X => Matrix2::new(ZERO, C64::new(h, 0.0), C64::new(h, 0.0), ZERO),
        Axis::Y => Matrix2::new(ZERO, C64::new(0.0, -h), C64::new(0.0, h), ZERO),
        Axis::Z => Matrix2::new(C64::new(h, 0.0), ZERO, ZERO, C64::new(-h, 0.0)),
    }
}

/// Kronecker product of two single-spin 2×2 matrices (spin 1 first).
pub fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

/// A 4×4 operator on the spin pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinOperator {
    m: Mat4,
}

impl SpinOperator {
    /// Wrap a raw matrix.
    pub fn from_matrix(m: Mat4) -> Self {
        SpinOperator { m }
    }

    /// Underlying matrix.
    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    /// Identity operator.
    pub fn identity() -> Self {
        SpinOperator { m: Mat4::identity() }
    }

    /// Zero operator.
    pub fn zero() -> Self {
        SpinOperator { m: Mat4::zeros() }
    }

    /// Single-spin component S_{n,axis}.
    pub fn single(spin: Spin, axis: Axis) -> Self {
        let s = pauli_half(axis);
        let id = Matrix2::identity();
        let m = match spin {
            Spin::One => kron2(&s, &id),
            Spin::Two => kron2(&id, &s),
        };
        SpinOperator { m }
    }

    /// Raising operator S_{n+} = S_{nx} + i S_{ny}.
    pub fn raising(spin: Spin) -> Self {
        Self::single(spin, Axis::X) + Self::single(spin, Axis::Y) * C64::new(0.0, 1.0)
    }

    /// Lowering operator S_{n−} = S_{nx} − i S_{ny}.
    pub fn lowering(spin: Spin) -> Self {
        Self::single(spin, Axis::X) - Self::single(spin, Axis::Y) * C64::new(0.0, 1.0)
    }

    /// Two-spin product 2 S_{1a} S_{2b}.
    pub fn bilinear(a: Axis, b: Axis) -> Self {
        (Self::single(Spin::One, a) * Self::single(Spin::Two, b)) * 2.0
    }

    /// Hermitian conjugate.
    pub fn adjoint(&self) -> Self {
        SpinOperator { m: self.m.adjoint() }
    }

    /// Trace.
    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Largest |A − A†| entry.
    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.m)
    }

    /// True when Hermitian within [`HERMITIAN_TOL`].
    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Add for SpinOperator {
    type Output = SpinOperator;
    fn add(self, rhs: Self) -> Self {
        SpinOperator { m: self.m + rhs.m }
    }
}

impl Sub for SpinOperator {
    type Output = SpinOperator;
    fn sub(self, rhs: Self) -> Self {
        SpinOperator { m: self.m - rhs.m }
    }
}

impl Neg for SpinOperator {
    type Output = SpinOperator;
    fn neg(self) -> Self {
        SpinOperator { m: -self.m }
    }
}

impl Mul for SpinOperator {
    type Output = SpinOperator;
    fn mul(self, rhs: Self) -> Self {
        SpinOperator { m: self.m * rhs.m }
    }
}

impl Mul<f64> for SpinOperator {
    type Output = SpinOperator;
    fn mul(self, rhs: f64) -> Self {
        SpinOperator { m: self.m * C64::new(rhs, 0.0) }
    }
}

impl Mul<C64> for SpinOperator {
    type Output = SpinOperator;
    fn mul(self, rhs: C64) -> Self {
        SpinOperator { m: self.m * rhs }
    }
}

/// Largest |A − A†| entry of a raw matrix.
pub fn hermitian_deviation(m: &Mat4) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Commutator [A, B].
pub fn commutator(a: &SpinOperator, b: &SpinOperator) -> SpinOperator {
    SpinOperator::from_matrix(a.m * b.m - b.m * a.m)
}

/// Double commutator [[A, H₁], H₂].
pub fn double_commutator(a: &SpinOperator, h1: &SpinOperator, h2: &SpinOperator) -> SpinOperator {
    commutator(&commutator(a, h1), h2)
}

/// Canonical positions of the 15 product operators.
pub mod index {
    pub const S1X: usize = 0;
    pub const S1Y: usize = 1;
    pub const S1Z: usize = 2;
    pub const S2X: usize = 3;
    pub const S2Y: usize = 4;
    pub const S2Z: usize = 5;
    pub const XX: usize = 6;
    pub const XY: usize = 7;
    pub const XZ: usize = 8;
    pub const YX: usize = 9;
    pub const YY: usize = 10;
    pub const YZ: usize = 11;
    pub const ZX: usize = 12;
    pub const ZY: usize = 13;
    pub const ZZ: usize = 14;
}

/// Human-readable labels in canonical order.
pub const BASIS_LABELS: [&str; 15] = [
    "S1x", "S1y", "S1z", "S2x", "S2y", "S2z", "2S1xS2x", "2S1xS2y", "2S1xS2z", "2S1yS2x",
    "2S1yS2y", "2S1yS2z", "2S1zS2x", "2S1zS2y", "2S1zS2z",
];

/// The orthonormal product-operator basis {S_{1x}, …, 2S_{1z}S_{2z}}.
#[derive(Clone, Debug)]
pub struct ProductBasis {
    ops: [SpinOperator; 15],
}

impl ProductBasis {
    /// Operator at canonical position `l` (0-based).
    pub fn op(&self, l: usize) -> &SpinOperator {
        &self.ops[l]
    }

    /// All operators in canonical order.
    pub fn ops(&self) -> &[SpinOperator; 15] {
        &self.ops
    }
}

/// Build the 15-operator basis in canonical order.
pub fn product_basis() -> ProductBasis {
    let axes = [Axis::X, Axis::Y, Axis::Z];
    let mut ops = [SpinOperator::zero(); 15];
    for (i, &a) in axes.iter().enumerate() {
        ops[i] = SpinOperator::single(Spin::One, a);
        ops[3 + i] = SpinOperator::single(Spin::Two, a);
    }
    for (i, &a) in axes.iter().enumerate() {
        for (j, &b) in axes.iter().enumerate() {
            ops[6 + 3 * i + j] = SpinOperator::bilinear(a, b);
        }
    }
    ProductBasis { ops }
}

/// Deviation density matrix (Hermitian, traceless).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    m: Mat4,
}

impl DensityMatrix {
    /// Validate and wrap a deviation density matrix.
    pub fn new(m: Mat4) -> Result<Self> {
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace().norm();
        if tr > HERMITIAN_TOL {
            return Err(Error::NotTraceless(tr));
        }
        Ok(DensityMatrix { m })
    }

    /// Wrap a matrix already known to be a valid deviation (hermitized).
    pub(crate) fn from_trusted(m: Mat4) -> Self {
        DensityMatrix { m: (m + m.adjoint()) * C64::new(0.5, 0.0) }
    }

    /// Zero deviation (fully mixed state).
    pub fn zero() -> Self {
        DensityMatrix { m: Mat4::zeros() }
    }

    /// Underlying matrix.
    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    /// Full density matrix 𝕀/4 + ρ.
    pub fn full(&self) -> Mat4 {
        self.m + Mat4::identity() * C64::new(0.25, 0.0)
    }

    /// Tr ρ² of the deviation part.
    pub fn purity(&self) -> f64 {
        (self.m * self.m).trace().re
    }

    /// Scale by a real factor.
    pub fn scaled(&self, c: f64) -> Self {
        DensityMatrix { m: self.m * C64::new(c, 0.0) }
    }

    /// Largest |entry| of the difference to another deviation matrix.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (self.m - other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Add for DensityMatrix {
    type Output = DensityMatrix;
    fn add(self, rhs: Self) -> Self {
        DensityMatrix { m: self.m + rhs.m }
    }
}

/// Coherence-vector representation v_l = Tr{P_l ρ} with its equilibrium reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceVector {
    pub v: [f64; 15],
    pub v_eq: [f64; 15],
}

impl CoherenceVector {
    /// Vector with zero equilibrium reference.
    pub fn new(v: [f64; 15]) -> Self {
        CoherenceVector { v, v_eq: [0.0; 15] }
    }

    /// Euclidean norm of v.
    pub fn norm(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl fmt::Display for CoherenceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, x) in BASIS_LABELS.iter().zip(self.v.iter()) {
            if *x != 0.0 {
                write!(f, "{label}={x:+.6e} ")?;
            }
        }
        Ok(())
    }
}

/// Project a deviation density matrix onto the product basis.
pub fn to_coherence_vector(rho: &DensityMatrix) -> CoherenceVector {
    let basis = product_basis();
    let mut v = [0.0; 15];
    for (l, p) in basis.ops().iter().enumerate() {
        v[l] = (p.matrix() * rho.matrix()).trace().re;
    }
    CoherenceVector::new(v)
}

/// Validate a raw matrix and project it onto the product basis.
pub fn coherence_vector_of(m: &Mat4) -> Result<CoherenceVector> {
    Ok(to_coherence_vector(&DensityMatrix::new(*m)?))
}

/// Reassemble ρ = Σ v_l P_l.
pub fn from_coherence_vector(cv: &CoherenceVector) -> DensityMatrix {
    let basis = product_basis();
    let mut m = Mat4::zeros();
    for (l, p) in basis.ops().iter().enumerate() {
        m += p.matrix() * C64::new(cv.v[l], 0.0);
    }
    DensityMatrix { m }
}

/// The four z-basis Bell states and their x-basis counterparts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellStateId {
    S0,
    T0z,
    PsiPlusZ,
    PsiMinusZ,
    T0x,
    PsiPlusX,
    PsiMinusX,
}

impl BellStateId {
    /// The four z-basis targets.
    pub const Z_BASIS: [BellStateId; 4] =
        [BellStateId::S0, BellStateId::T0z, BellStateId::PsiPlusZ, BellStateId::PsiMinusZ];

    /// True for states in the zero-quantum subspace {|T₀⟩, |S₀⟩}.
    pub fn is_zero_quantum(self) -> bool {
        matches!(self, BellStateId::S0 | BellStateId::T0z)
    }

    /// Normalized state vector.
    pub fn ket(self) -> Ket {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = |a: f64, b: f64, c: f64, d: f64| {
            Ket::new(C64::new(a, 0.0), C64::new(b, 0.0), C64::new(c, 0.0), C64::new(d, 0.0))
        };
        let up_x = [r, r];
        let dn_x = [r, -r];
        let pair = |a: [f64; 2], b: [f64; 2]| z(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]);
        match self {
            BellStateId::S0 => z(0.0, r, -r, 0.0),
            BellStateId::T0z => z(0.0, r, r, 0.0),
            BellStateId::PsiPlusZ => z(r, 0.0, 0.0, r),
            BellStateId::PsiMinusZ => z(r, 0.0, 0.0, -r),
            BellStateId::T0x => (pair(up_x, dn_x) + pair(dn_x, up_x)) * C64::new(r, 0.0),
            BellStateId::PsiPlusX => (pair(up_x, up_x) + pair(dn_x, dn_x)) * C64::new(r, 0.0),
            BellStateId::PsiMinusX => (pair(up_x, up_x) - pair(dn_x, dn_x)) * C64::new(r, 0.0),
        }
    }

    /// Parse a program/config token (`S0`, `T0`, `T0z`, `PSI+`, `psi_minus_z`, …).
    pub fn parse(s: &str) -> Option<BellStateId> {
        let t: String = s.chars().filter(|c| *c != '_').collect();
        match t.to_ascii_lowercase().as_str() {
            "s0" => Some(BellStateId::S0),
            "t0" | "t0z" => Some(BellStateId::T0z),
            "psi+" | "psi+z" | "psiplus" | "psiplusz" => Some(BellStateId::PsiPlusZ),
            "psi-" | "psi-z" | "psiminus" | "psiminusz" => Some(BellStateId::PsiMinusZ),
            "t0x" => Some(BellStateId::T0x),
            "psi+x" | "psiplusx" => Some(BellStateId::PsiPlusX),
            "psi-x" | "psiminusx" => Some(BellStateId::PsiMinusX),
            _ => None,
        }
    }

    /// Canonical token.
    pub fn name(self) -> &'static str {
        match self {
            BellStateId::S0 => "S0",
            BellStateId::T0z => "T0z",
            BellStateId::PsiPlusZ => "PsiPlusZ",
            BellStateId::PsiMinusZ => "PsiMinusZ",
            BellStateId::T0x => "T0x",
            BellStateId::PsiPlusX => "PsiPlusX",
            BellStateId::PsiMinusX => "PsiMinusX",
        }
    }
}

/// Projector |ψ⟩⟨ψ|.
pub fn projector(psi: &Ket) -> Mat4 {
    psi * psi.adjoint()
}

/// Basis ket |m₁ m₂⟩ with `true` meaning spin up.
pub fn product_ket(up1: bool, up2: bool) -> Ket {
    let mut k = Ket::zeros();
    let i = (if up1 { 0 } else { 2 }) + if up2 { 0 } else { 1 };
    k[i] = ONE;
    k
}

/// Deviation |Ψ⟩⟨Ψ| − 𝕀/4 of a Bell state.
pub fn bell_density(id: BellStateId) -> DensityMatrix {
    pure_deviation(&id.ket())
}

/// Deviation |ψ⟩⟨ψ| − 𝕀/4 of any normalized pure state.
pub fn pure_deviation(psi: &Ket) -> DensityMatrix {
    DensityMatrix::from_trusted(projector(psi) - Mat4::identity() * C64::new(0.25, 0.0))
}

/// Thermal deviation ε₁S_{1z} + ε₂S_{2z}.
pub fn equilibrium_density(eps1: f64, eps2: f64) -> DensityMatrix {
    let m = SpinOperator::single(Spin::One, Axis::Z) * eps1 + SpinOperator::single(Spin::Two, Axis::Z) * eps2;
    DensityMatrix { m: *m.matrix() }
}

/// Tr{O ρ} for Hermitian O.
pub fn expectation(rho: &DensityMatrix, o: &SpinOperator) -> Result<f64> {
    let dev = o.hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    Ok((o.matrix() * rho.matrix()).trace().re)
}

/// Tr{O ρ} on the full density matrix 𝕀/4 + ρ.
pub fn expectation_full(rho: &DensityMatrix, o: &SpinOperator) -> Result<f64> {
    Ok(expectation(rho, o)? + 0.25 * o.trace().re)
}
