//! Operator-level reconstruction of the relaxation superoperator.
//!
//! The fluctuating Hamiltonian in the double-rotating frame is written as a sum
//! of terms f_a(t)·e^{iω_a t}·X_a, where f_a is a coefficient times one of the
//! random amplitudes (F₀, F₁, F₂, α_{nz}, α_{n⊥}, slow α^J_{nz}) or its complex
//! conjugate and X_a is built from single-spin operators. Every double commutator
//! [X_a, [X_b, P_l]] is evaluated numerically, weighted by the equal-time
//! covariance ⟨f_a f_b⟩ and the spectral density ½𝒥(ω_b), and projected onto the
//! product basis:
//!
//! Γ_{ml} = Σ_{a,b; ω_a+ω_b=0} ⟨f_a f_b⟩·½𝒥(ω_b)·Tr{P_m [X_a,[X_b,P_l]]}.
//!
//! Pairs with ω_a+ω_b ≠ 0 are quickly oscillating and dropped when the
//! frequency exceeds `qot_factor` times the rate scale of the pair; anything in
//! between is reported as ambiguous. The imaginary (frequency-shift) part of
//! the spectral integral is discarded, as in the analytic theory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::redfield::{DiagonalRates, MicroParams, ModeRate, OffDiagonalRates, SpectralDensity};
use crate::spinops::{double_commutator, index as ix, product_basis, Axis, Spin, SpinOperator, C64};

/// Random amplitudes of the fluctuating Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Amp {
    F0,
    F1,
    F2,
    A1z,
    A2z,
    A1p,
    A2p,
    J1z,
    J2z,
}

impl Amp {
    fn is_real(self) -> bool {
        matches!(self, Amp::F0 | Amp::A1z | Amp::A2z | Amp::J1z | Amp::J2z)
    }

    fn is_slow(self) -> bool {
        matches!(self, Amp::J1z | Amp::J2z)
    }
}

/// One term coef·x·e^{iωt}·X with x = amp or amp*.
#[derive(Clone, Copy, Debug)]
struct Term {
    amp: Amp,
    conj: bool,
    coef: C64,
    omega: f64,
    op: SpinOperator,
}

/// Which mechanisms enter the reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanisms {
    pub dipolar: bool,
    pub fields: bool,
    pub slow_j: bool,
}

impl Mechanisms {
    pub const ALL: Mechanisms = Mechanisms { dipolar: true, fields: true, slow_j: true };
}

/// Settings of the operator oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorOptions {
    /// A pair oscillating faster than `qot_factor` × its rate scale is dropped.
    pub qot_factor: f64,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions { qot_factor: 100.0 }
    }
}

fn terms(p: &MicroParams, m: Mechanisms) -> Vec<Term> {
    let s = |spin, axis| SpinOperator::single(spin, axis);
    let plus1 = SpinOperator::raising(Spin::One);
    let plus2 = SpinOperator::raising(Spin::Two);
    let z1 = s(Spin::One, Axis::Z);
    let z2 = s(Spin::Two, Axis::Z);
    let (w1, w2) = (p.omega1, p.omega2);
    let one = C64::new(1.0, 0.0);
    let mut out = Vec::new();
    let mut push_pair = |amp: Amp, coef: C64, omega: f64, op: SpinOperator| {
        out.push(Term { amp, conj: false, coef, omega, op });
        out.push(Term { amp, conj: true, coef: coef.conj(), omega: -omega, op: op.adjoint() });
    };
    if m.dipolar {
        push_pair(Amp::F1, one, w1, plus1 * z2);
        push_pair(Amp::F1, one, w2, z1 * plus2);
        push_pair(Amp::F2, one, w1 + w2, plus1 * plus2);
        push_pair(Amp::F0, C64::new(-0.25, 0.0), w1 - w2, plus1 * SpinOperator::lowering(Spin::Two));
    }
    if m.fields {
        push_pair(Amp::A1p, one, w1, plus1);
        push_pair(Amp::A2p, one, w2, plus2);
    }
    if m.dipolar {
        out.push(Term { amp: Amp::F0, conj: false, coef: one, omega: 0.0, op: z1 * z2 });
    }
    if m.fields {
        out.push(Term { amp: Amp::A1z, conj: false, coef: one, omega: 0.0, op: z1 });
        out.push(Term { amp: Amp::A2z, conj: false, coef: one, omega: 0.0, op: z2 });
    }
    if m.slow_j {
        out.push(Term { amp: Amp::J1z, conj: false, coef: one, omega: 0.0, op: z1 });
        out.push(Term { amp: Amp::J2z, conj: false, coef: one, omega: 0.0, op: z2 });
    }
    out
}

/// Equal-time second moment ⟨x_a x_b⟩ of two (possibly conjugated) amplitudes
/// under isotropic averaging: ⟨zw⟩ = 0 for complex amplitudes, ⟨zw*⟩ tabulated.
fn covariance(p: &MicroParams, a: Amp, ca: bool, b: Amp, cb: bool) -> f64 {
    let k2 = p.k * p.k;
    if a.is_real() != b.is_real() {
        return 0.0;
    }
    if a.is_real() {
        return match (a, b) {
            (Amp::F0, Amp::F0) => 0.8 * k2,
            (Amp::A1z, Amp::A1z) => p.a1z2,
            (Amp::A2z, Amp::A2z) => p.a2z2,
            (Amp::A1z, Amp::A2z) | (Amp::A2z, Amp::A1z) => p.a1z2z,
            (Amp::J1z, Amp::J1z) => p.slow_j.aj1z2,
            (Amp::J2z, Amp::J2z) => p.slow_j.aj2z2,
            (Amp::J1z, Amp::J2z) | (Amp::J2z, Amp::J1z) => p.slow_j.aj12,
            _ => 0.0,
        };
    }
    if ca == cb {
        return 0.0;
    }
    // ⟨z w*⟩ table (all entries real, hence symmetric).
    match (a, b) {
        (Amp::F1, Amp::F1) => 0.3 * k2,
        (Amp::F2, Amp::F2) => 0.3 * k2,
        (Amp::A1p, Amp::A1p) => p.a1perp2,
        (Amp::A2p, Amp::A2p) => p.a2perp2,
        (Amp::F1, Amp::A1p) | (Amp::A1p, Amp::F1) => 0.5 * p.xcorr1,
        (Amp::F1, Amp::A2p) | (Amp::A2p, Amp::F1) => 0.5 * p.xcorr2,
        _ => 0.0,
    }
}

/// Full 15×15 rate matrix Γ (dv/dt = −Γv) in the product basis.
pub fn rate_matrix(p: &MicroParams, j: &SpectralDensity, m: Mechanisms, opts: &OperatorOptions) -> Result<[[f64; 15]; 15]> {
    let ts = terms(p, m);
    let basis = product_basis();
    let slow = SpectralDensity::exponential(p.slow_j.t1dist);
    let mut gamma = [[0.0; 15]; 15];
    for a in &ts {
        for b in &ts {
            if a.amp.is_slow() != b.amp.is_slow() {
                continue;
            }
            let g = covariance(p, a.amp, a.conj, b.amp, b.conj);
            if g == 0.0 {
                continue;
            }
            let jd = if b.amp.is_slow() { &slow } else { j };
            let weight = a.coef * b.coef * g * 0.5 * jd.eval(b.omega);
            if weight.norm() == 0.0 {
                continue;
            }
            let freq = a.omega + b.omega;
            if freq != 0.0 {
                // Rate scale: weight times the largest double-commutator norm (≤ 1 for spin-½ products).
                let rate = weight.norm();
                if freq.abs() > opts.qot_factor * rate {
                    continue;
                }
                return Err(Error::AmbiguousSecular { frequency: freq, rate });
            }
            for (l, pl) in basis.ops().iter().enumerate() {
                // [X_a,[X_b,P]] = [[P,X_b],X_a].
                let dc = double_commutator(pl, &b.op, &a.op);
                for (mi, pm) in basis.ops().iter().enumerate() {
                    let tr = (pm.matrix() * dc.matrix()).trace() * weight;
                    gamma[mi][l] += tr.re;
                }
            }
        }
    }
    Ok(gamma)
}

/// Rates read off the reconstructed superoperator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorRates {
    pub diagonal: DiagonalRates,
    pub offdiagonal: OffDiagonalRates,
    /// Largest leakage |Γ e − (eᵀΓe) e| of the ZQ/DQ eigenmode vectors.
    pub mode_leakage: f64,
    /// Largest |Γ_{ml}| coupling the diagonal sector to any other component.
    pub diagonal_leakage: f64,
}

fn mode_rate(g: &[[f64; 15]; 15], e: &[(usize, f64)]) -> (f64, f64) {
    let mut ge = [0.0; 15];
    for (m, row) in g.iter().enumerate() {
        ge[m] = e.iter().map(|&(l, c)| row[l] * c).sum();
    }
    let lam: f64 = e.iter().map(|&(l, c)| ge[l] * c).sum();
    let mut resid = ge;
    for &(l, c) in e {
        resid[l] -= lam * c;
    }
    (lam, resid.iter().fold(0.0, |a: f64, b| a.max(b.abs())))
}

fn read_rates(g: &[[f64; 15]; 15]) -> (DiagonalRates, f64, f64, f64, f64) {
    let d = DiagonalRates {
        mu1: g[ix::S1Z][ix::S1Z],
        mu2: g[ix::S2Z][ix::S2Z],
        mu12: g[ix::ZZ][ix::ZZ],
        sigma12: g[ix::S1Z][ix::S2Z],
        delta1: g[ix::ZZ][ix::S1Z],
        delta2: g[ix::ZZ][ix::S2Z],
    };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let modes = [
        vec![(ix::XX, r), (ix::YY, r)],
        vec![(ix::XX, r), (ix::YY, -r)],
        vec![(ix::XY, r), (ix::YX, -r)],
        vec![(ix::XY, r), (ix::YX, r)],
    ];
    let (zq, l1) = mode_rate(g, &modes[0]);
    let (dq, l2) = mode_rate(g, &modes[1]);
    let (_, l3) = mode_rate(g, &modes[2]);
    let (_, l4) = mode_rate(g, &modes[3]);
    let sector = [ix::S1Z, ix::S2Z, ix::ZZ];
    let mut dleak: f64 = 0.0;
    for &l in &sector {
        for (m, row) in g.iter().enumerate() {
            if !sector.contains(&m) {
                dleak = dleak.max(row[l].abs()).max(g[l][m].abs());
            }
        }
    }
    (d, zq, dq, l1.max(l2).max(l3).max(l4), dleak)
}

/// Reconstruct every rate, with the off-diagonal rates split by mechanism.
pub fn appendix_b_rates(p: &MicroParams, j: &SpectralDensity, opts: &OperatorOptions) -> Result<OperatorRates> {
    let full = rate_matrix(p, j, Mechanisms::ALL, opts)?;
    let (diagonal, _, _, leak, dleak) = read_rates(&full);
    let part = |m: Mechanisms| -> Result<(f64, f64)> {
        let g = rate_matrix(p, j, m, opts)?;
        let (_, zq, dq, _, _) = read_rates(&g);
        Ok((zq, dq))
    };
    let none = Mechanisms { dipolar: false, fields: false, slow_j: false };
    let (dz, dd) = part(Mechanisms { dipolar: true, ..none })?;
    let (fz, fd) = part(Mechanisms { fields: true, ..none })?;
    let (sz, sd) = part(Mechanisms { slow_j: true, ..none })?;
    Ok(OperatorRates {
        diagonal,
        offdiagonal: OffDiagonalRates {
            zq: ModeRate { dipolar: dz, field: fz, slow_j: sz },
            dq: ModeRate { dipolar: dd, field: fd, slow_j: sd },
            decomposed: true,
        },
        mode_leakage: leak,
        diagonal_leakage: dleak,
    })
}

/// Operator-level reconstruction with the exponential spectral density of `p`.
pub fn appendix_b_rates_default(p: &MicroParams) -> Result<OperatorRates> {
    appendix_b_rates(p, &p.spectral(), &OperatorOptions::default())
}
