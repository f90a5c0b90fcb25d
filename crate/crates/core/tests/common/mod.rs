//! Shared fixtures: the published ¹H–¹³C rate set and helpers.
#![allow(dead_code)]

use bellrelax::constants::{GAMMA_13C, GAMMA_1H};
use bellrelax::redfield::{DiagonalRates, OffDiagonalRates};
use bellrelax::sequences::SimContext;
use bellrelax::spinops::{DensityMatrix, Mat4, C64};
use rand::Rng;

/// Published relaxation rates [1/s]; μ₁₂ from (μZQ+μDQ)/2.
pub fn table_rates() -> DiagonalRates {
    DiagonalRates { mu1: 0.50, mu2: 0.41, mu12: 0.335, sigma12: 0.19, delta1: 0.0159, delta2: -0.026 }
}

pub const LAMBDA_ZQ: f64 = 0.326;
pub const LAMBDA_DQ: f64 = 0.568;
pub const MU_ZQ_PUBLISHED: f64 = 0.37;
pub const MU_DQ_PUBLISHED: f64 = 0.30;

/// ε₁/ε₂ = γ_H/γ_C.
pub fn eps_ratio() -> f64 {
    GAMMA_1H / GAMMA_13C
}

pub const EPS2: f64 = 1e-5;

pub fn eps1() -> f64 {
    eps_ratio() * EPS2
}

/// J_HC = 138 Hz as angular frequency.
pub fn omega_j() -> f64 {
    2.0 * std::f64::consts::PI * 138.0
}

pub fn table_ctx() -> SimContext {
    SimContext::new(table_rates(), OffDiagonalRates::from_totals(LAMBDA_ZQ, LAMBDA_DQ), eps1(), EPS2, omega_j())
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Random Hermitian traceless 4×4 matrix with entries of order 1.
pub fn random_deviation(rng: &mut impl Rng) -> DensityMatrix {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        for j in i..4 {
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = if i == j { 0.0 } else { rng.random_range(-1.0..1.0) };
            m[(i, j)] = C64::new(re, im);
            m[(j, i)] = C64::new(re, -im);
        }
    }
    let tr = m.trace() / C64::new(4.0, 0.0);
    for i in 0..4 {
        m[(i, i)] -= tr;
    }
    DensityMatrix::new(m).expect("constructed Hermitian and traceless")
}
