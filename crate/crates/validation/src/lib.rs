//! Published reference data and parameter sets used by the acceptance run,
//! plus the fuzz harnesses shared with `fuzz/`.

pub mod harness;


use std::f64::consts::PI;

use bellrelax::constants::{GAMMA_13C, GAMMA_1H};
use bellrelax::oracle::TelegraphField;
use bellrelax::redfield::{DiagonalRates, MicroParams, OffDiagonalRates};
use bellrelax::sequences::SimContext;

/// Measured ¹H–¹³C rates [1/s] with their quoted one-sigma uncertainties.
pub mod table_i {
    pub const MU1: (f64, f64) = (0.50, 0.01);
    pub const MU2: (f64, f64) = (0.41, 0.02);
    pub const SIGMA12: (f64, f64) = (0.19, 0.02);
    pub const DELTA1: (f64, f64) = (0.0159, 0.0008);
    pub const DELTA2: (f64, f64) = (-0.026, 0.004);
    pub const MU_ZQ: (f64, f64) = (0.37, 0.01);
    pub const MU_DQ: (f64, f64) = (0.30, 0.04);
    pub const LAMBDA_ZQ: (f64, f64) = (0.326, 0.002);
    pub const LAMBDA_DQ: (f64, f64) = (0.568, 0.008);
}

/// Microscopic characteristics (×𝒥₀, 1/s) as published.
pub mod table_iii {
    pub const K2_J0: f64 = 0.76;
    pub const A1PERP2_J0: f64 = 0.06;
    pub const A2PERP2_J0: f64 = 0.02;
    pub const AZ_SUM_J0: f64 = 0.25;
    pub const A1Z2Z_J0: f64 = 0.026;
}

/// Proton rate of the natural-abundance control sample and its fit error [1/s].
pub const CONTROL_MU_H: (f64, f64) = (0.122, 0.001);
/// Band of the prediction 2⟨|α₁⊥|²⟩𝒥₀ from the microscopic uncertainties [1/s].
pub const CONTROL_BAND: f64 = 0.04;

/// Carbon polarization used for simulations (arbitrary scale).
pub const EPS2: f64 = 1e-5;

/// Proton polarization: ε₁/ε₂ = γ_H/γ_C.
pub fn eps1() -> f64 {
    GAMMA_1H / GAMMA_13C * EPS2
}

/// J_HC = 138 Hz [rad/s].
pub fn omega_j() -> f64 {
    2.0 * PI * 138.0
}

/// Table I diagonal rates with μ₁₂ = (μZQ+μDQ)/2.
pub fn table_rates() -> DiagonalRates {
    use table_i::*;
    DiagonalRates {
        mu1: MU1.0,
        mu2: MU2.0,
        mu12: 0.5 * (MU_ZQ.0 + MU_DQ.0),
        sigma12: SIGMA12.0,
        delta1: DELTA1.0,
        delta2: DELTA2.0,
    }
}

/// Their uncertainties (μ₁₂ from the quoted μZQ/μDQ errors).
pub fn table_rate_errors() -> DiagonalRates {
    use table_i::*;
    DiagonalRates {
        mu1: MU1.1,
        mu2: MU2.1,
        mu12: 0.5 * MU_ZQ.1.hypot(MU_DQ.1),
        sigma12: SIGMA12.1,
        delta1: DELTA1.1,
        delta2: DELTA2.1,
    }
}

pub fn table_offdiagonal() -> OffDiagonalRates {
    OffDiagonalRates::from_totals(table_i::LAMBDA_ZQ.0, table_i::LAMBDA_DQ.0)
}

/// Noiseless simulation context driven by the Table I rates.
pub fn table_ctx() -> SimContext {
    SimContext::new(table_rates(), table_offdiagonal(), eps1(), EPS2, omega_j())
}

/// Monte Carlo parameter set (also `configs/oracle.cfg`): slow enough to
/// integrate at desk scale, with all mechanisms and both cross-correlations.
pub fn oracle_a_params() -> MicroParams {
    let k: f64 = 0.07;
    let f1 = 0.3 * k * k;
    let (c1, c2) = (0.5, -0.5);
    MicroParams {
        k,
        tau_c: 1.0,
        omega1: 0.4,
        omega2: 0.1,
        a1perp2: 0.0005 + c1 * c1 * f1,
        a2perp2: 0.0002 + c2 * c2 * f1,
        a1z2: 0.001,
        a2z2: 0.0015,
        a1z2z: 0.0004,
        xcorr1: 2.0 * c1 * f1,
        xcorr2: 2.0 * c2 * f1,
        ..Default::default()
    }
}

/// Telegraph set: four distant spins coupled to spin 2 only, T1dist = 3 s.
pub fn telegraph_field() -> TelegraphField {
    TelegraphField::uniform(4, 0.0, 0.04, 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_mu12_matches_published_column() {
        // Published μ₁₂ = 0.34 ± 0.02.
        assert!((table_rates().mu12 - 0.335).abs() < 1e-15);
        assert!((table_rate_errors().mu12 - 0.02).abs() < 1e-3);
    }

    #[test]
    fn oracle_set_is_admissible_and_slow() {
        let p = oracle_a_params();
        p.validate().unwrap();
        assert_eq!(p.omega_max_tau_c(), 0.5);
    }
}
