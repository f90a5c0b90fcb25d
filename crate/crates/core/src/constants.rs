//! Physical constants and helpers that turn lab quantities into model inputs.

use std::f64::consts::PI;

/// Reduced Planck constant [J·s].
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant [J/K].
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum permeability over 4π [T·m/A].
pub const MU0_OVER_4PI: f64 = 1e-7;
/// ¹H gyromagnetic ratio [rad/(s·T)].
pub const GAMMA_1H: f64 = 2.675_221_874_4e8;
/// ¹³C gyromagnetic ratio [rad/(s·T)].
pub const GAMMA_13C: f64 = 6.728_284e7;

/// Convert a frequency in Hz to an angular frequency in rad/s.
pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

/// Dipolar constant k = (μ₀/4π)γ₁γ₂ħ/r³ [rad/s] for internuclear distance `r` [m].
pub fn dipolar_constant(gamma1: f64, gamma2: f64, r: f64) -> f64 {
    MU0_OVER_4PI * gamma1 * gamma2 * HBAR / (r * r * r)
}

/// High-temperature equilibrium polarization ε = ħγB/(4k_BT), normalized so that
/// the thermal deviation density matrix is ε₁S_{1z} + ε₂S_{2z}.
pub fn polarization(gamma: f64, field_t: f64, temperature_k: f64) -> f64 {
    HBAR * gamma * field_t / (4.0 * K_B * temperature_k)
}
