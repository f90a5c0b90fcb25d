//! Independent brute-force validators of the analytic rates.
//!
//! * [`operator`] — numeric double commutators of the fluctuating Hamiltonian,
//!   secular selection and spectral weighting, read off as a 15×15 rate matrix.
//! * [`stochastic`] — stochastic-Liouville Monte Carlo: rotational diffusion of
//!   the internuclear vector plus Ornstein–Uhlenbeck local fields, propagated
//!   per trajectory and averaged.
//! * [`telegraph`] — exact phase accumulation under telegraph-noise distant
//!   spins, the reference for the Anderson–Weiss relaxation function.
//!
//! Ensemble member i draws from `ChaCha8Rng::seed_from_u64(seed ^ i)`. Sums over
//! members are formed in fixed blocks and combined by a pairwise tree, so the
//! results are bit-identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod operator;
pub mod stochastic;
pub mod telegraph;

pub use operator::{appendix_b_rates, appendix_b_rates_default, rate_matrix, Mechanisms, OperatorOptions, OperatorRates};
pub use stochastic::{
    rotational_trajectory, sample_trajectory, stochastic_rates, stochastic_relaxation, StochasticOptions,
    StochasticRates, Trajectory,
};
pub use telegraph::{telegraph_relaxation, TelegraphCurves, TelegraphField};

/// Members summed sequentially before the tree reduction.
const BLOCK: usize = 64;

/// One analytic-vs-Monte-Carlo comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub analytic: f64,
    pub monte_carlo: f64,
    pub stat_err: f64,
    pub z_score: f64,
}

impl RateComparison {
    pub fn new(analytic: f64, monte_carlo: f64, stat_err: f64) -> Self {
        let z = if stat_err > 0.0 { (monte_carlo - analytic) / stat_err } else { f64::INFINITY };
        RateComparison { analytic, monte_carlo, stat_err, z_score: z }
    }

    /// |MC − analytic| / |analytic|.
    pub fn relative_error(&self) -> f64 {
        (self.monte_carlo - self.analytic).abs() / self.analytic.abs()
    }
}

/// Oracle output, serialized as JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rates: BTreeMap<String, RateComparison>,
    /// Operator-oracle max relative deviation from the analytic formulas.
    pub operator_max_rel_dev: Option<f64>,
    pub ensemble: usize,
    pub dt: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl OracleReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rates.values().map(|r| r.z_score.abs()).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn tree_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Σ_{i∈range} f(i) with a thread-count-independent summation order.
pub(crate) fn deterministic_sum<F>(range: std::ops::Range<usize>, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    let starts: Vec<usize> = range.clone().step_by(BLOCK).collect();
    let blocks: Vec<Vec<f64>> = starts
        .into_par_iter()
        .map(|s| {
            let mut acc = vec![0.0; width];
            for i in s..(s + BLOCK).min(range.end) {
                let v = f(i)?;
                if v.len() != width {
                    return Err(Error::param("member", "inconsistent output width"));
                }
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    if blocks.is_empty() {
        return Ok(vec![0.0; width]);
    }
    Ok(tree_sum(blocks))
}

/// Contiguous, near-equal batch ranges covering 0..n.
pub(crate) fn batch_ranges(n: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    (0..batches).map(|b| (b * n / batches)..((b + 1) * n / batches)).collect()
}
