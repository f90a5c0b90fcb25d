//! Operator-level and Monte Carlo oracles against the analytic rates.

mod common;

use bellrelax::oracle::stochastic::{compare_with_analytic, simulate_member};
use bellrelax::oracle::{
    appendix_b_rates_default, rate_matrix, rotational_trajectory, sample_trajectory, stochastic_rates,
    telegraph_relaxation, Mechanisms, OperatorOptions, StochasticOptions, TelegraphField,
};
use bellrelax::redfield::{anderson_weiss_exponential, diagonal_rates, offdiagonal_rates, MicroParams, SlowJ};
use bellrelax::spinops::{bell_density, BellStateId};
use bellrelax::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut impl Rng) -> MicroParams {
    let tau_c = rng.random_range(0.2..2.0);
    let k: f64 = rng.random_range(0.1..1.0);
    let (a1z2, a2z2): (f64, f64) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
    let f1 = 0.3 * k * k;
    let (a1perp2, a2perp2): (f64, f64) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
    MicroParams {
        k,
        tau_c,
        omega1: rng.random_range(500.0..2000.0),
        omega2: rng.random_range(100.0..400.0),
        a1perp2,
        a2perp2,
        a1z2,
        a2z2,
        a1z2z: rng.random_range(-1.0..1.0) * (a1z2 * a2z2).sqrt(),
        xcorr1: rng.random_range(-1.0..1.0) * 2.0 * (f1 * a1perp2).sqrt(),
        xcorr2: rng.random_range(-1.0..1.0) * 2.0 * (f1 * a2perp2).sqrt(),
        slow_j: SlowJ {
            aj1z2: rng.random_range(0.0..0.01),
            aj2z2: rng.random_range(0.0..0.01),
            aj12: 0.0,
            t1dist: rng.random_range(1.0..5.0),
        },
        ..Default::default()
    }
}

#[test]
fn operator_oracle_matches_analytic_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let p = random_params(&mut rng);
        p.validate().unwrap();
        let o = appendix_b_rates_default(&p).unwrap();
        let d = diagonal_rates(&p);
        let od = offdiagonal_rates(&p);
        let scale = [d.mu1, d.mu2, d.mu12, od.zq.total(), od.dq.total()].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let close = |a: f64, b: f64, what: &str| assert!((a - b).abs() <= 1e-10 * scale, "{what}: {a} vs {b}");
        close(o.diagonal.mu1, d.mu1, "mu1");
        close(o.diagonal.mu2, d.mu2, "mu2");
        close(o.diagonal.mu12, d.mu12, "mu12");
        close(o.diagonal.sigma12, d.sigma12, "sigma12");
        close(o.diagonal.delta1, d.delta1, "delta1");
        close(o.diagonal.delta2, d.delta2, "delta2");
        for (a, b, m) in [(o.offdiagonal.zq, od.zq, "zq"), (o.offdiagonal.dq, od.dq, "dq")] {
            close(a.dipolar, b.dipolar, m);
            close(a.field, b.field, m);
            close(a.slow_j, b.slow_j, m);
        }
        assert!(o.mode_leakage < 1e-12 * scale, "leakage {}", o.mode_leakage);
        assert!(o.diagonal_leakage < 1e-12 * scale, "diagonal leakage {}", o.diagonal_leakage);
    }
}

#[test]
fn near_degenerate_frequencies_are_ambiguous() {
    let p = MicroParams { k: 1.0, tau_c: 1.0, omega1: 1.0, omega2: 1.0 + 1e-3, ..Default::default() };
    let e = rate_matrix(&p, &p.spectral(), Mechanisms::ALL, &OperatorOptions::default());
    assert!(matches!(e, Err(Error::AmbiguousSecular { .. })), "{e:?}");
    // Exactly degenerate frequencies are secular.
    let q = MicroParams { omega2: 1.0, ..p };
    assert!(rate_matrix(&q, &q.spectral(), Mechanisms::ALL, &OperatorOptions::default()).is_ok());
}

#[test]
fn rotational_trajectory_is_isotropic_with_calibrated_tau_c() {
    let (tau_c, dt) = (1.0, 0.02);
    let lag = (tau_c / dt) as usize;
    let (mut z2, mut n, mut corr, mut nc) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..64 {
        let t = rotational_trajectory(tau_c, dt, 200.0, seed).unwrap();
        let p2: Vec<f64> = t.theta.iter().map(|th| 1.5 * th.cos().powi(2) - 0.5).collect();
        for (i, th) in t.theta.iter().enumerate() {
            z2 += th.cos().powi(2);
            n += 1.0;
            if i + lag < p2.len() {
                corr += p2[i] * p2[i + lag];
                nc += 1.0;
            }
        }
    }
    assert!((z2 / n - 1.0 / 3.0).abs() < 0.01, "⟨cos²θ⟩ = {}", z2 / n);
    // ⟨P₂(0)P₂(τ_c)⟩ = e^{−1}/5.
    let c = corr / nc / (1.0 / 5.0);
    assert!((c - (-1.0f64).exp()).abs() < 0.05 * (-1.0f64).exp(), "normalized correlation {c}");
    assert!(rotational_trajectory(tau_c, 0.1, 1.0, 0).is_err());
}

#[test]
fn field_trajectories_have_requested_moments() {
    let p = MicroParams { tau_c: 1.0, a1perp2: 0.8, a1z2: 0.3, a2z2: 0.3, a1z2z: 0.15, ..Default::default() };
    let (mut perp, mut z1, mut z2, mut z12, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for seed in 0..32 {
        let t = sample_trajectory(&p, 0.05, 500.0, seed).unwrap();
        for f in &t.fields {
            perp += f[0] * f[0] + f[1] * f[1];
            z1 += f[4] * f[4];
            z2 += f[5] * f[5];
            z12 += f[4] * f[5];
            n += 1.0;
        }
    }
    for (got, want) in [(perp / n, 0.8), (z1 / n, 0.3), (z2 / n, 0.3), (z12 / n, 0.15)] {
        assert!((got - want).abs() < 0.05 * want, "{got} vs {want}");
    }
}

#[test]
fn propagators_stay_unitary() {
    let p = MicroParams { k: 0.07, tau_c: 1.0, omega1: 0.4, omega2: 0.1, a1perp2: 0.001, a1z2: 0.001, ..Default::default() };
    let run = simulate_member(&p, 0.02, 1.0, 3, 9, &[0, 2500, 5000]).unwrap();
    assert_eq!(run.propagators.len(), 3);
    assert!(run.drift < 1e-8, "drift {:e}", run.drift);
}

fn quick(ensemble: usize, seed: u64) -> StochasticOptions {
    StochasticOptions { ensemble, seed, t_first: 10.0, t_last: 100.0, batches: 10, ..Default::default() }
}

#[test]
fn dipolar_only_narrowing_ratio() {
    // Extreme narrowing, dipolar only: μ₁/σ₁₂ = 2.
    let p = MicroParams { k: 0.1, tau_c: 1.0, omega1: 0.004, omega2: 0.001, ..Default::default() };
    let d = diagonal_rates(&p);
    assert!((d.mu1 / d.sigma12 - 2.0).abs() < 1e-4);
    let mc = stochastic_rates(&p, &quick(4000, 1)).unwrap();
    let r = mc.diagonal.mu1 / mc.diagonal.sigma12;
    let err = r * ((mc.diagonal_err.mu1 / mc.diagonal.mu1).powi(2) + (mc.diagonal_err.sigma12 / mc.diagonal.sigma12).powi(2)).sqrt();
    assert!((r - 2.0).abs() < 4.0 * err + 0.05, "μ₁/σ = {r} ± {err}");
}

#[test]
fn correlated_z_fields_leave_zq_protected() {
    let p = MicroParams { tau_c: 1.0, omega1: 0.4, omega2: 0.1, a1z2: 0.01, a2z2: 0.01, a1z2z: 0.01, ..Default::default() };
    let od = offdiagonal_rates(&p);
    assert!(od.zq.total().abs() < 1e-15);
    assert!(od.dq.total() > 0.0);
    let mc = stochastic_rates(&p, &quick(1000, 2)).unwrap();
    assert!(mc.lambda_zq.abs() < 1e-9, "λ_ZQ = {}", mc.lambda_zq);
    let z = (mc.lambda_dq - od.dq.markovian()) / mc.lambda_dq_err;
    assert!(z.abs() < 4.0, "λ_DQ z = {z}");
}

#[test]
fn stochastic_oracle_agrees_with_analytic_rates() {
    let k = 0.07;
    let f1 = 0.3 * k * k;
    let (c1, c2) = (0.5, -0.5);
    let p = MicroParams {
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
    };
    let mc = stochastic_rates(&p, &quick(2000, 3)).unwrap();
    let report = compare_with_analytic(&p, &mc);
    assert_eq!(report.rates.len(), 8);
    assert!(report.max_abs_z() < 4.0, "{}", report.to_json());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = MicroParams { k: 0.07, tau_c: 1.0, omega1: 0.4, omega2: 0.1, a1z2: 0.001, ..Default::default() };
    let opts = StochasticOptions { ensemble: 300, t_first: 2.0, t_last: 10.0, batches: 3, ..Default::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| stochastic_rates(&p, &opts).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(7));
    let field = TelegraphField::uniform(3, 0.02, 0.05, 2.0);
    let rho = bell_density(BellStateId::PsiPlusX);
    let t: Vec<f64> = (1..10).map(|i| i as f64).collect();
    let tel = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| telegraph_relaxation(&field, &rho, &t, 500, 4).unwrap())
    };
    assert_eq!(tel(1), tel(5));
}

#[test]
fn stochastic_options_are_validated() {
    let p = MicroParams { k: 0.07, tau_c: 1.0, ..Default::default() };
    assert!(stochastic_rates(&p, &StochasticOptions { t_first: 5.0, t_last: 1.0, ..quick(10, 0) }).is_err());
    assert!(stochastic_rates(&p, &StochasticOptions { batches: 1, ..quick(10, 0) }).is_err());
    assert!(stochastic_rates(&p, &StochasticOptions { dt: Some(0.5), ..quick(10, 0) }).is_err());
}

#[test]
fn telegraph_matches_anderson_weiss() {
    let field = TelegraphField::uniform(4, 0.0, 0.04, 3.0);
    let (h2, _) = field.h_second_moments();
    assert!((h2 - 4.0 * 0.04f64.powi(2) / 4.0).abs() < 1e-18);
    let t: Vec<f64> = (1..=20).map(|i| 3.0 * i as f64).collect();
    let c = telegraph_relaxation(&field, &bell_density(BellStateId::S0), &t, 20_000, 7).unwrap();
    for (k, &ti) in t.iter().enumerate() {
        let aw = anderson_weiss_exponential(ti, h2, 3.0).unwrap();
        let z = (c.zq[k] - aw) / c.zq_err[k];
        assert!(z.abs() < 4.0, "t = {ti}: {} vs {aw} (z = {z})", c.zq[k]);
    }
    // Slow-J moments feed the analytic slow-J rate through the same ⟨h²⟩.
    let s = field.slow_j();
    assert!((s.zq_second_moment() - h2).abs() < 1e-18);
}

#[test]
fn telegraph_without_fields_does_not_decay() {
    let c = telegraph_relaxation(&TelegraphField::uniform(0, 0.0, 0.0, 1.0), &bell_density(BellStateId::S0), &[0.0, 5.0], 10, 1)
        .unwrap();
    assert!(c.zq.iter().all(|&x| x == 1.0));
    assert!(c.xx.iter().all(|&x| (x + 0.5).abs() < 1e-15), "{:?}", c.xx);
    assert!(telegraph_relaxation(&TelegraphField::uniform(1, 0.0, 0.0, -1.0), &bell_density(BellStateId::S0), &[1.0], 10, 1)
        .is_err());
    assert!(telegraph_relaxation(&TelegraphField::uniform(1, 0.0, 0.0, 1.0), &bell_density(BellStateId::S0), &[2.0, 1.0], 10, 1)
        .is_err());
}
