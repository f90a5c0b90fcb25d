//! Pulse-sequence programs: preparation chain, Table-I experiments, program text format.

mod common;

use bellrelax::dynamics::apply_pulse;
use bellrelax::fitting::{log_linear_fit, parabolic_initial_fit};
use bellrelax::measure::state_fidelity;
use bellrelax::redfield::DiagonalRates;
use bellrelax::sequences::{
    bell_program, effective_time, inversion_recovery_program, noe_program, prepare_bell_pps,
    prepare_equalized_polarization, prepare_pps_upup, run_bell_relaxation, run_custom, run_inversion_recovery,
    run_noe, BellChannel, NoiseModel, SequenceProgram, SimContext,
};
use bellrelax::spinops::{bell_density, index as ix, Axis, BellStateId, Spin};
use bellrelax::Error;

fn grid(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * dt).collect()
}

#[test]
fn program_text_round_trip() {
    let text = "PULSE 1 y 90.0\nDELAY 0.5 relax\nDELAY t both\nDHH ZQ\nDHH HH 0.002\nCRUSH\nCRUSH ZQ\nPPS\nCPMG 0.001 500\nCPMG 0.001 t\nREAD 1 ANTISYM\n";
    let p = SequenceProgram::parse(text).unwrap();
    assert_eq!(p.events().len(), 11);
    assert_eq!(p.to_string(), text);
    assert_eq!(SequenceProgram::parse(&p.to_string()).unwrap(), p);
    for prog in [inversion_recovery_program(Spin::Two), noe_program(Spin::One, Spin::Two)] {
        assert_eq!(SequenceProgram::parse(&prog.to_string()).unwrap(), prog);
    }
    for b in BellStateId::Z_BASIS {
        let prog = bell_program(b, BellChannel::XxCpmg { tau: 1e-3 }).unwrap();
        assert_eq!(SequenceProgram::parse(&prog.to_string()).unwrap(), prog);
    }
    let commented = "# comment\n  pulse 2 x -90.5  # trailing\n\nread 2 sym\n";
    assert_eq!(SequenceProgram::parse(commented).unwrap().readout(), (Spin::Two, bellrelax::sequences::Component::Sym));
}

#[test]
fn program_text_errors() {
    for bad in [
        "",
        "PULSE 1 y 90",
        "READ 1 SYM\nPULSE 1 y 90",
        "READ 1 SYM\nREAD 2 SYM",
        "PULSE 3 y 90\nREAD 1 SYM",
        "PULSE 1 q 90\nREAD 1 SYM",
        "DELAY -1 relax\nREAD 1 SYM",
        "DELAY 1 sideways\nREAD 1 SYM",
        "CPMG 0 10\nREAD 1 SYM",
        "CPMG 0.001 -3\nREAD 1 SYM",
        "DHH XQ\nREAD 1 SYM",
        "WIGGLE\nREAD 1 SYM",
        "PULSE 1 y nan\nREAD 1 SYM",
        "PULSE 1 y\nREAD 1 SYM",
    ] {
        assert!(matches!(SequenceProgram::parse(bad), Err(Error::Parse { .. })), "accepted {bad:?}");
    }
}

#[test]
fn equalization_examples() {
    let wj = common::omega_j();
    let eq = prepare_equalized_polarization(2e-5, 2e-5, wj).unwrap();
    assert!((eq.coherence.v[ix::S1Z] - 2e-5).abs() < 1e-11 && (eq.coherence.v[ix::S2Z] - 2e-5).abs() < 1e-11);

    let e2 = 1e-5;
    let r = prepare_equalized_polarization(4.0 * e2, e2, wj).unwrap();
    let v = r.coherence.v;
    assert!((v[ix::S1Z] - 2.5 * e2).abs() < 1e-6 * 5.0 * e2);
    assert!((v[ix::S2Z] - 2.5 * e2).abs() < 1e-6 * 5.0 * e2);
    for (l, x) in v.iter().enumerate() {
        if l != ix::S1Z && l != ix::S2Z {
            assert!(x.abs() < 1e-6 * 5.0 * e2, "component {l}: {x:e}");
        }
    }
    let (e1, e2) = (common::eps1(), common::EPS2);
    let r = prepare_equalized_polarization(e1, e2, wj).unwrap();
    assert!((r.coherence.v[ix::S1Z] + r.coherence.v[ix::S2Z] - (e1 + e2)).abs() < 1e-15);
    assert!(prepare_equalized_polarization(e1, e2, 0.0).is_err());
}

#[test]
fn pseudo_pure_up_up() {
    let (e1, e2) = (common::eps1(), common::EPS2);
    let r = prepare_pps_upup(e1, e2);
    // κ(|↑↑⟩⟨↑↑| − 𝕀/4) = (κ/2)(S₁z + S₂z + 2S₁zS₂z) with κ = (ε₁+ε₂)/2.
    let q = (e1 + e2) / 4.0;
    for (l, x) in r.coherence.v.iter().enumerate() {
        let want = if [ix::S1Z, ix::S2Z, ix::ZZ].contains(&l) { q } else { 0.0 };
        assert!((x - want).abs() < 1e-18, "component {l}");
    }
    assert_eq!(prepare_pps_upup(1e-5, -1e-5).coherence.norm(), 0.0);
    // Pure part rank 1: (ρ/κ + 𝕀/4) is a projector.
    let kappa = (e1 + e2) / 2.0;
    let full = r.density().scaled(1.0 / kappa).full();
    assert!((full * full - full).iter().all(|z| z.norm() < 1e-12));
}

#[test]
fn bell_preparation_all_targets() {
    let (e1, e2, wj) = (common::eps1(), common::EPS2, common::omega_j());
    let kappa = (e1 + e2) / 2.0;
    for b in BellStateId::Z_BASIS {
        let r = prepare_bell_pps(b, e1, e2, wj).unwrap();
        assert!(r.fidelity.unwrap() >= 0.999, "{b:?}: {:?}", r.fidelity);
        let zz = r.coherence.v[ix::ZZ];
        let xx = r.coherence.v[ix::XX];
        let sign = if b.is_zero_quantum() { -1.0 } else { 1.0 };
        assert!((zz - sign * (e1 + e2) / 4.0).abs() < 1e-12 * e1, "{b:?} zz");
        let xsign = match b {
            BellStateId::S0 | BellStateId::PsiMinusZ => -1.0,
            _ => 1.0,
        };
        assert!((xx - xsign * (e1 + e2) / 4.0).abs() < 1e-9 * e1, "{b:?} xx");
        // Trace distance of the normalized pure part to the ideal projector.
        let diff = r.density().scaled(1.0 / kappa).full() - bell_density(b).full();
        let td = 0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>();
        assert!(td < 1e-3, "{b:?}: trace distance {td:e}");
    }
    assert!(prepare_bell_pps(BellStateId::T0x, e1, e2, wj).is_err());
}

#[test]
fn inversion_recovery_examples() {
    let ctx = common::table_ctx();
    let (e1, r) = (ctx.eps1, ctx.rates);
    let rec = run_inversion_recovery(Spin::One, &grid(401, 0.0005), &ctx).unwrap();
    let sym = rec.symmetric();
    let anti = rec.antisymmetric();
    assert!((sym[0] + e1).abs() < 1e-15 && anti[0].abs() < 1e-18);
    let fit = parabolic_initial_fit(&rec.times, &anti, 0.02).unwrap();
    assert!(common::rel(fit.params[1], 2.0 * r.delta1 * e1) < 1e-4, "{}", fit.params[1] / (2.0 * r.delta1 * e1));
    let late = run_inversion_recovery(Spin::One, &[0.0, 500.0], &ctx).unwrap();
    assert!((late.symmetric()[1] - e1).abs() < 1e-12 * e1);
    assert_eq!(rec.equilibrium_sym, e1);
}

#[test]
fn inversion_recovery_asymmetry_follows_delta_sign() {
    let ctx = common::table_ctx();
    let flipped = SimContext { rates: DiagonalRates { delta1: -ctx.rates.delta1, ..ctx.rates }, ..ctx };
    let t = grid(20, 0.05);
    let a = run_inversion_recovery(Spin::One, &t, &ctx).unwrap().antisymmetric();
    let b = run_inversion_recovery(Spin::One, &t, &flipped).unwrap().antisymmetric();
    assert!(a[5] > 0.0 && b[5] < 0.0);
    // Opposite δ signs in the published set: the two spins' asymmetries have opposite signs.
    let c = run_inversion_recovery(Spin::Two, &t, &ctx).unwrap().antisymmetric();
    assert!(a[5] * c[5] < 0.0);
}

#[test]
fn noe_examples() {
    let ctx = common::table_ctx();
    let t = grid(401, 0.0005);
    let quiet = SimContext { rates: DiagonalRates { sigma12: 0.0, delta1: 0.0, delta2: 0.0, ..ctx.rates }, ..ctx };
    let flat = run_noe(Spin::One, Spin::Two, &t, &quiet).unwrap();
    let f = parabolic_initial_fit(&flat.times, &flat.symmetric(), 0.2).unwrap();
    assert!(f.params[1].abs() < 1e-12 * ctx.eps2);

    let a = run_noe(Spin::One, Spin::Two, &t, &ctx).unwrap();
    let b = run_noe(Spin::Two, Spin::One, &t, &ctx).unwrap();
    let na: Vec<f64> = a.symmetric().iter().map(|x| x / a.equilibrium_sym).collect();
    let nb: Vec<f64> = b.symmetric().iter().map(|x| x / b.equilibrium_sym).collect();
    let sa = parabolic_initial_fit(&a.times, &na, 0.02).unwrap().params[1] / (2.0 * ctx.eps1 / ctx.eps2);
    let sb = parabolic_initial_fit(&b.times, &nb, 0.02).unwrap().params[1] / (2.0 * ctx.eps2 / ctx.eps1);
    assert!(common::rel(sa, 0.19) < 1e-4 && common::rel(sb, 0.19) < 1e-4, "{sa} {sb}");
    assert!(run_noe(Spin::One, Spin::One, &t, &ctx).is_err());
}

#[test]
fn bell_zz_channels_pairwise_identical() {
    let ctx = common::table_ctx();
    let t = grid(50, 0.1);
    let zz = |b| run_bell_relaxation(b, &t, BellChannel::Zz, &ctx).unwrap().antisymmetric();
    // The two DHH preparations agree to rounding; the relaxation path is shared.
    let same = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-14 * x.abs());
    assert!(same(zz(BellStateId::S0), zz(BellStateId::T0z)));
    assert!(same(zz(BellStateId::PsiPlusZ), zz(BellStateId::PsiMinusZ)));
    // (π/2)_{1y} readout: ZQ and DQ starts show opposite asymmetry.
    assert!(zz(BellStateId::S0)[0] * zz(BellStateId::PsiPlusZ)[0] < 0.0);
}

#[test]
fn bell_zz_initial_slopes_difference() {
    let ctx = common::table_ctx();
    let t = grid(401, 0.0005);
    let rate = |b| {
        let rec = run_bell_relaxation(b, &t, BellChannel::Zz, &ctx).unwrap();
        parabolic_initial_fit(&rec.times, &rec.antisymmetric(), 0.2).unwrap().rate
    };
    let (zq, dq) = (rate(BellStateId::S0), rate(BellStateId::PsiPlusZ));
    let (e1, e2) = (ctx.eps1, ctx.eps2);
    let want = 8.0 * (ctx.rates.delta1 * e1 + ctx.rates.delta2 * e2) / (e1 + e2);
    assert!(((zq - dq) - want).abs() < 0.02 * want.abs(), "{} vs {want}", zq - dq);
}

#[test]
fn bell_xx_channels_are_single_exponentials() {
    let ctx = common::table_ctx();
    let t = grid(40, 0.25);
    for b in BellStateId::Z_BASIS {
        let rec = run_bell_relaxation(b, &t, BellChannel::XxCpmg { tau: 1e-3 }, &ctx).unwrap();
        // Antisymmetric spin-1 component = −gain·⟨2S₁ₓS₂ₓ⟩.
        let xx: Vec<f64> = rec.antisymmetric().iter().map(|a| -a / ctx.gain).collect();
        let positive = matches!(b, BellStateId::T0z | BellStateId::PsiPlusZ);
        assert_eq!(xx[0] > 0.0, positive, "{b:?} start sign");
        let (lam, _, resid) = log_linear_fit(&rec.times, &xx).unwrap();
        let want = if b.is_zero_quantum() { common::LAMBDA_ZQ } else { common::LAMBDA_DQ };
        assert!(common::rel(lam, want) < 1e-10, "{b:?}: {lam}");
        assert!(resid < 1e-10, "{b:?}: residual {resid:e}");
    }
}

#[test]
fn cpmg_swept_time_rounds_to_echo_pairs() {
    let prog = bell_program(BellStateId::S0, BellChannel::XxCpmg { tau: 1e-3 }).unwrap();
    assert!((effective_time(&prog, 1.0) - 1.0).abs() < 1e-12);
    assert!((effective_time(&prog, 1.0013) - 1.0).abs() < 1e-12);
    assert!((effective_time(&prog, 1.0031) - 1.004).abs() < 1e-12);
}

#[test]
fn noise_is_seeded() {
    let ctx = common::table_ctx();
    let noisy = |seed| SimContext { noise: Some(NoiseModel { sigma: 1e-7, seed }), ..ctx };
    let t = grid(10, 0.1);
    let a = run_inversion_recovery(Spin::One, &t, &noisy(1)).unwrap();
    let b = run_inversion_recovery(Spin::One, &t, &noisy(1)).unwrap();
    let c = run_inversion_recovery(Spin::One, &t, &noisy(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.peaks, c.peaks);
    assert!((a.component_sigma() - 1e-7 * 2f64.sqrt()).abs() < 1e-20);
}

#[test]
fn custom_program_matches_builtin() {
    let ctx = common::table_ctx();
    let t = grid(10, 0.2);
    let prog = SequenceProgram::parse("PULSE 1 y 180\nDELAY t relax\nPULSE 1 y 90\nREAD 1 BOTH\n").unwrap();
    let custom = run_custom("ir", &prog, &t, &ctx).unwrap();
    let builtin = run_inversion_recovery(Spin::One, &t, &ctx).unwrap();
    assert_eq!(custom.peaks, builtin.peaks);
    assert!(run_custom("bad", &prog, &[0.0, -1.0], &ctx).is_err());
    assert!(run_custom("bad", &prog, &[0.2, 0.1], &ctx).is_err());
}

#[test]
fn prepared_state_fidelity_is_invariant_under_readout_rotation_inverse() {
    let (e1, e2, wj) = (common::eps1(), common::EPS2, common::omega_j());
    let r = prepare_bell_pps(BellStateId::S0, e1, e2, wj).unwrap();
    let rotated = apply_pulse(&r.density(), Spin::One, Axis::Y, 1.0);
    let back = apply_pulse(&rotated, Spin::One, Axis::Y, -1.0);
    assert!((state_fidelity(&back, BellStateId::S0).unwrap() - r.fidelity.unwrap()).abs() < 1e-12);
}
