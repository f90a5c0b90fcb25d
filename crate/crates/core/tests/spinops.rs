//! Product-operator algebra, Bell states and density-matrix conversions.

mod common;

use bellrelax::spinops::{
    bell_density, coherence_vector_of, commutator, double_commutator, equilibrium_density, expectation,
    from_coherence_vector, index as ix, product_basis, projector, to_coherence_vector, Axis, BellStateId, Mat4,
    Spin, SpinOperator, C64,
};
use bellrelax::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn s(spin: Spin, axis: Axis) -> SpinOperator {
    SpinOperator::single(spin, axis)
}

fn max_diff(a: &Mat4, b: &Mat4) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn basis_is_orthonormal_hermitian_traceless() {
    let b = product_basis();
    for l in 0..15 {
        let p = b.op(l);
        assert!(p.hermitian_deviation() < 1e-15, "P{l} not Hermitian");
        assert!(p.trace().norm() < 1e-15, "P{l} not traceless");
        for m in 0..15 {
            let tr = (p.matrix() * b.op(m).matrix()).trace();
            let want = if l == m { 1.0 } else { 0.0 };
            assert!((tr.re - want).abs() < 1e-14 && tr.im.abs() < 1e-14, "Tr(P{l}P{m}) = {tr}");
        }
    }
}

#[test]
fn zz_operator_is_diagonal_pattern() {
    let zz = product_basis().op(ix::ZZ).matrix().to_owned();
    let want = [0.5, -0.5, -0.5, 0.5];
    for i in 0..4 {
        for j in 0..4 {
            let w = if i == j { want[i] } else { 0.0 };
            assert!((zz[(i, j)] - C64::new(w, 0.0)).norm() < 1e-15);
        }
    }
}

#[test]
fn angular_momentum_commutators() {
    for spin in [Spin::One, Spin::Two] {
        for (a, b, c) in [(Axis::X, Axis::Y, Axis::Z), (Axis::Y, Axis::Z, Axis::X), (Axis::Z, Axis::X, Axis::Y)] {
            let lhs = commutator(&s(spin, a), &s(spin, b));
            let rhs = s(spin, c) * C64::new(0.0, 1.0);
            assert!(max_diff(lhs.matrix(), rhs.matrix()) < 1e-15);
        }
    }
    for a in [Axis::X, Axis::Y, Axis::Z] {
        for b in [Axis::X, Axis::Y, Axis::Z] {
            assert!(commutator(&s(Spin::One, a), &s(Spin::Two, b)).max_abs() < 1e-15);
        }
    }
}

#[test]
fn equilibrium_projects_on_z_components_only() {
    let (e1, e2) = (common::eps1(), common::EPS2);
    let v = to_coherence_vector(&equilibrium_density(e1, e2));
    for (l, x) in v.v.iter().enumerate() {
        match l {
            ix::S1Z => assert!((x - e1).abs() < 1e-20),
            ix::S2Z => assert!((x - e2).abs() < 1e-20),
            _ => assert_eq!(*x, 0.0),
        }
    }
    let rho = equilibrium_density(e1, e2);
    let s1 = expectation(&rho, &s(Spin::One, Axis::Z)).unwrap();
    let s2 = expectation(&rho, &s(Spin::Two, Axis::Z)).unwrap();
    assert!((s1 / s2 - common::eps_ratio()).abs() < 1e-12);
    assert!((common::eps_ratio() - 3.977).abs() < 1e-3);
    assert_eq!(to_coherence_vector(&equilibrium_density(0.0, 0.0)).norm(), 0.0);
}

#[test]
fn singlet_coherence_vector() {
    let v = to_coherence_vector(&bell_density(BellStateId::S0));
    for (l, x) in v.v.iter().enumerate() {
        let want = if [ix::ZZ, ix::XX, ix::YY].contains(&l) { -0.5 } else { 0.0 };
        assert!((x - want).abs() < 1e-15, "component {l}: {x}");
    }
}

#[test]
fn bell_operator_forms() {
    let zz = s(Spin::One, Axis::Z) * s(Spin::Two, Axis::Z);
    let xx = s(Spin::One, Axis::X) * s(Spin::Two, Axis::X);
    let yy = s(Spin::One, Axis::Y) * s(Spin::Two, Axis::Y);
    let cases = [
        (BellStateId::PsiPlusZ, zz + (xx - yy)),
        (BellStateId::PsiMinusZ, zz - (xx - yy)),
        (BellStateId::S0, -zz - (xx + yy)),
        (BellStateId::T0z, -zz + (xx + yy)),
    ];
    for (id, op) in cases {
        assert!(max_diff(bell_density(id).matrix(), op.matrix()) < 1e-15, "{id:?}");
    }
}

#[test]
fn bell_states_are_orthonormal_projectors() {
    let all = [
        BellStateId::S0,
        BellStateId::T0z,
        BellStateId::PsiPlusZ,
        BellStateId::PsiMinusZ,
        BellStateId::T0x,
        BellStateId::PsiPlusX,
        BellStateId::PsiMinusX,
    ];
    for id in all {
        let full = bell_density(id).full();
        assert!(max_diff(&(full * full), &full) < 1e-15);
        assert!((full.trace().re - 1.0).abs() < 1e-15);
        assert!((bell_density(id).purity() - 0.75).abs() < 1e-15);
        assert!(max_diff(&full, &projector(&id.ket())) < 1e-15);
    }
    for a in BellStateId::Z_BASIS {
        for b in BellStateId::Z_BASIS {
            let ip = (a.ket().adjoint() * b.ket())[(0, 0)];
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((ip.re - want).abs() < 1e-15 && ip.im.abs() < 1e-15);
        }
    }
}

#[test]
fn bell_expectation_values() {
    let two = |a, b| s(Spin::One, a) * s(Spin::Two, b) * 2.0;
    let zz = two(Axis::Z, Axis::Z);
    let xx = two(Axis::X, Axis::X);
    assert!((expectation(&bell_density(BellStateId::S0), &zz).unwrap() + 0.5).abs() < 1e-15);
    assert!((expectation(&bell_density(BellStateId::T0z), &xx).unwrap() - 0.5).abs() < 1e-15);
    for id in BellStateId::Z_BASIS {
        for spin in [Spin::One, Spin::Two] {
            assert!(expectation(&bell_density(id), &s(spin, Axis::Z)).unwrap().abs() < 1e-15);
        }
        let sign = if id.is_zero_quantum() { -1.0 } else { 1.0 };
        assert!((expectation(&bell_density(id), &zz).unwrap() - sign * 0.5).abs() < 1e-15);
    }
}

#[test]
fn bell_tokens_parse() {
    for id in BellStateId::Z_BASIS {
        assert_eq!(BellStateId::parse(id.name()), Some(id));
    }
    assert_eq!(BellStateId::parse("psi_minus_z"), Some(BellStateId::PsiMinusZ));
    assert_eq!(BellStateId::parse("T0"), Some(BellStateId::T0z));
    assert_eq!(BellStateId::parse("bogus"), None);
}

#[test]
fn double_commutator_examples() {
    let z = s(Spin::One, Axis::Z);
    let x = s(Spin::One, Axis::X);
    let r = double_commutator(&z, &x, &x);
    assert!(max_diff(r.matrix(), z.matrix()) < 1e-15);

    let h = SpinOperator::identity() * 3.7;
    let a = s(Spin::Two, Axis::Y) * s(Spin::One, Axis::X);
    assert!(double_commutator(&a, &h, &h).max_abs() < 1e-15);
}

#[test]
fn coherence_round_trip_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rho = common::random_deviation(&mut rng);
        let back = from_coherence_vector(&to_coherence_vector(&rho));
        worst = worst.max(back.max_abs_diff(&rho));
    }
    assert!(worst < 1e-12, "round-trip error {worst:e}");
}

#[test]
fn non_hermitian_inputs_rejected() {
    let mut m = *bell_density(BellStateId::S0).matrix();
    m[(0, 1)] += C64::new(1e-9, 0.0);
    assert!(matches!(coherence_vector_of(&m), Err(Error::NotHermitian(_))));

    let rho = bell_density(BellStateId::S0);
    let o = SpinOperator::raising(Spin::One);
    assert!(matches!(expectation(&rho, &o), Err(Error::NotHermitian(_))));

    let traced = Mat4::identity() * C64::new(0.1, 0.0);
    assert!(matches!(coherence_vector_of(&traced), Err(Error::NotTraceless(_))));
}
