use kdesign::combinatorics::binomial;
use kdesign::frame_potential::{fp_monte_carlo, fp_perfect_exact_2sp, Protocol, ProtocolConfig};
use kdesign::hamiltonians::{sector_basis, ModelSpec};
use kdesign::runner::build_sequence;
use kdesign::temporal::TimeWindow;
use proptest::prelude::*;

#[test]
fn half_filling_sectors() {
    for n in [4usize, 6, 8, 10] {
        let expected = binomial(n as u32, n as u32 / 2) as usize;
        assert_eq!(sector_basis(n).unwrap().len(), expected);
        assert_eq!(ModelSpec::csyk(n, 1.0, 0).hilbert_dim().unwrap(), expected);
    }
    assert!(sector_basis(2).is_err());
    assert!(sector_basis(7).is_err());
    assert_eq!(ModelSpec::csyk(8, 1.0, 0).hamiltonian::<f64>(0).unwrap().dim(), 70);
    assert_eq!(ModelSpec::rspin(8, 1.0, 0.5, 0).hamiltonian::<f64>(0).unwrap().dim(), 70);
}

#[test]
fn models_are_hermitian_and_reproducible() {
    for spec in [ModelSpec::gue(20, 3), ModelSpec::csyk(6, 1.0, 3), ModelSpec::rspin(6, 1.0, 2.0, 3)] {
        let a = spec.hamiltonian::<f64>(1).unwrap();
        assert!(a.hermiticity_deviation() < 1e-12);
        assert_eq!(a, spec.hamiltonian::<f64>(1).unwrap());
        assert_ne!(a, spec.hamiltonian::<f64>(2).unwrap());
    }
}

#[test]
fn descriptor_roundtrip() {
    for spec in [ModelSpec::gue(20, 3), ModelSpec::csyk(6, 1.5, 3), ModelSpec::rspin(6, 1.0, 2.0, 9), ModelSpec::flat(8, 1)] {
        let d = spec.descriptor();
        assert!(d.starts_with(spec.kind.as_str()));
        assert!(d.ends_with(&format!("seed={}", spec.seed)));
        assert_eq!(ModelSpec::parse(&spec.to_key_value()).unwrap(), spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Finite windows only add leakage on top of the perfect-filter value.
    #[test]
    fn finite_window_does_not_undershoot(seed in 0u64..1000, log_t in 0.0f64..4.0) {
        let seq = build_sequence(&ModelSpec::gue(6, seed), Protocol::TwoStep).unwrap();
        let exact = fp_perfect_exact_2sp(&seq.overlaps()[0], 1).unwrap();
        let cfg = ProtocolConfig { sequence: seq, window: TimeWindow::uniform(10f64.powf(log_t)).unwrap(), k: 1, samples: 4096, seed };
        let e = fp_monte_carlo(&cfg).unwrap();
        prop_assert!(e.mean >= exact - 4.0 * e.stderr, "{} ± {} vs {}", e.mean, e.stderr, exact);
    }

    #[test]
    fn traces_are_bounded_by_dimension(seed in 0u64..1000, t in proptest::array::uniform4(-50.0f64..50.0)) {
        let two = build_sequence(&ModelSpec::gue(7, seed), Protocol::TwoStep).unwrap();
        prop_assert!(two.trace_2sp(t[0], t[1]).unwrap().norm() <= 7.0 * (1.0 + 1e-9));
        let three = build_sequence(&ModelSpec::gue(5, seed), Protocol::ThreeStep).unwrap();
        prop_assert!(three.trace_3sp(t[0], t[1], t[2], t[3]).unwrap().norm() <= 5.0 * (1.0 + 1e-9));
    }
}
