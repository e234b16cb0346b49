use std::f64::consts::TAU;

use floquet_core::blockdiag::{elimination_order, orthonormalize};
use floquet_core::conjugation::{build_generator, exp_skew};
use floquet_core::decomposition::{build_m0, build_m1};
use floquet_core::{FourierPotential, Frame, ModeGrid, OperatorMatrix, SmoothnessClass, StateVector};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn class() -> SmoothnessClass {
    SmoothnessClass { alpha: 3.0, beta: 0.0, gamma: 2, c_v: 1e3 }
}

fn coefficient() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

/// Real potentials with modes `1..=3` and harmonics `-2..=2`, plus a real-valued `k = 0` part.
fn potential() -> impl Strategy<Value = FourierPotential> {
    (proptest::collection::vec(proptest::collection::vec(coefficient(), 5), 3), -1.0f64..1.0, coefficient()).prop_map(
        |(modes, mean, wobble)| {
            let mut spec: Vec<(i64, Vec<(i64, C64)>)> = modes
                .into_iter()
                .enumerate()
                .map(|(i, cs)| (i as i64 + 1, cs.into_iter().enumerate().map(|(m, c)| (m as i64 - 2, c)).collect()))
                .collect();
            spec.push((0, vec![(-1, wobble.conj()), (0, C64::new(mean, 0.0)), (1, wobble)]));
            FourierPotential::new(spec, class()).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn negative_modes_are_conjugates(p in potential(), t in 0.0f64..TAU) {
        for k in -3i64..=3 {
            let a = p.eval_coefficient(k, t);
            let b = p.eval_coefficient(-k, t).conj();
            prop_assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn potential_is_real(p in potential(), x in 0.0f64..TAU, t in 0.0f64..TAU) {
        let direct: C64 = (-3i64..=3).map(|k| p.eval_coefficient(k, t) * C64::from_polar(1.0, k as f64 * x)).sum();
        prop_assert!(direct.im.abs() < 1e-13);
        prop_assert!((direct.re - p.eval(x, t)).abs() < 1e-13);
    }

    #[test]
    fn gauge_normalization_is_idempotent(p in potential()) {
        let (once, _) = p.gauge_normalize();
        let (twice, phase) = once.gauge_normalize();
        prop_assert!(once.is_gauge_normalized());
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(phase.v00, 0.0);
        prop_assert!(phase.antiderivative.is_zero());
    }

    #[test]
    fn derivative_matches_finite_difference(p in potential(), t in 0.5f64..5.5, k in -3i64..=3) {
        let e = 1e-5;
        let fd = (p.eval_coefficient(k, t + e) - p.eval_coefficient(k, t - e)) / (2.0 * e);
        prop_assert!((fd - p.eval_derivative(k, 1, t)).norm() < 1e-7);
    }

    #[test]
    fn frame_round_trip(amps in proptest::collection::vec(coefficient(), 9), t in -7.0f64..7.0, h in 0.1f64..10.0) {
        let psi = StateVector::from_amplitudes(4, amps, Frame::Lab).unwrap();
        let back = psi.to_frame(Frame::Rotating, t, h).to_frame(Frame::Lab, t, h);
        prop_assert!(psi.max_abs_diff(&back) < 1e-14);
    }

    #[test]
    fn commutator_identity_holds(p in potential(), h in 0.2f64..8.0) {
        let (p, _) = p.gauge_normalize();
        let grid = ModeGrid::new(10, 3).unwrap();
        let g = build_generator(&p, &grid);
        let m0 = build_m0(&grid, h);
        let comm = m0.mul(&g.g).sub(&g.g.mul(&m0));
        prop_assert!(build_m1(&p, &grid, h).max_abs_diff(&comm) < 1e-12);
        prop_assert!(g.skew_defect() < 1e-15);
    }

    #[test]
    fn skew_exponential_is_unitary(p in potential()) {
        let (p, _) = p.gauge_normalize();
        let g = build_generator(&p, &ModeGrid::new(8, 2).unwrap());
        let plus = exp_skew(&g, 1).unwrap();
        let minus = exp_skew(&g, -1).unwrap();
        let id = OperatorMatrix::identity(8, "I");
        prop_assert!(plus.mul(&minus).max_abs_diff(&id) < 1e-12);
        prop_assert!(plus.adjoint().max_abs_diff(&minus) < 1e-12);
    }

    #[test]
    fn orthonormalization_of_perturbed_unitary(
        noise in proptest::collection::vec(coefficient(), 49),
        scale in 0.0f64..0.2,
    ) {
        let w = DMatrix::from_fn(7, 7, |r, c| {
            let base = if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            base + noise[r * 7 + c] * scale
        });
        let orth = orthonormalize(&w).unwrap();
        prop_assert!(orth.orthonormality_defect() < 1e-12);
        for m in elimination_order(3) {
            prop_assert!(orth.span_residual(&w, m) < 1e-10);
        }
        // each u_m is orthogonal to the columns finished before it
        let order = elimination_order(3);
        for (i, &m) in order.iter().enumerate() {
            for &earlier in &order[..i] {
                let a = orth.u.column((m + 3) as usize);
                let b = orth.u.column((earlier + 3) as usize);
                prop_assert!(a.dotc(&b).norm() < 1e-11);
            }
        }
    }
}
