use std::f64::consts::{PI, TAU};

use floquet_core::propagator::{backward_monodromy, flow, monodromy, propagate_column, unitarity_defect};
use floquet_core::{FourierPotential, IntegratorConfig, ModeGrid, OperatorMatrix, SmoothnessClass};
use num_complex::Complex64 as C64;

fn class() -> SmoothnessClass {
    SmoothnessClass { alpha: 3.0, beta: 0.0, gamma: 2, c_v: 54.0 }
}

fn p1() -> FourierPotential {
    let half = C64::new(0.5, 0.0);
    FourierPotential::new([(2, vec![(-1, half), (0, C64::new(1.0, 0.0)), (1, half)])], class()).unwrap()
}

/// Two modes, several harmonics, complex coefficients.
fn rich() -> FourierPotential {
    FourierPotential::new(
        [
            (1, vec![(-2, C64::new(0.1, 0.2)), (0, C64::new(0.4, -0.1)), (1, C64::new(0.0, 0.3))]),
            (3, vec![(0, C64::new(0.2, 0.0)), (2, C64::new(-0.1, 0.1))]),
        ],
        class(),
    )
    .unwrap()
}

#[test]
fn free_monodromy_is_diagonal_phase() {
    let zero = FourierPotential::zero(class()).unwrap();
    let grid = ModeGrid::new(16, 4).unwrap();
    for h in [1.0, 4.0, TAU] {
        let m = monodromy(&zero, h, &grid, &IntegratorConfig::rk4()).unwrap();
        let expected = OperatorMatrix::from_diagonal(16, "M0", |k| C64::from_polar(1.0, -TAU * (k * k) as f64 / h));
        assert!(m.max_abs_diff(&expected) < 1e-9, "h = {h}");
    }
}

#[test]
fn column_example_at_quarter_phase() {
    let zero = FourierPotential::zero(class()).unwrap();
    let grid = ModeGrid::new(8, 2).unwrap();
    let psi = propagate_column(&zero, 4.0, &grid, 1, TAU, &IntegratorConfig::split_step()).unwrap();
    assert!((psi.get(1) - C64::new(0.0, -1.0)).norm() < 1e-12);
}

#[test]
fn group_property_on_splits() {
    let p = rich();
    let grid = ModeGrid::new(12, 4).unwrap();
    let h = TAU;
    let cfg = IntegratorConfig::rk4().with_dt(IntegratorConfig::rk4().step_limit(h, 12) / 2.0);
    for (t1, t2) in [(0.3, 1.1), (PI, 2.0), (4.0, -1.5)] {
        let direct = flow(&p, h, &grid, 0.0, t1 + t2, &cfg).unwrap();
        let composed = flow(&p, h, &grid, t1, t1 + t2, &cfg).unwrap().mul(&flow(&p, h, &grid, 0.0, t1, &cfg).unwrap());
        assert!(direct.max_abs_diff(&composed) < 1e-9, "split ({t1}, {t2})");
    }
}

#[test]
fn backward_map_inverts_forward() {
    let p = p1();
    let grid = ModeGrid::new(16, 5).unwrap();
    let h = TAU;
    let cfg = IntegratorConfig::rk4().with_dt(IntegratorConfig::rk4().step_limit(h, 16) / 2.0);
    let forward = monodromy(&p, h, &grid, &cfg).unwrap();
    let backward = backward_monodromy(&p, h, &grid, &cfg).unwrap();
    assert!(backward.mul(&forward).max_abs_diff(&OperatorMatrix::identity(16, "I")) < 1e-9);
}

#[test]
fn truncated_flow_is_unitary_up_to_the_edge() {
    let grid = ModeGrid::new(16, 5).unwrap();
    let m = monodromy(&rich(), TAU, &grid, &IntegratorConfig::split_step()).unwrap();
    assert!(unitarity_defect(&m, 0) < 1e-9);
}

#[test]
fn thread_count_does_not_change_bits() {
    let p = p1();
    let grid = ModeGrid::new(12, 4).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monodromy(&p, TAU, &grid, &IntegratorConfig::rk4()).unwrap())
    };
    assert_eq!(run(1), run(3));
}
