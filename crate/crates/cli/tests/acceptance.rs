//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use floquet_cli::cmd_decompose;
use floquet_core::blockdiag::{
    assemble_diagonal_form, diagonalize_unitary, gram, orthonormalize, step_bounds, w_prime_constant, EnvelopeParams,
};
use floquet_core::bounds::{check_ineq1, check_ineq2, cnu_report, empirical_cnu, DecayBound, Region};
use floquet_core::conjugation::{build_G, build_generator, conjugated_monodromy, power_decay_scan};
use floquet_core::decomposition::{build_m0, build_m1, check_bound, residual_m2, residual_m2_at, BoundCheck};
use floquet_core::propagator::{backward_monodromy, monodromy, unitarity_defect};
use floquet_core::{FourierPotential, IntegratorConfig, ModeGrid, OperatorMatrix, SmoothnessClass, PERIOD};
use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};

const H: f64 = TAU;
const MARGIN: usize = 16;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn p1_class() -> SmoothnessClass {
    SmoothnessClass { alpha: 3.0, beta: 0.0, gamma: 2, c_v: 54.0 }
}

fn p1() -> FourierPotential {
    let half = C64::new(0.5, 0.0);
    FourierPotential::new([(2, vec![(-1, half), (0, C64::new(1.0, 0.0)), (1, half)])], p1_class()).unwrap()
}

struct P1Run {
    grid: ModeGrid,
    m: OperatorMatrix,
}

fn p1_run(k_max: usize, n_mid: usize) -> P1Run {
    let grid = ModeGrid::new(k_max, n_mid).unwrap();
    let m = monodromy(&p1(), H, &grid, &IntegratorConfig::rk4()).unwrap();
    P1Run { grid, m }
}

fn p1_32() -> &'static P1Run {
    static RUN: OnceLock<P1Run> = OnceLock::new();
    RUN.get_or_init(|| p1_run(32, 8))
}

fn p1_48() -> &'static P1Run {
    static RUN: OnceLock<P1Run> = OnceLock::new();
    RUN.get_or_init(|| p1_run(48, 16))
}

fn template() -> DecayBound {
    DecayBound::mixed(1.0, 3.0, 0.0)
}

/// Residual and conjugated-residual fits over `|j|, |k| <= 16`.
fn fits(run: &P1Run) -> (BoundCheck, BoundCheck) {
    let p = p1();
    let d = residual_m2(&run.m, &p, &run.grid, H).unwrap();
    let (_, n) = conjugated_monodromy(&run.m, &build_generator(&p, &run.grid)).unwrap();
    let sms = n.sub(&d.m0).sub(&d.md);
    let region = Region::square(16);
    (check_bound(&d.m2, &template(), &region).unwrap(), check_bound(&sms, &template(), &region).unwrap())
}

fn relative(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs().max(b.abs())
}

fn free_exactness() -> Outcome {
    let start = Instant::now();
    let grid = ModeGrid::new(32, 8).unwrap();
    let zero = FourierPotential::zero(p1_class()).unwrap();
    let mut worst: f64 = 0.0;
    for h in [1.0, 4.0, TAU] {
        let m = monodromy(&zero, h, &grid, &IntegratorConfig::rk4()).unwrap();
        worst = worst.max(m.max_abs_diff(&build_m0(&grid, h)));
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-9 && elapsed < Duration::from_secs(5), format!("max error {worst:.2e}, {elapsed:.2?}"))
}

fn unitarity() -> Outcome {
    let run = p1_32();
    let base = unitarity_defect(&run.m, MARGIN);
    let dt = IntegratorConfig::rk4().resolve_dt(H, 32).unwrap();
    let halved = monodromy(&p1(), H, &run.grid, &IntegratorConfig::rk4().with_dt(dt / 2.0)).unwrap();
    let fine = unitarity_defect(&halved, MARGIN);
    let factor = base / fine;
    check(base <= 1e-7 && factor >= 8.0, format!("defect {base:.2e} at dt, {fine:.2e} at dt/2, factor {factor:.1}"))
}

fn cross_integrator() -> Outcome {
    let run = p1_32();
    let split = monodromy(&p1(), H, &run.grid, &IntegratorConfig::split_step()).unwrap();
    let gap = run.m.max_abs_diff_within(&split, 32 - MARGIN);
    check(gap <= 1e-7, format!("interior gap {gap:.2e}"))
}

fn random_potential(seed: u64) -> FourierPotential {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let modes: Vec<(i64, Vec<(i64, C64)>)> = (1..=4)
        .map(|k| {
            let harmonics =
                (-2..=2).map(|m| (m, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))).collect();
            (k, harmonics)
        })
        .collect();
    let loose = SmoothnessClass { alpha: 3.0, beta: 0.0, gamma: 2, c_v: 1e6 };
    let p = FourierPotential::new(modes, loose).unwrap();
    let c_v = 1.01 * p.class_report().minimal_c_v;
    let p = p.with_class(SmoothnessClass { c_v, ..loose }).unwrap();
    p.verify_class().unwrap();
    p
}

fn commutator_identity() -> Outcome {
    let grid = ModeGrid::new(32, 8).unwrap();
    let m0 = build_m0(&grid, H);
    let mut potentials = vec![p1()];
    potentials.extend((0..3).map(|i| random_potential(0x5eed + i)));
    let mut worst: f64 = 0.0;
    for p in &potentials {
        let g = build_G(p, &grid).g;
        let commutator = m0.mul(&g).sub(&g.mul(&m0));
        worst = worst.max(build_m1(p, &grid, H).max_abs_diff(&commutator));
    }
    check(worst <= 1e-12, format!("max defect {worst:.2e} over {} potentials", potentials.len()))
}

fn residual_decay() -> Outcome {
    let start = Instant::now();
    let (small, _) = fits(p1_32());
    let (large, _) = fits(p1_48());
    let elapsed = start.elapsed();
    let drift = relative(small.c_min, large.c_min);
    let slopes = [small.row_slope, small.diagonal_slope, large.row_slope, large.diagonal_slope];
    let slopes_ok = slopes.iter().all(|s| s.is_some_and(|s| s <= -1.5));
    check(
        small.c_min.is_finite() && drift <= 0.2 && slopes_ok && elapsed < Duration::from_secs(120),
        format!(
            "c {:.4} -> {:.4} (drift {drift:.1e}), row slope {:.2}, diagonal slope {:.2}, {elapsed:.2?}",
            small.c_min,
            large.c_min,
            small.row_slope.unwrap_or(f64::NAN),
            small.diagonal_slope.unwrap_or(f64::NAN)
        ),
    )
}

fn conjugated_residual() -> Outcome {
    let (_, small) = fits(p1_32());
    let (_, large) = fits(p1_48());
    let drift = relative(small.c_min, large.c_min);
    let slopes_ok = [small.row_slope, small.diagonal_slope].iter().all(|s| s.is_some_and(|s| s <= -1.5));
    check(
        small.c_min.is_finite() && large.c_min.is_finite() && drift <= 0.2 && slopes_ok,
        format!("c {:.4} -> {:.4} (drift {drift:.1e})", small.c_min, large.c_min),
    )
}

fn adjoint_symmetry() -> Outcome {
    let run = p1_32();
    let p = p1();
    let back = backward_monodromy(&p, H, &run.grid, &IntegratorConfig::rk4()).unwrap();
    let forward = residual_m2(&run.m, &p, &run.grid, H).unwrap().m2;
    let backward = residual_m2_at(&back, &p, &run.grid, H, -PERIOD).unwrap().m2;
    let gap = backward.max_abs_diff_within(&forward.adjoint(), 32 - MARGIN);
    check(gap <= 1e-6, format!("max |M2(-2pi) - M2*| {gap:.2e}"))
}

fn step_one() -> Outcome {
    let run = p1_32();
    let p = p1();
    let d = residual_m2(&run.m, &p, &run.grid, H).unwrap();
    let (_, n) = conjugated_monodromy(&run.m, &build_generator(&p, &run.grid)).unwrap();
    let sms = n.sub(&d.m0).sub(&d.md);
    let c = check_bound(&sms, &template(), &Region::rect(32, 16)).unwrap().c_min;
    let params = EnvelopeParams { c, c_nu: cnu_report(2.0, 0.0, 32).unwrap().value, alpha: 3.0, beta: 0.0 };
    let g = gram(&n, 8, params).unwrap();
    let orth = orthonormalize(&n.block(8)).unwrap();
    let defect = orth.orthonormality_defect();
    let steps = step_bounds(&orth, &g).unwrap();
    let (c_w, _) = w_prime_constant(&orth, 3.0, 0.0).unwrap();
    check(
        defect <= 1e-12 && steps.lambda_ratio <= 1.0 && c_w.is_finite(),
        format!("U*U defect {defect:.2e}, worst |lambda|/2eps {:.2e}, c_w {c_w:.3}", steps.lambda_ratio),
    )
}

fn middle_block_scaling() -> Outcome {
    let run = p1_48();
    let p = p1();
    let (_, n) = conjugated_monodromy(&run.m, &build_generator(&p, &run.grid)).unwrap();
    let sup = |n_mid: usize| {
        let orth = orthonormalize(&n.block(n_mid)).unwrap();
        let diag = diagonalize_unitary(&orth.u).unwrap();
        let grid = ModeGrid::new(48, n_mid).unwrap();
        assemble_diagonal_form(&n, &diag, &grid, H, &p, 24).unwrap().middle_sup
    };
    let (at8, at16) = (sup(8), sup(16));
    let factor = at8 / at16;
    check(factor >= 2.0, format!("sup {at8:.2e} at N=8, {at16:.2e} at N=16, factor {factor:.1}"))
}

fn lemmas() -> Outcome {
    let ineq1 = check_ineq1(64).unwrap();
    let ineq2 = check_ineq2(64).unwrap();
    let cnu = empirical_cnu(2.0, 0.0, 32);
    let gen = build_generator(&p1(), &ModeGrid::new(32, 8).unwrap());
    let c_alpha = cnu_report(3.0, 0.0, 32).unwrap().value;
    let powers = power_decay_scan(&gen, 6, c_alpha).unwrap();
    let drift = cnu.as_ref().map_or(f64::INFINITY, |r| r.relative_drift.abs());
    let constants: Vec<String> = powers.fits.iter().map(|f| format!("{:.0}", f.c_min)).collect();
    check(
        ineq1.worst_ratio <= 1.0 && ineq2.worst_ratio <= 1.0 && drift < 0.01 && powers.geometric,
        format!(
            "ratios {:.3}/{:.3}, c_nu drift {drift:.1e}, G^n constants [{}]",
            ineq1.worst_ratio,
            ineq2.worst_ratio,
            constants.join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/p1.json");
    let mut tables = Vec::new();
    for i in 0..2 {
        let csv = dir.path().join(format!("m2_{i}.csv"));
        cmd_decompose(&config, Some(&dir.path().join(format!("r{i}.json"))), Some(&csv)).unwrap();
        tables.push(std::fs::read(&csv).unwrap());
    }
    check(!tables[0].is_empty() && tables[0] == tables[1], format!("{} bytes", tables[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("free-particle exactness", free_exactness),
        ("unitarity and step refinement", unitarity),
        ("cross-integrator agreement", cross_integrator),
        ("commutator identity", commutator_identity),
        ("residual decay", residual_decay),
        ("conjugated residual decay", conjugated_residual),
        ("adjoint symmetry", adjoint_symmetry),
        ("block orthogonalization", step_one),
        ("middle-block scaling", middle_block_scaling),
        ("lattice lemmas", lemmas),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let message =
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", message.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
