//! The computations behind each subcommand, independent of file I/O.

use std::fmt::Write as _;

use floquet_core::blockdiag::{
    admissibility, assemble_diagonal_form, diagonalize_unitary, elimination_order, gram, orthonormalize, step_bounds,
    w_prime_constant, DiagonalForm, EnvelopeParams,
};
use floquet_core::bounds::{check_ineq1, check_ineq2, cnu_report, DecayBound, Region};
use floquet_core::conjugation::{
    build_generator, conjugated_monodromy, exp_remainder_fit, exp_skew, power_decay_scan, Generator,
};
use floquet_core::decomposition::{
    check_bound, correction_bound_ratio, first_order_matrix, residual_m2, residual_m2_at, BoundCheck, Decomposition,
};
use floquet_core::propagator::{backward_monodromy, monodromy, unitarity_defect, IntegratorConfig};
use floquet_core::{OperatorMatrix, PERIOD};

use crate::config::{Prepared, RunConfig};
use crate::report::*;
use crate::CliError;

/// Interior unitarity defect accepted for a computed monodromy.
pub const UNITARITY_TOLERANCE: f64 = 1e-7;
/// Exact algebraic identities and reassemblies.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;
pub const ADJOINT_TOLERANCE: f64 = 1e-6;
pub const CONJUGATION_TOLERANCE: f64 = 1e-10;
/// Allowed excess of a regression slope over its predicted value.
pub const SLOPE_SLACK: f64 = 0.5;
/// Highest power of `G` in the power-decay scan.
pub const POWER_SCAN: u32 = 6;
/// Outer range of the lattice-sum constants.
pub const LATTICE_RANGE: usize = 32;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;
/// Allowed relative change of a fitted constant between consecutive cutoffs.
pub const CONSTANT_DRIFT: f64 = 0.2;

/// Matrices computed by the decomposition stage.
pub struct DecomposeArtifacts {
    pub monodromy: OperatorMatrix,
    pub decomposition: Decomposition,
    pub generator: Generator,
    pub conjugated: OperatorMatrix,
    pub m2_check: BoundCheck,
    pub sms_check: BoundCheck,
    pub sms_tall_c: f64,
}

pub fn run_summary(prepared: &Prepared) -> RunSummary {
    RunSummary {
        h: prepared.config.h,
        k_max: prepared.grid.k_max(),
        n_mid: prepared.grid.n_mid(),
        margin: prepared.margin,
        interior: prepared.interior(),
        method: prepared.config.integrator.method,
        dt: prepared.dt,
        steps: IntegratorConfig::step_count(prepared.dt, PERIOD),
        gauge_v00: prepared.gauge_v00,
        resonance: prepared.resonance,
    }
}

fn warnings(prepared: &Prepared) -> Vec<String> {
    let mut out = Vec::new();
    if let Some((j, k)) = prepared.resonance {
        out.push(format!(
            "h = {} is resonant: free phases of modes {j} and {k} coincide; M1 degenerates",
            prepared.config.h
        ));
    }
    if prepared.gauge_v00 != 0.0 {
        out.push(format!("removed the constant potential part v00 = {} by a gauge transform", prepared.gauge_v00));
    }
    out
}

/// Template `c e^{-beta|j-k|}/(<j><k><j-k>^{alpha-1})` of the residual estimates.
pub fn residual_template(prepared: &Prepared) -> DecayBound {
    let class = prepared.potential.class();
    DecayBound::mixed(1.0, class.alpha, class.beta)
}

/// Propagation, explicit decomposition and conjugation, with their verdicts.
pub fn decompose(prepared: &Prepared, report: &mut DecompositionReport) -> Result<DecomposeArtifacts, CliError> {
    let p = &prepared.potential;
    let grid = &prepared.grid;
    let h = prepared.config.h;
    let cfg = IntegratorConfig { dt: Some(prepared.dt), ..prepared.config.integrator };
    let class = *p.class();
    let interior = prepared.interior();

    report.run = Some(run_summary(prepared));
    report.warnings.extend(warnings(prepared));

    let m = monodromy(p, h, grid, &cfg)?;
    let back = backward_monodromy(p, h, grid, &cfg)?;
    let unitarity = UnitarityBlock {
        forward: unitarity_defect(&m, prepared.margin),
        backward: unitarity_defect(&back, prepared.margin),
        tolerance: UNITARITY_TOLERANCE,
    };
    report.push(Verdict::flag("monodromy_finite", m.is_finite() && back.is_finite()));
    report.push(Verdict::at_most("unitarity_defect", unitarity.forward, UNITARITY_TOLERANCE));
    report.push(Verdict::at_most("backward_unitarity_defect", unitarity.backward, UNITARITY_TOLERANCE));
    report.unitarity = Some(unitarity);

    let decomposition = residual_m2(&m, p, grid, h)?;
    let backward = residual_m2_at(&back, p, grid, h, -PERIOD)?;
    let generator = build_generator(p, grid);
    let commutator = decomposition.m0.mul(&generator.g).sub(&generator.g.mul(&decomposition.m0));
    let template = residual_template(prepared);
    let region = Region::square(interior);
    let m2_check = check_bound(&decomposition.m2, &template, &region)?;
    let psi1 = first_order_matrix(p, grid, h, PERIOD);
    let psi_template = DecayBound::new(1.0, class.beta, 0.0, 2.0, class.alpha - 1.0);
    let c_psi = check_bound(&m.sub(&psi1), &psi_template, &region)?.c_min;

    let block = DecompositionBlock {
        reassembly: decomposition.total().max_abs_diff(&m),
        commutator_identity: decomposition.m1.max_abs_diff(&commutator),
        adjoint_symmetry: backward.m2.max_abs_diff_within(&decomposition.m2.adjoint(), interior),
        m2: BoundSummary::from(&m2_check),
        correction_ratio: correction_bound_ratio(p, grid, h, PERIOD, interior),
        c_psi,
    };
    report.push(Verdict::at_most("reassembly", block.reassembly, IDENTITY_TOLERANCE));
    report.push(Verdict::at_most("commutator_identity", block.commutator_identity, IDENTITY_TOLERANCE));
    report.push(Verdict::at_most("adjoint_symmetry", block.adjoint_symmetry, ADJOINT_TOLERANCE));
    report.push(Verdict::finite("c_m2", m2_check.c_min));
    report.push(Verdict::optional_at_most("m2_row_slope", m2_check.row_slope, -(class.alpha - 1.0) + SLOPE_SLACK));
    report.push(Verdict::optional_at_most("m2_diagonal_slope", m2_check.diagonal_slope, -2.0 + SLOPE_SLACK));
    report.push(Verdict::at_most("correction_bound", block.correction_ratio, 1.0));
    report.push(Verdict::finite("c_psi", c_psi));
    report.decomposition = Some(block);

    let (s, n) = conjugated_monodromy(&m, &generator)?;
    let inverse = exp_skew(&generator, 1)?.mul(&s);
    let sms = n.sub(&decomposition.m0).sub(&decomposition.md).with_label("N-M0-Md");
    let sms_check = check_bound(&sms, &template, &region)?;
    let sms_tall_c = check_bound(&sms, &template, &Region::rect(grid.k_max(), interior))?.c_min;
    let c_alpha = cnu_report(class.alpha, class.beta, LATTICE_RANGE)?.value;
    let block = ConjugationBlock {
        skew_defect: generator.skew_defect(),
        inverse_residual: inverse.max_abs_diff(&OperatorMatrix::identity(grid.k_max(), "I")),
        defect_shift: (unitarity_defect(&n, 0) - unitarity_defect(&m, 0)).abs(),
        sms: BoundSummary::from(&sms_check),
        sms_tall_c,
        c_e_plus: exp_remainder_fit(&generator, 1, interior)?,
        c_e_minus: exp_remainder_fit(&generator, -1, interior)?,
        power_decay: power_decay_scan(&generator, POWER_SCAN, c_alpha)?,
    };
    report.push(Verdict::at_most("exp_inverse", block.inverse_residual, IDENTITY_TOLERANCE));
    report.push(Verdict::at_most("conjugation_defect_shift", block.defect_shift, CONJUGATION_TOLERANCE));
    report.push(Verdict::finite("c_sms", sms_check.c_min));
    report.push(Verdict::optional_at_most("sms_row_slope", sms_check.row_slope, -(class.alpha - 1.0) + SLOPE_SLACK));
    report.push(Verdict::optional_at_most("sms_diagonal_slope", sms_check.diagonal_slope, -2.0 + SLOPE_SLACK));
    report.push(Verdict::finite("c_e_plus", block.c_e_plus));
    report.push(Verdict::finite("c_e_minus", block.c_e_minus));
    report.push(Verdict::flag("power_decay_geometric", block.power_decay.geometric));
    report.conjugation = Some(block);

    Ok(DecomposeArtifacts { monodromy: m, decomposition, generator, conjugated: n, m2_check, sms_check, sms_tall_c })
}

/// Block orthogonalization and diagonalization on top of [`decompose`].
pub fn diagonalize(
    prepared: &Prepared,
    report: &mut DecompositionReport,
) -> Result<(DecomposeArtifacts, DiagonalForm), CliError> {
    let class = *prepared.potential.class();
    if class.alpha <= 2.0 {
        return Err(CliError::Config(format!("diagonalization needs alpha > 2, got {}", class.alpha)));
    }
    let artifacts = decompose(prepared, report)?;
    let n_mid = prepared.grid.n_mid();
    let c_nu = cnu_report(class.alpha - 1.0, class.beta, LATTICE_RANGE)?.value;
    let params = EnvelopeParams { c: artifacts.sms_tall_c, c_nu, alpha: class.alpha, beta: class.beta };
    let g = gram(&artifacts.conjugated, n_mid, params)?;
    let w = artifacts.conjugated.block(n_mid);
    let orth = orthonormalize(&w)?;
    let steps = step_bounds(&orth, &g)?;
    let (c_w, _) = w_prime_constant(&orth, class.alpha, class.beta)?;
    let admissible = admissibility(&g, &orth);
    let span_residual = elimination_order(n_mid).iter().map(|&m| orth.span_residual(&w, m)).fold(0.0, f64::max);
    let diag = diagonalize_unitary(&orth.u)?;
    let form = assemble_diagonal_form(
        &artifacts.conjugated,
        &diag,
        &prepared.grid,
        prepared.config.h,
        &prepared.potential,
        prepared.interior(),
    )?;

    let block = BlockdiagBlock {
        envelope_c: params.c,
        envelope_c_nu: c_nu,
        gram_max_abs: g.max_abs_e(),
        gram_tail_mismatch: g.tail_mismatch,
        envelope_ratio: g.envelope_ratio,
        eps_product_ratio: g.eps_product_ratio,
        orthonormality_defect: orth.orthonormality_defect(),
        span_residual,
        step_bounds: steps.clone(),
        c_w,
        admissibility: admissible.clone(),
        diagonalization_residual: diag.residual,
        modulus_defect: diag.modulus_defect,
        clusters: diag.clusters,
        regions: form.regions.clone(),
        middle_sup: form.middle_sup,
        defect_shift: form.defect_shift,
    };
    report.push(Verdict::at_most("gram_tail_mismatch", block.gram_tail_mismatch, UNITARITY_TOLERANCE));
    report.push(Verdict::at_most("gram_envelope", block.envelope_ratio, 1.0));
    report.push(Verdict::at_most("orthonormality", block.orthonormality_defect, IDENTITY_TOLERANCE));
    report.push(Verdict::at_most("nested_span", block.span_residual, 1e-10));
    report.push(Verdict::at_most("lambda_envelope", steps.lambda_ratio, 1.0));
    report.push(Verdict::at_most("sigma_envelope", steps.sigma_ratio, 1.0));
    report.push(Verdict::finite("c_w", c_w));
    report.push(Verdict::at_most("diagonalization_residual", diag.residual, 1e-10));
    report.push(Verdict::at_most("eigenvalue_modulus", diag.modulus_defect, IDENTITY_TOLERANCE));
    report.push(Verdict::at_most("embedded_defect_shift", form.defect_shift, CONJUGATION_TOLERANCE));
    let regions = &form.regions;
    let finite_regions =
        [&regions.middle, &regions.lower, &regions.upper, &regions.outer].iter().all(|r| r.c.is_finite());
    report.push(Verdict::flag("regional_constants_finite", finite_regions));
    report.push(Verdict::flag("n_admissible", admissible.admissible));
    if let Some(reason) = &admissible.reason {
        report.warnings.push(format!("N = {n_mid} too small: {reason}"));
    }
    report.blockdiag = Some(block);
    Ok((artifacts, form))
}

pub fn lemmas(range: usize) -> Result<DecompositionReport, CliError> {
    if range < 2 {
        return Err(CliError::Config(format!("range must be >= 2, got {range}")));
    }
    let mut report = DecompositionReport::new("lemmas");
    let ineq1 = check_ineq1(range)?;
    let ineq2 = check_ineq2(range)?;
    // small ranges have not converged yet, so the constant uses at least the default window
    let cnu = cnu_report(2.0, 0.0, range.max(LATTICE_RANGE))?;
    report.push(Verdict::at_most("ineq1", ineq1.worst_ratio, 1.0));
    report.push(Verdict::flag("ineq1_exact", ineq1.passed));
    report.push(Verdict::at_most("ineq2", ineq2.worst_ratio, 1.0));
    report.push(Verdict::flag("ineq2_exact", ineq2.passed));
    report.push(Verdict::at_most("cnu_drift", cnu.relative_drift.abs(), 0.01));
    report.lemmas = Some(LemmaBlock { ineq1, ineq2, cnu });
    Ok(report)
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b - a).abs() / a.abs().max(b.abs())
    }
}

/// Reruns the decomposition for each cutoff and compares consecutive results on
/// the interior block of the smallest cutoff.
pub fn converge(config: &RunConfig, cutoffs: &[usize]) -> Result<DecompositionReport, CliError> {
    if cutoffs.len() < 2 {
        return Err(CliError::Config("need at least two cutoffs".into()));
    }
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!("cutoffs must be strictly ascending, got {cutoffs:?}")));
    }
    let prepared: Vec<Prepared> = cutoffs.iter().map(|&k| config.with_cutoff(k).prepare()).collect::<Result<_, _>>()?;
    let mut report = DecompositionReport::new("converge");
    let limit = prepared[0].interior();
    let region = Region::square(limit);
    let mut points: Vec<ConvergencePoint> = Vec::new();
    let mut previous: Option<OperatorMatrix> = None;
    for prep in &prepared {
        let p = &prep.potential;
        let h = prep.config.h;
        let cfg = IntegratorConfig { dt: Some(prep.dt), ..prep.config.integrator };
        let m = monodromy(p, h, &prep.grid, &cfg)?;
        let d = residual_m2(&m, p, &prep.grid, h)?;
        let template = residual_template(prep);
        let c_m2 = check_bound(&d.m2, &template, &region)?.c_min;
        let generator = build_generator(p, &prep.grid);
        let (_, n) = conjugated_monodromy(&m, &generator)?;
        let sms = n.sub(&d.m0).sub(&d.md);
        let c_sms = check_bound(&sms, &template, &region)?.c_min;
        let delta = previous.as_ref().map(|prev| {
            let l = limit as i64;
            (-l..=l)
                .flat_map(|k| (-l..=l).map(move |j| (j, k)))
                .map(|(j, k)| (m.get(j, k) - prev.get(j, k)).norm())
                .fold(0.0, f64::max)
        });
        points.push(ConvergencePoint { k_max: prep.grid.k_max(), c_m2, c_sms, delta });
        previous = Some(m);
    }
    for pair in points.windows(2) {
        let tag = format!("{}->{}", pair[0].k_max, pair[1].k_max);
        report.push(Verdict::at_most(
            &format!("c_m2_drift {tag}"),
            relative_change(pair[0].c_m2, pair[1].c_m2),
            CONSTANT_DRIFT,
        ));
        report.push(Verdict::at_most(
            &format!("c_sms_drift {tag}"),
            relative_change(pair[0].c_sms, pair[1].c_sms),
            CONSTANT_DRIFT,
        ));
    }
    let last = points.last().and_then(|p| p.delta).unwrap_or(f64::INFINITY);
    report.push(Verdict::at_most("final_delta", last, CONVERGENCE_TOLERANCE));
    report.run = Some(run_summary(&prepared[0]));
    report.warnings.extend(warnings(&prepared[0]));
    report.convergence = Some(ConvergenceBlock { points, tolerance: CONVERGENCE_TOLERANCE });
    Ok(report)
}

/// Rows `j,k,re,im,bound,ratio` for `|j|, |k| <= limit`, column-major.
pub fn entries_csv(m: &OperatorMatrix, limit: usize, bound: impl Fn(i64, i64) -> f64) -> String {
    let mut out = String::from("j,k,re,im,bound,ratio\n");
    for (j, k, z) in m.entries_within(limit) {
        let b = bound(j, k);
        let ratio = if z.norm() == 0.0 { 0.0 } else { z.norm() / b };
        writeln!(out, "{j},{k},{:e},{:e},{:e},{:e}", z.re, z.im, b, ratio).expect("write to string");
    }
    out
}

/// CSV of `M2` against its fitted template over the interior.
pub fn m2_csv(prepared: &Prepared, artifacts: &DecomposeArtifacts) -> String {
    let bound = residual_template(prepared).with_c(artifacts.m2_check.c_min);
    entries_csv(&artifacts.decomposition.m2, prepared.interior(), |j, k| bound.evaluate(j, k))
}

/// CSV of the remainder `tildec` against its regional estimates over the interior.
pub fn tildec_csv(prepared: &Prepared, form: &DiagonalForm) -> String {
    let class = prepared.potential.class();
    let (alpha, beta) = (class.alpha, class.beta);
    let n = form.n as i64;
    let np1 = (form.n + 1) as f64;
    let r = &form.regions;
    let bracket = floquet_core::bracket;
    entries_csv(&form.tildec, prepared.interior(), |j, k| {
        if j.abs() <= n && k.abs() <= n {
            r.middle.c / (np1 * np1)
        } else if k.abs() <= n {
            r.lower.c * (-2.0 * beta * (j.abs() - n) as f64).exp() / bracket(j).powi(2)
        } else if j.abs() <= n {
            r.upper.c * (-2.0 * beta * (k.abs() - n) as f64).exp() / bracket(k).powi(2)
        } else {
            let d = j - k;
            r.outer.c * (-2.0 * beta * d.unsigned_abs() as f64).exp()
                / (bracket(j) * bracket(k) * bracket(d).powf(alpha - 1.0))
        }
    })
}
