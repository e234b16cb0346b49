//! Approximate diagonalization of the conjugated monodromy on the middle block
//! `|j|, |k| <= N`.
//!
//! Step 1 orthonormalizes the nearly unitary block `W` into a unitary `U` in
//! the nested order `N, -N, N-1, -(N-1), ..., 1, -1, 0`. Step 2 diagonalizes
//! `U` and splits the conjugated operator into diagonal, resonant and
//! remainder parts with one decay estimate per region.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bounds::min_constant;
use crate::conjugation::unitarity_residual;
use crate::decomposition::{build_md, free_phase};
use crate::error::{Error, Result};
use crate::grid::{bracket, ModeGrid, OperatorMatrix};
use crate::potential::FourierPotential;
use crate::propagator::unitarity_defect;

/// Condition number above which a sub-Gram system counts as singular.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;
/// Eigenvalues closer than this are treated as one cluster.
pub const CLUSTER_GAP: f64 = 1e-8;
/// Tolerance on `max |U*U - I|` accepted by [`diagonalize_unitary`].
pub const UNITARY_INPUT_TOLERANCE: f64 = 1e-10;

/// Magnitudes at or below this are rounding noise and never count against an envelope.
pub const ROUNDING_FLOOR: f64 = 1e-13;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[inline]
fn excess(value: f64, bound: f64) -> f64 {
    if value <= ROUNDING_FLOOR {
        0.0
    } else {
        value / bound
    }
}

/// Constants of the envelope
/// `eps_{j'j''} = c^2 c_nu e^{-beta|j'-j''|} / (<j'><j''>(N+1)^2 <j'-j''>^{alpha-1})`,
/// where `c_nu` is the lattice-sum constant at `nu = alpha - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub c: f64,
    pub c_nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl EnvelopeParams {
    pub fn epsilon(&self, j1: i64, j2: i64, n: usize) -> f64 {
        let d = j1 - j2;
        let np1 = (n + 1) as f64;
        self.c * self.c * self.c_nu * (-self.beta * d.unsigned_abs() as f64).exp()
            / (bracket(j1) * bracket(j2) * np1 * np1 * bracket(d).powf(self.alpha - 1.0))
    }
}

#[inline]
fn idx(j: i64, n: usize) -> usize {
    (j + n as i64) as usize
}

fn block_half_width(w: &DMatrix<C64>) -> Result<usize> {
    if w.nrows() != w.ncols() || w.nrows().is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!(
            "middle block must be square of odd size, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(w.nrows() / 2)
}

/// Gram defect of the middle-block columns and its theoretical envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct GramReport {
    pub n: usize,
    /// `<w_{j'}, w_{j''}> - delta`, indexed by `j + N`.
    pub e: DMatrix<C64>,
    pub eps: DMatrix<f64>,
    pub params: EnvelopeParams,
    /// `max |E + T|` with `T` the tail sums over `|k| > N`; zero for an exactly unitary operator.
    pub tail_mismatch: f64,
    /// `max |E_{j'j''}| / eps_{j'j''}`.
    pub envelope_ratio: f64,
    pub envelope_witness: (i64, i64),
    /// `max_{j,k} sum_l eps_{jl} eps_{lk} / eps_{jk}`.
    pub eps_product_ratio: f64,
    pub eps_product_ok: bool,
    pub max_eps_diagonal: f64,
}

impl GramReport {
    pub fn e_at(&self, j1: i64, j2: i64) -> C64 {
        self.e[(idx(j1, self.n), idx(j2, self.n))]
    }

    pub fn eps_at(&self, j1: i64, j2: i64) -> f64 {
        self.eps[(idx(j1, self.n), idx(j2, self.n))]
    }

    pub fn envelope_holds(&self) -> bool {
        self.envelope_ratio <= 1.0
    }

    pub fn max_abs_e(&self) -> f64 {
        self.e.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Gram defect of the columns `w_j = (N_{ij})_{|i| <= N}`, `|j| <= N`.
pub fn gram(nfull: &OperatorMatrix, n_mid: usize, params: EnvelopeParams) -> Result<GramReport> {
    let k_max = nfull.k_max();
    if n_mid == 0 || 3 * n_mid > k_max {
        return Err(Error::BlockTooLarge { n: n_mid, k_max });
    }
    let n = n_mid as i64;
    let size = 2 * n_mid + 1;
    let w = nfull.block(n_mid);
    let mut e = w.adjoint() * &w;
    for i in 0..size {
        e[(i, i)] -= 1.0;
    }

    let mut tail_mismatch: f64 = 0.0;
    for (b, j2) in (-n..=n).enumerate() {
        for (a, j1) in (-n..=n).enumerate() {
            let tail: C64 = nfull
                .column(j1)
                .amplitudes()
                .iter()
                .zip(nfull.column(j2).amplitudes())
                .enumerate()
                .filter(|(i, _)| (*i as i64 - k_max as i64).abs() > n)
                .map(|(_, (x, y))| x.conj() * y)
                .sum();
            tail_mismatch = tail_mismatch.max((e[(a, b)] + tail).norm());
        }
    }

    let eps = DMatrix::from_fn(size, size, |a, b| params.epsilon(a as i64 - n, b as i64 - n, n_mid));
    let mut envelope_ratio: f64 = 0.0;
    let mut envelope_witness = (0, 0);
    for b in 0..size {
        for a in 0..size {
            let ratio = excess(e[(a, b)].norm(), eps[(a, b)]);
            if ratio > envelope_ratio {
                envelope_ratio = ratio;
                envelope_witness = (a as i64 - n, b as i64 - n);
            }
        }
    }
    let eps_sq = &eps * &eps;
    let eps_product_ratio =
        eps_sq.iter().zip(eps.iter()).map(|(s, e)| if *e > 0.0 { s / e } else { 0.0 }).fold(0.0, f64::max);
    let max_eps_diagonal = eps.diagonal().iter().copied().fold(0.0, f64::max);

    Ok(GramReport {
        n: n_mid,
        e,
        eps,
        params,
        tail_mismatch,
        envelope_ratio,
        envelope_witness,
        eps_product_ratio,
        eps_product_ok: eps_product_ratio <= 0.5,
        max_eps_diagonal,
    })
}

/// Coefficients of one elimination step `b' = w_m - sum_j lambda'_j w_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub m: i64,
    pub others: Vec<i64>,
    pub lambdas: Vec<C64>,
    /// `|b'| - 1`.
    pub sigma: f64,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockOrthogonalization {
    pub n: usize,
    pub u: DMatrix<C64>,
    /// `U - W`.
    pub w_prime: DMatrix<C64>,
    pub lambdas: Vec<StepRecord>,
}

impl BlockOrthogonalization {
    /// `max |U*U - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.u.adjoint() * &self.u;
        let mut worst: f64 = 0.0;
        for c in 0..g.ncols() {
            for r in 0..g.nrows() {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((g[(r, c)] - target).norm());
            }
        }
        worst
    }

    pub fn u_at(&self, j: i64, k: i64) -> C64 {
        self.u[(idx(j, self.n), idx(k, self.n))]
    }

    pub fn w_prime_at(&self, j: i64, k: i64) -> C64 {
        self.w_prime[(idx(j, self.n), idx(k, self.n))]
    }

    /// Distance of `u_m` from `span{w_j : |j| <= |m|}`.
    pub fn span_residual(&self, w: &DMatrix<C64>, m: i64) -> f64 {
        let cols: Vec<usize> = (-m.abs()..=m.abs()).map(|j| idx(j, self.n)).collect();
        let a = DMatrix::from_fn(w.nrows(), cols.len(), |r, c| w[(r, cols[c])]);
        let u = self.u.column(idx(m, self.n)).into_owned();
        let gram = a.adjoint() * &a;
        let rhs = a.adjoint() * &u;
        match gram.lu().solve(&rhs) {
            Some(x) => (u - a * x).norm(),
            None => f64::INFINITY,
        }
    }

    pub fn max_abs_sigma(&self) -> f64 {
        self.lambdas.iter().map(|s| s.sigma.abs()).fold(0.0, f64::max)
    }
}

/// Elimination order `N, -N, N-1, -(N-1), ..., 1, -1, 0`.
pub fn elimination_order(n: usize) -> Vec<i64> {
    let mut order = Vec::with_capacity(2 * n + 1);
    for m in (1..=n as i64).rev() {
        order.push(m);
        order.push(-m);
    }
    order.push(0);
    order
}

fn hermitian_condition(g: &DMatrix<C64>) -> f64 {
    if g.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(g.clone());
    let (lo, hi) =
        eig.eigenvalues.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Step 1: orthonormalizes the columns of the `(2N+1) x (2N+1)` block `w`.
///
/// For each `m` the competing columns are the original `w_j`, `-|m| <= j < |m|`,
/// `j != m`; the coefficients solve `(I + E) lambda = mu` on that set.
pub fn orthonormalize(w: &DMatrix<C64>) -> Result<BlockOrthogonalization> {
    let n = block_half_width(w)?;
    let size = 2 * n + 1;
    let mut u = DMatrix::<C64>::zeros(size, size);
    let mut records = Vec::with_capacity(size);
    for m in elimination_order(n) {
        let others: Vec<i64> = (-m.abs()..m.abs()).filter(|&j| j != m).collect();
        let wm = w.column(idx(m, n)).into_owned();
        let a = DMatrix::from_fn(size, others.len(), |r, c| w[(r, idx(others[c], n))]);
        let sub_gram = a.adjoint() * &a;
        let condition = hermitian_condition(&sub_gram);
        if !(condition <= GRAM_CONDITION_LIMIT) {
            return Err(Error::SingularGram { m, condition });
        }
        let mu = a.adjoint() * &wm;
        let lambda = if others.is_empty() {
            nalgebra::DVector::<C64>::zeros(0)
        } else {
            sub_gram.cholesky().map(|ch| ch.solve(&mu)).ok_or(Error::SingularGram { m, condition })?
        };
        let b = &wm - &a * &lambda;
        let norm = b.norm();
        if !(norm > 0.0) {
            return Err(Error::SingularGram { m, condition: f64::INFINITY });
        }
        u.set_column(idx(m, n), &(b / C64::new(norm, 0.0)));
        records.push(StepRecord { m, others, lambdas: lambda.iter().copied().collect(), sigma: norm - 1.0, condition });
    }
    let w_prime = &u - w;
    Ok(BlockOrthogonalization { n, u, w_prime, lambdas: records })
}

/// Worst ratios of the per-step coefficients to their envelope bounds
/// `|lambda'_j| <= 2 eps_{jm}` and `|sigma'| <= eps_{mm} + sum_j 2 eps_{jm}(1 + eps_{jj})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepBoundReport {
    pub lambda_ratio: f64,
    /// `(m, j)` of the worst coefficient.
    pub lambda_witness: Option<(i64, i64)>,
    pub sigma_ratio: f64,
    pub sigma_witness: Option<i64>,
    pub ok: bool,
}

pub fn step_bounds(orth: &BlockOrthogonalization, gram: &GramReport) -> Result<StepBoundReport> {
    if orth.n != gram.n {
        return Err(Error::DimensionMismatch(format!("block N = {} vs Gram N = {}", orth.n, gram.n)));
    }
    let mut report =
        StepBoundReport { lambda_ratio: 0.0, lambda_witness: None, sigma_ratio: 0.0, sigma_witness: None, ok: true };
    for step in &orth.lambdas {
        let m = step.m;
        let mut sigma_bound = gram.eps_at(m, m);
        for (&j, lambda) in step.others.iter().zip(&step.lambdas) {
            let eps_jm = gram.eps_at(j, m);
            let ratio = excess(lambda.norm(), 2.0 * eps_jm);
            if ratio > report.lambda_ratio {
                report.lambda_ratio = ratio;
                report.lambda_witness = Some((m, j));
            }
            sigma_bound += 2.0 * eps_jm * (1.0 + gram.eps_at(j, j));
        }
        let ratio = excess(step.sigma.abs(), sigma_bound);
        if ratio > report.sigma_ratio {
            report.sigma_ratio = ratio;
            report.sigma_witness = Some(m);
        }
    }
    report.ok = report.lambda_ratio <= 1.0 && report.sigma_ratio <= 1.0;
    Ok(report)
}

/// Whether `N` is large enough for the envelope argument to close.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub n: usize,
    pub eps_product_ok: bool,
    pub max_eps_diagonal: f64,
    pub max_abs_sigma: f64,
    pub admissible: bool,
    pub reason: Option<String>,
}

impl Admissibility {
    pub fn require(&self) -> Result<()> {
        match &self.reason {
            None => Ok(()),
            Some(reason) => Err(Error::NTooSmall { n: self.n, reason: reason.clone() }),
        }
    }
}

pub fn admissibility(gram: &GramReport, orth: &BlockOrthogonalization) -> Admissibility {
    let max_abs_sigma = orth.max_abs_sigma();
    let mut reasons = Vec::new();
    if !gram.eps_product_ok {
        reasons.push(format!("sum_l eps_jl eps_lk / eps_jk reaches {:.3e} > 1/2", gram.eps_product_ratio));
    }
    if !(gram.max_eps_diagonal < 0.5) {
        reasons.push(format!("max eps_jj = {:.3e} >= 1/2", gram.max_eps_diagonal));
    }
    if !(max_abs_sigma < 0.5) {
        reasons.push(format!("max |sigma'| = {max_abs_sigma:.3e} >= 1/2"));
    }
    let reason = (!reasons.is_empty()).then(|| reasons.join("; "));
    Admissibility {
        n: gram.n,
        eps_product_ok: gram.eps_product_ok,
        max_eps_diagonal: gram.max_eps_diagonal,
        max_abs_sigma,
        admissible: reason.is_none(),
        reason,
    }
}

/// Smallest `c_w` with `|w'_{jk}| <= c_w e^{-beta|j-k|} / (<j><k>(N+1)^2 <j-k>^{alpha-1})`.
pub fn w_prime_constant(orth: &BlockOrthogonalization, alpha: f64, beta: f64) -> Result<(f64, Option<(i64, i64)>)> {
    let n = orth.n as i64;
    let np1 = (orth.n + 1) as f64;
    let entries =
        (-n..=n).flat_map(|k| (-n..=n).map(move |j| (j, k))).map(|(j, k)| (j, k, orth.w_prime_at(j, k).norm()));
    let fit = min_constant(entries, |j, k| {
        let d = j - k;
        (-beta * d.unsigned_abs() as f64).exp() / (bracket(j) * bracket(k) * np1 * np1 * bracket(d).powf(alpha - 1.0))
    })?;
    Ok((fit.c_min, fit.witness))
}

/// Step 2 output: `Uhat* U Uhat = diag(d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryDiagonalization {
    pub n: usize,
    pub uhat: DMatrix<C64>,
    /// Unit-modulus eigenvalue assigned to each index `j + N`.
    pub d: Vec<C64>,
    /// `max ||lambda| - 1|` before projection to the unit circle.
    pub modulus_defect: f64,
    /// `max |Uhat* U Uhat - diag(d)|`.
    pub residual: f64,
    pub clusters: usize,
}

fn modified_gram_schmidt(q: &mut DMatrix<C64>, cols: &[usize]) {
    for (a, &ca) in cols.iter().enumerate() {
        for &cb in &cols[..a] {
            let proj = q.column(cb).dotc(&q.column(ca));
            let prev = q.column(cb).into_owned();
            let mut col = q.column_mut(ca);
            col -= prev * proj;
        }
        let norm = q.column(ca).norm();
        q.column_mut(ca).iter_mut().for_each(|z| *z /= norm);
    }
}

/// Diagonalizes a unitary matrix by complex Schur decomposition.
///
/// Eigenvectors are matched to indices by greedy maximal overlap `|Q_{jc}|`, and each
/// column is rotated so that its matched entry is real and positive; a diagonal
/// input therefore returns `Uhat = I`.
pub fn diagonalize_unitary(u: &DMatrix<C64>) -> Result<UnitaryDiagonalization> {
    let n = block_half_width(u)?;
    let size = u.nrows();
    let defect = unitarity_residual(&u.adjoint());
    if !(defect <= UNITARY_INPUT_TOLERANCE) {
        return Err(Error::NotUnitary { defect });
    }
    let (mut q, t) = nalgebra::Schur::new(u.clone()).unpack();
    let lambdas: Vec<C64> = (0..size).map(|i| t[(i, i)]).collect();
    let modulus_defect = lambdas.iter().map(|l| (l.norm() - 1.0).abs()).fold(0.0, f64::max);

    // clusters of numerically equal eigenvalues (transitive closure)
    let mut label: Vec<usize> = (0..size).collect();
    for a in 0..size {
        for b in (a + 1)..size {
            if (lambdas[a] - lambdas[b]).norm() < CLUSTER_GAP {
                let (la, lb) = (label[a], label[b]);
                if la != lb {
                    let (keep, drop) = (la.min(lb), la.max(lb));
                    label.iter_mut().filter(|l| **l == drop).for_each(|l| *l = keep);
                }
            }
        }
    }
    let mut clusters = 0;
    for root in 0..size {
        let members: Vec<usize> = (0..size).filter(|&i| label[i] == root).collect();
        if members.is_empty() {
            continue;
        }
        clusters += 1;
        if members.len() > 1 {
            modified_gram_schmidt(&mut q, &members);
        }
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(size * size);
    for c in 0..size {
        for r in 0..size {
            candidates.push((q[(r, c)].norm_sqr(), r, c));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row_of_col = vec![usize::MAX; size];
    let mut row_taken = vec![false; size];
    for (_, r, c) in candidates {
        if row_of_col[c] == usize::MAX && !row_taken[r] {
            row_of_col[c] = r;
            row_taken[r] = true;
        }
    }

    let mut uhat = DMatrix::<C64>::zeros(size, size);
    let mut d = vec![ZERO; size];
    for c in 0..size {
        let r = row_of_col[c];
        let pivot = q[(r, c)];
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { C64::new(1.0, 0.0) };
        uhat.set_column(r, &(q.column(c) * phase));
        d[r] = lambdas[c] / lambdas[c].norm();
    }

    let conj = uhat.adjoint() * u * &uhat;
    let mut residual: f64 = 0.0;
    for c in 0..size {
        for r in 0..size {
            let target = if r == c { d[r] } else { ZERO };
            residual = residual.max((conj[(r, c)] - target).norm());
        }
    }
    if !(residual <= UNITARY_INPUT_TOLERANCE) {
        return Err(Error::NotUnitary { defect: residual });
    }
    Ok(UnitaryDiagonalization { n, uhat, d, modulus_defect, residual, clusters })
}

/// Fitted constant for one region of the remainder estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFit {
    pub c: f64,
    pub witness: Option<(i64, i64)>,
    pub count: usize,
}

/// Constants of the four regional estimates of the remainder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionalConstants {
    /// `|j|, |k| <= N`: `c (N+1)^{-2}`.
    pub middle: RegionFit,
    /// `|k| <= N < |j|`: `c e^{-2 beta(|j|-N)} <j>^{-2}`.
    pub lower: RegionFit,
    /// `|j| <= N < |k|`: `c e^{-2 beta(|k|-N)} <k>^{-2}`.
    pub upper: RegionFit,
    /// `|j|, |k| > N`: `c e^{-2 beta|j-k|} / (<j><k><j-k>^{alpha-1})`.
    pub outer: RegionFit,
    /// Modes `|j|, |k| <= limit` entering the fits.
    pub limit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalForm {
    pub n: usize,
    /// `d_k` for every mode of the grid, indexed by `k + K`.
    pub d: Vec<C64>,
    /// Middle-block diagonalizer.
    pub uhat: DMatrix<C64>,
    pub tilde0: OperatorMatrix,
    pub tilded: OperatorMatrix,
    pub tildec: OperatorMatrix,
    pub regions: RegionalConstants,
    /// `sup |tildec|` over the middle block.
    pub middle_sup: f64,
    /// `|defect(conjugated) - defect(N)|` over the whole grid.
    pub defect_shift: f64,
}

impl DiagonalForm {
    pub fn conjugated(&self) -> OperatorMatrix {
        self.tilde0.add(&self.tilded).add(&self.tildec)
    }
}

fn region_fit(
    m: &OperatorMatrix,
    limit: i64,
    select: impl Fn(i64, i64) -> bool,
    shape: impl Fn(i64, i64) -> f64,
) -> Result<RegionFit> {
    let entries: Vec<(i64, i64, f64)> = (-limit..=limit)
        .flat_map(|k| (-limit..=limit).map(move |j| (j, k)))
        .filter(|&(j, k)| select(j, k))
        .map(|(j, k)| (j, k, m.get(j, k).norm()))
        .collect();
    if entries.is_empty() {
        return Ok(RegionFit { c: 0.0, witness: None, count: 0 });
    }
    let fit = min_constant(entries, shape)?;
    Ok(RegionFit { c: fit.c_min, witness: fit.witness, count: fit.count })
}

/// Conjugates `nfull` by the embedded middle-block diagonalizer and splits the result.
///
/// Regional constants are fitted over `|j|, |k| <= limit`.
pub fn assemble_diagonal_form(
    nfull: &OperatorMatrix,
    diag: &UnitaryDiagonalization,
    grid: &ModeGrid,
    h: f64,
    p: &FourierPotential,
    limit: usize,
) -> Result<DiagonalForm> {
    let k_max = grid.k_max();
    let n_mid = diag.n;
    if nfull.k_max() != k_max {
        return Err(Error::DimensionMismatch(format!("operator on K = {} vs grid K = {k_max}", nfull.k_max())));
    }
    if 3 * n_mid > k_max {
        return Err(Error::BlockTooLarge { n: n_mid, k_max });
    }
    let embedded = OperatorMatrix::identity(k_max, "Uhat").with_block(&diag.uhat);
    let conjugated = embedded.adjoint().mul(nfull).mul(&embedded);

    let n = n_mid as i64;
    let d: Vec<C64> = grid
        .modes()
        .map(|k| if k.abs() <= n { diag.d[idx(k, n_mid)] } else { free_phase(k, h, std::f64::consts::TAU) })
        .collect();
    let tilde0 = OperatorMatrix::from_diagonal(k_max, "tilde0", |k| d[grid.index(k)]);
    let md = build_md(p, grid, h);
    let tilded =
        OperatorMatrix::from_fn(k_max, "tilded", |j, k| if j.abs() <= n && k.abs() <= n { ZERO } else { md.get(j, k) });
    let tildec = conjugated.sub(&tilde0).sub(&tilded).with_label("tildec");

    let class = p.class();
    let (alpha, beta) = (class.alpha, class.beta);
    let l = limit.min(k_max) as i64;
    let np1 = (n_mid + 1) as f64;
    let regions = RegionalConstants {
        middle: region_fit(&tildec, l, |j, k| j.abs() <= n && k.abs() <= n, |_, _| 1.0 / (np1 * np1))?,
        lower: region_fit(
            &tildec,
            l,
            |j, k| k.abs() <= n && j.abs() > n,
            |j, _| (-2.0 * beta * (j.abs() - n) as f64).exp() / bracket(j).powi(2),
        )?,
        upper: region_fit(
            &tildec,
            l,
            |j, k| j.abs() <= n && k.abs() > n,
            |_, k| (-2.0 * beta * (k.abs() - n) as f64).exp() / bracket(k).powi(2),
        )?,
        outer: region_fit(
            &tildec,
            l,
            |j, k| j.abs() > n && k.abs() > n,
            |j, k| {
                let dd = j - k;
                (-2.0 * beta * dd.unsigned_abs() as f64).exp()
                    / (bracket(j) * bracket(k) * bracket(dd).powf(alpha - 1.0))
            },
        )?,
        limit: l as usize,
    };
    let middle_sup = tildec.max_abs_within(n_mid);
    let defect_shift = (unitarity_defect(&conjugated, 0) - unitarity_defect(nfull, 0)).abs();

    Ok(DiagonalForm { n: n_mid, d, uhat: diag.uhat.clone(), tilde0, tilded, tildec, regions, middle_sup, defect_shift })
}
