//! The anti-selfadjoint generator `G_{jk} = v_{j-k}(0)/(j^2 - k^2)`, the unitary
//! `S = e^{-G}` and the conjugated monodromy `N = S* M S`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bounds::{fit_bound, min_constant, DecayBound, Region};
use crate::error::{Error, Result};
use crate::grid::{bracket, ModeGrid, OperatorMatrix};
use crate::potential::{FourierPotential, SmoothnessClass};

/// Tolerance on `max |G + G*|`.
pub const SKEW_TOLERANCE: f64 = 1e-10;
/// Tolerance on `max |S S* - I|` after exponentiation.
pub const UNITARY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub g: OperatorMatrix,
    /// Class of the potential the generator was built from; sets the decay templates.
    pub class: SmoothnessClass,
}

impl Generator {
    pub fn from_matrix(g: OperatorMatrix, class: SmoothnessClass) -> Self {
        Self { g, class }
    }

    pub fn k_max(&self) -> usize {
        self.g.k_max()
    }

    /// `max |G + G*|`.
    pub fn skew_defect(&self) -> f64 {
        self.g.add(&self.g.adjoint()).max_abs()
    }
}

#[allow(non_snake_case)]
pub fn build_G(p: &FourierPotential, grid: &ModeGrid) -> Generator {
    build_generator(p, grid)
}

pub fn build_generator(p: &FourierPotential, grid: &ModeGrid) -> Generator {
    let g = OperatorMatrix::from_fn(grid.k_max(), "G", |j, k| {
        if j * j == k * k {
            C64::new(0.0, 0.0)
        } else {
            p.eval_coefficient(j - k, 0.0) / (j * j - k * k) as f64
        }
    });
    Generator { g, class: *p.class() }
}

/// `max |A A* - I|`.
pub fn unitarity_residual(a: &DMatrix<C64>) -> f64 {
    let n = a.nrows();
    let prod = a * a.adjoint();
    let mut worst: f64 = 0.0;
    for c in 0..n {
        for r in 0..n {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[(r, c)] - target).norm());
        }
    }
    worst
}

/// `e^{sign G}` through the eigendecomposition of the Hermitian matrix `iG`.
pub fn exp_skew(gen: &Generator, sign: i32) -> Result<OperatorMatrix> {
    let defect = gen.skew_defect();
    if !(defect <= SKEW_TOLERANCE) {
        return Err(Error::NotSkew { defect });
    }
    let s = if sign >= 0 { 1.0 } else { -1.0 };
    let ig = gen.g.matrix() * C64::new(0.0, 1.0);
    let hermitian = (&ig + ig.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(hermitian);
    // e^{sG} = e^{-is(iG)}
    let phases = eig.eigenvalues.map(|lambda| C64::from_polar(1.0, -s * lambda));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (c, phase) in phases.iter().enumerate() {
        scaled.column_mut(c).iter_mut().for_each(|z| *z *= phase);
    }
    let out = scaled * v.adjoint();
    let residual = unitarity_residual(&out);
    if !(residual <= UNITARY_TOLERANCE) {
        return Err(Error::NotUnitary { defect: residual });
    }
    let label = if s > 0.0 { "exp(G)" } else { "exp(-G)" };
    OperatorMatrix::from_matrix(gen.k_max(), label, out)
}

/// `S* M S`.
pub fn conjugate(m: &OperatorMatrix, s: &OperatorMatrix) -> Result<OperatorMatrix> {
    if m.k_max() != s.k_max() {
        return Err(Error::DimensionMismatch(format!(
            "operator on K = {} vs conjugator on K = {}",
            m.k_max(),
            s.k_max()
        )));
    }
    Ok(s.adjoint().mul(m).mul(s).with_label("N"))
}

/// `S = e^{-G}` together with `N = S* M S`.
pub fn conjugated_monodromy(m: &OperatorMatrix, gen: &Generator) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let s = exp_skew(gen, -1)?.with_label("S");
    let n = conjugate(m, &s)?;
    Ok((s, n))
}

/// `e^{sign G} - I - sign G`.
pub fn exp_remainder(gen: &Generator, sign: i32) -> Result<OperatorMatrix> {
    let e = exp_skew(gen, sign)?;
    let s = if sign >= 0 { 1.0 } else { -1.0 };
    let id = OperatorMatrix::identity(gen.k_max(), "I");
    let label = if s > 0.0 { "G+" } else { "G-" };
    Ok(e.sub(&id).sub(&gen.g.scale(C64::new(s, 0.0))).with_label(label))
}

/// Minimal constant of `G^n` against its power-decay template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub n: u32,
    pub c_min: f64,
    pub witness: Option<(i64, i64)>,
    pub max_abs: f64,
}

/// `G^n` fitted against `c e^{-beta|j-k|}/((<j>+<k>)<j-k>^alpha)` for `n = 1`
/// and `c e^{-beta|j-k|}/(<j><k><j-k>^alpha)` for `n >= 2`.
pub fn power_decay_check(gen: &Generator, n: u32) -> Result<PowerFit> {
    if n == 0 {
        return Err(Error::InvalidArgument("power must be >= 1".into()));
    }
    let mut power = gen.g.matrix().clone();
    for _ in 1..n {
        power = &power * gen.g.matrix();
    }
    power_fit(gen, n, &OperatorMatrix::from_matrix(gen.k_max(), "Gn", power)?)
}

fn power_fit(gen: &Generator, n: u32, power: &OperatorMatrix) -> Result<PowerFit> {
    let SmoothnessClass { alpha, beta, .. } = gen.class;
    let shape = move |j: i64, k: i64| {
        let d = j - k;
        let weight = if n == 1 { bracket(j) + bracket(k) } else { bracket(j) * bracket(k) };
        (-beta * d.unsigned_abs() as f64).exp() / (weight * bracket(d).powf(alpha))
    };
    let fit = min_constant(power.iter_entries().map(|(j, k, z)| (j, k, z.norm())), shape)?;
    Ok(PowerFit { n, c_min: fit.c_min, witness: fit.witness, max_abs: power.max_abs() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerDecayReport {
    pub fits: Vec<PowerFit>,
    /// `(3 c_v)^n c_alpha^{n-1}` for each `n`.
    pub lemma_bounds: Vec<f64>,
    pub c_alpha: f64,
    /// Every fitted constant is below its lemma bound.
    pub within_lemma: bool,
    /// `c_{n+1} <= 3 c_v c_alpha c_n` for every consecutive pair.
    pub geometric: bool,
}

/// Runs [`power_decay_check`] for `n = 1..=n_max` with a given `c_alpha`.
pub fn power_decay_scan(gen: &Generator, n_max: u32, c_alpha: f64) -> Result<PowerDecayReport> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let c_v = gen.class.c_v;
    let mut fits = Vec::with_capacity(n_max as usize);
    let mut power = gen.g.matrix().clone();
    for n in 1..=n_max {
        if n > 1 {
            power = &power * gen.g.matrix();
        }
        fits.push(power_fit(gen, n, &OperatorMatrix::from_matrix(gen.k_max(), "Gn", power.clone())?)?);
    }
    let lemma_bounds: Vec<f64> = (1..=n_max).map(|n| (3.0 * c_v).powi(n as i32) * c_alpha.powi(n as i32 - 1)).collect();
    let within_lemma = fits.iter().zip(&lemma_bounds).all(|(f, b)| f.c_min <= *b);
    let rate = 3.0 * c_v * c_alpha;
    let geometric = fits.windows(2).all(|pair| pair[1].c_min <= rate * pair[0].c_min * (1.0 + 1e-12));
    Ok(PowerDecayReport { fits, lemma_bounds, c_alpha, within_lemma, geometric })
}

/// Fitted constant of `G^{+-}` against `c e^{-beta|j-k|}/(<j><k><j-k>^alpha)` over `|j|,|k| <= limit`.
pub fn exp_remainder_fit(gen: &Generator, sign: i32, limit: usize) -> Result<f64> {
    let rem = exp_remainder(gen, sign)?;
    let SmoothnessClass { alpha, beta, .. } = gen.class;
    let template = DecayBound::new(1.0, beta, 1.0, 1.0, alpha);
    let region = Region::square(limit.min(gen.k_max()));
    let fit = fit_bound(region.pairs().into_iter().map(|(j, k)| (j, k, rem.get(j, k).norm())), &template)?;
    Ok(fit.c_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_m0, build_m1};
    use std::f64::consts::PI;

    fn class() -> SmoothnessClass {
        SmoothnessClass { alpha: 3.0, beta: 0.0, gamma: 2, c_v: 54.0 }
    }

    fn p1() -> FourierPotential {
        let half = C64::new(0.5, 0.0);
        FourierPotential::new([(2, vec![(-1, half), (0, C64::new(1.0, 0.0)), (1, half)])], class()).unwrap()
    }

    #[test]
    fn generator_examples() {
        let g = build_G(&p1(), &ModeGrid::new(8, 2).unwrap());
        assert!((g.g.get(3, 1) - C64::new(0.25, 0.0)).norm() < 1e-15);
        assert!((g.g.get(1, 3) - C64::new(-0.25, 0.0)).norm() < 1e-15);
        assert_eq!(g.g.get(1, -1), C64::new(0.0, 0.0));
        assert_eq!(g.skew_defect(), 0.0);
    }

    #[test]
    fn zero_generator_exponentiates_to_identity() {
        let gen = Generator::from_matrix(OperatorMatrix::zeros(3, "G"), class());
        let e = exp_skew(&gen, 1).unwrap();
        assert!(e.max_abs_diff(&OperatorMatrix::identity(3, "I")) < 1e-15);
    }

    #[test]
    fn rotation_block() {
        let a = 0.3;
        let mut g = OperatorMatrix::zeros(1, "G");
        // modes -1, 0, 1; rotate in the (-1, 0) plane
        g.set(-1, 0, C64::new(a, 0.0));
        g.set(0, -1, C64::new(-a, 0.0));
        let e = exp_skew(&Generator::from_matrix(g, class()), 1).unwrap();
        assert!((e.get(-1, -1) - C64::new(a.cos(), 0.0)).norm() < 1e-15);
        assert!((e.get(-1, 0) - C64::new(a.sin(), 0.0)).norm() < 1e-15);
        assert!((e.get(0, -1) - C64::new(-a.sin(), 0.0)).norm() < 1e-15);
        assert!((e.get(1, 1) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn not_skew_rejected() {
        let g = OperatorMatrix::identity(2, "G");
        assert!(matches!(exp_skew(&Generator::from_matrix(g, class()), 1), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn exponentials_are_inverse_unitaries() {
        let gen = build_G(&p1(), &ModeGrid::new(16, 5).unwrap());
        let plus = exp_skew(&gen, 1).unwrap();
        let minus = exp_skew(&gen, -1).unwrap();
        let id = OperatorMatrix::identity(16, "I");
        assert!(plus.mul(&minus).max_abs_diff(&id) < 1e-12);
        assert!(plus.mul(&plus.adjoint()).max_abs_diff(&id) < 1e-13);
    }

    #[test]
    fn conjugation_trivial_cases() {
        let gen = build_G(&p1(), &ModeGrid::new(6, 2).unwrap());
        let s = exp_skew(&gen, -1).unwrap();
        let id = OperatorMatrix::identity(6, "I");
        let m = OperatorMatrix::from_fn(6, "M", |j, k| C64::new(j as f64, k as f64));
        assert!(conjugate(&m, &id).unwrap().max_abs_diff(&m) < 1e-15);
        assert!(conjugate(&id, &s).unwrap().max_abs_diff(&id) < 1e-13);
        assert!(conjugate(&m, &OperatorMatrix::identity(5, "I")).is_err());
    }

    #[test]
    fn m1_is_commutator_with_m0() {
        let g = ModeGrid::new(12, 4).unwrap();
        for h in [1.0, 2.0 * PI, 0.37] {
            let gen = build_G(&p1(), &g);
            let m0 = build_m0(&g, h);
            let comm = m0.mul(&gen.g).sub(&gen.g.mul(&m0));
            assert!(build_m1(&p1(), &g, h).max_abs_diff(&comm) < 1e-12);
        }
    }

    #[test]
    fn first_power_within_lemma() {
        let gen = build_G(&p1(), &ModeGrid::new(16, 5).unwrap());
        assert!(power_decay_check(&gen, 1).unwrap().c_min <= 3.0 * 54.0);
        let zero = Generator::from_matrix(OperatorMatrix::zeros(4, "G"), class());
        assert_eq!(power_decay_check(&zero, 3).unwrap().c_min, 0.0);
    }

    #[test]
    fn remainder_is_second_order() {
        let gen = build_G(&p1().scaled(1e-3), &ModeGrid::new(8, 2).unwrap());
        let rem = exp_remainder(&gen, 1).unwrap();
        assert!(rem.max_abs() < 1e-6);
        // G^+ ~ G^2/2
        let half_sq = gen.g.mul(&gen.g).scale(C64::new(0.5, 0.0));
        assert!(rem.max_abs_diff(&half_sq) < 1e-9);
    }
}
