//! Explicit part of the monodromy operator and its residual:
//! `M = M^(0) + M^(d) + M^(1) + M^(2)`.
//!
//! * `M^(0)_{jk} = delta_{jk} e^{(T/(ih)) k^2}` (free flow),
//! * `M^(d)_{-k,k} = e^{(T/(ih)) k^2}/(ih) int_0^T v_{-2k}` (resonant pairs `j = -k`),
//! * `M^(1)_{jk} = v_{j-k}(0) (e^{(T/(ih))k^2} - e^{(T/(ih))j^2}) / (k^2 - j^2)`, zero for `j^2 = k^2`,
//!
//! with `T = 2pi` (or `-2pi` for the backward map). All time integrals are
//! evaluated per harmonic in closed form.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bounds::{fit_bound, fixed_effects_slope, DecayBound, Region, REGRESSION_FLOOR};
use crate::error::{Error, Result};
use crate::grid::{bracket, Frame, ModeGrid, OperatorMatrix, StateVector};
use crate::potential::{FourierPotential, TrigPoly};
use crate::propagator::PERIOD;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Below this `|m + omega|` the exponential integral switches to its Taylor form.
pub const NEAR_RESONANCE: f64 = 1e-9;

/// `e^{(t/(ih)) k^2}`.
#[inline]
pub fn free_phase(k: i64, h: f64, t: f64) -> C64 {
    C64::from_polar(1.0, -t * (k * k) as f64 / h)
}

/// `int_0^t e^{i x tau} dtau`.
pub fn phase_integral(x: f64, t: f64) -> C64 {
    if x.abs() < NEAR_RESONANCE {
        C64::new(t, 0.5 * x * t * t)
    } else {
        (C64::from_polar(1.0, x * t) - 1.0) / C64::new(0.0, x)
    }
}

/// `int_0^t f^{(order)}(tau) e^{i omega tau} dtau` for a trigonometric polynomial `f`.
fn weighted_integral(poly: &TrigPoly, order: u32, omega: f64, t: f64) -> C64 {
    poly.harmonics()
        .filter(|(_, c)| c.norm() != 0.0)
        .map(|(m, c)| {
            let factor = if order == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, m as f64).powu(order) };
            factor * c * phase_integral(m as f64 + omega, t)
        })
        .sum()
}

fn mode_integral(p: &FourierPotential, k: i64, order: u32, omega: f64, t: f64) -> C64 {
    p.mode(k).map_or(ZERO, |poly| weighted_integral(poly, order, omega, t))
}

pub fn build_m0(grid: &ModeGrid, h: f64) -> OperatorMatrix {
    build_m0_at(grid, h, PERIOD)
}

pub fn build_m0_at(grid: &ModeGrid, h: f64, t: f64) -> OperatorMatrix {
    OperatorMatrix::from_diagonal(grid.k_max(), "M0", |k| free_phase(k, h, t))
}

pub fn build_md(p: &FourierPotential, grid: &ModeGrid, h: f64) -> OperatorMatrix {
    build_md_at(p, grid, h, PERIOD)
}

pub fn build_md_at(p: &FourierPotential, grid: &ModeGrid, h: f64, t: f64) -> OperatorMatrix {
    let mut md = OperatorMatrix::zeros(grid.k_max(), "Md");
    let inv_ih = C64::new(0.0, -1.0 / h);
    for k in grid.modes() {
        let integral = mode_integral(p, -2 * k, 0, 0.0, t);
        if integral != ZERO {
            md.set(-k, k, free_phase(k, h, t) * inv_ih * integral);
        }
    }
    md
}

pub fn build_m1(p: &FourierPotential, grid: &ModeGrid, h: f64) -> OperatorMatrix {
    build_m1_at(p, grid, h, PERIOD)
}

pub fn build_m1_at(p: &FourierPotential, grid: &ModeGrid, h: f64, t: f64) -> OperatorMatrix {
    OperatorMatrix::from_fn(grid.k_max(), "M1", |j, k| {
        if j * j == k * k {
            return ZERO;
        }
        let v = p.eval_coefficient(j - k, 0.0);
        if v == ZERO {
            return ZERO;
        }
        v * (free_phase(k, h, t) - free_phase(j, h, t)) / (k * k - j * j) as f64
    })
}

/// Closed-form solution `psi^(1)(t)` of the single-source problem
/// `ih psi_k' = k^2 psi_k + v_{k-k0}(t) psi_{k0}`, `psi_k(0) = delta_{k k0}`.
pub fn first_order_column(p: &FourierPotential, grid: &ModeGrid, h: f64, k0: i64, t: f64) -> Result<StateVector> {
    grid.check_mode(k0)?;
    let inv_ih = C64::new(0.0, -1.0 / h);
    let mut psi = StateVector::zeros(grid.k_max(), Frame::Lab);
    for k in grid.modes() {
        let value = if k == k0 {
            free_phase(k0, h, t)
        } else if k == -k0 {
            free_phase(k0, h, t) * inv_ih * mode_integral(p, -2 * k0, 0, 0.0, t)
        } else {
            let omega = (k * k - k0 * k0) as f64 / h;
            free_phase(k, h, t) * inv_ih * mode_integral(p, k - k0, 0, omega, t)
        };
        psi.set(k, value);
    }
    Ok(psi)
}

/// Integration-by-parts remainder
/// `psi^(11)_k(t) = -e^{(t/(ih))k^2} int_0^t v'_{k-k0}(tau) e^{(tau/(ih))(k0^2-k^2)} dtau / (k0^2 - k^2)`,
/// zero at `k = +-k0`.
pub fn first_order_correction(p: &FourierPotential, grid: &ModeGrid, h: f64, k0: i64, t: f64) -> Result<StateVector> {
    grid.check_mode(k0)?;
    let mut psi = StateVector::zeros(grid.k_max(), Frame::Lab);
    for k in grid.modes() {
        if k * k == k0 * k0 {
            continue;
        }
        let omega = (k * k - k0 * k0) as f64 / h;
        let integral = mode_integral(p, k - k0, 1, omega, t);
        psi.set(k, -free_phase(k, h, t) * integral / (k0 * k0 - k * k) as f64);
    }
    Ok(psi)
}

/// Matrix whose column `k0` is `psi^(1)(t)` for that source.
pub fn first_order_matrix(p: &FourierPotential, grid: &ModeGrid, h: f64, t: f64) -> OperatorMatrix {
    let columns: Vec<StateVector> =
        grid.modes().map(|k0| first_order_column(p, grid, h, k0, t).expect("mode on grid")).collect();
    OperatorMatrix::from_columns(grid.k_max(), "Psi1", &columns).expect("square")
}

/// Matrix whose column `k0` is `psi^(11)(t)`.
pub fn first_order_correction_matrix(p: &FourierPotential, grid: &ModeGrid, h: f64, t: f64) -> OperatorMatrix {
    let columns: Vec<StateVector> =
        grid.modes().map(|k0| first_order_correction(p, grid, h, k0, t).expect("mode on grid")).collect();
    OperatorMatrix::from_columns(grid.k_max(), "Psi11", &columns).expect("square")
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub m0: OperatorMatrix,
    pub md: OperatorMatrix,
    pub m1: OperatorMatrix,
    pub m2: OperatorMatrix,
    pub h: f64,
    /// `2pi` for `W(2pi)`, `-2pi` for `W(-2pi)`.
    pub period: f64,
}

impl Decomposition {
    /// `m0 + md + m1 + m2`, which reproduces the input monodromy.
    pub fn total(&self) -> OperatorMatrix {
        self.m0.add(&self.md).add(&self.m1).add(&self.m2).with_label("M")
    }

    /// The explicit part `m0 + md + m1`.
    pub fn explicit(&self) -> OperatorMatrix {
        self.m0.add(&self.md).add(&self.m1).with_label("M0+Md+M1")
    }
}

/// Splits a monodromy matrix into its explicit parts and the residual `M^(2)`.
pub fn residual_m2(m: &OperatorMatrix, p: &FourierPotential, grid: &ModeGrid, h: f64) -> Result<Decomposition> {
    residual_m2_at(m, p, grid, h, PERIOD)
}

/// As [`residual_m2`] for the flow map at time `t` (`t = -2pi` for the backward map).
pub fn residual_m2_at(
    m: &OperatorMatrix,
    p: &FourierPotential,
    grid: &ModeGrid,
    h: f64,
    t: f64,
) -> Result<Decomposition> {
    if m.k_max() != grid.k_max() {
        return Err(Error::DimensionMismatch(format!("matrix on K = {} vs grid K = {}", m.k_max(), grid.k_max())));
    }
    let m0 = build_m0_at(grid, h, t);
    let md = build_md_at(p, grid, h, t);
    let m1 = build_m1_at(p, grid, h, t);
    let m2 = m.sub(&m0).sub(&md).sub(&m1).with_label("M2");
    Ok(Decomposition { m0, md, m1, m2, h, period: t })
}

/// Verdict of a decay-template check over an index region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub region: Region,
    /// Template as supplied.
    pub bound: DecayBound,
    /// `max |entry| / bound` for the supplied constant.
    pub max_ratio: f64,
    /// Smallest constant for which every ratio is `<= 1`.
    pub c_min: f64,
    pub witness: Option<(i64, i64)>,
    /// Least-squares `(p, q, r)` of the template fitted to the entries.
    pub powers: Option<[f64; 3]>,
    /// Slope of `log|e_{jk}|` against `log<j-k>` down each column.
    pub row_slope: Option<f64>,
    /// Slope of `log|e_{jk}|` against `log sqrt(<j><k>)` along each diagonal `j - k = const`.
    pub diagonal_slope: Option<f64>,
    /// Slope along each diagonal against the column bracket `log<k>` alone.
    pub column_bracket_slope: Option<f64>,
}

/// Compares `|M_{jk}|` with a decay template on `region`.
pub fn check_bound(m: &OperatorMatrix, bound: &DecayBound, region: &Region) -> Result<BoundCheck> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let k_max = m.k_max() as i64;
    let entries: Vec<(i64, i64, f64)> = region
        .pairs()
        .into_iter()
        .filter(|(j, k)| j.abs() <= k_max && k.abs() <= k_max)
        .map(|(j, k)| (j, k, m.get(j, k).norm()))
        .collect();
    let fit = fit_bound(entries.iter().copied(), &bound.with_c(1.0))?;
    let max_ratio =
        entries.iter().map(|&(j, k, e)| if e == 0.0 { 0.0 } else { e / bound.evaluate(j, k) }).fold(0.0, f64::max);

    let mut by_column: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    let mut by_diagonal: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    let mut by_diagonal_col: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for &(j, k, e) in &entries {
        if e < REGRESSION_FLOOR {
            continue;
        }
        let y = e.ln() + bound.b * (j - k).unsigned_abs() as f64;
        by_column.entry(k).or_default().push((bracket(j - k).ln(), y));
        by_diagonal.entry(j - k).or_default().push((0.5 * (bracket(j) * bracket(k)).ln(), y));
        by_diagonal_col.entry(j - k).or_default().push((bracket(k).ln(), y));
    }

    Ok(BoundCheck {
        region: *region,
        bound: *bound,
        max_ratio,
        c_min: fit.c_min,
        witness: fit.witness,
        powers: fit.powers,
        row_slope: fixed_effects_slope(&by_column),
        diagonal_slope: fixed_effects_slope(&by_diagonal),
        column_bracket_slope: fixed_effects_slope(&by_diagonal_col),
    })
}

/// Worst ratio of `|psi^(11)_k(t)|` to `|t| h c_v e^{-beta|k-k0|} / (<k0>^2 <k-k0>^alpha)`
/// over sources and targets with `|k|, |k0| <= limit`.
pub fn correction_bound_ratio(p: &FourierPotential, grid: &ModeGrid, h: f64, t: f64, limit: usize) -> f64 {
    let class = p.class();
    let l = limit.min(grid.k_max()) as i64;
    let mut worst: f64 = 0.0;
    for k0 in -l..=l {
        let psi = first_order_correction(p, grid, h, k0, t).expect("mode on grid");
        for k in -l..=l {
            let d = k - k0;
            let bound = t.abs() * h * class.c_v * (-class.beta * d.unsigned_abs() as f64).exp()
                / (bracket(k0).powi(2) * bracket(d).powf(class.alpha));
            worst = worst.max(psi.get(k).norm() / bound);
        }
    }
    worst
}
