//! Time-periodic potentials `V(x,t) = sum_k v_k(t) e^{ikx}` stored as finite
//! space-time Fourier tables `v_{k,m}`, so that `v_k(t) = sum_m v_{k,m} e^{imt}`.
//!
//! Only `k >= 0` modes are supplied; `v_{-k,-m} = conj(v_{k,m})` is derived,
//! which makes `V` real-valued by construction.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::bracket;

/// Default number of sample points for sup norms over one period.
pub const DEFAULT_NORM_GRID: usize = 1024;

/// Trigonometric polynomial `f(t) = sum_{|m| <= M} c_m e^{imt}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    max_m: usize,
    coeffs: Vec<C64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self { max_m: 0, coeffs: vec![C64::new(0.0, 0.0)] }
    }

    pub fn constant(c: C64) -> Self {
        Self { max_m: 0, coeffs: vec![c] }
    }

    pub fn from_harmonics(harmonics: impl IntoIterator<Item = (i64, C64)>) -> Self {
        let map: BTreeMap<i64, C64> = harmonics.into_iter().fold(BTreeMap::new(), |mut acc, (m, c)| {
            *acc.entry(m).or_insert(C64::new(0.0, 0.0)) += c;
            acc
        });
        let max_m = map.keys().map(|m| m.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![C64::new(0.0, 0.0); 2 * max_m + 1];
        for (m, c) in map {
            coeffs[(m + max_m as i64) as usize] = c;
        }
        Self { max_m, coeffs }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.max_m > 0
            && self.coeffs[0] == C64::new(0.0, 0.0)
            && self.coeffs[self.coeffs.len() - 1] == C64::new(0.0, 0.0)
        {
            self.coeffs.remove(0);
            self.coeffs.pop();
            self.max_m -= 1;
        }
        self
    }

    pub fn max_harmonic(&self) -> usize {
        self.max_m
    }

    pub fn coeff(&self, m: i64) -> C64 {
        if m.unsigned_abs() as usize > self.max_m {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(m + self.max_m as i64) as usize]
        }
    }

    /// `(m, c_m)` pairs, ascending in `m`, including zeros inside the band.
    pub fn harmonics(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        let off = self.max_m as i64;
        self.coeffs.iter().enumerate().map(move |(i, c)| (i as i64 - off, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    pub fn eval(&self, t: f64) -> C64 {
        self.derivative(0, t)
    }

    /// Exact term-by-term derivative `sum_m (im)^order c_m e^{imt}`.
    pub fn derivative(&self, order: u32, t: f64) -> C64 {
        self.harmonics()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(m, c)| {
                let factor = if order == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, m as f64).powu(order) };
                factor * c * C64::from_polar(1.0, m as f64 * t)
            })
            .sum()
    }

    /// Table of `t -> conj(f(t))`: `c'_m = conj(c_{-m})`.
    pub fn conj_reflected(&self) -> Self {
        let coeffs = self.coeffs.iter().rev().map(|c| c.conj()).collect();
        Self { max_m: self.max_m, coeffs }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { max_m: self.max_m, coeffs: self.coeffs.iter().map(|c| c * factor).collect() }.trimmed()
    }

    /// `int_0^t (f(tau) - c_0) dtau` as a trigonometric polynomial.
    pub fn mean_free_antiderivative(&self) -> Self {
        let mut constant = C64::new(0.0, 0.0);
        let mut terms = Vec::new();
        for (m, c) in self.harmonics() {
            if m == 0 || c.norm() == 0.0 {
                continue;
            }
            let a = c / C64::new(0.0, m as f64);
            constant -= a;
            terms.push((m, a));
        }
        terms.push((0, constant));
        Self::from_harmonics(terms)
    }

    /// `max_t |f^{(order)}(t)|` sampled on `points` uniform nodes of `[0, 2pi)`.
    pub fn sup_norm(&self, order: u32, points: usize) -> f64 {
        (0..points).map(|i| self.derivative(order, TAU * i as f64 / points as f64).norm()).fold(0.0, f64::max)
    }

    /// `max_{0 <= s <= gamma} sup_t |f^{(s)}(t)|`.
    pub fn c_gamma_norm(&self, gamma: u32, points: usize) -> f64 {
        (0..=gamma).map(|s| self.sup_norm(s, points)).fold(0.0, f64::max)
    }
}

/// Parameters of the class `C^{alpha,beta,gamma}`:
/// `||v_k||_{C^gamma} <= c_v e^{-beta|k|} / <k>^alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessClass {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: u32,
    pub c_v: f64,
}

impl SmoothnessClass {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidPotential(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidPotential(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.c_v > 0.0 && self.c_v.is_finite()) {
            return Err(Error::InvalidPotential(format!("c_v must be > 0, got {}", self.c_v)));
        }
        Ok(())
    }

    /// `c_v e^{-beta|k|} / <k>^alpha`.
    pub fn envelope(&self, k: i64) -> f64 {
        self.c_v * (-self.beta * k.unsigned_abs() as f64).exp() / bracket(k).powf(self.alpha)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub m: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub k: i64,
    pub harmonics: Vec<HarmonicSpec>,
}

/// Structured-text form of a potential: `k >= 0` records plus class metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: u32,
    pub c_v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierPotential {
    modes: BTreeMap<i64, TrigPoly>,
    class: SmoothnessClass,
}

impl FourierPotential {
    pub fn zero(class: SmoothnessClass) -> Result<Self> {
        class.validate()?;
        Ok(Self { modes: BTreeMap::new(), class })
    }

    /// Builds a real potential from its `k >= 0` modes.
    pub fn new(
        nonnegative_modes: impl IntoIterator<Item = (i64, Vec<(i64, C64)>)>,
        class: SmoothnessClass,
    ) -> Result<Self> {
        class.validate()?;
        let mut modes = BTreeMap::new();
        for (k, harmonics) in nonnegative_modes {
            if k < 0 {
                return Err(Error::InvalidPotential(format!(
                    "mode k = {k} is negative; negative modes are derived from k > 0"
                )));
            }
            if modes.contains_key(&k) {
                return Err(Error::InvalidPotential(format!("duplicate mode k = {k}")));
            }
            let mut seen = std::collections::BTreeSet::new();
            for (m, c) in &harmonics {
                if !seen.insert(*m) {
                    return Err(Error::InvalidPotential(format!("duplicate harmonic m = {m} in mode {k}")));
                }
                if !(c.re.is_finite() && c.im.is_finite()) {
                    return Err(Error::InvalidPotential(format!("non-finite coefficient at ({k}, {m})")));
                }
            }
            let poly = TrigPoly::from_harmonics(harmonics);
            if k == 0 {
                let mirror = poly.conj_reflected();
                let scale = poly.coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
                let defect = (-(poly.max_m as i64)..=poly.max_m as i64)
                    .map(|m| (poly.coeff(m) - mirror.coeff(m)).norm())
                    .fold(0.0, f64::max);
                if defect > 1e-12 * scale {
                    return Err(Error::InvalidPotential("mode k = 0 must satisfy v_{0,-m} = conj(v_{0,m})".into()));
                }
            }
            if poly.is_zero() {
                continue;
            }
            if k > 0 {
                modes.insert(-k, poly.conj_reflected());
            }
            modes.insert(k, poly);
        }
        Ok(Self { modes, class })
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        let class = SmoothnessClass { alpha: spec.alpha, beta: spec.beta, gamma: spec.gamma, c_v: spec.c_v };
        Self::new(
            spec.modes
                .iter()
                .map(|mode| (mode.k, mode.harmonics.iter().map(|h| (h.m, C64::new(h.re, h.im))).collect())),
            class,
        )
    }

    pub fn to_spec(&self) -> PotentialSpec {
        let modes = self
            .modes
            .iter()
            .filter(|(k, _)| **k >= 0)
            .map(|(k, poly)| ModeSpec {
                k: *k,
                harmonics: poly
                    .harmonics()
                    .filter(|(_, c)| c.norm() != 0.0)
                    .map(|(m, c)| HarmonicSpec { m, re: c.re, im: c.im })
                    .collect(),
            })
            .collect();
        PotentialSpec {
            modes,
            alpha: self.class.alpha,
            beta: self.class.beta,
            gamma: self.class.gamma,
            c_v: self.class.c_v,
        }
    }

    pub fn class(&self) -> &SmoothnessClass {
        &self.class
    }

    pub fn with_class(mut self, class: SmoothnessClass) -> Result<Self> {
        class.validate()?;
        self.class = class;
        Ok(self)
    }

    /// Stored modes (both signs), ascending in `k`.
    pub fn modes(&self) -> impl Iterator<Item = (i64, &TrigPoly)> + '_ {
        self.modes.iter().map(|(k, p)| (*k, p))
    }

    pub fn mode(&self, k: i64) -> Option<&TrigPoly> {
        self.modes.get(&k)
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn is_gauge_normalized(&self) -> bool {
        !self.modes.contains_key(&0)
    }

    /// Zeroth time harmonic `v_{k,0} = (1/2pi) int_0^{2pi} v_k`.
    pub fn time_average(&self, k: i64) -> C64 {
        self.modes.get(&k).map_or(C64::new(0.0, 0.0), |p| p.coeff(0))
    }

    pub fn eval_coefficient(&self, k: i64, t: f64) -> C64 {
        self.modes.get(&k).map_or(C64::new(0.0, 0.0), |p| p.eval(t))
    }

    pub fn eval_derivative(&self, k: i64, order: u32, t: f64) -> C64 {
        self.modes.get(&k).map_or(C64::new(0.0, 0.0), |p| p.derivative(order, t))
    }

    /// Potential value `V(x, t)`.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.modes.iter().map(|(k, p)| p.eval(t) * C64::from_polar(1.0, *k as f64 * x)).sum::<C64>().re
    }

    /// Multiplies every coefficient by a real factor; the class metadata is kept.
    pub fn scaled(&self, factor: f64) -> Self {
        let modes = self.modes.iter().map(|(k, p)| (*k, p.scaled(factor))).filter(|(_, p)| !p.is_zero()).collect();
        Self { modes, class: self.class }
    }

    /// Removes the space average `v_0(t)`; see [`GaugePhase`] for what is recorded.
    pub fn gauge_normalize(&self) -> (Self, GaugePhase) {
        let mut modes = self.modes.clone();
        let phase = match modes.remove(&0) {
            Some(v0) => GaugePhase { v00: v0.coeff(0).re, antiderivative: v0.mean_free_antiderivative() },
            None => GaugePhase { v00: 0.0, antiderivative: TrigPoly::zero() },
        };
        (Self { modes, class: self.class }, phase)
    }

    pub fn class_report(&self) -> ClassReport {
        self.class_report_on(DEFAULT_NORM_GRID)
    }

    pub fn class_report_on(&self, grid_points: usize) -> ClassReport {
        let modes: Vec<ModeNorm> = self
            .modes
            .iter()
            .filter(|(k, _)| **k >= 0)
            .map(|(k, p)| {
                let norm = p.c_gamma_norm(self.class.gamma, grid_points);
                let bound = self.class.envelope(*k);
                ModeNorm { k: *k, norm, bound, ratio: norm / bound }
            })
            .collect();
        let minimal_c_v = modes.iter().map(|m| m.ratio * self.class.c_v).fold(0.0, f64::max);
        ClassReport { grid_points, declared_c_v: self.class.c_v, minimal_c_v, modes }
    }

    /// Checks `||v_k||_{C^gamma} <= c_v e^{-beta|k|}/<k>^alpha` for every stored mode.
    pub fn verify_class(&self) -> Result<ClassReport> {
        let report = self.class_report();
        if let Some(worst) = report.modes.iter().filter(|m| m.ratio > 1.0).max_by(|a, b| a.ratio.total_cmp(&b.ratio)) {
            return Err(Error::ClassViolation { k: worst.k, ratio: worst.ratio, minimal_c_v: report.minimal_c_v });
        }
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeNorm {
    pub k: i64,
    pub norm: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub grid_points: usize,
    pub declared_c_v: f64,
    /// Smallest `c_v` for which every mode satisfies the class estimate.
    pub minimal_c_v: f64,
    pub modes: Vec<ModeNorm>,
}

/// What `gauge_normalize` removed: the double average `v_00` and the periodic
/// antiderivative `A(t) = int_0^t (v_0 - v_00)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugePhase {
    pub v00: f64,
    pub antiderivative: TrigPoly,
}

impl GaugePhase {
    /// Factor `exp((v_00 t + A(t)) / (ih))` relating the original and the
    /// normalized fundamental solutions.
    pub fn multiplier(&self, t: f64, h: f64) -> C64 {
        let phase = C64::new(self.v00 * t, 0.0) + self.antiderivative.eval(t);
        (phase / C64::new(0.0, h)).exp()
    }

    /// Scalar factor `e^{v_00 t/(ih)}` alone.
    pub fn scalar_multiplier(&self, t: f64, h: f64) -> C64 {
        C64::from_polar(1.0, -self.v00 * t / h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn class(alpha: f64, c_v: f64) -> SmoothnessClass {
        SmoothnessClass { alpha, beta: 0.0, gamma: 2, c_v }
    }

    /// `V = 2cos(2x)(1 + cos t)`.
    fn p1(c_v: f64) -> FourierPotential {
        let half = C64::new(0.5, 0.0);
        FourierPotential::new([(2, vec![(-1, half), (0, C64::new(1.0, 0.0)), (1, half)])], class(3.0, c_v)).unwrap()
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn coefficient_examples() {
        let p = p1(54.0);
        assert!(close(p.eval_coefficient(2, 0.0), C64::new(2.0, 0.0), 1e-15));
        assert_eq!(p.eval_coefficient(1, 0.7), C64::new(0.0, 0.0));
        assert!(close(p.eval_coefficient(-2, PI / 2.0), C64::new(1.0, 0.0), 1e-15));
    }

    #[test]
    fn derivative_examples() {
        let p = p1(54.0);
        assert!(close(p.eval_derivative(2, 1, 0.0), C64::new(0.0, 0.0), 1e-15));
        assert!(close(p.eval_derivative(2, 1, PI / 2.0), C64::new(-1.0, 0.0), 1e-15));
        assert!(close(p.eval_derivative(2, 2, 0.0), C64::new(-1.0, 0.0), 1e-15));
    }

    #[test]
    fn potential_is_real() {
        let p = p1(54.0);
        let v = p.eval(0.3, 1.1);
        assert!((v - 2.0 * (0.6f64).cos() * (1.0 + (1.1f64).cos())).abs() < 1e-14);
    }

    #[test]
    fn gauge_drops_oscillating_average() {
        let half = C64::new(0.5, 0.0);
        let p = FourierPotential::new([(0, vec![(-1, half), (1, half)])], class(3.0, 1.0)).unwrap();
        let (q, phase) = p.gauge_normalize();
        assert!(q.is_gauge_normalized() && q.is_zero());
        assert_eq!(phase.v00, 0.0);
        for t in [0.0, 0.4, 2.0, 5.5] {
            assert!(close(phase.antiderivative.eval(t), C64::new(f64::sin(t), 0.0), 1e-15));
        }
    }

    #[test]
    fn gauge_constant_average() {
        let p = FourierPotential::new([(0, vec![(0, C64::new(3.0, 0.0))])], class(3.0, 3.0)).unwrap();
        let (_, phase) = p.gauge_normalize();
        assert_eq!(phase.v00, 3.0);
        assert!(phase.antiderivative.is_zero());
    }

    #[test]
    fn gauge_identity_on_normalized_input() {
        let p = p1(54.0);
        let (q, phase) = p.gauge_normalize();
        assert_eq!(q, p);
        assert_eq!(phase.v00, 0.0);
    }

    #[test]
    fn class_examples() {
        let report = p1(54.0).verify_class().unwrap();
        assert_eq!(report.modes.len(), 1);
        assert!((report.modes[0].norm - 2.0).abs() < 1e-12);
        assert!((report.minimal_c_v - 54.0).abs() < 1e-10);

        let zero = FourierPotential::zero(class(3.0, 1e-3)).unwrap();
        let r = zero.verify_class().unwrap();
        assert_eq!(r.minimal_c_v, 0.0);

        match p1(10.0).verify_class() {
            Err(Error::ClassViolation { k, minimal_c_v, .. }) => {
                assert_eq!(k, 2);
                assert!((minimal_c_v - 54.0).abs() < 1e-10);
            }
            other => panic!("expected ClassViolation, got {other:?}"),
        }
    }

    #[test]
    fn construction_rejects_negative_modes_and_complex_average() {
        assert!(FourierPotential::new([(-1, vec![(0, C64::new(1.0, 0.0))])], class(3.0, 1.0)).is_err());
        assert!(FourierPotential::new([(0, vec![(1, C64::new(1.0, 0.0))])], class(3.0, 1.0)).is_err());
        assert!(FourierPotential::new([(0, vec![(0, C64::new(1.0, 0.5))])], class(3.0, 1.0)).is_err());
    }

    #[test]
    fn table_round_trip() {
        let p = p1(54.0);
        assert_eq!(FourierPotential::from_spec(&p.to_spec()).unwrap(), p);
    }
}
