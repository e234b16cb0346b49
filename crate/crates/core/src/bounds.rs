//! Decay-bound templates, constant fitting, and exhaustive scans of the
//! elementary lattice inequalities used by the decay estimates.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::bracket;

/// Entries below this magnitude are treated as numerical zeros in regressions.
pub const REGRESSION_FLOOR: f64 = 1e-14;

/// `c e^{-b|j-k|} <j>^{-p} <k>^{-q} <j-k>^{-r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub c: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl DecayBound {
    pub fn new(c: f64, b: f64, p: f64, q: f64, r: f64) -> Self {
        Self { c, b, p, q, r }
    }

    /// `c e^{-beta|j-k|} / (<j><k><j-k>^{alpha-1})`.
    pub fn mixed(c: f64, alpha: f64, beta: f64) -> Self {
        Self::new(c, beta, 1.0, 1.0, alpha - 1.0)
    }

    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }

    /// Template value with `c = 1`.
    pub fn shape(&self, j: i64, k: i64) -> f64 {
        let d = j - k;
        (-self.b * d.unsigned_abs() as f64).exp()
            / (bracket(j).powf(self.p) * bracket(k).powf(self.q) * bracket(d).powf(self.r))
    }

    pub fn evaluate(&self, j: i64, k: i64) -> f64 {
        self.c * self.shape(j, k)
    }
}

/// Box `j_min <= |j| <= j_max`, `k_min <= |k| <= k_max` of mode pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub j_min: usize,
    pub j_max: usize,
    pub k_min: usize,
    pub k_max: usize,
}

impl Region {
    pub fn square(limit: usize) -> Self {
        Self { j_min: 0, j_max: limit, k_min: 0, k_max: limit }
    }

    pub fn rect(j_max: usize, k_max: usize) -> Self {
        Self { j_min: 0, j_max, k_min: 0, k_max }
    }

    pub fn contains(&self, j: i64, k: i64) -> bool {
        let (ja, ka) = (j.unsigned_abs() as usize, k.unsigned_abs() as usize);
        (self.j_min..=self.j_max).contains(&ja) && (self.k_min..=self.k_max).contains(&ka)
    }

    pub fn is_empty(&self) -> bool {
        self.j_min > self.j_max || self.k_min > self.k_max
    }

    /// Mode pairs in column-major order.
    pub fn pairs(&self) -> Vec<(i64, i64)> {
        let signed = |lo: usize, hi: usize| -> Vec<i64> {
            if lo > hi {
                return Vec::new();
            }
            let hi = hi as i64;
            let lo = lo as i64;
            (-hi..=hi).filter(|x| x.abs() >= lo).collect()
        };
        let rows = signed(self.j_min, self.j_max);
        signed(self.k_min, self.k_max).into_iter().flat_map(|k| rows.iter().map(move |&j| (j, k))).collect()
    }
}

/// Minimal constant making `|entry| <= c * shape` hold everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub c_min: f64,
    pub witness: Option<(i64, i64)>,
    pub count: usize,
}

/// `max |e_{jk}| / weight(j,k)` with its witness.
pub fn min_constant(
    entries: impl IntoIterator<Item = (i64, i64, f64)>,
    shape: impl Fn(i64, i64) -> f64,
) -> Result<ConstantFit> {
    let mut fit = ConstantFit { c_min: 0.0, witness: None, count: 0 };
    for (j, k, magnitude) in entries {
        fit.count += 1;
        let c = magnitude / shape(j, k);
        if c > fit.c_min || fit.witness.is_none() {
            fit.c_min = fit.c_min.max(c);
            fit.witness = Some((j, k));
        }
    }
    if fit.count == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(fit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub c_min: f64,
    pub witness: Option<(i64, i64)>,
    pub count: usize,
    /// Entries above [`REGRESSION_FLOOR`] used in the regression.
    pub regressed: usize,
    /// Least-squares powers `(p, q, r)` of `log|e| + b|j-k| = log c - p log<j> - q log<k> - r log<j-k>`.
    pub powers: Option<[f64; 3]>,
}

/// Fits the template's free constant and its powers to `(j, k, |entry|)` data.
pub fn fit_bound(entries: impl IntoIterator<Item = (i64, i64, f64)>, template: &DecayBound) -> Result<BoundFit> {
    let entries: Vec<(i64, i64, f64)> = entries.into_iter().collect();
    let constant = min_constant(entries.iter().copied(), |j, k| template.shape(j, k))?;

    let mut normal = Matrix4::<f64>::zeros();
    let mut rhs = Vector4::<f64>::zeros();
    let mut regressed = 0;
    for &(j, k, magnitude) in &entries {
        if magnitude < REGRESSION_FLOOR {
            continue;
        }
        regressed += 1;
        let x = Vector4::new(1.0, bracket(j).ln(), bracket(k).ln(), bracket(j - k).ln());
        let y = magnitude.ln() + template.b * (j - k).unsigned_abs() as f64;
        normal += x * x.transpose();
        rhs += x * y;
    }
    let powers = if regressed >= 4 {
        normal.lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite())).map(|s| [-s[1], -s[2], -s[3]])
    } else {
        None
    };
    Ok(BoundFit { c_min: constant.c_min, witness: constant.witness, count: constant.count, regressed, powers })
}

/// Common slope of `y` on `x` with a separate intercept per group.
pub fn fixed_effects_slope<G: Ord>(groups: &BTreeMap<G, Vec<(f64, f64)>>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for points in groups.values() {
        if points.len() < 2 {
            continue;
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        for &(x, y) in points {
            num += (x - mx) * (y - my);
            den += (x - mx) * (x - mx);
        }
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub range: usize,
    /// Largest `LHS / RHS` seen.
    pub worst_ratio: f64,
    pub witness: Vec<i64>,
    /// Smallest constant for which the inequality holds on the scanned range.
    pub empirical_constant: f64,
    pub passed: bool,
}

fn require_range(range: usize) -> Result<()> {
    if range < 2 {
        return Err(Error::InvalidArgument(format!("scan range must be >= 2, got {range}")));
    }
    Ok(())
}

/// `1/|k^2 - l^2| <= 3/(<k> + <l>)` for `|k|, |l| <= range`, `k != +-l`.
pub fn check_ineq1(range: usize) -> Result<LemmaReport> {
    require_range(range)?;
    let r = range as i64;
    let mut worst = (0.0f64, vec![]);
    let mut passed = true;
    for k in -r..=r {
        for l in -r..=r {
            if k == l || k == -l {
                continue;
            }
            let gap = (k * k - l * l).abs();
            let sum = k.abs() + l.abs() + 2;
            passed &= sum <= 3 * gap;
            let ratio = sum as f64 / (3.0 * gap as f64);
            if ratio > worst.0 {
                worst = (ratio, vec![k, l]);
            }
        }
    }
    Ok(LemmaReport {
        lemma: "ineq1".into(),
        range,
        worst_ratio: worst.0,
        witness: worst.1,
        empirical_constant: 3.0 * worst.0,
        passed,
    })
}

/// `1/(|k0^2 - j^2| |k^2 - j^2|) <= 12/<k0>^2` for `j != +-k0`, `j != +-k`.
pub fn check_ineq2(range: usize) -> Result<LemmaReport> {
    require_range(range)?;
    let r = range as i64;
    let rows: Vec<(f64, Vec<i64>, bool)> = (-r..=r)
        .into_par_iter()
        .map(|k0| {
            let mut worst = (0.0f64, vec![]);
            let mut passed = true;
            let b0 = (k0.abs() + 1) * (k0.abs() + 1);
            for k in -r..=r {
                for j in -r..=r {
                    if j == k0 || j == -k0 || j == k || j == -k {
                        continue;
                    }
                    let denom = (k0 * k0 - j * j).abs() * (k * k - j * j).abs();
                    passed &= b0 <= 12 * denom;
                    let ratio = b0 as f64 / (12.0 * denom as f64);
                    if ratio > worst.0 {
                        worst = (ratio, vec![k0, k, j]);
                    }
                }
            }
            (worst.0, worst.1, passed)
        })
        .collect();
    let mut worst = (0.0f64, vec![]);
    let mut passed = true;
    for (ratio, witness, ok) in rows {
        passed &= ok;
        if ratio > worst.0 {
            worst = (ratio, witness);
        }
    }
    Ok(LemmaReport {
        lemma: "ineq2".into(),
        range,
        worst_ratio: worst.0,
        witness: worst.1,
        empirical_constant: 12.0 * worst.0,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnuReport {
    pub nu: f64,
    pub beta: f64,
    pub range: usize,
    /// Empirical `c_nu` over `|s|, |m| <= range`.
    pub value: f64,
    pub witness: (i64, i64),
    /// Value with the range doubled.
    pub doubled_value: f64,
    pub relative_drift: f64,
    pub stable: bool,
    /// Upper estimate of the neglected `|k| > 4 range` tail, in units of `c_nu`.
    pub tail_estimate: f64,
}

/// Max over `|s|, |m| <= range` of the truncated lattice sum
/// `sum_{|k| <= 4 range} e^{-beta(|s-k|+|k-m|)} <s-k>^{-nu} <k-m>^{-nu}`
/// normalized by `e^{-beta|s-m|} <s-m>^{-nu}`.
pub fn lattice_sum_constant(nu: f64, beta: f64, range: usize) -> (f64, (i64, i64)) {
    let r = range as i64;
    let window = 4 * r;
    let factor = |d: i64| (-beta * d.unsigned_abs() as f64).exp() / bracket(d).powf(nu);
    let rows: Vec<(f64, (i64, i64))> = (-r..=r)
        .into_par_iter()
        .map(|s| {
            let left: Vec<f64> = (-window..=window).map(|k| factor(s - k)).collect();
            let mut best = (0.0f64, (s, -r));
            for m in -r..=r {
                let sum: f64 = (-window..=window).zip(&left).map(|(k, a)| a * factor(k - m)).sum();
                let value = sum / factor(s - m);
                if value > best.0 {
                    best = (value, (s, m));
                }
            }
            best
        })
        .collect();
    rows.into_iter().fold((0.0, (0, 0)), |acc, row| if row.0 > acc.0 { row } else { acc })
}

/// Empirical constant of the convolution estimate for `<.>^{-nu}` weights.
pub fn empirical_cnu(nu: f64, beta: f64, range: usize) -> Result<CnuReport> {
    let report = cnu_report(nu, beta, range)?;
    if !report.stable {
        return Err(Error::DivergentTail { drift: report.relative_drift });
    }
    Ok(report)
}

/// Same scan as [`empirical_cnu`] without turning instability into an error.
pub fn cnu_report(nu: f64, beta: f64, range: usize) -> Result<CnuReport> {
    if !(nu > 1.0) {
        return Err(Error::InvalidArgument(format!("nu must exceed 1, got {nu}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    if range < 1 {
        return Err(Error::InvalidArgument("range must be >= 1".into()));
    }
    let (value, witness) = lattice_sum_constant(nu, beta, range);
    let (doubled_value, _) = lattice_sum_constant(nu, beta, 2 * range);
    let relative_drift = (doubled_value - value) / value;
    // |s - k|, |k - m| >= 3R + 1 beyond the window; sum both sides as an integral.
    let r = range as f64;
    let tail = 2.0 * (3.0 * r).powf(1.0 - 2.0 * nu) / (2.0 * nu - 1.0) * (2.0 * r + 1.0).powf(nu);
    Ok(CnuReport {
        nu,
        beta,
        range,
        value,
        witness,
        doubled_value,
        relative_drift,
        stable: relative_drift < 0.01,
        tail_estimate: tail / value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ineq1_examples() {
        // (2,1): (3+2)/(3*3) = 5/9; (1,0): 3/3 = 1.
        let ratio = |k: i64, l: i64| (k.abs() + l.abs() + 2) as f64 / (3.0 * (k * k - l * l).abs() as f64);
        assert!((ratio(2, 1) - 5.0 / 9.0).abs() < 1e-15);
        assert_eq!(ratio(1, 0), 1.0);
        let r = check_ineq1(8).unwrap();
        assert!(r.passed);
        assert_eq!(r.worst_ratio, 1.0);
    }

    #[test]
    fn ineq2_examples() {
        let ratio = |k0: i64, k: i64, j: i64| {
            ((k0.abs() + 1) * (k0.abs() + 1)) as f64 / (12.0 * ((k0 * k0 - j * j).abs() * (k * k - j * j).abs()) as f64)
        };
        assert!((ratio(2, 0, 1) - 0.25).abs() < 1e-15);
        assert!((ratio(1, 3, 0) - 1.0 / 27.0).abs() < 1e-15);
        let r = check_ineq2(6).unwrap();
        assert!(r.passed && r.worst_ratio <= 1.0);
    }

    #[test]
    fn scans_reject_small_range() {
        assert!(check_ineq1(1).is_err());
        assert!(check_ineq2(1).is_err());
    }

    #[test]
    fn lemma_witness_reproduces() {
        let r = check_ineq2(5).unwrap();
        let (k0, k, j) = (r.witness[0], r.witness[1], r.witness[2]);
        let again = ((k0.abs() + 1) * (k0.abs() + 1)) as f64
            / (12.0 * ((k0 * k0 - j * j).abs() * (k * k - j * j).abs()) as f64);
        assert_eq!(again, r.worst_ratio);
    }

    #[test]
    fn cnu_diagonal_partial_sum() {
        // s = m: the normalized sum is sum_d <d>^{-4} over the window.
        let range = 4usize;
        let w = 4 * range as i64;
        let oracle: f64 = (-w..=w).map(|d| bracket(d).powi(-4)).sum();
        let (value, _) = lattice_sum_constant(2.0, 0.0, range);
        assert!(value >= oracle - 1e-15);
        assert!(value >= 1.0);
    }

    #[test]
    fn cnu_with_decay_is_stable() {
        let r = empirical_cnu(2.0, 0.25, 32).unwrap();
        assert!(r.value.is_finite() && r.stable);
    }

    #[test]
    fn cnu_monotone_in_range() {
        let a = lattice_sum_constant(2.0, 0.0, 4).0;
        let b = lattice_sum_constant(2.0, 0.0, 8).0;
        let c = lattice_sum_constant(2.0, 0.0, 16).0;
        assert!(a <= b && b <= c);
    }

    #[test]
    fn fit_zero_entries() {
        let t = DecayBound::mixed(1.0, 3.0, 0.0);
        let fit = fit_bound(Region::square(3).pairs().into_iter().map(|(j, k)| (j, k, 0.0)), &t).unwrap();
        assert_eq!(fit.c_min, 0.0);
        assert!(fit.powers.is_none());
    }

    #[test]
    fn fit_recovers_synthetic_template() {
        let t = DecayBound::new(2.0, 0.3, 1.5, 0.5, 2.0);
        let data: Vec<_> = Region::square(10).pairs().into_iter().map(|(j, k)| (j, k, t.evaluate(j, k))).collect();
        let fit = fit_bound(data, &t.with_c(1.0)).unwrap();
        assert!((fit.c_min - 2.0).abs() < 1e-12);
        let [p, q, r] = fit.powers.unwrap();
        assert!((p - 1.5).abs() < 1e-6 && (q - 0.5).abs() < 1e-6 && (r - 2.0).abs() < 1e-6);
    }

    #[test]
    fn identity_against_flat_template() {
        let flat = DecayBound::new(1.0, 0.0, 0.0, 0.0, 0.0);
        let data = Region::square(4).pairs().into_iter().map(|(j, k)| (j, k, if j == k { 1.0 } else { 0.0 }));
        assert_eq!(fit_bound(data, &flat).unwrap().c_min, 1.0);
    }

    #[test]
    fn empty_region_errors() {
        let t = DecayBound::mixed(1.0, 3.0, 0.0);
        assert_eq!(fit_bound(Vec::new(), &t), Err(Error::EmptyRegion));
    }

    #[test]
    fn region_pairs() {
        let r = Region { j_min: 2, j_max: 3, k_min: 0, k_max: 1 };
        let pairs = r.pairs();
        assert_eq!(pairs.len(), 4 * 3);
        assert!(pairs.iter().all(|&(j, k)| r.contains(j, k)));
    }

    #[test]
    fn fixed_effects_recovers_common_slope() {
        let mut g = BTreeMap::new();
        g.insert(0, vec![(0.0, 1.0), (1.0, -1.0), (2.0, -3.0)]);
        g.insert(1, vec![(0.0, 5.0), (1.0, 3.0)]);
        assert!((fixed_effects_slope(&g).unwrap() + 2.0).abs() < 1e-14);
    }
}
