use floquet_core::blockdiag::{Admissibility, RegionalConstants, StepBoundReport};
use floquet_core::bounds::{CnuReport, DecayBound, LemmaReport, Region};
use floquet_core::conjugation::PowerDecayReport;
use floquet_core::decomposition::BoundCheck;
use floquet_core::propagator::Method;
use serde::{Deserialize, Serialize};

/// One named pass/fail check with the measured value and its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// `None` when the measured value is not finite.
    pub value: Option<f64>,
    pub limit: f64,
}

impl Verdict {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), pass: value <= limit, value: finite(value), limit }
    }

    /// Passes when the value is finite.
    pub fn finite(name: &str, value: f64) -> Self {
        Self { name: name.into(), pass: value.is_finite(), value: finite(value), limit: f64::MAX }
    }

    /// Passes when the value is absent or `<= limit`.
    pub fn optional_at_most(name: &str, value: Option<f64>, limit: f64) -> Self {
        Self { name: name.into(), pass: value.is_none_or(|v| v <= limit), value: value.and_then(finite), limit }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self { name: name.into(), pass, value: None, limit: 0.0 }
    }
}

pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub h: f64,
    pub k_max: usize,
    pub n_mid: usize,
    pub margin: usize,
    pub interior: usize,
    pub method: Method,
    pub dt: f64,
    pub steps: usize,
    pub gauge_v00: f64,
    pub resonance: Option<(i64, i64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitarityBlock {
    /// `max |M*M - I|` over the interior.
    pub forward: f64,
    pub backward: f64,
    pub tolerance: f64,
}

/// A decay-template fit, flattened for the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub region: Region,
    pub template: DecayBound,
    pub c_min: f64,
    pub witness: Option<(i64, i64)>,
    pub powers: Option<[f64; 3]>,
    pub row_slope: Option<f64>,
    pub diagonal_slope: Option<f64>,
    pub column_bracket_slope: Option<f64>,
}

impl From<&BoundCheck> for BoundSummary {
    fn from(c: &BoundCheck) -> Self {
        Self {
            region: c.region,
            template: c.bound,
            c_min: c.c_min,
            witness: c.witness,
            powers: c.powers,
            row_slope: c.row_slope,
            diagonal_slope: c.diagonal_slope,
            column_bracket_slope: c.column_bracket_slope,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionBlock {
    /// `max |M0 + Md + M1 + M2 - M|`.
    pub reassembly: f64,
    /// `max |M1 - (M0 G - G M0)|`.
    pub commutator_identity: f64,
    /// `max |M2(-2pi) - M2*|` over the interior.
    pub adjoint_symmetry: f64,
    pub m2: BoundSummary,
    /// Worst ratio of the first-order correction to its closed-form bound.
    pub correction_ratio: f64,
    /// Fitted constant of `M - Psi1` against `e^{-beta|k-k0|}/(<k0>^2 <k-k0>^{alpha-1})`.
    pub c_psi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugationBlock {
    pub skew_defect: f64,
    /// `max |e^G e^{-G} - I|`.
    pub inverse_residual: f64,
    /// `|defect(N) - defect(M)|` over the whole grid.
    pub defect_shift: f64,
    pub sms: BoundSummary,
    /// Same template fitted over `|j| <= K`, `|k| <= interior`; sets the envelope constant.
    pub sms_tall_c: f64,
    pub c_e_plus: f64,
    pub c_e_minus: f64,
    pub power_decay: PowerDecayReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockdiagBlock {
    pub envelope_c: f64,
    pub envelope_c_nu: f64,
    pub gram_max_abs: f64,
    pub gram_tail_mismatch: f64,
    pub envelope_ratio: f64,
    pub eps_product_ratio: f64,
    pub orthonormality_defect: f64,
    pub span_residual: f64,
    pub step_bounds: StepBoundReport,
    pub c_w: f64,
    pub admissibility: Admissibility,
    pub diagonalization_residual: f64,
    pub modulus_defect: f64,
    pub clusters: usize,
    pub regions: RegionalConstants,
    pub middle_sup: f64,
    pub defect_shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaBlock {
    pub ineq1: LemmaReport,
    pub ineq2: LemmaReport,
    pub cnu: CnuReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub k_max: usize,
    pub c_m2: f64,
    pub c_sms: f64,
    /// Interior max-entry change of `M` relative to the previous cutoff.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBlock {
    pub points: Vec<ConvergencePoint>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub command: String,
    pub run: Option<RunSummary>,
    pub unitarity: Option<UnitarityBlock>,
    pub decomposition: Option<DecompositionBlock>,
    pub conjugation: Option<ConjugationBlock>,
    pub blockdiag: Option<BlockdiagBlock>,
    pub lemmas: Option<LemmaBlock>,
    pub convergence: Option<ConvergenceBlock>,
    pub warnings: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl DecompositionReport {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            run: None,
            unitarity: None,
            decomposition: None,
            conjugation: None,
            blockdiag: None,
            lemmas: None,
            convergence: None,
            warnings: Vec::new(),
            verdicts: Vec::new(),
            pass: true,
        }
    }

    pub fn push(&mut self, verdict: Verdict) {
        self.pass &= verdict.pass;
        self.verdicts.push(verdict);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
