use std::path::{Path, PathBuf};

use floquet_core::propagator::{phase_resonance, IntegratorConfig};
use floquet_core::{Error, FourierPotential, ModeGrid, PotentialSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Phases closer than this count as a resonance worth warning about.
pub const RESONANCE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub h: f64,
    pub potential: PotentialSpec,
    #[serde(rename = "K")]
    pub k_max: usize,
    #[serde(rename = "N")]
    pub n_mid: usize,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Edge width excluded from the interior checks; defaults to `K/2`.
    #[serde(default)]
    pub margin: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

/// A configuration that passed validation, with its derived objects.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: RunConfig,
    pub potential: FourierPotential,
    /// Time average of the `k = 0` mode removed by the gauge transform.
    pub gauge_v00: f64,
    pub grid: ModeGrid,
    pub dt: f64,
    pub margin: usize,
    pub resonance: Option<(i64, i64)>,
}

impl Prepared {
    /// Largest `|j|, |k|` entering interior checks.
    pub fn interior(&self) -> usize {
        self.grid.k_max() - self.margin
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn with_cutoff(&self, k_max: usize) -> Self {
        Self { k_max, ..self.clone() }
    }

    pub fn prepare(&self) -> Result<Prepared, CliError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(CliError::Config(format!("h must be positive and finite, got {}", self.h)));
        }
        if self.n_mid == 0 || 3 * self.n_mid > self.k_max {
            return Err(CliError::Config(format!("need 1 <= N <= K/3, got N = {} and K = {}", self.n_mid, self.k_max)));
        }
        let grid = ModeGrid::new(self.k_max, self.n_mid).map_err(config_error)?;
        let margin = self.margin.unwrap_or(self.k_max / 2);
        if margin >= self.k_max {
            return Err(CliError::Config(format!("margin {margin} must be below K = {}", self.k_max)));
        }
        let dt = self.integrator.resolve_dt(self.h, self.k_max).map_err(config_error)?;
        let raw = FourierPotential::from_spec(&self.potential).map_err(config_error)?;
        raw.verify_class().map_err(config_error)?;
        let (potential, phase) = raw.gauge_normalize();
        Ok(Prepared {
            config: self.clone(),
            potential,
            gauge_v00: phase.v00,
            grid,
            dt,
            margin,
            resonance: phase_resonance(self.h, self.k_max, RESONANCE_TOLERANCE),
        })
    }
}

fn config_error(e: Error) -> CliError {
    CliError::Config(e.to_string())
}
