//! Experiment configuration (TOML). All quantities are dimensionless model units.

use std::f64::consts::PI;

use hermite_burgers::analysis::Direction;
use hermite_burgers::solver::{InitialGuess, Scheme, SolverConfig};
use hermite_burgers::{GridSpec, HermiteParams, SamplerSpec, SeedSpec, SigmaSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default = "zero_sigma")]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub run: RunSection,
}

fn zero_sigma() -> SigmaSpec {
    SigmaSpec::constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Chaos order.
    pub q: u32,
    /// `[H_0, H_1, ..., H_d]`; the spatial dimension is `len - 1`.
    pub hurst: Vec<f64>,
    /// Viscosity.
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_max: f64,
    pub n_t: usize,
    /// Spatial period (all axes).
    pub length: f64,
    pub n_x: usize,
}

/// Initial profile on the periodic grid `x_j = j L / n_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + amplitude * sin(2π mode x / L)`
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
        #[serde(default)]
        offset: f64,
    },
    Values {
        values: Vec<f64>,
    },
}

fn one() -> u32 {
    1
}

impl InitialSpec {
    pub fn profile(&self, grid: &GridSpec) -> Result<Vec<f64>, CliError> {
        let n = grid.n_x;
        Ok(match self {
            InitialSpec::Zero => vec![0.0; n],
            InitialSpec::Constant { value } => vec![*value; n],
            InitialSpec::Sine { amplitude, mode, offset } => (0..n)
                .map(|j| offset + amplitude * (2.0 * PI * *mode as f64 * j as f64 / n as f64).sin())
                .collect(),
            InitialSpec::Values { values } => {
                if values.len() != n {
                    return Err(CliError::Invalid(format!(
                        "initial profile has {} values, grid has n_x = {n}",
                        values.len()
                    )));
                }
                values.clone()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub picard_tol: f64,
    pub max_iters: usize,
    pub scheme: Scheme,
    pub dealias: bool,
    pub initial_guess: InitialGuess,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::new(GridSpec { t_max: 1.0, n_t: 1, length: 1.0, n_x: 1, d: 1 });
        Self {
            picard_tol: c.picard_tol,
            max_iters: c.max_iters,
            scheme: c.scheme,
            dealias: c.dealias,
            initial_guess: c.initial_guess,
        }
    }
}

/// Which field the Hölder check reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HolderTarget {
    Sheet,
    #[default]
    Solution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Ensemble size for statistical checks.
    pub n_samples: usize,
    /// Scale factors `[λ_0, λ_1, ..., λ_d]`.
    pub lambda: Vec<f64>,
    /// Scaling exponents; the Hurst vector when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<f64>>,
    pub moment_orders: Vec<f64>,
    pub horizons: Vec<f64>,
    pub holder_target: HolderTarget,
    pub direction: Direction,
    pub holder_p: f64,
    pub lags: Vec<usize>,
    /// Two-sided tolerance for sheet Hölder fits against the Hurst index.
    pub holder_tolerance: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            lambda: vec![4.0, 1.0],
            exponents: None,
            moment_orders: vec![2.0, 4.0],
            horizons: vec![0.25, 0.5, 1.0],
            holder_target: HolderTarget::Solution,
            direction: Direction::Time,
            holder_p: 2.0,
            lags: vec![1, 2, 3, 4],
            holder_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub master_seed: u64,
    pub stream_index: u64,
    /// Number of fields written by `sample` and `solve`.
    pub n_samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { master_seed: 0, stream_index: 0, n_samples: 1 }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> HermiteParams {
        HermiteParams::new(self.model.q, self.model.hurst.clone(), self.model.nu)
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        let g = self.grid.as_ref().ok_or_else(|| CliError::Parse("config has no [grid] section".into()))?;
        let d = self.model.hurst.len().saturating_sub(1);
        Ok(GridSpec::new(g.t_max, g.n_t, g.length, g.n_x, d)?)
    }

    pub fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.run.master_seed, self.run.stream_index)
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        Ok(SolverConfig {
            picard_tol: s.picard_tol,
            max_iters: s.max_iters,
            scheme: s.scheme,
            dealias: s.dealias,
            initial_guess: s.initial_guess,
            domain: self.grid()?,
        })
    }
}
