//! Declarative experiment configuration, read from a single JSON document.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use fractal_degree::analytic::Kernel;
use fractal_degree::counterexample::MIN_LOOP_SAMPLES;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Gen,
    Prefractal,
    Dim,
    Whitney,
    Degree,
    SweepDiverge,
    SweepConverge,
    Stokes,
    Extend,
    /// Light versions of every other command, each in its own subdirectory.
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Prefractal => "prefractal",
            Command::Dim => "dim",
            Command::Whitney => "whitney",
            Command::Degree => "degree",
            Command::SweepDiverge => "sweep-diverge",
            Command::SweepConverge => "sweep-converge",
            Command::Stokes => "stokes",
            Command::Extend => "extend",
            Command::Suite => "suite",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub d: f64,
    pub alpha: f64,
}

/// One-form fed to the Stokes sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FormSpec {
    /// `(x dy - y dx) / 2`, whose exterior derivative is the area element.
    Area,
    /// `M(u1, u2)` with `u1` a truncated Weierstrass series in `x` and `u2 = y`.
    Weierstrass { alpha: f64, kmax: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    Bracket,
    Clip,
}

/// Every knob of a run. Unset options fall back to per-command defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    /// Defaults to d = 1.5 with alpha = 0.9 for `sweep-converge` and 0.7
    /// otherwise.
    pub generator: Option<GeneratorParams>,
    /// `[lo, hi]` inclusive; `[]` (or `lo > hi`) makes the run a no-op.
    pub m_range: Option<Vec<usize>>,
    /// Single level for commands that work on one pre-fractal.
    pub m: Option<usize>,
    /// Defaults to 1 for `sweep-converge` and 2 otherwise.
    pub p: Option<f64>,
    pub alpha_prime: Option<f64>,
    pub alpha_tilde: Option<f64>,
    /// Degree-field cell size is the loop radius divided by this.
    pub h_divisor: f64,
    /// Samples per loop.
    pub samples: usize,
    pub k_max: Option<i32>,
    /// Dyadic exponents `[lo, hi]` of the box-counting scales.
    pub box_scales: Option<[i32; 2]>,
    /// Pre-fractal level used for Whitney counting in `dim`.
    pub whitney_m: Option<usize>,
    pub theta: f64,
    pub kernel: Kernel,
    pub form: FormSpec,
    pub residuals: ResidualMode,
    /// Extension query grid resolution.
    pub grid: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: Command::Suite,
            generator: None,
            m_range: None,
            m: None,
            p: None,
            alpha_prime: None,
            alpha_tilde: None,
            h_divisor: 64.0,
            samples: 64,
            k_max: None,
            box_scales: None,
            whitney_m: None,
            theta: 0.6,
            kernel: Kernel::Tent,
            form: FormSpec::Area,
            residuals: ResidualMode::Bracket,
            grid: 21,
            seed: 0,
            threads: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn for_command(command: Command) -> Self {
        ExperimentConfig {
            command,
            ..Default::default()
        }
    }

    /// Inclusive level range, or `None` when the configured range is empty.
    pub fn levels(&self, default: RangeInclusive<usize>) -> Option<RangeInclusive<usize>> {
        match self.m_range.as_deref() {
            None => Some(default),
            Some([lo, hi]) if lo <= hi => Some(*lo..=*hi),
            Some(_) => None,
        }
    }

    /// A configured range that selects no level.
    pub fn is_empty_range(&self) -> bool {
        matches!(self.m_range.as_deref(), Some(r) if r.is_empty() || (r.len() == 2 && r[0] > r[1]))
    }

    pub fn generator(&self) -> GeneratorParams {
        self.generator.unwrap_or(match self.command {
            Command::SweepConverge => GeneratorParams { d: 1.5, alpha: 0.9 },
            _ => GeneratorParams { d: 1.5, alpha: 0.7 },
        })
    }

    pub fn p(&self) -> f64 {
        self.p.unwrap_or(match self.command {
            Command::SweepConverge => 1.0,
            _ => 2.0,
        })
    }

    pub fn level(&self, default: usize) -> usize {
        self.m.unwrap_or(default)
    }

    pub fn k_max_or(&self, default: i32) -> i32 {
        self.k_max.unwrap_or(default)
    }

    /// Reject values outside the preconditions of the library calls, naming
    /// the offending field.
    pub fn validate(&self) -> CliResult<()> {
        let g = self.generator();
        if !(g.d > 1.0 && g.d < 2.0) {
            return Err(CliError::validation(format!("generator.d = {} must lie in (1, 2)", g.d)));
        }
        if !(g.alpha > 0.0 && g.alpha < 1.0) {
            return Err(CliError::validation(format!("generator.alpha = {} must lie in (0, 1)", g.alpha)));
        }
        if let Some(r) = &self.m_range {
            if !(r.is_empty() || r.len() == 2) {
                return Err(CliError::validation("m_range must be [] or [lo, hi]"));
            }
        }
        if !(self.p() >= 1.0 && self.p().is_finite()) {
            return Err(CliError::validation(format!("p = {} must be a finite value >= 1", self.p())));
        }
        for (name, v) in [("alpha_prime", self.alpha_prime), ("alpha_tilde", self.alpha_tilde)] {
            if let Some(v) = v {
                if !(v > 0.0 && v < 1.0) {
                    return Err(CliError::validation(format!("{name} = {v} must lie in (0, 1)")));
                }
            }
        }
        if !(self.h_divisor > 0.0 && self.h_divisor.is_finite()) {
            return Err(CliError::validation("h_divisor must be positive"));
        }
        if self.samples < MIN_LOOP_SAMPLES {
            return Err(CliError::validation(format!(
                "samples = {} is below the minimum of {MIN_LOOP_SAMPLES}",
                self.samples
            )));
        }
        if let Some(k) = self.k_max {
            if !(1..=24).contains(&k) {
                return Err(CliError::validation(format!("k_max = {k} must lie in 1..=24")));
            }
        }
        if let Some([lo, hi]) = self.box_scales {
            if !(0 <= lo && lo + 3 <= hi && hi <= 20) {
                return Err(CliError::validation("box_scales needs 0 <= lo, lo + 3 <= hi <= 20"));
            }
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(CliError::validation(format!("theta = {} must lie in (0, 1]", self.theta)));
        }
        if let FormSpec::Weierstrass { alpha, kmax } = self.form {
            if !(alpha > 0.0 && alpha <= 1.0) || kmax > 20 {
                return Err(CliError::validation("form.alpha must lie in (0, 1] and form.kmax <= 20"));
            }
        }
        if !(2..=400).contains(&self.grid) {
            return Err(CliError::validation(format!("grid = {} must lie in 2..=400", self.grid)));
        }
        if self.threads == Some(0) {
            return Err(CliError::validation("threads must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_config() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"command": "sweep-diverge", "generator": {"d": 1.2, "alpha": 0.7}, "m_range": [0, 2]}"#)
                .unwrap();
        assert_eq!(c.command, Command::SweepDiverge);
        assert_eq!(c.levels(0..=4), Some(0..=2));
        assert_eq!(c.p(), 2.0);
        c.validate().unwrap();
    }

    #[test]
    fn empty_range_and_round_trip() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"command": "gen", "m_range": []}"#).unwrap();
        assert!(c.is_empty_range());
        assert_eq!(c.levels(0..=4), None);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
        let mut c = ExperimentConfig::default();
        c.generator = Some(GeneratorParams { d: 2.5, alpha: 0.7 });
        assert!(matches!(c.validate(), Err(CliError::Validation(m)) if m.contains("generator.d")));
        let c = ExperimentConfig {
            samples: 4,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
