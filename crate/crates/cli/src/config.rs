//! Experiment configuration: a single JSON document, validated as a whole
//! so that every violation is reported at once.

use std::fmt;
use std::path::{Path, PathBuf};

use jforms::cone::SolverOptions;
use jforms::fiber::FiberMetric;
use jforms::fields::band_limited_scalar;
use jforms::jfield::JRecipe;
use jforms::{Grid, MetricField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: [usize; 4],
    #[serde(rename = "L", default = "unit_periods")]
    pub l: [f64; 4],
}

fn unit_periods() -> [f64; 4] {
    [1.0; 4]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricRecipe {
    #[default]
    Flat,
    /// `g = diag(1 + amplitude·φᵢ)` with band-limited `φᵢ` scaled to `max |φᵢ| = 1`.
    Diagonal { amplitude: f64, modes: usize, seed: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JConfig {
    #[default]
    Constant,
    Conjugated { amplitude: f64, modes: usize, seed: u64 },
}

impl JConfig {
    pub fn recipe(&self) -> JRecipe {
        match *self {
            JConfig::Constant => JRecipe::Constant,
            JConfig::Conjugated { amplitude, modes, seed } => JRecipe::Conjugated { amplitude, modes, seed },
        }
    }
}

/// Anti-invariant part handed to `tame`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaRecipe {
    #[default]
    Zero,
    /// Constant combination of the two frame directions, `direction ∈ {0, 1}`.
    Constant { direction: usize, amplitude: f64 },
    BandLimited { amplitude: f64, modes: usize, seed: u64 },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandOptions {
    /// Degree of the random input for `hodge-decompose`.
    pub degree: usize,
    /// Form container used instead of a seeded random input.
    pub input: Option<PathBuf>,
    pub alpha: AlphaRecipe,
    /// Tamed form for `tamed-to-compatible`; built with `tame(alpha)` when absent.
    pub tamed: Option<PathBuf>,
    /// Harmonic-space block size for the eigensolver.
    pub dim_budget: usize,
    /// Cube sizes for dimension-vs-grid tables.
    pub sweep: Vec<usize>,
}

impl Default for CommandOptions {
    fn default() -> Self {
        CommandOptions {
            degree: 2,
            input: None,
            alpha: AlphaRecipe::Zero,
            tamed: None,
            dim_budget: jforms::hodge::DEFAULT_BUDGET,
            sweep: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormFormat {
    Json,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub fiber_dump: bool,
    pub form_format: FormFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("jforms-out"),
            fiber_dump: false,
            form_format: FormFormat::Json,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub metric: MetricRecipe,
    #[serde(default)]
    pub j: JConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub options: CommandOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} problem{}):", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn check_size(errs: &mut Vec<String>, what: &str, n: usize) {
    if n < 3 || n % 2 == 0 {
        errs.push(format!("{what} = {n}: grid sizes must be odd and at least 3 (centered differences need an odd periodic grid)"));
    }
}

fn check_positive(errs: &mut Vec<String>, what: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(format!("{what} = {v}: must be finite and positive"));
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError(vec![format!("cannot read {}: {e}", path.display())]))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| ConfigError(vec!["config is not UTF-8".into()]))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok((cfg, bytes))
    }

    /// Input paths are relative to the configuration file.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.options.input.as_mut() {
            fix(p);
        }
        if let Some(p) = self.options.tamed.as_mut() {
            fix(p);
        }
        if let AlphaRecipe::File { path } = &mut self.options.alpha {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        for (i, &n) in self.grid.n.iter().enumerate() {
            check_size(&mut errs, &format!("grid.n[{i}]"), n);
        }
        for (i, &l) in self.grid.l.iter().enumerate() {
            check_positive(&mut errs, &format!("grid.L[{i}]"), l);
        }
        if let MetricRecipe::Diagonal { amplitude, modes, .. } = self.metric {
            if !(amplitude.is_finite() && (0.0..1.0).contains(&amplitude)) {
                errs.push(format!("metric.amplitude = {amplitude}: must lie in [0, 1) to keep the metric positive"));
            }
            if modes == 0 {
                errs.push("metric.modes must be at least 1".into());
            }
        }
        if let JConfig::Conjugated { amplitude, modes, .. } = self.j {
            if !(amplitude.is_finite() && amplitude >= 0.0) {
                errs.push(format!("j.amplitude = {amplitude}: must be finite and non-negative"));
            }
            if modes == 0 {
                errs.push("j.modes must be at least 1".into());
            }
        }
        let s = &self.solver;
        check_positive(&mut errs, "solver.epsilon", s.epsilon);
        check_positive(&mut errs, "solver.cg_tol", s.cg_tol);
        check_positive(&mut errs, "solver.penalty", s.penalty);
        if s.budget == 0 {
            errs.push("solver.budget must be at least 1".into());
        }
        if !(s.relaxation > 0.0 && s.relaxation < 2.0) {
            errs.push(format!("solver.relaxation = {}: must lie in (0, 2)", s.relaxation));
        }
        let o = &self.options;
        if o.degree > 4 {
            errs.push(format!("options.degree = {}: must be at most 4", o.degree));
        }
        if o.dim_budget == 0 {
            errs.push("options.dim_budget must be at least 1".into());
        }
        for (i, &n) in o.sweep.iter().enumerate() {
            check_size(&mut errs, &format!("options.sweep[{i}]"), n);
        }
        match o.alpha {
            AlphaRecipe::Constant { direction, amplitude } => {
                if direction > 1 {
                    errs.push(format!("options.alpha.direction = {direction}: must be 0 or 1"));
                }
                if !amplitude.is_finite() {
                    errs.push("options.alpha.amplitude must be finite".into());
                }
            }
            AlphaRecipe::BandLimited { amplitude, modes, .. } => {
                if !amplitude.is_finite() {
                    errs.push("options.alpha.amplitude must be finite".into());
                }
                if modes == 0 {
                    errs.push("options.alpha.modes must be at least 1".into());
                }
            }
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errs))
        }
    }

    pub fn grid(&self) -> jforms::Result<Grid> {
        Grid::new(self.grid.n, self.grid.l)
    }

    /// The configured cube `n⁴` with the configured periods.
    pub fn cube(&self, n: usize) -> jforms::Result<Grid> {
        Grid::new([n; 4], self.grid.l)
    }

    pub fn is_default_geometry(&self) -> bool {
        self.metric == MetricRecipe::Flat && self.j == JConfig::Constant
    }
}

pub fn build_metric(grid: &Grid, recipe: &MetricRecipe) -> jforms::Result<MetricField> {
    match *recipe {
        MetricRecipe::Flat => Ok(MetricField::flat(grid)),
        MetricRecipe::Diagonal { amplitude, modes, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phis: Vec<Vec<f64>> = (0..4)
                .map(|_| {
                    let mut phi = band_limited_scalar(grid, modes, 2, &mut rng);
                    let m = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    if m > 0.0 {
                        phi.iter_mut().for_each(|v| *v /= m);
                    }
                    phi
                })
                .collect();
            let points = (0..grid.len())
                .map(|p| FiberMetric::diagonal(std::array::from_fn(|i| 1.0 + amplitude * phis[i][p])))
                .collect::<jforms::Result<Vec<_>>>()?;
            MetricField::from_points(grid, points)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"grid": {"n": [5, 5, 5, 5]}}"#).unwrap();
        assert_eq!(cfg.grid.l, [1.0; 4]);
        assert_eq!(cfg.solver, SolverOptions::default());
        assert!(cfg.is_default_geometry());
    }

    #[test]
    fn violations_are_aggregated() {
        let text = r#"{"grid": {"n": [4, 5, 5, 2], "L": [1, 1, -1, 1]},
                       "solver": {"epsilon": 0, "relaxation": 2.5}}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert_eq!(err.0.len(), 5, "{err}");
        assert!(err.to_string().contains("odd"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"grid": {"n": [3, 3, 3, 3]}, "colour": 1}"#).is_err());
    }

    #[test]
    fn diagonal_metric_stays_positive() {
        let g = Grid::cube(3).unwrap();
        let m = build_metric(&g, &MetricRecipe::Diagonal { amplitude: 0.5, modes: 3, seed: 2 }).unwrap();
        for p in 0..g.len() {
            for i in 0..4 {
                let v = m.at(p).matrix()[(i, i)];
                assert!((0.5 - 1e-12..=1.5 + 1e-12).contains(&v));
            }
        }
    }
}
