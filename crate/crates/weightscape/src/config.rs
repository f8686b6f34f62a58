//! Run configuration: a TOML document, overridable key by key from the
//! environment and then from command-line flags.
//!
//! Environment overrides use the prefix `WEIGHTSCAPE_`. Top-level keys are
//! named directly (`WEIGHTSCAPE_SEED=3`); keys inside a section join the
//! section and key with a double underscore (`WEIGHTSCAPE_BASIN__N_STEPS=50`).
//! Values are read as TOML literals when they parse as one and as strings
//! otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weightscape_core::optim::{BasinHopConfig, MinimizeConfig};
use weightscape_core::rng::derive_seed;
use weightscape_core::saddle::{BandConfig, ConnectConfig, RefineConfig};
use weightscape_core::Architecture;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::table::{CsvOptions, LabelColumn};

pub const ENV_PREFIX: &str = "WEIGHTSCAPE_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Checkerboard,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DataSource,
    pub samples: usize,
    pub tiles: usize,
    pub noise: f64,
    /// Generator seed; derived from the root seed when absent.
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    /// Label column name, or its 0-based position written as a number.
    pub label: String,
    pub has_header: bool,
    pub standardize: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            source: DataSource::Checkerboard,
            samples: 10_000,
            tiles: 4,
            noise: 0.0,
            seed: None,
            path: None,
            label: "label".into(),
            has_header: true,
            standardize: true,
        }
    }
}

impl DatasetSection {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            label: self.label.parse::<LabelColumn>().expect("infallible"),
            has_header: self.has_header,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: String,
    /// Weight penalty coefficient on |p|^2.
    pub l2: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: "2-5-2".into(),
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeSection {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub history_size: usize,
    pub initial_step: f64,
    /// Newton steps that finish each quench.
    pub newton_steps: usize,
}

impl Default for MinimizeSection {
    fn default() -> Self {
        let d = MinimizeConfig::default();
        Self {
            grad_tol: d.grad_tol,
            max_iters: d.max_iters,
            history_size: d.history_size,
            initial_step: d.initial_step,
            newton_steps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinSection {
    /// Steps per walker.
    pub n_steps: usize,
    pub perturbation_scale: f64,
    pub metropolis_temperature: f64,
    /// Independent walkers, each seeded from the root seed and its index.
    pub walkers: usize,
}

impl Default for BasinSection {
    fn default() -> Self {
        let d = BasinHopConfig::default();
        Self {
            n_steps: d.n_steps,
            perturbation_scale: d.perturbation_scale,
            metropolis_temperature: d.metropolis_temperature,
            walkers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectSection {
    /// Pair attempts; zero means ten per stored minimum.
    pub budget: usize,
    pub max_candidates: usize,
    pub n_images: usize,
    pub spring_constant: f64,
    pub band_grad_tol: f64,
    pub max_band_iters: usize,
    pub ts_grad_tol: f64,
    pub eig_tol: f64,
    pub max_ts_iters: usize,
    pub max_step: f64,
    pub displacement: f64,
}

impl Default for ConnectSection {
    fn default() -> Self {
        let (c, b, r) = (
            ConnectConfig::default(),
            BandConfig::default(),
            RefineConfig::default(),
        );
        Self {
            budget: 0,
            max_candidates: c.max_candidates,
            n_images: b.n_images,
            spring_constant: b.spring_constant,
            band_grad_tol: b.band_grad_tol,
            max_band_iters: b.max_band_iters,
            ts_grad_tol: r.ts_grad_tol,
            eig_tol: r.eig_tol,
            max_ts_iters: r.max_iters,
            max_step: r.max_step,
            displacement: r.displacement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub n_levels: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            n_levels: weightscape_core::landscape::DEFAULT_LEVELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub sigma_threshold: f64,
    /// Smallest group used when a group is picked automatically.
    pub min_group_size: usize,
    pub trials: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            sigma_threshold: weightscape_core::interpret::DEFAULT_SIGMA_THRESHOLD,
            min_group_size: 2,
            trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub minimize: MinimizeSection,
    pub basin: BasinSection,
    pub connect: ConnectSection,
    pub graph: GraphSection,
    pub analysis: AnalysisSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("weightscape-out"),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            minimize: MinimizeSection::default(),
            basin: BasinSection::default(),
            connect: ConnectSection::default(),
            graph: GraphSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

fn env_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `WEIGHTSCAPE_*` variables to a parsed document.
fn apply_env(
    doc: &mut toml::Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<()> {
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) || path.len() > 2 {
            return Err(Error::Config(format!(
                "cannot map environment variable {key} to a config key"
            )));
        }
        let mut table = &mut *doc;
        for section in &path[..path.len() - 1] {
            let entry = table
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: '{section}' is not a section")))?;
        }
        table.insert(path[path.len() - 1].clone(), env_value(&raw));
    }
    Ok(())
}

impl RunConfig {
    /// Parses a TOML document and applies environment overrides from `vars`.
    pub fn parse(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        apply_env(&mut doc, vars)?;
        toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads `path` (or starts from defaults) and applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => String::from_utf8(fsutil::read(p)?)
                .map_err(|_| Error::Config(format!("{} is not UTF-8", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, std::env::vars())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn arch(&self) -> Result<Architecture> {
        Ok(Architecture::parse(&self.model.arch)?)
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, "dataset"))
    }

    pub fn minimize_config(&self) -> MinimizeConfig {
        let m = &self.minimize;
        MinimizeConfig {
            grad_tol: m.grad_tol,
            max_iters: m.max_iters,
            history_size: m.history_size,
            initial_step: m.initial_step,
            newton_steps: m.newton_steps,
        }
    }

    /// Basin-hopping config for walker `index`.
    pub fn basin_config(&self, index: usize) -> BasinHopConfig {
        let b = &self.basin;
        BasinHopConfig {
            n_steps: b.n_steps,
            perturbation_scale: b.perturbation_scale,
            metropolis_temperature: b.metropolis_temperature,
            seed: weightscape_core::rng::derive_indexed(self.seed, "basin_hop", index as u64),
        }
    }

    /// Connection config; a zero budget becomes ten attempts per minimum.
    pub fn connect_config(&self, minima: usize) -> ConnectConfig {
        let c = &self.connect;
        ConnectConfig {
            budget: if c.budget == 0 { 10 * minima } else { c.budget },
            band: BandConfig {
                n_images: c.n_images,
                spring_constant: c.spring_constant,
                band_grad_tol: c.band_grad_tol,
                max_band_iters: c.max_band_iters,
            },
            refine: RefineConfig {
                ts_grad_tol: c.ts_grad_tol,
                eig_tol: c.eig_tol,
                max_iters: c.max_ts_iters,
                max_step: c.max_step,
                displacement: c.displacement,
                hessian_cap: weightscape_core::objective::DEFAULT_HESSIAN_CAP,
                quench: self.minimize_config(),
            },
            max_candidates: c.max_candidates,
        }
    }

    /// Checks ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        self.arch()?;
        self.minimize_config().validate()?;
        self.basin_config(0).validate()?;
        self.connect_config(1).band.validate()?;
        let d = &self.dataset;
        match d.source {
            DataSource::Checkerboard => {
                if d.samples == 0 || d.tiles == 0 {
                    return fail("dataset.samples and dataset.tiles must be positive");
                }
                if !(0.0..1.0).contains(&d.noise) {
                    return fail("dataset.noise must lie in [0, 1)");
                }
            }
            DataSource::Csv => match &d.path {
                None => return fail("dataset.path is required for csv datasets"),
                Some(p) if !p.is_file() => {
                    return Err(Error::Config(format!(
                        "dataset file {} does not exist",
                        p.display()
                    )))
                }
                Some(_) => {}
            },
        }
        if !(self.model.l2 >= 0.0) || !self.model.l2.is_finite() {
            return fail("model.l2 must be finite and non-negative");
        }
        if self.basin.walkers == 0 {
            return fail("basin.walkers must be at least 1");
        }
        if self.connect.max_candidates == 0 {
            return fail("connect.max_candidates must be at least 1");
        }
        let c = &self.connect;
        if !(c.ts_grad_tol > 0.0 && c.eig_tol > 0.0 && c.max_step > 0.0 && c.displacement > 0.0) {
            return fail("connect tolerances, max_step and displacement must be positive");
        }
        if self.graph.n_levels < 2 {
            return fail("graph.n_levels must be at least 2");
        }
        if !(self.analysis.sigma_threshold >= 0.0) {
            return fail("analysis.sigma_threshold must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::parse("", env(&[])).unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.analysis.sigma_threshold, 0.01);
        assert_eq!(cfg.graph.n_levels, 25);
    }

    #[test]
    fn file_values_and_env_overrides() {
        let text = "seed = 5\n[basin]\nn_steps = 12\n[model]\narch = \"2-3-2\"\n";
        let cfg = RunConfig::parse(
            text,
            env(&[
                ("WEIGHTSCAPE_BASIN__N_STEPS", "40"),
                ("WEIGHTSCAPE_SEED", "9"),
                ("WEIGHTSCAPE_OUT_DIR", "runs/x"),
                ("OTHER", "1"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.basin.n_steps, 40);
        assert_eq!(cfg.model.arch, "2-3-2");
        assert_eq!(cfg.out_dir, PathBuf::from("runs/x"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::parse("[basin]\nsteps = 3\n", env(&[])),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::parse("", env(&[("WEIGHTSCAPE_NOPE", "1")])).is_err());
    }

    #[test]
    fn ranges_are_checked() {
        let mut cfg = RunConfig::default();
        cfg.dataset.tiles = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.dataset.source = DataSource::Csv;
        cfg.dataset.path = Some(PathBuf::from("/nonexistent/data.csv"));
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.minimize.grad_tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.dataset.seed = Some(3);
        assert_eq!(RunConfig::parse(&cfg.to_toml(), env(&[])).unwrap(), cfg);
    }
}
