use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gdo::GdoConfig;
use crate::theory::BoundParams;
use crate::{Error, Result};

/// Environment variable that overrides the default MNIST directory.
pub const DATA_DIR_ENV: &str = "GDO_DATA_DIR";
pub const DEFAULT_MNIST_DIR: &str = "data/mnist";
pub const MNIST_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_LABELS: &str = "train-labels-idx1-ubyte";

/// Domain sequence recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Two moons rotated about the origin. `n` points per domain, of which
    /// `holdout_fraction` of the target is held out for evaluation.
    TwoMoons {
        #[serde(default = "defaults::n_synthetic")]
        n: usize,
        #[serde(default = "defaults::noise")]
        noise: f64,
        #[serde(default = "defaults::moons_shift")]
        total_shift: f64,
        #[serde(default = "defaults::holdout_fraction")]
        holdout_fraction: f64,
    },
    /// Two Gaussian blobs at (±1, 0) rotated about the origin.
    Gaussians {
        #[serde(default = "defaults::n_synthetic")]
        n: usize,
        #[serde(default = "defaults::blob_sd")]
        sd: f64,
        #[serde(default = "defaults::moons_shift")]
        total_shift: f64,
        #[serde(default = "defaults::holdout_fraction")]
        holdout_fraction: f64,
    },
    /// MNIST digits rotated about the image centre; `n` training images per
    /// domain plus `holdout` unseen target images.
    RotatedMnist {
        #[serde(default)]
        dir: Option<PathBuf>,
        #[serde(default = "defaults::n_mnist")]
        n: usize,
        #[serde(default = "defaults::holdout_mnist")]
        holdout: usize,
        #[serde(default = "defaults::rotation_shift")]
        total_shift: f64,
    },
    /// MNIST digits with a constant pixel offset.
    ColorShiftMnist {
        #[serde(default)]
        dir: Option<PathBuf>,
        #[serde(default = "defaults::n_mnist")]
        n: usize,
        #[serde(default = "defaults::holdout_mnist")]
        holdout: usize,
        #[serde(default = "defaults::color_shift")]
        total_shift: f64,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::TwoMoons { .. } => "two_moons",
            DatasetSpec::Gaussians { .. } => "gaussians",
            DatasetSpec::RotatedMnist { .. } => "rotated_mnist",
            DatasetSpec::ColorShiftMnist { .. } => "color_shift_mnist",
        }
    }

    pub fn is_mnist(&self) -> bool {
        matches!(self, DatasetSpec::RotatedMnist { .. } | DatasetSpec::ColorShiftMnist { .. })
    }

    pub fn default_hidden(&self) -> Vec<usize> {
        if self.is_mnist() {
            vec![256, 256]
        } else {
            vec![64, 64]
        }
    }

    /// MNIST directory: explicit `dir`, else `$GDO_DATA_DIR`, else `data/mnist`.
    pub fn mnist_dir(&self) -> Option<PathBuf> {
        match self {
            DatasetSpec::RotatedMnist { dir, .. } | DatasetSpec::ColorShiftMnist { dir, .. } => Some(
                dir.clone()
                    .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_MNIST_DIR)),
            ),
            _ => None,
        }
    }
}

/// Adaptation methods a grid can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gdo,
    Gst,
    SourceOnly,
    TargetSt,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gdo, Method::Gst, Method::SourceOnly, Method::TargetSt];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gdo => "gdo",
            Method::Gst => "gst",
            Method::SourceOnly => "source_only",
            Method::TargetSt => "target_st",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Settings of the `theory` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySpec {
    /// Weight of the squared parameter drift in the Lyapunov value.
    pub lambda_v: f64,
    /// Steps per window when comparing the start and end of a trace.
    pub window: usize,
    pub bound: BoundParams,
    /// Bound curves run over `T = 1..=t_max`.
    pub t_max: usize,
    /// One curve per batch count.
    pub m_values: Vec<usize>,
}

impl Default for TheorySpec {
    fn default() -> Self {
        Self {
            lambda_v: 1.0,
            window: 10,
            bound: BoundParams {
                mu: 1.0,
                sigma2: 1.0,
                gamma0: 0.05,
                epsilon: 0.01,
                m: 10,
                t: 5,
                delta: 0.05,
                err0: 1.0,
                c: 0.1,
            },
            t_max: 50,
            m_values: vec![1, 10, 100],
        }
    }
}

/// A full experiment: one dataset recipe, a grid of sequence lengths and
/// interpolation counts, methods and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub n_given_grid: Vec<usize>,
    pub inter_steps_grid: Vec<usize>,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Hidden layer widths; defaults to 64-64 for 2-D data and 256-256 for
    /// MNIST.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    /// Adaptation hyperparameters. `seed` and `inter_steps` come from the
    /// grid and must be left unset.
    #[serde(default)]
    pub gdo: GdoConfig,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    /// Record wall-clock runtimes in the results CSV. Off by default so
    /// results are byte-reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub theory: TheorySpec,
}

mod defaults {
    use std::path::PathBuf;

    use super::Method;

    pub fn n_synthetic() -> usize {
        2000
    }
    pub fn noise() -> f64 {
        0.1
    }
    pub fn blob_sd() -> f64 {
        0.5
    }
    pub fn moons_shift() -> f64 {
        120.0
    }
    pub fn holdout_fraction() -> f64 {
        0.2
    }
    pub fn n_mnist() -> usize {
        2000
    }
    pub fn holdout_mnist() -> usize {
        1000
    }
    pub fn rotation_shift() -> f64 {
        45.0
    }
    pub fn color_shift() -> f64 {
        1.0
    }
    pub fn methods() -> Vec<Method> {
        Method::ALL.to_vec()
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("results")
    }
}

impl ExperimentConfig {
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| self.dataset.default_hidden())
    }

    /// Hyperparameters of one run.
    pub fn run_config(&self, inter_steps: usize, seed: u64) -> GdoConfig {
        GdoConfig {
            inter_steps,
            seed,
            ..self.gdo.clone()
        }
    }

    /// Checks every invariant that does not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::config(name, "must not be empty"))
            } else {
                Ok(())
            }
        };
        nonempty("n_given_grid", self.n_given_grid.len())?;
        nonempty("inter_steps_grid", self.inter_steps_grid.len())?;
        nonempty("methods", self.methods.len())?;
        nonempty("seeds", self.seeds.len())?;
        if let Some(&bad) = self.n_given_grid.iter().find(|&&n| n < 2) {
            return Err(Error::config("n_given_grid", format!("{bad} < 2: need a source and a target")));
        }
        distinct("n_given_grid", &self.n_given_grid)?;
        distinct("inter_steps_grid", &self.inter_steps_grid)?;
        distinct("methods", &self.methods)?;
        distinct("seeds", &self.seeds)?;
        if let Some(h) = &self.hidden {
            if h.contains(&0) {
                return Err(Error::config("hidden", "layer widths must be >= 1"));
            }
        }
        let defaults = GdoConfig::default();
        if self.gdo.seed != defaults.seed {
            return Err(Error::config("gdo.seed", "set per-run seeds through `seeds`"));
        }
        if self.gdo.inter_steps != defaults.inter_steps {
            return Err(Error::config("gdo.inter_steps", "set through `inter_steps_grid`"));
        }
        self.gdo
            .validate()
            .map_err(|e| Error::config("gdo", strip_prefix(e)))?;
        self.validate_dataset()?;
        let t = &self.theory;
        if t.window == 0 {
            return Err(Error::config("theory.window", "must be >= 1"));
        }
        if !(t.lambda_v >= 0.0 && t.lambda_v.is_finite()) {
            return Err(Error::config("theory.lambda_v", "must be finite and >= 0"));
        }
        if t.t_max == 0 {
            return Err(Error::config("theory.t_max", "must be >= 1"));
        }
        nonempty("theory.m_values", t.m_values.len())?;
        if t.m_values.contains(&0) {
            return Err(Error::config("theory.m_values", "batch counts must be >= 1"));
        }
        t.bound
            .validate()
            .map_err(|e| Error::config("theory.bound", strip_prefix(e)))
    }

    fn validate_dataset(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("dataset.{name}"), format!("must be finite and >= 0, got {v}")))
            }
        };
        match &self.dataset {
            DatasetSpec::TwoMoons {
                n,
                noise: spread,
                total_shift,
                holdout_fraction,
            }
            | DatasetSpec::Gaussians {
                n,
                sd: spread,
                total_shift,
                holdout_fraction,
            } => {
                positive("noise", *spread)?;
                if !total_shift.is_finite() || *total_shift == 0.0 {
                    return Err(Error::config("dataset.total_shift", "must be finite and non-zero"));
                }
                if !(*holdout_fraction > 0.0 && *holdout_fraction < 1.0) {
                    return Err(Error::config("dataset.holdout_fraction", "must lie in (0, 1)"));
                }
                let held = holdout_count(*n, *holdout_fraction);
                if held == 0 || held >= *n {
                    return Err(Error::config("dataset.n", format!("{n} points leave no room for a holdout")));
                }
            }
            DatasetSpec::RotatedMnist {
                n, holdout, total_shift, ..
            }
            | DatasetSpec::ColorShiftMnist {
                n, holdout, total_shift, ..
            } => {
                if *n == 0 || *holdout == 0 {
                    return Err(Error::config("dataset.n", "training and holdout sizes must be >= 1"));
                }
                if !total_shift.is_finite() || *total_shift == 0.0 {
                    return Err(Error::config("dataset.total_shift", "must be finite and non-zero"));
                }
            }
        }
        Ok(())
    }

    /// Checks that referenced data files exist.
    pub fn check_data_files(&self) -> Result<()> {
        if let Some(dir) = self.dataset.mnist_dir() {
            for name in [MNIST_IMAGES, MNIST_LABELS] {
                let path = dir.join(name);
                if !path.is_file() {
                    return Err(Error::config(
                        "dataset.dir",
                        format!(
                            "missing {} (run `gdo data fetch-mnist --dir {}` or set {DATA_DIR_ENV})",
                            path.display(),
                            dir.display()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Number of target points held out for evaluation.
pub(crate) fn holdout_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

fn distinct<T: Ord + std::fmt::Debug>(name: &str, values: &[T]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for v in values {
        if !seen.insert(v) {
            return Err(Error::config(name, format!("duplicate entry {v:?}")));
        }
    }
    Ok(())
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Argument(msg) => msg,
        other => other.to_string(),
    }
}

/// Strict parse of a JSON config held in memory. Unknown keys and type
/// mismatches are reported with their path; defaults are filled in.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
    })?;
    cfg.hidden = Some(cfg.hidden_sizes());
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file, including the existence of
/// any data files it references.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ConfigNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let cfg = parse_config_str(&text)?;
    cfg.check_data_files()?;
    Ok(cfg)
}

/// Canonical JSON form of a config, with every default spelled out.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serialises")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"kind": "two_moons"},
        "n_given_grid": [3],
        "inter_steps_grid": [0],
        "seeds": [0]
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(
            cfg.dataset,
            DatasetSpec::TwoMoons {
                n: 2000,
                noise: 0.1,
                total_shift: 120.0,
                holdout_fraction: 0.2
            }
        );
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        assert_eq!(cfg.hidden, Some(vec![64, 64]));
        assert_eq!(cfg.gdo, GdoConfig::default());
        assert!(!cfg.timing);
    }

    #[test]
    fn misspelled_key_is_named() {
        let text = MINIMAL.replace("\"seeds\"", "\"gdo\": {\"alpah\": 0.3}, \"seeds\"");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.to_string().contains("alpah"), "{err}");
        assert_eq!(err.category(), "config-invalid");
    }

    #[test]
    fn type_mismatch_reports_path() {
        let text = MINIMAL.replace("[3]", "[\"three\"]");
        match parse_config_str(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "n_given_grid[0]"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_dataset_field_is_rejected() {
        let text = MINIMAL.replace("\"kind\": \"two_moons\"", "\"kind\": \"two_moons\", \"nosie\": 0.2");
        assert!(parse_config_str(&text).unwrap_err().to_string().contains("nosie"));
    }

    #[test]
    fn invariants_are_enforced() {
        for (from, to) in [
            ("\"seeds\": [0]", "\"seeds\": [1, 1]"),
            ("\"seeds\": [0]", "\"seeds\": []"),
            ("[3]", "[1]"),
            ("\"inter_steps_grid\": [0]", "\"inter_steps_grid\": []"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(parse_config_str(&text).unwrap_err().is_config(), "{to}");
        }
    }

    #[test]
    fn emit_parse_round_trip() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(parse_config_str(&emit_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn missing_file_is_config_not_found() {
        let err = parse_config("/definitely/not/here.json").unwrap_err();
        assert_eq!(err.category(), "config-not-found");
    }

    #[test]
    fn missing_mnist_files_fail_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"{{"dataset": {{"kind": "rotated_mnist", "dir": {:?}}},
                "n_given_grid": [2], "inter_steps_grid": [0], "seeds": [0]}}"#,
            dir.path()
        );
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, text).unwrap();
        let err = parse_config(&path).unwrap_err();
        assert!(err.is_config() && err.to_string().contains(MNIST_IMAGES), "{err}");
    }
}
