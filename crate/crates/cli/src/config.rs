//! Plain key-value experiment configuration with CLI overrides.
//!
//! Format: one `key = value` per line, `#` comments. Lists are
//! comma-separated; datasets are `name=path` entries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use caembed_core::cooccur::{OovPolicy, Weighting};
use caembed_core::corpus::TokenizeConfig;
use caembed_core::transform::{TransformKind, TransformSpec};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub tokenize: TokenizeConfig,
    pub min_count: u64,
    pub window: usize,
    pub weighting: Weighting,
    pub oov: OovPolicy,
    pub transforms: Vec<TransformSpec>,
    /// Factorize the WPMI matrix via the margin-weighted (GSVD) route.
    pub gsvd: bool,
    pub k_grid: Vec<usize>,
    pub p_grid: Vec<f64>,
    pub datasets: Vec<(String, PathBuf)>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Also evaluate raw matrix rows (no dimensionality reduction).
    pub matrix_row_eval: bool,
    /// Emit fence and contribution diagnostics per transform.
    pub diagnostics: bool,
    pub top_extreme: usize,
    pub contrib_dims: usize,
}

impl ExperimentConfig {
    /// Parses a config file, then applies `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", lineno + 1))?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }
        for ov in overrides {
            let (key, value) = ov
                .split_once('=')
                .with_context(|| format!("override {ov:?}: expected key=value"))?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_map(&kv)
    }

    fn from_map(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| kv.get(key).map(String::as_str);
        let required = |key: &str| {
            get(key).with_context(|| format!("missing required config key {key:?}"))
        };
        let parse_bool = |key: &str, default: bool| -> Result<bool> {
            match get(key) {
                None => Ok(default),
                Some("true") => Ok(true),
                Some("false") => Ok(false),
                Some(other) => bail!("config key {key}: expected true/false, got {other:?}"),
            }
        };

        let tokenize = TokenizeConfig {
            lowercase: parse_bool("lowercase", true)?,
            strip_punct: parse_bool("strip_punct", true)?,
            strip_digits: parse_bool("strip_digits", true)?,
            segment_lines: parse_bool("segment_lines", false)?,
        };

        let transforms = required("transforms")?
            .split(',')
            .map(|t| parse_transform(t.trim()))
            .collect::<Result<Vec<_>>>()?;

        let k_grid: Vec<usize> = required("k_grid")?
            .split(',')
            .map(|f| f.trim().parse::<usize>().context("bad k in k_grid"))
            .collect::<Result<_>>()?;
        let p_grid: Vec<f64> = required("p_grid")?
            .split(',')
            .map(|f| f.trim().parse::<f64>().context("bad p in p_grid"))
            .collect::<Result<_>>()?;

        let datasets: Vec<(String, PathBuf)> = required("datasets")?
            .split(',')
            .map(|entry| {
                let (name, path) = entry
                    .trim()
                    .split_once('=')
                    .with_context(|| format!("dataset entry {entry:?}: expected name=path"))?;
                Ok((name.trim().to_string(), PathBuf::from(path.trim())))
            })
            .collect::<Result<_>>()?;

        let cfg = Self {
            corpus: PathBuf::from(required("corpus")?),
            tokenize,
            min_count: required("min_count")?.parse().context("bad min_count")?,
            window: required("window")?.parse().context("bad window")?,
            weighting: Weighting::parse(get("weighting").unwrap_or("harmonic"))
                .map_err(anyhow::Error::from)?,
            oov: OovPolicy::parse(get("oov").unwrap_or("delete")).map_err(anyhow::Error::from)?,
            transforms,
            gsvd: parse_bool("gsvd", true)?,
            k_grid,
            p_grid,
            datasets,
            output_dir: PathBuf::from(required("output_dir")?),
            seed: get("seed").unwrap_or("42").parse().context("bad seed")?,
            matrix_row_eval: parse_bool("matrix_row_eval", true)?,
            diagnostics: parse_bool("diagnostics", true)?,
            top_extreme: get("top_extreme").unwrap_or("10").parse().context("bad top_extreme")?,
            contrib_dims: get("contrib_dims").unwrap_or("100").parse().context("bad contrib_dims")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.corpus.exists() {
            bail!("corpus file {} does not exist", self.corpus.display());
        }
        for (name, path) in &self.datasets {
            if !path.exists() {
                bail!("dataset {name} path {} does not exist", path.display());
            }
        }
        if self.transforms.is_empty() {
            bail!("transform list is empty");
        }
        if self.k_grid.is_empty() {
            bail!("k_grid is empty");
        }
        if self.p_grid.is_empty() {
            bail!("p_grid is empty");
        }
        if self.datasets.is_empty() {
            bail!("dataset list is empty");
        }
        if self.window < 1 {
            bail!("window must be >= 1");
        }
        if self.min_count < 1 {
            bail!("min_count must be >= 1");
        }
        Ok(())
    }

    /// Canonical one-line rendering of the settings a stage depends on;
    /// feeds stage cache keys and the manifest.
    pub fn params_string(&self) -> String {
        let mut s = String::new();
        let t = &self.tokenize;
        let _ = write!(
            s,
            "lowercase={} strip_punct={} strip_digits={} segment_lines={} min_count={} \
             window={} weighting={} oov={} gsvd={} seed={}",
            t.lowercase,
            t.strip_punct,
            t.strip_digits,
            t.segment_lines,
            self.min_count,
            self.window,
            self.weighting.name(),
            self.oov.name(),
            self.gsvd,
            self.seed
        );
        s
    }
}

/// Parses `ttest`, `pmi`, `ppmi`, `wpmi`, `stratos`, or `power_ca:<delta>`.
pub fn parse_transform(s: &str) -> Result<TransformSpec> {
    let lower = s.to_lowercase();
    let spec = match lower.as_str() {
        "ttest" => TransformSpec::new(TransformKind::Ttest),
        "pmi" => TransformSpec::new(TransformKind::Pmi),
        "ppmi" => TransformSpec::new(TransformKind::Ppmi),
        "wpmi" => TransformSpec::new(TransformKind::Wpmi),
        "stratos" => TransformSpec::new(TransformKind::Stratos),
        _ => {
            let delta = lower
                .strip_prefix("power_ca:")
                .or_else(|| lower.strip_prefix("power-ca:"))
                .with_context(|| format!("unknown transform {s:?}"))?;
            let delta: f64 = delta.parse().with_context(|| format!("bad delta in {s:?}"))?;
            TransformSpec::power_ca(delta).map_err(anyhow::Error::from)?
        }
    };
    Ok(spec)
}

/// Filesystem-safe token for a transform, e.g. `power_ca_0.25`.
pub fn transform_slug(spec: &TransformSpec) -> String {
    match spec.kind {
        TransformKind::Ttest => "ttest".into(),
        TransformKind::Pmi => "pmi".into(),
        TransformKind::Ppmi => "ppmi".into(),
        TransformKind::Wpmi => "wpmi".into(),
        TransformKind::Stratos => "stratos".into(),
        TransformKind::PowerCa => format!("power_ca_{}", spec.delta.unwrap_or(1.0)),
    }
}
