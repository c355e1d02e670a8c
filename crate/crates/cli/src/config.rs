//! TOML run configuration. Flags override file values; secrets come only
//! from the environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use apiplan_core::llm::BackendConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub registry: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub seed: Option<u64>,
    pub hops: Option<usize>,
    pub instantiations: Option<usize>,
    pub split_ratio: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
    pub backend: BackendConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        rebase(&mut cfg.registry);
        rebase(&mut cfg.snapshot);
        rebase(&mut cfg.out_dir);
        rebase(&mut cfg.backend.stub_fixtures);
        rebase(&mut cfg.backend.cache_dir);
        Ok(cfg)
    }
}

/// Fails early when an input path is missing.
pub fn existing(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match path {
        Some(p) if p.exists() => Ok(p),
        Some(p) => bail!("{what} {} does not exist", p.display()),
        None => bail!("no {what} given (flag or config file)"),
    }
}
