//! Config-file layer. Values here are defaults that command-line flags
//! override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bisift::analytics::{GenLangThresholds, ReportFormat};
use bisift::classify::{ClassifierConfig, Stage2Mode};
use bisift::judge::JudgeConfig;
use bisift::synth::SynthConfig;
use bisift::{FilterConfig, LanguagePair};
use serde::Deserialize;

pub const ENDPOINT_ENV: &str = "BISIFT_JUDGE_ENDPOINT";
pub const API_KEY_ENV: &str = "BISIFT_JUDGE_API_KEY";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pair: Option<String>,
    pub model: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<ReportFormat>,
    pub mode: Option<Stage2Mode>,
    pub filter: FilterConfig,
    pub classifier: ClassifierConfig,
    pub judge: JudgeConfig,
    pub genlang: GenLangThresholds,
    pub synth: SynthConfig,
}

impl FileConfig {
    /// Reads `path`; relative model paths resolve against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let (Some(model), Some(dir)) = (&config.model, path.parent()) {
            if model.is_relative() {
                config.model = Some(dir.join(model));
            }
        }
        Ok(config)
    }

    pub fn pair(&self, flag: Option<&str>) -> Result<LanguagePair> {
        let Some(text) = flag.or(self.pair.as_deref()) else {
            bail!("no language pair; pass --pair (e.g. en-fr) or set `pair` in the config");
        };
        text.parse().map_err(|e| anyhow::anyhow!("--pair {text:?}: {e}"))
    }

    pub fn workers(&self, flag: Option<usize>) -> Result<usize> {
        let n = flag
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if n == 0 {
            bail!("worker count must be at least 1");
        }
        Ok(n)
    }

    pub fn format(&self, flag: Option<ReportFormat>) -> ReportFormat {
        flag.or(self.format).unwrap_or(ReportFormat::Human)
    }
}
