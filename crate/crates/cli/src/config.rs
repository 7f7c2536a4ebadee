//! Global tool configuration: defaults, overridable by a plain-text
//! `key=value` file and then by command-line flags. The effective values are
//! echoed into every report so runs are self-describing.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PARASPEECH_WORKERS";

#[derive(Debug, Clone)]
pub struct ToolConfig {
    pub sample_rate: u32,
    pub frame_period: f64,
    /// 0 means "all available cores".
    pub workers: usize,
    pub seed: u64,
}

impl Default for ToolConfig {
    fn default() -> Self {
        let workers = std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        Self {
            sample_rate: 16_000,
            frame_period: paraspeech_core::feat::DEFAULT_FRAME_PERIOD,
            workers,
            seed: 0,
        }
    }
}

impl ToolConfig {
    /// Applies a `key=value` file on top of the defaults. Blank lines and
    /// `#` comments are skipped; unknown keys are errors so typos surface.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value", path.display(), lineno + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("{}:{}: bad value for {key}", path.display(), lineno + 1);
            match key {
                "sample_rate" => cfg.sample_rate = value.parse().with_context(ctx)?,
                "frame_period" => cfg.frame_period = value.parse().with_context(ctx)?,
                "workers" => cfg.workers = value.parse().with_context(ctx)?,
                "seed" => cfg.seed = value.parse().with_context(ctx)?,
                _ => bail!("{}:{}: unknown config key '{key}'", path.display(), lineno + 1),
            }
        }
        Ok(cfg)
    }

    /// Report lines echoing the effective configuration.
    pub fn report_lines(&self) -> Vec<(String, String)> {
        vec![
            ("config_sample_rate".into(), self.sample_rate.to_string()),
            ("config_frame_period".into(), format!("{}", self.frame_period)),
            ("config_workers".into(), self.workers.to_string()),
            ("config_seed".into(), self.seed.to_string()),
        ]
    }
}
