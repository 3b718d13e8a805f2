//! Settings shared by several subcommands. A value given on the command line
//! or through a `POINTBOX_*` variable wins over the config file, which wins
//! over the built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use pointbox_core::baselines::{FixedConfig, Polarity, ThresholdConfig};
use pointbox_core::dataset::SplitPlan;
use pointbox_core::PicConfig;
use serde::Deserialize;

/// Keys accepted in a `--config` TOML file. Names match the long flags with
/// dashes turned into underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub w0: Option<u32>,
    pub delta: Option<u32>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<u32>,
    pub return_expanded: Option<bool>,
    pub stride: Option<u64>,
    pub plan: Option<String>,
    pub threshold: Option<u8>,
    pub polarity: Option<String>,
    pub fixed_size: Option<u32>,
    pub endpoint: Option<String>,
    pub jobs: Option<usize>,
    pub dump_traces: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct PicArgs {
    /// Initial square patch side in pixels [default: 8]
    #[arg(long, env = "POINTBOX_W0")]
    pub w0: Option<u32>,
    /// Growth of width and height per step in pixels [default: 5]
    #[arg(long, env = "POINTBOX_DELTA")]
    pub delta: Option<u32>,
    /// Halt once the mean changes by less than this [default: 4]
    #[arg(long, env = "POINTBOX_EPSILON")]
    pub epsilon: Option<f64>,
    /// Expansion steps before giving up [default: 64]
    #[arg(long, env = "POINTBOX_MAX_ITERS")]
    pub max_iters: Option<u32>,
    /// On convergence return the expanded box instead of the one before it
    #[arg(long, env = "POINTBOX_RETURN_EXPANDED", num_args = 0..=1, default_missing_value = "true")]
    pub return_expanded: Option<bool>,
}

impl PicArgs {
    pub fn resolve(&self, file: &FileConfig) -> anyhow::Result<PicConfig> {
        let d = PicConfig::default();
        let w0 = self.w0.or(file.w0).unwrap_or(d.w0);
        let config = PicConfig {
            w0,
            h0: w0,
            delta: self.delta.or(file.delta).unwrap_or(d.delta),
            epsilon: self.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
            max_iters: self.max_iters.or(file.max_iters).unwrap_or(d.max_iters),
            return_expanded: self.return_expanded.or(file.return_expanded).unwrap_or(d.return_expanded),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct BaselineArgs {
    /// Binarization threshold for the threshold method [default: 150]
    #[arg(long, env = "POINTBOX_THRESHOLD")]
    pub threshold: Option<u8>,
    /// Object side of the threshold: below or above [default: below]
    #[arg(long, env = "POINTBOX_POLARITY")]
    pub polarity: Option<String>,
    /// Side of the fixed-size box in pixels [default: 50]
    #[arg(long, env = "POINTBOX_FIXED_SIZE")]
    pub fixed_size: Option<u32>,
}

impl BaselineArgs {
    pub fn resolve(&self, file: &FileConfig) -> anyhow::Result<(ThresholdConfig, FixedConfig)> {
        let mut threshold = ThresholdConfig::default();
        if let Some(t) = self.threshold.or(file.threshold) {
            threshold.threshold = t;
        }
        if let Some(p) = self.polarity.as_ref().or(file.polarity.as_ref()) {
            threshold.polarity = p.parse::<Polarity>()?;
        }
        threshold.validate()?;
        let fixed = FixedConfig::square(self.fixed_size.or(file.fixed_size).unwrap_or(FixedConfig::default().width));
        fixed.validate()?;
        Ok((threshold, fixed))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct JobsArgs {
    /// Worker threads [default: all cores]
    #[arg(long, env = "POINTBOX_JOBS")]
    pub jobs: Option<usize>,
}

impl JobsArgs {
    pub fn resolve(&self, file: &FileConfig) -> anyhow::Result<Option<usize>> {
        match self.jobs.or(file.jobs) {
            Some(0) => bail!("--jobs must be at least 1"),
            other => Ok(other),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EndpointArgs {
    /// URL of the box-prompted segmentation service
    #[arg(long, env = "POINTBOX_ENDPOINT", conflicts_with = "mock")]
    pub endpoint: Option<String>,
    /// Use the bundled prompt-echo server instead of a real service
    #[arg(long)]
    pub mock: bool,
}

pub enum Segmentation {
    Off,
    Remote(String),
    Mock,
}

impl EndpointArgs {
    pub fn resolve(&self, file: &FileConfig) -> Segmentation {
        if self.mock {
            return Segmentation::Mock;
        }
        match self.endpoint.clone().or_else(|| file.endpoint.clone()) {
            Some(url) => Segmentation::Remote(url),
            None => Segmentation::Off,
        }
    }
}

pub fn resolve_stride(flag: Option<u64>, file: &FileConfig, default: u64) -> anyhow::Result<u64> {
    match flag.or(file.stride).unwrap_or(default) {
        0 => bail!("--stride must be at least 1"),
        s => Ok(s),
    }
}

pub fn resolve_plan(flag: Option<&str>, file: &FileConfig) -> anyhow::Result<SplitPlan> {
    match flag.or(file.plan.as_deref()).unwrap_or("canonical") {
        "canonical" => Ok(SplitPlan::canonical()),
        path => Ok(SplitPlan::load(PathBuf::from(path))?),
    }
}

pub fn resolve_dump_traces(flag: bool, file: &FileConfig) -> bool {
    flag || file.dump_traces.unwrap_or(false)
}
