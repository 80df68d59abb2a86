use std::path::{Path, PathBuf};

use curvestyle::features::LossWeights;
use curvestyle::optim::OptimConfig;
use curvestyle::raster::RasterConfig;
use curvestyle::rules::{Granularities, RuleConfig, RuleKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Fully resolved settings for one `transfer` run. Keys mirror the
/// command-line flag names (`p-drop`, `snapshot-every`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub content: Option<PathBuf>,
    pub style: Option<PathBuf>,
    /// `tiny` for the built-in network, otherwise a CNSW file.
    pub weights: String,
    /// Network spec sidecar for a CNSW file; VGG19 when absent.
    pub spec: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub strict: bool,
    pub style_invert: bool,

    pub canvas: usize,
    pub segments: usize,
    pub tau: f64,
    pub eps: f64,

    pub rules: Vec<RuleKind>,
    pub granularity: Granularities,
    pub lambda: f64,

    pub style_weights: Option<Vec<f64>>,
    pub content_weight: f64,
    pub content_tap: Option<String>,
    pub reg: f64,

    pub iters: usize,
    pub lr: f64,
    pub p_drop: f64,
    pub seed: u64,
    pub snapshot_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let raster = RasterConfig::default();
        let rules = RuleConfig::default();
        let loss = LossWeights::default();
        let optim = OptimConfig::default();
        Self {
            content: None,
            style: None,
            weights: "tiny".into(),
            spec: None,
            output: None,
            strict: false,
            style_invert: false,
            canvas: raster.width,
            segments: raster.segments,
            tau: raster.tau,
            eps: raster.eps,
            rules: rules.enabled,
            granularity: rules.granularity,
            lambda: rules.lambda,
            style_weights: loss.style,
            content_weight: loss.content,
            content_tap: loss.content_tap,
            reg: loss.reg,
            iters: optim.iterations,
            lr: optim.lr,
            p_drop: optim.p_drop,
            seed: optim.seed,
            snapshot_every: 50,
        }
    }
}

impl RunConfig {
    /// Reads a TOML or JSON config file, chosen by extension (TOML otherwise).
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::input(path, e))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.content, &mut cfg.style, &mut cfg.spec, &mut cfg.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.weights != "tiny" && Path::new(&cfg.weights).is_relative() {
            cfg.weights = base.join(&cfg.weights).to_string_lossy().into_owned();
        }
        Ok(cfg)
    }

    pub fn raster(&self) -> RasterConfig {
        RasterConfig {
            height: self.canvas,
            width: self.canvas,
            segments: self.segments,
            tau: self.tau,
            eps: self.eps,
        }
    }

    pub fn rule_config(&self) -> RuleConfig {
        RuleConfig {
            enabled: self.rules.clone(),
            granularity: self.granularity,
            lambda: self.lambda,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            style: self.style_weights.clone(),
            content: self.content_weight,
            reg: self.reg,
            content_tap: self.content_tap.clone(),
        }
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            iterations: self.iters,
            lr: self.lr,
            p_drop: self.p_drop,
            seed: self.seed,
            snapshot_stride: self.snapshot_every,
            ..OptimConfig::default()
        }
    }

    pub fn require_paths(&self) -> Result<(&Path, &Path, &Path), CliError> {
        fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
            p.as_deref().ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
        }
        Ok((need(&self.content, "content")?, need(&self.style, "style")?, need(&self.output, "output")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_keys_mirror_flags() {
        let cfg: RunConfig = toml::from_str(
            "iters = 12\np-drop = 0.0\nrules = [\"rigid\", \"cp_translate\"]\nsnapshot-every = 3\n[granularity]\nrigid = \"global\"\n",
        )
        .unwrap();
        assert_eq!(cfg.iters, 12);
        assert_eq!(cfg.p_drop, 0.0);
        assert_eq!(cfg.rules, vec![RuleKind::Rigid, RuleKind::CpTranslate]);
        assert_eq!(cfg.snapshot_every, 3);
        assert_eq!(cfg.granularity.rigid, curvestyle::rules::Granularity::Global);
        assert_eq!(cfg.canvas, 256);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<RunConfig>("iterations = 3").is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig {
            seed: 9,
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
