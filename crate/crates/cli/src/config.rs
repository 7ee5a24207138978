use std::path::Path;

use poks::codec::{CenterSpec, ObbParamMode, DEFAULT_DOWNSCALE};
use poks::eval::EvalConfig;
use poks::heatmap::GaussianSpec;
use serde::{Deserialize, Serialize};

/// Contents of the `--config` file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub eval: EvalConfig,
    pub gaussian: GaussianSpec,
    pub downscale_r: u32,
    pub center: CenterSpec,
    pub obb_mode: ObbParamMode,
    pub workers: Option<usize>,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            eval: EvalConfig::default(),
            gaussian: GaussianSpec::default(),
            downscale_r: DEFAULT_DOWNSCALE,
            center: CenterSpec::default(),
            obb_mode: ObbParamMode::default(),
            workers: None,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> poks::Result<Self> {
        let cfg: FileConfig = match path {
            Some(p) => poks::io::read_json(p)?,
            None => FileConfig::default(),
        };
        cfg.eval.validate()?;
        cfg.gaussian.validate()?;
        if cfg.downscale_r == 0 {
            return Err(poks::Error::InvalidConfig(
                "downscale_r must be at least 1".into(),
            ));
        }
        Ok(cfg)
    }
}
