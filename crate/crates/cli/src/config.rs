//! Flat `key = value` configuration, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use zw3d::feature::{RING_COUNT, RING_WIDTH, TIRI_DECAY, TIRI_STRIDE};
use zw3d::fusion::{DEFAULT_GAMMA, DEFAULT_TARGET_PFP};
use zw3d::{Error, Result};

pub const DEFAULT_DB: &str = "zw3d.db";

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub db_path: PathBuf,
    pub gamma: f64,
    pub target_pfp: f64,
    pub t_2d: Option<f64>,
    pub t_depth: Option<f64>,
    pub t_fusion: Option<f64>,
    /// Calibration CSV written by `calibrate`.
    pub thresholds: Option<PathBuf>,
    pub seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            db_path: PathBuf::from(DEFAULT_DB),
            gamma: DEFAULT_GAMMA,
            target_pfp: DEFAULT_TARGET_PFP,
            t_2d: None,
            t_depth: None,
            t_fusion: None,
            thresholds: None,
            seed: zw3d::attack::CATALOG_SEED,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = CliConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "db" | "db_path" => cfg.db_path = PathBuf::from(value),
                "gamma" => cfg.gamma = parse_num(key, value)?,
                "target_pfp" => cfg.target_pfp = parse_num(key, value)?,
                "t_2d" => cfg.t_2d = Some(parse_num(key, value)?),
                "t_depth" => cfg.t_depth = Some(parse_num(key, value)?),
                "t_fusion" => cfg.t_fusion = Some(parse_num(key, value)?),
                "thresholds" => cfg.thresholds = Some(PathBuf::from(value)),
                "seed" => cfg.seed = parse_num(key, value)?,
                "ring_width" | "rings" | "tiri_stride" | "tiri_decay" => {
                    return Err(Error::Config(format!("{key} is fixed and cannot be configured")))
                }
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Effective settings as `(key, value)` rows, fixed feature constants included.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        vec![
            ("db", self.db_path.display().to_string()),
            ("gamma", self.gamma.to_string()),
            ("target_pfp", self.target_pfp.to_string()),
            ("t_2d", opt(self.t_2d)),
            ("t_depth", opt(self.t_depth)),
            ("t_fusion", opt(self.t_fusion)),
            (
                "thresholds",
                self.thresholds.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("seed", self.seed.to_string()),
            ("ring_width", RING_WIDTH.to_string()),
            ("rings", RING_COUNT.to_string()),
            ("tiri_stride", TIRI_STRIDE.to_string()),
            ("tiri_decay", TIRI_DECAY.to_string()),
        ]
    }
}
