//! INI configuration: per-dataset fitting weights, sensor definitions, the
//! occupancy grid and optimizer settings.
//!
//! ```ini
//! [3dpw]
//! rho = 100
//! lambda_theta = 2.2
//! lambda_a = 11.0
//! lambda_beta = 5.0
//! lambda_3d = 800
//! lambda_occ = 35
//! w = 0.2
//! j_conf = 0.6
//!
//! [sensor.my-lidar]
//! vertical_channels = 64
//! horizontal_channels = 1024
//! ; remaining keys default to the Ouster noise model
//!
//! [grid]
//! min = 0.4, -4.8, -1.0
//! max = 10.0, 4.8, 3.8
//! resolution = 0.2
//!
//! [optimizer]
//! max_iters = 3000
//! ```
//!
//! Dataset sections in a file replace the built-in section of the same name
//! and must define every key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::fit::{FitWeights, OptimizerConfig};
use crate::geometry::GridSpec;
use crate::lidar_sim::{builtin_specs, SensorSpec, OUSTER_VERTICAL_FOV_DEG};
use crate::pipeline::PipelineConfig;
use crate::visibility::VisibilityConfig;
use crate::{Error, Result};

/// Weights and visibility thresholds for one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPreset {
    pub weights: FitWeights,
    pub visibility: VisibilityConfig,
}

impl DatasetPreset {
    #[allow(clippy::too_many_arguments)]
    const fn row(rho: f64, lambda_theta: f64, lambda_a: f64, lambda_beta: f64, lambda_3d: f64, lambda_occ: f64, w: f64, j_conf: f64) -> Self {
        DatasetPreset {
            weights: FitWeights {
                rho,
                lambda_3d,
                lambda_theta,
                lambda_a,
                lambda_beta,
                lambda_occ,
            },
            visibility: VisibilityConfig {
                backface_threshold: w,
                joint_conf_threshold: j_conf,
            },
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig::new(self.weights, self.visibility)
    }
}

pub const PRESET_3DPW: DatasetPreset = DatasetPreset::row(100.0, 2.2, 11.0, 5.0, 800.0, 35.0, 0.2, 0.6);
pub const PRESET_SLOPER4D: DatasetPreset = DatasetPreset::row(100.0, 0.75, 8.5, 1.0, 500.0, 55.0, 0.2, 0.7);
pub const PRESET_HUMANM3: DatasetPreset = DatasetPreset::row(100.0, 1.0, 3.0, 17.5, 600.0, 135.0, -1.0, 0.6);
pub const PRESET_UT_CAMPUS: DatasetPreset = DatasetPreset::row(100.0, 1.4, 10.0, 10.0, 300.0, 50.0, 0.2, 0.7);

pub fn builtin_presets() -> BTreeMap<String, DatasetPreset> {
    [
        ("3dpw", PRESET_3DPW),
        ("sloper4d", PRESET_SLOPER4D),
        ("humanm3", PRESET_HUMANM3),
        ("ut_campus", PRESET_UT_CAMPUS),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

const DATASET_KEYS: [&str; 8] = ["rho", "lambda_theta", "lambda_a", "lambda_beta", "lambda_3d", "lambda_occ", "w", "j_conf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub presets: BTreeMap<String, DatasetPreset>,
    /// Keyed by lower-cased sensor name.
    pub sensors: BTreeMap<String, SensorSpec>,
    pub grid: GridSpec,
    pub optimizer: OptimizerConfig,
    pub source: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            presets: builtin_presets(),
            sensors: builtin_specs().into_iter().map(|s| (s.name.to_ascii_lowercase(), s)).collect(),
            grid: GridSpec::benchmark(),
            optimizer: OptimizerConfig::default(),
            source: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses INI text layered over the built-in defaults; `path` is used in diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line,
            message: e.msg.to_string(),
        })?;
        let mut config = Config {
            source: Some(path.to_path_buf()),
            ..Config::default()
        };
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config(format!("{}: keys outside any section", path.display())));
                }
                continue;
            };
            let table = Table { path, section, props };
            match section {
                "grid" => config.grid = table.grid()?,
                "optimizer" => config.optimizer = table.optimizer()?,
                s if s.starts_with("sensor.") => {
                    let spec = table.sensor(&s["sensor.".len()..])?;
                    config.sensors.insert(spec.name.to_ascii_lowercase(), spec);
                }
                s => {
                    let preset = table.dataset()?;
                    config.presets.insert(s.to_string(), preset);
                }
            }
        }
        Ok(config)
    }

    pub fn preset(&self, section: &str) -> Result<&DatasetPreset> {
        self.presets.get(section).ok_or_else(|| {
            let known: Vec<&str> = self.presets.keys().map(String::as_str).collect();
            Error::Config(format!("unknown weights section '{section}' (known: {})", known.join(", ")))
        })
    }

    pub fn sensor(&self, name: &str) -> Result<&SensorSpec> {
        self.sensors.get(&name.to_ascii_lowercase()).ok_or_else(|| {
            let known: Vec<&str> = self.sensors.values().map(|s| s.name.as_str()).collect();
            Error::Config(format!("unknown sensor '{name}' (known: {})", known.join(", ")))
        })
    }
}

struct Table<'a> {
    path: &'a Path,
    section: &'a str,
    props: &'a ini::Properties,
}

impl Table<'_> {
    fn err(&self, msg: String) -> Error {
        Error::Config(format!("{} [{}]: {msg}", self.path.display(), self.section))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in self.props.iter() {
            if !allowed.contains(&k) {
                return Err(self.err(format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.props
            .get(key)
            .map(|v| v.trim().parse::<T>().map_err(|e| self.err(format!("{key} = '{v}': {e}"))))
            .transpose()
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.parsed(key)?.ok_or_else(|| self.err(format!("missing key '{key}'")))
    }

    fn triple(&self, key: &str) -> Result<[f64; 3]> {
        let raw = self.props.get(key).ok_or_else(|| self.err(format!("missing key '{key}'")))?;
        let vals: Vec<f64> = raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(format!("{key} = '{raw}': {e}")))?;
        <[f64; 3]>::try_from(vals).map_err(|_| self.err(format!("{key} needs three comma-separated values")))
    }

    fn dataset(&self) -> Result<DatasetPreset> {
        self.check_keys(&DATASET_KEYS)?;
        let v: Vec<f64> = DATASET_KEYS.iter().map(|k| self.required(k)).collect::<Result<_>>()?;
        let preset = DatasetPreset::row(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
        preset.weights.validate().map_err(|e| self.err(e.to_string()))?;
        preset.visibility.validate().map_err(|e| self.err(e.to_string()))?;
        Ok(preset)
    }

    fn grid(&self) -> Result<GridSpec> {
        self.check_keys(&["min", "max", "resolution"])?;
        GridSpec::new(self.triple("min")?, self.triple("max")?, self.required("resolution")?).map_err(|e| self.err(e.to_string()))
    }

    fn optimizer(&self) -> Result<OptimizerConfig> {
        self.check_keys(&["max_iters", "step", "shrink", "grow", "min_step", "tolerance"])?;
        let d = OptimizerConfig::default();
        let c = OptimizerConfig {
            max_iters: self.parsed("max_iters")?.unwrap_or(d.max_iters),
            step: self.parsed("step")?.unwrap_or(d.step),
            shrink: self.parsed("shrink")?.unwrap_or(d.shrink),
            grow: self.parsed("grow")?.unwrap_or(d.grow),
            min_step: self.parsed("min_step")?.unwrap_or(d.min_step),
            tolerance: self.parsed("tolerance")?.unwrap_or(d.tolerance),
            ..d
        };
        c.validate().map_err(|e| self.err(e.to_string()))?;
        Ok(c)
    }

    fn sensor(&self, name: &str) -> Result<SensorSpec> {
        self.check_keys(&[
            "vertical_channels",
            "horizontal_channels",
            "range_noise_bias_mm",
            "range_noise_std_mm",
            "angular_noise_mean_deg",
            "angular_noise_std_deg",
            "range_min",
            "range_max",
            "dropout_prob",
            "vertical_fov_deg",
        ])?;
        let base = &builtin_specs()[0];
        let fov = match self.props.get("vertical_fov_deg") {
            Some(raw) => {
                let v: Vec<f64> = raw
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| self.err(format!("vertical_fov_deg: {e}")))?;
                <[f64; 2]>::try_from(v).map_err(|_| self.err("vertical_fov_deg needs two values".into()))?
            }
            None => OUSTER_VERTICAL_FOV_DEG,
        };
        let spec = SensorSpec {
            name: name.to_string(),
            vertical_channels: self.parsed("vertical_channels")?.ok_or_else(|| self.err("missing key 'vertical_channels'".into()))?,
            horizontal_channels: self
                .parsed("horizontal_channels")?
                .ok_or_else(|| self.err("missing key 'horizontal_channels'".into()))?,
            range_noise_bias: self.parsed("range_noise_bias_mm")?.unwrap_or(base.range_noise_bias),
            range_noise_std: self.parsed("range_noise_std_mm")?.unwrap_or(base.range_noise_std),
            angular_noise_mean: self.parsed("angular_noise_mean_deg")?.unwrap_or(base.angular_noise_mean),
            angular_noise_std: self.parsed("angular_noise_std_deg")?.unwrap_or(base.angular_noise_std),
            range_min: self.parsed("range_min")?.unwrap_or(base.range_min),
            range_max: self.parsed("range_max")?.unwrap_or(base.range_max),
            dropout_prob: self.parsed("dropout_prob")?.unwrap_or(base.dropout_prob),
            vertical_fov_deg: fov,
        };
        spec.validate().map_err(|e| self.err(e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        Config::parse(text, Path::new("test.ini"))
    }

    #[test]
    fn builtin_weight_table() {
        let c = Config::default();
        let p = c.preset("3dpw").unwrap();
        assert_eq!(
            (p.weights.rho, p.weights.lambda_theta, p.weights.lambda_a, p.weights.lambda_beta, p.weights.lambda_3d, p.weights.lambda_occ),
            (100.0, 2.2, 11.0, 5.0, 800.0, 35.0)
        );
        assert_eq!((p.visibility.backface_threshold, p.visibility.joint_conf_threshold), (0.2, 0.6));
        let h = c.preset("humanm3").unwrap();
        assert_eq!((h.weights.lambda_beta, h.weights.lambda_occ, h.visibility.backface_threshold), (17.5, 135.0, -1.0));
        let s = c.preset("sloper4d").unwrap();
        assert_eq!((s.weights.lambda_theta, s.weights.lambda_a, s.visibility.joint_conf_threshold), (0.75, 8.5, 0.7));
        let u = c.preset("ut_campus").unwrap();
        assert_eq!((u.weights.lambda_3d, u.weights.lambda_occ), (300.0, 50.0));
        assert!(c.preset("coco").is_err());
    }

    #[test]
    fn file_sections_override_and_extend() {
        let c = parse(
            "[3dpw]\nrho=50\nlambda_theta=1\nlambda_a=2\nlambda_beta=3\nlambda_3d=4\nlambda_occ=5\nw=0.1\nj_conf=0.5\n\
             [sensor.Tiny]\nvertical_channels=8\nhorizontal_channels=16\ndropout_prob=0\n\
             [grid]\nmin=0,0,0\nmax=1,2,3\nresolution=0.5\n[optimizer]\nmax_iters=7\n",
        )
        .unwrap();
        assert_eq!(c.preset("3dpw").unwrap().weights.rho, 50.0);
        assert_eq!(c.preset("sloper4d").unwrap().weights.rho, 100.0);
        let s = c.sensor("tiny").unwrap();
        assert_eq!((s.vertical_channels, s.horizontal_channels, s.dropout_prob, s.range_noise_std), (8, 16, 0.0, 10.0));
        assert_eq!(c.grid.dims(), [2, 4, 6]);
        assert_eq!(c.optimizer.max_iters, 7);
        assert!(c.sensor("Ouster-128").is_ok());
    }

    #[test]
    fn bad_files_are_diagnosed() {
        assert!(matches!(parse("[3dpw\nrho=1"), Err(Error::Parse { line: 1.., .. })));
        let missing = parse("[mine]\nrho=100\n").unwrap_err().to_string();
        assert!(missing.contains("[mine]") && missing.contains("lambda_theta"), "{missing}");
        assert!(parse("[grid]\nmin=0,0\nmax=1,1,1\nresolution=1\n").is_err());
        assert!(parse("[grid]\nmin=0,0,0\nmax=1,1,1\nresolution=0.3\n").is_err());
        assert!(parse("[sensor.x]\nvertical_channels=0\nhorizontal_channels=4\n").is_err());
        assert!(parse("[optimizer]\nspeed=3\n").is_err());
        assert!(parse("[3dpw]\nrho=abc\n").is_err());
    }
}
