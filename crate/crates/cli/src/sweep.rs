//! Cartesian parameter sweeps with a consolidated index table.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{parse_angle, DetectorKind, ExperimentConfig, RegimeKind};
use crate::error::{CliError, Result};
use crate::run::{create, run};

pub const INDEX_CSV: &str = "index.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue {
    Epsilon(f64),
    KappaHot(f64),
    KappaCold(f64),
    /// Hot and cold together.
    KappaPair(f64, f64),
    Ohmicity(f64),
    Theta(f64),
    Regime(RegimeKind),
    Detector(DetectorKind),
    SwapBaths(bool),
}

impl AxisValue {
    fn apply(self, config: &mut ExperimentConfig) {
        match self {
            AxisValue::Epsilon(v) => config.epsilon = v,
            AxisValue::KappaHot(v) => config.hot.kappa = v,
            AxisValue::KappaCold(v) => config.cold.kappa = v,
            AxisValue::KappaPair(h, c) => {
                config.hot.kappa = h;
                config.cold.kappa = c;
            }
            AxisValue::Ohmicity(s) => {
                config.hot.s = s;
                config.cold.s = s;
            }
            AxisValue::Theta(v) => config.pipeline.theta = v,
            AxisValue::Regime(r) => config.regime = r,
            AxisValue::Detector(d) => config.pipeline.detector = d,
            AxisValue::SwapBaths(b) => config.couplings.swap_baths = b,
        }
    }
}

/// One `--axis key=v1,v2,…` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<AxisValue>,
}

fn number(key: &str, text: &str) -> Result<f64> {
    let t = text.trim();
    let v = if t == "inf" { f64::INFINITY } else { t.parse::<f64>().map_err(|e| CliError::config(key, format!("`{t}`: {e}")))? };
    Ok(v)
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(arg: &str) -> Result<Self> {
        let (key, list) = arg
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("axis `{arg}` must look like key=v1,v2")))?;
        let key = key.trim().to_string();
        let items: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(CliError::config(&format!("axis {key}"), "needs at least one value"));
        }
        let values = items
            .iter()
            .map(|item| -> Result<AxisValue> {
                Ok(match key.as_str() {
                    "epsilon" => AxisValue::Epsilon(number(&key, item)?),
                    "kappa_h" => AxisValue::KappaHot(number(&key, item)?),
                    "kappa_c" => AxisValue::KappaCold(number(&key, item)?),
                    "kappa" => {
                        let (h, c) = item
                            .split_once(':')
                            .ok_or_else(|| CliError::config("axis kappa", format!("`{item}` must be hot:cold")))?;
                        AxisValue::KappaPair(number(&key, h)?, number(&key, c)?)
                    }
                    "s" => AxisValue::Ohmicity(number(&key, item)?),
                    "theta" => AxisValue::Theta(
                        parse_angle(item).ok_or_else(|| CliError::config("axis theta", format!("bad angle `{item}`")))?,
                    ),
                    "regime" => AxisValue::Regime(
                        toml::Value::String(item.to_string())
                            .try_into()
                            .map_err(|_| CliError::config("axis regime", format!("unknown regime `{item}`")))?,
                    ),
                    "detector" => AxisValue::Detector(match item.to_ascii_uppercase().as_str() {
                        "D1" => DetectorKind::D1,
                        "D2" => DetectorKind::D2,
                        _ => return Err(CliError::config("axis detector", format!("unknown detector `{item}`"))),
                    }),
                    "swap_baths" => AxisValue::SwapBaths(
                        item.parse().map_err(|_| CliError::config("axis swap_baths", format!("`{item}` is not a bool")))?,
                    ),
                    other => {
                        return Err(CliError::Config(format!(
                            "unknown sweep axis `{other}`; expected one of epsilon, kappa_h, kappa_c, kappa, s, theta, regime, detector, swap_baths"
                        )))
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Axis { key, values })
    }
}

/// Every combination of axis values applied to `base`, first axis slowest.
pub fn expand(base: &ExperimentConfig, axes: &[Axis]) -> Result<Vec<ExperimentConfig>> {
    if axes.is_empty() {
        return Err(CliError::Config("sweep needs at least one --axis".into()));
    }
    let mut points = vec![base.resolve()?];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut next = p.clone();
                    v.apply(&mut next);
                    next
                })
            })
            .collect();
    }
    points.iter().map(|p| p.resolve()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub config: ExperimentConfig,
    pub hash: String,
    pub detection_probability: Option<f64>,
    pub negativity: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub rows: Vec<IndexRow>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }
}

fn sweep_hash(base: &ExperimentConfig, axes: &[Axis]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(base.hash().as_bytes());
    for axis in axes {
        hasher.update(format!("{}={:?};", axis.key, axis.values).as_bytes());
    }
    hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Runs every point under `root/sweep-<hash>/` and writes `index.csv` in
/// point order. Numeric failures are recorded per row.
pub fn sweep(base: &ExperimentConfig, axes: &[Axis], root: &Path) -> Result<SweepReport> {
    let points = expand(base, axes)?;
    let dir = root.join(format!("sweep-{}", sweep_hash(&base.resolve()?, axes)));
    std::fs::create_dir_all(&dir)?;
    let rows = points
        .par_iter()
        .map(|config| {
            let hash = config.hash();
            match run(config, &dir) {
                Ok(s) => Ok(IndexRow {
                    config: config.clone(),
                    hash,
                    detection_probability: Some(s.detection_probability),
                    negativity: Some(s.negativity),
                    status: "ok".into(),
                }),
                Err(CliError::Numeric(e)) => Ok(IndexRow {
                    config: config.clone(),
                    hash,
                    detection_probability: match e {
                        noneq_cat::Error::ZeroProbability { probability } => Some(probability),
                        _ => None,
                    },
                    negativity: None,
                    status: format!("error: {e}"),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    write_index(&rows, &dir.join(INDEX_CSV))?;
    Ok(SweepReport { dir, rows })
}

fn write_index(rows: &[IndexRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "hash",
        "epsilon",
        "kappa_h",
        "kappa_c",
        "s",
        "theta",
        "regime",
        "detector",
        "swap_baths",
        "detection_probability",
        "negativity",
        "status",
    ])?;
    let f = noneq_cat::table::format_float;
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    for row in rows {
        let c = &row.config;
        let regime = toml::Value::try_from(c.regime).expect("regime serializes");
        w.write_record([
            row.hash.clone(),
            f(c.epsilon),
            f(c.hot.kappa),
            f(c.cold.kappa),
            f(c.hot.s),
            f(c.pipeline.theta),
            regime.as_str().unwrap_or_default().to_string(),
            format!("{:?}", c.pipeline.detector),
            c.couplings.swap_baths.to_string(),
            opt(row.detection_probability),
            opt(row.negativity),
            row.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn axis_parsing() {
        let a: Axis = "theta=pi,pi/4".parse().unwrap();
        assert_eq!(a.values, vec![AxisValue::Theta(PI), AxisValue::Theta(PI / 4.0)]);
        let k: Axis = "kappa=0.9:0.9,0.45:0.9".parse().unwrap();
        assert_eq!(k.values[1], AxisValue::KappaPair(0.45, 0.9));
        let r: Axis = "regime=resonance,high_frequency".parse().unwrap();
        assert_eq!(r.values[1], AxisValue::Regime(RegimeKind::HighFrequency));
        assert!("colour=red".parse::<Axis>().is_err());
        assert!("epsilon=".parse::<Axis>().is_err());
        assert_eq!("epsilon=x".parse::<Axis>().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn expansion_is_cartesian_first_axis_slowest() {
        let axes: Vec<Axis> = ["epsilon=1,10,1000", "s=0.5,1,2"].iter().map(|a| a.parse().unwrap()).collect();
        let points = expand(&ExperimentConfig::default(), &axes).unwrap();
        assert_eq!(points.len(), 9);
        assert_eq!((points[0].epsilon, points[0].hot.s), (1.0, 0.5));
        assert_eq!((points[1].epsilon, points[1].cold.s), (1.0, 1.0));
        assert_eq!((points[8].epsilon, points[8].hot.s), (1000.0, 2.0));
    }

    #[test]
    fn invalid_axis_value_is_a_config_error() {
        let axes = vec!["kappa_h=-1".parse::<Axis>().unwrap()];
        assert_eq!(expand(&ExperimentConfig::default(), &axes).unwrap_err().exit_code(), 2);
        assert_eq!(expand(&ExperimentConfig::default(), &[]).unwrap_err().exit_code(), 2);
    }
}
