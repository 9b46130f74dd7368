//! Experiment configuration: TOML schema, defaults, validation, the optional
//! SI section and the content hash that names output directories.

use std::f64::consts::PI;
use std::path::Path;

use noneq_cat::bath::{BathLabel, BathSpec, Regime, SpectralDensity};
use noneq_cat::dyson::{CouplingSpec, ModeFrequencies};
use noneq_cat::optics::{Detector, PipelineConfig};
use noneq_cat::oracle::{OracleOptions, OracleScenario, Stepper};
use noneq_cat::phase_space::GridSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Full,
    Resonance,
    HighFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorKind {
    D1,
    D2,
}

impl From<DetectorKind> for Detector {
    fn from(d: DetectorKind) -> Self {
        match d {
            DetectorKind::D1 => Detector::D1,
            DetectorKind::D2 => Detector::D2,
        }
    }
}

/// How the memory integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    Spectral,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WignerRoute {
    Parity,
    Weyl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub theta: f64,
    pub kerr_phase: f64,
    pub detector: DetectorKind,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { alpha_re: 0.0, alpha_im: 2.0, theta: PI, kerr_phase: PI, detector: DetectorKind::D1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    /// `ħλ_H / 2k_B T`; `inf` is zero temperature.
    pub kappa: f64,
    pub j0: f64,
    pub s: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Cutoff in units of the hot-bath cutoff.
    pub lambda: f64,
    #[serde(default)]
    pub nu_c: f64,
}

fn one() -> f64 {
    1.0
}

/// A bath table where omitted fields fall back to that bath's defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialBath {
    kappa: Option<f64>,
    j0: Option<f64>,
    s: Option<f64>,
    sigma: Option<f64>,
    lambda: Option<f64>,
    nu_c: Option<f64>,
}

impl PartialBath {
    fn over(self, base: BathSection) -> BathSection {
        BathSection {
            kappa: self.kappa.unwrap_or(base.kappa),
            j0: self.j0.unwrap_or(base.j0),
            s: self.s.unwrap_or(base.s),
            sigma: self.sigma.unwrap_or(base.sigma),
            lambda: self.lambda.unwrap_or(base.lambda),
            nu_c: self.nu_c.unwrap_or(base.nu_c),
        }
    }
}

fn hot_section<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BathSection, D::Error> {
    Ok(PartialBath::deserialize(d)?.over(BathSection::hot()))
}

fn cold_section<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BathSection, D::Error> {
    Ok(PartialBath::deserialize(d)?.over(BathSection::cold()))
}

impl BathSection {
    fn hot() -> Self {
        Self { kappa: 0.45, j0: 0.1, s: 1.0, sigma: 1.0, lambda: 1.0, nu_c: 0.0 }
    }

    fn cold() -> Self {
        Self { kappa: 0.9, j0: 0.1, s: 1.0, sigma: 1.0, lambda: 2.0, nu_c: 0.0 }
    }

    fn spec(&self, path: &str, label: BathLabel) -> Result<BathSpec> {
        let density = SpectralDensity::new(self.j0, self.s, self.sigma, self.lambda, self.nu_c)
            .map_err(|e| CliError::config(path, e))?;
        BathSpec::new(self.kappa, density, label).map_err(|e| CliError::config(&format!("{path}.kappa"), e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    /// Strength of the photon-arm coupling to the hot bath relative to the
    /// Kerr-mode coupling.
    pub r_ab: f64,
    pub swap_baths: bool,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self { r_ab: 1.0, swap_baths: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Half width of the square grid; `|α| + 5` when absent.
    pub half_width: Option<f64>,
    pub points: usize,
    pub route: WignerRoute,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { half_width: None, points: 201, route: WignerRoute::Parity }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub wigner: bool,
    pub marginal: bool,
    pub kernels: bool,
    pub rho: bool,
    pub kernel_tau_max: f64,
    pub kernel_points: usize,
    /// Starting Gauss-Legendre order for the kernel propagator.
    pub time_nodes: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            wigner: true,
            marginal: true,
            kernels: true,
            rho: true,
            kernel_tau_max: 20.0,
            kernel_points: 401,
            time_nodes: noneq_cat::dyson::DEFAULT_TIME_NODES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub j0: Vec<f64>,
    pub epsilon: f64,
    pub alpha: f64,
    pub system_dim: usize,
    pub system_omega: f64,
    pub s: f64,
    pub lambda: f64,
    pub n_modes: usize,
    pub omega_max: f64,
    pub mode_dim: usize,
    pub kappa: f64,
    pub trajectories: usize,
    /// RK4 step; the spectral propagator is used when absent.
    pub rk4_step: Option<f64>,
    pub dimension_cap: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        let scenario = OracleScenario::default();
        Self {
            j0: vec![1e-2, 5e-3, 2.5e-3],
            epsilon: 1.0,
            alpha: scenario.alpha.re,
            system_dim: scenario.system_dim,
            system_omega: scenario.system_omega,
            s: scenario.s,
            lambda: scenario.lambda_cut,
            n_modes: scenario.n_modes,
            omega_max: scenario.omega_max,
            mode_dim: scenario.mode_dim,
            kappa: scenario.kappa,
            trajectories: noneq_cat::oracle::MIN_TRAJECTORIES,
            rk4_step: None,
            dimension_cap: noneq_cat::oracle::DEFAULT_DIMENSION_CAP,
        }
    }
}

/// Physical inputs in SI units. Frequencies are angular, in s⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiSection {
    pub lambda_hot_hz: f64,
    pub temperature_hot_k: Option<f64>,
    pub temperature_cold_k: Option<f64>,
    pub lambda_cold_hz: Option<f64>,
    pub omega_kerr_hz: Option<f64>,
    pub time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// `λ_H t`.
    pub epsilon: f64,
    /// System frequency over the hot cutoff.
    pub delta: f64,
    pub regime: RegimeKind,
    pub band_half_width: f64,
    pub propagator: Propagator,
    pub pipeline: PipelineSection,
    #[serde(deserialize_with = "hot_section")]
    pub hot: BathSection,
    #[serde(deserialize_with = "cold_section")]
    pub cold: BathSection,
    pub couplings: CouplingSection,
    pub grid: GridSection,
    pub outputs: OutputSection,
    pub oracle: OracleSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub si: Option<SiSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epsilon: 1.0,
            delta: 0.01,
            regime: RegimeKind::Full,
            band_half_width: noneq_cat::bath::DEFAULT_BAND_HALF_WIDTH,
            propagator: Propagator::Spectral,
            pipeline: PipelineSection::default(),
            hot: BathSection::hot(),
            cold: BathSection::cold(),
            couplings: CouplingSection::default(),
            grid: GridSection::default(),
            outputs: OutputSection::default(),
            oracle: OracleSection::default(),
            si: None,
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be finite and > 0, got {v}")))
    }
}

impl ExperimentConfig {
    /// Parses a config or manifest. A `[results]` table is ignored.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        table.remove("results");
        let config: Self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Applies the SI section, if any, and validates every field. The result
    /// carries no SI section.
    pub fn resolve(&self) -> Result<Self> {
        let mut out = self.clone();
        if let Some(si) = out.si.take() {
            positive("si.lambda_hot_hz", si.lambda_hot_hz)?;
            let kappa = |path: &str, t: f64| -> Result<f64> {
                positive(path, t)?;
                Ok(HBAR * si.lambda_hot_hz / (2.0 * BOLTZMANN * t))
            };
            if let Some(t) = si.temperature_hot_k {
                out.hot.kappa = kappa("si.temperature_hot_k", t)?;
            }
            if let Some(t) = si.temperature_cold_k {
                out.cold.kappa = kappa("si.temperature_cold_k", t)?;
            }
            if let Some(l) = si.lambda_cold_hz {
                positive("si.lambda_cold_hz", l)?;
                out.cold.lambda = l / si.lambda_hot_hz;
            }
            if let Some(w) = si.omega_kerr_hz {
                positive("si.omega_kerr_hz", w)?;
                out.delta = w / si.lambda_hot_hz;
            }
            if let Some(t) = si.time_s {
                positive("si.time_s", t)?;
                out.epsilon = si.lambda_hot_hz * t;
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::config("epsilon", format!("must be finite and ≥ 0, got {}", self.epsilon)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(CliError::config("delta", format!("must be finite and ≥ 0, got {}", self.delta)));
        }
        positive("band_half_width", self.band_half_width)?;
        if self.hot.lambda != 1.0 {
            return Err(CliError::config("hot.lambda", "frequencies are in units of the hot cutoff, so it must be 1"));
        }
        self.pipeline()?;
        self.baths()?;
        self.couplings()?;
        self.regime_window()?;
        if let Some(h) = self.grid.half_width {
            positive("grid.half_width", h)?;
        }
        if self.grid.points < 2 {
            return Err(CliError::config("grid.points", "must be ≥ 2"));
        }
        positive("outputs.kernel_tau_max", self.outputs.kernel_tau_max)?;
        if self.outputs.kernel_points < 2 {
            return Err(CliError::config("outputs.kernel_points", "must be ≥ 2"));
        }
        if self.outputs.time_nodes < 2 {
            return Err(CliError::config("outputs.time_nodes", "must be ≥ 2"));
        }
        self.validate_oracle()
    }

    fn validate_oracle(&self) -> Result<()> {
        let o = &self.oracle;
        if o.j0.is_empty() {
            return Err(CliError::config("oracle.j0", "needs at least one coupling"));
        }
        for (i, j) in o.j0.iter().enumerate() {
            positive(&format!("oracle.j0[{i}]"), *j)?;
        }
        positive("oracle.epsilon", o.epsilon)?;
        positive("oracle.lambda", o.lambda)?;
        positive("oracle.omega_max", o.omega_max)?;
        if !(o.kappa > 0.0) {
            return Err(CliError::config("oracle.kappa", format!("must be > 0, got {}", o.kappa)));
        }
        if let Some(dt) = o.rk4_step {
            positive("oracle.rk4_step", dt)?;
        }
        for (name, v, min) in [
            ("oracle.system_dim", o.system_dim, 2),
            ("oracle.mode_dim", o.mode_dim, 2),
            ("oracle.n_modes", o.n_modes, 1),
            ("oracle.trajectories", o.trajectories, 1),
        ] {
            if v < min {
                return Err(CliError::config(name, format!("must be ≥ {min}, got {v}")));
            }
        }
        Ok(())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let p = &self.pipeline;
        PipelineConfig::new(Complex64::new(p.alpha_re, p.alpha_im), p.theta, p.kerr_phase, p.detector.into())
            .map_err(|e| CliError::config("pipeline", e))
    }

    pub fn baths(&self) -> Result<(BathSpec, BathSpec)> {
        Ok((self.hot.spec("hot", BathLabel::Hot)?, self.cold.spec("cold", BathLabel::Cold)?))
    }

    pub fn couplings(&self) -> Result<CouplingSpec> {
        let spec = CouplingSpec::standard(self.couplings.r_ab).map_err(|e| CliError::config("couplings.r_ab", e))?;
        Ok(if self.couplings.swap_baths { spec.swapped() } else { spec })
    }

    pub fn regime(&self) -> Regime {
        match self.regime {
            RegimeKind::Full => Regime::Full,
            RegimeKind::Resonance => Regime::Resonance { half_width: self.band_half_width },
            RegimeKind::HighFrequency => Regime::HighFrequency,
        }
    }

    fn regime_window(&self) -> Result<()> {
        self.regime().window(self.delta).map(|_| ()).map_err(|e| CliError::config("regime", e))
    }

    pub fn frequencies(&self) -> ModeFrequencies {
        ModeFrequencies::for_regime(self.delta, self.regime())
    }

    pub fn grid_spec(&self) -> GridSpec {
        let half = self.grid.half_width.unwrap_or(self.pipeline.alpha_abs() + 5.0);
        GridSpec::square(half, self.grid.points)
    }

    pub fn oracle_scenario(&self) -> OracleScenario {
        let o = &self.oracle;
        OracleScenario {
            alpha: Complex64::new(o.alpha, 0.0),
            system_dim: o.system_dim,
            system_omega: o.system_omega,
            s: o.s,
            lambda_cut: o.lambda,
            n_modes: o.n_modes,
            omega_max: o.omega_max,
            mode_dim: o.mode_dim,
            kappa: o.kappa,
        }
    }

    pub fn oracle_options(&self) -> OracleOptions {
        OracleOptions {
            dimension_cap: self.oracle.dimension_cap,
            trajectories: self.oracle.trajectories,
            seed: self.seed,
            stepper: match self.oracle.rk4_step {
                Some(dt) => Stepper::Rk4 { dt },
                None => Stepper::Spectral,
            },
        }
    }

    /// First 16 hex digits of the SHA-256 of the resolved config serialized
    /// with sorted keys. Field order in the source file does not matter.
    pub fn hash(&self) -> String {
        let value = toml::Value::try_from(self).expect("config converts to a TOML value");
        let digest = Sha256::digest(toml::to_string(&value).expect("TOML value serializes").as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

impl PipelineSection {
    pub fn alpha_abs(&self) -> f64 {
        Complex64::new(self.alpha_re, self.alpha_im).norm()
    }
}

/// Parses an angle written as a number or as `pi`, `pi/4`, `3pi/4`.
pub fn parse_angle(text: &str) -> Option<f64> {
    let t = text.trim().to_ascii_lowercase().replace('π', "pi");
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().ok()?),
        None => (t.as_str(), 1.0),
    };
    let factor = match num.strip_suffix("pi")?.trim().trim_end_matches('*') {
        "" => 1.0,
        f => f.parse::<f64>().ok()?,
    };
    Some(factor * PI / den)
}
