//! Bath spectral densities, thermal occupations and correlation kernels.
//!
//! Frequencies and times are dimensionless in units of the hot-bath cut-off
//! `λ_H`, with `ħ = k_B = 1`. The inverse-temperature parameter is
//! `κ = λ_H / (2T)`, so `coth(ω / 2T) = coth(κω)` and `κ = ∞` is zero
//! temperature.
//!
//! The correlation function of a bath with spectral density `J` is
//!
//! ```text
//! χ(τ) = ∫ dω J(ω) [coth(κω) cos ωτ − i sin ωτ]
//!      = ∫ dω J(ω) [N(ω) e^{iωτ} + (N(ω) + 1) e^{−iωτ}]
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Spectral densities are integrated up to this many cut-off frequencies.
pub const CUTOFF_MULTIPLE: f64 = 40.0;

/// Relative accuracy requested from every frequency quadrature.
pub const QUADRATURE_REL_TOL: f64 = 1e-10;

/// Default half-width `w` of the resonance band `[δ(1−w), δ(1+w)]`.
pub const DEFAULT_BAND_HALF_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ohmicity {
    SubOhmic,
    Ohmic,
    SuperOhmic,
}

/// `J(ω) = J0 ω (ω/λ)^{s−1} (1 − ν_c/ω)^{σ−1} e^{−ω/λ} θ(ω − ν_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensity {
    pub j0: f64,
    pub s: f64,
    pub sigma: f64,
    pub lambda_cut: f64,
    pub nu_c: f64,
}

impl SpectralDensity {
    pub fn new(j0: f64, s: f64, sigma: f64, lambda_cut: f64, nu_c: f64) -> Result<Self> {
        let density = Self { j0, s, sigma, lambda_cut, nu_c };
        density.validate()?;
        Ok(density)
    }

    /// `s`-class density with `σ = 1`, `ν_c = 0`.
    pub fn with_exponent(j0: f64, s: f64, lambda_cut: f64) -> Result<Self> {
        Self::new(j0, s, 1.0, lambda_cut, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.j0.is_finite() && self.j0 >= 0.0, "j0 must be finite and ≥ 0"),
            (self.s.is_finite() && self.s > 0.0, "s must be > 0"),
            (self.sigma.is_finite() && self.sigma >= 1.0, "sigma must be ≥ 1"),
            (self.lambda_cut.is_finite() && self.lambda_cut > 0.0, "lambda_cut must be > 0"),
            (self.nu_c.is_finite() && self.nu_c >= 0.0, "nu_c must be ≥ 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Domain(format!("{msg}: {self:?}"))),
            None => Ok(()),
        }
    }

    pub fn ohmicity(&self) -> Ohmicity {
        match self.s.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => Ohmicity::SubOhmic,
            Some(std::cmp::Ordering::Equal) => Ohmicity::Ohmic,
            _ => Ohmicity::SuperOhmic,
        }
    }

    pub fn value(&self, omega: f64) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(Error::Domain(format!("spectral density needs ω ≥ 0, got {omega}")));
        }
        Ok(self.value_unchecked(omega))
    }

    pub(crate) fn value_unchecked(&self, omega: f64) -> f64 {
        if omega <= self.nu_c || omega <= 0.0 {
            return 0.0;
        }
        let x = omega / self.lambda_cut;
        let edge = if self.sigma == 1.0 { 1.0 } else { (1.0 - self.nu_c / omega).powf(self.sigma - 1.0) };
        self.j0 * omega * x.powf(self.s - 1.0) * edge * (-x).exp()
    }

    /// Upper end of the frequency quadrature.
    pub fn omega_max(&self) -> f64 {
        self.nu_c + CUTOFF_MULTIPLE * self.lambda_cut
    }
}

pub fn spectral_density_value(density: &SpectralDensity, omega: f64) -> Result<f64> {
    density.value(omega)
}

/// `N = 1 / (e^{2κω} − 1)`, with `ω` in units of `λ_H`.
pub fn thermal_occupation(kappa: f64, omega_ratio: f64) -> Result<f64> {
    if !(omega_ratio > 0.0) {
        return Err(Error::Domain(format!("thermal occupation needs ω > 0, got {omega_ratio}")));
    }
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    Ok(occupation(kappa, omega_ratio))
}

fn occupation(kappa: f64, omega: f64) -> f64 {
    if kappa.is_infinite() {
        0.0
    } else {
        1.0 / (2.0 * kappa * omega).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BathLabel {
    Hot,
    Cold,
}

impl BathLabel {
    pub fn other(self) -> Self {
        match self {
            BathLabel::Hot => BathLabel::Cold,
            BathLabel::Cold => BathLabel::Hot,
        }
    }
}

impl fmt::Display for BathLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BathLabel::Hot => "hot",
            BathLabel::Cold => "cold",
        })
    }
}

impl FromStr for BathLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hot" | "h" => Ok(BathLabel::Hot),
            "cold" | "c" => Ok(BathLabel::Cold),
            other => Err(Error::Domain(format!("unknown bath label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    /// `λ_H / 2T`; `f64::INFINITY` is zero temperature.
    pub kappa: f64,
    pub density: SpectralDensity,
    pub label: BathLabel,
}

impl BathSpec {
    pub fn new(kappa: f64, density: SpectralDensity, label: BathLabel) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
        }
        density.validate()?;
        Ok(Self { kappa, density, label })
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.kappa.is_infinite()
    }
}

/// Frequency interval a bath measure is restricted to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl FrequencyWindow {
    pub const FULL: FrequencyWindow = FrequencyWindow { lo: 0.0, hi: f64::INFINITY };

    /// `[δ(1 − w), δ(1 + w)]`.
    pub fn band(center: f64, half_width: f64) -> Result<Self> {
        if !(center > 0.0) || !(half_width > 0.0) {
            return Err(Error::Domain(format!(
                "resonance band needs δ > 0 and w > 0, got δ = {center}, w = {half_width}"
            )));
        }
        Ok(Self {
            lo: (center * (1.0 - half_width)).max(0.0),
            hi: center * (1.0 + half_width),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Full,
    /// Bath frequencies restricted to a band around the system frequency.
    Resonance { half_width: f64 },
    /// Full bath; consumers drop the system frequencies from the phases.
    HighFrequency,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Full => "full",
            Regime::Resonance { .. } => "resonance",
            Regime::HighFrequency => "high_frequency",
        }
    }

    pub fn window(&self, system_delta: f64) -> Result<FrequencyWindow> {
        match *self {
            Regime::Resonance { half_width } => FrequencyWindow::band(system_delta, half_width),
            Regime::Full | Regime::HighFrequency => Ok(FrequencyWindow::FULL),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Regime::Full),
            "resonance" => Ok(Regime::Resonance { half_width: DEFAULT_BAND_HALF_WIDTH }),
            "high_frequency" | "high-frequency" => Ok(Regime::HighFrequency),
            other => Err(Error::Domain(format!("unknown regime {other:?}"))),
        }
    }
}

/// A discrete bath mode as seen by the system: `J(ω) = Σ g_i² δ(ω − ω_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    pub omega: f64,
    pub weight: f64,
}

/// Spectral measure of one bath together with its temperature.
#[derive(Debug, Clone, PartialEq)]
pub enum BathMeasure {
    Continuous { bath: BathSpec, window: FrequencyWindow },
    Lines { lines: Vec<SpectralLine>, kappa: f64 },
}

impl BathMeasure {
    pub fn full(bath: BathSpec) -> Self {
        BathMeasure::Continuous { bath, window: FrequencyWindow::FULL }
    }

    pub fn windowed(bath: BathSpec, window: FrequencyWindow) -> Self {
        BathMeasure::Continuous { bath, window }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            BathMeasure::Continuous { bath, .. } => bath.kappa,
            BathMeasure::Lines { kappa, .. } => *kappa,
        }
    }

    /// Effective integration range `[lo, hi]` of a continuous measure.
    fn support(bath: &BathSpec, window: &FrequencyWindow) -> (f64, f64) {
        let lo = bath.density.nu_c.max(window.lo);
        let hi = bath.density.omega_max().min(window.hi);
        (lo, hi)
    }

    /// Rough magnitude of `∫ J (2N + 1)`, used as an absolute error floor.
    fn scale(&self) -> f64 {
        match self {
            BathMeasure::Continuous { bath, .. } => {
                let d = &bath.density;
                let thermal = if bath.is_zero_temperature() { 1.0 } else { 1.0 + 1.0 / (bath.kappa * d.lambda_cut) };
                d.j0 * d.lambda_cut * d.lambda_cut * thermal
            }
            BathMeasure::Lines { lines, .. } => lines.iter().map(|l| l.weight).sum(),
        }
    }

    /// `∫ dω J(ω) f(ω, N(ω))`. `breaks` are extra frequencies where `f` has
    /// structure; continuous measures split the quadrature there.
    pub fn integrate<F>(&self, f: F, breaks: &[f64], rel_tol: f64) -> Result<Complex64>
    where
        F: Fn(f64, f64) -> Complex64,
    {
        match self {
            BathMeasure::Lines { lines, kappa } => Ok(lines
                .iter()
                .filter(|l| l.omega > 0.0)
                .map(|l| f(l.omega, occupation(*kappa, l.omega)) * l.weight)
                .sum()),
            BathMeasure::Continuous { bath, window } => {
                let (lo, hi) = Self::support(bath, window);
                if !(hi > lo) || bath.density.j0 == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let kappa = bath.kappa;
                let density = bath.density;
                let g = |w: f64| {
                    if w <= 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let j = density.value_unchecked(w);
                    if j == 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    f(w, occupation(kappa, w)) * j
                };
                let mut points: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
                points.push(lo);
                points.push(hi);
                points.sort_by(f64::total_cmp);
                points.dedup();
                let tol = Tolerance {
                    abs: 1e-14 * self.scale(),
                    rel: rel_tol,
                    ..Tolerance::default()
                };
                let mut total = Complex64::new(0.0, 0.0);
                let mut rest = &points[..];
                if lo == 0.0 {
                    // J ~ ω^s at the origin, and N ~ 1/ω at finite temperature.
                    let exponent = if bath.is_zero_temperature() { density.s } else { density.s - 1.0 };
                    let first = points[1];
                    total += quad::integrate_power_law_origin(&g, first, exponent, tol)?.value;
                    rest = &points[1..];
                }
                if rest.len() >= 2 {
                    total += quad::integrate(&g, rest, tol)?.value;
                }
                Ok(total)
            }
        }
    }

    /// `∫ J(ω) dω` over the measure.
    pub fn total_weight(&self) -> Result<f64> {
        match self {
            BathMeasure::Lines { lines, .. } => Ok(lines.iter().map(|l| l.weight).sum()),
            BathMeasure::Continuous { bath, window } => {
                let zero_t = BathMeasure::Continuous {
                    bath: BathSpec { kappa: f64::INFINITY, ..*bath },
                    window: *window,
                };
                Ok(zero_t.integrate(|_, _| Complex64::new(1.0, 0.0), &[], QUADRATURE_REL_TOL)?.re)
            }
        }
    }

    pub fn correlation(&self, tau: f64) -> Result<Complex64> {
        if !tau.is_finite() {
            return Err(Error::Domain(format!("correlation needs finite τ, got {tau}")));
        }
        if tau < 0.0 {
            return Ok(self.correlation(-tau)?.conj());
        }
        let breaks = match self {
            BathMeasure::Continuous { bath, window } if tau > 0.0 => {
                let (lo, hi) = Self::support(bath, window);
                let step = PI / tau;
                let first = (lo / step).floor() as usize + 1;
                let last = (hi / step).ceil() as usize;
                (first..last).map(|k| k as f64 * step).collect()
            }
            _ => Vec::new(),
        };
        self.integrate(
            |w, n| {
                let e = Complex64::from_polar(1.0, w * tau);
                e * n + e.conj() * (n + 1.0)
            },
            &breaks,
            QUADRATURE_REL_TOL,
        )
    }
}

/// Correlation function of a bath over its full spectrum.
pub fn correlation_function(bath: &BathSpec, tau: f64) -> Result<Complex64> {
    BathMeasure::full(*bath).correlation(tau)
}

/// `χ(τ)` tabulated on the uniform grid `τ_k = k·τ_max/(n−1)`, extended to
/// negative times through `χ(−τ) = conj χ(τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationKernel {
    tau_grid: Vec<f64>,
    values: Vec<Complex64>,
    bath: BathSpec,
    window: FrequencyWindow,
}

impl CorrelationKernel {
    pub fn tau_grid(&self) -> &[f64] {
        &self.tau_grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn bath(&self) -> &BathSpec {
        &self.bath
    }

    pub fn window(&self) -> FrequencyWindow {
        self.window
    }

    pub fn measure(&self) -> BathMeasure {
        BathMeasure::windowed(self.bath, self.window)
    }

    pub fn tau_max(&self) -> f64 {
        *self.tau_grid.last().expect("kernel grid has ≥ 2 points")
    }

    fn step(&self) -> f64 {
        self.tau_grid[1] - self.tau_grid[0]
    }

    fn sample(&self, k: isize) -> Complex64 {
        if k < 0 {
            self.values[(-k) as usize].conj()
        } else {
            self.values[k as usize]
        }
    }

    /// Four-point Lagrange interpolation on `[−τ_max, τ_max]`.
    pub fn value_at(&self, tau: f64) -> Result<Complex64> {
        let tau_max = self.tau_max();
        if !(tau.abs() <= tau_max * (1.0 + 1e-12)) {
            return Err(Error::KernelCoverage { available: tau_max, required: tau.abs() });
        }
        if tau < 0.0 {
            return Ok(self.value_at(-tau)?.conj());
        }
        let n = self.values.len() as isize;
        let h = self.step();
        let u = tau / h;
        if n == 2 {
            let t = u.clamp(0.0, 1.0);
            return Ok(self.values[0] * (1.0 - t) + self.values[1] * t);
        }
        let i = (u.floor() as isize).clamp(0, n - 2);
        // Stencil i−1..=i+2; at the left edge it reaches into τ < 0.
        let start = (i - 1).min(n - 4).max(-(n - 1));
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..4 {
            let ka = start + a;
            let mut weight = 1.0;
            for b in 0..4 {
                if a != b {
                    let kb = (start + b) as f64;
                    weight *= (u - kb) / (ka as f64 - kb);
                }
            }
            acc += self.sample(ka) * weight;
        }
        Ok(acc)
    }

    /// CSV with columns `tau, re_chi, im_chi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.tau_grid.iter().zip(&self.values).map(|(&t, v)| [t, v.re, v.im]);
        crate::table::write_rows(out, &["tau", "re_chi", "im_chi"], rows)
    }
}

pub fn build_kernel(bath: &BathSpec, tau_max: f64, n_points: usize) -> Result<CorrelationKernel> {
    build_windowed_kernel(bath, FrequencyWindow::FULL, tau_max, n_points)
}

fn build_windowed_kernel(
    bath: &BathSpec,
    window: FrequencyWindow,
    tau_max: f64,
    n_points: usize,
) -> Result<CorrelationKernel> {
    if !(tau_max > 0.0) || !tau_max.is_finite() || n_points < 2 {
        return Err(Error::Domain(format!(
            "kernel needs τ_max > 0 and ≥ 2 points, got τ_max = {tau_max}, n = {n_points}"
        )));
    }
    let measure = BathMeasure::windowed(*bath, window);
    let step = tau_max / (n_points - 1) as f64;
    let tau_grid: Vec<f64> = (0..n_points)
        .map(|k| if k + 1 == n_points { tau_max } else { k as f64 * step })
        .collect();
    let values = tau_grid
        .par_iter()
        .map(|&t| measure.correlation(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationKernel { tau_grid, values, bath: *bath, window })
}

/// Kernel for a parameter regime. The high-frequency regime uses the full
/// spectrum; dropping `δ` from the system phases is up to the consumer.
pub fn regime_kernel(
    bath: &BathSpec,
    regime: Regime,
    system_delta: f64,
    tau_max: f64,
    n_points: usize,
) -> Result<CorrelationKernel> {
    build_windowed_kernel(bath, regime.window(system_delta)?, tau_max, n_points)
}
