//! Exact evolution of one system mode coupled to a few discrete bath modes,
//! used to check the second-order propagator at weak coupling.
//!
//! `H = ω_s a†a + Σ ω_i d_i†d_i + (a + a†) ⊗ Σ g_i (d_i + d_i†)`, with the
//! bath starting in vacuum or in Fock states sampled from the Boltzmann
//! weights. The reduced state is returned in the interaction picture so it
//! is directly comparable with [`crate::dyson`].

use std::io::Write;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bath::{BathLabel, BathMeasure, SpectralDensity, SpectralLine};
use crate::dyson::{second_order_propagate, CouplingSpec, ModeFrequencies, SpectralMemory};
use crate::error::{Error, Result};
use crate::fock::{
    coherent_state_with_tolerance, ladder_operators, number_operator, CMatrix, CVector, DensityOperator,
    ModeLabel, ModeLayout, StateVector,
};

/// Largest joint state vector the oracle will build.
pub const DEFAULT_DIMENSION_CAP: usize = 20_000;
pub const MIN_TRAJECTORIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathMode {
    pub omega: f64,
    pub coupling: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBath {
    pub modes: Vec<BathMode>,
    /// `f64::INFINITY` starts the bath in vacuum.
    pub kappa: f64,
}

impl DiscreteBath {
    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn with_mode_dim(mut self, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Domain(format!("bath modes need dimension ≥ 2, got {dim}")));
        }
        self.modes.iter_mut().for_each(|m| m.dim = dim);
        Ok(self)
    }

    /// The same bath as a line spectrum for the perturbative route.
    pub fn measure(&self) -> BathMeasure {
        BathMeasure::Lines {
            lines: self
                .modes
                .iter()
                .map(|m| SpectralLine { omega: m.omega, weight: m.coupling * m.coupling })
                .collect(),
            kappa: self.kappa,
        }
    }
}

/// Midpoint grid of `n_modes` frequencies on `(ν_c, ω_max)` with
/// `g_i² = J(ω_i) Δω`; bath modes get three levels and start in vacuum.
pub fn discretize_bath(density: &SpectralDensity, n_modes: usize, omega_max: f64) -> Result<DiscreteBath> {
    density.validate()?;
    if n_modes == 0 || !(omega_max > density.nu_c) {
        return Err(Error::Domain(format!(
            "need n_modes ≥ 1 and ω_max > ν_c, got {n_modes} and {omega_max}"
        )));
    }
    let width = (omega_max - density.nu_c) / n_modes as f64;
    let modes = (0..n_modes)
        .map(|i| {
            let omega = density.nu_c + (i as f64 + 0.5) * width;
            let g2 = density.value(omega)? * width;
            Ok(BathMode { omega, coupling: g2.sqrt(), dim: 3 })
        })
        .collect::<Result<_>>()?;
    Ok(DiscreteBath { modes, kappa: f64::INFINITY })
}

/// System mode `a` with its free frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMode {
    pub omega: f64,
    pub state: StateVector,
}

impl SystemMode {
    /// Coherent `α` in `dim` levels, renormalized after truncation.
    pub fn coherent(alpha: Complex64, dim: usize, omega: f64) -> Result<Self> {
        let state = coherent_state_with_tolerance(alpha, dim, 1e-3)?.normalized()?;
        Ok(Self { omega, state })
    }

    fn dim(&self) -> usize {
        self.state.amplitudes().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepper {
    /// Exact propagator from one Hermitian eigendecomposition.
    Spectral,
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4 { dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub dimension_cap: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub stepper: Stepper,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            dimension_cap: DEFAULT_DIMENSION_CAP,
            trajectories: MIN_TRAJECTORIES,
            seed: 0,
            stepper: Stepper::Spectral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Reduced system state in the interaction picture.
    pub rho: DensityOperator,
    /// Largest standard error over matrix elements; 0 for a vacuum bath.
    pub mc_stderr: f64,
    pub trajectories: usize,
    /// Largest `| ‖ψ(ε)‖² − 1 |` over trajectories.
    pub norm_defect: f64,
}

fn joint_layout(system: &SystemMode, bath: &DiscreteBath, cap: usize) -> Result<(ModeLayout, Vec<usize>)> {
    let mut dim = system.dim();
    let mut dims = Vec::with_capacity(bath.modes.len());
    for m in &bath.modes {
        if m.dim < 2 {
            return Err(Error::Domain(format!("bath mode dimension must be ≥ 2, got {}", m.dim)));
        }
        dim = dim.saturating_mul(m.dim);
        dims.push(m.dim);
    }
    if dim > cap {
        return Err(Error::DimensionCap { requested: dim, cap });
    }
    // The layout type names three modes; bath modes are handled by strides.
    let layout = ModeLayout::single(ModeLabel::A, system.dim())?;
    Ok((layout, dims))
}

/// Dense `H` on `a ⊗ d_1 ⊗ … ⊗ d_n`.
fn hamiltonian(system: &SystemMode, bath: &DiscreteBath, dims: &[usize]) -> CMatrix {
    let ds = system.dim();
    let total: usize = ds * dims.iter().product::<usize>();
    let kron_all = |factors: &[CMatrix]| factors.iter().skip(1).fold(factors[0].clone(), |acc, f| acc.kronecker(f));
    let identities: Vec<CMatrix> = dims.iter().map(|&d| CMatrix::identity(d, d)).collect();
    let (a, ad) = ladder_operators(ds);
    let xs = a + ad;

    let mut factors = vec![number_operator(ds).scale(system.omega)];
    factors.extend(identities.iter().cloned());
    let mut h = kron_all(&factors);
    for (i, m) in bath.modes.iter().enumerate() {
        let (b, bd) = ladder_operators(m.dim);
        let mut f = vec![CMatrix::identity(ds, ds)];
        f.extend(identities.iter().cloned());
        f[i + 1] = number_operator(m.dim).scale(m.omega);
        h += kron_all(&f);
        if m.coupling != 0.0 {
            let mut f = vec![xs.scale(m.coupling)];
            f.extend(identities.iter().cloned());
            f[i + 1] = b + bd;
            h += kron_all(&f);
        }
    }
    debug_assert_eq!(h.nrows(), total);
    h
}

fn rk4_evolve(h: &CMatrix, psi: &CVector, epsilon: f64, dt: f64) -> CVector {
    let minus_i = Complex64::new(0.0, -1.0);
    let f = |v: &CVector| (h * v) * minus_i;
    let steps = (epsilon / dt).round().max(1.0) as usize;
    let dt = epsilon / steps as f64;
    let mut psi = psi.clone();
    for _ in 0..steps {
        let k1 = f(&psi);
        let k2 = f(&(&psi + k1.scale(0.5 * dt)));
        let k3 = f(&(&psi + k2.scale(0.5 * dt)));
        let k4 = f(&(&psi + k3.scale(dt)));
        psi += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
    }
    psi
}

struct Propagator {
    vectors: CMatrix,
    phases: CVector,
}

impl Propagator {
    fn new(h: CMatrix, epsilon: f64) -> Self {
        let eig = SymmetricEigen::new(h);
        let phases = eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * epsilon));
        Self { vectors: eig.eigenvectors, phases }
    }

    fn apply(&self, psi: &CVector) -> CVector {
        let coeffs = self.vectors.adjoint() * psi;
        &self.vectors * coeffs.component_mul(&self.phases)
    }
}

/// Reduced density matrix of the first `ds` levels-factor of `psi`.
fn reduce(psi: &CVector, ds: usize) -> CMatrix {
    let rest = psi.len() / ds;
    let m = CMatrix::from_fn(ds, rest, |i, j| psi[i * rest + j]);
    &m * m.adjoint()
}

fn to_interaction_picture(rho: &CMatrix, omega: f64, epsilon: f64) -> CMatrix {
    let n = rho.nrows();
    CMatrix::from_fn(n, n, |i, j| rho[(i, j)] * Complex64::from_polar(1.0, omega * epsilon * (i as f64 - j as f64)))
}

fn sample_occupation(rng: &mut ChaCha8Rng, kappa: f64, omega: f64, dim: usize) -> usize {
    if kappa.is_infinite() {
        return 0;
    }
    let ratio = (-2.0 * kappa * omega).exp();
    let weights: Vec<f64> = (0..dim).map(|n| ratio.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (n, w) in weights.iter().enumerate() {
        if u < *w {
            return n;
        }
        u -= w;
    }
    dim - 1
}

/// Exact evolution over `[0, ε]` and partial trace over the bath.
pub fn exact_evolve(
    system: &SystemMode,
    bath: &DiscreteBath,
    epsilon: f64,
    options: &OracleOptions,
) -> Result<OracleOutcome> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!("evolution time must be finite and ≥ 0, got {epsilon}")));
    }
    let (layout, dims) = joint_layout(system, bath, options.dimension_cap)?;
    let ds = system.dim();
    let h = hamiltonian(system, bath, &dims);
    let propagator = match options.stepper {
        Stepper::Spectral => Some(Propagator::new(h.clone(), epsilon)),
        Stepper::Rk4 { dt } if dt > 0.0 => None,
        Stepper::Rk4 { dt } => return Err(Error::Domain(format!("RK4 step must be > 0, got {dt}"))),
    };
    let thermal = !bath.kappa.is_infinite();
    let trajectories = if thermal { options.trajectories.max(MIN_TRAJECTORIES) } else { 1 };

    let run = |index: usize| -> (CMatrix, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(index as u64);
        let mut psi = system.state.amplitudes().clone();
        for m in &bath.modes {
            let n = sample_occupation(&mut rng, bath.kappa, m.omega, m.dim);
            let mut fock = CVector::zeros(m.dim);
            fock[n] = Complex64::new(1.0, 0.0);
            psi = psi.kronecker(&fock);
        }
        let out = match (&propagator, options.stepper) {
            (Some(p), _) => p.apply(&psi),
            (None, Stepper::Rk4 { dt }) => rk4_evolve(&h, &psi, epsilon, dt),
            (None, Stepper::Spectral) => unreachable!("spectral stepper always has a propagator"),
        };
        let defect = (out.norm_squared() - 1.0).abs();
        (to_interaction_picture(&reduce(&out, ds), system.omega, epsilon), defect)
    };
    let samples: Vec<(CMatrix, f64)> = (0..trajectories).into_par_iter().map(run).collect();

    let n = trajectories as f64;
    let mean = samples.iter().fold(CMatrix::zeros(ds, ds), |acc, (m, _)| acc + m).scale(1.0 / n);
    let mc_stderr = if trajectories > 1 {
        let mut worst = 0.0f64;
        for i in 0..ds {
            for j in 0..ds {
                let var: f64 = samples.iter().map(|(m, _)| (m[(i, j)] - mean[(i, j)]).norm_sqr()).sum::<f64>() / (n - 1.0);
                worst = worst.max((var / n).sqrt());
            }
        }
        worst
    } else {
        0.0
    };
    let norm_defect = samples.iter().fold(0.0f64, |m, (_, d)| m.max(*d));
    let hermitian = (&mean + mean.adjoint()).scale(0.5);
    Ok(OracleOutcome {
        rho: DensityOperator::new(layout, hermitian)?,
        mc_stderr,
        trajectories,
        norm_defect,
    })
}

/// One line of the oracle comparison report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReportRow {
    pub j0: f64,
    pub epsilon: f64,
    pub frob_distance: f64,
    pub mc_stderr: f64,
}

/// Single-mode validation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleScenario {
    pub alpha: Complex64,
    pub system_dim: usize,
    pub system_omega: f64,
    pub s: f64,
    pub lambda_cut: f64,
    pub n_modes: usize,
    pub omega_max: f64,
    pub mode_dim: usize,
    pub kappa: f64,
}

impl Default for OracleScenario {
    /// Mode `a` with ten levels and `α = 1` against three vacuum bath modes.
    fn default() -> Self {
        Self {
            alpha: Complex64::new(1.0, 0.0),
            system_dim: 10,
            system_omega: 1.0,
            s: 1.0,
            lambda_cut: 1.0,
            n_modes: 3,
            omega_max: 3.0,
            mode_dim: 3,
            kappa: f64::INFINITY,
        }
    }
}

impl OracleScenario {
    pub fn bath(&self, j0: f64) -> Result<DiscreteBath> {
        let density = SpectralDensity::with_exponent(j0, self.s, self.lambda_cut)?;
        discretize_bath(&density, self.n_modes, self.omega_max)?
            .with_mode_dim(self.mode_dim)?
            .with_kappa(self.kappa)
    }

    pub fn system(&self) -> Result<SystemMode> {
        SystemMode::coherent(self.alpha, self.system_dim, self.system_omega)
    }

    /// Second-order prediction for the same discrete bath.
    pub fn perturbative(&self, j0: f64, epsilon: f64) -> Result<DensityOperator> {
        let bath = self.bath(j0)?;
        let system = self.system()?;
        let memory = SpectralMemory::new(bath.measure(), bath.measure());
        let couplings = CouplingSpec::single(ModeLabel::A, BathLabel::Hot);
        let freqs = ModeFrequencies::uniform(self.system_omega);
        Ok(second_order_propagate(&system.state.to_density(), &couplings, &freqs, &memory, epsilon)?.rho)
    }

    pub fn compare(&self, j0: f64, epsilon: f64, options: &OracleOptions) -> Result<OracleReportRow> {
        let exact = exact_evolve(&self.system()?, &self.bath(j0)?, epsilon, options)?;
        let approx = self.perturbative(j0, epsilon)?;
        Ok(OracleReportRow {
            j0,
            epsilon,
            frob_distance: (exact.rho.matrix() - approx.matrix()).norm(),
            mc_stderr: exact.mc_stderr,
        })
    }
}

/// Log-2 slope of the perturbative-vs-exact gap between successive `J0`
/// values that halve.
pub fn gap_exponents(rows: &[OracleReportRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| (w[0].frob_distance / w[1].frob_distance).ln() / (w[0].j0 / w[1].j0).ln())
        .collect()
}

/// CSV with columns `j0, epsilon, frob_distance, mc_stderr`.
pub fn write_report_csv<W: Write>(out: W, rows: &[OracleReportRow]) -> Result<()> {
    let rows = rows.iter().map(|r| [r.j0, r.epsilon, r.frob_distance, r.mc_stderr]);
    crate::table::write_rows(out, &["j0", "epsilon", "frob_distance", "mc_stderr"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::StateVector;

    #[test]
    fn single_mode_discretization() {
        let d = SpectralDensity::with_exponent(0.1, 1.0, 1.0).unwrap();
        let bath = discretize_bath(&d, 1, 2.0).unwrap();
        assert_eq!(bath.modes.len(), 1);
        assert!((bath.modes[0].omega - 1.0).abs() < 1e-15);
        let g2 = bath.modes[0].coupling.powi(2);
        assert!((g2 - d.value(1.0).unwrap() * 2.0).abs() < 1e-15);
        assert!(discretize_bath(&d, 0, 2.0).is_err());
    }

    #[test]
    fn riemann_sum_converges() {
        let d = SpectralDensity::with_exponent(0.1, 1.0, 1.0).unwrap();
        let bath = discretize_bath(&d, 512, 40.0).unwrap();
        let sum: f64 = bath.modes.iter().map(|m| m.coupling * m.coupling).sum();
        assert!((sum - 0.1).abs() / 0.1 < 0.01);
        let zero = discretize_bath(&SpectralDensity::with_exponent(0.0, 1.0, 1.0).unwrap(), 4, 3.0).unwrap();
        assert!(zero.modes.iter().all(|m| m.coupling == 0.0));
    }

    #[test]
    fn free_evolution_is_identity_in_interaction_picture() {
        let scenario = OracleScenario::default();
        let bath = scenario.bath(0.0).unwrap();
        let system = scenario.system().unwrap();
        let out = exact_evolve(&system, &bath, 2.5, &OracleOptions::default()).unwrap();
        assert!((out.rho.matrix() - system.state.to_density().matrix()).camax() < 1e-12);
        assert!(out.norm_defect < 1e-10);
    }

    #[test]
    fn weak_resonant_exchange_follows_two_level_rabi() {
        let g = 0.01;
        let bath = DiscreteBath { modes: vec![BathMode { omega: 1.0, coupling: g, dim: 3 }], kappa: f64::INFINITY };
        let system = SystemMode { omega: 1.0, state: StateVector::fock(ModeLabel::A, 4, 1).unwrap() };
        for t in [20.0, 60.0, 100.0] {
            let out = exact_evolve(&system, &bath, t, &OracleOptions::default()).unwrap();
            let p1 = out.rho.matrix()[(1, 1)].re;
            assert!((p1 - (g * t).cos().powi(2)).abs() < 0.02, "t = {t}: {p1}");
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let scenario = OracleScenario { n_modes: 6, ..OracleScenario::default() };
        let options = OracleOptions { dimension_cap: 1000, ..OracleOptions::default() };
        let err = exact_evolve(&scenario.system().unwrap(), &scenario.bath(0.01).unwrap(), 1.0, &options).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { .. }));
    }

    #[test]
    fn rk4_step_halving_is_fourth_order() {
        let scenario = OracleScenario::default();
        let system = scenario.system().unwrap();
        let bath = scenario.bath(0.01).unwrap();
        let exact = exact_evolve(&system, &bath, 1.0, &OracleOptions::default()).unwrap();
        let run = |dt| {
            let options = OracleOptions { stepper: Stepper::Rk4 { dt }, ..OracleOptions::default() };
            let out = exact_evolve(&system, &bath, 1.0, &options).unwrap();
            (out.rho.matrix() - exact.rho.matrix()).norm()
        };
        let ratio = run(0.1) / run(0.05);
        assert!((ratio - 16.0).abs() / 16.0 < 0.3, "ratio {ratio}");
    }

    #[test]
    fn exact_state_stays_positive() {
        let scenario = OracleScenario::default();
        let out = exact_evolve(&scenario.system().unwrap(), &scenario.bath(0.05).unwrap(), 1.0, &OracleOptions::default()).unwrap();
        assert!(out.rho.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn thermal_sampling_reports_error_and_is_reproducible() {
        let scenario = OracleScenario { kappa: 0.45, mode_dim: 4, system_dim: 6, alpha: Complex64::new(0.5, 0.0), ..OracleScenario::default() };
        let options = OracleOptions { trajectories: 64, seed: 7, ..OracleOptions::default() };
        let a = exact_evolve(&scenario.system().unwrap(), &scenario.bath(0.01).unwrap(), 1.0, &options).unwrap();
        let b = exact_evolve(&scenario.system().unwrap(), &scenario.bath(0.01).unwrap(), 1.0, &options).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectories, 64);
        assert!(a.mc_stderr > 0.0);
    }

    #[test]
    fn report_csv_header() {
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[OracleReportRow { j0: 0.01, epsilon: 1.0, frob_distance: 1e-6, mc_stderr: 0.0 }]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("j0,epsilon,frob_distance,mc_stderr\n"));
    }
}
