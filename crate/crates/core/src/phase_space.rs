//! Weyl and Wigner functions of the cat mode, negativity and marginals.
//!
//! Phase-space points are `β = x + ip`. With this convention
//! `∫ W dx dp = 1`, `W(0) = (2/π) ⟨Π⟩`, and the marginal `∫ W dp` is the
//! probability density of the quadrature `(a + a†)/2`.

use std::f64::consts::{FRAC_1_PI, PI};
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{displacement_elements, CMatrix, DensityOperator};

/// Weyl function samples below this magnitude count as outside the support.
pub const WEYL_SUPPORT_TOLERANCE: f64 = 1e-13;
/// Largest `|γ|` the Weyl route will sample before reporting aliasing.
pub const MAX_WEYL_RADIUS: f64 = 60.0;

/// Uniform rectangular grid of phase-space points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self { x_min: -half_width, x_max: half_width, nx: n, p_min: -half_width, p_max: half_width, np: n }
    }

    /// `201 × 201` points over `±(|α| + 5)`.
    pub fn for_alpha(alpha_abs: f64) -> Self {
        Self::square(alpha_abs + 5.0, 201)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.nx >= 2
            && self.np >= 2
            && self.x_max > self.x_min
            && self.p_max > self.p_min
            && [self.x_min, self.x_max, self.p_min, self.p_max].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid phase-space grid {self:?}")))
        }
    }

    pub fn x_axis(&self) -> Vec<f64> {
        linspace(self.x_min, self.x_max, self.nx)
    }

    pub fn p_axis(&self) -> Vec<f64> {
        linspace(self.p_min, self.p_max, self.np)
    }

    fn extent(&self) -> f64 {
        [self.x_min, self.x_max, self.p_min, self.p_max].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { hi } else { lo + k as f64 * h }).collect()
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let h = axis[1] - axis[0];
    let mut w = vec![h; axis.len()];
    w[0] = 0.5 * h;
    *w.last_mut().expect("axis has ≥ 2 points") = 0.5 * h;
    w
}

/// Samples of `W(x, p)`, indexed `[(ix, ip)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub values: DMatrix<f64>,
    /// Contribution of the cross term `C` alone, before `C†` is added.
    pub cross_values: Option<DMatrix<Complex64>>,
    /// `∫ W dx dp − 1` by the trapezoid rule.
    pub normalization_residual: f64,
    pub epsilon: Option<f64>,
    pub config_hash: Option<String>,
}

impl WignerGrid {
    fn new(x_axis: Vec<f64>, p_axis: Vec<f64>, values: DMatrix<f64>, cross_values: Option<DMatrix<Complex64>>) -> Self {
        let mut grid = Self {
            x_axis,
            p_axis,
            values,
            cross_values,
            normalization_residual: 0.0,
            epsilon: None,
            config_hash: None,
        };
        grid.normalization_residual = grid.integral(|w| w) - 1.0;
        grid
    }

    fn integral(&self, f: impl Fn(f64) -> f64) -> f64 {
        let wx = trapezoid_weights(&self.x_axis);
        let wp = trapezoid_weights(&self.p_axis);
        let mut total = 0.0;
        for (ix, a) in wx.iter().enumerate() {
            for (ip, b) in wp.iter().enumerate() {
                total += a * b * f(self.values[(ix, ip)]);
            }
        }
        total
    }

    pub fn min_value(&self) -> f64 {
        self.values.min()
    }

    pub fn max_abs_difference(&self, other: &WignerGrid) -> f64 {
        (&self.values - &other.values).amax()
    }

    /// CSV with columns `x, p, w, re_cross, im_cross`; cross columns are 0
    /// when no cross term was supplied.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = (0..self.x_axis.len()).flat_map(|ix| {
            (0..self.p_axis.len()).map(move |ip| {
                let c = self.cross_values.as_ref().map_or(Complex64::new(0.0, 0.0), |m| m[(ix, ip)]);
                [self.x_axis[ix], self.p_axis[ip], self.values[(ix, ip)], c.re, c.im]
            })
        });
        crate::table::write_rows(out, &["x", "p", "w", "re_cross", "im_cross"], rows)
    }
}

fn check_single_mode(rho: &CMatrix) -> Result<()> {
    if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
        return Err(Error::LayoutMismatch(format!("{}x{} is not a single-mode operator", rho.nrows(), rho.ncols())));
    }
    Ok(())
}

fn check_gamma(gamma: Complex64) -> Result<()> {
    if !gamma.re.is_finite() || !gamma.im.is_finite() || gamma.norm_sqr() > 1400.0 {
        return Err(Error::Truncation(format!("displacement γ = {gamma} is outside the representable range")));
    }
    Ok(())
}

/// `tr(D(γ) M)` for a single-mode operator `M`.
fn displaced_trace(m: &CMatrix, gamma: Complex64) -> Complex64 {
    let d = displacement_elements(gamma, m.nrows());
    d.component_mul(&m.transpose()).sum()
}

/// `Υ(γ) = tr(D(γ) ρ)`.
pub fn weyl_function(rho: &DensityOperator, gamma: Complex64) -> Result<Complex64> {
    if rho.layout().modes().len() != 1 {
        return Err(Error::LayoutMismatch(format!("Weyl function needs one mode, got {}", rho.layout())));
    }
    check_gamma(gamma)?;
    Ok(displaced_trace(rho.matrix(), gamma))
}

/// `(2/π) tr[D(2β) Π M]`; linear in `M`, real for Hermitian `M`.
fn parity_value(m: &CMatrix, beta: Complex64) -> Complex64 {
    let n = m.nrows();
    let d = displacement_elements(beta * 2.0, n);
    let mut acc = Complex64::new(0.0, 0.0);
    for col in 0..n {
        for row in 0..n {
            // tr[D Π M] = Σ D_{row,col} (−1)^col M_{col,row}
            let term = d[(row, col)] * m[(col, row)];
            if col % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
    }
    acc * (2.0 * FRAC_1_PI)
}

fn parity_grid(m: &CMatrix, spec: &GridSpec) -> Result<DMatrix<Complex64>> {
    spec.validate()?;
    check_gamma(Complex64::new(spec.extent(), spec.extent()) * 2.0)?;
    let (xs, ps) = (spec.x_axis(), spec.p_axis());
    let rows: Vec<Vec<Complex64>> = xs
        .par_iter()
        .map(|&x| ps.iter().map(|&p| parity_value(m, Complex64::new(x, p))).collect())
        .collect();
    Ok(DMatrix::from_fn(xs.len(), ps.len(), |i, j| rows[i][j]))
}

/// Wigner function from displaced parity, `W(β) = (2/π) tr[D(2β) Π ρ]`.
pub fn wigner_from_parity(rho: &DensityOperator, spec: &GridSpec) -> Result<WignerGrid> {
    check_single_mode(rho.matrix())?;
    let field = parity_grid(rho.matrix(), spec)?;
    Ok(WignerGrid::new(spec.x_axis(), spec.p_axis(), field.map(|v| v.re), None))
}

/// Parity-route Wigner function of `ρ` plus the complex field of the cross
/// term `cross` (`ρ` already contains `cross + cross†`).
pub fn wigner_with_cross(rho: &DensityOperator, cross: &CMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    check_single_mode(rho.matrix())?;
    if cross.shape() != rho.matrix().shape() {
        return Err(Error::LayoutMismatch("cross term and state differ in dimension".into()));
    }
    let field = parity_grid(rho.matrix(), spec)?;
    let cross_field = parity_grid(cross, spec)?;
    Ok(WignerGrid::new(spec.x_axis(), spec.p_axis(), field.map(|v| v.re), Some(cross_field)))
}

/// Symplectic Fourier transform of the sampled Weyl function,
/// `W(β) = (1/π²) ∫ d²γ e^{γ*β − γβ*} Υ(γ)`, on a trapezoid `γ`-grid.
pub fn wigner_from_weyl(rho: &DensityOperator, spec: &GridSpec) -> Result<WignerGrid> {
    check_single_mode(rho.matrix())?;
    spec.validate()?;
    let field = weyl_transform(rho.matrix(), spec)?;
    Ok(WignerGrid::new(spec.x_axis(), spec.p_axis(), field.map(|v| v.re), None))
}

fn weyl_transform(m: &CMatrix, spec: &GridSpec) -> Result<DMatrix<Complex64>> {
    let n = m.nrows();
    // Wigner support radius of anything in an n-level space, and the spacing
    // that keeps the periodic images of W off the requested grid.
    let support = ((n + 1) as f64).sqrt() + 6.0;
    let h = PI / (spec.extent() + support);

    let mut radius = 2.0 * support;
    let samples = loop {
        if radius > MAX_WEYL_RADIUS {
            return Err(Error::GridAliasing(format!(
                "Weyl function still above {WEYL_SUPPORT_TOLERANCE:e} at |γ| = {MAX_WEYL_RADIUS}"
            )));
        }
        let k = (radius / h).ceil() as isize;
        let axis: Vec<f64> = (-k..=k).map(|i| i as f64 * h).collect();
        let upsilon: Vec<Vec<Complex64>> = axis
            .par_iter()
            .map(|&u| axis.iter().map(|&v| displaced_trace(m, Complex64::new(u, v))).collect())
            .collect();
        let last = axis.len() - 1;
        let boundary = (0..axis.len())
            .flat_map(|i| [upsilon[0][i], upsilon[last][i], upsilon[i][0], upsilon[i][last]])
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        if boundary < WEYL_SUPPORT_TOLERANCE {
            break (axis, upsilon);
        }
        radius *= 1.25;
    };
    let (axis, upsilon) = samples;
    let upsilon = DMatrix::from_fn(axis.len(), axis.len(), |k, l| upsilon[k][l]);
    let (xs, ps) = (spec.x_axis(), spec.p_axis());
    // γ = u + iv: W(x, p) = (h²/π²) Σ_{k,l} e^{2i(u_k p − v_l x)} Υ(u_k, v_l).
    let ep = DMatrix::from_fn(ps.len(), axis.len(), |ip, k| Complex64::from_polar(1.0, 2.0 * axis[k] * ps[ip]));
    let ex = DMatrix::from_fn(xs.len(), axis.len(), |ix, l| Complex64::from_polar(1.0, -2.0 * axis[l] * xs[ix]));
    let a = ep * upsilon;
    Ok((ex * a.transpose()).scale(h * h / (PI * PI)))
}

/// `∫ (|W| − W)/2 dx dp` by the trapezoid rule.
pub fn negativity_volume(grid: &WignerGrid) -> f64 {
    grid.integral(|w| 0.5 * (w.abs() - w))
}

/// `∫ W dp` and the same integral of the cross-term field.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub x_axis: Vec<f64>,
    pub real: Vec<f64>,
    pub cross: Vec<Complex64>,
}

impl Marginal {
    /// CSV with columns `x, marg_real, re_cross_marg, im_cross_marg`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = (0..self.x_axis.len()).map(|i| [self.x_axis[i], self.real[i], self.cross[i].re, self.cross[i].im]);
        crate::table::write_rows(out, &["x", "marg_real", "re_cross_marg", "im_cross_marg"], rows)
    }

    /// Sign changes of `values` restricted to `|x| ≤ half_width`, ignoring
    /// samples below `floor` in magnitude.
    pub fn sign_changes(&self, values: &[f64], half_width: f64, floor: f64) -> usize {
        let mut last = 0.0f64;
        let mut count = 0;
        for (x, v) in self.x_axis.iter().zip(values) {
            if x.abs() > half_width || v.abs() <= floor {
                continue;
            }
            if last != 0.0 && last.signum() != v.signum() {
                count += 1;
            }
            last = *v;
        }
        count
    }
}

pub fn momentum_marginal(grid: &WignerGrid) -> Marginal {
    let wp = trapezoid_weights(&grid.p_axis);
    let real = (0..grid.x_axis.len())
        .map(|ix| wp.iter().enumerate().map(|(ip, w)| w * grid.values[(ix, ip)]).sum())
        .collect();
    let cross = match &grid.cross_values {
        Some(c) => (0..grid.x_axis.len())
            .map(|ix| wp.iter().enumerate().map(|(ip, w)| c[(ix, ip)] * *w).sum())
            .collect(),
        None => vec![Complex64::new(0.0, 0.0); grid.x_axis.len()],
    };
    Marginal { x_axis: grid.x_axis.clone(), real, cross }
}

/// Closed forms used to check the numerical routes.
pub mod analytic {
    use super::*;

    /// Wigner function of `(|α⟩ ± |−α⟩)/N` at `β`.
    pub fn cat_wigner(alpha: Complex64, even: bool, beta: Complex64) -> f64 {
        let overlap = (-2.0 * alpha.norm_sqr()).exp();
        let (sign, norm2) = if even { (1.0, 2.0 * (1.0 + overlap)) } else { (-1.0, 2.0 * (1.0 - overlap)) };
        let g = |z: Complex64| (-2.0 * z.norm_sqr()).exp();
        let fringe = 2.0 * g(beta) * (4.0 * (beta * alpha.conj()).im).cos();
        2.0 * FRAC_1_PI / norm2 * (g(beta - alpha) + g(beta + alpha) + sign * fringe)
    }

    /// Weyl function of the same cat state.
    pub fn cat_weyl(alpha: Complex64, even: bool, gamma: Complex64) -> Complex64 {
        let overlap = (-2.0 * alpha.norm_sqr()).exp();
        let (sign, norm2) = if even { (1.0, 2.0 * (1.0 + overlap)) } else { (-1.0, 2.0 * (1.0 - overlap)) };
        // ⟨β'|D(γ)|β⟩ = e^{(γβ* − γ*β)/2} ⟨β'|β + γ⟩
        let element = |bp: Complex64, b: Complex64| {
            let phase = (gamma * b.conj() - gamma.conj() * b) * 0.5;
            let shifted = b + gamma;
            let overlap = -0.5 * bp.norm_sqr() - 0.5 * shifted.norm_sqr() + bp.conj() * shifted;
            (phase + overlap).exp()
        };
        let total = element(alpha, alpha) + element(-alpha, -alpha) + (element(alpha, -alpha) + element(-alpha, alpha)) * sign;
        total / norm2
    }

    /// Density of the quadrature `(a + a†)/2` at `x` for a single-mode
    /// operator, through Hermite functions.
    pub fn position_density(rho: &CMatrix, x: f64) -> f64 {
        let q = 2f64.sqrt() * x;
        let n = rho.nrows();
        let mut psi = vec![0.0; n];
        psi[0] = PI.powf(-0.25) * (-0.5 * q * q).exp();
        if n > 1 {
            psi[1] = 2f64.sqrt() * q * psi[0];
        }
        for k in 1..n.saturating_sub(1) {
            psi[k + 1] = (2.0 / (k + 1) as f64).sqrt() * q * psi[k] - (k as f64 / (k + 1) as f64).sqrt() * psi[k - 1];
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..n {
            for k in 0..n {
                acc += rho[(m, k)] * (psi[m] * psi[k]);
            }
        }
        2f64.sqrt() * acc.re
    }
}
