//! Truncated Fock-space linear algebra over a small multi-mode register.
//!
//! Every state and operator carries a [`ModeLayout`]. The joint basis is the
//! row-major tensor product of the per-mode Fock bases in layout order, so for
//! modes `(a, b, c)` the joint index is `(n_a * d_b + n_b) * d_c + n_c`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default tolerance on the Poisson tail dropped by truncation.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;
/// Number of top Fock levels excluded from truncation-sensitive checks.
pub const GUARD_BAND: usize = 5;

const HERMITIAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeLabel {
    /// The mode that passes through the Kerr cell.
    A,
    B,
    C,
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModeLabel::A => "a",
            ModeLabel::B => "b",
            ModeLabel::C => "c",
        };
        f.write_str(s)
    }
}

impl FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(ModeLabel::A),
            "b" | "B" => Ok(ModeLabel::B),
            "c" | "C" => Ok(ModeLabel::C),
            other => Err(Error::Domain(format!("unknown mode label `{other}`"))),
        }
    }
}

/// Ordered list of modes with their truncation dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeLayout {
    modes: Vec<(ModeLabel, usize)>,
}

impl ModeLayout {
    pub fn new(modes: Vec<(ModeLabel, usize)>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::LayoutMismatch("layout needs at least one mode".into()));
        }
        for (i, &(label, dim)) in modes.iter().enumerate() {
            if dim < 2 {
                return Err(Error::LayoutMismatch(format!(
                    "mode {label} has dimension {dim}, need at least 2"
                )));
            }
            if modes[..i].iter().any(|&(l, _)| l == label) {
                return Err(Error::LayoutMismatch(format!("mode {label} appears twice")));
            }
        }
        Ok(Self { modes })
    }

    pub fn single(label: ModeLabel, dim: usize) -> Result<Self> {
        Self::new(vec![(label, dim)])
    }

    /// The `(a, b, c)` register used by the interferometer.
    pub fn abc(dim_a: usize, dim_b: usize, dim_c: usize) -> Result<Self> {
        Self::new(vec![
            (ModeLabel::A, dim_a),
            (ModeLabel::B, dim_b),
            (ModeLabel::C, dim_c),
        ])
    }

    pub fn modes(&self) -> &[(ModeLabel, usize)] {
        &self.modes
    }

    pub fn labels(&self) -> impl Iterator<Item = ModeLabel> + '_ {
        self.modes.iter().map(|&(l, _)| l)
    }

    pub fn dim(&self) -> usize {
        self.modes.iter().map(|&(_, d)| d).product()
    }

    pub fn position(&self, label: ModeLabel) -> Result<usize> {
        self.modes
            .iter()
            .position(|&(l, _)| l == label)
            .ok_or_else(|| Error::LayoutMismatch(format!("mode {label} not in layout {self}")))
    }

    pub fn contains(&self, label: ModeLabel) -> bool {
        self.modes.iter().any(|&(l, _)| l == label)
    }

    pub fn mode_dim(&self, label: ModeLabel) -> Result<usize> {
        Ok(self.modes[self.position(label)?].1)
    }

    /// Joint index stride of each mode.
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.modes.len()];
        for i in (0..self.modes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.modes[i + 1].1;
        }
        strides
    }

    /// Occupation numbers of every mode for a joint basis index.
    pub fn occupations(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        let mut occ = vec![0; self.modes.len()];
        for (i, &(_, d)) in self.modes.iter().enumerate().rev() {
            occ[i] = rest % d;
            rest /= d;
        }
        occ
    }

    /// Joint basis index of a list of occupations, given in layout order.
    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} occupations for {} modes",
                occupations.len(),
                self.modes.len()
            )));
        }
        let mut index = 0;
        for (&n, &(label, d)) in occupations.iter().zip(&self.modes) {
            if n >= d {
                return Err(Error::Truncation(format!(
                    "occupation {n} of mode {label} exceeds truncation {d}"
                )));
            }
            index = index * d + n;
        }
        Ok(index)
    }

    pub fn ensure_same(&self, other: &ModeLayout) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!("{self} vs {other}")))
        }
    }

    /// Concatenation of two layouts with disjoint labels.
    pub fn tensor(&self, other: &ModeLayout) -> Result<ModeLayout> {
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        ModeLayout::new(modes)
    }
}

impl fmt::Display for ModeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, (label, dim)) in self.modes.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{label}:{dim}")?;
        }
        f.write_str(")")
    }
}

/// Pure state over a [`ModeLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: ModeLayout,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(layout: ModeLayout, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::LayoutMismatch(format!(
                "{} amplitudes for layout {layout} of dimension {}",
                amplitudes.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, amplitudes })
    }

    /// Number state `|n⟩` of a single mode.
    pub fn fock(label: ModeLabel, dim: usize, n: usize) -> Result<Self> {
        let layout = ModeLayout::single(label, dim)?;
        if n >= dim {
            return Err(Error::Truncation(format!("|{n}⟩ does not fit in dimension {dim}")));
        }
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[n] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amplitudes })
    }

    /// Basis state of a multi-mode layout with the given occupations.
    pub fn basis(layout: ModeLayout, occupations: &[usize]) -> Result<Self> {
        let index = layout.index_of(occupations)?;
        let mut amplitudes = CVector::zeros(layout.dim());
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::Domain("cannot normalize the zero vector".into()));
        }
        self.amplitudes.unscale_mut(norm);
        Ok(self)
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let layout = self.layout.tensor(&other.layout)?;
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        Ok(StateVector { layout, amplitudes })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.layout.ensure_same(&other.layout)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn apply(&self, op: &CMatrix) -> Result<StateVector> {
        if op.nrows() != self.layout.dim() || op.ncols() != self.layout.dim() {
            return Err(Error::LayoutMismatch(format!(
                "{}x{} operator on layout {}",
                op.nrows(),
                op.ncols(),
                self.layout
            )));
        }
        Ok(StateVector {
            layout: self.layout.clone(),
            amplitudes: op * &self.amplitudes,
        })
    }

    /// Multiplies by a global phase so the largest-magnitude amplitude is real
    /// and positive.
    pub fn with_canonical_phase(mut self) -> Self {
        let pivot = self
            .amplitudes
            .iter()
            .copied()
            .fold(Complex64::new(0.0, 0.0), |best, z| if z.norm() > best.norm() { z } else { best });
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            self.amplitudes *= phase;
        }
        self
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            layout: self.layout.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

/// Density operator over a [`ModeLayout`]. Hermiticity is checked on
/// construction; the trace is left to the producer.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    layout: ModeLayout,
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(layout: ModeLayout, matrix: CMatrix) -> Result<Self> {
        let rho = Self::new_unchecked(layout, matrix)?;
        let defect = rho.hermiticity_defect();
        if defect > HERMITIAN_TOLERANCE * rho.matrix.camax().max(1.0) {
            return Err(Error::Domain(format!("matrix is not Hermitian (defect {defect:e})")));
        }
        Ok(rho)
    }

    /// Wraps a square matrix of the right size without the Hermiticity check.
    /// Used for perturbative results, which are Hermitian only up to rounding.
    pub fn new_unchecked(layout: ModeLayout, matrix: CMatrix) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::LayoutMismatch(format!(
                "{}x{} matrix for layout {layout} of dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `max |M - M†|` elementwise.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).camax()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        h.symmetric_eigenvalues().min()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let tr = self.trace().re;
        if tr.abs() < 1e-300 {
            return Err(Error::Domain("cannot normalize a traceless operator".into()));
        }
        self.matrix.unscale_mut(tr);
        Ok(self)
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with_pure(&self, psi: &StateVector) -> Result<f64> {
        self.layout.ensure_same(psi.layout())?;
        let v = psi.amplitudes();
        Ok(v.dotc(&(&self.matrix * v)).re)
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator> {
        let layout = self.layout.tensor(&other.layout)?;
        Ok(DensityOperator {
            layout,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }

    pub fn partial_trace(&self, keep: &[ModeLabel]) -> Result<DensityOperator> {
        let (layout, matrix) = partial_trace_matrix(&self.layout, &self.matrix, keep)?;
        Ok(DensityOperator { layout, matrix })
    }
}

/// Fock amplitudes `e^{-|α|²/2} α^n / √n!` for `n < dim`, without
/// renormalization, together with the squared norm they carry.
pub fn coherent_amplitudes(alpha: Complex64, dim: usize) -> CVector {
    let mut amps = CVector::zeros(dim);
    let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        amps[n] = c;
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    amps
}

/// Coherent state `|α⟩` of mode `a` truncated at `dim` levels.
pub fn coherent_state(alpha: Complex64, dim: usize) -> Result<StateVector> {
    coherent_state_with_tolerance(alpha, dim, TRUNCATION_TOLERANCE)
}

pub fn coherent_state_with_tolerance(alpha: Complex64, dim: usize, tolerance: f64) -> Result<StateVector> {
    let layout = ModeLayout::single(ModeLabel::A, dim)?;
    let amplitudes = coherent_amplitudes(alpha, dim);
    let deficit = 1.0 - amplitudes.norm_squared();
    if deficit > tolerance {
        return Err(Error::Truncation(format!(
            "|α|={} loses {deficit:e} of its norm at dimension {dim}",
            alpha.norm()
        )));
    }
    Ok(StateVector { layout, amplitudes })
}

/// Truncation that keeps a coherent state of amplitude `|α|` well inside the
/// space: `ceil(|α|² + 6|α| + 10)`.
pub fn default_cat_dim(alpha_abs: f64) -> usize {
    (alpha_abs * alpha_abs + 6.0 * alpha_abs + 10.0).ceil() as usize
}

/// `(a, a†)` on a `dim`-level mode.
pub fn ladder_operators(dim: usize) -> (CMatrix, CMatrix) {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    (a, adag)
}

pub fn number_operator(dim: usize) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_fn(dim, |n, _| Complex64::new(n as f64, 0.0)))
}

/// Photon-number parity `(-1)^n`.
pub fn parity_operator(dim: usize) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_fn(dim, |n, _| {
        Complex64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
    }))
}

/// `D(γ) = exp(γ a† − γ* a)` by matrix exponential on the truncated space.
///
/// The truncated exponential is exactly unitary, so the guard check is on
/// leakage instead: the displaced vacuum may put at most
/// [`TRUNCATION_TOLERANCE`] of its weight in the top [`GUARD_BAND`] levels.
pub fn displacement_operator(gamma: Complex64, dim: usize) -> Result<CMatrix> {
    let (a, adag) = ladder_operators(dim);
    let generator = adag * gamma - a * gamma.conj();
    let d = generator.exp();
    let guard_start = dim.saturating_sub(GUARD_BAND);
    let leak: f64 = (guard_start..dim).map(|n| d[(n, 0)].norm_sqr()).sum();
    if leak > TRUNCATION_TOLERANCE {
        return Err(Error::Truncation(format!(
            "D({gamma}) leaks {leak:e} into the guard band at dimension {dim}"
        )));
    }
    Ok(d)
}

/// Exact Fock matrix elements `⟨m|D(γ)|n⟩` of the untruncated displacement
/// operator for `m, n < dim`.
///
/// Uses `D|0⟩ = |γ⟩` for the first column and `D a† = (a† − γ*) D` for the
/// rest: `⟨m|D|n⟩ = (√m ⟨m−1|D|n−1⟩ − γ* ⟨m|D|n−1⟩) / √n`.
pub fn displacement_elements(gamma: Complex64, dim: usize) -> CMatrix {
    let mut d = CMatrix::zeros(dim, dim);
    let col0 = coherent_amplitudes(gamma, dim);
    d.set_column(0, &col0);
    let gc = gamma.conj();
    let sqrt: Vec<f64> = (0..dim).map(|k| (k as f64).sqrt()).collect();
    for n in 1..dim {
        let inv = 1.0 / sqrt[n];
        d[(0, n)] = -gc * d[(0, n - 1)] * inv;
        for m in 1..dim {
            d[(m, n)] = (d[(m - 1, n - 1)] * sqrt[m] - gc * d[(m, n - 1)]) * inv;
        }
    }
    d
}

/// Lifts a single-mode operator to the joint space of `layout`.
pub fn embed(op: &CMatrix, target: ModeLabel, layout: &ModeLayout) -> Result<CMatrix> {
    let pos = layout.position(target)?;
    let (_, dim) = layout.modes()[pos];
    if op.nrows() != dim || op.ncols() != dim {
        return Err(Error::LayoutMismatch(format!(
            "{}x{} operator for mode {target} of dimension {dim}",
            op.nrows(),
            op.ncols()
        )));
    }
    let before: usize = layout.modes()[..pos].iter().map(|&(_, d)| d).product();
    let after: usize = layout.modes()[pos + 1..].iter().map(|&(_, d)| d).product();
    let left = CMatrix::identity(before, before).kronecker(op);
    Ok(left.kronecker(&CMatrix::identity(after, after)))
}

/// Partial trace of any square matrix over the modes not listed in `keep`.
/// The kept modes retain their layout order.
pub fn partial_trace_matrix(
    layout: &ModeLayout,
    matrix: &CMatrix,
    keep: &[ModeLabel],
) -> Result<(ModeLayout, CMatrix)> {
    if keep.is_empty() {
        return Err(Error::LayoutMismatch("partial trace must keep at least one mode".into()));
    }
    let d = layout.dim();
    if matrix.nrows() != d || matrix.ncols() != d {
        return Err(Error::LayoutMismatch(format!(
            "{}x{} matrix for layout {layout}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    for &k in keep {
        layout.position(k)?;
    }
    let kept_pos: Vec<usize> = (0..layout.modes().len())
        .filter(|&i| keep.contains(&layout.modes()[i].0))
        .collect();
    let traced_pos: Vec<usize> = (0..layout.modes().len())
        .filter(|i| !kept_pos.contains(i))
        .collect();
    let reduced = ModeLayout::new(kept_pos.iter().map(|&i| layout.modes()[i]).collect())?;
    let traced_dims: Vec<usize> = traced_pos.iter().map(|&i| layout.modes()[i].1).collect();
    let traced_dim: usize = traced_dims.iter().product();
    let strides = layout.strides();

    let rd = reduced.dim();
    // Joint offset contributed by each kept index and each traced index.
    let kept_offset: Vec<usize> = (0..rd)
        .map(|r| {
            reduced
                .occupations(r)
                .iter()
                .zip(&kept_pos)
                .map(|(&n, &p)| n * strides[p])
                .sum()
        })
        .collect();
    let traced_offset: Vec<usize> = (0..traced_dim)
        .map(|t| {
            let mut rest = t;
            let mut off = 0;
            for (j, &p) in traced_pos.iter().enumerate().rev() {
                let n = rest % traced_dims[j];
                rest /= traced_dims[j];
                off += n * strides[p];
            }
            off
        })
        .collect();

    let mut out = CMatrix::zeros(rd, rd);
    for (r, &ro) in kept_offset.iter().enumerate() {
        for (c, &co) in kept_offset.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &t in &traced_offset {
                acc += matrix[(ro + t, co + t)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok((reduced, out))
}
