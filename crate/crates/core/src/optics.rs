//! Mach-Zehnder elements and the closed-system cat pipeline.
//!
//! The photon enters in mode `b` with `c` empty. The first beam splitter sends
//! it into a superposition of both arms, arm `c` picks up the phase shift `θ`
//! and arm `b` drives the cross-Kerr cell shared with the coherent mode `a`.
//! With `Kτ = π` this yields
//!
//! ```text
//! (|−α⟩_a |10⟩_bc + i e^{iθ} |α⟩_a |01⟩_bc) / √2
//! ```
//!
//! and after the second beam splitter a click in `D1` (photon in `b`) leaves
//! `a` in the even cat at `θ = π`, a click in `D2` (photon in `c`) in the odd
//! cat.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{
    coherent_state, default_cat_dim, embed, ladder_operators, CMatrix, CVector, DensityOperator,
    ModeLabel, ModeLayout, StateVector,
};

/// Truncation of the photon modes `b` and `c`. Three levels keep the
/// two-photon intermediate states that second-order bath terms pass through.
pub const PHOTON_DIM: usize = 3;

/// Smallest detection probability that is still renormalized.
pub const MIN_DETECTION_PROBABILITY: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    /// Photon leaves the second beam splitter in mode `b`; even cat at `θ = π`.
    D1,
    /// Photon leaves in mode `c`; odd cat at `θ = π`.
    D2,
}

impl Detector {
    pub fn photon_mode(self) -> ModeLabel {
        match self {
            Detector::D1 => ModeLabel::B,
            Detector::D2 => ModeLabel::C,
        }
    }

    /// `(n_b, n_c)` of the one-photon outcome this detector registers.
    pub fn outcome(self) -> (usize, usize) {
        match self {
            Detector::D1 => (1, 0),
            Detector::D2 => (0, 1),
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
        })
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D1" | "d1" => Ok(Detector::D1),
            "D2" | "d2" => Ok(Detector::D2),
            other => Err(Error::Domain(format!("unknown detector `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub alpha: Complex64,
    pub theta: f64,
    /// Product `Kτ` of Kerr constant and transit time.
    pub kerr_phase: f64,
    pub detector: Detector,
}

impl PipelineConfig {
    pub fn new(alpha: Complex64, theta: f64, kerr_phase: f64, detector: Detector) -> Result<Self> {
        let cfg = Self {
            alpha,
            theta,
            kerr_phase,
            detector,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta", self.theta), ("kerr_phase", self.kerr_phase)] {
            if !(0.0..TAU).contains(&v) {
                return Err(Error::Domain(format!("{name} = {v} outside [0, 2π)")));
            }
        }
        if !self.alpha.re.is_finite() || !self.alpha.im.is_finite() {
            return Err(Error::Domain("alpha must be finite".into()));
        }
        Ok(())
    }

    /// `(a, b, c)` layout with the default truncation for this amplitude.
    pub fn default_layout(&self) -> Result<ModeLayout> {
        ModeLayout::abc(default_cat_dim(self.alpha.norm()), PHOTON_DIM, PHOTON_DIM)
    }
}

/// Balanced beam splitter `exp[i π/4 (f† s + s† f)]` on modes `first` and
/// `second`, so `|1⟩_f |0⟩_s → (|10⟩ + i|01⟩)/√2`.
pub fn beam_splitter_unitary(layout: &ModeLayout, first: ModeLabel, second: ModeLabel) -> Result<CMatrix> {
    if first == second {
        return Err(Error::LayoutMismatch(format!("beam splitter needs two modes, got {first} twice")));
    }
    let (f, fdag) = ladder_operators(layout.mode_dim(first)?);
    let (s, sdag) = ladder_operators(layout.mode_dim(second)?);
    let hop = embed(&fdag, first, layout)? * embed(&s, second, layout)?;
    let back = embed(&f, first, layout)? * embed(&sdag, second, layout)?;
    let generator = (hop + back) * Complex64::new(0.0, FRAC_PI_4);
    Ok(generator.exp())
}

/// `diag(e^{i n θ})` on one mode.
pub fn phase_shift_unitary(layout: &ModeLayout, mode: ModeLabel, theta: f64) -> Result<CMatrix> {
    let dim = layout.mode_dim(mode)?;
    let diag = CVector::from_fn(dim, |n, _| Complex64::from_polar(1.0, n as f64 * theta));
    embed(&CMatrix::from_diagonal(&diag), mode, layout)
}

/// Cross-Kerr unitary `exp[i Kτ n_a n_b]`, diagonal in the joint Fock basis.
pub fn kerr_unitary(layout: &ModeLayout, kerr_phase: f64) -> Result<CMatrix> {
    let pa = layout.position(ModeLabel::A)?;
    let pb = layout.position(ModeLabel::B)?;
    let diag = CVector::from_fn(layout.dim(), |i, _| {
        let occ = layout.occupations(i);
        Complex64::from_polar(1.0, kerr_phase * (occ[pa] * occ[pb]) as f64)
    });
    Ok(CMatrix::from_diagonal(&diag))
}

/// State of `(a, b, c)` just before the second beam splitter: first beam
/// splitter, phase `θ` on arm `c`, then the Kerr cell on `(a, b)`.
/// The global phase is canonicalized.
pub fn closed_pipeline_state(config: &PipelineConfig, layout: &ModeLayout) -> Result<StateVector> {
    config.validate()?;
    let dim_a = layout.mode_dim(ModeLabel::A)?;
    let dim_b = layout.mode_dim(ModeLabel::B)?;
    let dim_c = layout.mode_dim(ModeLabel::C)?;
    if layout.modes().len() != 3 {
        return Err(Error::LayoutMismatch(format!("pipeline needs exactly (a, b, c), got {layout}")));
    }
    let coherent = coherent_state(config.alpha, dim_a)?;
    let photon = StateVector::fock(ModeLabel::B, dim_b, 1)?.tensor(&StateVector::fock(ModeLabel::C, dim_c, 0)?)?;
    let input = coherent.tensor(&photon)?;
    // Reorder into the caller's layout if it is not (a, b, c).
    let input = reorder(&input, layout)?;

    let bs1 = beam_splitter_unitary(layout, ModeLabel::B, ModeLabel::C)?;
    let shift = phase_shift_unitary(layout, ModeLabel::C, config.theta)?;
    let kerr = kerr_unitary(layout, config.kerr_phase)?;
    let out = input.apply(&bs1)?.apply(&shift)?.apply(&kerr)?;
    Ok(out.with_canonical_phase())
}

fn reorder(state: &StateVector, target: &ModeLayout) -> Result<StateVector> {
    if state.layout() == target {
        return Ok(state.clone());
    }
    let src = state.layout();
    let mut amps = CVector::zeros(target.dim());
    for i in 0..target.dim() {
        let occ_t = target.occupations(i);
        let occ_s: Vec<usize> = src
            .labels()
            .map(|l| target.position(l).map(|p| occ_t[p]))
            .collect::<Result<_>>()?;
        amps[i] = state.amplitudes()[src.index_of(&occ_s)?];
    }
    StateVector::new(target.clone(), amps)
}

/// Outcome of the second beam splitter and a detector click.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Normalized state of mode `a`.
    pub rho: DensityOperator,
    pub probability: f64,
    pub detector: Detector,
}

/// Applies the second beam splitter to any `(a, b, c)` operator and returns
/// the unnormalized block of mode `a` conditioned on the detector's
/// one-photon outcome. Linear in `matrix`.
pub fn detect_block(layout: &ModeLayout, matrix: &CMatrix, detector: Detector) -> Result<CMatrix> {
    let bs2 = beam_splitter_unitary(layout, ModeLabel::B, ModeLabel::C)?;
    detect_block_with(layout, &bs2, matrix, detector)
}

pub(crate) fn detect_block_with(
    layout: &ModeLayout,
    bs2: &CMatrix,
    matrix: &CMatrix,
    detector: Detector,
) -> Result<CMatrix> {
    let d = layout.dim();
    if matrix.nrows() != d || matrix.ncols() != d {
        return Err(Error::LayoutMismatch(format!("{}x{} matrix for {layout}", matrix.nrows(), matrix.ncols())));
    }
    let pa = layout.position(ModeLabel::A)?;
    let pb = layout.position(ModeLabel::B)?;
    let pc = layout.position(ModeLabel::C)?;
    let dim_a = layout.mode_dim(ModeLabel::A)?;
    let (nb, nc) = detector.outcome();
    let rows: Vec<usize> = (0..dim_a)
        .map(|n| {
            let mut occ = vec![0; 3];
            occ[pa] = n;
            occ[pb] = nb;
            occ[pc] = nc;
            layout.index_of(&occ)
        })
        .collect::<Result<_>>()?;
    // Only the projected rows of U and columns of U† are needed.
    let u_rows = CMatrix::from_fn(dim_a, d, |r, j| bs2[(rows[r], j)]);
    Ok(&u_rows * matrix * u_rows.adjoint())
}

/// Second beam splitter, projection onto the detector outcome, trace over
/// the photon modes, and renormalization.
pub fn apply_bs2_and_detect(rho: &DensityOperator, detector: Detector) -> Result<Detection> {
    let block = detect_block(rho.layout(), rho.matrix(), detector)?;
    normalize_detection(block, detector)
}

pub(crate) fn normalize_detection(block: CMatrix, detector: Detector) -> Result<Detection> {
    let probability = block.trace().re;
    if !(probability >= MIN_DETECTION_PROBABILITY) {
        return Err(Error::ZeroProbability { probability });
    }
    let layout = ModeLayout::single(ModeLabel::A, block.nrows())?;
    let hermitian = (&block + block.adjoint()).scale(0.5 / probability);
    Ok(Detection {
        rho: DensityOperator::new(layout, hermitian)?,
        probability,
        detector,
    })
}
