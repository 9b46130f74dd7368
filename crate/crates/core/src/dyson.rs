//! Second-order interaction-picture evolution under the two baths.
//!
//! Each coupling entry ties `X_m(t) = a_m e^{−iω_m t} + a_m† e^{iω_m t}` to a
//! bath. For entries `j, k` on the same bath the state moves by
//!
//! ```text
//! r_j r_k ∫₀^ε dt₁ ∫₀^{t₁} dt₂ χ(t₁ − t₂) [X_k(t₂) ρ X_j(t₁) − X_j(t₁) X_k(t₂) ρ] + h.c.
//! ```
//!
//! Writing `X(t) = Σ_σ A^σ e^{iσωt}` with `A^+ = a†`, `A^− = a`, every term
//! reduces to an operator product times a memory integral
//!
//! ```text
//! I(a, b) = ∫₀^ε dt₁ ∫₀^{t₁} dt₂ χ(t₁ − t₂) e^{i a t₁} e^{i b t₂}.
//! ```
//!
//! The map is applied linearly, so it also propagates the non-Hermitian
//! branch blocks `|ψ_s⟩⟨ψ_t|` used to isolate the cat's cross term. Each
//! term is trace-free, so the trace is preserved exactly.
//!
//! States are reported in the frame co-rotating with the free Hamiltonian.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;

use crate::bath::{BathLabel, BathMeasure, BathSpec, CorrelationKernel, Regime, QUADRATURE_REL_TOL};
use crate::error::{Error, Result};
use crate::fock::{CMatrix, DensityOperator, ModeLabel, ModeLayout, StateVector};
use crate::optics::{beam_splitter_unitary, closed_pipeline_state, detect_block_with, Detection, PipelineConfig};
use crate::quad::gauss_legendre;

/// Starting number of Gauss-Legendre nodes per time axis.
pub const DEFAULT_TIME_NODES: usize = 64;
/// Doubling stops once the result moves less than this in max norm.
pub const TIME_TOLERANCE: f64 = 1e-8;
pub const MAX_TIME_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingEntry {
    pub mode: ModeLabel,
    pub bath: BathLabel,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    entries: Vec<CouplingEntry>,
}

impl CouplingSpec {
    pub fn new(entries: Vec<CouplingEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !(e.strength >= 0.0) || !e.strength.is_finite()) {
            return Err(Error::Domain(format!("coupling strength must be finite and ≥ 0, got {e:?}")));
        }
        Ok(Self { entries })
    }

    /// `(a, hot, 1)`, `(b, hot, r_ab)`, `(c, cold, 1)`.
    pub fn standard(r_ab: f64) -> Result<Self> {
        Self::new(vec![
            CouplingEntry { mode: ModeLabel::A, bath: BathLabel::Hot, strength: 1.0 },
            CouplingEntry { mode: ModeLabel::B, bath: BathLabel::Hot, strength: r_ab },
            CouplingEntry { mode: ModeLabel::C, bath: BathLabel::Cold, strength: 1.0 },
        ])
    }

    pub fn single(mode: ModeLabel, bath: BathLabel) -> Self {
        Self { entries: vec![CouplingEntry { mode, bath, strength: 1.0 }] }
    }

    pub fn entries(&self) -> &[CouplingEntry] {
        &self.entries
    }

    /// Exchanges the hot and cold labels of every entry.
    pub fn swapped(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| CouplingEntry { bath: e.bath.other(), ..*e })
            .collect();
        Self { entries }
    }

    /// Ordered pairs `(j, k)` of entries on the same bath, including `j = k`.
    fn pairs(&self) -> impl Iterator<Item = (&CouplingEntry, &CouplingEntry)> {
        self.entries
            .iter()
            .flat_map(move |j| self.entries.iter().map(move |k| (j, k)))
            .filter(|(j, k)| j.bath == k.bath)
    }
}

/// Free rotation frequencies of the modes, in units of `λ_H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeFrequencies {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ModeFrequencies {
    /// Kerr mode and photon modes at the same frequency `δ`.
    pub fn uniform(delta: f64) -> Self {
        Self { a: delta, b: delta, c: delta }
    }

    /// The high-frequency regime drops the system frequencies.
    pub fn for_regime(delta: f64, regime: Regime) -> Self {
        match regime {
            Regime::HighFrequency => Self::uniform(0.0),
            _ => Self::uniform(delta),
        }
    }

    pub fn get(&self, mode: ModeLabel) -> f64 {
        match mode {
            ModeLabel::A => self.a,
            ModeLabel::B => self.b,
            ModeLabel::C => self.c,
        }
    }
}

/// `X(t) = a e^{−iωt} + a† e^{iωt}` for `mode`, embedded in `layout`.
pub fn interaction_picture_position(mode: ModeLabel, omega: f64, t: f64, layout: &ModeLayout) -> Result<CMatrix> {
    let lower = ShiftOp::lowering(layout, mode)?;
    let phase = Complex64::from_polar(1.0, -omega * t);
    let d = layout.dim();
    let mut x = CMatrix::zeros(d, d);
    for (j, entry) in lower.cols.iter().enumerate() {
        if let Some((r, w)) = *entry {
            x[(r, j)] += phase * w;
            x[(j, r)] += phase.conj() * w;
        }
    }
    Ok(x)
}

/// Real matrix with at most one nonzero per column and per row, such as a
/// ladder operator or a product of them.
#[derive(Debug, Clone)]
struct ShiftOp {
    cols: Vec<Option<(usize, f64)>>,
}

impl ShiftOp {
    fn lowering(layout: &ModeLayout, mode: ModeLabel) -> Result<Self> {
        let pos = layout.position(mode)?;
        let dims: Vec<usize> = layout.modes().iter().map(|&(_, d)| d).collect();
        let stride: usize = dims[pos + 1..].iter().product();
        let dim = dims[pos];
        let cols = (0..layout.dim())
            .map(|j| {
                let n = (j / stride) % dim;
                (n > 0).then(|| (j - stride, (n as f64).sqrt()))
            })
            .collect();
        Ok(Self { cols })
    }

    fn adjoint(&self) -> Self {
        let mut cols = vec![None; self.cols.len()];
        for (j, entry) in self.cols.iter().enumerate() {
            if let Some((r, w)) = *entry {
                cols[r] = Some((j, w));
            }
        }
        Self { cols }
    }

    /// `self · other`.
    fn compose(&self, other: &ShiftOp) -> Self {
        let cols = other
            .cols
            .iter()
            .map(|entry| entry.and_then(|(r, w)| self.cols[r].map(|(r2, w2)| (r2, w * w2))))
            .collect();
        Self { cols }
    }

    /// `acc += c · self · x`.
    fn left_into(&self, c: Complex64, x: &CMatrix, acc: &mut CMatrix) {
        for (j, entry) in self.cols.iter().enumerate() {
            if let Some((r, w)) = *entry {
                let cw = c * w;
                for col in 0..x.ncols() {
                    acc[(r, col)] += cw * x[(j, col)];
                }
            }
        }
    }

    /// `self · x`.
    fn left(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        self.left_into(Complex64::new(1.0, 0.0), x, &mut out);
        out
    }

    /// `acc += c · x · self`.
    fn right_into(&self, c: Complex64, x: &CMatrix, acc: &mut CMatrix) {
        for (j, entry) in self.cols.iter().enumerate() {
            if let Some((r, w)) = *entry {
                let cw = c * w;
                let mut dst = acc.column_mut(j);
                dst.zip_apply(&x.column(r), |a, b| *a += cw * b);
            }
        }
    }
}

/// The memory integrals `I(a, b)` of one bath pair.
pub trait MemoryIntegrals {
    fn memory_integral(&self, bath: BathLabel, a: f64, b: f64, epsilon: f64) -> Result<Complex64>;
}

/// Exact time integration against the bath's spectral measure:
/// `I(a, b) = ∫ dω J(ω) [N T(ω) + (N + 1) T(−ω)]` with
/// `T(ν) = ∫₀^ε dt₁ ∫₀^{t₁} dt₂ e^{iν(t₁−t₂)} e^{iat₁ + ibt₂}` in closed form.
#[derive(Debug, Clone)]
pub struct SpectralMemory {
    hot: BathMeasure,
    cold: BathMeasure,
    rel_tol: f64,
}

impl SpectralMemory {
    pub fn new(hot: BathMeasure, cold: BathMeasure) -> Self {
        Self { hot, cold, rel_tol: QUADRATURE_REL_TOL }
    }

    pub fn for_regime(hot: &BathSpec, cold: &BathSpec, regime: Regime, delta: f64) -> Result<Self> {
        Ok(Self::new(
            BathMeasure::windowed(*hot, regime.window(delta)?),
            BathMeasure::windowed(*cold, regime.window(delta)?),
        ))
    }

    pub fn measure(&self, bath: BathLabel) -> &BathMeasure {
        match bath {
            BathLabel::Hot => &self.hot,
            BathLabel::Cold => &self.cold,
        }
    }
}

/// `∫₀^ε e^{ixt} dt`.
fn phi(x: f64, eps: f64) -> Complex64 {
    let z = 0.5 * x * eps;
    let sinc = if z.abs() < 1e-8 { 1.0 - z * z / 6.0 } else { z.sin() / z };
    Complex64::from_polar(eps * sinc, z)
}

/// `T(ν)` for phases `a` (on `t₁`) and `b` (on `t₂`).
fn time_double_integral(a: f64, b: f64, nu: f64, eps: f64) -> Complex64 {
    let c = a + b;
    let y = b - nu;
    if (y * eps).abs() >= 1e-2 {
        return (phi(c, eps) - phi(c - y, eps)) / Complex64::new(0.0, y);
    }
    // T = ∫₀^ε e^{i(c − y/2)t} t sinc(yt/2) dt, smooth in y.
    let k = c - 0.5 * y;
    let n = (48 + (2.0 * (k * eps).abs()).ceil() as usize).min(8192).next_multiple_of(16);
    let rule = gauss_legendre(n);
    let half = 0.5 * eps;
    rule.iter()
        .map(|&(x, w)| {
            let t = half * (x + 1.0);
            let z = 0.5 * y * t;
            let sinc = if z.abs() < 1e-8 { 1.0 } else { z.sin() / z };
            Complex64::from_polar(w * half * t * sinc, k * t)
        })
        .sum()
}

/// Frequencies near `center` at which `T` varies on the scale `1/ε`.
fn resonance_breaks(centers: &[f64], eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for &center in centers {
        if center <= 0.0 {
            continue;
        }
        out.push(center);
        for k in -1..=24 {
            let d = 2f64.powi(k) / eps;
            out.push(center - d);
            out.push(center + d);
        }
    }
    out.retain(|w| *w > 0.0);
    out
}

impl MemoryIntegrals for SpectralMemory {
    fn memory_integral(&self, bath: BathLabel, a: f64, b: f64, epsilon: f64) -> Result<Complex64> {
        if epsilon == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let measure = self.measure(bath);
        let breaks = resonance_breaks(&[a.abs(), b.abs()], epsilon);
        measure.integrate(
            |w, n| time_double_integral(a, b, w, epsilon) * n + time_double_integral(a, b, -w, epsilon) * (n + 1.0),
            &breaks,
            self.rel_tol,
        )
    }
}

/// Tensor Gauss-Legendre in `(t₁, τ = t₁ − t₂)` against tabulated kernels.
#[derive(Debug)]
pub struct KernelMemory<'k> {
    hot: &'k CorrelationKernel,
    cold: &'k CorrelationKernel,
    nodes: usize,
    cache: std::sync::Mutex<HashMap<(BathLabel, u64), std::sync::Arc<Vec<(f64, f64, Complex64)>>>>,
}

impl<'k> KernelMemory<'k> {
    pub fn new(hot: &'k CorrelationKernel, cold: &'k CorrelationKernel, nodes: usize) -> Self {
        Self { hot, cold, nodes, cache: Default::default() }
    }

    /// `(t₁, τ, w · χ(τ))` for every node pair.
    fn samples(&self, bath: BathLabel, eps: f64) -> Result<std::sync::Arc<Vec<(f64, f64, Complex64)>>> {
        let key = (bath, eps.to_bits());
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let kernel = match bath {
            BathLabel::Hot => self.hot,
            BathLabel::Cold => self.cold,
        };
        if kernel.tau_max() < eps * (1.0 - 1e-12) {
            return Err(Error::KernelCoverage { available: kernel.tau_max(), required: eps });
        }
        let rule = gauss_legendre(self.nodes);
        let mut out = Vec::with_capacity(rule.len() * rule.len());
        for &(x, wx) in rule.iter() {
            let t1 = 0.5 * eps * (x + 1.0);
            for &(y, wy) in rule.iter() {
                let tau = 0.5 * t1 * (y + 1.0);
                let w = 0.25 * eps * t1 * wx * wy;
                out.push((t1, tau, kernel.value_at(tau.min(kernel.tau_max()))? * w));
            }
        }
        let out = std::sync::Arc::new(out);
        self.cache.lock().expect("cache poisoned").insert(key, out.clone());
        Ok(out)
    }
}

impl MemoryIntegrals for KernelMemory<'_> {
    fn memory_integral(&self, bath: BathLabel, a: f64, b: f64, epsilon: f64) -> Result<Complex64> {
        if epsilon == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let samples = self.samples(bath, epsilon)?;
        // t₂ = t₁ − τ
        Ok(samples
            .iter()
            .map(|&(t1, tau, wchi)| wchi * Complex64::from_polar(1.0, (a + b) * t1 - b * tau))
            .sum())
    }
}

#[derive(Debug, Clone)]
struct Term {
    coeff: Complex64,
    p: ShiftOp,
    q: ShiftOp,
    pq: ShiftOp,
}

/// The linear map `X ↦ L(X) − X` for one evolution time.
#[derive(Debug, Clone)]
pub struct SecondOrderGenerator {
    layout: ModeLayout,
    terms: Vec<Term>,
}

impl SecondOrderGenerator {
    pub fn new(
        layout: &ModeLayout,
        couplings: &CouplingSpec,
        frequencies: &ModeFrequencies,
        memory: &dyn MemoryIntegrals,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Domain(format!("evolution time must be finite and ≥ 0, got {epsilon}")));
        }
        let mut integrals: HashMap<(BathLabel, u64, u64), Complex64> = HashMap::new();
        let mut terms = Vec::new();
        for (j, k) in couplings.pairs() {
            let r = j.strength * k.strength;
            if r == 0.0 {
                continue;
            }
            let lower_j = ShiftOp::lowering(layout, j.mode)?;
            let lower_k = ShiftOp::lowering(layout, k.mode)?;
            let (wj, wk) = (frequencies.get(j.mode), frequencies.get(k.mode));
            for sj in [1.0, -1.0] {
                for sk in [1.0, -1.0] {
                    let (a, b) = (sj * wj, sk * wk);
                    let key = (j.bath, a.to_bits(), b.to_bits());
                    let integral = match integrals.get(&key) {
                        Some(v) => *v,
                        None => {
                            let v = memory.memory_integral(j.bath, a, b, epsilon)?;
                            integrals.insert(key, v);
                            v
                        }
                    };
                    let p = if sj > 0.0 { lower_j.adjoint() } else { lower_j.clone() };
                    let q = if sk > 0.0 { lower_k.adjoint() } else { lower_k.clone() };
                    let pq = p.compose(&q);
                    terms.push(Term { coeff: integral * r, p, q, pq });
                }
            }
        }
        Ok(Self { layout: layout.clone(), terms })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    /// `Σ I [Q X P − P Q X] + I* [P† X Q† − X Q† P†]`.
    pub fn correction(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        for term in &self.terms {
            let c = term.coeff;
            let qx = term.q.left(x);
            term.p.right_into(c, &qx, &mut out);
            term.pq.left_into(-c, x, &mut out);
            let pdx = term.p.adjoint().left(x);
            term.q.adjoint().right_into(c.conj(), &pdx, &mut out);
            term.pq.adjoint().right_into(-c.conj(), x, &mut out);
        }
        out
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        x + self.correction(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub rho: DensityOperator,
    pub trace_defect: f64,
    pub hermiticity_defect: f64,
    /// Largest entry of the second-order correction.
    pub order_estimate: f64,
    /// Most negative eigenvalue; second order does not preserve positivity.
    pub min_eigenvalue: f64,
}

impl EvolutionResult {
    fn from_parts(rho0: &CMatrix, correction: &CMatrix, layout: &ModeLayout) -> Result<Self> {
        let rho = DensityOperator::new_unchecked(layout.clone(), rho0 + correction)?;
        let trace = rho.trace();
        Ok(Self {
            trace_defect: (trace - Complex64::new(1.0, 0.0)).norm(),
            hermiticity_defect: rho.hermiticity_defect(),
            order_estimate: correction.camax(),
            min_eigenvalue: rho.min_eigenvalue(),
            rho,
        })
    }
}

fn check_trace(rho0: &DensityOperator) -> Result<()> {
    let t = rho0.trace();
    if (t - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::Domain(format!("initial state must have unit trace, got {t}")));
    }
    Ok(())
}

/// Second-order evolution with a given set of memory integrals.
pub fn second_order_propagate(
    rho0: &DensityOperator,
    couplings: &CouplingSpec,
    frequencies: &ModeFrequencies,
    memory: &dyn MemoryIntegrals,
    epsilon: f64,
) -> Result<EvolutionResult> {
    check_trace(rho0)?;
    let generator = SecondOrderGenerator::new(rho0.layout(), couplings, frequencies, memory, epsilon)?;
    let correction = generator.correction(rho0.matrix());
    EvolutionResult::from_parts(rho0.matrix(), &correction, rho0.layout())
}

/// Evaluates `f` with `n, 2n, 4n, …` time nodes until two successive
/// results differ by less than [`TIME_TOLERANCE`].
fn converge_in_nodes<T>(
    n_time_nodes: usize,
    mut f: impl FnMut(usize) -> Result<T>,
    distance: impl Fn(&T, &T) -> f64,
) -> Result<(T, usize)> {
    let mut n = n_time_nodes.max(2);
    let mut prev = f(n)?;
    loop {
        let next_n = n * 2;
        let next = f(next_n)?;
        let change = distance(&prev, &next);
        if change < TIME_TOLERANCE {
            return Ok((next, next_n));
        }
        if next_n >= MAX_TIME_NODES {
            return Err(Error::Convergence { change, nodes: next_n });
        }
        prev = next;
        n = next_n;
    }
}

/// Second-order evolution through tabulated kernels and tensor
/// Gauss-Legendre time quadrature, doubling the nodes until converged.
pub fn propagate_with_kernels(
    rho0: &DensityOperator,
    couplings: &CouplingSpec,
    frequencies: &ModeFrequencies,
    hot: &CorrelationKernel,
    cold: &CorrelationKernel,
    epsilon: f64,
    n_time_nodes: usize,
) -> Result<EvolutionResult> {
    check_trace(rho0)?;
    let (correction, _) = converge_in_nodes(
        n_time_nodes,
        |n| {
            let memory = KernelMemory::new(hot, cold, n);
            let generator = SecondOrderGenerator::new(rho0.layout(), couplings, frequencies, &memory, epsilon)?;
            Ok(generator.correction(rho0.matrix()))
        },
        |a, b| (a - b).camax(),
    )?;
    EvolutionResult::from_parts(rho0.matrix(), &correction, rho0.layout())
}

/// Cat state of mode `a` after bath evolution, the second beam splitter and
/// a detector click.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCat {
    pub detection: Detection,
    /// Coherence between the two cat components, `C / p`, before adding its
    /// adjoint; `ρ = P/p + cross + cross†`.
    pub cross: CMatrix,
    pub epsilon: f64,
    /// Diagnostics of the full `(a, b, c)` state before the beam splitter.
    pub evolution: EvolutionResult,
}

impl ReducedCat {
    pub fn rho(&self) -> &DensityOperator {
        &self.detection.rho
    }

    pub fn probability(&self) -> f64 {
        self.detection.probability
    }

    /// CSV with columns `row, col, re, im`.
    pub fn write_rho_csv<W: Write>(&self, out: W) -> Result<()> {
        let m = self.rho().matrix();
        let rows = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| [r as f64, c as f64, m[(r, c)].re, m[(r, c)].im]);
        let mut writer = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        writer.write_record(["row", "col", "re", "im"]).map_err(io)?;
        for [r, c, re, im] in rows {
            writer
                .write_record([
                    (r as usize).to_string(),
                    (c as usize).to_string(),
                    crate::table::format_float(re),
                    crate::table::format_float(im),
                ])
                .map_err(io)?;
        }
        writer.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Splits the one-photon pipeline state by the arm holding the photon.
fn photon_branches(psi: &StateVector) -> Result<[StateVector; 2]> {
    let layout = psi.layout();
    let pb = layout.position(ModeLabel::B)?;
    let pc = layout.position(ModeLabel::C)?;
    let mut in_b = psi.amplitudes().clone();
    let mut in_c = psi.amplitudes().clone();
    for i in 0..layout.dim() {
        let occ = layout.occupations(i);
        if !(occ[pb] == 1 && occ[pc] == 0) {
            in_b[i] = Complex64::new(0.0, 0.0);
        }
        if !(occ[pb] == 0 && occ[pc] == 1) {
            in_c[i] = Complex64::new(0.0, 0.0);
        }
    }
    Ok([StateVector::new(layout.clone(), in_b)?, StateVector::new(layout.clone(), in_c)?])
}

fn outer(u: &StateVector, v: &StateVector) -> CMatrix {
    u.amplitudes() * v.amplitudes().adjoint()
}

fn reduce_with_generator(
    config: &PipelineConfig,
    generator: &SecondOrderGenerator,
    epsilon: f64,
) -> Result<ReducedCat> {
    let layout = generator.layout().clone();
    let psi = closed_pipeline_state(config, &layout)?;
    let [u, v] = photon_branches(&psi)?;
    let blocks = [outer(&u, &u), outer(&v, &v), outer(&u, &v)];
    let evolved: Vec<CMatrix> = blocks.iter().map(|b| generator.apply(b)).collect();

    let rho0 = &blocks[0] + &blocks[1] + &blocks[2] + blocks[2].adjoint();
    let rho = &evolved[0] + &evolved[1] + &evolved[2] + evolved[2].adjoint();
    let evolution = EvolutionResult::from_parts(&rho0, &(&rho - &rho0), &layout)?;

    let bs2 = beam_splitter_unitary(&layout, ModeLabel::B, ModeLabel::C)?;
    let populations = detect_block_with(&layout, &bs2, &(&evolved[0] + &evolved[1]), config.detector)?;
    let coherence = detect_block_with(&layout, &bs2, &evolved[2], config.detector)?;
    let block = &populations + &coherence + coherence.adjoint();
    let detection = crate::optics::normalize_detection(block, config.detector)?;
    let cross = coherence.scale(1.0 / detection.probability);
    Ok(ReducedCat { detection, cross, epsilon, evolution })
}

/// Closed pipeline, bath evolution over `[0, ε]`, second beam splitter and
/// detection.
pub fn reduced_cat_state(
    config: &PipelineConfig,
    couplings: &CouplingSpec,
    frequencies: &ModeFrequencies,
    memory: &dyn MemoryIntegrals,
    epsilon: f64,
) -> Result<ReducedCat> {
    let layout = config.default_layout()?;
    let generator = SecondOrderGenerator::new(&layout, couplings, frequencies, memory, epsilon)?;
    reduce_with_generator(config, &generator, epsilon)
}

/// [`reduced_cat_state`] through tabulated kernels with node doubling.
pub fn reduced_cat_state_with_kernels(
    config: &PipelineConfig,
    couplings: &CouplingSpec,
    frequencies: &ModeFrequencies,
    hot: &CorrelationKernel,
    cold: &CorrelationKernel,
    epsilon: f64,
    n_time_nodes: usize,
) -> Result<ReducedCat> {
    let layout = config.default_layout()?;
    let (cat, _) = converge_in_nodes(
        n_time_nodes,
        |n| {
            let memory = KernelMemory::new(hot, cold, n);
            let generator = SecondOrderGenerator::new(&layout, couplings, frequencies, &memory, epsilon)?;
            reduce_with_generator(config, &generator, epsilon)
        },
        |a: &ReducedCat, b: &ReducedCat| {
            (a.rho().matrix() - b.rho().matrix()).camax().max((&a.cross - &b.cross).camax())
        },
    )?;
    Ok(cat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{build_kernel, SpectralDensity};
    use crate::fock::coherent_state;
    use crate::optics::{apply_bs2_and_detect, Detector};
    use std::f64::consts::PI;

    fn bath(j0: f64, kappa: f64, lambda: f64, label: BathLabel) -> BathSpec {
        BathSpec::new(kappa, SpectralDensity::with_exponent(j0, 1.0, lambda).unwrap(), label).unwrap()
    }

    fn spectral(j0: f64) -> SpectralMemory {
        SpectralMemory::new(
            BathMeasure::full(bath(j0, 0.45, 1.0, BathLabel::Hot)),
            BathMeasure::full(bath(j0, 0.9, 2.0, BathLabel::Cold)),
        )
    }

    fn cat_config(theta: f64, detector: Detector) -> PipelineConfig {
        PipelineConfig::new(Complex64::new(0.0, 1.0), theta, PI, detector).unwrap()
    }

    #[test]
    fn position_operator_at_zero_and_hermitian() {
        let layout = ModeLayout::abc(6, 3, 3).unwrap();
        let (a, ad) = crate::fock::ladder_operators(6);
        let x0 = crate::fock::embed(&(a + ad), ModeLabel::A, &layout).unwrap();
        let x = interaction_picture_position(ModeLabel::A, 0.7, 0.0, &layout).unwrap();
        assert!((&x - &x0).camax() < 1e-15);
        let xt = interaction_picture_position(ModeLabel::B, 0.7, 2.3, &layout).unwrap();
        assert!((&xt - xt.adjoint()).camax() < 1e-15);
    }

    #[test]
    fn coherent_position_expectation() {
        let alpha = Complex64::from_polar(1.2, 0.4);
        let layout = ModeLayout::single(ModeLabel::A, 40).unwrap();
        let psi = coherent_state(alpha, 40).unwrap();
        let (omega, t) = (0.8, 1.7);
        let x = interaction_picture_position(ModeLabel::A, omega, t, &layout).unwrap();
        let ev = (psi.amplitudes().adjoint() * x * psi.amplitudes())[(0, 0)];
        let expected = 2.0 * alpha.norm() * (omega * t - alpha.arg()).cos();
        assert!((ev.re - expected).abs() < 1e-9 && ev.im.abs() < 1e-12);
    }

    #[test]
    fn closed_form_time_integral_matches_quadrature() {
        let eps = 3.0;
        for &(a, b, nu) in &[(0.0, 0.0, 0.0), (0.3, -0.2, 0.7), (1.0, 1.0, -1.0), (0.5, 0.2, 0.2 + 1e-4)] {
            let exact = time_double_integral(a, b, nu, eps);
            let rule = gauss_legendre(200);
            let mut sum = Complex64::new(0.0, 0.0);
            for &(x, wx) in rule.iter() {
                let t1 = 0.5 * eps * (x + 1.0);
                for &(y, wy) in rule.iter() {
                    let t2 = 0.5 * t1 * (y + 1.0);
                    sum += Complex64::from_polar(0.25 * eps * t1 * wx * wy, nu * (t1 - t2) + a * t1 + b * t2);
                }
            }
            assert!((exact - sum).norm() < 1e-11, "{a} {b} {nu}: {exact} vs {sum}");
        }
    }

    #[test]
    fn spectral_route_matches_kernel_route() {
        let hot = bath(0.1, 0.45, 1.0, BathLabel::Hot);
        let cold = bath(0.1, 0.9, 2.0, BathLabel::Cold);
        let spectral = SpectralMemory::new(BathMeasure::full(hot), BathMeasure::full(cold));
        for eps in [1.0, 4.0] {
            let kh = build_kernel(&hot, eps, 801).unwrap();
            let kc = build_kernel(&cold, eps, 801).unwrap();
            let gl = KernelMemory::new(&kh, &kc, 128);
            for (label, a, b) in [(BathLabel::Hot, 0.01, -0.01), (BathLabel::Cold, -0.5, 0.5), (BathLabel::Hot, 0.0, 0.0)] {
                let x = spectral.memory_integral(label, a, b, eps).unwrap();
                let y = gl.memory_integral(label, a, b, eps).unwrap();
                assert!((x - y).norm() < 1e-7 * x.norm().max(1e-3), "ε = {eps}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn zero_coupling_and_zero_time_leave_state_unchanged() {
        let config = cat_config(PI, Detector::D1);
        let layout = config.default_layout().unwrap();
        let rho0 = closed_pipeline_state(&config, &layout).unwrap().to_density();
        let couplings = CouplingSpec::standard(1.0).unwrap();
        let freqs = ModeFrequencies::uniform(0.01);
        let zero = spectral(0.0);
        let out = second_order_propagate(&rho0, &couplings, &freqs, &zero, 10.0).unwrap();
        assert_eq!(out.order_estimate, 0.0);
        let out = second_order_propagate(&rho0, &couplings, &freqs, &spectral(0.1), 0.0).unwrap();
        assert_eq!(out.rho.matrix(), rho0.matrix());
    }

    #[test]
    fn trace_and_hermiticity_are_preserved() {
        let config = cat_config(PI / 4.0, Detector::D2);
        let layout = config.default_layout().unwrap();
        let rho0 = closed_pipeline_state(&config, &layout).unwrap().to_density();
        let couplings = CouplingSpec::standard(1.0).unwrap();
        let out = second_order_propagate(&rho0, &couplings, &ModeFrequencies::uniform(0.01), &spectral(0.1), 10.0).unwrap();
        assert!(out.order_estimate > 1e-3);
        assert!(out.trace_defect < 1e-10, "{}", out.trace_defect);
        assert!(out.hermiticity_defect < 1e-10);
    }

    #[test]
    fn correction_is_linear_in_coupling() {
        let config = cat_config(PI, Detector::D1);
        let layout = config.default_layout().unwrap();
        let rho0 = closed_pipeline_state(&config, &layout).unwrap().to_density();
        let couplings = CouplingSpec::standard(1.0).unwrap();
        let freqs = ModeFrequencies::uniform(0.01);
        let full = second_order_propagate(&rho0, &couplings, &freqs, &spectral(0.1), 1.0).unwrap();
        let half = second_order_propagate(&rho0, &couplings, &freqs, &spectral(0.05), 1.0).unwrap();
        let d1 = (full.rho.matrix() - rho0.matrix()).norm();
        let d2 = (half.rho.matrix() - rho0.matrix()).norm();
        assert!((d1 / d2 - 2.0).abs() < 0.02, "{}", d1 / d2);
    }

    #[test]
    fn general_map_agrees_with_dense_products() {
        let layout = ModeLayout::abc(4, 3, 3).unwrap();
        let couplings = CouplingSpec::standard(0.7).unwrap();
        let freqs = ModeFrequencies { a: 0.3, b: 0.1, c: 0.2 };
        let memory = spectral(0.1);
        let gen = SecondOrderGenerator::new(&layout, &couplings, &freqs, &memory, 1.5).unwrap();
        let x = CMatrix::from_fn(layout.dim(), layout.dim(), |r, c| Complex64::new((r * 7 + c) as f64 % 5.0, (r + 3 * c) as f64 % 4.0));
        let dense = |op: &ShiftOp| {
            let mut m = CMatrix::zeros(layout.dim(), layout.dim());
            for (j, e) in op.cols.iter().enumerate() {
                if let Some((r, w)) = *e {
                    m[(r, j)] = Complex64::new(w, 0.0);
                }
            }
            m
        };
        let mut expected = CMatrix::zeros(layout.dim(), layout.dim());
        for t in &gen.terms {
            let (p, q) = (dense(&t.p), dense(&t.q));
            expected += (&q * &x * &p - &p * &q * &x).scale(1.0) * t.coeff;
            expected += (p.adjoint() * &x * q.adjoint() - &x * q.adjoint() * p.adjoint()) * t.coeff.conj();
        }
        assert!((gen.correction(&x) - expected).camax() < 1e-12);
    }

    #[test]
    fn decoupled_mode_b_is_untouched() {
        let config = cat_config(PI, Detector::D1);
        let layout = config.default_layout().unwrap();
        let rho0 = closed_pipeline_state(&config, &layout).unwrap().to_density();
        let couplings = CouplingSpec::standard(0.0).unwrap();
        let out = second_order_propagate(&rho0, &couplings, &ModeFrequencies::uniform(0.01), &spectral(0.1), 5.0).unwrap();
        let before = rho0.partial_trace(&[ModeLabel::B]).unwrap();
        let after = out.rho.partial_trace(&[ModeLabel::B]).unwrap();
        assert!((before.matrix() - after.matrix()).camax() < 1e-12);
    }

    #[test]
    fn zero_coupling_cat_is_closed_system_cat() {
        for detector in [Detector::D1, Detector::D2] {
            let config = cat_config(PI, detector);
            let layout = config.default_layout().unwrap();
            let closed = apply_bs2_and_detect(&closed_pipeline_state(&config, &layout).unwrap().to_density(), detector).unwrap();
            let cat = reduced_cat_state(&config, &CouplingSpec::standard(1.0).unwrap(), &ModeFrequencies::uniform(0.01), &spectral(0.0), 100.0).unwrap();
            assert!((cat.rho().matrix() - closed.rho.matrix()).camax() < 1e-13);
            assert!((cat.probability() - closed.probability).abs() < 1e-13);
            let rebuilt = (&cat.cross + cat.cross.adjoint()).camax();
            assert!(rebuilt > 0.1);
        }
    }

    #[test]
    fn kernel_coverage_is_checked() {
        let hot = bath(0.1, 0.45, 1.0, BathLabel::Hot);
        let kernel = build_kernel(&hot, 1.0, 11).unwrap();
        let memory = KernelMemory::new(&kernel, &kernel, 16);
        let err = memory.memory_integral(BathLabel::Hot, 0.0, 0.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::KernelCoverage { .. }));
    }

    #[test]
    fn kernel_route_converges_by_doubling() {
        let hot = bath(0.01, 0.45, 1.0, BathLabel::Hot);
        let cold = bath(0.01, 0.9, 2.0, BathLabel::Cold);
        let kh = build_kernel(&hot, 1.0, 401).unwrap();
        let kc = build_kernel(&cold, 1.0, 401).unwrap();
        let layout = ModeLayout::single(ModeLabel::A, 12).unwrap();
        let rho0 = coherent_state(Complex64::new(0.5, 0.0), 12).unwrap().to_density();
        let couplings = CouplingSpec::single(ModeLabel::A, BathLabel::Hot);
        let freqs = ModeFrequencies::uniform(0.3);
        let gl = propagate_with_kernels(&rho0, &couplings, &freqs, &kh, &kc, 1.0, 16).unwrap();
        let sp = second_order_propagate(&rho0, &couplings, &freqs, &spectral_pair(hot, cold), 1.0).unwrap();
        assert_eq!(gl.rho.layout(), &layout);
        assert!((gl.rho.matrix() - sp.rho.matrix()).camax() < 1e-7);
    }

    fn spectral_pair(hot: BathSpec, cold: BathSpec) -> SpectralMemory {
        SpectralMemory::new(BathMeasure::full(hot), BathMeasure::full(cold))
    }

    #[test]
    fn rho_csv_layout() {
        let config = cat_config(PI, Detector::D1);
        let cat = reduced_cat_state(&config, &CouplingSpec::standard(1.0).unwrap(), &ModeFrequencies::uniform(0.01), &spectral(0.0), 1.0).unwrap();
        let mut buf = Vec::new();
        cat.write_rho_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let dim = cat.rho().matrix().nrows();
        assert!(text.starts_with("row,col,re,im\n0,0,"));
        assert_eq!(text.lines().count(), 1 + dim * dim);
    }
}
