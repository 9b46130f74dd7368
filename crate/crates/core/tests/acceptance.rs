//! Exit criteria for the simulation stack. Each criterion prints one
//! `PASS`/`FAIL` line; the binary exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use noneq_cat::bath::{build_kernel, BathLabel, BathMeasure, BathSpec, Regime, SpectralDensity};
use noneq_cat::dyson::{
    reduced_cat_state, second_order_propagate, CouplingSpec, ModeFrequencies, SpectralMemory,
};
use noneq_cat::fock::{DensityOperator, ModeLabel, ModeLayout};
use noneq_cat::optics::{closed_pipeline_state, Detector, PipelineConfig};
use noneq_cat::oracle::{gap_exponents, OracleOptions, OracleScenario};
use noneq_cat::phase_space::{
    analytic, momentum_marginal, negativity_volume, wigner_from_parity, wigner_from_weyl,
    wigner_with_cross, GridSpec,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const J0: f64 = 0.1;
const DELTA: f64 = 0.01;
const KAPPA_HOT: f64 = 0.45;
const KAPPA_COLD: f64 = 0.9;
const LAMBDA_COLD: f64 = 2.0;
const KERR_PHASE: f64 = PI;
const ALPHA_ABS: f64 = 2.0;
const OHMICITIES: [f64; 3] = [0.5, 1.0, 2.0];
const THETAS: [f64; 2] = [PI, PI / 4.0];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Check = fn() -> Verdict;

fn alpha(abs: f64) -> Complex64 {
    Complex64::new(0.0, abs)
}

fn baths(j0: f64, s: f64, kappa_hot: f64, kappa_cold: f64) -> (BathSpec, BathSpec) {
    let hot = BathSpec::new(kappa_hot, SpectralDensity::with_exponent(j0, s, 1.0).unwrap(), BathLabel::Hot).unwrap();
    let cold =
        BathSpec::new(kappa_cold, SpectralDensity::with_exponent(j0, s, LAMBDA_COLD).unwrap(), BathLabel::Cold).unwrap();
    (hot, cold)
}

fn memory(j0: f64, s: f64, kappas: (f64, f64), regime: Regime) -> SpectralMemory {
    let (hot, cold) = baths(j0, s, kappas.0, kappas.1);
    SpectralMemory::for_regime(&hot, &cold, regime, DELTA).unwrap()
}

fn closed_system_cat() -> Verdict {
    let mut worst = 0.0f64;
    let mut origin_error = 0.0f64;
    let mut slowest = Duration::ZERO;
    for abs in [1.0, 1.5, 2.0] {
        for (detector, even) in [(Detector::D1, true), (Detector::D2, false)] {
            let start = Instant::now();
            let config = PipelineConfig::new(alpha(abs), PI, KERR_PHASE, detector).unwrap();
            let memory = memory(0.0, 1.0, (KAPPA_HOT, KAPPA_COLD), Regime::Full);
            let cat = reduced_cat_state(&config, &CouplingSpec::standard(1.0).unwrap(), &ModeFrequencies::uniform(DELTA), &memory, 1.0)
                .unwrap();
            let grid = wigner_from_parity(cat.rho(), &GridSpec::for_alpha(abs)).unwrap();
            for (ix, x) in grid.x_axis.iter().enumerate() {
                for (ip, p) in grid.p_axis.iter().enumerate() {
                    let exact = analytic::cat_wigner(alpha(abs), even, Complex64::new(*x, *p));
                    worst = worst.max((grid.values[(ix, ip)] - exact).abs());
                }
            }
            let centre = grid.values[(grid.x_axis.len() / 2, grid.p_axis.len() / 2)];
            let expected = if even { 2.0 / PI } else { -2.0 / PI };
            origin_error = origin_error.max((centre - expected).abs());
            slowest = slowest.max(start.elapsed());
        }
    }
    Verdict::new(
        worst < 1e-6 && origin_error < 1e-6 && slowest < Duration::from_secs(10),
        format!("max |W − W_exact| = {worst:.2e}, max |W(0) ∓ 2/π| = {origin_error:.2e}, slowest case {slowest:.2?}"),
    )
}

fn random_low_rank(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DensityOperator {
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for _ in 0..rank {
        // Amplitudes decay with n so the state sits well inside the grid.
        let v = DVector::from_fn(dim, |n, _| {
            let scale = (-0.15 * n as f64).exp();
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale
        });
        let w = rng.random::<f64>() + 0.1;
        m += (&v * v.adjoint()).scale(w);
    }
    let tr = m.trace().re;
    DensityOperator::new(ModeLayout::single(ModeLabel::A, dim).unwrap(), m.unscale(tr)).unwrap()
}

fn route_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases: Vec<(String, DensityOperator, GridSpec)> = (0..5)
        .map(|k| {
            let rank = 1 + k % 3;
            (format!("random rank {rank}"), random_low_rank(&mut rng, 12, rank), GridSpec::square(6.0, 121))
        })
        .collect();
    for detector in [Detector::D1, Detector::D2] {
        let config = PipelineConfig::new(alpha(ALPHA_ABS), PI, KERR_PHASE, detector).unwrap();
        let layout = config.default_layout().unwrap();
        let psi = closed_pipeline_state(&config, &layout).unwrap();
        let detection = noneq_cat::optics::apply_bs2_and_detect(&psi.to_density(), detector).unwrap();
        cases.push((format!("cat {detector}"), detection.rho, GridSpec::for_alpha(ALPHA_ABS)));
    }
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (name, rho, spec) in &cases {
        let parity = wigner_from_parity(rho, spec);
        let weyl = wigner_from_weyl(rho, spec);
        match (parity, weyl) {
            (Ok(a), Ok(b)) => worst = worst.max(a.max_abs_difference(&b)),
            (a, b) => failures.push(format!("{name}: {:?} {:?}", a.err(), b.err())),
        }
    }
    let elapsed = start.elapsed();
    Verdict::new(
        failures.is_empty() && worst < 1e-6 && elapsed < Duration::from_secs(60),
        format!("{} states, max |ΔW| = {worst:.2e}, {elapsed:.2?}{}", cases.len(), failures.join("; ")),
    )
}

fn kernel_correctness() -> Verdict {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    // χ(0) = J0 λ² Γ(2) for the Ohmic zero-temperature bath.
    for lambda in [1.0, 2.0] {
        let bath = BathSpec::new(f64::INFINITY, SpectralDensity::with_exponent(J0, 1.0, lambda).unwrap(), BathLabel::Hot)
            .unwrap();
        let chi0 = noneq_cat::bath::correlation_function(&bath, 0.0).unwrap();
        let exact = J0 * lambda * lambda;
        let rel = (chi0 - exact).norm() / exact;
        pass &= rel < 1e-6;
        notes.push(format!("χ(0) rel err {rel:.1e} (λ={lambda})"));
    }

    // Direct quadrature at ±τ with identical panels.
    let (hot, _) = baths(J0, 1.0, KAPPA_HOT, KAPPA_COLD);
    let measure = BathMeasure::full(hot);
    let kernel = build_kernel(&hot, 20.0, 801).unwrap();
    let mut asym = 0.0f64;
    for tau in [0.3, 1.0, 2.5, 7.0] {
        let step = PI / tau;
        let breaks: Vec<f64> = (1..(hot.density.omega_max() / step).ceil() as usize).map(|k| k as f64 * step).collect();
        let chi = |sign: f64| {
            measure
                .integrate(
                    |w, n| {
                        let e = Complex64::from_polar(1.0, sign * w * tau);
                        e * n + e.conj() * (n + 1.0)
                    },
                    &breaks,
                    1e-10,
                )
                .unwrap()
        };
        asym = asym.max((chi(-1.0) - chi(1.0).conj()).norm());
        asym = asym.max((kernel.value_at(-tau).unwrap() - kernel.value_at(tau).unwrap().conj()).norm());
    }
    pass &= asym < 1e-12;
    notes.push(format!("max |χ(−τ) − χ(τ)*| = {asym:.1e}"));

    // coth(κω) ≈ 1/(κω): Re χ(τ) ≈ (J0/κ) λ/(1 + λ²τ²) for the Ohmic bath.
    let mut worst_high_t = 0.0f64;
    for kappa in [0.05, 0.02] {
        let bath = BathSpec::new(kappa, SpectralDensity::with_exponent(J0, 1.0, 1.0).unwrap(), BathLabel::Hot).unwrap();
        for tau in [0.0, 0.5, 1.0, 2.0] {
            let chi = noneq_cat::bath::correlation_function(&bath, tau).unwrap();
            let approx = J0 / kappa / (1.0 + tau * tau);
            worst_high_t = worst_high_t.max((chi.re - approx).abs() / approx);
        }
    }
    pass &= worst_high_t < 0.02;
    notes.push(format!("high-T rel dev {worst_high_t:.2e}"));

    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(5);
    Verdict::new(pass, format!("{}, {elapsed:.2?}", notes.join(", ")))
}

fn propagator_contract() -> Verdict {
    let start = Instant::now();
    let mut worst_trace = 0.0f64;
    let mut worst_herm = 0.0f64;
    let mut points = 0;
    for s in OHMICITIES {
        for kappas in [(0.9, 0.9), (KAPPA_HOT, KAPPA_COLD)] {
            for regime in [Regime::Resonance { half_width: noneq_cat::bath::DEFAULT_BAND_HALF_WIDTH }, Regime::HighFrequency] {
                let memory = memory(J0, s, kappas, regime);
                let freqs = ModeFrequencies::for_regime(DELTA, regime);
                for theta in THETAS {
                    let config = PipelineConfig::new(alpha(ALPHA_ABS), theta, KERR_PHASE, Detector::D1).unwrap();
                    let layout = config.default_layout().unwrap();
                    let rho0 = closed_pipeline_state(&config, &layout).unwrap().to_density();
                    for eps in [1.0, 10.0, 100.0] {
                        let out = second_order_propagate(&rho0, &CouplingSpec::standard(1.0).unwrap(), &freqs, &memory, eps)
                            .unwrap();
                        worst_trace = worst_trace.max(out.trace_defect);
                        worst_herm = worst_herm.max(out.hermiticity_defect);
                        points += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst_trace < 1e-10 && worst_herm < 1e-10 && elapsed < Duration::from_secs(600),
        format!("{points} points, max |tr ρ − 1| = {worst_trace:.2e}, max hermiticity defect = {worst_herm:.2e}, {elapsed:.2?}"),
    )
}

fn oracle_scaling() -> Verdict {
    let start = Instant::now();
    let scenario = OracleScenario::default();
    let options = OracleOptions::default();
    let rows: Vec<_> = [1e-2, 5e-3, 2.5e-3].iter().map(|&j0| scenario.compare(j0, 1.0, &options).unwrap()).collect();
    let exponents = gap_exponents(&rows);
    let elapsed = start.elapsed();
    let gaps: Vec<String> = rows.iter().map(|r| format!("{:.3e}", r.frob_distance)).collect();
    Verdict::new(
        exponents.iter().all(|e| (1.7..=2.3).contains(e)) && elapsed < Duration::from_secs(300),
        format!("gaps [{}], exponents {:.3?}, {elapsed:.2?}", gaps.join(", "), exponents),
    )
}

fn cat_negativity(s: f64, eps: f64) -> Result<f64, String> {
    let config = PipelineConfig::new(alpha(ALPHA_ABS), PI, KERR_PHASE, Detector::D1).map_err(|e| e.to_string())?;
    let memory = memory(J0, s, (KAPPA_HOT, KAPPA_COLD), Regime::Full);
    let cat = reduced_cat_state(&config, &CouplingSpec::standard(1.0).unwrap(), &ModeFrequencies::uniform(DELTA), &memory, eps)
        .map_err(|e| e.to_string())?;
    let grid = wigner_from_parity(cat.rho(), &GridSpec::for_alpha(ALPHA_ABS)).map_err(|e| e.to_string())?;
    Ok(negativity_volume(&grid))
}

fn survival() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    for s in OHMICITIES {
        let values: Vec<Result<f64, String>> = [1.0, 10.0, 1000.0].iter().map(|&eps| cat_negativity(s, eps)).collect();
        let ok = match (&values[0], &values[1], &values[2]) {
            (Ok(n1), Ok(n10), Ok(n1000)) => *n1 > 0.0 && *n10 > 0.0 && *n1000 > 0.0 && *n1000 > 0.1 * n1,
            _ => false,
        };
        pass &= ok;
        let shown: Vec<String> = values
            .iter()
            .map(|v| match v {
                Ok(n) => format!("{n:.3e}"),
                Err(e) => format!("error ({e})"),
            })
            .collect();
        notes.push(format!("s={s}: [{}]", shown.join(", ")));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(900);
    Verdict::new(pass, format!("negativity at ε = 1, 10, 1000: {}; {elapsed:.2?}", notes.join("; ")))
}

fn marginal_oscillations() -> Verdict {
    let start = Instant::now();
    let half_width = ALPHA_ABS + 2.0;
    let mut failures = Vec::new();
    let mut counts = Vec::new();
    for s in OHMICITIES {
        for regime in [Regime::Resonance { half_width: noneq_cat::bath::DEFAULT_BAND_HALF_WIDTH }, Regime::HighFrequency] {
            let memory = memory(J0, s, (KAPPA_HOT, KAPPA_COLD), regime);
            for theta in THETAS {
                let label = format!("s={s} {regime} θ={theta:.3}");
                let config = PipelineConfig::new(alpha(ALPHA_ABS), theta, KERR_PHASE, Detector::D1).unwrap();
                let result = reduced_cat_state(
                    &config,
                    &CouplingSpec::standard(1.0).unwrap(),
                    &ModeFrequencies::for_regime(DELTA, regime),
                    &memory,
                    100.0,
                )
                .and_then(|cat| wigner_with_cross(cat.rho(), &cat.cross, &GridSpec::for_alpha(ALPHA_ABS)));
                match result {
                    Ok(grid) => {
                        let marginal = momentum_marginal(&grid);
                        let im: Vec<f64> = marginal.cross.iter().map(|c| c.im).collect();
                        let floor = 1e-12 * im.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                        let changes = marginal.sign_changes(&im, half_width, floor);
                        counts.push(format!("{label}: {changes}"));
                        if changes < 2 {
                            failures.push(format!("{label}: {changes} sign changes"));
                        }
                    }
                    Err(e) => failures.push(format!("{label}: {e}")),
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(900);
    let detail = if failures.is_empty() {
        format!("sign changes [{}], {elapsed:.2?}", counts.join(", "))
    } else {
        format!("{} of 12 combinations failed [{}], {elapsed:.2?}", failures.len(), failures.join("; "))
    };
    Verdict::new(pass, detail)
}

fn spectral_slope() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut fitted = Vec::new();
    for s in OHMICITIES {
        let density = SpectralDensity::with_exponent(J0, s, 1.0).unwrap();
        let points: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let w = 1e-4 * 10f64.powf(2.0 * k as f64 / 39.0);
                (w.ln(), density.value(w).unwrap().ln())
            })
            .collect();
        let n = points.len() as f64;
        let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
        let cov: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        let slope = cov / var;
        worst = worst.max((slope - s).abs() / s);
        fitted.push(format!("{slope:.5}"));
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst < 0.01 && elapsed < Duration::from_secs(1),
        format!("fitted slopes [{}] for s = {OHMICITIES:?}, max rel err {worst:.2e}, {elapsed:.2?}", fitted.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("closed-system cat Wigner", closed_system_cat),
        ("phase-space route equivalence", route_equivalence),
        ("correlation kernel correctness", kernel_correctness),
        ("propagator trace and hermiticity", propagator_contract),
        ("oracle coupling scaling", oracle_scaling),
        ("cat survival at long times", survival),
        ("cross-term marginal oscillations", marginal_oscillations),
        ("spectral exponent recovery", spectral_slope),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let verdict = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Verdict::new(false, "panicked"));
        println!("{} {name}: {}", if verdict.pass { "PASS" } else { "FAIL" }, verdict.detail);
        if !verdict.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
