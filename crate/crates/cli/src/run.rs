//! Single-point runs: reduced cat, phase-space tables and the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use noneq_cat::bath::{regime_kernel, BathSpec, CorrelationKernel};
use noneq_cat::dyson::{reduced_cat_state, reduced_cat_state_with_kernels, ReducedCat, SpectralMemory};
use noneq_cat::phase_space::{
    momentum_marginal, negativity_volume, wigner_from_weyl, wigner_with_cross, Marginal, WignerGrid,
};

use crate::config::{ExperimentConfig, Propagator, WignerRoute};
use crate::error::Result;

pub const MANIFEST: &str = "manifest.toml";
pub const WIGNER_CSV: &str = "wigner.csv";
pub const MARGINAL_CSV: &str = "marginal.csv";
pub const RHO_CSV: &str = "rho_cat.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const KERNEL_HOT_CSV: &str = "kernel_hot.csv";
pub const KERNEL_COLD_CSV: &str = "kernel_cold.csv";

/// Scalars recorded for every run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub hash: String,
    pub dir: PathBuf,
    pub detection_probability: f64,
    pub negativity: f64,
    pub normalization_residual: f64,
    pub min_wigner: f64,
    pub trace_defect: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    /// Sign changes of the imaginary cross-term marginal within `|x| ≤ |α| + 2`.
    pub cross_sign_changes: usize,
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Hot and cold kernels over the regime window, on the output grid.
pub fn kernels(config: &ExperimentConfig, tau_max: f64) -> Result<(CorrelationKernel, CorrelationKernel)> {
    let (hot, cold) = config.baths()?;
    let build = |bath: &BathSpec| {
        regime_kernel(bath, config.regime(), config.delta, tau_max, config.outputs.kernel_points)
    };
    Ok((build(&hot)?, build(&cold)?))
}

pub fn write_kernels(hot: &CorrelationKernel, cold: &CorrelationKernel, dir: &Path) -> Result<()> {
    hot.write_csv(create(&dir.join(KERNEL_HOT_CSV))?)?;
    cold.write_csv(create(&dir.join(KERNEL_COLD_CSV))?)?;
    Ok(())
}

pub fn reduced_cat(config: &ExperimentConfig) -> Result<ReducedCat> {
    let pipeline = config.pipeline()?;
    let couplings = config.couplings()?;
    let freqs = config.frequencies();
    let (hot, cold) = config.baths()?;
    let cat = match config.propagator {
        Propagator::Spectral => {
            let memory = SpectralMemory::for_regime(&hot, &cold, config.regime(), config.delta)?;
            reduced_cat_state(&pipeline, &couplings, &freqs, &memory, config.epsilon)?
        }
        Propagator::Kernel => {
            let (hot_k, cold_k) = kernels(config, config.epsilon.max(f64::MIN_POSITIVE))?;
            reduced_cat_state_with_kernels(
                &pipeline,
                &couplings,
                &freqs,
                &hot_k,
                &cold_k,
                config.epsilon,
                config.outputs.time_nodes,
            )?
        }
    };
    Ok(cat)
}

pub fn wigner(config: &ExperimentConfig, cat: &ReducedCat) -> Result<WignerGrid> {
    let spec = config.grid_spec();
    let mut grid = wigner_with_cross(cat.rho(), &cat.cross, &spec)?;
    if config.grid.route == WignerRoute::Weyl {
        let cross = grid.cross_values.take();
        grid = wigner_from_weyl(cat.rho(), &spec)?;
        grid.cross_values = cross;
    }
    grid.epsilon = Some(config.epsilon);
    grid.config_hash = Some(config.hash());
    Ok(grid)
}

fn summarize(config: &ExperimentConfig, dir: PathBuf, cat: &ReducedCat, grid: &WignerGrid, marginal: &Marginal) -> RunSummary {
    let im: Vec<f64> = marginal.cross.iter().map(|c| c.im).collect();
    let floor = 1e-12 * im.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    RunSummary {
        hash: config.hash(),
        dir,
        detection_probability: cat.probability(),
        negativity: negativity_volume(grid),
        normalization_residual: grid.normalization_residual,
        min_wigner: grid.min_value(),
        trace_defect: cat.evolution.trace_defect,
        hermiticity_defect: cat.evolution.hermiticity_defect,
        min_eigenvalue: cat.evolution.min_eigenvalue,
        cross_sign_changes: marginal.sign_changes(&im, config.pipeline.alpha_abs() + 2.0, floor),
    }
}

/// Resolved config followed by a `[results]` table.
pub fn write_manifest(config: &ExperimentConfig, summary: &RunSummary, files: &[&str], dir: &Path) -> Result<()> {
    let mut results = toml::Table::new();
    results.insert("config_hash".into(), summary.hash.clone().into());
    for (key, value) in [
        ("detection_probability", summary.detection_probability),
        ("negativity_volume", summary.negativity),
        ("normalization_residual", summary.normalization_residual),
        ("min_wigner", summary.min_wigner),
        ("trace_defect", summary.trace_defect),
        ("hermiticity_defect", summary.hermiticity_defect),
        ("min_eigenvalue", summary.min_eigenvalue),
    ] {
        results.insert(key.into(), value.into());
    }
    results.insert("cross_sign_changes".into(), (summary.cross_sign_changes as i64).into());
    results.insert(
        "files".into(),
        toml::Value::Array(files.iter().map(|f| toml::Value::from(*f)).collect()),
    );
    let mut out = create(&dir.join(MANIFEST))?;
    out.write_all(config.to_toml_string().as_bytes())?;
    let mut wrapper = toml::Table::new();
    wrapper.insert("results".into(), results.into());
    writeln!(out)?;
    out.write_all(toml::to_string(&wrapper).expect("results serialize").as_bytes())?;
    out.flush()?;
    Ok(())
}

fn write_summary(summary: &RunSummary, dir: &Path) -> Result<()> {
    noneq_cat::table::write_rows(
        create(&dir.join(SUMMARY_CSV))?,
        &["detection_probability", "negativity_volume", "normalization_residual", "min_wigner"],
        [[summary.detection_probability, summary.negativity, summary.normalization_residual, summary.min_wigner]],
    )?;
    Ok(())
}

/// Runs one resolved config and writes its bundle into `root/<hash>`.
pub fn run(config: &ExperimentConfig, root: &Path) -> Result<RunSummary> {
    let config = config.resolve()?;
    let cat = reduced_cat(&config)?;
    let grid = wigner(&config, &cat)?;
    let marginal = momentum_marginal(&grid);
    let kernels = if config.outputs.kernels { Some(kernels(&config, config.outputs.kernel_tau_max)?) } else { None };

    let dir = root.join(config.hash());
    std::fs::create_dir_all(&dir)?;
    let mut files = vec![MANIFEST, SUMMARY_CSV];
    if config.outputs.wigner {
        grid.write_csv(create(&dir.join(WIGNER_CSV))?)?;
        files.push(WIGNER_CSV);
    }
    if config.outputs.marginal {
        marginal.write_csv(create(&dir.join(MARGINAL_CSV))?)?;
        files.push(MARGINAL_CSV);
    }
    if config.outputs.rho {
        cat.write_rho_csv(create(&dir.join(RHO_CSV))?)?;
        files.push(RHO_CSV);
    }
    if let Some((hot, cold)) = &kernels {
        write_kernels(hot, cold, &dir)?;
        files.extend([KERNEL_HOT_CSV, KERNEL_COLD_CSV]);
    }
    let summary = summarize(&config, dir.clone(), &cat, &grid, &marginal);
    write_summary(&summary, &dir)?;
    write_manifest(&config, &summary, &files, &dir)?;
    Ok(summary)
}

/// Writes the kernel tables alone into `root/<hash>`.
pub fn run_kernels(config: &ExperimentConfig, root: &Path) -> Result<PathBuf> {
    let config = config.resolve()?;
    let (hot, cold) = kernels(&config, config.outputs.kernel_tau_max)?;
    let dir = root.join(config.hash());
    std::fs::create_dir_all(&dir)?;
    write_kernels(&hot, &cold, &dir)?;
    Ok(dir)
}
