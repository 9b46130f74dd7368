use std::path::{Path, PathBuf};

use noneq_cat::oracle::{gap_exponents, write_report_csv, OracleReportRow};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::run::create;

pub const ORACLE_CSV: &str = "oracle_report.csv";

/// Accepted range for the log-2 slope of the gap between successive `J0`.
pub const EXPONENT_RANGE: (f64, f64) = (1.7, 2.3);

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub dir: PathBuf,
    pub rows: Vec<OracleReportRow>,
    pub exponents: Vec<f64>,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.exponents.iter().all(|e| (EXPONENT_RANGE.0..=EXPONENT_RANGE.1).contains(e))
    }
}

/// Exact versus second-order evolution for each configured `J0`; writes
/// `oracle_report.csv` into `root/<hash>`.
pub fn oracle_check(config: &ExperimentConfig, root: &Path) -> Result<OracleCheck> {
    let config = config.resolve()?;
    let scenario = config.oracle_scenario();
    let options = config.oracle_options();
    let rows = config
        .oracle
        .j0
        .iter()
        .map(|&j0| scenario.compare(j0, config.oracle.epsilon, &options))
        .collect::<noneq_cat::Result<Vec<_>>>()?;
    let dir = root.join(config.hash());
    std::fs::create_dir_all(&dir)?;
    write_report_csv(create(&dir.join(ORACLE_CSV))?, &rows)?;
    let exponents = gap_exponents(&rows);
    Ok(OracleCheck { dir, rows, exponents })
}
