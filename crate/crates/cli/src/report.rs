//! Aggregation of finished runs into a plot-ready table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Command;
use crate::error::CliError;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::run::{read_summary, GiantCell, ThetaCell};

pub const REPORT_HEADER: &str =
    "lambda\ts\treplicates\tL1_mean\tL1_ci_low\tL1_ci_high\tL2_mean\tL2_ci_low\tL2_ci_high\tlambda_theta\tgap";

/// Run directories under `dir`: `dir` itself and its immediate
/// subdirectories, whichever hold a manifest.
fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut dirs = Vec::new();
    if dir.join(MANIFEST_FILE).is_file() {
        dirs.push(dir.to_owned());
    }
    let entries = fs::read_dir(dir).map_err(CliError::io(dir))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(MANIFEST_FILE).is_file())
        .collect();
    subdirs.sort();
    dirs.extend(subdirs);
    Ok(dirs)
}

fn na_or(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x}"))
}

/// One row per `(lambda, s)` of every giant run under `dir`, with the
/// `lambda * theta_hat` reference from any theta run at the same intensity.
/// Fails on an empty directory and on any missing, corrupt or mismatched
/// manifest.
pub fn emit_report(dir: &Path) -> Result<String, CliError> {
    let dirs = run_dirs(dir)?;
    if dirs.is_empty() {
        return Err(CliError::Corrupt {
            path: dir.to_owned(),
            reason: "no run manifests found".into(),
        });
    }
    let mut giant: Vec<GiantCell> = Vec::new();
    let mut theta: BTreeMap<u64, f64> = BTreeMap::new();
    for run in &dirs {
        let manifest = RunManifest::read(&run.join(MANIFEST_FILE))?;
        manifest.verify(run)?;
        match manifest.config.command {
            Command::Giant => giant.extend(read_summary::<GiantCell>(run)?.cells),
            Command::Theta => {
                for cell in read_summary::<ThetaCell>(run)?.cells {
                    theta.insert(cell.lambda.to_bits(), cell.lambda * cell.theta_hat.value);
                }
            }
            _ => {}
        }
    }
    giant.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.s.total_cmp(&b.s)));

    let mut table = String::from(REPORT_HEADER);
    table.push('\n');
    for cell in &giant {
        let reference = theta.get(&cell.lambda.to_bits()).copied();
        let l1_mean = cell.l1_mean;
        let ci = |e: Option<percolab_core::EstimateWithCI>| {
            (
                na_or(e.map(|e| e.value - e.half_width)),
                na_or(e.map(|e| e.value + e.half_width)),
            )
        };
        let (l1_lo, l1_hi) = ci(cell.l1);
        let (l2_lo, l2_hi) = ci(cell.l2);
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            cell.lambda,
            cell.s,
            cell.replicates,
            l1_mean,
            l1_lo,
            l1_hi,
            cell.l2_mean,
            l2_lo,
            l2_hi,
            na_or(reference),
            na_or(reference.map(|r| (l1_mean - r).abs())),
        );
    }
    Ok(table)
}
