//! CSV tables and SVG figures for SBC runs and recalibration results.
//!
//! Every figure is drawn from a [`Table`] that is also written next to it
//! as CSV, so re-parsing the CSV and redrawing reproduces the figure.

mod svg;
mod table;

pub use table::{format_real, ColumnKind, Table};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::recal::CoverageTable;
use crate::sbc::{ReplicationSet, SbcDiagnostics};
use svg::{auto_range, Canvas};

use ColumnKind::{Integer, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistogramRange {
    /// `[0, 1]`, for rank quantiles.
    Unit,
    /// From the smallest to the largest value.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub n_bins: usize,
    pub range: HistogramRange,
}

impl HistogramSpec {
    pub fn new(n_bins: usize, range: HistogramRange) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::invalid(format!(
                "histograms need at least 2 bins, got {n_bins}"
            )));
        }
        Ok(HistogramSpec { n_bins, range })
    }
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            n_bins: 20,
            range: HistogramRange::Unit,
        }
    }
}

/// Output directory plus the files written into it.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl ReportBundle {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(ReportBundle {
            dir,
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        if !self.files.contains(&path) {
            self.files.push(path.clone());
        }
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        self.write(name, &table.to_csv()?)
    }
}

/// Bin edges and counts. Values on the upper edge fall in the last bin.
pub fn histogram(values: &[f64], spec: &HistogramSpec) -> Result<Table> {
    if values.is_empty() {
        return Err(Error::EmptyInput("histogram values"));
    }
    let n = spec.n_bins;
    let (lo, hi) = match spec.range {
        HistogramRange::Unit => (0.0, 1.0),
        HistogramRange::Auto => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        }
    };
    let width = (hi - lo) / n as f64;
    let mut counts = vec![0usize; n];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            return Err(Error::invalid(format!(
                "value {v} outside histogram range [{lo}, {hi}]"
            )));
        }
        let b = (((v - lo) / width).floor() as usize).min(n - 1);
        counts[b] += 1;
    }
    let expected = values.len() as f64 / n as f64;
    let mut t = Table::new(&[
        ("bin_lo", Real),
        ("bin_hi", Real),
        ("count", Integer),
        ("uniform", Real),
    ]);
    for (b, c) in counts.into_iter().enumerate() {
        let edge = |i: usize| if i == n { hi } else { lo + i as f64 * width };
        t.push(vec![edge(b), edge(b + 1), c as f64, expected]);
    }
    Ok(t)
}

fn render_histogram(t: &Table, title: &str, xlabel: &str, reference: bool) -> String {
    let lo = t.rows.first().map_or(0.0, |r| r[0]);
    let hi = t.rows.last().map_or(1.0, |r| r[1]);
    let top = t.rows.iter().map(|r| r[2].max(r[3])).fold(0.0, f64::max);
    let mut c = Canvas::new(title, xlabel, "count", (lo, hi), (0.0, 1.1 * top.max(1.0)));
    for r in &t.rows {
        c.bar(r[0], r[1], r[2]);
    }
    if reference {
        if let Some(r) = t.rows.first() {
            c.hline(r[3]);
        }
    }
    c.finish()
}

/// Histogram of rank quantiles with the flat reference at `L / n_bins`.
pub fn emit_quantile_histogram(
    diag: &SbcDiagnostics,
    spec: &HistogramSpec,
    bundle: &mut ReportBundle,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let spec = HistogramSpec {
        range: HistogramRange::Unit,
        ..*spec
    };
    let t = histogram(&diag.quantiles, &spec)?;
    Ok(vec![
        bundle.write_table(&format!("{stem}.csv"), &t)?,
        bundle.write(
            &format!("{stem}.svg"),
            &render_histogram(&t, "SBC rank quantiles", "quantile", true),
        )?,
    ])
}

/// Histogram of z-scores on an automatic range.
pub fn emit_z_histogram(
    diag: &SbcDiagnostics,
    n_bins: usize,
    bundle: &mut ReportBundle,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let t = histogram(
        &diag.z_scores,
        &HistogramSpec::new(n_bins, HistogramRange::Auto)?,
    )?;
    Ok(vec![
        bundle.write_table(&format!("{stem}.csv"), &t)?,
        bundle.write(
            &format!("{stem}.svg"),
            &render_histogram(&t, "SBC z-scores", "z", false),
        )?,
    ])
}

/// Step points of the empirical CDF of values in `[0, 1]`, from `(0, 0)` to
/// `(1, 1)`.
pub fn ecdf(values: &[f64]) -> Result<Table> {
    if values.is_empty() {
        return Err(Error::EmptyInput("ecdf values"));
    }
    let sorted = crate::stats::sorted_copy(values);
    let n = sorted.len() as f64;
    let mut t = Table::new(&[("x", Real), ("ecdf", Real)]);
    t.push(vec![0.0, 0.0]);
    for (i, &v) in sorted.iter().enumerate() {
        t.push(vec![v, i as f64 / n]);
        t.push(vec![v, (i + 1) as f64 / n]);
    }
    t.push(vec![1.0, 1.0]);
    Ok(t)
}

fn render_ecdf(t: &Table) -> String {
    let mut c = Canvas::new(
        "ECDF of rank quantiles",
        "quantile",
        "ECDF",
        (0.0, 1.0),
        (0.0, 1.0),
    );
    c.diagonal();
    let pts: Vec<(f64, f64)> = t.rows.iter().map(|r| (r[0], r[1])).collect();
    c.polyline(&pts);
    c.finish()
}

pub fn emit_quantile_ecdf(
    diag: &SbcDiagnostics,
    bundle: &mut ReportBundle,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let t = ecdf(&diag.quantiles)?;
    Ok(vec![
        bundle.write_table(&format!("{stem}.csv"), &t)?,
        bundle.write(&format!("{stem}.svg"), &render_ecdf(&t))?,
    ])
}

#[derive(Clone, Copy)]
enum Guide {
    /// Dashed lines through `(0, 1)`.
    NullAdjustment,
    Diagonal,
}

fn render_scatter(t: &Table, x: usize, y: usize, title: &str, guide: Guide) -> String {
    let xs = t.rows.iter().map(|r| r[x]);
    let ys = t.rows.iter().map(|r| r[y]);
    let (mut xr, mut yr) = (auto_range(xs), auto_range(ys));
    match guide {
        Guide::NullAdjustment => {
            xr = (xr.0.min(-0.05), xr.1.max(0.05));
            yr = (yr.0.min(0.95), yr.1.max(1.05));
        }
        Guide::Diagonal => {
            let r = (xr.0.min(yr.0), xr.1.max(yr.1));
            xr = r;
            yr = r;
        }
    }
    let mut c = Canvas::new(title, &t.columns[x].0, &t.columns[y].0, xr, yr);
    match guide {
        Guide::NullAdjustment => {
            c.vline(0.0);
            c.hline(1.0);
        }
        Guide::Diagonal => c.diagonal(),
    }
    for r in &t.rows {
        c.point(r[x], r[y]);
    }
    c.finish()
}

/// Scatter of estimated `(zbar, s_z)` pairs with a crosshair at `(0, 1)`.
pub fn emit_adjustment_scatter(
    pairs: &[(f64, f64)],
    bundle: &mut ReportBundle,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("adjustment pairs"));
    }
    let mut t = Table::new(&[("z_mean", Real), ("z_sd", Real)]);
    for &(m, s) in pairs {
        t.push(vec![m, s]);
    }
    Ok(vec![
        bundle.write_table(&format!("{stem}.csv"), &t)?,
        bundle.write(
            &format!("{stem}.svg"),
            &render_scatter(
                &t,
                0,
                1,
                "Estimated mean and scale shifts",
                Guide::NullAdjustment,
            ),
        )?,
    ])
}

/// Coverage rows ordered by descending nominal level.
pub fn coverage_csv(table: &CoverageTable) -> Result<Table> {
    if table.rows.is_empty() {
        return Err(Error::EmptyInput("coverage table"));
    }
    let mut rows = table.rows.clone();
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let mut t = Table::new(&[("nominal", Real), ("scale", Real), ("coverage", Real)]);
    for r in rows {
        t.push(vec![1.0 - r.alpha, r.scale, r.coverage]);
    }
    Ok(t)
}

pub fn emit_coverage_table(
    table: &CoverageTable,
    bundle: &mut ReportBundle,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    Ok(vec![bundle.write_table(
        &format!("{stem}.csv"),
        &coverage_csv(table)?,
    )?])
}

/// Paired posterior means and sds of two runs on the same replications.
pub fn emit_posterior_comparison(
    a: &ReplicationSet,
    b: &ReplicationSet,
    labels: (&str, &str),
    bundle: &mut ReportBundle,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "cannot pair {} replications with {}",
            a.len(),
            b.len()
        )));
    }
    if a.replication_ids != b.replication_ids {
        return Err(Error::ShapeMismatch("replication ids differ".into()));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("replication set"));
    }
    let (la, lb) = labels;
    let names = [
        format!("mean_{la}"),
        format!("mean_{lb}"),
        format!("sd_{la}"),
        format!("sd_{lb}"),
    ];
    let mut t = Table::new(&[
        ("replication", Integer),
        (&names[0], Real),
        (&names[1], Real),
        (&names[2], Real),
        (&names[3], Real),
    ]);
    for l in 0..a.len() {
        t.push(vec![
            a.replication_ids[l] as f64,
            a.post_mean[l],
            b.post_mean[l],
            a.post_sd[l],
            b.post_sd[l],
        ]);
    }
    Ok(vec![
        bundle.write_table(&format!("{stem}.csv"), &t)?,
        bundle.write(
            &format!("{stem}_mean.svg"),
            &render_scatter(&t, 1, 2, "Posterior means", Guide::Diagonal),
        )?,
        bundle.write(
            &format!("{stem}_sd.svg"),
            &render_scatter(&t, 3, 4, "Posterior standard deviations", Guide::Diagonal),
        )?,
    ])
}

/// Per-replication table: truth, posterior summaries, quantile and z-score.
pub fn replication_table(reps: &ReplicationSet, diag: &SbcDiagnostics) -> Table {
    let mut t = Table::new(&[
        ("replication", Integer),
        ("theta", Real),
        ("post_mean", Real),
        ("post_sd", Real),
        ("quantile", Real),
        ("z", Real),
    ]);
    for l in 0..reps.len() {
        t.push(vec![
            reps.replication_ids[l] as f64,
            reps.theta_true[l],
            reps.post_mean[l],
            reps.post_sd[l],
            diag.quantiles[l],
            diag.z_scores[l],
        ]);
    }
    t
}

/// One-row summary: L, KS distance, `D sqrt(L)`, z mean and sd, then one
/// coverage column per level.
pub fn summary_table(diag: &SbcDiagnostics) -> Table {
    let cov_names: Vec<String> = diag
        .coverage
        .iter()
        .map(|(a, _)| format!("coverage_{}", 1.0 - a))
        .collect();
    let mut cols: Vec<(&str, ColumnKind)> = vec![
        ("replications", Integer),
        ("ks_distance", Real),
        ("ks_scaled", Real),
        ("z_mean", Real),
        ("z_sd", Real),
    ];
    cols.extend(cov_names.iter().map(|n| (n.as_str(), Real)));
    let mut t = Table::new(&cols);
    let mut row = vec![
        diag.len() as f64,
        diag.ks_distance,
        diag.ks_scaled(),
        diag.z_mean,
        diag.z_sd,
    ];
    row.extend(diag.coverage.iter().map(|(_, c)| *c));
    t.push(row);
    t
}

/// Writes the standard SBC bundle: per-replication table, summary,
/// quantile histogram and ECDF, z-score histogram.
pub fn emit_sbc_bundle(
    reps: &ReplicationSet,
    diag: &SbcDiagnostics,
    spec: &HistogramSpec,
    bundle: &mut ReportBundle,
) -> Result<Vec<PathBuf>> {
    let mut files = vec![
        bundle.write_table("diagnostics.csv", &replication_table(reps, diag))?,
        bundle.write_table("summary.csv", &summary_table(diag))?,
    ];
    files.extend(emit_quantile_histogram(
        diag,
        spec,
        bundle,
        "quantile_histogram",
    )?);
    files.extend(emit_quantile_ecdf(diag, bundle, "quantile_ecdf")?);
    files.extend(emit_z_histogram(diag, spec.n_bins, bundle, "z_histogram")?);
    Ok(files)
}
