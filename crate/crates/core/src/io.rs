//! On-disk formats: replication sets, draw files and adjustment records.
//!
//! A replication set directory holds `meta.toml`, `replications.csv`,
//! `datasets.csv` and, when draws were kept, `draws.csv`. Draw files have a
//! header `draw_1,...,draw_S` and one row per posterior.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::recal::Adjustment;
use crate::report::{ColumnKind, Table};
use crate::sbc::{ReplicationFailure, ReplicationMode, ReplicationSet};

fn parse_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_adjustment(path: &Path, adj: &Adjustment) -> Result<()> {
    adj.validate()?;
    let text = toml::to_string(adj).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_adjustment(path: &Path) -> Result<Adjustment> {
    let text = fs::read_to_string(path)?;
    let adj: Adjustment = toml::from_str(&text).map_err(|e| parse_error(path, e.to_string()))?;
    adj.validate()?;
    Ok(adj)
}

fn draws_table(rows: &[Vec<f64>]) -> Result<Table> {
    let s = rows.first().map_or(0, Vec::len);
    if s == 0 || rows.iter().any(|r| r.len() != s) {
        return Err(Error::ShapeMismatch(
            "draw rows must be nonempty and equal length".into(),
        ));
    }
    let names: Vec<String> = (1..=s).map(|j| format!("draw_{j}")).collect();
    let cols: Vec<(&str, ColumnKind)> = names
        .iter()
        .map(|n| (n.as_str(), ColumnKind::Real))
        .collect();
    let mut t = Table::new(&cols);
    t.rows = rows.to_vec();
    Ok(t)
}

pub fn write_draws(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    fs::write(path, draws_table(rows)?.to_csv()?)?;
    Ok(())
}

pub fn read_draws(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let width = text.lines().next().map_or(0, |h| h.split(',').count());
    if width == 0 || text.lines().next().is_some_and(|h| h.trim().is_empty()) {
        return Err(parse_error(path, "missing header"));
    }
    let t = Table::from_csv(&text, &vec![ColumnKind::Real; width], path)?;
    if t.rows.is_empty() {
        return Err(parse_error(path, "no draw rows"));
    }
    Ok(t.rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct FailureRecord {
    replication: usize,
    reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetMeta {
    mode: String,
    seed: u64,
    replications: usize,
    draws_per_replication: usize,
    flagged_fits: usize,
    has_draws: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_d: Option<Vec<f64>>,
    #[serde(default)]
    failures: Vec<FailureRecord>,
}

pub fn write_replication_set(dir: &Path, reps: &ReplicationSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (reference, y_d) = match &reps.mode {
        ReplicationMode::Prior => (None, None),
        ReplicationMode::Posterior { y_d, reference } => {
            (Some(reference.clone()), Some(y_d.values.clone()))
        }
    };
    let meta = SetMeta {
        mode: reps.mode.label().into(),
        seed: reps.seed,
        replications: reps.len(),
        draws_per_replication: reps.draws_per_replication,
        flagged_fits: reps.flagged_fits,
        has_draws: reps.draws.is_some(),
        reference,
        y_d,
        failures: reps
            .failures
            .iter()
            .map(|f| FailureRecord {
                replication: f.replication,
                reason: f.reason.clone(),
            })
            .collect(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("meta.toml"), text)?;

    use ColumnKind::{Integer, Real};
    let mut t = Table::new(&[
        ("replication", Integer),
        ("theta", Real),
        ("post_mean", Real),
        ("post_sd", Real),
        ("quantile", Real),
    ]);
    for l in 0..reps.len() {
        t.push(vec![
            reps.replication_ids[l] as f64,
            reps.theta_true[l],
            reps.post_mean[l],
            reps.post_sd[l],
            reps.rank_quantiles[l],
        ]);
    }
    fs::write(dir.join("replications.csv"), t.to_csv()?)?;

    if let Some(first) = reps.datasets.first() {
        let names: Vec<String> = (1..=first.len()).map(|j| format!("y_{j}")).collect();
        let mut cols = vec![("replication", Integer)];
        cols.extend(names.iter().map(|n| (n.as_str(), Real)));
        let mut t = Table::new(&cols);
        for (l, d) in reps.datasets.iter().enumerate() {
            if d.len() != first.len() {
                return Err(Error::ShapeMismatch("datasets differ in length".into()));
            }
            let mut row = vec![reps.replication_ids[l] as f64];
            row.extend(&d.values);
            t.push(row);
        }
        fs::write(dir.join("datasets.csv"), t.to_csv()?)?;
    }
    if let Some(rows) = &reps.draws {
        write_draws(&dir.join("draws.csv"), rows)?;
    }
    Ok(())
}

fn header_width(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().next().map_or(0, |h| h.split(',').count()))
}

pub fn read_replication_set(dir: &Path) -> Result<ReplicationSet> {
    let meta_path = dir.join("meta.toml");
    let meta: SetMeta = toml::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| parse_error(&meta_path, e.to_string()))?;
    let mode = match (meta.mode.as_str(), meta.y_d, meta.reference) {
        ("prior", _, _) => ReplicationMode::Prior,
        ("posterior", Some(y), Some(reference)) => ReplicationMode::Posterior {
            y_d: Dataset::vector(y),
            reference,
        },
        (m, _, _) => return Err(parse_error(&meta_path, format!("bad mode `{m}`"))),
    };

    use ColumnKind::{Integer, Real};
    let reps_path = dir.join("replications.csv");
    let t = Table::from_csv(
        &fs::read_to_string(&reps_path)?,
        &[Integer, Real, Real, Real, Real],
        &reps_path,
    )?;
    if t.rows.len() != meta.replications {
        return Err(parse_error(
            &reps_path,
            "row count disagrees with meta.toml",
        ));
    }
    let col = |j: usize| -> Vec<f64> { t.rows.iter().map(|r| r[j]).collect() };

    let data_path = dir.join("datasets.csv");
    let datasets = if data_path.exists() {
        let w = header_width(&data_path)?;
        let mut kinds = vec![Real; w];
        kinds[0] = Integer;
        let d = Table::from_csv(&fs::read_to_string(&data_path)?, &kinds, &data_path)?;
        d.rows
            .iter()
            .map(|r| Dataset::vector(r[1..].to_vec()))
            .collect()
    } else {
        Vec::new()
    };

    let draws = if meta.has_draws {
        let rows = read_draws(&dir.join("draws.csv"))?;
        if rows.len() != meta.replications
            || rows.first().map_or(0, Vec::len) != meta.draws_per_replication
        {
            return Err(Error::ShapeMismatch(
                "draws.csv disagrees with meta.toml".into(),
            ));
        }
        Some(rows)
    } else {
        None
    };

    Ok(ReplicationSet {
        mode,
        seed: meta.seed,
        draws_per_replication: meta.draws_per_replication,
        replication_ids: col(0).into_iter().map(|v| v as usize).collect(),
        theta_true: col(1),
        datasets,
        post_mean: col(2),
        post_sd: col(3),
        rank_quantiles: col(4),
        draws,
        failures: meta
            .failures
            .into_iter()
            .map(|f| ReplicationFailure {
                replication: f.replication,
                reason: f.reason,
            })
            .collect(),
        flagged_fits: meta.flagged_fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NormalNormalModel;
    use crate::recal::{AdjustmentKind, Provenance};
    use crate::sampler::ExactSampler;
    use crate::sbc::{run_replications, RunOptions, StartMode};

    #[test]
    fn replication_set_survives_disk() {
        let m = NormalNormalModel::new(1.0).unwrap();
        let y = Dataset::scalar(1.0);
        let start = StartMode::Posterior {
            y_d: &y,
            reference: &ExactSampler,
        };
        let reps = run_replications(&m, &ExactSampler, start, &RunOptions::new(20, 30, 5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_replication_set(dir.path(), &reps).unwrap();
        let back = read_replication_set(dir.path()).unwrap();
        assert_eq!(back.mode, reps.mode);
        assert_eq!(back.theta_true, reps.theta_true);
        assert_eq!(back.post_sd, reps.post_sd);
        assert_eq!(back.rank_quantiles, reps.rank_quantiles);
        assert_eq!(back.datasets, reps.datasets);
        assert_eq!(back.draws, reps.draws);
    }

    #[test]
    fn adjustment_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adj.toml");
        let adj = Adjustment::location_scale(0.87, 0.35)
            .unwrap()
            .with_provenance(Provenance {
                model: "normal-normal".into(),
                sampler: "exact".into(),
                scalar: "theta".into(),
                mode: "posterior".into(),
                method: "locscale".into(),
                seed: 7,
                replications: 200,
                draws: 1000,
                alpha: None,
            });
        write_adjustment(&path, &adj).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("kind = \"location_scale\""), "{text}");
        assert_eq!(read_adjustment(&path).unwrap(), adj);

        fs::write(
            &path,
            "kind = \"scale_only\"\nscale = -1.0\nshift_coefficient = 0.0\n",
        )
        .unwrap();
        assert!(read_adjustment(&path).is_err());
        fs::write(
            &path,
            "kind = \"scale_only\"\nscale = 2.0\nshift_coefficient = 0.0\n",
        )
        .unwrap();
        assert_eq!(
            read_adjustment(&path).unwrap().kind,
            AdjustmentKind::ScaleOnly
        );
    }

    #[test]
    fn draw_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_draws(&path, &[vec![0.1, 0.2, 0.3]]).unwrap();
        assert!(fs::read_to_string(&path)
            .unwrap()
            .starts_with("draw_1,draw_2,draw_3\n"));
        assert_eq!(read_draws(&path).unwrap(), vec![vec![0.1, 0.2, 0.3]]);
        assert!(write_draws(&path, &[vec![1.0], vec![1.0, 2.0]]).is_err());
        fs::write(&path, "draw_1,draw_2\n1,2\n3\n").unwrap();
        assert!(read_draws(&path).is_err());
    }
}
