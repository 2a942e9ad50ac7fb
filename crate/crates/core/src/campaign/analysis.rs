//! Post-hoc analysis of run logs: correlation matrices, best-so-far
//! trajectories and scatter tables, all emitted as CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::FitnessConfig;
use crate::policy::DpoEvent;
use crate::record::EvalRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 rows for a correlation, got {0}")]
    TooFewRows(usize),
    #[error("column {column} has a non-finite value at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("columns have different lengths")]
    Ragged,
    #[error("unknown axis `{0}` (expected one of eval_index, gd_count, k_eff, fq, fdh, fitness)")]
    UnknownAxis(String),
}

/// Columns of [`pearson_corr`], in matrix order.
pub const CORR_COLUMNS: [&str; 5] = ["gd_count", "k_eff", "fq", "fdh", "fitness"];

/// Pearson correlation matrix. Entries involving a constant column are
/// `None` and the column is listed in `zero_variance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub zero_variance: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        self.values[i][j]
    }

    /// Undefined entries are written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("column,{}\n", self.columns.join(","));
        for (name, row) in self.columns.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                match v {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Correlation matrix over named columns of equal length.
pub fn pearson_matrix(
    names: &[&str],
    columns: &[Vec<f64>],
) -> Result<CorrelationMatrix, AnalysisError> {
    let n = columns.first().map_or(0, Vec::len);
    if columns.iter().any(|c| c.len() != n) || names.len() != columns.len() {
        return Err(AnalysisError::Ragged);
    }
    if n < 2 {
        return Err(AnalysisError::TooFewRows(n));
    }
    for (name, col) in names.iter().zip(columns) {
        if let Some(row) = col.iter().position(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite {
                column: name.to_string(),
                row,
            });
        }
    }
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let constant: Vec<bool> = columns
        .iter()
        .map(|c| c.iter().all(|v| *v == c[0]))
        .collect();
    let values = (0..columns.len())
        .map(|i| {
            (0..columns.len())
                .map(|j| {
                    if constant[i] || constant[j] {
                        None
                    } else if i == j {
                        Some(1.0)
                    } else {
                        let dot: f64 = centered[i]
                            .iter()
                            .zip(&centered[j])
                            .map(|(a, b)| a * b)
                            .sum();
                        Some((dot / (norms[i] * norms[j])).clamp(-1.0, 1.0))
                    }
                })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        columns: names.iter().map(|s| s.to_string()).collect(),
        values,
        zero_variance: names
            .iter()
            .zip(&constant)
            .filter(|(_, c)| **c)
            .map(|(n, _)| n.to_string())
            .collect(),
    })
}

/// Correlations between gd_count, k_eff, fq, fdh and fitness over a log.
pub fn pearson_corr(records: &[EvalRecord]) -> Result<CorrelationMatrix, AnalysisError> {
    let columns: Vec<Vec<f64>> = CORR_COLUMNS
        .iter()
        .map(|c| {
            let axis: Axis = c.parse().expect("known column");
            records.iter().map(|r| axis.value(r)).collect()
        })
        .collect();
    pearson_matrix(&CORR_COLUMNS, &columns)
}

/// One row of a best-so-far trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub eval_index: usize,
    pub fitness: f64,
    pub best_fitness: f64,
    pub best_gd_count: usize,
    pub best_k_eff: f64,
    pub best_fq: f64,
    pub best_fdh: f64,
}

/// Cumulative minimum of fitness in log order, with the figures of the
/// incumbent. Ties keep the earlier record.
pub fn trajectory(records: &[EvalRecord]) -> Vec<TrajectoryPoint> {
    let mut best: Option<&EvalRecord> = None;
    records
        .iter()
        .enumerate()
        .map(|(step, r)| {
            if best.is_none_or(|b| r.fitness < b.fitness) {
                best = Some(r);
            }
            let b = best.expect("set above");
            TrajectoryPoint {
                step,
                eval_index: r.eval_index,
                fitness: r.fitness,
                best_fitness: b.fitness,
                best_gd_count: b.gd_count,
                best_k_eff: b.k_eff,
                best_fq: b.fq,
                best_fdh: b.fdh,
            }
        })
        .collect()
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from(
        "step,eval_index,fitness,best_fitness,best_gd_count,best_k_eff,best_fq,best_fdh\n",
    );
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.step,
            p.eval_index,
            p.fitness,
            p.best_fitness,
            p.best_gd_count,
            p.best_k_eff,
            p.best_fq,
            p.best_fdh
        )
        .unwrap();
    }
    out
}

/// A numeric field of [`EvalRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    EvalIndex,
    GdCount,
    KEff,
    Fq,
    Fdh,
    Fitness,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::EvalIndex => "eval_index",
            Axis::GdCount => "gd_count",
            Axis::KEff => "k_eff",
            Axis::Fq => "fq",
            Axis::Fdh => "fdh",
            Axis::Fitness => "fitness",
        }
    }

    pub fn value(self, r: &EvalRecord) -> f64 {
        match self {
            Axis::EvalIndex => r.eval_index as f64,
            Axis::GdCount => r.gd_count as f64,
            Axis::KEff => r.k_eff,
            Axis::Fq => r.fq,
            Axis::Fdh => r.fdh,
            Axis::Fitness => r.fitness,
        }
    }
}

impl FromStr for Axis {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        Ok(match s {
            "eval_index" => Axis::EvalIndex,
            "gd_count" => Axis::GdCount,
            "k_eff" => Axis::KEff,
            "fq" => Axis::Fq,
            "fdh" => Axis::Fdh,
            "fitness" => Axis::Fitness,
            _ => return Err(AnalysisError::UnknownAxis(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub x: Axis,
    pub y: Axis,
    pub points: Vec<(f64, f64)>,
    /// Criticality window, carried for plotting.
    pub k_window: (f64, f64),
}

impl Scatter {
    /// Header row plus one row per point, preceded by a `#` metadata line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# k_lo={} k_hi={}\n{},{}\n",
            self.k_window.0,
            self.k_window.1,
            self.x.name(),
            self.y.name()
        );
        for (x, y) in &self.points {
            writeln!(out, "{x},{y}").unwrap();
        }
        out
    }
}

pub fn scatter_export(
    records: &[EvalRecord],
    x: &str,
    y: &str,
    fitness_cfg: &FitnessConfig,
) -> Result<Scatter, AnalysisError> {
    let x: Axis = x.parse()?;
    let y: Axis = y.parse()?;
    Ok(Scatter {
        x,
        y,
        points: records.iter().map(|r| (x.value(r), y.value(r))).collect(),
        k_window: (fitness_cfg.k_lo, fitness_cfg.k_hi),
    })
}

/// Per-step Gd inventory of an online preference run.
pub fn inventory_csv(events: &[DpoEvent]) -> String {
    let mut out =
        String::from("step,expected_inventory,mean_sampled_gd,min_sampled_gd,max_sampled_gd\n");
    for e in events {
        let counts: Vec<usize> = e.candidates.iter().map(|c| c.gd_count).collect();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64;
        writeln!(
            out,
            "{},{},{},{},{}",
            e.step,
            e.expected_inventory,
            mean,
            counts.iter().min().copied().unwrap_or(0),
            counts.iter().max().copied().unwrap_or(0)
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeLayout;

    fn rec(i: usize, gd: usize, k: f64, fq: f64, fdh: f64, fit: f64) -> EvalRecord {
        EvalRecord {
            eval_index: i,
            layout: LatticeLayout::all_fuel(),
            k_eff: k,
            fq,
            fdh,
            fitness: fit,
            gd_count: gd,
        }
    }

    #[test]
    fn self_and_negated_columns() {
        let a = vec![1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let m = pearson_matrix(&["a", "b"], &[a, neg]).unwrap();
        assert_eq!(m.get("a", "a"), Some(1.0));
        assert!((m.get("a", "b").unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.get("a", "b"), m.get("b", "a"));
        assert!(m.zero_variance.is_empty());
    }

    #[test]
    fn constant_column_is_flagged() {
        let recs: Vec<_> = (0..5)
            .map(|i| {
                rec(
                    i,
                    16,
                    1.1 + 0.01 * i as f64,
                    1.5 - 0.02 * i as f64,
                    1.3,
                    5.0 - i as f64,
                )
            })
            .collect();
        let m = pearson_corr(&recs).unwrap();
        assert_eq!(m.zero_variance, vec!["gd_count", "fdh"]);
        assert_eq!(m.get("gd_count", "k_eff"), None);
        assert_eq!(m.get("gd_count", "gd_count"), None);
        assert_eq!(m.get("k_eff", "k_eff"), Some(1.0));
        assert!(m.to_csv().contains("gd_count,NA,NA,NA,NA,NA"));
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
    }

    #[test]
    fn correlation_errors() {
        assert_eq!(
            pearson_corr(&[rec(0, 1, 1.0, 1.0, 1.0, 1.0)]),
            Err(AnalysisError::TooFewRows(1))
        );
        let bad = [
            rec(0, 1, 1.0, 1.0, 1.0, 1.0),
            rec(1, 2, f64::NAN, 1.0, 1.0, 1.0),
        ];
        assert!(matches!(
            pearson_corr(&bad),
            Err(AnalysisError::NonFinite { row: 1, .. })
        ));
    }

    #[test]
    fn trajectory_is_cumulative_min() {
        let recs = [
            rec(0, 16, 1.1, 1.5, 1.3, 5.0),
            rec(1, 18, 1.1, 1.5, 1.3, 7.0),
            rec(2, 20, 1.05, 1.4, 1.2, 1.3),
            rec(3, 22, 1.05, 1.4, 1.2, 1.3),
        ];
        let t = trajectory(&recs);
        let best: Vec<f64> = t.iter().map(|p| p.best_fitness).collect();
        assert_eq!(best, vec![5.0, 5.0, 1.3, 1.3]);
        assert_eq!(t[3].best_gd_count, 20);
        assert_eq!(trajectory(&recs[..1])[0].best_fitness, 5.0);
        assert!(trajectory(&[]).is_empty());
        assert_eq!(trajectory_csv(&t).lines().count(), 5);
    }

    #[test]
    fn scatter_rows_and_axes() {
        let recs: Vec<_> = (0..4).map(|i| rec(i, 16 + i, 1.0, 1.2, 1.1, 2.0)).collect();
        let cfg = FitnessConfig::default();
        let s = scatter_export(&recs, "k_eff", "fitness", &cfg).unwrap();
        assert_eq!(s.points.len(), 4);
        let csv = s.to_csv();
        assert!(csv.starts_with("# k_lo=1.02 k_hi=1.08\nk_eff,fitness\n"));
        assert_eq!(csv.lines().count(), 6);
        assert_eq!(
            scatter_export(&recs, "bogus", "k_eff", &cfg),
            Err(AnalysisError::UnknownAxis("bogus".into()))
        );
    }
}
