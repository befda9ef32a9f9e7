//! Accuracy logging and forgetting metrics, plus feature-drift diagnostics.
//!
//! Tasks are indexed from 0. `boundary[l][j]` is the accuracy of task `j`'s
//! test set evaluated right after finishing training on task `l`; the three
//! metrics are pure functions of that log. Optional batch-cadence rows are
//! kept alongside for export but do not enter the metrics.

use crate::error::{Error, Result};
use crate::numerics::{l2_distance, Vec64};
use crate::{ClassId, TaskId};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Logged accuracies a[l][j] (task j evaluated after training task l).
#[derive(Debug, Clone)]
pub struct AccuracyMatrix {
    tasks: usize,
    boundary: Vec<Vec<Option<f64>>>,
    batch_rows: Vec<BatchRow>,
}

/// A finer-grained evaluation taken mid-task, after `batch` mini-batches.
#[derive(Debug, Clone)]
pub struct BatchRow {
    pub after_task: TaskId,
    pub batch: u64,
    pub accuracies: Vec<Option<f64>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        AccuracyMatrix {
            tasks,
            boundary: vec![vec![None; tasks]; tasks],
            batch_rows: Vec::new(),
        }
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn record_boundary(&mut self, after_task: TaskId, eval_task: TaskId, acc: f64) -> Result<()> {
        if after_task >= self.tasks || eval_task >= self.tasks {
            return Err(Error::UnknownTask(after_task.max(eval_task)));
        }
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::config(format!("accuracy {acc} outside [0,1]")));
        }
        self.boundary[after_task][eval_task] = Some(acc);
        Ok(())
    }

    pub fn record_batch_row(&mut self, row: BatchRow) {
        self.batch_rows.push(row);
    }

    pub fn boundary(&self, after_task: TaskId, eval_task: TaskId) -> Option<f64> {
        self.boundary
            .get(after_task)
            .and_then(|r| r.get(eval_task))
            .copied()
            .flatten()
    }

    pub fn batch_rows(&self) -> &[BatchRow] {
        &self.batch_rows
    }

    fn require(&self, after_task: TaskId, eval_task: TaskId) -> Result<f64> {
        self.boundary(after_task, eval_task)
            .ok_or(Error::MetricUndefined("missing accuracy entry"))
    }

    /// CSV export with header `after_task,eval_task,accuracy` (a trailing
    /// `batch` column appears when batch-cadence rows were logged; boundary
    /// rows leave it empty).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let with_batch = !self.batch_rows.is_empty();
        if with_batch {
            out.push_str("after_task,eval_task,accuracy,batch\n");
        } else {
            out.push_str("after_task,eval_task,accuracy\n");
        }
        for (l, row) in self.boundary.iter().enumerate() {
            for (j, acc) in row.iter().enumerate() {
                if let Some(a) = acc {
                    if with_batch {
                        let _ = writeln!(out, "{l},{j},{a},");
                    } else {
                        let _ = writeln!(out, "{l},{j},{a}");
                    }
                }
            }
        }
        for row in &self.batch_rows {
            for (j, acc) in row.accuracies.iter().enumerate() {
                if let Some(a) = acc {
                    let _ = writeln!(out, "{},{},{},{}", row.after_task, j, a, row.batch);
                }
            }
        }
        out
    }

    /// Parse a CSV produced by [`Self::to_csv`].
    pub fn from_csv(text: &str) -> Result<AccuracyMatrix> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Empty("accuracy csv"))?;
        let with_batch = match header.trim() {
            "after_task,eval_task,accuracy" => false,
            "after_task,eval_task,accuracy,batch" => true,
            other => {
                return Err(Error::format(
                    "accuracy csv",
                    format!("unexpected header {other:?}"),
                ))
            }
        };
        let mut entries: Vec<(usize, usize, f64, Option<u64>)> = Vec::new();
        let mut max_task = 0usize;
        for (ln, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let want = if with_batch { 4 } else { 3 };
            if fields.len() != want {
                return Err(Error::format(
                    "accuracy csv",
                    format!("line {}: expected {want} fields", ln + 2),
                ));
            }
            let parse_usize = |s: &str, what: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::format("accuracy csv", format!("line {}: bad {what}", ln + 2))
                })
            };
            let l = parse_usize(fields[0], "after_task")?;
            let j = parse_usize(fields[1], "eval_task")?;
            let a = fields[2].parse::<f64>().map_err(|_| {
                Error::format("accuracy csv", format!("line {}: bad accuracy", ln + 2))
            })?;
            let batch = if with_batch && !fields[3].is_empty() {
                Some(fields[3].parse::<u64>().map_err(|_| {
                    Error::format("accuracy csv", format!("line {}: bad batch", ln + 2))
                })?)
            } else {
                None
            };
            max_task = max_task.max(l).max(j);
            entries.push((l, j, a, batch));
        }
        let mut matrix = AccuracyMatrix::new(max_task + 1);
        let mut batch_acc: BTreeMap<(usize, u64), Vec<Option<f64>>> = BTreeMap::new();
        for (l, j, a, batch) in entries {
            match batch {
                None => matrix.record_boundary(l, j, a)?,
                Some(b) => {
                    let row = batch_acc
                        .entry((l, b))
                        .or_insert_with(|| vec![None; max_task + 1]);
                    row[j] = Some(a);
                }
            }
        }
        for ((after_task, batch), accuracies) in batch_acc {
            matrix.record_batch_row(BatchRow {
                after_task,
                batch,
                accuracies,
            });
        }
        Ok(matrix)
    }
}

/// A_t: mean accuracy over tasks 0..t after finishing training task t−1.
/// `t` counts completed tasks (1-based count, 0-based indices).
pub fn average_accuracy(matrix: &AccuracyMatrix, t: usize) -> Result<f64> {
    if t == 0 || t > matrix.tasks() {
        return Err(Error::MetricUndefined("task count out of range"));
    }
    let mut sum = 0.0;
    for j in 0..t {
        sum += matrix.require(t - 1, j)?;
    }
    Ok(sum / t as f64)
}

/// F_t: mean over old tasks of (peak earlier accuracy − final accuracy).
/// Undefined for t < 2. May be negative when tasks improved.
pub fn forgetting_measure(matrix: &AccuracyMatrix, t: usize) -> Result<f64> {
    if t < 2 {
        return Err(Error::MetricUndefined("forgetting needs at least 2 tasks"));
    }
    if t > matrix.tasks() {
        return Err(Error::MetricUndefined("task count out of range"));
    }
    let mut sum = 0.0;
    for j in 0..t - 1 {
        let mut peak = f64::NEG_INFINITY;
        for l in j..t - 1 {
            peak = peak.max(matrix.require(l, j)?);
        }
        sum += peak - matrix.require(t - 1, j)?;
    }
    Ok(sum / (t - 1) as f64)
}

/// Long-term remembering: age-weighted accuracy drops of old tasks relative
/// to their just-trained accuracy. Always nonnegative.
pub fn ltr(matrix: &AccuracyMatrix, t_total: usize) -> Result<f64> {
    if t_total < 2 {
        return Err(Error::MetricUndefined("ltr needs at least 2 tasks"));
    }
    if t_total > matrix.tasks() {
        return Err(Error::MetricUndefined("task count out of range"));
    }
    let mut sum = 0.0;
    for j in 0..t_total - 1 {
        let drop = matrix.require(t_total - 1, j)? - matrix.require(j, j)?;
        sum += (t_total - 1 - j) as f64 * drop.min(0.0);
    }
    Ok(-sum / (t_total - 1) as f64)
}

/// Per-sample features of one task's fixed probe set at one point in time.
#[derive(Debug, Clone)]
pub struct FeatureSnapshot {
    pub task: TaskId,
    /// Taken after finishing training this task index.
    pub after_task: TaskId,
    pub features: Vec<Vec64>,
    pub labels: Vec<ClassId>,
}

impl FeatureSnapshot {
    fn class_means(&self) -> Result<BTreeMap<ClassId, Vec64>> {
        if self.features.len() != self.labels.len() || self.features.is_empty() {
            return Err(Error::ProbeMismatch("snapshot features/labels"));
        }
        let dim = self.features[0].len();
        let mut acc: BTreeMap<ClassId, (Vec64, usize)> = BTreeMap::new();
        for (f, &c) in self.features.iter().zip(&self.labels) {
            let e = acc.entry(c).or_insert_with(|| (Vec64::zeros(dim), 0));
            e.0.add_scaled(1.0, f)?;
            e.1 += 1;
        }
        Ok(acc
            .into_iter()
            .map(|(c, (mut v, n))| {
                v.scale_in_place(1.0 / n as f64);
                (c, v)
            })
            .collect())
    }
}

/// Distance between two snapshot domains: when the class sets coincide, the
/// mean over classes of the Euclidean distance between matched class-mean
/// features; otherwise (different tasks) the mean over all cross pairs.
pub fn domain_distance(a: &FeatureSnapshot, b: &FeatureSnapshot) -> Result<f64> {
    let ma = a.class_means()?;
    let mb = b.class_means()?;
    let same_classes = ma.len() == mb.len() && ma.keys().zip(mb.keys()).all(|(x, y)| x == y);
    if same_classes {
        let mut sum = 0.0;
        for (c, va) in &ma {
            sum += l2_distance(va, &mb[c])?;
        }
        Ok(sum / ma.len() as f64)
    } else {
        let mut sum = 0.0;
        let mut count = 0usize;
        for va in ma.values() {
            for vb in mb.values() {
                sum += l2_distance(va, vb)?;
                count += 1;
            }
        }
        Ok(sum / count as f64)
    }
}

fn check_probe(a: &FeatureSnapshot, b: &FeatureSnapshot) -> Result<()> {
    if a.task != b.task {
        return Err(Error::ProbeMismatch("snapshots are of different tasks"));
    }
    if a.labels != b.labels {
        return Err(Error::ProbeMismatch("probe label sequences differ"));
    }
    Ok(())
}

/// Stability diagnostic: d(f_i^t, f_i^i) − d(f_i^{t−1}, f_i^i) for one old
/// task i. Nonpositive means the task's features did not move farther from
/// where they were when the task finished training.
pub fn stability_gap(
    current: &FeatureSnapshot,
    previous: &FeatureSnapshot,
    anchor: &FeatureSnapshot,
) -> Result<f64> {
    check_probe(current, anchor)?;
    check_probe(previous, anchor)?;
    Ok(domain_distance(current, anchor)? - domain_distance(previous, anchor)?)
}

/// Discrepancy diagnostic: d(f_i^t, f_j^t) − m between two tasks at the same
/// time. Nonnegative means the margin is respected.
pub fn discrepancy_margin(a: &FeatureSnapshot, b: &FeatureSnapshot, margin: f64) -> Result<f64> {
    if a.after_task != b.after_task {
        return Err(Error::ProbeMismatch("snapshots at different times"));
    }
    Ok(domain_distance(a, b)? - margin)
}

/// For two old tasks, the change of their mutual domain distance from the
/// previous boundary: d_t − d_{t−1}. Nonnegative means they did not move
/// closer.
pub fn discrepancy_trend(
    a_now: &FeatureSnapshot,
    b_now: &FeatureSnapshot,
    a_prev: &FeatureSnapshot,
    b_prev: &FeatureSnapshot,
) -> Result<f64> {
    check_probe(a_now, a_prev)?;
    check_probe(b_now, b_prev)?;
    Ok(domain_distance(a_now, b_now)? - domain_distance(a_prev, b_prev)?)
}
