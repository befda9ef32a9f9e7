//! Command implementations behind the CLI surface.

use crate::config::{self, Experiment};
use crate::plot::{bars_svg, trend_svg, Series};
use anyhow::{anyhow, bail, Context, Result};
use drr_core::cos::CosStore;
use drr_core::metrics::{average_accuracy, forgetting_measure, ltr, AccuracyMatrix};
use drr_core::trainer::{compare_samplers, run, sampler_rows_csv, RunLog};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const OUT_ROOT_ENV: &str = "DRR_OUT_ROOT";

/// Output directory: --out flag, then the config's `out` key, then
/// `$DRR_OUT_ROOT/<config stem>`.
fn resolve_out(flag: Option<PathBuf>, exp: &Experiment, config_path: &Path) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    if let Some(dir) = &exp.out {
        return Ok(dir.clone());
    }
    if let Ok(root) = std::env::var(OUT_ROOT_ENV) {
        let stem = config_path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "run".to_string());
        return Ok(PathBuf::from(root).join(stem));
    }
    bail!("no output directory: pass --out, set `out = ...` in the config, or export {OUT_ROOT_ENV}")
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn write_run_dir(dir: &Path, exp: &Experiment, seed: u64, log: &RunLog) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.cfg"), config::effective_text_for_seed(exp, seed))?;
    std::fs::write(dir.join("accuracy.csv"), log.accuracy_csv())?;
    std::fs::write(dir.join("metrics.txt"), log.metrics_text())?;
    std::fs::write(dir.join("memory.dump"), &log.memory_dump)?;
    std::fs::write(dir.join("drift.csv"), log.drift_csv())?;
    // wall-clock only; excluded from the byte-identical reproducibility contract
    let t = &log.timings;
    std::fs::write(
        dir.join("timings.txt"),
        format!(
            "total_s = {:.3}\neval_s = {:.3}\nobserve_us_mean = {:.3}\nobserve_count = {}\n",
            t.total_s, t.eval_s, t.observe_us_mean, t.observe_count
        ),
    )?;
    Ok(())
}

pub fn cmd_run(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    overrides: &[String],
) -> Result<()> {
    let mut exp = config::load(config_path, overrides)?;
    if let Some(s) = seed {
        exp.seeds = vec![s];
    }
    let out_dir = resolve_out(out, &exp, config_path)?;
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("config.effective.cfg"), config::effective_text(&exp))?;

    // seeds are independent runs; fan out across threads
    let logs: Vec<(u64, Result<RunLog>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = exp
            .seeds
            .iter()
            .map(|&s| {
                let mut cfg = exp.run.clone();
                cfg.seed = s;
                scope.spawn(move || (s, run(&cfg).map_err(anyhow::Error::from)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread")).collect()
    });

    let mut a_values = Vec::new();
    let mut f_values = Vec::new();
    let mut l_values = Vec::new();
    for (s, result) in &logs {
        let log = result
            .as_ref()
            .map_err(|e| anyhow!("seed {s}: {e}"))?;
        let dir = out_dir.join(format!("seed_{s}"));
        write_run_dir(&dir, &exp, *s, log)?;
        let summary = &log.summary;
        println!(
            "seed {s}: A_T = {:.6}  F_T = {}  LTR = {}",
            summary.a_t,
            summary.f_t.map_or("NA".into(), |v| format!("{v:.6}")),
            summary.ltr.map_or("NA".into(), |v| format!("{v:.6}")),
        );
        a_values.push(summary.a_t);
        if let Some(f) = summary.f_t {
            f_values.push(f);
        }
        if let Some(l) = summary.ltr {
            l_values.push(l);
        }
    }

    let mut aggregate = format!(
        "seeds = {}\n",
        exp.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    );
    let mut summarize = |name: &str, values: &[f64]| {
        if values.is_empty() {
            let _ = writeln!(aggregate, "{name}_mean = NA\n{name}_std = NA");
        } else {
            let (mean, std) = mean_std(values);
            let _ = writeln!(aggregate, "{name}_mean = {mean}\n{name}_std = {std}");
            println!("{name} = {mean:.6} ± {std:.6}");
        }
    };
    summarize("A_T", &a_values);
    summarize("F_T", &f_values);
    summarize("LTR", &l_values);
    std::fs::write(out_dir.join("aggregate.txt"), aggregate)?;
    println!("wrote {}", out_dir.display());
    Ok(())
}

pub fn cmd_compare_samplers(
    config_path: &Path,
    out: Option<PathBuf>,
    overrides: &[String],
) -> Result<()> {
    let exp = config::load(config_path, overrides)?;
    let out_dir = resolve_out(out, &exp, config_path)?;
    std::fs::create_dir_all(&out_dir)?;
    let rows = compare_samplers(&exp.run, &exp.seeds)?;
    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>12}",
        "sampler", "A_T", "F_T", "LTR", "observe_us"
    );
    for r in &rows {
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>12.2}",
            r.sampler.tag(),
            r.a_t,
            r.f_t,
            r.ltr,
            r.observe_us
        );
    }
    let csv_path = out_dir.join("samplers.csv");
    std::fs::write(&csv_path, sampler_rows_csv(&rows))?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn method_label(run_dir: &Path) -> String {
    std::fs::read_to_string(run_dir.join("config.cfg"))
        .ok()
        .and_then(|text| {
            text.lines().find_map(|l| {
                l.trim()
                    .strip_prefix("method")
                    .and_then(|rest| rest.trim().strip_prefix('='))
                    .map(|v| v.trim().to_string())
            })
        })
        .unwrap_or_else(|| run_dir.display().to_string())
}

pub fn cmd_plot(run_dirs: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    if run_dirs.is_empty() {
        bail!("plot needs at least one run directory");
    }
    let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let mut trend = Vec::new();
    let mut diag = Vec::new();
    for dir in run_dirs {
        let csv_path = dir.join("accuracy.csv");
        let text = std::fs::read_to_string(&csv_path)
            .with_context(|| format!("reading {}", csv_path.display()))?;
        let matrix = AccuracyMatrix::from_csv(&text)?;
        let label = method_label(dir);
        let tasks = matrix.tasks();
        let a_trend: Vec<f64> = (1..=tasks)
            .map(|t| average_accuracy(&matrix, t))
            .collect::<drr_core::Result<_>>()?;
        let just_finished: Vec<f64> = (0..tasks)
            .map(|j| {
                matrix
                    .boundary(j, j)
                    .ok_or(drr_core::Error::MetricUndefined("missing diagonal entry"))
            })
            .collect::<drr_core::Result<_>>()?;
        trend.push(Series {
            label: label.clone(),
            values: a_trend,
        });
        diag.push(Series {
            label,
            values: just_finished,
        });
    }
    let trend_path = out_dir.join("trend.svg");
    let bars_path = out_dir.join("just_finished.svg");
    std::fs::write(&trend_path, trend_svg(&trend, "average accuracy over tasks"))?;
    std::fs::write(&bars_path, bars_svg(&diag, "just-finished-task accuracy"))?;
    println!("wrote {}", trend_path.display());
    println!("wrote {}", bars_path.display());
    Ok(())
}

pub fn cmd_dump_memory(run_dir: &Path) -> Result<()> {
    let dump_path = run_dir.join("memory.dump");
    let text = std::fs::read_to_string(&dump_path)
        .with_context(|| format!("reading {}", dump_path.display()))?;
    let slots = CosStore::parse_dump(&text)?;

    let budget: Option<usize> = std::fs::read_to_string(run_dir.join("config.cfg"))
        .ok()
        .and_then(|cfg| {
            cfg.lines().find_map(|l| {
                l.trim()
                    .strip_prefix("memory.budget")
                    .and_then(|rest| rest.trim().strip_prefix('='))
                    .and_then(|v| v.trim().parse().ok())
            })
        });

    #[derive(Default)]
    struct ClassRow {
        task: usize,
        centroids: std::collections::BTreeSet<usize>,
        slots: usize,
    }
    let mut classes: BTreeMap<usize, ClassRow> = BTreeMap::new();
    for slot in &slots {
        let row = classes.entry(slot.label).or_default();
        row.task = slot.task;
        row.centroids.insert(slot.centroid);
        row.slots += 1;
    }

    println!("memory dump: {}", dump_path.display());
    println!("{:<8} {:<6} {:<20} {:<6}", "class", "task", "centroids(referenced)", "slots");
    for (class, row) in &classes {
        println!(
            "{:<8} {:<6} {:<20} {:<6}",
            class,
            row.task,
            row.centroids.len(),
            row.slots
        );
    }
    println!("total slots = {}", slots.len());
    if let Some(m) = budget {
        println!("budget = {m}");
        if slots.len() > m {
            bail!("memory dump holds {} slots, over the budget {m}", slots.len());
        }
    }
    for slot in &slots {
        println!(
            "slot class={} task={} centroid={} input_dim={} feature_dim={}",
            slot.label,
            slot.task,
            slot.centroid,
            slot.input.len(),
            slot.feature.len()
        );
    }
    Ok(())
}

pub fn cmd_metrics(csv_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let matrix = AccuracyMatrix::from_csv(&text)?;
    let tasks = matrix.tasks();
    let a = average_accuracy(&matrix, tasks)?;
    println!("A_T = {a}");
    if tasks >= 2 {
        println!("F_T = {}", forgetting_measure(&matrix, tasks)?);
        println!("LTR = {}", ltr(&matrix, tasks)?);
    } else {
        println!("F_T = NA");
        println!("LTR = NA");
    }
    Ok(())
}
