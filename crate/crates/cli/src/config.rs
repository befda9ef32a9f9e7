//! Flat, line-oriented experiment configs: `key = value` with dotted section
//! prefixes, `#` comments, unknown keys rejected with line numbers. The
//! effective (defaults-expanded) form serializes back to the same format, so
//! a run can always be reproduced from the config copy it leaves behind.

use anyhow::{anyhow, bail, Context, Result};
use drr_core::losses::MarginConfig;
use drr_core::streams::StreamSpec;
use drr_core::trainer::{EvalMode, Method, ObserveSchedule, RunConfig};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// A parsed experiment: one run configuration plus the seed list and an
/// optional output directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            run: RunConfig::desk_default(Method::Drr, 1234),
            seeds: vec![1234],
            out: None,
        }
    }
}

fn parse_pairs(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`, got {line:?}", ln + 1))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if pairs.insert(key.clone(), value).is_some() {
            bail!("{origin}:{}: duplicate key {key:?}", ln + 1);
        }
    }
    Ok(pairs)
}

/// Parse a config file, then apply `key=value` overrides (later wins).
pub fn load(path: &Path, overrides: &[String]) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let origin = path.display().to_string();
    let mut pairs = parse_pairs(&text, &origin)?;
    for (i, ov) in overrides.iter().enumerate() {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| anyhow!("override #{}: expected KEY=VALUE, got {ov:?}", i + 1))?;
        pairs.insert(key.trim().to_string(), value.trim().to_string());
    }
    from_pairs(pairs, &origin)
}

pub fn parse_str(text: &str, origin: &str) -> Result<Experiment> {
    from_pairs(parse_pairs(text, origin)?, origin)
}

fn from_pairs(mut pairs: BTreeMap<String, String>, origin: &str) -> Result<Experiment> {
    // method and stream.kind steer the defaults, so they apply first
    let method = match pairs.remove("method") {
        Some(v) => Method::parse(&v).map_err(|e| anyhow!("{origin}: {e}"))?,
        None => Method::Drr,
    };
    let mut exp = Experiment {
        run: RunConfig::desk_default(method, 1234),
        ..Experiment::default()
    };
    if let Some(kind) = pairs.remove("stream.kind") {
        exp.run.stream = match kind.as_str() {
            "permuted-gaussians" => StreamSpec::desk_default(),
            "split-gaussians" => StreamSpec::SplitGaussians {
                tasks: 5,
                classes_per_task: 3,
                dims: 32,
                per_class: 150,
                spread: 1.0,
                batch_size: 2,
            },
            "permuted-idx" => StreamSpec::PermutedIdx {
                train_images: String::new(),
                train_labels: String::new(),
                test_images: String::new(),
                test_labels: String::new(),
                tasks: 20,
                batch_size: 10,
            },
            other => bail!("{origin}: unknown stream.kind {other:?}"),
        };
    }
    for (key, value) in pairs {
        set_key(&mut exp, &key, &value).with_context(|| format!("{origin}: key {key:?}"))?;
    }
    if let StreamSpec::PermutedIdx {
        train_images,
        train_labels,
        test_images,
        test_labels,
        ..
    } = &exp.run.stream
    {
        if train_images.is_empty()
            || train_labels.is_empty()
            || test_images.is_empty()
            || test_labels.is_empty()
        {
            bail!("{origin}: permuted-idx streams need stream.train_images/train_labels/test_images/test_labels");
        }
    }
    if exp.seeds.is_empty() {
        bail!("{origin}: seeds must be nonempty");
    }
    exp.run.seed = exp.seeds[0];
    exp.run.validate().map_err(|e| anyhow!("{origin}: {e}"))?;
    Ok(exp)
}

fn parse_num<T: std::str::FromStr>(value: &str, what: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| anyhow!("bad {what}: {value:?}"))
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("expected true/false, got {other:?}"),
    }
}

fn set_key(exp: &mut Experiment, key: &str, value: &str) -> Result<()> {
    let run = &mut exp.run;
    match key {
        "seeds" => {
            exp.seeds = value
                .split(',')
                .map(|s| parse_num::<u64>(s.trim(), "seed"))
                .collect::<Result<_>>()?;
        }
        "out" => exp.out = Some(PathBuf::from(value)),
        "model.hidden" => {
            run.hidden = value
                .split(',')
                .map(|s| parse_num::<usize>(s.trim(), "hidden width"))
                .collect::<Result<_>>()?;
        }
        "loss.m_c" => run.margins.class_margin = parse_num(value, "loss.m_c")?,
        "loss.m_t" => run.margins.task_margin = parse_num(value, "loss.m_t")?,
        "loss.s" => run.margins.scale = parse_num(value, "loss.s")?,
        "loss.tau" => run.margins.temperature = parse_num(value, "loss.tau")?,
        "loss.clamp" => run.margins.clamp_tolerance = parse_num(value, "loss.clamp")?,
        "memory.budget" => run.memory_budget = parse_num(value, "memory.budget")?,
        "memory.epsilon" => run.epsilon = parse_num(value, "memory.epsilon")?,
        "memory.refresh_eviction" => run.refresh_eviction = parse_bool(value)?,
        "train.lr" => run.learning_rate = parse_num(value, "train.lr")?,
        "train.cdl" => run.cdl = parse_bool(value)?,
        "train.eval" => run.eval_mode = EvalMode::parse(value)?,
        "train.observe" => run.observe_schedule = ObserveSchedule::parse(value)?,
        "train.eval_every_batches" => {
            let n: u64 = parse_num(value, "train.eval_every_batches")?;
            run.eval_every_batches = if n == 0 { None } else { Some(n) };
        }
        "train.probe" => run.probe_size = parse_num(value, "train.probe")?,
        _ if key.starts_with("stream.") => set_stream_key(run, key, value)?,
        other => bail!("unknown key {other:?}"),
    }
    Ok(())
}

fn set_stream_key(run: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    match (&mut run.stream, key) {
        (StreamSpec::PermutedGaussians { tasks, .. }, "stream.tasks")
        | (StreamSpec::SplitGaussians { tasks, .. }, "stream.tasks")
        | (StreamSpec::PermutedIdx { tasks, .. }, "stream.tasks") => {
            *tasks = parse_num(value, "stream.tasks")?
        }
        (StreamSpec::PermutedGaussians { batch_size, .. }, "stream.batch_size")
        | (StreamSpec::SplitGaussians { batch_size, .. }, "stream.batch_size")
        | (StreamSpec::PermutedIdx { batch_size, .. }, "stream.batch_size") => {
            *batch_size = parse_num(value, "stream.batch_size")?
        }
        (StreamSpec::PermutedGaussians { dims, .. }, "stream.dims")
        | (StreamSpec::SplitGaussians { dims, .. }, "stream.dims") => {
            *dims = parse_num(value, "stream.dims")?
        }
        (StreamSpec::PermutedGaussians { classes, .. }, "stream.classes_per_task") => {
            *classes = parse_num(value, "stream.classes_per_task")?
        }
        (StreamSpec::SplitGaussians { classes_per_task, .. }, "stream.classes_per_task") => {
            *classes_per_task = parse_num(value, "stream.classes_per_task")?
        }
        (StreamSpec::PermutedGaussians { per_class, .. }, "stream.per_class")
        | (StreamSpec::SplitGaussians { per_class, .. }, "stream.per_class") => {
            *per_class = parse_num(value, "stream.per_class")?
        }
        (StreamSpec::PermutedGaussians { spread, .. }, "stream.spread")
        | (StreamSpec::SplitGaussians { spread, .. }, "stream.spread") => {
            *spread = parse_num(value, "stream.spread")?
        }
        (StreamSpec::PermutedIdx { train_images, .. }, "stream.train_images") => {
            *train_images = value.to_string()
        }
        (StreamSpec::PermutedIdx { train_labels, .. }, "stream.train_labels") => {
            *train_labels = value.to_string()
        }
        (StreamSpec::PermutedIdx { test_images, .. }, "stream.test_images") => {
            *test_images = value.to_string()
        }
        (StreamSpec::PermutedIdx { test_labels, .. }, "stream.test_labels") => {
            *test_labels = value.to_string()
        }
        (_, other) => bail!("key {other:?} does not apply to this stream.kind"),
    }
    Ok(())
}

/// Serialize the defaults-expanded experiment; `load`-ing the result yields
/// the same experiment.
pub fn effective_text(exp: &Experiment) -> String {
    let mut out = String::new();
    let run = &exp.run;
    let _ = writeln!(out, "method = {}", run.method.tag());
    let _ = writeln!(
        out,
        "seeds = {}",
        exp.seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    if let Some(dir) = &exp.out {
        let _ = writeln!(out, "out = {}", dir.display());
    }
    match &run.stream {
        StreamSpec::PermutedGaussians {
            tasks,
            dims,
            classes,
            per_class,
            spread,
            batch_size,
        } => {
            let _ = writeln!(out, "stream.kind = permuted-gaussians");
            let _ = writeln!(out, "stream.tasks = {tasks}");
            let _ = writeln!(out, "stream.dims = {dims}");
            let _ = writeln!(out, "stream.classes_per_task = {classes}");
            let _ = writeln!(out, "stream.per_class = {per_class}");
            let _ = writeln!(out, "stream.spread = {spread}");
            let _ = writeln!(out, "stream.batch_size = {batch_size}");
        }
        StreamSpec::SplitGaussians {
            tasks,
            classes_per_task,
            dims,
            per_class,
            spread,
            batch_size,
        } => {
            let _ = writeln!(out, "stream.kind = split-gaussians");
            let _ = writeln!(out, "stream.tasks = {tasks}");
            let _ = writeln!(out, "stream.dims = {dims}");
            let _ = writeln!(out, "stream.classes_per_task = {classes_per_task}");
            let _ = writeln!(out, "stream.per_class = {per_class}");
            let _ = writeln!(out, "stream.spread = {spread}");
            let _ = writeln!(out, "stream.batch_size = {batch_size}");
        }
        StreamSpec::PermutedIdx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            tasks,
            batch_size,
        } => {
            let _ = writeln!(out, "stream.kind = permuted-idx");
            let _ = writeln!(out, "stream.tasks = {tasks}");
            let _ = writeln!(out, "stream.batch_size = {batch_size}");
            let _ = writeln!(out, "stream.train_images = {train_images}");
            let _ = writeln!(out, "stream.train_labels = {train_labels}");
            let _ = writeln!(out, "stream.test_images = {test_images}");
            let _ = writeln!(out, "stream.test_labels = {test_labels}");
        }
    }
    let hidden: Vec<String> = run.hidden.iter().map(|w| w.to_string()).collect();
    let _ = writeln!(out, "model.hidden = {}", hidden.join(","));
    let m = &run.margins;
    let _ = writeln!(out, "loss.m_c = {}", m.class_margin);
    let _ = writeln!(out, "loss.m_t = {}", m.task_margin);
    let _ = writeln!(out, "loss.s = {}", m.scale);
    let _ = writeln!(out, "loss.tau = {}", m.temperature);
    let _ = writeln!(out, "loss.clamp = {}", m.clamp_tolerance);
    let _ = writeln!(out, "memory.budget = {}", run.memory_budget);
    let _ = writeln!(out, "memory.epsilon = {}", run.epsilon);
    let _ = writeln!(out, "memory.refresh_eviction = {}", run.refresh_eviction);
    let _ = writeln!(out, "train.lr = {}", run.learning_rate);
    let _ = writeln!(out, "train.cdl = {}", run.cdl);
    let _ = writeln!(out, "train.eval = {}", run.eval_mode.tag());
    let _ = writeln!(out, "train.observe = {}", run.observe_schedule.tag());
    let _ = writeln!(
        out,
        "train.eval_every_batches = {}",
        run.eval_every_batches.unwrap_or(0)
    );
    let _ = writeln!(out, "train.probe = {}", run.probe_size);
    out
}

/// A copy of the effective config pinned to one seed, written per run dir.
pub fn effective_text_for_seed(exp: &Experiment, seed: u64) -> String {
    let mut single = exp.clone();
    single.seeds = vec![seed];
    single.run.seed = seed;
    effective_text(&single)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let exp = parse_str("method = van\n", "test").unwrap();
        assert_eq!(exp.run.method, Method::Van);
        assert_eq!(exp.seeds, vec![1234]);
        assert_eq!(exp.run.eval_mode, EvalMode::Head);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = parse_str("method = drr\nbogus.key = 1\n", "cfg").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("bogus.key"), "{msg}");
    }

    #[test]
    fn bad_line_reports_number() {
        let err = parse_str("method = drr\nnonsense line\n", "cfg").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("cfg:2"), "{msg}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = parse_str("train.lr = 0.1\ntrain.lr = 0.2\n", "cfg").unwrap_err();
        assert!(format!("{err:#}").contains("duplicate"));
    }

    #[test]
    fn stream_key_for_wrong_kind_rejected() {
        let err = parse_str(
            "stream.kind = permuted-idx\nstream.dims = 4\n",
            "cfg",
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("does not apply"));
    }

    #[test]
    fn effective_round_trip() {
        let text = "method = er-reservoir\nseeds = 7,8\nstream.kind = split-gaussians\nstream.tasks = 2\nstream.classes_per_task = 2\nstream.dims = 8\nstream.per_class = 40\ntrain.lr = 0.07\nmodel.hidden = 16,8\n";
        let exp = parse_str(text, "cfg").unwrap();
        let eff = effective_text(&exp);
        let back = parse_str(&eff, "effective").unwrap();
        assert_eq!(effective_text(&back), eff);
        assert_eq!(back.seeds, vec![7, 8]);
        assert_eq!(back.run.learning_rate, 0.07);
        assert_eq!(back.run.hidden, vec![16, 8]);
    }

    #[test]
    fn idx_stream_requires_paths() {
        let err = parse_str("stream.kind = permuted-idx\n", "cfg").unwrap_err();
        assert!(format!("{err:#}").contains("train_images"));
    }
}
