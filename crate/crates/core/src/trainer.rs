//! The single-pass training loop and its baselines.
//!
//! One run consumes a task stream exactly once. The drift-reducing method
//! trains the shared backbone with the margin contrastive loss on the new
//! batch plus a rehearsal batch (and optionally the distillation anchor),
//! feeds every sample through the centroid store after the step, and
//! classifies by nearest class mean. Baselines train with cross-entropy
//! through per-task heads: plain fine-tuning (no memory) or experience
//! replay over ring / reservoir / random-replacement buffers.
//!
//! Evaluation happens at every task boundary (optionally every K batches),
//! fanning out over the test set via [`crate::par`]; feature snapshots of a
//! fixed probe set per task feed the drift diagnostics.

use crate::cos::CosStore;
use crate::error::{Error, Result};
use crate::losses::{
    build_anchor_views, cross_entropy, total_objective, MarginConfig, PrototypeSet,
};
use crate::metrics::{
    average_accuracy, domain_distance, forgetting_measure, ltr, AccuracyMatrix, BatchRow,
    FeatureSnapshot,
};
use crate::model::{GradientBuffer, Model};
use crate::numerics::{l2_distance, Vec64};
use crate::par;
use crate::rng::RandomSource;
use crate::streams::{StreamSpec, TaskStream};
use crate::{ClassId, TaskId};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

/// Training method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Continual fine-tuning with cross-entropy, no memory (lower bound).
    Van,
    /// Experience replay with a per-class FIFO ring buffer.
    ErRing,
    /// Experience replay with reservoir sampling over the stream.
    ErReservoir,
    /// Experience replay with random replacement.
    ErRandom,
    /// Drift-reducing rehearsal: centroid store + margin contrastive loss
    /// (+ distillation when enabled).
    Drr,
    /// Same with the distillation term disabled.
    DrrNoCdl,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        Ok(match s {
            "van" => Method::Van,
            "er-ring" => Method::ErRing,
            "er-reservoir" => Method::ErReservoir,
            "er-random" => Method::ErRandom,
            "drr" => Method::Drr,
            "drr-nocdl" => Method::DrrNoCdl,
            other => return Err(Error::config(format!("unknown method {other:?}"))),
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Van => "van",
            Method::ErRing => "er-ring",
            Method::ErReservoir => "er-reservoir",
            Method::ErRandom => "er-random",
            Method::Drr => "drr",
            Method::DrrNoCdl => "drr-nocdl",
        }
    }

    fn is_drr(&self) -> bool {
        matches!(self, Method::Drr | Method::DrrNoCdl)
    }
}

/// How predictions are made at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Nearest class mean over the centroid store, task-scoped candidates.
    Ncm,
    /// Argmax of the task head's logits.
    Head,
}

impl EvalMode {
    pub fn parse(s: &str) -> Result<EvalMode> {
        Ok(match s {
            "ncm" => EvalMode::Ncm,
            "head" => EvalMode::Head,
            other => return Err(Error::config(format!("unknown eval mode {other:?}"))),
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            EvalMode::Ncm => "ncm",
            EvalMode::Head => "head",
        }
    }
}

/// When stored memory is updated with the new batch's samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserveSchedule {
    /// After every optimizer step (streaming store; default).
    PerBatch,
    /// Once at the end of each task, with that task's full data.
    PerTask,
}

impl ObserveSchedule {
    pub fn parse(s: &str) -> Result<ObserveSchedule> {
        Ok(match s {
            "per-batch" => ObserveSchedule::PerBatch,
            "per-task" => ObserveSchedule::PerTask,
            other => return Err(Error::config(format!("unknown observe schedule {other:?}"))),
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ObserveSchedule::PerBatch => "per-batch",
            ObserveSchedule::PerTask => "per-task",
        }
    }
}

/// Everything one run needs, seed included.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub stream: StreamSpec,
    pub hidden: Vec<usize>,
    pub margins: MarginConfig,
    pub memory_budget: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Distillation toggle; only effective for [`Method::Drr`].
    pub cdl: bool,
    pub eval_mode: EvalMode,
    pub observe_schedule: ObserveSchedule,
    /// Recompute eviction distances from raw inputs instead of snapshots.
    pub refresh_eviction: bool,
    /// Extra evaluations every K batches (None: boundaries only).
    pub eval_every_batches: Option<u64>,
    /// Probe-set size per task for drift snapshots.
    pub probe_size: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Desk-scale defaults: the 5-task permuted-gaussian stream, a 32×32
    /// backbone, 100 memory slots per task. Learning rates come from a
    /// per-method grid search on this stream (baselines tuned for
    /// just-finished-task accuracy; the rehearsal method balances that
    /// against final average accuracy, which is the axis it trades on).
    pub fn desk_default(method: Method, seed: u64) -> RunConfig {
        let stream = StreamSpec::desk_default();
        let tasks = 5;
        RunConfig {
            method,
            stream,
            hidden: vec![32, 32],
            margins: MarginConfig::default(),
            memory_budget: 100 * tasks,
            epsilon: 3.0,
            learning_rate: if method.is_drr() { 0.0015 } else { 0.05 },
            cdl: true,
            eval_mode: if method.is_drr() { EvalMode::Ncm } else { EvalMode::Head },
            observe_schedule: ObserveSchedule::PerBatch,
            refresh_eviction: false,
            eval_every_batches: None,
            probe_size: 100,
            seed,
        }
    }

    fn cdl_enabled(&self) -> bool {
        matches!(self.method, Method::Drr) && self.cdl
    }

    pub fn validate(&self) -> Result<()> {
        self.margins.validate()?;
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::config("centroid threshold must be positive"));
        }
        if self.probe_size == 0 {
            return Err(Error::config("probe size must be positive"));
        }
        if !self.method.is_drr() && self.eval_mode == EvalMode::Ncm {
            return Err(Error::config(
                "nearest-mean evaluation needs the centroid store; baselines use eval = head",
            ));
        }
        Ok(())
    }
}

/// Final metric values of a run. Forgetting and long-term remembering are
/// undefined for single-task streams.
#[derive(Debug, Clone)]
pub struct MetricsSummary {
    pub a_t: f64,
    pub f_t: Option<f64>,
    pub ltr: Option<f64>,
}

/// One drift diagnostic row: how far an old task's probe features moved from
/// their end-of-task anchor, and the change since the previous boundary.
#[derive(Debug, Clone)]
pub struct DriftRecord {
    pub after_task: TaskId,
    pub task: TaskId,
    pub dist_to_anchor: f64,
    pub stability_gap: f64,
}

/// Wall-clock accounting. Excluded from the determinism contract.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub total_s: f64,
    pub eval_s: f64,
    pub observe_us_mean: f64,
    pub observe_count: u64,
}

/// Everything a run leaves behind.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub matrix: AccuracyMatrix,
    pub drift: Vec<DriftRecord>,
    pub memory_dump: String,
    pub summary: MetricsSummary,
    pub timings: Timings,
}

impl RunLog {
    pub fn accuracy_csv(&self) -> String {
        self.matrix.to_csv()
    }

    pub fn drift_csv(&self) -> String {
        let mut out = String::from("after_task,task,dist_to_anchor,stability_gap\n");
        for r in &self.drift {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.after_task, r.task, r.dist_to_anchor, r.stability_gap
            );
        }
        out
    }

    /// The structured metrics record (keys A_T, F_T, LTR).
    pub fn metrics_text(&self) -> String {
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => x.to_string(),
            None => "NA".to_string(),
        };
        format!(
            "A_T = {}\nF_T = {}\nLTR = {}\n",
            self.summary.a_t,
            fmt_opt(self.summary.f_t),
            fmt_opt(self.summary.ltr)
        )
    }
}

/// A stored rehearsal example as the baselines keep it.
#[derive(Debug, Clone)]
pub struct StoredSample {
    pub input: Vec64,
    pub label: ClassId,
    pub task: TaskId,
    pub feature: Vec64,
}

/// Classic ring buffer: one fixed-size FIFO queue per class, the budget
/// split statically over the stream's total class count.
#[derive(Debug)]
struct RingBuffer {
    per_class: usize,
    classes: BTreeMap<ClassId, VecDeque<StoredSample>>,
}

impl RingBuffer {
    fn new(budget: usize, total_classes: usize) -> Self {
        RingBuffer {
            per_class: budget / total_classes.max(1),
            classes: BTreeMap::new(),
        }
    }

    fn len(&self) -> usize {
        self.classes.values().map(|q| q.len()).sum()
    }

    fn insert(&mut self, sample: StoredSample) {
        if self.per_class == 0 {
            return;
        }
        let q = self.classes.entry(sample.label).or_default();
        q.push_back(sample);
        while q.len() > self.per_class {
            q.pop_front();
        }
    }

    fn flatten(&self) -> Vec<&StoredSample> {
        self.classes.values().flat_map(|q| q.iter()).collect()
    }
}

#[derive(Debug)]
struct ReservoirBuffer {
    budget: usize,
    seen: usize,
    items: Vec<StoredSample>,
}

impl ReservoirBuffer {
    fn new(budget: usize) -> Self {
        ReservoirBuffer {
            budget,
            seen: 0,
            items: Vec::new(),
        }
    }

    fn insert(&mut self, sample: StoredSample, rng: &mut RandomSource) {
        if self.budget == 0 {
            return;
        }
        self.seen += 1;
        if self.items.len() < self.budget {
            self.items.push(sample);
        } else {
            let j = rng.index(self.seen);
            if j < self.budget {
                self.items[j] = sample;
            }
        }
    }
}

#[derive(Debug)]
struct RandomReplaceBuffer {
    budget: usize,
    items: Vec<StoredSample>,
}

impl RandomReplaceBuffer {
    fn new(budget: usize) -> Self {
        RandomReplaceBuffer {
            budget,
            items: Vec::new(),
        }
    }

    fn insert(&mut self, sample: StoredSample, rng: &mut RandomSource) {
        if self.budget == 0 {
            return;
        }
        if self.items.len() < self.budget {
            self.items.push(sample);
        } else {
            let j = rng.index(self.budget);
            self.items[j] = sample;
        }
    }
}

/// Replay memory behind one interface so the learner code is shared.
#[derive(Debug)]
enum Memory {
    None,
    Cos(Box<CosStore>),
    Ring(RingBuffer),
    Reservoir(ReservoirBuffer),
    Random(RandomReplaceBuffer),
}

impl Memory {
    fn len(&self) -> usize {
        match self {
            Memory::None => 0,
            Memory::Cos(s) => s.total_slots(),
            Memory::Ring(b) => b.len(),
            Memory::Reservoir(b) => b.items.len(),
            Memory::Random(b) => b.items.len(),
        }
    }

    fn insert(&mut self, sample: StoredSample, rng: &mut RandomSource) -> Result<()> {
        match self {
            Memory::None => {}
            Memory::Cos(s) => {
                s.observe(&sample.input, sample.label, sample.task, &sample.feature)?;
            }
            Memory::Ring(b) => b.insert(sample),
            Memory::Reservoir(b) => b.insert(sample, rng),
            Memory::Random(b) => b.insert(sample, rng),
        }
        Ok(())
    }

    fn sample(&self, size: usize, rng: &mut RandomSource) -> Result<Vec<StoredSample>> {
        match self {
            Memory::None => Err(Error::Empty("rehearsal memory")),
            Memory::Cos(s) => Ok(s
                .rehearsal_batch(size, rng)?
                .into_iter()
                .map(|m| StoredSample {
                    input: m.input,
                    label: m.label,
                    task: m.task,
                    feature: m.feature,
                })
                .collect()),
            Memory::Ring(b) => sample_flat(&b.flatten(), size, rng),
            Memory::Reservoir(b) => sample_flat(&b.items.iter().collect::<Vec<_>>(), size, rng),
            Memory::Random(b) => sample_flat(&b.items.iter().collect::<Vec<_>>(), size, rng),
        }
    }

    fn dump(&self) -> String {
        match self {
            Memory::Cos(s) => s.dump(),
            Memory::None => String::from("# memory dump v1\n# class task centroid n_input n_feature input... feature...\n"),
            Memory::Ring(b) => dump_flat(&b.flatten()),
            Memory::Reservoir(b) => dump_flat(&b.items.iter().collect::<Vec<_>>()),
            Memory::Random(b) => dump_flat(&b.items.iter().collect::<Vec<_>>()),
        }
    }

    fn cos(&self) -> Option<&CosStore> {
        match self {
            Memory::Cos(s) => Some(s),
            _ => None,
        }
    }
}

fn sample_flat(items: &[&StoredSample], size: usize, rng: &mut RandomSource) -> Result<Vec<StoredSample>> {
    if items.is_empty() {
        return Err(Error::Empty("rehearsal memory"));
    }
    let picked: Vec<usize> = if size <= items.len() {
        rng.sample_indices(items.len(), size)
    } else {
        (0..size).map(|_| rng.index(items.len())).collect()
    };
    Ok(picked.into_iter().map(|i| items[i].clone()).collect())
}

fn dump_flat(items: &[&StoredSample]) -> String {
    let mut out = String::from(
        "# memory dump v1\n# class task centroid n_input n_feature input... feature...\n",
    );
    for s in items {
        let _ = write!(
            out,
            "{} {} 0 {} {}",
            s.label,
            s.task,
            s.input.len(),
            s.feature.len()
        );
        for v in s.input.as_slice() {
            let _ = write!(out, " {v}");
        }
        for v in s.feature.as_slice() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

/// Candidate scope for the nearest-class-mean classifier.
#[derive(Debug, Clone, Copy)]
pub enum TaskScope<'a> {
    /// Restrict candidates to these classes (task-incremental).
    Classes(&'a [ClassId]),
    /// All classes the store has seen.
    AllSeen,
}

/// Nearest-class-mean prediction over the store's class means.
#[derive(Debug, Clone)]
pub struct NcmOutcome {
    /// None when no candidate class has a usable mean.
    pub prediction: Option<ClassId>,
    /// Candidate classes excluded for lack of memory.
    pub excluded: Vec<ClassId>,
}

/// Predict the candidate class whose mean feature is nearest to `feature`;
/// ties go to the lowest class id. Classes without a class mean are excluded
/// and reported.
pub fn classify_ncm(store: &CosStore, feature: &Vec64, scope: TaskScope<'_>) -> Result<NcmOutcome> {
    let candidates: Vec<ClassId> = match scope {
        TaskScope::Classes(cs) => cs.to_vec(),
        TaskScope::AllSeen => store.seen_classes().map(|(c, _)| c).collect(),
    };
    let mut excluded = Vec::new();
    let mut best: Option<(ClassId, f64)> = None;
    for class in candidates {
        let mean = match store.class_mean(class) {
            Ok(m) => m,
            Err(_) => {
                excluded.push(class);
                continue;
            }
        };
        let d = l2_distance(feature, &mean)?;
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((class, d)),
        }
    }
    Ok(NcmOutcome {
        prediction: best.map(|(c, _)| c),
        excluded,
    })
}

struct Runner {
    cfg: RunConfig,
    stream: TaskStream,
    model: Model,
    gbuf: GradientBuffer,
    memory: Memory,
    init_rng: RandomSource,
    rehearsal_rng: RandomSource,
    policy_rng: RandomSource,
    matrix: AccuracyMatrix,
    drift: Vec<DriftRecord>,
    anchors: BTreeMap<TaskId, FeatureSnapshot>,
    previous: BTreeMap<TaskId, f64>, // previous boundary's distance to anchor
    warned_classes: BTreeSet<ClassId>,
    observe_ns: u128,
    observe_count: u64,
    eval_s: f64,
}

impl Runner {
    fn new(cfg: RunConfig, sampler_override: Option<SamplerKind>) -> Result<Self> {
        cfg.validate()?;
        let stream = cfg.stream.build(cfg.seed)?;
        let mut init_rng = RandomSource::new(cfg.seed, "init");
        let model = Model::new(stream.input_dim(), &cfg.hidden, &mut init_rng)?;
        let gbuf = model.grad_buffer();
        let memory = match sampler_override {
            Some(kind) => make_memory_for_sampler(&cfg, kind, stream_total_classes(&stream)),
            None => match cfg.method {
                Method::Van => Memory::None,
                Method::ErRing => {
                    Memory::Ring(RingBuffer::new(cfg.memory_budget, stream_total_classes(&stream)))
                }
                Method::ErReservoir => Memory::Reservoir(ReservoirBuffer::new(cfg.memory_budget)),
                Method::ErRandom => Memory::Random(RandomReplaceBuffer::new(cfg.memory_budget)),
                Method::Drr | Method::DrrNoCdl => Memory::Cos(Box::new(CosStore::new(
                    cfg.memory_budget,
                    cfg.epsilon,
                    RandomSource::new(cfg.seed, "bernoulli"),
                ))),
            },
        };
        let tasks = stream.task_count();
        Ok(Runner {
            rehearsal_rng: RandomSource::new(cfg.seed, "rehearsal"),
            policy_rng: RandomSource::new(cfg.seed, "memory-policy"),
            matrix: AccuracyMatrix::new(tasks),
            cfg,
            stream,
            model,
            gbuf,
            memory,
            init_rng,
            drift: Vec::new(),
            anchors: BTreeMap::new(),
            previous: BTreeMap::new(),
            warned_classes: BTreeSet::new(),
            observe_ns: 0,
            observe_count: 0,
            eval_s: 0.0,
        })
    }

    fn heads_trained(&self) -> bool {
        !self.cfg.method.is_drr() || self.cfg.eval_mode == EvalMode::Head
    }

    fn uses_contrastive(&self) -> bool {
        self.cfg.method.is_drr()
    }

    fn run(mut self) -> Result<RunLog> {
        let started = Instant::now();
        let mut current_task: Option<TaskId> = None;
        let mut batch_in_task: u64 = 0;
        let mut task_buffer: Vec<(Vec64, ClassId, TaskId)> = Vec::new();

        while let Some(batch) = self.stream.next_batch() {
            if current_task != Some(batch.task) {
                if let Some(done) = current_task {
                    self.finish_task(done, &mut task_buffer)?;
                }
                current_task = Some(batch.task);
                batch_in_task = 0;
                if self.heads_trained() {
                    let classes = self.stream.task_classes(batch.task)?.len();
                    self.model.ensure_head(batch.task, classes, &mut self.init_rng)?;
                    self.gbuf = self.model.grad_buffer();
                }
            }
            batch_in_task += 1;

            if self.uses_contrastive() {
                self.step_contrastive(&batch)?;
            } else {
                self.step_cross_entropy(&batch)?;
            }

            // Store maintenance with post-step features.
            match self.cfg.observe_schedule {
                ObserveSchedule::PerBatch => {
                    for s in &batch.samples {
                        self.insert_sample(&s.input, s.label, s.task)?;
                    }
                }
                ObserveSchedule::PerTask => {
                    for s in &batch.samples {
                        task_buffer.push((s.input.clone(), s.label, s.task));
                    }
                }
            }

            if let Some(every) = self.cfg.eval_every_batches {
                if every > 0 && batch_in_task % every == 0 {
                    let row = self.evaluate_upto(batch.task)?;
                    self.matrix.record_batch_row(BatchRow {
                        after_task: batch.task,
                        batch: batch_in_task,
                        accuracies: row,
                    });
                }
            }
        }
        let last = current_task.ok_or(Error::Empty("stream"))?;
        self.finish_task(last, &mut task_buffer)?;

        let tasks = self.stream.task_count();
        let summary = MetricsSummary {
            a_t: average_accuracy(&self.matrix, tasks)?,
            f_t: if tasks >= 2 { Some(forgetting_measure(&self.matrix, tasks)?) } else { None },
            ltr: if tasks >= 2 { Some(ltr(&self.matrix, tasks)?) } else { None },
        };
        let timings = Timings {
            total_s: started.elapsed().as_secs_f64(),
            eval_s: self.eval_s,
            observe_us_mean: if self.observe_count > 0 {
                self.observe_ns as f64 / 1000.0 / self.observe_count as f64
            } else {
                0.0
            },
            observe_count: self.observe_count,
        };
        Ok(RunLog {
            matrix: self.matrix,
            drift: self.drift,
            memory_dump: self.memory.dump(),
            summary,
            timings,
        })
    }

    /// End-of-task bookkeeping: deferred store updates, boundary evaluation,
    /// probe snapshots, drift rows.
    fn finish_task(&mut self, task: TaskId, task_buffer: &mut Vec<(Vec64, ClassId, TaskId)>) -> Result<()> {
        if self.cfg.observe_schedule == ObserveSchedule::PerTask {
            for (input, label, t) in task_buffer.drain(..) {
                self.insert_sample(&input, label, t)?;
            }
        }

        let eval_started = Instant::now();
        for j in 0..=task {
            let acc = self.evaluate_task(j)?;
            self.matrix.record_boundary(task, j, acc)?;
        }

        // Probe snapshots and drift rows for every task seen so far.
        for i in 0..=task {
            let snap = self.take_snapshot(i, task)?;
            if i == task {
                self.previous.insert(i, 0.0);
                self.anchors.insert(i, snap);
            } else {
                let anchor = &self.anchors[&i];
                let dist = domain_distance(&snap, anchor)?;
                let prev = self.previous[&i];
                self.drift.push(DriftRecord {
                    after_task: task,
                    task: i,
                    dist_to_anchor: dist,
                    stability_gap: dist - prev,
                });
                self.previous.insert(i, dist);
            }
        }
        self.eval_s += eval_started.elapsed().as_secs_f64();
        Ok(())
    }

    /// Feed one sample through the memory policy. The timed span covers the
    /// whole per-sample observation (feature extraction + policy update),
    /// matching how per-step sampler cost is reported.
    fn insert_sample(&mut self, input: &Vec64, label: ClassId, task: TaskId) -> Result<()> {
        let t0 = Instant::now();
        let feature = self.model.forward(input)?;
        let sample = StoredSample {
            input: input.clone(),
            label,
            task,
            feature,
        };
        self.memory.insert(sample, &mut self.policy_rng)?;
        self.observe_ns += t0.elapsed().as_nanos();
        self.observe_count += 1;
        Ok(())
    }

    /// One optimizer step of the drift-reducing method.
    fn step_contrastive(&mut self, batch: &crate::streams::Batch) -> Result<()> {
        let store = self.memory.cos().expect("contrastive methods use the centroid store");
        let prototypes: PrototypeSet = store.prototype_set();

        let traces: Vec<_> = batch
            .samples
            .iter()
            .map(|s| self.model.forward_trace(&s.input))
            .collect::<Result<_>>()?;
        let features: Vec<Vec64> = traces.iter().map(|t| t.feature().clone()).collect();
        let labels: Vec<ClassId> = batch.samples.iter().map(|s| s.label).collect();
        let tasks: Vec<TaskId> = batch.samples.iter().map(|s| s.task).collect();
        let (new_views, _) = build_anchor_views(&features, &labels, &tasks, &prototypes)?;

        let rehearsing = batch.task != 0 && self.memory.len() > 0;
        let (mem_samples, mem_traces, mem_features) = if rehearsing {
            let samples = self
                .memory
                .sample(self.stream.batch_size(), &mut self.rehearsal_rng)?;
            let traces: Vec<_> = samples
                .iter()
                .map(|s| self.model.forward_trace(&s.input))
                .collect::<Result<_>>()?;
            let features: Vec<Vec64> = traces.iter().map(|t| t.feature().clone()).collect();
            (samples, traces, features)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        let mem_labels: Vec<ClassId> = mem_samples.iter().map(|s| s.label).collect();
        let mem_tasks: Vec<TaskId> = mem_samples.iter().map(|s| s.task).collect();
        let (mem_views, _) = build_anchor_views(&mem_features, &mem_labels, &mem_tasks, &prototypes)?;
        let snapshots: Vec<Vec64> = mem_samples.iter().map(|s| s.feature.clone()).collect();

        let objective = total_objective(
            &features,
            &new_views,
            &mem_features,
            &mem_views,
            (rehearsing && self.cfg.cdl_enabled()).then_some(snapshots.as_slice()),
            &self.cfg.margins,
        )?;
        debug_assert!(
            objective.loss.is_finite(),
            "non-finite objective at task {}: cml_new {} cml_mem {} cdl {} feat_norms {:?}",
            batch.task,
            objective.cml_new,
            objective.cml_memory,
            objective.cdl,
            features.iter().map(|f| f.norm()).collect::<Vec<_>>()
        );

        for (trace, grad) in traces.iter().zip(&objective.new_grads) {
            self.model.backward_feature(trace, grad, &mut self.gbuf)?;
        }
        for (trace, grad) in mem_traces.iter().zip(&objective.mem_grads) {
            self.model.backward_feature(trace, grad, &mut self.gbuf)?;
        }

        // Head training on detached features when heads are in play.
        if self.heads_trained() {
            self.accumulate_head_ce(&batch.samples.iter().map(|s| (s.label, s.task)).collect::<Vec<_>>(), &features, false)?;
            if rehearsing {
                self.accumulate_head_ce(
                    &mem_samples.iter().map(|s| (s.label, s.task)).collect::<Vec<_>>(),
                    &mem_features,
                    false,
                )?;
            }
        }

        self.model.sgd_step(&mut self.gbuf, self.cfg.learning_rate)?;
        Ok(())
    }

    /// One optimizer step of the cross-entropy baselines.
    fn step_cross_entropy(&mut self, batch: &crate::streams::Batch) -> Result<()> {
        let rehearsing =
            !matches!(self.memory, Memory::None) && batch.task != 0 && self.memory.len() > 0;
        let mem_samples = if rehearsing {
            self.memory
                .sample(self.stream.batch_size(), &mut self.rehearsal_rng)?
        } else {
            Vec::new()
        };

        let mut inputs: Vec<(&Vec64, ClassId, TaskId)> = batch
            .samples
            .iter()
            .map(|s| (&s.input, s.label, s.task))
            .collect();
        inputs.extend(mem_samples.iter().map(|s| (&s.input, s.label, s.task)));

        let total = inputs.len() as f64;
        for (input, label, task) in inputs {
            let trace = self.model.forward_trace(input)?;
            let feature = trace.feature().clone();
            let logits = self.model.head_logits(&feature, task)?;
            let class_index = self.class_index_in_task(task, label)?;
            let (_, mut dlogits) = cross_entropy(&logits, class_index)?;
            dlogits.scale_in_place(1.0 / total);
            let dfeature = self.model.backward_head(&feature, task, &dlogits, &mut self.gbuf)?;
            self.model.backward_feature(&trace, &dfeature, &mut self.gbuf)?;
        }
        self.model.sgd_step(&mut self.gbuf, self.cfg.learning_rate)?;
        Ok(())
    }

    /// Cross-entropy gradients into the heads only (features detached).
    fn accumulate_head_ce(
        &mut self,
        labels_tasks: &[(ClassId, TaskId)],
        features: &[Vec64],
        through_backbone: bool,
    ) -> Result<()> {
        debug_assert!(!through_backbone);
        if labels_tasks.is_empty() {
            return Ok(());
        }
        let total = labels_tasks.len() as f64;
        for ((label, task), feature) in labels_tasks.iter().zip(features) {
            let logits = self.model.head_logits(feature, *task)?;
            let class_index = self.class_index_in_task(*task, *label)?;
            let (_, mut dlogits) = cross_entropy(&logits, class_index)?;
            dlogits.scale_in_place(1.0 / total);
            let _ = self.model.backward_head(feature, *task, &dlogits, &mut self.gbuf)?;
        }
        Ok(())
    }

    fn class_index_in_task(&self, task: TaskId, label: ClassId) -> Result<usize> {
        self.stream
            .task_classes(task)?
            .iter()
            .position(|&c| c == label)
            .ok_or(Error::UnknownClass(label))
    }

    /// Accuracy of one task's full test set under the configured eval mode.
    fn evaluate_task(&mut self, task: TaskId) -> Result<f64> {
        let n = self.stream.test_len(task);
        if n == 0 {
            return Err(Error::MetricUndefined("empty test set"));
        }
        let classes = self.stream.task_classes(task)?.to_vec();

        enum Candidates {
            Means(Vec<(ClassId, Vec64)>),
            Head,
        }
        let candidates = match self.cfg.eval_mode {
            EvalMode::Ncm => {
                let store = self
                    .memory
                    .cos()
                    .ok_or_else(|| Error::config("nearest-mean evaluation needs the centroid store"))?;
                let mut means = Vec::new();
                for &c in &classes {
                    match store.class_mean(c) {
                        Ok(m) => means.push((c, m)),
                        Err(_) => {
                            if self.warned_classes.insert(c) {
                                eprintln!("warning: class {c} has no memory; excluded from nearest-mean candidates");
                            }
                        }
                    }
                }
                Candidates::Means(means)
            }
            EvalMode::Head => Candidates::Head,
        };

        let model = &self.model;
        let stream = &self.stream;
        let results: Vec<Result<bool>> = par::map_indexed(n, |i| {
            let sample = stream.test_sample(task, i)?;
            let feature = model.forward(&sample.input)?;
            let prediction = match &candidates {
                Candidates::Means(means) => {
                    let mut best: Option<(ClassId, f64)> = None;
                    for (c, mean) in means {
                        let d = l2_distance(&feature, mean)?;
                        match best {
                            Some((_, bd)) if d >= bd => {}
                            _ => best = Some((*c, d)),
                        }
                    }
                    best.map(|(c, _)| c)
                }
                Candidates::Head => {
                    let logits = model.head_logits(&feature, task)?;
                    let mut best = 0usize;
                    for (i, l) in logits.as_slice().iter().enumerate() {
                        if *l > logits[best] {
                            best = i;
                        }
                    }
                    Some(classes[best])
                }
            };
            Ok(prediction == Some(sample.label))
        });
        let mut correct = 0usize;
        for r in results {
            if r? {
                correct += 1;
            }
        }
        Ok(correct as f64 / n as f64)
    }

    fn evaluate_upto(&mut self, task: TaskId) -> Result<Vec<Option<f64>>> {
        let mut row = vec![None; self.stream.task_count()];
        for j in 0..=task {
            row[j] = Some(self.evaluate_task(j)?);
        }
        Ok(row)
    }

    /// Features of the task's fixed probe set (a prefix of its test split).
    fn take_snapshot(&self, task: TaskId, after_task: TaskId) -> Result<FeatureSnapshot> {
        let n = self.stream.test_len(task).min(self.cfg.probe_size);
        if n == 0 {
            return Err(Error::MetricUndefined("empty probe set"));
        }
        let model = &self.model;
        let stream = &self.stream;
        let results: Vec<Result<(Vec64, ClassId)>> = par::map_indexed(n, |i| {
            let sample = stream.test_sample(task, i)?;
            Ok((model.forward(&sample.input)?, sample.label))
        });
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for r in results {
            let (f, c) = r?;
            features.push(f);
            labels.push(c);
        }
        Ok(FeatureSnapshot {
            task,
            after_task,
            features,
            labels,
        })
    }
}

/// Execute one full run.
pub fn run(cfg: &RunConfig) -> Result<RunLog> {
    Runner::new(cfg.clone(), None)?.run()
}

/// Memory policy under comparison in [`compare_samplers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Ring,
    Reservoir,
    Random,
    Cos,
}

impl SamplerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SamplerKind::Ring => "ring",
            SamplerKind::Reservoir => "reservoir",
            SamplerKind::Random => "random",
            SamplerKind::Cos => "cos",
        }
    }

    pub const ALL: [SamplerKind; 4] = [
        SamplerKind::Ring,
        SamplerKind::Reservoir,
        SamplerKind::Random,
        SamplerKind::Cos,
    ];
}

fn stream_total_classes(stream: &TaskStream) -> usize {
    (0..stream.task_count())
        .map(|t| stream.task_classes(t).map(|c| c.len()).unwrap_or(0))
        .sum()
}

fn make_memory_for_sampler(cfg: &RunConfig, kind: SamplerKind, total_classes: usize) -> Memory {
    match kind {
        SamplerKind::Ring => Memory::Ring(RingBuffer::new(cfg.memory_budget, total_classes)),
        SamplerKind::Reservoir => Memory::Reservoir(ReservoirBuffer::new(cfg.memory_budget)),
        SamplerKind::Random => Memory::Random(RandomReplaceBuffer::new(cfg.memory_budget)),
        SamplerKind::Cos => Memory::Cos(Box::new(CosStore::new(
            cfg.memory_budget,
            cfg.epsilon,
            RandomSource::new(cfg.seed, "bernoulli"),
        ))),
    }
}

/// One row of the sampler comparison table.
#[derive(Debug, Clone)]
pub struct SamplerRow {
    pub sampler: SamplerKind,
    pub a_t: f64,
    pub f_t: f64,
    pub ltr: f64,
    pub observe_us: f64,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Identical cross-entropy replay learner, varying only the memory policy.
/// Metrics are medians over the seeds; observe time is the mean.
pub fn compare_samplers(base: &RunConfig, seeds: &[u64]) -> Result<Vec<SamplerRow>> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let mut rows = Vec::new();
    for kind in SamplerKind::ALL {
        let mut a = Vec::new();
        let mut f = Vec::new();
        let mut l = Vec::new();
        let mut observe = 0.0;
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.method = Method::ErRing; // learner shape: replay + cross-entropy
            cfg.eval_mode = EvalMode::Head;
            let log = Runner::new(cfg, Some(kind))?.run()?;
            a.push(log.summary.a_t);
            f.push(log.summary.f_t.ok_or(Error::MetricUndefined("single-task comparison"))?);
            l.push(log.summary.ltr.ok_or(Error::MetricUndefined("single-task comparison"))?);
            observe += log.timings.observe_us_mean;
        }
        rows.push(SamplerRow {
            sampler: kind,
            a_t: median(&mut a),
            f_t: median(&mut f),
            ltr: median(&mut l),
            observe_us: observe / seeds.len() as f64,
        });
    }
    Ok(rows)
}

/// Render sampler rows as the pinned CSV schema.
pub fn sampler_rows_csv(rows: &[SamplerRow]) -> String {
    let mut out = String::from("sampler,A_T,F_T,LTR,observe_us\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.sampler.tag(), r.a_t, r.f_t, r.ltr, r.observe_us);
    }
    out
}
