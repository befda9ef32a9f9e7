//! Centroid-based online selection: the rehearsal memory store.
//!
//! Per class, the store keeps a list of streaming centroids (running mean +
//! sample count) and a list of stored slots (raw input, label, task, feature
//! snapshot, owning centroid). A new sample either creates a centroid (when
//! it is farther than `epsilon` from every centroid of its class) or folds
//! into the nearest one; admission into the slot memory is a Bernoulli draw
//! with probability proportional to the owning centroid's mass (forced for a
//! just-created centroid). A fixed total budget is divided evenly across
//! seen classes with ceiling division; overflow evicts the stored slot whose
//! feature snapshot sits farthest from its centroid.
//!
//! Quota shrinks are applied as soon as the class set grows, and a global
//! sweep keeps the slot total within the budget even when per-class quotas
//! would let it overshoot — both so that budget safety holds after every
//! single observe.

use crate::error::{Error, Result};
use crate::losses::PrototypeSet;
use crate::numerics::{l2_distance, Vec64};
use crate::rng::RandomSource;
use crate::{ClassId, TaskId};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Running mean of the features one cluster of a class has absorbed.
#[derive(Debug, Clone)]
pub struct Centroid {
    pub class: ClassId,
    pub mean: Vec64,
    /// Number of samples absorbed (N_i), at least 1 once created.
    pub count: u64,
}

/// One stored rehearsal example.
#[derive(Debug, Clone)]
pub struct MemorySlot {
    pub input: Vec64,
    pub label: ClassId,
    pub task: TaskId,
    /// Feature at admission time; doubles as the distillation anchor.
    pub feature: Vec64,
    /// Index of the owning centroid within its class.
    pub centroid: usize,
}

/// What one observe call did to the store.
#[derive(Debug, Clone, Default)]
pub struct UpdateReport {
    pub created_centroid: bool,
    /// Index of the created or updated centroid within the class.
    pub centroid: usize,
    pub admitted: bool,
    pub evicted: Vec<MemorySlot>,
}

#[derive(Debug, Clone)]
struct ClassEntry {
    task: TaskId,
    centroids: Vec<Centroid>,
    slots: Vec<MemorySlot>,
}

/// Closure recomputing a stored input's feature with the current model;
/// used by the opt-in fresh-feature eviction variant.
pub type FeatureRefresh<'a> = &'a mut dyn FnMut(&Vec64) -> Result<Vec64>;

#[derive(Debug, Clone)]
pub struct CosStore {
    budget: usize,
    epsilon: f64,
    classes: BTreeMap<ClassId, ClassEntry>,
    rng: RandomSource,
    feature_dim: Option<usize>,
    total_slots: usize,
}

impl CosStore {
    /// `budget` is the total slot budget m; `epsilon` the centroid creation
    /// threshold; `rng` should be a dedicated "bernoulli" stream.
    pub fn new(budget: usize, epsilon: f64, rng: RandomSource) -> Self {
        CosStore {
            budget,
            epsilon,
            classes: BTreeMap::new(),
            rng,
            feature_dim: None,
            total_slots: 0,
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Per-class slot quota: ceil(m / |C|). Only meaningful once a class
    /// has been seen.
    pub fn quota(&self) -> usize {
        let c = self.classes.len().max(1);
        self.budget.div_ceil(c)
    }

    pub fn seen_classes(&self) -> impl Iterator<Item = (ClassId, TaskId)> + '_ {
        self.classes.iter().map(|(c, e)| (*c, e.task))
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn centroids_of(&self, class: ClassId) -> &[Centroid] {
        self.classes
            .get(&class)
            .map(|e| e.centroids.as_slice())
            .unwrap_or(&[])
    }

    pub fn slots_of(&self, class: ClassId) -> &[MemorySlot] {
        self.classes
            .get(&class)
            .map(|e| e.slots.as_slice())
            .unwrap_or(&[])
    }

    pub fn total_slots(&self) -> usize {
        debug_assert_eq!(
            self.total_slots,
            self.classes.values().map(|e| e.slots.len()).sum::<usize>()
        );
        self.total_slots
    }

    pub fn is_empty(&self) -> bool {
        self.total_slots() == 0
    }

    /// Whether a class has memory slots stored (not just centroids).
    pub fn has_slots(&self, class: ClassId) -> bool {
        self.classes.get(&class).is_some_and(|e| !e.slots.is_empty())
    }

    /// Nearest centroid of `class` by Euclidean distance, ties broken by the
    /// lowest index. None when the class has no centroids yet.
    pub fn nearest_centroid(&self, feature: &Vec64, class: ClassId) -> Option<(usize, f64)> {
        let entry = self.classes.get(&class)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in entry.centroids.iter().enumerate() {
            let d = l2_distance(feature, &c.mean).ok()?;
            match best {
                Some((_, bd)) if d >= bd => {}
                _ => best = Some((i, d)),
            }
        }
        best
    }

    /// p(i) = N_i / Σ_j N_j over the class's centroids.
    pub fn selection_probability(&self, class: ClassId, centroid: usize) -> Result<f64> {
        let entry = self.classes.get(&class).ok_or(Error::UnknownClass(class))?;
        if centroid >= entry.centroids.len() {
            return Err(Error::UnknownClass(class));
        }
        let total: u64 = entry.centroids.iter().map(|c| c.count).sum();
        Ok(entry.centroids[centroid].count as f64 / total as f64)
    }

    /// Count-weighted mean of the class's centroid means.
    pub fn class_mean(&self, class: ClassId) -> Result<Vec64> {
        let entry = self.classes.get(&class).ok_or(Error::UnknownClass(class))?;
        if entry.centroids.is_empty() {
            return Err(Error::EmptyClass(class));
        }
        let dim = entry.centroids[0].mean.len();
        let mut acc = Vec64::zeros(dim);
        let mut total = 0u64;
        for c in &entry.centroids {
            acc.add_scaled(c.count as f64, &c.mean)?;
            total += c.count;
        }
        acc.scale_in_place(1.0 / total as f64);
        Ok(acc)
    }

    /// Normalized class-mean directions for every seen class with a usable
    /// mean, for use as contrastive prototypes. Zero-norm means are skipped.
    pub fn prototype_set(&self) -> PrototypeSet {
        let mut set = PrototypeSet::new();
        for (&class, entry) in &self.classes {
            if entry.centroids.is_empty() {
                continue;
            }
            if let Ok(mean) = self.class_mean(class) {
                if let Ok(direction) = mean.normalized() {
                    set.insert(class, entry.task, direction);
                }
            }
        }
        set
    }

    /// Process one labeled sample with its current feature, updating
    /// centroids, admitting into slot memory, and evicting as needed.
    pub fn observe(
        &mut self,
        input: &Vec64,
        label: ClassId,
        task: TaskId,
        feature: &Vec64,
    ) -> Result<UpdateReport> {
        self.observe_with(input, label, task, feature, None)
    }

    /// [`Self::observe`] with an optional feature refresher: when given,
    /// eviction distances are recomputed from each candidate's raw input
    /// instead of using the stored snapshots.
    pub fn observe_with(
        &mut self,
        input: &Vec64,
        label: ClassId,
        task: TaskId,
        feature: &Vec64,
        mut refresh: Option<FeatureRefresh<'_>>,
    ) -> Result<UpdateReport> {
        match self.feature_dim {
            Some(dim) if dim != feature.len() => {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: feature.len(),
                })
            }
            None => self.feature_dim = Some(feature.len()),
            _ => {}
        }

        let mut report = UpdateReport::default();

        // A new class shrinks the quota for everyone; apply it now so the
        // per-class bound holds after this call returns.
        if !self.classes.contains_key(&label) {
            self.classes.insert(
                label,
                ClassEntry {
                    task,
                    centroids: Vec::new(),
                    slots: Vec::new(),
                },
            );
            let quota = self.quota();
            let classes: Vec<ClassId> = self.classes.keys().cloned().collect();
            for class in classes {
                while self.classes[&class].slots.len() > quota {
                    let slot = self.evict_one(class, None, &mut refresh)?;
                    report.evicted.push(slot);
                }
            }
        }

        // Create-or-update against the class's centroids. An empty centroid
        // set reads as infinite distance, forcing creation.
        let nearest = self.nearest_centroid(feature, label);
        let entry = self.classes.get_mut(&label).expect("registered above");
        let target = match nearest {
            Some((idx, d)) if d <= self.epsilon => {
                let c = &mut entry.centroids[idx];
                let n = c.count as f64;
                let mean = c.mean.as_mut_slice();
                for (m, f) in mean.iter_mut().zip(feature.as_slice()) {
                    *m = (n * *m + f) / (n + 1.0);
                }
                c.count += 1;
                idx
            }
            _ => {
                entry.centroids.push(Centroid {
                    class: label,
                    mean: feature.clone(),
                    count: 1,
                });
                report.created_centroid = true;
                entry.centroids.len() - 1
            }
        };
        report.centroid = target;

        // Bernoulli admission, forced for a just-created centroid. The draw
        // always happens so the random stream advances uniformly.
        let p = if report.created_centroid {
            1.0
        } else {
            self.selection_probability(label, target)?
        };
        if self.rng.bernoulli(p) {
            report.admitted = true;
            let entry = self.classes.get_mut(&label).unwrap();
            entry.slots.push(MemorySlot {
                input: input.clone(),
                label,
                task,
                feature: feature.clone(),
                centroid: target,
            });
            self.total_slots += 1;
        }

        // Per-class quota, preferring slots owned by the touched centroid.
        let quota = self.quota();
        while self.classes[&label].slots.len() > quota {
            let slot = self.evict_one(label, Some(target), &mut refresh)?;
            report.evicted.push(slot);
        }

        // Ceiling quotas can sum past the budget once several classes sit at
        // the cap; sweep the largest class until the total fits again.
        while self.total_slots() > self.budget {
            let victim_class = self
                .classes
                .iter()
                .max_by(|(ca, ea), (cb, eb)| {
                    ea.slots
                        .len()
                        .cmp(&eb.slots.len())
                        .then(cb.cmp(ca))
                })
                .map(|(c, _)| *c)
                .expect("nonempty store");
            let slot = self.evict_one(victim_class, None, &mut refresh)?;
            report.evicted.push(slot);
        }

        Ok(report)
    }

    /// Remove the worst slot of `class`: among the preferred centroid's slots
    /// when it owns any (farthest snapshot from that centroid), otherwise the
    /// slot farthest from its own centroid. Ties keep the lowest index.
    fn evict_one(
        &mut self,
        class: ClassId,
        preferred: Option<usize>,
        refresh: &mut Option<FeatureRefresh<'_>>,
    ) -> Result<MemorySlot> {
        let entry = self.classes.get(&class).ok_or(Error::UnknownClass(class))?;
        debug_assert!(!entry.slots.is_empty());

        let candidates: Vec<usize> = match preferred {
            Some(c) if entry.slots.iter().any(|s| s.centroid == c) => entry
                .slots
                .iter()
                .enumerate()
                .filter(|(_, s)| s.centroid == c)
                .map(|(i, _)| i)
                .collect(),
            _ => (0..entry.slots.len()).collect(),
        };

        let mut worst: Option<(usize, f64)> = None;
        for &i in &candidates {
            let slot = &entry.slots[i];
            let center = &entry.centroids[slot.centroid].mean;
            let d = match refresh {
                Some(f) => l2_distance(&f(&slot.input)?, center)?,
                None => l2_distance(&slot.feature, center)?,
            };
            match worst {
                Some((_, wd)) if d <= wd => {}
                _ => worst = Some((i, d)),
            }
        }
        let (idx, _) = worst.expect("candidates nonempty");
        let entry = self.classes.get_mut(&class).unwrap();
        self.total_slots -= 1;
        Ok(entry.slots.remove(idx))
    }

    /// Uniform sample of stored slots: without replacement when `size` fits,
    /// with replacement otherwise. Deterministic given the source.
    pub fn rehearsal_batch(&self, size: usize, rng: &mut RandomSource) -> Result<Vec<MemorySlot>> {
        let flat = self.flatten_slots();
        if flat.is_empty() {
            return Err(Error::Empty("rehearsal memory"));
        }
        let picked: Vec<usize> = if size <= flat.len() {
            rng.sample_indices(flat.len(), size)
        } else {
            (0..size).map(|_| rng.index(flat.len())).collect()
        };
        Ok(picked.into_iter().map(|i| flat[i].clone()).collect())
    }

    fn flatten_slots(&self) -> Vec<&MemorySlot> {
        self.classes
            .values()
            .flat_map(|e| e.slots.iter())
            .collect()
    }

    /// Newline-delimited dump: one record per slot with class, task, owning
    /// centroid, input length, feature length, then the values.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str("# memory dump v1\n");
        out.push_str("# class task centroid n_input n_feature input... feature...\n");
        for entry in self.classes.values() {
            for slot in &entry.slots {
                let _ = write!(
                    out,
                    "{} {} {} {} {}",
                    slot.label,
                    slot.task,
                    slot.centroid,
                    slot.input.len(),
                    slot.feature.len()
                );
                for v in slot.input.as_slice() {
                    let _ = write!(out, " {v}");
                }
                for v in slot.feature.as_slice() {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parse a dump produced by [`Self::dump`].
    pub fn parse_dump(text: &str) -> Result<Vec<MemorySlot>> {
        let mut slots = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_ascii_whitespace();
            let mut next_usize = |what: &str| -> Result<usize> {
                it.next()
                    .ok_or_else(|| Error::format("memory dump", format!("line {}: missing {what}", ln + 1)))?
                    .parse::<usize>()
                    .map_err(|_| Error::format("memory dump", format!("line {}: bad {what}", ln + 1)))
            };
            let label = next_usize("class")?;
            let task = next_usize("task")?;
            let centroid = next_usize("centroid")?;
            let n_input = next_usize("n_input")?;
            let n_feature = next_usize("n_feature")?;
            let mut values = Vec::with_capacity(n_input + n_feature);
            for v in it {
                values.push(v.parse::<f64>().map_err(|_| {
                    Error::format("memory dump", format!("line {}: bad float", ln + 1))
                })?);
            }
            if values.len() != n_input + n_feature {
                return Err(Error::format(
                    "memory dump",
                    format!("line {}: expected {} values, got {}", ln + 1, n_input + n_feature, values.len()),
                ));
            }
            let feature = values.split_off(n_input);
            slots.push(MemorySlot {
                input: Vec64::new(values)?,
                label,
                task,
                feature: Vec64::new(feature)?,
                centroid,
            });
        }
        Ok(slots)
    }
}
