//! Training objectives and their exact gradients.
//!
//! All losses are pure functions from features to a scalar plus gradients
//! with respect to those features; routing into model parameters happens in
//! the trainer via the model's backward pass.
//!
//! The margin contrastive loss ([`cml_loss`]) works in angle space: anchor
//! and positive directions get a compound additive margin (class-level plus
//! task-level) inside the cosine, same-task negative prototypes get the
//! task-level margin only, and other-task prototypes get none. Negatives are
//! per-class prototype directions (normalized class means from the rehearsal
//! store), not per-sample features. Denominators are evaluated in log space.

use crate::error::{Error, Result};
use crate::numerics::{angle_from_cos, log_sum_exp, Vec64, DEFAULT_CLAMP_TOLERANCE};
use crate::{ClassId, TaskId};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Hyperparameters of the margin losses.
#[derive(Debug, Clone)]
pub struct MarginConfig {
    /// Class-level angular margin m_c (radians), applied to positives.
    pub class_margin: f64,
    /// Task-level angular margin m_t (radians), applied to positives and
    /// same-task negatives.
    pub task_margin: f64,
    /// Logit scale s.
    pub scale: f64,
    /// Temperature of the plain contrastive base loss.
    pub temperature: f64,
    /// Clamp applied to cosines before `acos`.
    pub clamp_tolerance: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            class_margin: 0.01,
            task_margin: 0.1,
            scale: 32.0,
            temperature: 0.1,
            clamp_tolerance: DEFAULT_CLAMP_TOLERANCE,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_margin < 0.0 || self.task_margin < 0.0 {
            return Err(Error::config("margins must be nonnegative"));
        }
        if self.scale <= 0.0 {
            return Err(Error::config("scale must be positive"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::config("temperature must be positive"));
        }
        if self.clamp_tolerance <= 0.0 || self.clamp_tolerance >= 1.0 {
            return Err(Error::config("clamp tolerance must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Unit direction standing in for a whole class as a contrastive negative.
#[derive(Debug, Clone)]
pub struct Prototype {
    pub class: ClassId,
    pub task: TaskId,
    /// Unit norm.
    pub direction: Vec64,
}

/// Per-class prototype directions, ordered by class id.
#[derive(Debug, Clone, Default)]
pub struct PrototypeSet {
    entries: BTreeMap<ClassId, (TaskId, Vec64)>,
}

impl PrototypeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// `direction` must be unit norm.
    pub fn insert(&mut self, class: ClassId, task: TaskId, direction: Vec64) {
        debug_assert!((direction.norm() - 1.0).abs() < 1e-9);
        self.entries.insert(class, (task, direction));
    }

    pub fn get(&self, class: ClassId) -> Option<(&TaskId, &Vec64)> {
        self.entries.get(&class).map(|(t, d)| (t, d))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn to_prototypes(&self) -> Vec<Prototype> {
        self.entries
            .iter()
            .map(|(&class, (task, dir))| Prototype {
                class,
                task: *task,
                direction: dir.clone(),
            })
            .collect()
    }
}

/// A positive partner for one anchor.
#[derive(Debug, Clone)]
pub enum Positive {
    /// Index of a same-class sample in the batch feature list.
    Sample(usize),
    /// Unit direction of the anchor's class mean, used when the anchor is
    /// its class's only batch member. Receives no gradient.
    ClassMean(Vec64),
}

/// One anchor of the margin contrastive loss: a batch feature index with its
/// positives and the shared per-class negative prototypes. Prototype entries
/// for the anchor's own class are skipped during evaluation.
#[derive(Debug, Clone)]
pub struct AnchorView {
    pub anchor: usize,
    pub label: ClassId,
    pub task: TaskId,
    pub positives: Vec<Positive>,
    pub prototypes: Arc<Vec<Prototype>>,
}

/// Scalar loss plus gradients aligned with the input feature list.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Vec<Vec64>,
    /// Anchors dropped for lack of any positive (or a zero-norm feature).
    pub skipped: usize,
}

fn zero_grads(features: &[Vec64]) -> Vec<Vec64> {
    features.iter().map(|f| Vec64::zeros(f.len())).collect()
}

/// Assemble anchor views for a batch: positives are same-class batch members;
/// a singleton anchor falls back to its class prototype as positive when one
/// exists, and is skipped (counted) otherwise. Zero-norm features are skipped.
pub fn build_anchor_views(
    features: &[Vec64],
    labels: &[ClassId],
    tasks: &[TaskId],
    prototypes: &PrototypeSet,
) -> Result<(Vec<AnchorView>, usize)> {
    if features.len() != labels.len() || features.len() != tasks.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len().min(tasks.len()),
        });
    }
    let shared = Arc::new(prototypes.to_prototypes());
    let mut views = Vec::with_capacity(features.len());
    let mut skipped = 0;
    for i in 0..features.len() {
        if features[i].norm() <= 0.0 {
            skipped += 1;
            continue;
        }
        let mut positives: Vec<Positive> = (0..features.len())
            .filter(|&j| j != i && labels[j] == labels[i] && features[j].norm() > 0.0)
            .map(Positive::Sample)
            .collect();
        if positives.is_empty() {
            match prototypes.get(labels[i]) {
                Some((_, dir)) => positives.push(Positive::ClassMean(dir.clone())),
                None => {
                    skipped += 1;
                    continue;
                }
            }
        }
        views.push(AnchorView {
            anchor: i,
            label: labels[i],
            task: tasks[i],
            positives,
            prototypes: Arc::clone(&shared),
        });
    }
    Ok((views, skipped))
}

/// Two-level angular-margin contrastive loss over anchor views.
///
/// Per anchor-positive pair the numerator exponent is
/// `s·cos((β + m_c) + m_t)` on the anchor-positive angle β; the denominator
/// adds, per other-class prototype, `s·cos(β_j + m_t)` for same-task classes
/// and `s·cos(β_j)` for other-task classes, summed in log space. The loss is
/// the mean over anchors of the 1/|P|-weighted pair terms. Gradients flow
/// into anchor and sample-positive features only; prototypes are statistics.
pub fn cml_loss(features: &[Vec64], views: &[AnchorView], cfg: &MarginConfig) -> Result<LossOutput> {
    cfg.validate()?;
    let mut grads = zero_grads(features);
    if views.is_empty() {
        return Ok(LossOutput {
            loss: 0.0,
            grads,
            skipped: 0,
        });
    }

    // Every class seen anywhere in the views must be covered by each view's
    // prototype list (except the anchor's own class).
    let mut seen: BTreeSet<ClassId> = BTreeSet::new();
    for view in views {
        for p in view.prototypes.iter() {
            seen.insert(p.class);
        }
    }
    for view in views {
        if view.positives.is_empty() {
            return Err(Error::NoPositivePairs);
        }
        let covered: BTreeSet<ClassId> = view.prototypes.iter().map(|p| p.class).collect();
        if covered.len() != view.prototypes.len() {
            return Err(Error::config("duplicate class in prototype list"));
        }
        for &class in &seen {
            if class != view.label && !covered.contains(&class) {
                return Err(Error::MissingPrototype {
                    class: view.label,
                    missing: class,
                });
            }
        }
    }

    let s = cfg.scale;
    let delta = cfg.clamp_tolerance;
    let m_pos = cfg.class_margin + cfg.task_margin;
    let mut loss = 0.0;

    for view in views {
        let anchor_raw = &features[view.anchor];
        let norm_a = anchor_raw.norm();
        if norm_a <= 0.0 {
            return Err(Error::DegenerateFeature);
        }
        let anchor = anchor_raw.normalized()?;

        // Prototype angles are shared by all of this anchor's pairs.
        struct NegTerm<'a> {
            exponent: f64,
            dexp_dangle: f64,
            dangle_du: f64,
            u: f64,
            direction: &'a Vec64,
        }
        let mut negatives = Vec::with_capacity(view.prototypes.len());
        for proto in view.prototypes.iter() {
            if proto.class == view.label {
                continue;
            }
            let u = anchor.dot(&proto.direction)?;
            let (beta, dangle_du) = angle_from_cos(u, delta);
            let margin = if proto.task == view.task { cfg.task_margin } else { 0.0 };
            negatives.push(NegTerm {
                exponent: s * (beta + margin).cos(),
                dexp_dangle: -s * (beta + margin).sin(),
                dangle_du,
                u,
                direction: &proto.direction,
            });
        }

        let pair_coeff = 1.0 / (views.len() as f64 * view.positives.len() as f64);
        for positive in &view.positives {
            let (pos_dir, pos_norm, pos_index) = match positive {
                Positive::Sample(j) => {
                    let raw = &features[*j];
                    let n = raw.norm();
                    if n <= 0.0 {
                        return Err(Error::DegenerateFeature);
                    }
                    (raw.normalized()?, n, Some(*j))
                }
                Positive::ClassMean(dir) => (dir.clone(), 1.0, None),
            };
            let u_pos = anchor.dot(&pos_dir)?;
            let (beta, dangle_du_pos) = angle_from_cos(u_pos, delta);
            let num_exponent = s * (beta + m_pos).cos();
            let dnum_dangle = -s * (beta + m_pos).sin();

            let mut exps = Vec::with_capacity(1 + negatives.len());
            exps.push(num_exponent);
            exps.extend(negatives.iter().map(|n| n.exponent));
            let lse = log_sum_exp(&exps)?;
            loss += pair_coeff * (lse - num_exponent);

            // softmax weight of each exponent in the log-denominator
            let w_num = (num_exponent - lse).exp();
            let dpair_dangle_pos = (w_num - 1.0) * dnum_dangle;

            // anchor gradient: positive-angle term
            let du = dpair_dangle_pos * dangle_du_pos * pair_coeff;
            for ((g, p), a) in grads[view.anchor]
                .as_mut_slice()
                .iter_mut()
                .zip(pos_dir.as_slice())
                .zip(anchor.as_slice())
            {
                *g += du * (p - u_pos * a) / norm_a;
            }
            // positive gradient (samples only)
            if let Some(j) = pos_index {
                for ((g, a), p) in grads[j]
                    .as_mut_slice()
                    .iter_mut()
                    .zip(anchor.as_slice())
                    .zip(pos_dir.as_slice())
                {
                    *g += du * (a - u_pos * p) / pos_norm;
                }
            }
            // anchor gradient: prototype terms
            for neg in &negatives {
                let w = (neg.exponent - lse).exp();
                let dun = w * neg.dexp_dangle * neg.dangle_du * pair_coeff;
                for ((g, c), a) in grads[view.anchor]
                    .as_mut_slice()
                    .iter_mut()
                    .zip(neg.direction.as_slice())
                    .zip(anchor.as_slice())
                {
                    *g += dun * (c - neg.u * a) / norm_a;
                }
            }
        }
    }

    Ok(LossOutput {
        loss,
        grads,
        skipped: 0,
    })
}

/// Plain supervised contrastive loss over a mini-batch.
///
/// Features are normalized internally; similarities are `z_i·z_j/τ` and each
/// anchor's denominator runs over the whole batch except itself, evaluated
/// via log-sum-exp. Anchors without a same-class partner are skipped and
/// counted. The loss is the mean over contributing anchors.
pub fn supcon_loss(features: &[Vec64], labels: &[ClassId], tau: f64) -> Result<LossOutput> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if tau <= 0.0 {
        return Err(Error::config("temperature must be positive"));
    }
    if features.is_empty() {
        return Err(Error::Empty("contrastive batch"));
    }
    let n = features.len();
    let mut norms = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for f in features {
        let nf = f.norm();
        if nf <= 0.0 {
            return Err(Error::DegenerateFeature);
        }
        norms.push(nf);
        z.push(f.normalized()?);
    }

    let anchors: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| j != i && labels[j] == labels[i]))
        .collect();
    if anchors.is_empty() {
        return Err(Error::NoPositivePairs);
    }
    let skipped = n - anchors.len();
    let anchor_coeff = 1.0 / anchors.len() as f64;

    // dot products reused by loss and gradient
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sim[i * n + j] = z[i].dot(&z[j]).unwrap();
            }
        }
    }

    let mut loss = 0.0;
    let mut grads = zero_grads(features);
    let mut dsim = vec![0.0; n * n];

    for &i in &anchors {
        let positives: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        let exps: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| sim[i * n + j] / tau)
            .collect();
        let lse = log_sum_exp(&exps)?;
        let mean_pos =
            positives.iter().map(|&p| sim[i * n + p] / tau).sum::<f64>() / positives.len() as f64;
        loss += anchor_coeff * (lse - mean_pos);

        for j in 0..n {
            if j == i {
                continue;
            }
            let softmax = (sim[i * n + j] / tau - lse).exp();
            let pos_share = if labels[j] == labels[i] {
                1.0 / positives.len() as f64
            } else {
                0.0
            };
            dsim[i * n + j] += anchor_coeff * (softmax - pos_share) / tau;
        }
    }

    // Chain through normalization: d(z_i·z_j)/df_i = (z_j − (z_i·z_j) z_i)/‖f_i‖.
    for i in 0..n {
        for j in 0..n {
            let w = dsim[i * n + j];
            if w == 0.0 {
                continue;
            }
            let u = sim[i * n + j];
            let gi = grads[i].as_mut_slice();
            for k in 0..gi.len() {
                gi[k] += w * (z[j][k] - u * z[i][k]) / norms[i];
            }
            let gj = grads[j].as_mut_slice();
            for k in 0..gj.len() {
                gj[k] += w * (z[i][k] - u * z[j][k]) / norms[j];
            }
        }
    }

    Ok(LossOutput { loss, grads, skipped })
}

/// Squared-error anchor between the current feature and its stored snapshot.
/// Returns the loss and the gradient with respect to the current feature.
pub fn cdl_loss(current: &Vec64, stored: &Vec64) -> Result<(f64, Vec64)> {
    if current.len() != stored.len() {
        return Err(Error::DimensionMismatch {
            expected: stored.len(),
            got: current.len(),
        });
    }
    let mut grad = Vec64::zeros(current.len());
    let mut loss = 0.0;
    for ((g, c), s) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(current.as_slice())
        .zip(stored.as_slice())
    {
        let d = c - s;
        loss += d * d;
        *g = 2.0 * d;
    }
    Ok((loss, grad))
}

/// −log softmax(logits)[label], with gradient softmax − onehot.
pub fn cross_entropy(logits: &Vec64, label: usize) -> Result<(f64, Vec64)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let lse = log_sum_exp(logits.as_slice())?;
    let loss = lse - logits[label];
    let mut grad = Vec64::zeros(logits.len());
    for (i, (g, l)) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(logits.as_slice())
        .enumerate()
    {
        *g = (l - lse).exp() - if i == label { 1.0 } else { 0.0 };
    }
    Ok((loss, grad))
}

/// The composed training objective: margin contrastive loss on the new-task
/// batch, the same loss on the memory batch, and (optionally) the mean
/// distillation loss anchoring memory features to their stored snapshots.
#[derive(Debug, Clone)]
pub struct TotalObjective {
    pub loss: f64,
    pub cml_new: f64,
    pub cml_memory: f64,
    pub cdl: f64,
    pub new_grads: Vec<Vec64>,
    pub mem_grads: Vec<Vec64>,
}

pub fn total_objective(
    new_features: &[Vec64],
    new_views: &[AnchorView],
    mem_features: &[Vec64],
    mem_views: &[AnchorView],
    mem_snapshots: Option<&[Vec64]>,
    cfg: &MarginConfig,
) -> Result<TotalObjective> {
    let new_out = cml_loss(new_features, new_views, cfg)?;
    let mem_out = cml_loss(mem_features, mem_views, cfg)?;
    let mut mem_grads = mem_out.grads;
    let mut cdl = 0.0;
    if let Some(snapshots) = mem_snapshots {
        if snapshots.len() != mem_features.len() {
            return Err(Error::DimensionMismatch {
                expected: mem_features.len(),
                got: snapshots.len(),
            });
        }
        if !mem_features.is_empty() {
            let scale = 1.0 / mem_features.len() as f64;
            for ((feature, snapshot), grad) in mem_features
                .iter()
                .zip(snapshots)
                .zip(mem_grads.iter_mut())
            {
                let (l, g) = cdl_loss(feature, snapshot)?;
                cdl += scale * l;
                grad.add_scaled(scale, &g)?;
            }
        }
    }
    Ok(TotalObjective {
        loss: new_out.loss + mem_out.loss + cdl,
        cml_new: new_out.loss,
        cml_memory: mem_out.loss,
        cdl,
        new_grads: new_out.grads,
        mem_grads,
    })
}
