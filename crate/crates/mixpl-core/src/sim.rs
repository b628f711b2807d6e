//! Synthetic teacher and training-loop simulator.
//!
//! No network is trained here: the teacher is a statistical model whose
//! recall rises with the iteration index (per scale class and per
//! category-frequency decile) and whose scores follow truncated normals
//! calibrated to per-scale mean targets. False positives skew large and
//! confident, modeling the score-size correlation of real detectors: that
//! skew, not recall alone, is what lets the large-object pseudo-label count
//! overtake ground truth while small objects stay under-labeled.
//!
//! The loop mirrors the mean-teacher recipe: sample a batch, build weak and
//! strong views, let the teacher predict on the weak view, threshold and
//! empty-filter, transfer the survivors to the strong view, compose the
//! mixed batch, and refresh the cache. Teacher evolution is driven by the
//! iteration index; `ema_update` is the verified parameter-space mechanism
//! for pluggable parametric scorers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as GaussCdf};

use crate::augment::{apply_pipeline, transfer_labels, AugmentSpec, ErasingParams, Filter, PipelineKind};
use crate::dataset::{Annotation, CategoryId, DatasetIndex, Detection, ImageId, LabeledImage};
use crate::error::{Error, Result};
use crate::geom::{BBox, ScaleClass};
use crate::grad::{Scene, SceneObject};
use crate::pipeline::{
    compose_training_batch, filter_by_threshold, filter_empty_images, ComposeConfig,
    PipelineImage, PseudoBatch, PseudoCache, PseudoLabelSet,
};
use crate::raster::ImageRaster;
use crate::resample::RepeatPlan;
use crate::rng;

/// Flat stand-in for model weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Exponential moving average: `t' = m * t + (1 - m) * s` elementwise.
pub fn ema_update(teacher: &ParamVector, student: &ParamVector, momentum: f64) -> Result<ParamVector> {
    if teacher.len() != student.len() {
        return Err(Error::ParamLength {
            teacher: teacher.len(),
            student: student.len(),
        });
    }
    Ok(ParamVector(
        teacher
            .0
            .iter()
            .zip(&student.0)
            .map(|(&t, &s)| momentum * t + (1.0 - momentum) * s)
            .collect(),
    ))
}

/// Truncated-normal score parameters (location/scale before truncation to
/// `[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub mu: f64,
    pub sigma: f64,
}

/// Mean of a normal truncated to `[0, 1]`.
pub fn truncated_normal_mean(mu: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return mu.clamp(0.0, 1.0);
    }
    let std = GaussCdf::new(0.0, 1.0).expect("unit normal");
    let a = (0.0 - mu) / sigma;
    let b = (1.0 - mu) / sigma;
    let z = std.cdf(b) - std.cdf(a);
    if z < 1e-12 {
        // the window carries no mass in f64; the conditional mean collapses
        // to whichever endpoint the location sits beyond
        return if mu < 0.5 { 0.0 } else { 1.0 };
    }
    mu + sigma * (std.pdf(a) - std.pdf(b)) / z
}

/// Rejection-sample a normal conditioned on `[0, 1]`.
pub fn sample_truncated_normal(mu: f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma <= 0.0 {
        return mu.clamp(0.0, 1.0);
    }
    let normal = Normal::new(mu, sigma).expect("valid normal");
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
    // parameters this far outside [0, 1] are rejected at calibration time
    mu.clamp(0.0, 1.0)
}

/// The synthetic teacher: recall schedule, score model, and false-positive
/// behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherProfile {
    /// Late-training recall ceiling per scale class (small, medium, large).
    pub recall_max: [f64; 3],
    /// Recall multiplier for the rarest decile; deciles interpolate from 1.
    pub tail_recall_factor: f64,
    /// Fraction of the ceiling already present at iteration 0.
    pub recall_floor: f64,
    pub recall_midpoint: f64,
    pub recall_rate: f64,
    /// Score model per scale class (small, medium, large).
    pub scores: [ScoreModel; 3],
    /// Expected spurious boxes per image.
    pub fp_rate: f64,
    pub fp_score: ScoreModel,
    /// Scale-class draw weights for spurious boxes.
    pub fp_scale_mix: [f64; 3],
    /// Side ranges (sqrt of area) for spurious boxes per scale class.
    pub fp_sides: [(f64, f64); 3],
    /// Corner jitter sigma as a fraction of the box side.
    pub jitter: f64,
    /// Category -> frequency decile (0 = head). Unlisted categories count as
    /// head.
    pub category_deciles: BTreeMap<CategoryId, u8>,
}

impl Default for TeacherProfile {
    fn default() -> Self {
        TeacherProfile::faster_rcnn()
    }
}

impl TeacherProfile {
    /// CE-loss two-stage preset: score means match the published per-scale
    /// averages (0.304 / 0.406 / 0.509); confident false positives skew
    /// large.
    pub fn faster_rcnn() -> Self {
        let mut p = TeacherProfile {
            recall_max: [0.50, 0.80, 0.96],
            tail_recall_factor: 0.55,
            recall_floor: 0.05,
            recall_midpoint: 150.0,
            recall_rate: 1.0 / 60.0,
            scores: [
                ScoreModel { mu: 0.30, sigma: 0.15 },
                ScoreModel { mu: 0.40, sigma: 0.17 },
                ScoreModel { mu: 0.50, sigma: 0.30 },
            ],
            fp_rate: 2.5,
            fp_score: ScoreModel { mu: 0.85, sigma: 0.12 },
            fp_scale_mix: [0.08, 0.17, 0.75],
            fp_sides: [(8.0, 31.0), (33.0, 95.0), (97.0, 240.0)],
            jitter: 0.02,
            category_deciles: BTreeMap::new(),
        };
        calibrate_scores(&mut p, [0.304, 0.406, 0.509]).expect("preset targets reachable");
        p
    }

    /// Focal-loss one-stage preset: the published score means are much lower
    /// (0.147 / 0.186 / 0.205), matching the threshold 0.4 regime.
    pub fn retinanet() -> Self {
        let mut p = TeacherProfile {
            scores: [
                ScoreModel { mu: 0.15, sigma: 0.10 },
                ScoreModel { mu: 0.19, sigma: 0.11 },
                ScoreModel { mu: 0.20, sigma: 0.12 },
            ],
            fp_score: ScoreModel { mu: 0.45, sigma: 0.10 },
            ..TeacherProfile::faster_rcnn()
        };
        calibrate_scores(&mut p, [0.147, 0.186, 0.205]).expect("preset targets reachable");
        p
    }

    /// Wire the per-category recall deciles from a labeled split: categories
    /// ranked by image frequency, head rank = decile 0.
    pub fn attach_deciles(&mut self, labeled: &DatasetIndex) {
        let mut by_count: Vec<(CategoryId, usize)> = labeled
            .categories()
            .keys()
            .map(|&c| {
                (
                    c,
                    labeled.images_with_category(c).map(|s| s.len()).unwrap_or(0),
                )
            })
            .collect();
        by_count.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let n = by_count.len().max(1);
        self.category_deciles = by_count
            .into_iter()
            .enumerate()
            .map(|(rank, (c, _))| (c, ((rank * 10) / n).min(9) as u8))
            .collect();
    }

    pub fn decile(&self, category: CategoryId) -> u8 {
        self.category_deciles.get(&category).copied().unwrap_or(0)
    }

    fn class_index(class: ScaleClass) -> usize {
        match class {
            ScaleClass::Small => 0,
            ScaleClass::Medium => 1,
            ScaleClass::Large => 2,
        }
    }

    /// Shared maturity curve: the fraction of late-training behavior present
    /// at an iteration. Non-decreasing, in `(0, 1]`.
    pub fn rise(&self, iteration: u64) -> f64 {
        let s = 1.0 / (1.0 + (-(iteration as f64 - self.recall_midpoint) * self.recall_rate).exp());
        (self.recall_floor + (1.0 - self.recall_floor) * s).clamp(0.0, 1.0)
    }

    /// Recall at an iteration: logistic rise toward the per-class ceiling,
    /// scaled down toward the tail deciles. Non-decreasing in the iteration.
    pub fn recall(&self, class: ScaleClass, decile: u8, iteration: u64) -> f64 {
        let ceiling = self.recall_max[Self::class_index(class)];
        let tail = 1.0 + (self.tail_recall_factor - 1.0) * (decile.min(9) as f64 / 9.0);
        (ceiling * tail * self.rise(iteration)).clamp(0.0, 1.0)
    }

    /// Expected spurious boxes per image at an iteration. Confident false
    /// positives track teacher maturity: rare early, at `fp_rate` late.
    pub fn fp_rate_at(&self, iteration: u64) -> f64 {
        self.fp_rate * self.rise(iteration)
    }

    pub fn sample_score(&self, class: ScaleClass, rng: &mut ChaCha8Rng) -> f64 {
        let m = self.scores[Self::class_index(class)];
        sample_truncated_normal(m.mu, m.sigma, rng)
    }

    /// Score means must stay ordered small < medium < large.
    pub fn validate(&self) -> Result<()> {
        let means: Vec<f64> = self
            .scores
            .iter()
            .map(|s| truncated_normal_mean(s.mu, s.sigma))
            .collect();
        if !(means[0] < means[1] && means[1] < means[2]) {
            return Err(Error::Calibration(format!(
                "score means not ordered small < medium < large: {means:?}"
            )));
        }
        Ok(())
    }
}

/// Adjust the truncated-normal locations so each class's mean score matches
/// its target (bisection; sigma is kept).
pub fn calibrate_scores(profile: &mut TeacherProfile, targets: [f64; 3]) -> Result<()> {
    if !(targets[0] < targets[1] && targets[1] < targets[2]) {
        return Err(Error::Calibration(format!(
            "targets must be ordered ascending: {targets:?}"
        )));
    }
    for (model, &target) in profile.scores.iter_mut().zip(&targets) {
        if !(0.0 < target && target < 1.0) {
            return Err(Error::Calibration(format!(
                "target mean {target} outside (0, 1)"
            )));
        }
        if model.sigma <= 0.0 {
            model.mu = target;
            continue;
        }
        let (mut lo, mut hi) = (target - 6.0 * model.sigma, target + 6.0 * model.sigma);
        for _ in 0..200 {
            let mid = (lo + hi) / 2.0;
            if truncated_normal_mean(mid, model.sigma) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        model.mu = (lo + hi) / 2.0;
        let achieved = truncated_normal_mean(model.mu, model.sigma);
        if (achieved - target).abs() > 1e-6 {
            return Err(Error::Calibration(format!(
                "bisection stalled at mean {achieved} for target {target}"
            )));
        }
    }
    Ok(())
}

/// Teacher output on one image plus the bookkeeping the stats need.
#[derive(Debug, Clone)]
pub struct TeacherOutput {
    pub detections: Vec<Detection>,
    pub detected_gt: usize,
    pub fp_generated: usize,
}

/// One instance as the teacher sees it: current-frame box plus the canonical
/// scale class that drives detectability.
#[derive(Debug, Clone, Copy)]
pub struct TeacherInstance {
    pub bbox: BBox,
    pub category: CategoryId,
    pub class: ScaleClass,
}

/// Core prediction model over explicit instances.
///
/// `frame_scale` relates the canvas to the canonical annotation frame (the
/// weak view is usually an upscaled rendering): spurious box sides are
/// sampled in canonical pixels and scaled up, so their scale-class mix still
/// means what the profile says after mapping back.
pub fn simulate_on_instances(
    profile: &TeacherProfile,
    instances: &[TeacherInstance],
    canvas: (u32, u32),
    frame_scale: f64,
    iteration: u64,
    rng: &mut ChaCha8Rng,
) -> TeacherOutput {
    let (w, h) = (canvas.0 as f64, canvas.1 as f64);
    let mut detections = Vec::new();
    let mut detected_gt = 0;
    for inst in instances {
        let recall = profile.recall(inst.class, profile.decile(inst.category), iteration);
        if !rng.random_bool(recall) {
            continue;
        }
        detected_gt += 1;
        let bbox = jittered(&inst.bbox, profile.jitter, w, h, rng);
        let score = profile.sample_score(inst.class, rng);
        detections.push(Detection {
            bbox,
            category: inst.category,
            score,
        });
    }

    let mut fp_generated = 0;
    let fp_rate = profile.fp_rate_at(iteration);
    if fp_rate > 0.0 {
        let count = Poisson::new(fp_rate)
            .expect("positive rate")
            .sample(rng) as u64;
        let categories: Vec<CategoryId> = if profile.category_deciles.is_empty() {
            vec![CategoryId(1)]
        } else {
            profile.category_deciles.keys().copied().collect()
        };
        for _ in 0..count {
            if let Some(d) = spurious_box(profile, w, h, frame_scale, &categories, rng) {
                detections.push(d);
                fp_generated += 1;
            }
        }
    }
    TeacherOutput {
        detections,
        detected_gt,
        fp_generated,
    }
}

/// Teacher predictions for a labeled image: each instance is detected with
/// the recall of its own scale class and decile, detected boxes get corner
/// jitter and a sampled score, and spurious boxes arrive at the
/// false-positive rate. Threshold filtering happens downstream.
pub fn simulate_predictions(
    profile: &TeacherProfile,
    image: &LabeledImage,
    iteration: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<Detection> {
    let instances: Vec<TeacherInstance> = image
        .annotations
        .iter()
        .map(|a| TeacherInstance {
            bbox: a.bbox,
            category: a.category,
            class: a.bbox.scale_class(),
        })
        .collect();
    simulate_on_instances(
        profile,
        &instances,
        (image.width, image.height),
        1.0,
        iteration,
        rng,
    )
    .detections
}

fn jittered(b: &BBox, jitter: f64, w: f64, h: f64, rng: &mut ChaCha8Rng) -> BBox {
    if jitter <= 0.0 {
        return *b;
    }
    let sx = jitter * b.width();
    let sy = jitter * b.height();
    let nx = Normal::new(0.0, sx).expect("positive sigma");
    let ny = Normal::new(0.0, sy).expect("positive sigma");
    let cand = BBox {
        x1: b.x1 + nx.sample(rng),
        y1: b.y1 + ny.sample(rng),
        x2: b.x2 + nx.sample(rng),
        y2: b.y2 + ny.sample(rng),
    };
    // a jittered box that collapses or leaves the frame falls back to the
    // original so prediction counts stay exact
    if cand.x1 < cand.x2 && cand.y1 < cand.y2 {
        cand.clip(w, h).unwrap_or(*b)
    } else {
        *b
    }
}

fn spurious_box(
    profile: &TeacherProfile,
    w: f64,
    h: f64,
    frame_scale: f64,
    categories: &[CategoryId],
    rng: &mut ChaCha8Rng,
) -> Option<Detection> {
    let total: f64 = profile.fp_scale_mix.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let t = rng.random_range(0.0..total);
    let idx = if t < profile.fp_scale_mix[0] {
        0
    } else if t < profile.fp_scale_mix[0] + profile.fp_scale_mix[1] {
        1
    } else {
        2
    };
    let (lo, hi) = profile.fp_sides[idx];
    let side = rng.random_range(lo..=hi) * frame_scale.max(f64::MIN_POSITIVE);
    let q = rng.random_range(0.7f64..=1.4).sqrt();
    let bw = (side * q).min(w - 2.0);
    let bh = (side / q).min(h - 2.0);
    if bw < 2.0 || bh < 2.0 {
        return None;
    }
    let x = rng.random_range(0.0..=(w - bw));
    let y = rng.random_range(0.0..=(h - bh));
    let bbox = BBox::new(x, y, x + bw, y + bh).ok()?;
    let category = categories[rng.random_range(0..categories.len())];
    let score = sample_truncated_normal(profile.fp_score.mu, profile.fp_score.sigma, rng);
    Some(Detection {
        bbox,
        category,
        score,
    })
}

/// Sample an analyzer scene: ground truth with teacher scores and detection
/// flags, plus spurious boxes (unjittered geometry).
pub fn sample_scene(
    profile: &TeacherProfile,
    image: &LabeledImage,
    iteration: u64,
    rng: &mut ChaCha8Rng,
) -> Scene {
    let objects = image
        .annotations
        .iter()
        .map(|a| {
            let class = a.bbox.scale_class();
            let recall = profile.recall(class, profile.decile(a.category), iteration);
            SceneObject {
                bbox: a.bbox,
                category: a.category,
                score: profile.sample_score(class, rng),
                detected: rng.random_bool(recall),
            }
        })
        .collect();
    let mut spurious = Vec::new();
    let fp_rate = profile.fp_rate_at(iteration);
    if fp_rate > 0.0 {
        let count = Poisson::new(fp_rate)
            .expect("positive rate")
            .sample(rng) as u64;
        let categories: Vec<CategoryId> = if profile.category_deciles.is_empty() {
            vec![CategoryId(1)]
        } else {
            profile.category_deciles.keys().copied().collect()
        };
        for _ in 0..count {
            if let Some(d) = spurious_box(
                profile,
                image.width as f64,
                image.height as f64,
                1.0,
                &categories,
                rng,
            ) {
                spurious.push(d);
            }
        }
    }
    Scene {
        width: image.width,
        height: image.height,
        objects,
        spurious,
    }
}

/// Simulator configuration. Defaults follow the standard recipe: 1 labeled +
/// 4 unlabeled per iteration, threshold 0.7, unsupervised weight 2, mosaic
/// range 400-800, resampling power 0.5.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub threshold: f64,
    pub w_u: f64,
    pub mixup_alpha: f64,
    pub mosaic_range: (u32, u32),
    pub resample_power: f64,
    pub iterations: u64,
    pub seed: u64,
    pub resize_short: (u32, u32),
    pub resize_long_cap: u32,
    pub flip_prob: f64,
    pub erasing: ErasingParams,
    pub filter: Filter,
    pub cache_window: usize,
    /// Momentum for [`ema_update`] when a parametric scorer is plugged in;
    /// the built-in teacher evolves via the iteration index and ignores it.
    pub ema_momentum: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            batch_labeled: 1,
            batch_unlabeled: 4,
            threshold: 0.7,
            w_u: 2.0,
            mixup_alpha: 0.5,
            mosaic_range: (400, 800),
            resample_power: 0.5,
            iterations: 10,
            seed: 0,
            resize_short: (400, 1200),
            resize_long_cap: 1333,
            flip_prob: 0.5,
            erasing: ErasingParams::default(),
            filter: Filter::Bilinear,
            cache_window: 1,
            ema_momentum: 0.999,
        }
    }
}

impl SimConfig {
    fn augment_spec(&self, kind: PipelineKind) -> AugmentSpec {
        AugmentSpec {
            kind,
            resize_short: self.resize_short,
            resize_long_cap: self.resize_long_cap,
            flip_prob: self.flip_prob,
            erasing: self.erasing,
            filter: self.filter,
            seed: self.seed,
        }
    }
}

/// Per-iteration counters. Scale-class counts are measured in the original
/// image frame (pseudo-labels are mapped back through the weak transform).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimStats {
    pub iteration: u64,
    /// Ground-truth instance counts (small, medium, large) over the
    /// iteration's unlabeled batch.
    pub gt: [u64; 3],
    /// Post-threshold pseudo-label counts (small, medium, large).
    pub pl: [u64; 3],
    pub empty_images: u64,
    pub fp_generated: u64,
    pub detected_gt: u64,
    pub filtered_out: u64,
    pub cache_occupancy: u64,
    /// Per-category (ground truth, pseudo-label) counts.
    pub per_category: BTreeMap<CategoryId, (u64, u64)>,
}

impl SimStats {
    pub fn pl_total(&self) -> u64 {
        self.pl.iter().sum()
    }
}

/// Run the simulated loop. Deterministic under the config seed; the batch is
/// composed whenever at least two unlabeled images survive filtering, and
/// the cache keeps its previous generation otherwise.
pub fn run_simulation<F>(
    labeled: &DatasetIndex,
    unlabeled: &DatasetIndex,
    profile: &TeacherProfile,
    cfg: &SimConfig,
    raster_source: F,
) -> Result<Vec<SimStats>>
where
    F: Fn(&LabeledImage) -> ImageRaster,
{
    profile.validate()?;
    if cfg.batch_labeled > 0 && labeled.is_empty() {
        return Err(Error::Validation("labeled split is empty".into()));
    }
    if unlabeled.is_empty() {
        return Err(Error::Validation("unlabeled split is empty".into()));
    }

    let mut profile = profile.clone();
    if profile.category_deciles.is_empty() {
        profile.attach_deciles(labeled);
    }
    let plan = if cfg.batch_labeled > 0 {
        Some(RepeatPlan::build(labeled, cfg.resample_power)?)
    } else {
        None
    };

    let weak_spec = cfg.augment_spec(PipelineKind::Weak);
    let strong_spec = cfg.augment_spec(PipelineKind::Strong);
    let labeled_spec = cfg.augment_spec(PipelineKind::Labeled);

    let mut cache = PseudoCache::with_window(cfg.cache_window);
    let mut epoch: Vec<ImageId> = Vec::new();
    let mut epoch_index = 0u64;
    let mut stats = Vec::with_capacity(cfg.iterations as usize);

    for t in 0..cfg.iterations {
        // unlabeled batch: uniform without replacement when possible
        let mut batch_rng = rng::derived(cfg.seed, &[0xba7c4, t]);
        let n_u = cfg.batch_unlabeled;
        let picks: Vec<usize> = if n_u <= unlabeled.len() {
            rand::seq::index::sample(&mut batch_rng, unlabeled.len(), n_u).into_vec()
        } else {
            (0..n_u)
                .map(|_| batch_rng.random_range(0..unlabeled.len()))
                .collect()
        };

        let mut st = SimStats {
            iteration: t,
            gt: [0; 3],
            pl: [0; 3],
            empty_images: 0,
            fp_generated: 0,
            detected_gt: 0,
            filtered_out: 0,
            cache_occupancy: 0,
            per_category: labeled
                .categories()
                .keys()
                .map(|&c| (c, (0, 0)))
                .collect(),
        };

        // weak view, teacher, threshold per unlabeled image
        let mut weak_stage: Vec<((ImageId, ImageRaster, crate::augment::AffineTransform), PseudoLabelSet)> =
            Vec::with_capacity(picks.len());
        for &idx in &picks {
            let image = &unlabeled.images()[idx];
            let raster = raster_source(image);
            let gt_dets: Vec<Detection> = image.annotations.iter().map(Annotation::as_detection).collect();

            let mut weak_rng = rng::derived(cfg.seed, &[0x3eaf, t, image.id.0]);
            let weak = apply_pipeline(&weak_spec, &raster, &gt_dets, &mut weak_rng);

            // weak stages are bijective on labels, so index i still refers to
            // annotation i; detectability stays keyed to the canonical
            // (annotation-frame) scale class
            debug_assert_eq!(weak.labels.len(), image.annotations.len());
            let instances: Vec<TeacherInstance> = weak
                .labels
                .iter()
                .zip(&image.annotations)
                .map(|(w, a)| TeacherInstance {
                    bbox: w.bbox,
                    category: a.category,
                    class: a.bbox.scale_class(),
                })
                .collect();
            let mut teacher_rng = rng::derived(cfg.seed, &[0x7eac, t, image.id.0]);
            let frame_scale = (weak.transform.m[0].abs() * weak.transform.m[4].abs()).sqrt();
            let out = simulate_on_instances(
                &profile,
                &instances,
                (weak.raster.width(), weak.raster.height()),
                frame_scale,
                t,
                &mut teacher_rng,
            );
            st.detected_gt += out.detected_gt as u64;
            st.fp_generated += out.fp_generated as u64;

            let kept = filter_by_threshold(&out.detections, cfg.threshold);
            st.filtered_out += (out.detections.len() - kept.len()) as u64;

            // stats in the original frame
            for ann in &image.annotations {
                st.gt[class_idx(ann.bbox.scale_class())] += 1;
                st.per_category.entry(ann.category).or_default().0 += 1;
            }
            let inv = weak.transform.inverse()?;
            for d in &kept {
                let back = inv.map_box_hull(&d.bbox);
                st.pl[class_idx(back.scale_class())] += 1;
                st.per_category.entry(d.category).or_default().1 += 1;
            }

            weak_stage.push((
                (image.id, raster, weak.transform),
                PseudoLabelSet {
                    image_id: image.id,
                    detections: kept,
                    source_iteration: t,
                },
            ));
        }

        let (survivors, removed) = filter_empty_images(weak_stage);
        st.empty_images += removed as u64;

        // strong views for the survivors, labels transferred from weak
        let mut unlabeled_batch: Vec<PipelineImage> = Vec::with_capacity(survivors.len());
        for ((id, raster, weak_tf), set) in survivors {
            let image = unlabeled.image(id).expect("id from this split");
            let gt_dets: Vec<Detection> = image.annotations.iter().map(Annotation::as_detection).collect();
            let mut strong_rng = rng::derived(cfg.seed, &[0x57f0, t, id.0]);
            let strong = apply_pipeline(&strong_spec, &raster, &gt_dets, &mut strong_rng);
            let labels = transfer_labels(
                &set.detections,
                &weak_tf,
                &strong.transform,
                strong.raster.width(),
                strong.raster.height(),
            )?;
            if labels.is_empty() {
                // every box degenerated under the strong geometry; the image
                // is as empty as a threshold-filtered one
                st.empty_images += 1;
                continue;
            }
            unlabeled_batch.push(PipelineImage {
                id,
                raster: strong.raster,
                labels,
            });
        }

        // labeled batch through the labeled pipeline, repeat-factor order
        let mut labeled_batch: Vec<PipelineImage> = Vec::new();
        if let Some(plan) = &plan {
            let mut guard = 0usize;
            while labeled_batch.len() < cfg.batch_labeled {
                if epoch.is_empty() {
                    let mut erng = rng::derived(cfg.seed, &[0xe90c4, epoch_index]);
                    epoch = plan.build_epoch(&mut erng);
                    epoch.reverse();
                    epoch_index += 1;
                }
                let id = epoch.pop().expect("epoch non-empty");
                let image = labeled.image(id).expect("id from this split");
                guard += 1;
                if image.annotations.is_empty() {
                    if guard > labeled.len() * 2 + 8 {
                        return Err(Error::Validation(
                            "labeled split has no annotated images".into(),
                        ));
                    }
                    continue;
                }
                let raster = raster_source(image);
                let gt_dets: Vec<Detection> =
                    image.annotations.iter().map(Annotation::as_detection).collect();
                let mut lrng = rng::derived(cfg.seed, &[0x1abe1, t, id.0, labeled_batch.len() as u64]);
                let view = apply_pipeline(&labeled_spec, &raster, &gt_dets, &mut lrng);
                labeled_batch.push(PipelineImage {
                    id,
                    raster: view.raster,
                    labels: view.labels,
                });
            }
        }

        // compose whenever the mixing pool is viable (two current images give
        // a 4-image pool); otherwise the iteration contributes only labeled
        // loss and the cache keeps its previous generation
        if unlabeled_batch.len() >= 2 {
            let mut crng = rng::derived(cfg.seed, &[0xc09f, t]);
            let batch = compose_training_batch(
                labeled_batch,
                unlabeled_batch,
                &mut cache,
                &ComposeConfig {
                    w_u: cfg.w_u,
                    mixup_alpha: cfg.mixup_alpha,
                    mosaic_range: cfg.mosaic_range,
                    filter: cfg.filter,
                },
                t,
                &mut crng,
            )?;
            debug_assert!(batch.images().all(|img| !img.labels.is_empty()));
        }
        st.cache_occupancy = cache.len() as u64;
        stats.push(st);
    }
    Ok(stats)
}

fn class_idx(class: ScaleClass) -> usize {
    match class {
        ScaleClass::Small => 0,
        ScaleClass::Medium => 1,
        ScaleClass::Large => 2,
    }
}

/// Compose one batch outside the loop (used by the CLI `mix`/`mosaic`
/// fixtures and the batch dump).
pub fn compose_once(
    labeled: Vec<PipelineImage>,
    unlabeled: Vec<PipelineImage>,
    cache: &mut PseudoCache,
    cfg: &ComposeConfig,
    iteration: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PseudoBatch> {
    compose_training_batch(labeled, unlabeled, cache, cfg, iteration, rng)
}

/// Emit the stats stream as delimiter-separated text: fixed columns, then
/// one `(gt, pl)` pair per category as `ln(1 + count)`.
pub fn write_stats(
    stats: &[SimStats],
    categories: &BTreeMap<CategoryId, String>,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("iter,gt_s,gt_m,gt_l,pl_s,pl_m,pl_l,empty_images,fp_count");
    for id in categories.keys() {
        write!(out, ",gt_log_c{id},pl_log_c{id}").expect("write to string");
    }
    out.push('\n');
    for s in stats {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.iteration,
            s.gt[0],
            s.gt[1],
            s.gt[2],
            s.pl[0],
            s.pl[1],
            s.pl[2],
            s.empty_images,
            s.fp_generated
        )
        .expect("write to string");
        for id in categories.keys() {
            let (g, p) = s.per_category.get(id).copied().unwrap_or((0, 0));
            write!(
                out,
                ",{:.4},{:.4}",
                (1.0 + g as f64).ln(),
                (1.0 + p as f64).ln()
            )
            .expect("write to string");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticSpec;

    #[test]
    fn ema_endpoint_cases() {
        let t = ParamVector(vec![1.0, 2.0, 3.0]);
        let s = ParamVector(vec![4.0, 5.0, 6.0]);
        assert_eq!(ema_update(&t, &s, 1.0).unwrap(), t);
        assert_eq!(ema_update(&t, &s, 0.0).unwrap(), s);
        assert!(ema_update(&t, &ParamVector(vec![1.0]), 0.5).is_err());
    }

    #[test]
    fn ema_geometric_convergence() {
        // t It starts at 0, s constant 1: t_k = 1 - 0.9^k
        let s = ParamVector(vec![1.0; 4]);
        let mut t = ParamVector(vec![0.0; 4]);
        for k in 1..=50 {
            t = ema_update(&t, &s, 0.9).unwrap();
            let expect = 1.0 - 0.9f64.powi(k);
            for v in &t.0 {
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_mean_degenerate_sigma() {
        assert_eq!(truncated_normal_mean(0.3, 0.0), 0.3);
        assert_eq!(truncated_normal_mean(1.7, 0.0), 1.0);
    }

    #[test]
    fn calibration_hits_published_means() {
        for targets in [[0.304, 0.406, 0.509], [0.147, 0.186, 0.205]] {
            let mut p = TeacherProfile::faster_rcnn();
            calibrate_scores(&mut p, targets).unwrap();
            let mut r = rng::seeded(33);
            for (i, &target) in targets.iter().enumerate() {
                let m = p.scores[i];
                let n = 100_000;
                let mean: f64 = (0..n)
                    .map(|_| sample_truncated_normal(m.mu, m.sigma, &mut r))
                    .sum::<f64>()
                    / n as f64;
                assert!(
                    (mean - target).abs() < 0.01,
                    "class {i}: empirical mean {mean} vs target {target}"
                );
            }
        }
    }

    #[test]
    fn calibration_rejects_bad_targets() {
        let mut p = TeacherProfile::faster_rcnn();
        assert!(calibrate_scores(&mut p, [0.5, 0.4, 0.6]).is_err());
        assert!(calibrate_scores(&mut p, [0.1, 0.2, 1.0]).is_err());
    }

    #[test]
    fn calibration_degenerate_sigma_is_exact() {
        let mut p = TeacherProfile::faster_rcnn();
        for s in p.scores.iter_mut() {
            s.sigma = 0.0;
        }
        calibrate_scores(&mut p, [0.1, 0.2, 0.3]).unwrap();
        assert_eq!(p.scores[0].mu, 0.1);
        assert_eq!(p.scores[2].mu, 0.3);
    }

    #[test]
    fn recall_is_non_decreasing() {
        let p = TeacherProfile::faster_rcnn();
        for class in [ScaleClass::Small, ScaleClass::Medium, ScaleClass::Large] {
            let mut prev = 0.0;
            for t in (0..2000).step_by(50) {
                let r = p.recall(class, 0, t);
                assert!(r >= prev - 1e-12);
                assert!((0.0..=1.0).contains(&r));
                prev = r;
            }
        }
    }

    #[test]
    fn tail_deciles_reduce_recall() {
        let p = TeacherProfile::faster_rcnn();
        let head = p.recall(ScaleClass::Large, 0, 1000);
        let tail = p.recall(ScaleClass::Large, 9, 1000);
        assert!(tail < head);
        assert!((tail / head - p.tail_recall_factor).abs() < 1e-9);
    }

    fn perfect_profile() -> TeacherProfile {
        TeacherProfile {
            recall_max: [1.0, 1.0, 1.0],
            tail_recall_factor: 1.0,
            recall_floor: 1.0,
            fp_rate: 0.0,
            jitter: 0.0,
            // keep the ordered-means invariant intact
            scores: [
                ScoreModel { mu: 0.80, sigma: 0.0 },
                ScoreModel { mu: 0.85, sigma: 0.0 },
                ScoreModel { mu: 0.90, sigma: 0.0 },
            ],
            ..TeacherProfile::faster_rcnn()
        }
    }

    #[test]
    fn perfect_teacher_reproduces_gt() {
        let spec = SyntheticSpec {
            num_images: 5,
            seed: 8,
            ..SyntheticSpec::default()
        };
        let idx = spec.generate().unwrap();
        let p = perfect_profile();
        let mut r = rng::seeded(0);
        for img in idx.images() {
            let preds = simulate_predictions(&p, img, 100, &mut r);
            assert_eq!(preds.len(), img.annotations.len());
            for (d, a) in preds.iter().zip(&img.annotations) {
                assert_eq!(d.bbox, a.bbox);
                assert_eq!(d.category, a.category);
            }
        }
    }

    #[test]
    fn zero_recall_leaves_only_false_positives() {
        let p = TeacherProfile {
            recall_max: [0.0, 0.0, 0.0],
            recall_floor: 0.0,
            fp_rate: 3.0,
            ..perfect_profile()
        };
        let spec = SyntheticSpec {
            num_images: 3,
            seed: 1,
            ..SyntheticSpec::default()
        };
        let idx = spec.generate().unwrap();
        let mut r = rng::seeded(2);
        let mut fp_total = 0;
        for img in idx.images() {
            let instances: Vec<TeacherInstance> = img
                .annotations
                .iter()
                .map(|a| TeacherInstance {
                    bbox: a.bbox,
                    category: a.category,
                    class: a.bbox.scale_class(),
                })
                .collect();
            let out =
                simulate_on_instances(&p, &instances, (img.width, img.height), 1.0, 50, &mut r);
            assert_eq!(out.detected_gt, 0);
            assert_eq!(out.detections.len(), out.fp_generated);
            fp_total += out.fp_generated;
        }
        assert!(fp_total > 0);
    }

    #[test]
    fn kept_fraction_small_below_large_at_focal_threshold() {
        // Monte Carlo over the calibrated score models: the survival rate of
        // small-object scores at threshold 0.4 sits well below large
        let p = TeacherProfile::faster_rcnn();
        let mut r = rng::seeded(6);
        let n = 100_000;
        let kept = |m: ScoreModel, r: &mut ChaCha8Rng| {
            (0..n)
                .filter(|_| sample_truncated_normal(m.mu, m.sigma, r) >= 0.4)
                .count() as f64
                / n as f64
        };
        let small = kept(p.scores[0], &mut r);
        let large = kept(p.scores[2], &mut r);
        assert!(
            small < large,
            "small kept fraction {small} not below large {large}"
        );
    }

    #[test]
    fn zero_iterations_empty_stream() {
        let spec = SyntheticSpec {
            num_images: 12,
            seed: 3,
            ..SyntheticSpec::default()
        };
        let idx = spec.generate().unwrap();
        let (lab, unl) = crate::coco::split_dataset(&idx, 0.25, 0).unwrap();
        let cfg = SimConfig {
            iterations: 0,
            ..SimConfig::default()
        };
        let stats = run_simulation(&lab, &unl, &TeacherProfile::faster_rcnn(), &cfg, |img| {
            spec.raster_for(img)
        })
        .unwrap();
        assert!(stats.is_empty());
    }

    #[test]
    fn perfect_teacher_zero_threshold_matches_gt_counts() {
        let spec = SyntheticSpec {
            num_images: 16,
            long_edge: (96, 128),
            seed: 5,
            ..SyntheticSpec::default()
        };
        let idx = spec.generate().unwrap();
        let (lab, unl) = crate::coco::split_dataset(&idx, 0.25, 1).unwrap();
        let cfg = SimConfig {
            iterations: 4,
            threshold: 0.0,
            resize_short: (64, 96),
            resize_long_cap: 160,
            seed: 11,
            ..SimConfig::default()
        };
        let stats =
            run_simulation(&lab, &unl, &perfect_profile(), &cfg, |img| spec.raster_for(img))
                .unwrap();
        assert_eq!(stats.len(), 4);
        for s in &stats {
            assert_eq!(s.gt, s.pl, "iteration {}: {:?}", s.iteration, s);
            assert_eq!(s.filtered_out, 0);
            assert_eq!(s.fp_generated, 0);
            assert_eq!(s.empty_images, 0);
        }
    }

    #[test]
    fn conservation_detected_plus_fp_minus_filtered() {
        let spec = SyntheticSpec {
            num_images: 20,
            long_edge: (96, 128),
            seed: 7,
            ..SyntheticSpec::default()
        };
        let idx = spec.generate().unwrap();
        let (lab, unl) = crate::coco::split_dataset(&idx, 0.25, 2).unwrap();
        let cfg = SimConfig {
            iterations: 6,
            threshold: 0.5,
            resize_short: (64, 96),
            resize_long_cap: 160,
            seed: 21,
            ..SimConfig::default()
        };
        let stats = run_simulation(
            &lab,
            &unl,
            &TeacherProfile::faster_rcnn(),
            &cfg,
            |img| spec.raster_for(img),
        )
        .unwrap();
        for s in &stats {
            assert_eq!(
                s.pl_total(),
                s.detected_gt + s.fp_generated - s.filtered_out,
                "iteration {} books do not balance: {s:?}",
                s.iteration
            );
            assert!(s.pl_total() <= s.detected_gt + s.fp_generated);
        }
    }

    #[test]
    fn runs_are_byte_identical_under_seed() {
        let spec = SyntheticSpec {
            num_images: 14,
            long_edge: (96, 128),
            seed: 9,
            ..SyntheticSpec::default()
        };
        let idx = spec.generate().unwrap();
        let (lab, unl) = crate::coco::split_dataset(&idx, 0.3, 4).unwrap();
        let cfg = SimConfig {
            iterations: 5,
            resize_short: (64, 96),
            resize_long_cap: 160,
            threshold: 0.4,
            seed: 31,
            ..SimConfig::default()
        };
        let run = || {
            run_simulation(&lab, &unl, &TeacherProfile::retinanet(), &cfg, |img| {
                spec.raster_for(img)
            })
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_stats(&a, lab.categories(), &pa).unwrap();
        write_stats(&b, lab.categories(), &pb).unwrap();
        assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap());
    }

    #[test]
    fn stats_header_shape() {
        let cats: BTreeMap<CategoryId, String> =
            [(CategoryId(1), "a".into()), (CategoryId(3), "b".into())].into();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_stats(&[], &cats, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.trim_end(),
            "iter,gt_s,gt_m,gt_l,pl_s,pl_m,pl_l,empty_images,fp_count,gt_log_c1,pl_log_c1,gt_log_c3,pl_log_c3"
        );
    }
}
