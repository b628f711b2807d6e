//! Gradient-norm bookkeeping and density histograms over anchor samples.
//!
//! Anchors stand in for detector samples. Each anchor is positive or
//! negative under the pseudo-labels and under ground truth (IoU threshold
//! 0.5), which partitions samples into TP / FP / TN / FN. The classification
//! gradient magnitude with respect to the logit is `g = |p - p*|` with the
//! pseudo-label as the training target, and densities are per-bin counts of
//! `g` over `[0, 1]`.
//!
//! The analyzer compares augmentations on shared synthetic scenes: each
//! scene carries ground-truth objects with a teacher score and a detected
//! flag, plus spurious teacher boxes. Student response to an object follows
//! an explicit attenuation model: evidence = response factor of the
//! augmentation times the object's blend visibility times its teacher
//! score, so blending an object onto another image at weight 0.5 halves the
//! gradient its miss would otherwise produce.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{
    sample_flip_transform, sample_geometric_transform, sample_resize_transform, AffineTransform,
};
use crate::dataset::{CategoryId, Detection};
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::pipeline::mosaic_layout;
use crate::rng;

const EPS: f64 = 1e-7;

/// Binary cross entropy with the probability clamped away from 0 and 1.
pub fn bce_loss(p: f64, p_star: f64) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    -p_star * p.ln() - (1.0 - p_star) * (1.0 - p).ln()
}

/// Gradient magnitude of [`bce_loss`] with respect to the logit:
/// `|p - p*|`, i.e. `1 - p` for positives and `p` for negatives.
pub fn gradient_norm(p: f64, p_star: f64) -> f64 {
    (p - p_star).abs()
}

/// Dense grid of square anchors: one per `stride x stride` cell per scale,
/// centered in the cell and clipped to the image. Anchors that degenerate
/// under clipping are dropped.
pub fn generate_anchors(w: u32, h: u32, stride: u32, scales: &[f64]) -> Vec<BBox> {
    let mut anchors = Vec::new();
    if stride == 0 {
        return anchors;
    }
    let nx = w / stride;
    let ny = h / stride;
    for gy in 0..ny {
        for gx in 0..nx {
            let cx = (gx * stride) as f64 + stride as f64 / 2.0;
            let cy = (gy * stride) as f64 + stride as f64 / 2.0;
            for &s in scales {
                let half = s / 2.0;
                let raw = BBox {
                    x1: cx - half,
                    y1: cy - half,
                    x2: cx + half,
                    y2: cy + half,
                };
                if let Some(b) = raw.clip(w as f64, h as f64) {
                    anchors.push(b);
                }
            }
        }
    }
    anchors
}

/// Sample taxonomy by pseudo-label/ground-truth agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Taxonomy {
    Tp,
    Fp,
    Tn,
    Fn,
}

impl Taxonomy {
    pub const ALL: [Taxonomy; 4] = [Taxonomy::Tp, Taxonomy::Fp, Taxonomy::Tn, Taxonomy::Fn];

    pub fn of(positive_pl: bool, positive_gt: bool) -> Taxonomy {
        match (positive_pl, positive_gt) {
            (true, true) => Taxonomy::Tp,
            (true, false) => Taxonomy::Fp,
            (false, false) => Taxonomy::Tn,
            (false, true) => Taxonomy::Fn,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Taxonomy::Tp => "tp",
            Taxonomy::Fp => "fp",
            Taxonomy::Tn => "tn",
            Taxonomy::Fn => "fn",
        }
    }
}

/// An anchor's assignment under both label sets, before scoring.
#[derive(Debug, Clone, Copy)]
pub struct AnchorAssignment {
    pub anchor: BBox,
    pub positive_pl: bool,
    pub positive_gt: bool,
}

impl AnchorAssignment {
    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy::of(self.positive_pl, self.positive_gt)
    }
}

/// A scored sample: the anchor, its targets, and the model probability.
#[derive(Debug, Clone, Copy)]
pub struct SampleRecord {
    pub anchor: BBox,
    pub p: f64,
    pub positive_pl: bool,
    pub positive_gt: bool,
}

impl SampleRecord {
    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy::of(self.positive_pl, self.positive_gt)
    }

    /// Gradient norm against the pseudo-label target.
    pub fn gradient(&self) -> f64 {
        gradient_norm(self.p, if self.positive_pl { 1.0 } else { 0.0 })
    }
}

/// Assign anchors against both label sets: positive iff max IoU >= `iou_thr`.
pub fn assign_samples(
    anchors: &[BBox],
    gt: &[BBox],
    pl: &[BBox],
    iou_thr: f64,
) -> Vec<AnchorAssignment> {
    let positive = |a: &BBox, set: &[BBox]| set.iter().any(|b| a.iou(b) >= iou_thr);
    anchors
        .iter()
        .map(|a| AnchorAssignment {
            anchor: *a,
            positive_pl: positive(a, pl),
            positive_gt: positive(a, gt),
        })
        .collect()
}

/// Histogram of gradient norms for one taxonomy, with optional tags naming
/// the augmentation and threshold that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistogram {
    pub taxonomy: Taxonomy,
    pub counts: Vec<u64>,
    pub augmentation: Option<AugmentationKind>,
    pub threshold: Option<f64>,
}

impl DensityHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.bins() as f64
    }

    /// GHM-style neighborhood density: counts averaged over a window of
    /// `radius` bins each side (window truncated at the edges). Off by
    /// default everywhere; raw counts are what gets emitted.
    pub fn smoothed(&self, radius: usize) -> Vec<f64> {
        let n = self.bins();
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(n - 1);
                let sum: u64 = self.counts[lo..=hi].iter().sum();
                sum as f64 / (hi - lo + 1) as f64
            })
            .collect()
    }
}

/// Bin gradient norms per taxonomy over `[0, 1]`.
pub fn density(records: &[SampleRecord], bins: usize) -> BTreeMap<Taxonomy, DensityHistogram> {
    let bins = bins.max(1);
    let mut out: BTreeMap<Taxonomy, DensityHistogram> = Taxonomy::ALL
        .iter()
        .map(|&t| {
            (
                t,
                DensityHistogram {
                    taxonomy: t,
                    counts: vec![0; bins],
                    augmentation: None,
                    threshold: None,
                },
            )
        })
        .collect();
    for r in records {
        let g = r.gradient().clamp(0.0, 1.0);
        let bin = ((g * bins as f64) as usize).min(bins - 1);
        out.get_mut(&r.taxonomy()).expect("all taxonomies present").counts[bin] += 1;
    }
    out
}

/// One synthetic object as the analyzer sees it: geometry, the teacher's
/// score, and whether the teacher produced a box for it at all.
#[derive(Debug, Clone, Copy)]
pub struct SceneObject {
    pub bbox: BBox,
    pub category: CategoryId,
    /// Teacher confidence; doubles as the object's visual evidence for the
    /// student response model.
    pub score: f64,
    /// False when the teacher missed the object outright (its box never
    /// enters the pseudo-labels at any threshold).
    pub detected: bool,
}

/// Ground truth plus teacher outputs for one image, pre-augmentation.
#[derive(Debug, Clone)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
    /// Spurious teacher boxes with no underlying object.
    pub spurious: Vec<Detection>,
}

/// Augmentations compared by the analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationKind {
    Weak,
    Strong,
    Mixup,
    Mosaic,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 4] = [
        AugmentationKind::Weak,
        AugmentationKind::Strong,
        AugmentationKind::Mixup,
        AugmentationKind::Mosaic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AugmentationKind::Weak => "weak",
            AugmentationKind::Strong => "strong",
            AugmentationKind::Mixup => "mixup",
            AugmentationKind::Mosaic => "mosaic",
        }
    }
}

/// The documented student-response model.
///
/// An anchor over a real object responds with
/// `response_factor(augmentation) * blend_visibility * teacher_score`;
/// anchors over background (including spurious teacher boxes) respond at a
/// low noise level. Strong augmentation attenuates responses relative to
/// weak; mixup further multiplies by the blend weight, which is what pushes
/// missed objects toward background-like gradients.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseModel {
    pub weak_response: f64,
    pub strong_response: f64,
    pub background_level: f64,
    pub background_spread: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        ResponseModel {
            weak_response: 1.0,
            strong_response: 0.8,
            background_level: 0.05,
            background_spread: 0.04,
        }
    }
}

impl ResponseModel {
    fn response_factor(&self, aug: AugmentationKind) -> f64 {
        match aug {
            AugmentationKind::Weak => self.weak_response,
            // mixup and mosaic run on strong-augmented images
            AugmentationKind::Strong | AugmentationKind::Mixup | AugmentationKind::Mosaic => {
                self.strong_response
            }
        }
    }

    fn background(&self, rng: &mut ChaCha8Rng) -> f64 {
        let lo = (self.background_level - self.background_spread).max(0.0);
        let hi = self.background_level + self.background_spread;
        rng.random_range(lo..=hi)
    }
}

/// Analyzer configuration shared across the compared augmentations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub augmentations: Vec<AugmentationKind>,
    pub thresholds: Vec<f64>,
    pub anchor_stride: u32,
    pub anchor_scales: Vec<f64>,
    pub assign_iou: f64,
    pub bins: usize,
    pub resize_short: (u32, u32),
    pub resize_long_cap: u32,
    pub flip_prob: f64,
    pub mixup_alpha: f64,
    pub mosaic_range: (u32, u32),
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            augmentations: AugmentationKind::ALL.to_vec(),
            thresholds: vec![0.5, 0.7, 0.9],
            anchor_stride: 32,
            anchor_scales: vec![32.0, 64.0],
            assign_iou: 0.5,
            bins: 64,
            resize_short: (400, 1200),
            resize_long_cap: 1333,
            flip_prob: 0.5,
            mixup_alpha: 0.5,
            mosaic_range: (400, 800),
            seed: 0,
        }
    }
}

/// An object placed into an augmented view.
#[derive(Debug, Clone, Copy)]
struct ViewObject {
    bbox: BBox,
    score: f64,
    detected: bool,
    /// Blend weight of the source image at this object's pixels.
    visibility: f64,
    /// True for real objects, false for spurious teacher boxes.
    real: bool,
}

/// One augmented canvas with its objects.
#[derive(Debug, Clone)]
struct View {
    width: u32,
    height: u32,
    objects: Vec<ViewObject>,
}

fn place(
    view: &mut View,
    scene: &Scene,
    t: &AffineTransform,
    visibility: f64,
) {
    let (w, h) = (view.width as f64, view.height as f64);
    for o in &scene.objects {
        if let Some(bbox) = t.map_box_clipped(&o.bbox, w, h) {
            view.objects.push(ViewObject {
                bbox,
                score: o.score,
                detected: o.detected,
                visibility,
                real: true,
            });
        }
    }
    for d in &scene.spurious {
        if let Some(bbox) = t.map_box_clipped(&d.bbox, w, h) {
            view.objects.push(ViewObject {
                bbox,
                score: d.score,
                detected: true,
                visibility,
                real: false,
            });
        }
    }
}

/// Build the augmented views for one augmentation kind. Scenes are consumed
/// in order; mixup pairs them and mosaic groups them in fours, mirroring the
/// pipeline's composition geometry exactly.
fn build_views(scenes: &[Scene], aug: AugmentationKind, cfg: &CompareConfig, rng: &mut ChaCha8Rng) -> Vec<View> {
    // per-scene single-image geometry (weak: resize+flip; strong adds one
    // geometric op), sampled through the same helpers the raster path uses
    let single: Vec<(AffineTransform, (u32, u32))> = scenes
        .iter()
        .map(|s| {
            let (resize_t, (ow, oh)) =
                sample_resize_transform(s.width, s.height, rng, cfg.resize_short, cfg.resize_long_cap);
            let flip_t = sample_flip_transform(ow, rng, cfg.flip_prob);
            let mut t = flip_t.compose(&resize_t);
            if aug != AugmentationKind::Weak {
                t = sample_geometric_transform(ow, oh, rng).compose(&t);
            }
            (t, (ow, oh))
        })
        .collect();

    match aug {
        AugmentationKind::Weak | AugmentationKind::Strong => scenes
            .iter()
            .zip(&single)
            .map(|(s, (t, (w, h)))| {
                let mut v = View {
                    width: *w,
                    height: *h,
                    objects: Vec::new(),
                };
                place(&mut v, s, t, 1.0);
                v
            })
            .collect(),
        AugmentationKind::Mixup => scenes
            .chunks_exact(2)
            .enumerate()
            .map(|(i, pair)| {
                let (ta, (wa, ha)) = &single[2 * i];
                let (tb, (wb, hb)) = &single[2 * i + 1];
                let mut v = View {
                    width: *wa.max(wb),
                    height: *ha.max(hb),
                    objects: Vec::new(),
                };
                place(&mut v, &pair[0], ta, cfg.mixup_alpha);
                place(&mut v, &pair[1], tb, 1.0 - cfg.mixup_alpha);
                v
            })
            .collect(),
        AugmentationKind::Mosaic => scenes
            .chunks_exact(4)
            .enumerate()
            .map(|(i, quad)| {
                let dims = [
                    single[4 * i].1,
                    single[4 * i + 1].1,
                    single[4 * i + 2].1,
                    single[4 * i + 3].1,
                ];
                let long = rng.random_range(cfg.mosaic_range.0..=cfg.mosaic_range.1);
                let layout = mosaic_layout(dims, long);
                let mut v = View {
                    width: layout.out_dims.0,
                    height: layout.out_dims.1,
                    objects: Vec::new(),
                };
                for k in 0..4 {
                    let (t, (w, h)) = &single[4 * i + k];
                    let (sw, sh) = layout.scaled_dims[k];
                    let (ox, oy) = layout.cell_origins[k];
                    let cell = AffineTransform::translate(ox as f64, oy as f64).compose(
                        &AffineTransform::scale(sw as f64 / *w as f64, sh as f64 / *h as f64),
                    );
                    place(&mut v, &quad[k], &cell.compose(t), 1.0);
                }
                v
            })
            .collect(),
    }
}

/// Score and histogram every (augmentation, threshold) cell of the grid.
pub fn compare_augmentations(
    scenes: &[Scene],
    model: &ResponseModel,
    cfg: &CompareConfig,
) -> Vec<DensityHistogram> {
    let mut out = Vec::new();
    for (ai, &aug) in cfg.augmentations.iter().enumerate() {
        let mut geom_rng = rng::derived(cfg.seed, &[0xa6, ai as u64]);
        let views = build_views(scenes, aug, cfg, &mut geom_rng);
        for (ti, &thr) in cfg.thresholds.iter().enumerate() {
            let mut records = Vec::new();
            let mut score_rng = rng::derived(cfg.seed, &[0x5c, ai as u64, ti as u64]);
            for view in &views {
                let gt: Vec<BBox> = view
                    .objects
                    .iter()
                    .filter(|o| o.real)
                    .map(|o| o.bbox)
                    .collect();
                let pl: Vec<BBox> = view
                    .objects
                    .iter()
                    .filter(|o| o.detected && o.score >= thr)
                    .map(|o| o.bbox)
                    .collect();
                let anchors =
                    generate_anchors(view.width, view.height, cfg.anchor_stride, &cfg.anchor_scales);
                let factor = model.response_factor(aug);
                for a in assign_samples(&anchors, &gt, &pl, cfg.assign_iou) {
                    let evidence = view
                        .objects
                        .iter()
                        .filter(|o| o.real && a.anchor.iou(&o.bbox) >= cfg.assign_iou)
                        .map(|o| factor * o.visibility * o.score)
                        .fold(None::<f64>, |acc, e| Some(acc.map_or(e, |a| a.max(e))));
                    let p = match evidence {
                        Some(e) => e.clamp(EPS, 1.0 - EPS),
                        None => model.background(&mut score_rng).clamp(EPS, 1.0 - EPS),
                    };
                    records.push(SampleRecord {
                        anchor: a.anchor,
                        p,
                        positive_pl: a.positive_pl,
                        positive_gt: a.positive_gt,
                    });
                }
            }
            for (_, mut hist) in density(&records, cfg.bins) {
                hist.augmentation = Some(aug);
                hist.threshold = Some(thr);
                out.push(hist);
            }
        }
    }
    out
}

/// Mean gradient norm of one taxonomy in one grid cell; `None` when the cell
/// holds no samples.
pub fn mean_gradient(
    hists: &[DensityHistogram],
    aug: AugmentationKind,
    thr: f64,
    taxonomy: Taxonomy,
) -> Option<f64> {
    let h = hists.iter().find(|h| {
        h.augmentation == Some(aug) && h.threshold.is_some_and(|t| (t - thr).abs() < 1e-9) && h.taxonomy == taxonomy
    })?;
    let total = h.total();
    if total == 0 {
        return None;
    }
    let sum: f64 = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| h.bin_center(i) * c as f64)
        .sum();
    Some(sum / total as f64)
}

/// Write one `bin_center,count` file per histogram into `dir`.
pub fn write_histograms(hists: &[DensityHistogram], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for h in hists {
        let aug = h.augmentation.map_or("all", |a| a.label());
        let thr = h.threshold.map_or_else(|| "na".into(), |t| format!("{t:.2}"));
        let name = format!("density_{}_{}_{}.csv", aug, thr, h.taxonomy.label());
        let mut body = String::from("bin_center,count\n");
        for (i, &c) in h.counts.iter().enumerate() {
            body.push_str(&format!("{:.6},{c}\n", h.bin_center(i)));
        }
        fs::write(dir.join(&name), body).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Minimal single-file SVG line plot of the histogram family (one polyline
/// per histogram), for eyeballing the grid.
pub fn write_svg(hists: &[DensityHistogram], path: &Path) -> Result<()> {
    let (w, h) = (640.0, 400.0);
    let max = hists
        .iter()
        .flat_map(|hh| hh.counts.iter())
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    let palette = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    ];
    for (i, hist) in hists.iter().enumerate() {
        let color = palette[i % palette.len()];
        let pts: Vec<String> = hist
            .counts
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let x = hist.bin_center(j) * (w - 40.0) + 20.0;
                let y = h - 20.0 - (c as f64 / max) * (h - 40.0);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_reference_values() {
        assert!(bce_loss(1.0 - EPS, 1.0) < 1e-6);
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_clamps_extremes() {
        assert!(bce_loss(0.0, 1.0).is_finite());
        assert!(bce_loss(1.0, 0.0).is_finite());
    }

    #[test]
    fn gradient_norm_cases() {
        assert!((gradient_norm(0.9, 1.0) - 0.1).abs() < 1e-12);
        assert_eq!(gradient_norm(0.3, 0.0), 0.3);
        assert_eq!(gradient_norm(1.0, 1.0), 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference_of_logit() {
        // p = sigmoid(x); |dL/dx| must equal |p - p*|
        let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut r = rng::seeded(13);
        for _ in 0..1000 {
            let x: f64 = r.random_range(-4.0..4.0);
            let p_star = if r.random_bool(0.5) { 1.0 } else { 0.0 };
            let h = 1e-5;
            let num = (bce_loss(sigmoid(x + h), p_star) - bce_loss(sigmoid(x - h), p_star)) / (2.0 * h);
            assert!(
                (num.abs() - gradient_norm(sigmoid(x), p_star)).abs() < 1e-6,
                "finite difference mismatch at x={x}, p*={p_star}"
            );
        }
    }

    #[test]
    fn anchors_on_regular_grid() {
        let anchors = generate_anchors(64, 64, 32, &[32.0]);
        assert_eq!(anchors.len(), 4);
        assert_eq!(anchors[0], BBox::new(0.0, 0.0, 32.0, 32.0).unwrap());
    }

    #[test]
    fn anchors_empty_scale_list() {
        assert!(generate_anchors(64, 64, 32, &[]).is_empty());
    }

    #[test]
    fn anchors_cover_boxes_with_side_at_least_stride() {
        let anchors = generate_anchors(256, 192, 16, &[16.0, 32.0]);
        let mut r = rng::seeded(21);
        for _ in 0..500 {
            let w: f64 = r.random_range(16.0..80.0);
            let h: f64 = r.random_range(16.0..80.0);
            let x: f64 = r.random_range(0.0..(256.0 - w));
            let y: f64 = r.random_range(0.0..(192.0 - h));
            let b = BBox::new(x, y, x + w, y + h).unwrap();
            assert!(
                anchors.iter().any(|a| a.iou(&b) > 0.0),
                "uncovered box {b:?}"
            );
        }
    }

    #[test]
    fn assignment_taxonomy_cases() {
        let gt = vec![BBox::new(10.0, 10.0, 42.0, 42.0).unwrap()];
        let pl_with = gt.clone();
        let anchors = vec![
            BBox::new(10.0, 10.0, 42.0, 42.0).unwrap(),    // on the object
            BBox::new(200.0, 200.0, 232.0, 232.0).unwrap(), // background
        ];
        let with = assign_samples(&anchors, &gt, &pl_with, 0.5);
        assert_eq!(with[0].taxonomy(), Taxonomy::Tp);
        assert_eq!(with[1].taxonomy(), Taxonomy::Tn);
        let without = assign_samples(&anchors, &gt, &[], 0.5);
        assert_eq!(without[0].taxonomy(), Taxonomy::Fn);
        // spurious pseudo-label over background
        let spurious = vec![BBox::new(200.0, 200.0, 232.0, 232.0).unwrap()];
        let fp = assign_samples(&anchors, &gt, &spurious, 0.5);
        assert_eq!(fp[1].taxonomy(), Taxonomy::Fp);
    }

    #[test]
    fn density_all_zero_gradients_fill_first_bin() {
        let records: Vec<SampleRecord> = (0..10)
            .map(|_| SampleRecord {
                anchor: BBox::new(0.0, 0.0, 1.5, 1.5).unwrap(),
                p: 0.0,
                positive_pl: false,
                positive_gt: false,
            })
            .collect();
        let hists = density(&records, 64);
        assert_eq!(hists[&Taxonomy::Tn].counts[0], 10);
        assert_eq!(hists[&Taxonomy::Tn].total(), 10);
    }

    #[test]
    fn density_uniform_fills_bins_evenly() {
        let mut r = rng::seeded(40);
        let records: Vec<SampleRecord> = (0..6400)
            .map(|_| SampleRecord {
                anchor: BBox::new(0.0, 0.0, 1.5, 1.5).unwrap(),
                p: r.random_range(0.0..1.0),
                positive_pl: false,
                positive_gt: false,
            })
            .collect();
        let hists = density(&records, 64);
        let h = &hists[&Taxonomy::Tn];
        assert_eq!(h.total(), 6400);
        // multinomial: mean 100 per bin, sigma ~ 9.9; allow 3 sigma
        for (i, &c) in h.counts.iter().enumerate() {
            assert!(
                (c as f64 - 100.0).abs() <= 30.0,
                "bin {i} count {c} outside 100 +/- 30"
            );
        }
    }

    #[test]
    fn taxonomy_partition_is_exhaustive() {
        let hists = density(&[], 8);
        assert_eq!(hists.len(), 4);
    }

    #[test]
    fn smoothed_density_averages_neighborhoods() {
        let h = DensityHistogram {
            taxonomy: Taxonomy::Tp,
            counts: vec![0, 8, 0, 0],
            augmentation: None,
            threshold: None,
        };
        // radius 1 windows: [0,8], [0,8,0], [8,0,0], [0,0]
        assert_eq!(h.smoothed(1), vec![4.0, 8.0 / 3.0, 8.0 / 3.0, 0.0]);
        // radius 0 recovers raw counts
        assert_eq!(h.smoothed(0), vec![0.0, 8.0, 0.0, 0.0]);
    }

    fn tiny_scene(detected: bool, score: f64) -> Scene {
        Scene {
            width: 200,
            height: 160,
            objects: vec![SceneObject {
                bbox: BBox::new(40.0, 40.0, 104.0, 104.0).unwrap(),
                category: CategoryId(1),
                score,
                detected,
            }],
            spurious: vec![],
        }
    }

    #[test]
    fn threshold_one_empties_pl_and_maximizes_fn() {
        let scenes: Vec<Scene> = (0..8).map(|_| tiny_scene(true, 0.9)).collect();
        let cfg = CompareConfig {
            augmentations: vec![AugmentationKind::Strong],
            thresholds: vec![0.0, 1.0],
            resize_short: (200, 200),
            resize_long_cap: 250,
            flip_prob: 0.0,
            ..CompareConfig::default()
        };
        let hists = compare_augmentations(&scenes, &ResponseModel::default(), &cfg);
        let tp_at = |thr: f64| {
            hists
                .iter()
                .find(|h| {
                    h.taxonomy == Taxonomy::Tp && h.threshold == Some(thr)
                })
                .unwrap()
                .total()
        };
        let fn_at = |thr: f64| {
            hists
                .iter()
                .find(|h| {
                    h.taxonomy == Taxonomy::Fn && h.threshold == Some(thr)
                })
                .unwrap()
                .total()
        };
        assert_eq!(tp_at(1.0), 0, "nothing survives threshold 1.0");
        assert_eq!(fn_at(1.0), tp_at(0.0) + fn_at(0.0), "all positives become FN");
    }

    #[test]
    fn threshold_zero_fn_equals_raw_misses() {
        // half the scenes have an outright missed object: at threshold 0 the
        // FN anchors are exactly those objects' anchors
        let mut scenes: Vec<Scene> = (0..4).map(|_| tiny_scene(true, 0.6)).collect();
        scenes.extend((0..4).map(|_| tiny_scene(false, 0.6)));
        let cfg = CompareConfig {
            // weak geometry is deterministic here, so detected and missed
            // scenes see identical anchor grids
            augmentations: vec![AugmentationKind::Weak],
            thresholds: vec![0.0],
            resize_short: (200, 200),
            resize_long_cap: 250,
            flip_prob: 0.0,
            ..CompareConfig::default()
        };
        let hists = compare_augmentations(&scenes, &ResponseModel::default(), &cfg);
        let fn_total = hists
            .iter()
            .find(|h| h.taxonomy == Taxonomy::Fn)
            .unwrap()
            .total();
        let tp_total = hists
            .iter()
            .find(|h| h.taxonomy == Taxonomy::Tp)
            .unwrap()
            .total();
        assert!(fn_total > 0);
        // detected and missed scenes are geometrically identical, so the
        // positive anchors split evenly between TP and FN
        assert_eq!(fn_total, tp_total);
    }

    #[test]
    fn raising_threshold_only_moves_tp_to_fn_and_fp_to_tn() {
        let mut scenes: Vec<Scene> = (0..6).map(|i| tiny_scene(true, 0.3 + 0.1 * i as f64)).collect();
        scenes[0].spurious.push(Detection {
            bbox: BBox::new(120.0, 10.0, 184.0, 74.0).unwrap(),
            category: CategoryId(1),
            score: 0.6,
        });
        let cfg = CompareConfig {
            augmentations: vec![AugmentationKind::Weak],
            thresholds: vec![0.2, 0.5, 0.8],
            resize_short: (200, 200),
            resize_long_cap: 250,
            flip_prob: 0.0,
            ..CompareConfig::default()
        };
        let hists = compare_augmentations(&scenes, &ResponseModel::default(), &cfg);
        let total = |tax: Taxonomy, thr: f64| {
            hists
                .iter()
                .find(|h| h.taxonomy == tax && h.threshold == Some(thr))
                .unwrap()
                .total()
        };
        for pair in [(0.2, 0.5), (0.5, 0.8)] {
            assert!(total(Taxonomy::Tp, pair.1) <= total(Taxonomy::Tp, pair.0));
            assert!(total(Taxonomy::Fn, pair.1) >= total(Taxonomy::Fn, pair.0));
            assert!(total(Taxonomy::Fp, pair.1) <= total(Taxonomy::Fp, pair.0));
            assert!(total(Taxonomy::Tn, pair.1) >= total(Taxonomy::Tn, pair.0));
            // grand total conserved per augmentation
            let sum = |thr: f64| {
                Taxonomy::ALL.iter().map(|&t| total(t, thr)).sum::<u64>()
            };
            assert_eq!(sum(pair.0), sum(pair.1));
        }
    }
}
