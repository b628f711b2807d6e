//! Weak and strong augmentation pipelines with box-consistent transforms.
//!
//! Three pipeline kinds share stages: labeled = resize, flip, one color op;
//! weak = resize, flip; strong = resize, flip, one color op, one geometric
//! op, random erasing. Geometric stages accumulate an affine transform so
//! labels can be moved between views.

pub mod affine;
pub mod color;
pub mod erase;
pub mod geometry;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use affine::{AffineTransform, TransformKind};
pub use color::{apply_color_op, ColorOp};
pub use erase::{coverage, footprint, random_erasing, ErasingParams, PixelRect};
pub use geometry::{flip_horizontal, resize_dims_for, resize_raster, warp_affine, Filter};

use crate::dataset::Detection;
use crate::error::{Error, Result};
use crate::raster::ImageRaster;
use crate::rng;

/// Which stage set a pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Labeled,
    Weak,
    Strong,
}

/// The geometric op set; magnitudes are slope factors for shear, an image-side
/// fraction for translate, and degrees for rotate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometricOp {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
}

impl GeometricOp {
    pub const ALL: [GeometricOp; 5] = [
        GeometricOp::ShearX,
        GeometricOp::ShearY,
        GeometricOp::TranslateX,
        GeometricOp::TranslateY,
        GeometricOp::Rotate,
    ];

    pub fn magnitude_range(self) -> (f64, f64) {
        match self {
            GeometricOp::ShearX | GeometricOp::ShearY => (-0.3, 0.3),
            GeometricOp::TranslateX | GeometricOp::TranslateY => (-0.1, 0.1),
            GeometricOp::Rotate => (-30.0, 30.0),
        }
    }

    /// Transform for this op on a `w x h` canvas.
    pub fn transform(self, magnitude: f64, w: f64, h: f64) -> AffineTransform {
        match self {
            GeometricOp::ShearX => AffineTransform::shear(magnitude, 0.0),
            GeometricOp::ShearY => AffineTransform::shear(0.0, magnitude),
            GeometricOp::TranslateX => AffineTransform::translate(magnitude * w, 0.0),
            GeometricOp::TranslateY => AffineTransform::translate(0.0, magnitude * h),
            GeometricOp::Rotate => AffineTransform::rotate_about(magnitude, w / 2.0, h / 2.0),
        }
    }
}

/// Configuration of one augmentation pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub kind: PipelineKind,
    /// Short-side target range for the random resize.
    pub resize_short: (u32, u32),
    /// Long-side cap applied after picking the short side.
    pub resize_long_cap: u32,
    pub flip_prob: f64,
    pub erasing: ErasingParams,
    pub filter: Filter,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            kind: PipelineKind::Weak,
            resize_short: (400, 1200),
            resize_long_cap: 1333,
            flip_prob: 0.5,
            erasing: ErasingParams::default(),
            filter: Filter::Bilinear,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn labeled() -> Self {
        AugmentSpec {
            kind: PipelineKind::Labeled,
            ..AugmentSpec::default()
        }
    }

    pub fn weak() -> Self {
        AugmentSpec::default()
    }

    pub fn strong() -> Self {
        AugmentSpec {
            kind: PipelineKind::Strong,
            ..AugmentSpec::default()
        }
    }

    /// Per-image RNG stream: pipelines are pure functions of
    /// `(spec seed, image id, stage salt)`.
    pub fn stream(&self, image_id: u64, salt: u64) -> ChaCha8Rng {
        let kind_salt = match self.kind {
            PipelineKind::Labeled => 1,
            PipelineKind::Weak => 2,
            PipelineKind::Strong => 3,
        };
        rng::derived(self.seed, &[kind_salt, image_id, salt])
    }
}

/// Result of running a pipeline on one image.
#[derive(Debug, Clone)]
pub struct AugmentedView {
    pub raster: ImageRaster,
    pub labels: Vec<Detection>,
    /// Composite of the geometric stages (color ops contribute identity).
    pub transform: AffineTransform,
}

/// Sample the resize stage's transform without touching pixels: picks the
/// short-side target, applies the long-side cap, and returns the scale
/// transform plus the rounded output dimensions.
pub fn sample_resize_transform(
    w: u32,
    h: u32,
    rng: &mut ChaCha8Rng,
    short_range: (u32, u32),
    long_cap: u32,
) -> (AffineTransform, (u32, u32)) {
    let short = rng.random_range(short_range.0..=short_range.1);
    let (ow, oh) = resize_dims_for(w, h, short, long_cap);
    let t = AffineTransform::scale(ow as f64 / w as f64, oh as f64 / h as f64);
    (t, (ow, oh))
}

/// Sample the flip stage's transform without touching pixels.
pub fn sample_flip_transform(w: u32, rng: &mut ChaCha8Rng, prob: f64) -> AffineTransform {
    if rng.random_bool(prob.clamp(0.0, 1.0)) {
        AffineTransform::hflip(w as f64)
    } else {
        AffineTransform::identity()
    }
}

/// Sample one geometric RandAugment op's transform for a `w x h` canvas.
pub fn sample_geometric_transform(w: u32, h: u32, rng: &mut ChaCha8Rng) -> AffineTransform {
    let op = *GeometricOp::ALL.choose(rng).expect("non-empty op set");
    let (lo, hi) = op.magnitude_range();
    let magnitude = rng.random_range(lo..=hi);
    op.transform(magnitude, w as f64, h as f64)
}

/// Random short-side resize with a long-side cap. Boxes scale with the image;
/// output dimensions are rounded to whole pixels.
pub fn random_resize(
    raster: &ImageRaster,
    labels: &[Detection],
    rng: &mut ChaCha8Rng,
    short_range: (u32, u32),
    long_cap: u32,
    filter: Filter,
) -> (ImageRaster, Vec<Detection>, AffineTransform) {
    let short = rng.random_range(short_range.0..=short_range.1);
    let (ow, oh) = resize_dims_for(raster.width(), raster.height(), short, long_cap);
    resize_to(raster, labels, ow, oh, filter)
}

/// Deterministic resize to explicit dimensions, scaling boxes to match.
pub fn resize_to(
    raster: &ImageRaster,
    labels: &[Detection],
    ow: u32,
    oh: u32,
    filter: Filter,
) -> (ImageRaster, Vec<Detection>, AffineTransform) {
    let sx = ow as f64 / raster.width() as f64;
    let sy = oh as f64 / raster.height() as f64;
    let t = AffineTransform::scale(sx, sy);
    let out = resize_raster(raster, ow, oh, filter);
    let labels = labels
        .iter()
        .map(|d| Detection {
            bbox: d.bbox.scaled(sx, sy),
            ..*d
        })
        .collect();
    (out, labels, t)
}

/// Horizontal flip with probability `prob`; boxes reflect in x.
pub fn random_flip(
    raster: &ImageRaster,
    labels: &[Detection],
    rng: &mut ChaCha8Rng,
    prob: f64,
) -> (ImageRaster, Vec<Detection>, AffineTransform) {
    if !rng.random_bool(prob.clamp(0.0, 1.0)) {
        return (
            raster.clone(),
            labels.to_vec(),
            AffineTransform::identity(),
        );
    }
    let w = raster.width() as f64;
    let t = AffineTransform::hflip(w);
    let out = flip_horizontal(raster);
    let labels = labels
        .iter()
        .map(|d| Detection {
            bbox: t.map_box_hull(&d.bbox),
            ..*d
        })
        .collect();
    (out, labels, t)
}

/// The two RandAugment spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentSpace {
    Color,
    Geometric,
}

/// Sample one op uniformly from the space with a uniform magnitude and apply
/// it. Color ops never touch labels and return no transform; geometric ops
/// hull-map the boxes, clip, and drop degenerates.
pub fn rand_augment(
    raster: &ImageRaster,
    labels: &[Detection],
    rng: &mut ChaCha8Rng,
    space: AugmentSpace,
    filter: Filter,
) -> (ImageRaster, Vec<Detection>, Option<AffineTransform>) {
    match space {
        AugmentSpace::Color => {
            let op = *ColorOp::ALL.choose(rng).expect("non-empty op set");
            let magnitude = match op.magnitude_range() {
                Some((lo, hi)) => rng.random_range(lo..=hi),
                None => 0.0,
            };
            (apply_color_op(op, magnitude, raster), labels.to_vec(), None)
        }
        AugmentSpace::Geometric => {
            let op = *GeometricOp::ALL.choose(rng).expect("non-empty op set");
            let (lo, hi) = op.magnitude_range();
            let magnitude = rng.random_range(lo..=hi);
            let (out, labels, t) = apply_geometric_op(raster, labels, op, magnitude, filter);
            (out, labels, Some(t))
        }
    }
}

/// Apply one geometric op at a fixed magnitude (exposed for oracles).
pub fn apply_geometric_op(
    raster: &ImageRaster,
    labels: &[Detection],
    op: GeometricOp,
    magnitude: f64,
    filter: Filter,
) -> (ImageRaster, Vec<Detection>, AffineTransform) {
    let (w, h) = (raster.width() as f64, raster.height() as f64);
    let t = op.transform(magnitude, w, h);
    let out = warp_affine(raster, &t, filter);
    let labels = labels
        .iter()
        .filter_map(|d| {
            t.map_box_clipped(&d.bbox, w, h)
                .map(|bbox| Detection { bbox, ..*d })
        })
        .collect();
    (out, labels, t)
}

/// Run the spec's stage list in order. The returned transform is the product
/// of the geometric stages, suitable for [`transfer_labels`].
pub fn apply_pipeline(
    spec: &AugmentSpec,
    raster: &ImageRaster,
    labels: &[Detection],
    rng: &mut ChaCha8Rng,
) -> AugmentedView {
    let (mut raster, mut labels, resize_t) = random_resize(
        raster,
        labels,
        rng,
        spec.resize_short,
        spec.resize_long_cap,
        spec.filter,
    );
    let (r2, l2, flip_t) = random_flip(&raster, &labels, rng, spec.flip_prob);
    raster = r2;
    labels = l2;
    let mut transform = flip_t.compose(&resize_t);

    if matches!(spec.kind, PipelineKind::Labeled | PipelineKind::Strong) {
        let (r3, l3, _) = rand_augment(&raster, &labels, rng, AugmentSpace::Color, spec.filter);
        raster = r3;
        labels = l3;
    }
    if spec.kind == PipelineKind::Strong {
        let (r4, l4, geo_t) =
            rand_augment(&raster, &labels, rng, AugmentSpace::Geometric, spec.filter);
        raster = r4;
        labels = l4;
        if let Some(t) = geo_t {
            transform = t.compose(&transform);
        }
        let (r5, l5, _) = random_erasing(&raster, &labels, rng, &spec.erasing);
        raster = r5;
        labels = l5;
    }
    AugmentedView {
        raster,
        labels,
        transform,
    }
}

/// Move labels predicted on one view onto another view of the same image:
/// map through `target ∘ source⁻¹`, hull-box, clip to the target canvas, and
/// drop degenerates.
pub fn transfer_labels(
    labels: &[Detection],
    source: &AffineTransform,
    target: &AffineTransform,
    target_w: u32,
    target_h: u32,
) -> Result<Vec<Detection>> {
    let to_target = target.compose(&source.inverse().map_err(|_| {
        Error::Augment("source view transform is not invertible".into())
    })?);
    Ok(labels
        .iter()
        .filter_map(|d| {
            to_target
                .map_box_clipped(&d.bbox, target_w as f64, target_h as f64)
                .map(|bbox| Detection { bbox, ..*d })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CategoryId;
    use crate::geom::BBox;

    fn det(x1: f64, y1: f64, x2: f64, y2: f64) -> Detection {
        Detection {
            bbox: BBox::new(x1, y1, x2, y2).unwrap(),
            category: CategoryId(1),
            score: 0.8,
        }
    }

    fn gradient(w: u32, h: u32) -> ImageRaster {
        let mut r = ImageRaster::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                r.set_pixel(x, y, [(x % 251) as u8, (y % 247) as u8, ((x + y) % 253) as u8]);
            }
        }
        r
    }

    #[test]
    fn flip_prob_zero_never_flips() {
        let raster = gradient(64, 48);
        let labels = vec![det(0.0, 0.0, 10.0, 10.0)];
        let mut r = rng::seeded(0);
        for _ in 0..1000 {
            let (_, l, t) = random_flip(&raster, &labels, &mut r, 0.0);
            assert!(t.is_identity_within(0.0));
            assert_eq!(l, labels);
        }
    }

    #[test]
    fn translate_shifts_and_clips_boxes() {
        let raster = gradient(100, 50);
        let labels = vec![det(85.0, 10.0, 95.0, 20.0)];
        let (_, moved, _) = apply_geometric_op(
            &raster,
            &labels,
            GeometricOp::TranslateX,
            0.1,
            Filter::Nearest,
        );
        // +10 in x pushes the box to 95..105, clipped to 95..100
        assert_eq!(moved.len(), 1);
        assert!((moved[0].bbox.x1 - 95.0).abs() < 1e-9);
        assert!((moved[0].bbox.x2 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn weak_pipeline_is_resize_and_flip_only() {
        // weak output must be reproducible from the transform alone: apply
        // the composite to the source labels and compare
        let raster = gradient(120, 90);
        let labels = vec![det(10.0, 10.0, 50.0, 40.0), det(60.0, 20.0, 100.0, 80.0)];
        let spec = AugmentSpec::weak();
        for salt in 0..8 {
            let mut r = spec.stream(7, salt);
            let view = apply_pipeline(&spec, &raster, &labels, &mut r);
            assert_eq!(view.labels.len(), labels.len());
            for (orig, out) in labels.iter().zip(&view.labels) {
                let mapped = view.transform.map_box_hull(&orig.bbox);
                assert!((mapped.x1 - out.bbox.x1).abs() < 1e-9);
                assert!((mapped.y2 - out.bbox.y2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pipeline_deterministic_under_seed() {
        let raster = gradient(100, 80);
        let labels = vec![det(5.0, 5.0, 60.0, 60.0)];
        let spec = AugmentSpec::strong();
        let a = apply_pipeline(&spec, &raster, &labels, &mut spec.stream(3, 0));
        let b = apply_pipeline(&spec, &raster, &labels, &mut spec.stream(3, 0));
        assert_eq!(a.raster, b.raster);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.transform.m, b.transform.m);
    }

    #[test]
    fn transfer_identity_views_is_noop() {
        let labels = vec![det(10.0, 10.0, 30.0, 30.0)];
        let t = AffineTransform::scale(2.0, 2.0);
        let back = transfer_labels(&labels, &t, &t, 200, 200).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].bbox.x1 - 10.0).abs() < 1e-6);
        assert!((back[0].bbox.x2 - 30.0).abs() < 1e-6);
    }

    #[test]
    fn transfer_scales_between_views() {
        // weak at scale 2, strong at scale 4: coordinates double
        let labels = vec![det(20.0, 20.0, 40.0, 40.0)];
        let weak = AffineTransform::scale(2.0, 2.0);
        let strong = AffineTransform::scale(4.0, 4.0);
        let out = transfer_labels(&labels, &weak, &strong, 400, 400).unwrap();
        assert_eq!(out[0].bbox, BBox::new(40.0, 40.0, 80.0, 80.0).unwrap());
    }

    #[test]
    fn transfer_reapplies_flip() {
        let labels = vec![det(0.0, 0.0, 10.0, 10.0)];
        let weak = AffineTransform::hflip(100.0);
        let strong = AffineTransform::identity();
        let out = transfer_labels(&labels, &weak, &strong, 100, 100).unwrap();
        assert_eq!(out[0].bbox, BBox::new(90.0, 0.0, 100.0, 10.0).unwrap());
    }

    #[test]
    fn color_stage_never_moves_boxes() {
        let raster = gradient(60, 60);
        let labels = vec![det(5.0, 5.0, 25.0, 25.0)];
        let mut r = rng::seeded(11);
        for _ in 0..50 {
            let (_, out, t) = rand_augment(&raster, &labels, &mut r, AugmentSpace::Color, Filter::Bilinear);
            assert!(t.is_none());
            assert_eq!(out, labels);
        }
    }
}
