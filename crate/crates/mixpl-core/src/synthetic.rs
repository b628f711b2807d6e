//! Procedural dataset generation.
//!
//! Tests and the simulator run without any external downloads: images,
//! category frequencies, and object-size mixes are generated from a seeded
//! spec. Category frequency follows a power-law over rank (category 1 is the
//! head), object sizes are drawn per scale class so the generated mix is
//! COCO-like.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, CategoryId, DatasetIndex, ImageId, LabeledImage};
use crate::error::Result;
use crate::geom::BBox;
use crate::raster::ImageRaster;
use crate::rng;

/// Parameters of the procedural dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_images: usize,
    pub num_categories: u32,
    /// Long edge of each generated image, sampled uniformly per image.
    pub long_edge: (u32, u32),
    /// Short edge as a fraction of the long edge.
    pub aspect: (f64, f64),
    /// Instances per image, inclusive range.
    pub instances: (u32, u32),
    /// Relative draw weights for small / medium / large objects.
    pub scale_mix: [f64; 3],
    /// Base-side ranges per scale class, in pixels (side^2 is the box area).
    pub small_side: (f64, f64),
    pub medium_side: (f64, f64),
    pub large_side: (f64, f64),
    /// Power-law exponent for category frequency over rank.
    pub category_skew: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_images: 200,
            num_categories: 10,
            long_edge: (480, 640),
            aspect: (0.7, 0.85),
            instances: (3, 8),
            scale_mix: [0.35, 0.35, 0.30],
            small_side: (8.0, 31.5),
            medium_side: (33.0, 95.5),
            large_side: (97.0, 190.0),
            category_skew: 1.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Spec tuned for mosaic-input populations: full-resolution images with
    /// a guaranteed share of large objects.
    pub fn mosaic_inputs(num_images: usize, seed: u64) -> Self {
        SyntheticSpec {
            num_images,
            long_edge: (1333, 1333),
            aspect: (0.75, 0.75),
            instances: (4, 8),
            seed,
            ..SyntheticSpec::default()
        }
    }

    /// Generate the dataset index. Deterministic under the spec's seed.
    pub fn generate(&self) -> Result<DatasetIndex> {
        let categories: BTreeMap<CategoryId, String> = (1..=self.num_categories)
            .map(|i| (CategoryId(i), format!("cat{i:02}")))
            .collect();
        let weights = self.category_weights();
        let mut images = Vec::with_capacity(self.num_images);
        for i in 0..self.num_images {
            let id = ImageId(i as u64 + 1);
            let mut r = rng::derived(self.seed, &[0x1a6e, id.0]);
            images.push(self.generate_image(id, &weights, &mut r)?);
        }
        DatasetIndex::new(images, categories)
    }

    /// Relative frequency weight per category, power-law over the rank.
    fn category_weights(&self) -> Vec<f64> {
        (0..self.num_categories)
            .map(|rank| 1.0 / ((rank + 1) as f64).powf(self.category_skew))
            .collect()
    }

    fn sample_category(&self, weights: &[f64], r: &mut ChaCha8Rng) -> CategoryId {
        let total: f64 = weights.iter().sum();
        let mut t = r.random_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if t < *w {
                return CategoryId(i as u32 + 1);
            }
            t -= w;
        }
        CategoryId(self.num_categories)
    }

    fn generate_image(
        &self,
        id: ImageId,
        weights: &[f64],
        r: &mut ChaCha8Rng,
    ) -> Result<LabeledImage> {
        let long = r.random_range(self.long_edge.0..=self.long_edge.1);
        let short = (long as f64 * r.random_range(self.aspect.0..=self.aspect.1)).round() as u32;
        let (w, h) = if r.random_bool(0.8) {
            (long, short)
        } else {
            (short, long)
        };
        let n = r.random_range(self.instances.0..=self.instances.1);
        let mut annotations = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let category = self.sample_category(weights, r);
            let side_range = self.pick_side_range(r);
            if let Some(bbox) = self.place_box(w, h, side_range, r) {
                annotations.push(Annotation { bbox, category });
            }
        }
        LabeledImage::new(id, w, h, annotations)
    }

    fn pick_side_range(&self, r: &mut ChaCha8Rng) -> (f64, f64) {
        let total: f64 = self.scale_mix.iter().sum();
        let t = r.random_range(0.0..total);
        if t < self.scale_mix[0] {
            self.small_side
        } else if t < self.scale_mix[0] + self.scale_mix[1] {
            self.medium_side
        } else {
            self.large_side
        }
    }

    fn place_box(
        &self,
        w: u32,
        h: u32,
        (lo, hi): (f64, f64),
        r: &mut ChaCha8Rng,
    ) -> Option<BBox> {
        // base side is sqrt(area): aspect reshapes the box without moving it
        // across a scale-class boundary
        let side = r.random_range(lo..=hi);
        let q = r.random_range(0.7f64..=1.4).sqrt();
        let bw = (side * q).min(w as f64 - 2.0);
        let bh = (side / q).min(h as f64 - 2.0);
        if bw < 2.0 || bh < 2.0 {
            return None;
        }
        let x = r.random_range(0.0..=(w as f64 - bw));
        let y = r.random_range(0.0..=(h as f64 - bh));
        BBox::new(x, y, x + bw, y + bh).ok()
    }

    /// Render the deterministic raster for one generated image: flat
    /// background plus one filled rectangle per annotation.
    pub fn raster_for(&self, image: &LabeledImage) -> ImageRaster {
        let mut r = rng::derived(self.seed, &[0x9a57e6, image.id.0]);
        let bg = [
            r.random_range(40..=90u8),
            r.random_range(40..=90u8),
            r.random_range(40..=90u8),
        ];
        let mut raster = ImageRaster::filled(image.width, image.height, bg);
        for ann in &image.annotations {
            let c = category_color(ann.category);
            let b = ann.bbox;
            raster.fill_rect(
                b.x1.floor().max(0.0) as u32,
                b.y1.floor().max(0.0) as u32,
                b.x2.ceil() as u32,
                b.y2.ceil() as u32,
                c,
            );
        }
        raster
    }
}

/// Stable, distinct-ish fill color per category.
pub fn category_color(c: CategoryId) -> [u8; 3] {
    let x = (c.0 as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    [
        128u8.wrapping_add((x >> 16) as u8 % 120),
        128u8.wrapping_add((x >> 32) as u8 % 120),
        128u8.wrapping_add((x >> 48) as u8 % 120),
    ]
}
