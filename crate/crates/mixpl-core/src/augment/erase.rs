//! Random erasing with exact per-label coverage accounting.
//!
//! Erased patches are whole-pixel rectangles zeroed in place. A label is
//! dropped when the erased fraction of its pixel footprint exceeds the drop
//! threshold; the fraction is computed exactly from the patch rectangles,
//! not sampled.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Detection;
use crate::geom::BBox;
use crate::raster::ImageRaster;

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    fn intersect(&self, other: &PixelRect) -> PixelRect {
        PixelRect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ErasingParams {
    /// Number of patches, sampled uniformly inclusive.
    pub patches: (u32, u32),
    /// Patch side as a fraction of the matching image side.
    pub side_ratio: (f64, f64),
    /// Labels with erased coverage strictly above this fraction are dropped.
    pub drop_coverage: f64,
}

impl Default for ErasingParams {
    fn default() -> Self {
        ErasingParams {
            patches: (1, 20),
            side_ratio: (0.0, 0.1),
            drop_coverage: 0.7,
        }
    }
}

/// Zero out random patches and drop over-covered labels. Returns the applied
/// patch rectangles so callers (and oracles) can audit coverage.
pub fn random_erasing(
    raster: &ImageRaster,
    labels: &[Detection],
    rng: &mut ChaCha8Rng,
    params: &ErasingParams,
) -> (ImageRaster, Vec<Detection>, Vec<PixelRect>) {
    let (w, h) = (raster.width(), raster.height());
    let count = if params.patches.1 == 0 {
        0
    } else {
        rng.random_range(params.patches.0..=params.patches.1)
    };
    let mut patches = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let rw = rng.random_range(params.side_ratio.0..=params.side_ratio.1);
        let rh = rng.random_range(params.side_ratio.0..=params.side_ratio.1);
        let pw = (rw * w as f64).floor() as u32;
        let ph = (rh * h as f64).floor() as u32;
        if pw == 0 || ph == 0 {
            continue;
        }
        let x0 = rng.random_range(0..=w - pw);
        let y0 = rng.random_range(0..=h - ph);
        patches.push(PixelRect {
            x0,
            y0,
            x1: x0 + pw,
            y1: y0 + ph,
        });
    }

    let mut out = raster.clone();
    for p in &patches {
        out.fill_rect(p.x0, p.y0, p.x1, p.y1, [0, 0, 0]);
    }

    let kept = labels
        .iter()
        .filter(|d| coverage(&d.bbox, &patches, w, h) <= params.drop_coverage)
        .copied()
        .collect();
    (out, kept, patches)
}

/// Pixel footprint of a continuous box, clamped to the image grid.
pub fn footprint(b: &BBox, w: u32, h: u32) -> PixelRect {
    PixelRect {
        x0: b.x1.floor().max(0.0) as u32,
        y0: b.y1.floor().max(0.0) as u32,
        x1: (b.x2.ceil() as u32).min(w),
        y1: (b.y2.ceil() as u32).min(h),
    }
}

/// Exact fraction of the box's pixel footprint covered by the patch union.
pub fn coverage(b: &BBox, patches: &[PixelRect], w: u32, h: u32) -> f64 {
    let fp = footprint(b, w, h);
    if fp.is_empty() {
        return 0.0;
    }
    let total = (fp.x1 - fp.x0) as u64 * (fp.y1 - fp.y0) as u64;
    let clipped: Vec<PixelRect> = patches
        .iter()
        .map(|p| p.intersect(&fp))
        .filter(|p| !p.is_empty())
        .collect();
    union_area(&clipped) as f64 / total as f64
}

/// Area of a union of integer rectangles by coordinate compression.
fn union_area(rects: &[PixelRect]) -> u64 {
    if rects.is_empty() {
        return 0;
    }
    let mut xs: Vec<u32> = rects.iter().flat_map(|r| [r.x0, r.x1]).collect();
    let mut ys: Vec<u32> = rects.iter().flat_map(|r| [r.y0, r.y1]).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let mut area = 0u64;
    for xi in 0..xs.len() - 1 {
        for yi in 0..ys.len() - 1 {
            let covered = rects.iter().any(|r| {
                r.x0 <= xs[xi] && xs[xi + 1] <= r.x1 && r.y0 <= ys[yi] && ys[yi + 1] <= r.y1
            });
            if covered {
                area += (xs[xi + 1] - xs[xi]) as u64 * (ys[yi + 1] - ys[yi]) as u64;
            }
        }
    }
    area
}
