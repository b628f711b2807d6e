//! Axis-aligned box geometry: construction, IoU, scale classes, clipping.
//!
//! Boxes are stored corner-form `(x1, y1, x2, y2)` in continuous pixel
//! coordinates. The COCO `(x, y, w, h)` convention is converted at the I/O
//! boundary only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boxes whose width or height shrinks to this many pixels or fewer after a
/// transform or clip are dropped: sub-pixel boxes carry no learnable signal.
pub const MIN_BOX_SIDE: f64 = 1.0;

/// COCO scale-class boundaries: `small` strictly below 32^2, `large` strictly
/// above 96^2, `medium` in between (boundaries inclusive into medium).
pub const SMALL_AREA_MAX: f64 = 32.0 * 32.0;
pub const LARGE_AREA_MIN: f64 = 96.0 * 96.0;

/// Axis-aligned bounding box, corner form, with `x1 < x2` and `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// COCO object-size band of a box area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaleClass {
    Small,
    Medium,
    Large,
}

impl ScaleClass {
    pub const ALL: [ScaleClass; 3] = [ScaleClass::Small, ScaleClass::Medium, ScaleClass::Large];

    pub fn label(self) -> &'static str {
        match self {
            ScaleClass::Small => "small",
            ScaleClass::Medium => "medium",
            ScaleClass::Large => "large",
        }
    }
}

impl BBox {
    /// Build a box, rejecting non-finite coordinates and zero/negative areas.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::Geometry(format!(
                "non-finite coordinates ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::Geometry(format!(
                "degenerate box ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    /// Build from COCO `(x, y, w, h)`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        BBox::new(x, y, x + w, y + h)
    }

    /// Export as COCO `(x, y, w, h)`.
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x1, self.y1),
            (self.x2, self.y1),
            (self.x2, self.y2),
            (self.x1, self.y2),
        ]
    }

    /// Intersection-over-union with another box. Symmetric, in `[0, 1]`,
    /// exactly 1 iff the boxes are identical.
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let iy = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = ix * iy;
        if inter <= 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        inter / union
    }

    /// COCO scale class of this box by area.
    pub fn scale_class(&self) -> ScaleClass {
        let a = self.area();
        if a < SMALL_AREA_MAX {
            ScaleClass::Small
        } else if a > LARGE_AREA_MIN {
            ScaleClass::Large
        } else {
            ScaleClass::Medium
        }
    }

    /// Intersect with the frame `[0, w] x [0, h]`. Returns `None` when the
    /// intersection is degenerate (either side at or below [`MIN_BOX_SIDE`]).
    pub fn clip(&self, w: f64, h: f64) -> Option<BBox> {
        let x1 = self.x1.max(0.0);
        let y1 = self.y1.max(0.0);
        let x2 = self.x2.min(w);
        let y2 = self.y2.min(h);
        if x2 - x1 <= MIN_BOX_SIDE || y2 - y1 <= MIN_BOX_SIDE {
            return None;
        }
        Some(BBox { x1, y1, x2, y2 })
    }

    /// Scale both axes, e.g. when resizing the carrying image.
    pub fn scaled(&self, sx: f64, sy: f64) -> BBox {
        BBox {
            x1: self.x1 * sx,
            y1: self.y1 * sy,
            x2: self.x2 * sx,
            y2: self.y2 * sy,
        }
    }

    /// Translate by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

/// Free-function form of [`BBox::iou`].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Free-function form of [`BBox::scale_class`].
pub fn area_class(b: &BBox) -> ScaleClass {
    b.scale_class()
}

/// Free-function form of [`BBox::clip`].
pub fn clip_box(b: &BBox, w: f64, h: f64) -> Option<BBox> {
    b.clip(w, h)
}
