//! 2D affine transforms carried alongside augmented views.
//!
//! A transform maps source coordinates to view coordinates. Pseudo-labels
//! predicted on one view move to another through `target ∘ source⁻¹`, with
//! boxes mapped as the axis-aligned hull of their transformed corners.

use crate::error::{Error, Result};
use crate::geom::BBox;

/// Which stage produced a transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Identity,
    Resize,
    Flip,
    Shear,
    Translate,
    Rotate,
    Compose,
}

/// Row-major 2x3 affine matrix: `(x, y) -> (a x + b y + c, d x + e y + f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub m: [f64; 6],
    pub kind: TransformKind,
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            kind: TransformKind::Identity,
        }
    }

    /// Axis scaling, used by resize.
    pub fn scale(sx: f64, sy: f64) -> Self {
        AffineTransform {
            m: [sx, 0.0, 0.0, 0.0, sy, 0.0],
            kind: TransformKind::Resize,
        }
    }

    /// Horizontal mirror within an image of width `w`.
    pub fn hflip(w: f64) -> Self {
        AffineTransform {
            m: [-1.0, 0.0, w, 0.0, 1.0, 0.0],
            kind: TransformKind::Flip,
        }
    }

    /// Shear along x (`x' = x + m y`) or y.
    pub fn shear(mx: f64, my: f64) -> Self {
        AffineTransform {
            m: [1.0, mx, 0.0, my, 1.0, 0.0],
            kind: TransformKind::Shear,
        }
    }

    pub fn translate(dx: f64, dy: f64) -> Self {
        AffineTransform {
            m: [1.0, 0.0, dx, 0.0, 1.0, dy],
            kind: TransformKind::Translate,
        }
    }

    /// Rotation by `degrees` counterclockwise about `(cx, cy)`.
    pub fn rotate_about(degrees: f64, cx: f64, cy: f64) -> Self {
        let rad = degrees.to_radians();
        let (s, c) = rad.sin_cos();
        // T(c) * R * T(-c)
        AffineTransform {
            m: [
                c,
                -s,
                cx - c * cx + s * cy,
                s,
                c,
                cy - s * cx - c * cy,
            ],
            kind: TransformKind::Rotate,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.m;
        (a * x + b * y + c, d * x + e * y + f)
    }

    pub fn determinant(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &AffineTransform) -> AffineTransform {
        let [a2, b2, c2, d2, e2, f2] = self.m;
        let [a1, b1, c1, d1, e1, f1] = first.m;
        AffineTransform {
            m: [
                a2 * a1 + b2 * d1,
                a2 * b1 + b2 * e1,
                a2 * c1 + b2 * f1 + c2,
                d2 * a1 + e2 * d1,
                d2 * b1 + e2 * e1,
                d2 * c1 + e2 * f1 + f2,
            ],
            kind: TransformKind::Compose,
        }
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let det = self.determinant();
        if det.abs() < 1e-12 {
            return Err(Error::Augment(format!(
                "transform is not invertible (det {det})"
            )));
        }
        let [a, b, c, d, e, f] = self.m;
        let ia = e / det;
        let ib = -b / det;
        let id = -d / det;
        let ie = a / det;
        Ok(AffineTransform {
            m: [ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)],
            kind: self.kind,
        })
    }

    /// Axis-aligned hull of the box's four transformed corners (unclipped).
    pub fn map_box_hull(&self, b: &BBox) -> BBox {
        let pts = b.corners().map(|(x, y)| self.apply(x, y));
        let (mut x1, mut y1) = pts[0];
        let (mut x2, mut y2) = pts[0];
        for &(x, y) in &pts[1..] {
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x);
            y2 = y2.max(y);
        }
        BBox { x1, y1, x2, y2 }
    }

    /// Hull-map then clip to `[0, w] x [0, h]`; `None` when degenerate.
    pub fn map_box_clipped(&self, b: &BBox, w: f64, h: f64) -> Option<BBox> {
        self.map_box_hull(b).clip(w, h)
    }

    pub fn is_identity_within(&self, tol: f64) -> bool {
        let id = AffineTransform::identity();
        self.m
            .iter()
            .zip(id.m.iter())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}
