//! Annotation primitives: detections, labeled images, and the dataset index.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BBox;

/// Dataset-wide image identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ImageId(pub u64);

/// Dataset-wide category identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct CategoryId(pub u32);

impl std::fmt::Display for ImageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::fmt::Display for CategoryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// A scored, categorized box — a detector prediction or a pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub category: CategoryId,
    /// Confidence in `[0, 1]`.
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, category: CategoryId, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) || score.is_nan() {
            return Err(Error::Validation(format!("score {score} outside [0, 1]")));
        }
        Ok(Detection {
            bbox,
            category,
            score,
        })
    }
}

/// A ground-truth instance on a labeled image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub category: CategoryId,
}

impl Annotation {
    /// View a ground-truth instance as a full-confidence detection, for code
    /// paths that treat labeled and pseudo-labeled boxes uniformly.
    pub fn as_detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            category: self.category,
            score: 1.0,
        }
    }
}

/// An image with its ground-truth annotations. All annotation boxes are
/// clip-valid against `(width, height)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
}

impl LabeledImage {
    pub fn new(id: ImageId, width: u32, height: u32, annotations: Vec<Annotation>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "image {id} has empty dimensions {width}x{height}"
            )));
        }
        for ann in &annotations {
            let b = ann.bbox;
            if b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > width as f64 || b.y2 > height as f64 {
                return Err(Error::Validation(format!(
                    "image {id}: annotation box ({}, {}, {}, {}) not clipped to {width}x{height}",
                    b.x1, b.y1, b.x2, b.y2
                )));
            }
        }
        Ok(LabeledImage {
            id,
            width,
            height,
            annotations,
        })
    }

    /// Categories present on this image (deduplicated).
    pub fn categories(&self) -> BTreeSet<CategoryId> {
        self.annotations.iter().map(|a| a.category).collect()
    }
}

/// An immutable dataset: images, the category table, and per-category image
/// membership sets (derived from the annotations at construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    images: Vec<LabeledImage>,
    categories: BTreeMap<CategoryId, String>,
    membership: BTreeMap<CategoryId, BTreeSet<ImageId>>,
}

impl DatasetIndex {
    /// Build an index, checking id uniqueness and category references.
    pub fn new(
        images: Vec<LabeledImage>,
        categories: BTreeMap<CategoryId, String>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for img in &images {
            if !seen.insert(img.id) {
                return Err(Error::Validation(format!("duplicate image id {}", img.id)));
            }
        }
        let mut membership: BTreeMap<CategoryId, BTreeSet<ImageId>> =
            categories.keys().map(|&c| (c, BTreeSet::new())).collect();
        for img in &images {
            for ann in &img.annotations {
                let set = membership.get_mut(&ann.category).ok_or_else(|| {
                    Error::Validation(format!(
                        "image {}: annotation references unknown category {}",
                        img.id, ann.category
                    ))
                })?;
                set.insert(img.id);
            }
        }
        Ok(DatasetIndex {
            images,
            categories,
            membership,
        })
    }

    pub fn images(&self) -> &[LabeledImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn categories(&self) -> &BTreeMap<CategoryId, String> {
        &self.categories
    }

    /// Images containing at least one instance of `c`.
    pub fn images_with_category(&self, c: CategoryId) -> Option<&BTreeSet<ImageId>> {
        self.membership.get(&c)
    }

    pub fn image(&self, id: ImageId) -> Option<&LabeledImage> {
        self.images.iter().find(|img| img.id == id)
    }

    /// Split off a subset by positional indices, keeping the category table.
    pub(crate) fn subset(&self, indices: &[usize]) -> Result<DatasetIndex> {
        let images = indices.iter().map(|&i| self.images[i].clone()).collect();
        DatasetIndex::new(images, self.categories.clone())
    }
}
