//! COCO-format ingestion and emission.
//!
//! Annotation documents carry `images`, `annotations`, `categories`; results
//! documents are a flat array of `{image_id, category_id, bbox, score}`.
//! Boxes are converted `(x, y, w, h)` -> corner form on load and back on
//! emit, with continuous coordinates and no pixel offset adjustment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, CategoryId, DatasetIndex, Detection, ImageId, LabeledImage};
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::rng;

#[derive(Debug, Serialize, Deserialize)]
struct CocoDocument {
    #[serde(default)]
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file_name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u32,
    name: String,
}

/// One record of a COCO results document.
#[derive(Debug, Serialize, Deserialize)]
struct CocoResult {
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    score: f64,
}

/// Load a COCO annotation document into a [`DatasetIndex`].
///
/// Boxes are clipped to their image frame; crowd annotations and boxes that
/// degenerate under clipping are skipped with a warning. Annotations that
/// reference a missing image or category fail validation.
pub fn load_dataset(path: &Path) -> Result<DatasetIndex> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: CocoDocument = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    index_from_document(doc)
}

fn index_from_document(doc: CocoDocument) -> Result<DatasetIndex> {
    let categories: BTreeMap<CategoryId, String> = doc
        .categories
        .iter()
        .map(|c| (CategoryId(c.id), c.name.clone()))
        .collect();

    let mut by_image: BTreeMap<u64, Vec<Annotation>> = BTreeMap::new();
    let image_ids: std::collections::BTreeSet<u64> = doc.images.iter().map(|i| i.id).collect();
    let dims: BTreeMap<u64, (u32, u32)> = doc
        .images
        .iter()
        .map(|i| (i.id, (i.width, i.height)))
        .collect();

    let mut bad_category: Vec<u64> = Vec::new();
    let mut bad_image: Vec<u64> = Vec::new();
    for ann in &doc.annotations {
        if ann.iscrowd != 0 {
            log::warn!("skipping crowd annotation {}", ann.id);
            continue;
        }
        if !image_ids.contains(&ann.image_id) {
            bad_image.push(ann.id);
            continue;
        }
        if !categories.contains_key(&CategoryId(ann.category_id)) {
            bad_category.push(ann.id);
            continue;
        }
        let (w, h) = dims[&ann.image_id];
        let [x, y, bw, bh] = ann.bbox;
        let Ok(raw) = BBox::from_xywh(x, y, bw, bh) else {
            log::warn!("skipping degenerate annotation {}", ann.id);
            continue;
        };
        match raw.clip(w as f64, h as f64) {
            Some(b) => by_image.entry(ann.image_id).or_default().push(Annotation {
                bbox: b,
                category: CategoryId(ann.category_id),
            }),
            None => log::warn!("annotation {} degenerates under clipping; skipped", ann.id),
        }
    }
    if !bad_image.is_empty() {
        return Err(Error::Validation(format!(
            "annotations reference missing image ids: annotation ids {bad_image:?}"
        )));
    }
    if !bad_category.is_empty() {
        return Err(Error::Validation(format!(
            "annotations reference unknown categories: annotation ids {bad_category:?}"
        )));
    }

    let images = doc
        .images
        .iter()
        .map(|img| {
            LabeledImage::new(
                ImageId(img.id),
                img.width,
                img.height,
                by_image.remove(&img.id).unwrap_or_default(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetIndex::new(images, categories)
}

/// Write a [`DatasetIndex`] back out as a COCO annotation document.
pub fn save_dataset(index: &DatasetIndex, path: &Path) -> Result<()> {
    let mut annotations = Vec::new();
    let mut next_id = 1u64;
    for img in index.images() {
        for ann in &img.annotations {
            let [x, y, w, h] = ann.bbox.to_xywh();
            annotations.push(CocoAnnotation {
                id: next_id,
                image_id: img.id.0,
                category_id: ann.category.0,
                bbox: [x, y, w, h],
                area: Some(ann.bbox.area()),
                iscrowd: 0,
            });
            next_id += 1;
        }
    }
    let doc = CocoDocument {
        images: index
            .images()
            .iter()
            .map(|img| CocoImage {
                id: img.id.0,
                width: img.width,
                height: img.height,
                file_name: None,
            })
            .collect(),
        annotations,
        categories: index
            .categories()
            .iter()
            .map(|(&id, name)| CocoCategory {
                id: id.0,
                name: name.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&doc).expect("document serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Randomly partition a dataset into labeled/unlabeled splits.
///
/// The labeled split holds `round(fraction * N)` images, drawn uniformly
/// without stratification; both splits keep the full category table.
/// Deterministic under `seed`.
pub fn split_dataset(
    index: &DatasetIndex,
    fraction: f64,
    seed: u64,
) -> Result<(DatasetIndex, DatasetIndex)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::SplitFraction(fraction));
    }
    let n = index.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derived(seed, &[0x5311]));
    let mut labeled: Vec<usize> = order[..k].to_vec();
    let mut unlabeled: Vec<usize> = order[k..].to_vec();
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok((index.subset(&labeled)?, index.subset(&unlabeled)?))
}

/// Write per-image detection lists as a COCO results document.
pub fn emit_detections(dets: &BTreeMap<ImageId, Vec<Detection>>, path: &Path) -> Result<()> {
    let records: Vec<CocoResult> = dets
        .iter()
        .flat_map(|(&img, list)| {
            list.iter().map(move |d| CocoResult {
                image_id: img.0,
                category_id: d.category.0,
                bbox: d.bbox.to_xywh(),
                score: d.score,
            })
        })
        .collect();
    let text = serde_json::to_string(&records).expect("results serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a COCO results document back into per-image detection lists.
pub fn load_detections(path: &Path) -> Result<BTreeMap<ImageId, Vec<Detection>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<CocoResult> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut out: BTreeMap<ImageId, Vec<Detection>> = BTreeMap::new();
    for r in records {
        let [x, y, w, h] = r.bbox;
        let bbox = BBox::from_xywh(x, y, w, h)?;
        out.entry(ImageId(r.image_id)).or_default().push(Detection::new(
            bbox,
            CategoryId(r.category_id),
            r.score,
        )?);
    }
    Ok(out)
}
