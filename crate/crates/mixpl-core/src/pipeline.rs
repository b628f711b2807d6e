//! Pseudo-label filtering, the previous-iteration cache, the two mixing
//! compositions, and training-batch assembly.
//!
//! Batch recipe (defaults 1 labeled + 4 unlabeled): each current unlabeled
//! image is blended with a cache sample to give 4 mixup images, one mosaic
//! is composed from 4 of the 8 raw images, and the 5 mixed images replace
//! the 4 unlabeled ones. The cache then takes the current iteration's
//! pre-mix images wholesale, so sampling always sees the nearest previous
//! iteration.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::coco;
use crate::dataset::{Detection, ImageId};
use crate::error::{Error, Result};
use crate::raster::ImageRaster;

/// Filtered teacher predictions for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub image_id: ImageId,
    pub detections: Vec<Detection>,
    pub source_iteration: u64,
}

/// An image travelling through the composition stage.
#[derive(Debug, Clone)]
pub struct PipelineImage {
    pub id: ImageId,
    pub raster: ImageRaster,
    pub labels: Vec<Detection>,
}

/// Keep detections scoring at or above `thr`, preserving order.
pub fn filter_by_threshold(dets: &[Detection], thr: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score >= thr).copied().collect()
}

/// Drop images whose pseudo-label set is empty. Returns the survivors and
/// the number of removals.
pub fn filter_empty_images<T>(batch: Vec<(T, PseudoLabelSet)>) -> (Vec<(T, PseudoLabelSet)>, usize) {
    let before = batch.len();
    let kept: Vec<_> = batch
        .into_iter()
        .filter(|(_, set)| !set.detections.is_empty())
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// One cached pseudo-labeled image. Rasters are stored unpadded.
#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub raster: ImageRaster,
    pub labels: PseudoLabelSet,
    pub iteration: u64,
}

/// Cache of the nearest previous iteration's pseudo-labeled images.
///
/// `put` replaces the contents wholesale by default (window 1); a larger FIFO
/// window is available for ablation.
#[derive(Debug)]
pub struct PseudoCache {
    window: usize,
    generations: VecDeque<Vec<CacheEntry>>,
}

impl Default for PseudoCache {
    fn default() -> Self {
        PseudoCache::new()
    }
}

impl PseudoCache {
    pub fn new() -> Self {
        Self::with_window(1)
    }

    pub fn with_window(window: usize) -> Self {
        PseudoCache {
            window: window.max(1),
            generations: VecDeque::new(),
        }
    }

    /// Store this iteration's images, dropping the oldest generation beyond
    /// the window. Rasters are unpadded on the way in.
    pub fn put(
        &mut self,
        iteration: u64,
        entries: impl IntoIterator<Item = (ImageRaster, PseudoLabelSet)>,
    ) -> Result<()> {
        let generation = entries
            .into_iter()
            .map(|(raster, labels)| {
                Ok(CacheEntry {
                    raster: raster.unpadded()?,
                    labels,
                    iteration,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.generations.push_back(generation);
        while self.generations.len() > self.window {
            self.generations.pop_front();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draw `k` entries uniformly: without replacement when `k <= len`, with
    /// replacement otherwise. `None` signals warm-up (empty cache); the
    /// caller falls back to mixing within the current batch.
    pub fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<&CacheEntry>> {
        let pool: Vec<&CacheEntry> = self.generations.iter().flatten().collect();
        if pool.is_empty() {
            return None;
        }
        if k <= pool.len() {
            let picks = sample_indices(rng, pool.len(), k);
            Some(picks.into_iter().map(|i| pool[i]).collect())
        } else {
            Some(
                (0..k)
                    .map(|_| pool[rng.random_range(0..pool.len())])
                    .collect(),
            )
        }
    }
}

/// Pixel-wise overlay of two pseudo-labeled images with label-list union.
///
/// Both rasters are zero-padded to `max(Wa, Wb) x max(Ha, Hb)` first; pixel
/// values blend as `alpha * a + (1 - alpha) * b`, rounded half-up. Labels are
/// concatenated with no deduplication.
pub fn pseudo_mixup(
    a: (&ImageRaster, &[Detection]),
    b: (&ImageRaster, &[Detection]),
    alpha: f64,
) -> Result<(ImageRaster, Vec<Detection>)> {
    let (ra, la) = a;
    let (rb, lb) = b;
    let ra = ra.unpadded()?;
    let rb = rb.unpadded()?;
    let w = ra.width().max(rb.width());
    let h = ra.height().max(rb.height());
    let ch = crate::raster::CHANNELS as usize;
    // value tables: out = round(lut_a[va] + lut_b[vb]); the implicit padding
    // contributes lut[0] = 0 outside either image
    let mut lut_a = [0f64; 256];
    let mut lut_b = [0f64; 256];
    for v in 0..256 {
        lut_a[v] = alpha * v as f64;
        lut_b[v] = (1.0 - alpha) * v as f64;
    }
    let mut data = vec![0u8; w as usize * h as usize * ch];
    let (wa, ha) = (ra.width() as usize, ra.height() as usize);
    let (wb, hb) = (rb.width() as usize, rb.height() as usize);
    for y in 0..h as usize {
        let row = &mut data[y * w as usize * ch..(y + 1) * w as usize * ch];
        let span_a = if y < ha { wa * ch } else { 0 };
        let span_b = if y < hb { wb * ch } else { 0 };
        let row_a = if span_a > 0 {
            &ra.samples()[y * wa * ch..y * wa * ch + span_a]
        } else {
            &[][..]
        };
        let row_b = if span_b > 0 {
            &rb.samples()[y * wb * ch..y * wb * ch + span_b]
        } else {
            &[][..]
        };
        let common = span_a.min(span_b);
        for i in 0..common {
            row[i] = (lut_a[row_a[i] as usize] + lut_b[row_b[i] as usize])
                .round()
                .clamp(0.0, 255.0) as u8;
        }
        for i in common..span_a {
            row[i] = lut_a[row_a[i] as usize].round().clamp(0.0, 255.0) as u8;
        }
        for i in common..span_b {
            row[i] = lut_b[row_b[i] as usize].round().clamp(0.0, 255.0) as u8;
        }
    }
    let raster = ImageRaster::from_samples(w, h, data)?;
    let mut labels = la.to_vec();
    labels.extend_from_slice(lb);
    Ok((raster, labels))
}

/// Geometry of one mosaic composition, reusable without touching rasters.
#[derive(Debug, Clone, Copy)]
pub struct MosaicLayout {
    pub long_edge: u32,
    pub scaled_dims: [(u32, u32); 4],
    pub cell_origins: [(u32, u32); 4],
    pub out_dims: (u32, u32),
}

/// Lay out four images on a 2x2 grid: every input is resized so its longest
/// edge equals `long_edge` (aspect preserved, rounded), cell widths take the
/// column max and cell heights the row max, and images sit at their cell's
/// top-left corner.
pub fn mosaic_layout(dims: [(u32, u32); 4], long_edge: u32) -> MosaicLayout {
    let scaled_dims = dims.map(|(w, h)| {
        let scale = long_edge as f64 / w.max(h) as f64;
        (
            (w as f64 * scale).round().max(1.0) as u32,
            (h as f64 * scale).round().max(1.0) as u32,
        )
    });
    let col_w = [
        scaled_dims[0].0.max(scaled_dims[2].0),
        scaled_dims[1].0.max(scaled_dims[3].0),
    ];
    let row_h = [
        scaled_dims[0].1.max(scaled_dims[1].1),
        scaled_dims[2].1.max(scaled_dims[3].1),
    ];
    let cell_origins = [
        (0, 0),
        (col_w[0], 0),
        (0, row_h[0]),
        (col_w[0], row_h[0]),
    ];
    MosaicLayout {
        long_edge,
        scaled_dims,
        cell_origins,
        out_dims: (col_w[0] + col_w[1], row_h[0] + row_h[1]),
    }
}

/// A composed mosaic with its provenance.
#[derive(Debug, Clone)]
pub struct MosaicOutput {
    pub raster: ImageRaster,
    pub labels: Vec<Detection>,
    pub sources: [ImageId; 4],
    /// Labels lost to degenerate clipping after down-scaling.
    pub dropped: usize,
    pub layout: MosaicLayout,
}

/// Compose four pseudo-labeled images into one. A single target long edge is
/// drawn from `range` per composite; output labels are the union of all four
/// transformed lists.
pub fn pseudo_mosaic(
    inputs: &[(&ImageRaster, &[Detection], ImageId)],
    range: (u32, u32),
    rng: &mut ChaCha8Rng,
    filter: crate::augment::Filter,
) -> Result<MosaicOutput> {
    if inputs.len() != 4 {
        return Err(Error::Compose(format!(
            "mosaic needs exactly 4 inputs, got {}",
            inputs.len()
        )));
    }
    let long_edge = rng.random_range(range.0..=range.1);
    let dims = [
        (inputs[0].0.width(), inputs[0].0.height()),
        (inputs[1].0.width(), inputs[1].0.height()),
        (inputs[2].0.width(), inputs[2].0.height()),
        (inputs[3].0.width(), inputs[3].0.height()),
    ];
    let layout = mosaic_layout(dims, long_edge);
    let (ow, oh) = layout.out_dims;
    let mut raster = ImageRaster::filled(ow, oh, [0, 0, 0]);
    let mut labels = Vec::new();
    let mut dropped = 0usize;
    for (i, &(src, src_labels, _)) in inputs.iter().enumerate() {
        let (sw, sh) = layout.scaled_dims[i];
        let (ox, oy) = layout.cell_origins[i];
        let scaled = crate::augment::resize_raster(src, sw, sh, filter);
        blit(&mut raster, &scaled, ox, oy);
        let sx = sw as f64 / src.width() as f64;
        let sy = sh as f64 / src.height() as f64;
        for d in src_labels {
            let moved = d.bbox.scaled(sx, sy).translated(ox as f64, oy as f64);
            match moved.clip(ow as f64, oh as f64) {
                Some(bbox) => labels.push(Detection { bbox, ..*d }),
                None => dropped += 1,
            }
        }
    }
    Ok(MosaicOutput {
        raster,
        labels,
        sources: [inputs[0].2, inputs[1].2, inputs[2].2, inputs[3].2],
        dropped,
        layout,
    })
}

fn blit(dst: &mut ImageRaster, src: &ImageRaster, ox: u32, oy: u32) {
    let ch = crate::raster::CHANNELS as usize;
    let sw = src.width() as usize * ch;
    let dw = dst.storage_width() as usize * ch;
    let dst_data_offset = |y: usize| (oy as usize + y) * dw + ox as usize * ch;
    for y in 0..src.height() as usize {
        let s = &src.samples()[y * sw..(y + 1) * sw];
        let off = dst_data_offset(y);
        dst.samples_mut()[off..off + sw].copy_from_slice(s);
    }
}

/// Where a batch image came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchProvenance {
    Labeled(ImageId),
    Mixup(ImageId, ImageId),
    Mosaic([ImageId; 4]),
}

impl BatchProvenance {
    pub fn kind(&self) -> &'static str {
        match self {
            BatchProvenance::Labeled(_) => "labeled",
            BatchProvenance::Mixup(..) => "mixup",
            BatchProvenance::Mosaic(_) => "mosaic",
        }
    }

    pub fn sources(&self) -> Vec<ImageId> {
        match self {
            BatchProvenance::Labeled(id) => vec![*id],
            BatchProvenance::Mixup(a, b) => vec![*a, *b],
            BatchProvenance::Mosaic(s) => s.to_vec(),
        }
    }
}

/// One image of a composed training batch.
#[derive(Debug, Clone)]
pub struct BatchImage {
    pub provenance: BatchProvenance,
    pub raster: ImageRaster,
    pub labels: Vec<Detection>,
    /// Loss weight metadata: 1 for labeled images, `w_u` for mixed ones.
    pub loss_weight: f64,
}

/// A composed training batch: labeled images plus mixed pseudo-labeled ones.
#[derive(Debug, Clone)]
pub struct PseudoBatch {
    pub labeled: Vec<BatchImage>,
    pub mixed: Vec<BatchImage>,
    /// True when the cache was empty and mixing fell back to the current batch.
    pub warm_up: bool,
    /// Labels lost to degenerate clipping inside the mosaic.
    pub mosaic_dropped: usize,
}

impl PseudoBatch {
    pub fn images(&self) -> impl Iterator<Item = &BatchImage> {
        self.labeled.iter().chain(self.mixed.iter())
    }

    /// The composition manifest: one line per batch image with its kind,
    /// loss weight, and source image ids.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for (i, img) in self.images().enumerate() {
            let sources: Vec<String> = img
                .provenance
                .sources()
                .iter()
                .map(|id| id.to_string())
                .collect();
            writeln!(
                out,
                "{i} {} weight={} sources={}",
                img.provenance.kind(),
                img.loss_weight,
                sources.join(",")
            )
            .expect("write to string");
        }
        out
    }
}

/// Knobs of the composition stage.
#[derive(Debug, Clone, Copy)]
pub struct ComposeConfig {
    pub w_u: f64,
    pub mixup_alpha: f64,
    pub mosaic_range: (u32, u32),
    pub filter: crate::augment::Filter,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        ComposeConfig {
            w_u: 2.0,
            mixup_alpha: 0.5,
            mosaic_range: (400, 800),
            filter: crate::augment::Filter::Bilinear,
        }
    }
}

/// Assemble one training batch from strong-augmented, filtered inputs.
///
/// Each unlabeled image is mixup-paired with a distinct cache sample (or a
/// batch neighbor during warm-up), one mosaic is drawn from the pooled raw
/// images, and the cache then takes this iteration's pre-mix images.
pub fn compose_training_batch(
    labeled: Vec<PipelineImage>,
    unlabeled: Vec<PipelineImage>,
    cache: &mut PseudoCache,
    cfg: &ComposeConfig,
    iteration: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PseudoBatch> {
    let n_u = unlabeled.len();
    if n_u == 0 {
        return Err(Error::Compose("no unlabeled images to mix".into()));
    }
    if unlabeled.iter().any(|img| img.labels.is_empty()) {
        return Err(Error::Compose(
            "unlabeled inputs must pass empty-image filtering first".into(),
        ));
    }

    // mixing partners: nearest previous iteration, or batch neighbors on warm-up
    let (partners, warm_up): (Vec<(ImageId, ImageRaster, Vec<Detection>)>, bool) =
        match cache.sample(n_u, rng) {
            Some(entries) => (
                entries
                    .into_iter()
                    .map(|e| (e.labels.image_id, e.raster.clone(), e.labels.detections.clone()))
                    .collect(),
                false,
            ),
            None => (
                (0..n_u)
                    .map(|i| {
                        let j = if n_u == 1 {
                            0
                        } else {
                            // any batch member other than i
                            let mut j = rng.random_range(0..n_u - 1);
                            if j >= i {
                                j += 1;
                            }
                            j
                        };
                        let p = &unlabeled[j];
                        (p.id, p.raster.clone(), p.labels.clone())
                    })
                    .collect(),
                true,
            ),
        };

    let mut mixed = Vec::with_capacity(n_u + 1);
    for (img, (pid, praster, plabels)) in unlabeled.iter().zip(&partners) {
        let (raster, labels) = pseudo_mixup(
            (&img.raster, &img.labels),
            (praster, plabels),
            cfg.mixup_alpha,
        )?;
        mixed.push(BatchImage {
            provenance: BatchProvenance::Mixup(img.id, *pid),
            raster,
            labels,
            loss_weight: cfg.w_u,
        });
    }

    // mosaic drawn from the 2 * n_u raw images (current batch + partners)
    let pool: Vec<(&ImageRaster, &[Detection], ImageId)> = unlabeled
        .iter()
        .map(|img| (&img.raster, img.labels.as_slice(), img.id))
        .chain(
            partners
                .iter()
                .map(|(id, r, l)| (r, l.as_slice(), *id)),
        )
        .collect();
    if pool.len() < 4 {
        return Err(Error::Compose(format!(
            "mosaic pool holds {} images, need at least 4",
            pool.len()
        )));
    }
    let picks = sample_indices(rng, pool.len(), 4);
    let chosen: Vec<_> = picks.into_iter().map(|i| pool[i]).collect();
    let mosaic = pseudo_mosaic(&chosen, cfg.mosaic_range, rng, cfg.filter)?;
    if mosaic.labels.is_empty() {
        return Err(Error::Compose(
            "mosaic lost every label to degenerate clipping".into(),
        ));
    }
    let mosaic_dropped = mosaic.dropped;
    mixed.push(BatchImage {
        provenance: BatchProvenance::Mosaic(mosaic.sources),
        raster: mosaic.raster,
        labels: mosaic.labels,
        loss_weight: cfg.w_u,
    });

    // the cache keeps this iteration's pre-mix pseudo-labeled images
    cache.put(
        iteration,
        unlabeled.iter().map(|img| {
            (
                img.raster.clone(),
                PseudoLabelSet {
                    image_id: img.id,
                    detections: img.labels.clone(),
                    source_iteration: iteration,
                },
            )
        }),
    )?;

    Ok(PseudoBatch {
        labeled: labeled
            .into_iter()
            .map(|img| BatchImage {
                provenance: BatchProvenance::Labeled(img.id),
                raster: img.raster,
                labels: img.labels,
                loss_weight: 1.0,
            })
            .collect(),
        mixed,
        warm_up,
        mosaic_dropped,
    })
}

/// Dump a batch for debugging: one raw raster and one COCO results document
/// per image, plus the composition manifest.
pub fn dump_batch(batch: &PseudoBatch, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, img) in batch.images().enumerate() {
        let stem = format!("{i:03}_{}", img.provenance.kind());
        img.raster.write_raw(&dir.join(format!("{stem}.mxpl")))?;
        let mut per_image = std::collections::BTreeMap::new();
        per_image.insert(ImageId(i as u64), img.labels.clone());
        coco::emit_detections(&per_image, &dir.join(format!("{stem}.json")))?;
    }
    fs::write(dir.join("manifest.txt"), batch.manifest()).map_err(|e| Error::io(dir, e))?;
    Ok(())
}
