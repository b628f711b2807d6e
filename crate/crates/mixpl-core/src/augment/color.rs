//! Photometric ops. Definitions follow the PIL conventions: enhancement ops
//! blend the image with a degenerate version (gray, grayscale, black,
//! smoothed) so magnitude 1 returns the original image exactly.

use crate::raster::ImageRaster;

/// The color-space op set. None of these move bounding boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorOp {
    AutoContrast,
    Equalize,
    Solarize,
    Posterize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
}

impl ColorOp {
    pub const ALL: [ColorOp; 8] = [
        ColorOp::AutoContrast,
        ColorOp::Equalize,
        ColorOp::Solarize,
        ColorOp::Posterize,
        ColorOp::Contrast,
        ColorOp::Color,
        ColorOp::Brightness,
        ColorOp::Sharpness,
    ];

    /// Magnitude range sampled for the op; `None` for parameterless ops.
    pub fn magnitude_range(self) -> Option<(f64, f64)> {
        match self {
            ColorOp::AutoContrast | ColorOp::Equalize => None,
            ColorOp::Solarize => Some((0.0, 256.0)),
            ColorOp::Posterize => Some((4.0, 8.0)),
            ColorOp::Contrast | ColorOp::Color | ColorOp::Brightness | ColorOp::Sharpness => {
                Some((0.1, 1.9))
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ColorOp::AutoContrast => "auto_contrast",
            ColorOp::Equalize => "equalize",
            ColorOp::Solarize => "solarize",
            ColorOp::Posterize => "posterize",
            ColorOp::Contrast => "contrast",
            ColorOp::Color => "color",
            ColorOp::Brightness => "brightness",
            ColorOp::Sharpness => "sharpness",
        }
    }
}

/// Apply one color op at the given magnitude (ignored by parameterless ops).
pub fn apply_color_op(op: ColorOp, magnitude: f64, src: &ImageRaster) -> ImageRaster {
    match op {
        ColorOp::AutoContrast => auto_contrast(src),
        ColorOp::Equalize => equalize(src),
        ColorOp::Solarize => solarize(src, magnitude),
        ColorOp::Posterize => posterize(src, magnitude.floor().clamp(1.0, 8.0) as u8),
        ColorOp::Contrast => contrast(src, magnitude),
        ColorOp::Color => saturate(src, magnitude),
        ColorOp::Brightness => brightness(src, magnitude),
        ColorOp::Sharpness => sharpness(src, magnitude),
    }
}

#[inline]
fn luma(px: [u8; 3]) -> u8 {
    (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64).round() as u8
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Apply one lookup table per channel over the whole buffer.
fn map_lut(src: &ImageRaster, lut: &[[u8; 256]; 3]) -> ImageRaster {
    let mut data = src.samples().to_vec();
    for px in data.chunks_exact_mut(3) {
        px[0] = lut[0][px[0] as usize];
        px[1] = lut[1][px[1] as usize];
        px[2] = lut[2][px[2] as usize];
    }
    ImageRaster::from_samples(src.width(), src.height(), data).expect("same-size buffer")
}

/// Shared-table variant for channel-independent ops.
fn map_shared_lut(src: &ImageRaster, table: [u8; 256]) -> ImageRaster {
    map_lut(src, &[table, table, table])
}

fn build_table(f: impl Fn(u8) -> u8) -> [u8; 256] {
    let mut t = [0u8; 256];
    for (i, v) in t.iter_mut().enumerate() {
        *v = f(i as u8);
    }
    t
}

/// Stretch each channel so the darkest pixel maps to 0 and the lightest to 255.
fn auto_contrast(src: &ImageRaster) -> ImageRaster {
    let mut lo = [255u8; 3];
    let mut hi = [0u8; 3];
    for px in src.samples().chunks_exact(3) {
        for c in 0..3 {
            lo[c] = lo[c].min(px[c]);
            hi[c] = hi[c].max(px[c]);
        }
    }
    let lut = [0, 1, 2].map(|c: usize| {
        build_table(|v| {
            if hi[c] <= lo[c] {
                v
            } else {
                clamp_u8((v.saturating_sub(lo[c])) as f64 * 255.0 / (hi[c] - lo[c]) as f64)
            }
        })
    });
    map_lut(src, &lut)
}

/// Per-channel histogram equalization (PIL's integer-step variant).
fn equalize(src: &ImageRaster) -> ImageRaster {
    let mut hist = [[0u64; 256]; 3];
    for px in src.samples().chunks_exact(3) {
        for c in 0..3 {
            hist[c][px[c] as usize] += 1;
        }
    }
    let mut lut = [[0u8; 256]; 3];
    for c in 0..3 {
        let h = &hist[c];
        let nonzero: Vec<u64> = h.iter().copied().filter(|&v| v != 0).collect();
        if nonzero.len() <= 1 {
            for (i, l) in lut[c].iter_mut().enumerate() {
                *l = i as u8;
            }
            continue;
        }
        let step = (nonzero.iter().sum::<u64>() - nonzero.last().unwrap()) / 255;
        if step == 0 {
            for (i, l) in lut[c].iter_mut().enumerate() {
                *l = i as u8;
            }
            continue;
        }
        let mut n = step / 2;
        for i in 0..256 {
            lut[c][i] = (n / step).min(255) as u8;
            n += h[i];
        }
    }
    map_lut(src, &lut)
}

/// Invert every sample at or above the threshold.
fn solarize(src: &ImageRaster, threshold: f64) -> ImageRaster {
    map_shared_lut(
        src,
        build_table(|v| if (v as f64) >= threshold { 255 - v } else { v }),
    )
}

/// Keep only the top `bits` bits of each sample.
fn posterize(src: &ImageRaster, bits: u8) -> ImageRaster {
    let mask = 0xFFu8 << (8 - bits.min(8));
    map_shared_lut(src, build_table(|v| v & mask))
}

/// Blend with the mean-gray image: 0 -> uniform gray, 1 -> original.
fn contrast(src: &ImageRaster, f: f64) -> ImageRaster {
    let n = (src.width() as u64 * src.height() as u64).max(1);
    let sum: u64 = src
        .samples()
        .chunks_exact(3)
        .map(|px| luma([px[0], px[1], px[2]]) as u64)
        .sum();
    let mean = (sum as f64 / n as f64).round();
    map_shared_lut(src, build_table(|v| clamp_u8(mean + f * (v as f64 - mean))))
}

/// Blend with the per-pixel grayscale image: 0 -> black & white, 1 -> original.
fn saturate(src: &ImageRaster, f: f64) -> ImageRaster {
    let mut data = src.samples().to_vec();
    for px in data.chunks_exact_mut(3) {
        let l = luma([px[0], px[1], px[2]]) as f64;
        for v in px.iter_mut() {
            *v = clamp_u8(l + f * (*v as f64 - l));
        }
    }
    ImageRaster::from_samples(src.width(), src.height(), data).expect("same-size buffer")
}

/// Scale toward black: 0 -> black, 1 -> original.
fn brightness(src: &ImageRaster, f: f64) -> ImageRaster {
    map_shared_lut(src, build_table(|v| clamp_u8(f * v as f64)))
}

/// Blend with a 3x3 smoothed image: 0 -> blurred, 1 -> original, >1 sharpened.
/// Border pixels stay untouched, matching the PIL filter behavior.
fn sharpness(src: &ImageRaster, f: f64) -> ImageRaster {
    let (w, h) = (src.width() as usize, src.height() as usize);
    if w < 3 || h < 3 {
        return src.clone();
    }
    let data = src.samples();
    let mut out = data.to_vec();
    // smoothing kernel 1 1 1 / 1 5 1 / 1 1 1, normalized by 13
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for c in 0..3 {
                let at = |dx: isize, dy: isize| {
                    data[(((y as isize + dy) as usize) * w + (x as isize + dx) as usize) * 3 + c]
                        as f64
                };
                let smooth = (at(-1, -1)
                    + at(0, -1)
                    + at(1, -1)
                    + at(-1, 0)
                    + 5.0 * at(0, 0)
                    + at(1, 0)
                    + at(-1, 1)
                    + at(0, 1)
                    + at(1, 1))
                    / 13.0;
                let orig = at(0, 0);
                out[(y * w + x) * 3 + c] = clamp_u8(smooth + f * (orig - smooth));
            }
        }
    }
    ImageRaster::from_samples(src.width(), src.height(), out).expect("same-size buffer")
}
