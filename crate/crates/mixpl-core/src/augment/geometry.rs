//! Raster resampling: resize, horizontal flip, and affine warps.
//!
//! Resize uses a separable two-pass bilinear kernel (or nearest-neighbor for
//! deterministic fixtures); warps inverse-map each output pixel with zero
//! fill outside the source.

use crate::raster::{ImageRaster, CHANNELS};

use super::affine::AffineTransform;

/// Interpolation used by resize and warps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Filter {
    Bilinear,
    Nearest,
}

/// Resize to exactly `ow x oh`.
pub fn resize_raster(src: &ImageRaster, ow: u32, oh: u32, filter: Filter) -> ImageRaster {
    assert!(ow > 0 && oh > 0, "resize target must be non-empty");
    if ow == src.width() && oh == src.height() {
        return src.clone();
    }
    match filter {
        Filter::Bilinear => resize_bilinear(src, ow, oh),
        Filter::Nearest => resize_nearest(src, ow, oh),
    }
}

struct Taps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f32>,
}

/// Pixel-center mapping: `src = (dst + 0.5) * scale - 0.5`, clamped.
fn taps(out_len: u32, src_len: u32) -> Taps {
    let scale = src_len as f64 / out_len as f64;
    let mut lo = Vec::with_capacity(out_len as usize);
    let mut hi = Vec::with_capacity(out_len as usize);
    let mut frac = Vec::with_capacity(out_len as usize);
    for d in 0..out_len {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i = s.floor() as usize;
        let j = (i + 1).min(src_len as usize - 1);
        lo.push(i);
        hi.push(j);
        frac.push((s - i as f64) as f32);
    }
    Taps { lo, hi, frac }
}

/// Continuous x-range; used to find where a linear coordinate stays inside a
/// half-open bound.
#[derive(Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn intersect(self, o: Interval) -> Interval {
        Interval {
            lo: self.lo.max(o.lo),
            hi: self.hi.min(o.hi),
        }
    }

    fn clamp_to(self, w: usize) -> (usize, usize) {
        let lo = self.lo.ceil().clamp(0.0, w as f64) as usize;
        let hi = self.hi.floor().clamp(0.0, w as f64) as usize;
        (lo, hi.max(lo))
    }
}

/// x-range where `start + x * step` lies in `[0, limit)`.
fn interior_interval(start: f64, step: f64, limit: f64) -> Interval {
    if step.abs() < 1e-300 {
        if start >= 0.0 && start < limit {
            Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            }
        } else {
            Interval { lo: 0.0, hi: 0.0 }
        }
    } else {
        let a = (0.0 - start) / step;
        let b = (limit - start) / step;
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

fn resize_bilinear(src: &ImageRaster, ow: u32, oh: u32) -> ImageRaster {
    let (w, h) = (src.width() as usize, src.height() as usize);
    let data = src.samples();
    let tx = taps(ow, src.width());
    let ty = taps(oh, src.height());
    let ch = CHANNELS as usize;

    // horizontal pass into f32
    let mut mid = vec![0f32; ow as usize * h * ch];
    for y in 0..h {
        let row = &data[y * w * ch..(y + 1) * w * ch];
        let out_row = &mut mid[y * ow as usize * ch..(y + 1) * ow as usize * ch];
        for (x, px) in out_row.chunks_exact_mut(ch).enumerate() {
            let (i, j, f) = (tx.lo[x] * ch, tx.hi[x] * ch, tx.frac[x]);
            let a = &row[i..i + ch];
            let b = &row[j..j + ch];
            px[0] = a[0] as f32 + (b[0] as f32 - a[0] as f32) * f;
            px[1] = a[1] as f32 + (b[1] as f32 - a[1] as f32) * f;
            px[2] = a[2] as f32 + (b[2] as f32 - a[2] as f32) * f;
        }
    }

    // vertical pass with rounding
    let mut out = vec![0u8; ow as usize * oh as usize * ch];
    let stride = ow as usize * ch;
    for y in 0..oh as usize {
        let (i, j, f) = (ty.lo[y], ty.hi[y], ty.frac[y]);
        let top = &mid[i * stride..(i + 1) * stride];
        let bot = &mid[j * stride..(j + 1) * stride];
        let dst = &mut out[y * stride..(y + 1) * stride];
        for ((d, &t), &b) in dst.iter_mut().zip(top).zip(bot) {
            *d = (t + (b - t) * f + 0.5) as u8;
        }
    }
    ImageRaster::from_samples(ow, oh, out).expect("sized buffer")
}

fn resize_nearest(src: &ImageRaster, ow: u32, oh: u32) -> ImageRaster {
    let (w, h) = (src.width() as usize, src.height() as usize);
    let ch = CHANNELS as usize;
    let data = src.samples();
    let mut out = vec![0u8; ow as usize * oh as usize * ch];
    for y in 0..oh as usize {
        let sy = ((y as f64 + 0.5) * h as f64 / oh as f64) as usize;
        let sy = sy.min(h - 1);
        for x in 0..ow as usize {
            let sx = ((x as f64 + 0.5) * w as f64 / ow as f64) as usize;
            let sx = sx.min(w - 1);
            let s = (sy * w + sx) * ch;
            let d = (y * ow as usize + x) * ch;
            out[d..d + ch].copy_from_slice(&data[s..s + ch]);
        }
    }
    ImageRaster::from_samples(ow, oh, out).expect("sized buffer")
}

/// Pick the output dimensions for a short-side resize with a long-side cap.
/// Returns `(out_w, out_h)` rounded to whole pixels.
pub fn resize_dims_for(w: u32, h: u32, short_target: u32, long_cap: u32) -> (u32, u32) {
    let (w, h) = (w as f64, h as f64);
    let mut scale = short_target as f64 / w.min(h);
    if w.max(h) * scale > long_cap as f64 {
        scale = long_cap as f64 / w.max(h);
    }
    (
        (w * scale).round().max(1.0) as u32,
        (h * scale).round().max(1.0) as u32,
    )
}

/// Mirror the raster left-right.
pub fn flip_horizontal(src: &ImageRaster) -> ImageRaster {
    let (w, h) = (src.width() as usize, src.height() as usize);
    let ch = CHANNELS as usize;
    let data = src.samples();
    let mut out = vec![0u8; data.len()];
    for y in 0..h {
        let row = &data[y * w * ch..(y + 1) * w * ch];
        let dst = &mut out[y * w * ch..(y + 1) * w * ch];
        for x in 0..w {
            let s = (w - 1 - x) * ch;
            dst[x * ch..x * ch + ch].copy_from_slice(&row[s..s + ch]);
        }
    }
    ImageRaster::from_samples(src.width(), src.height(), out).expect("sized buffer")
}

/// Warp the raster through `t`, keeping the canvas size. Output pixels whose
/// inverse-mapped source falls outside the image are zero.
///
/// The inverse-mapped source point moves linearly along each output row, so
/// the inner loop steps incrementally; pixels whose 2x2 neighborhood is
/// strictly interior skip the border handling entirely.
pub fn warp_affine(src: &ImageRaster, t: &AffineTransform, filter: Filter) -> ImageRaster {
    let inv = t.inverse().expect("warp transforms are invertible");
    let (w, h) = (src.width() as usize, src.height() as usize);
    let ch = CHANNELS as usize;
    let data = src.samples();
    let mut out = vec![0u8; data.len()];
    let (dx_col, dy_col) = (inv.m[0], inv.m[3]);
    for y in 0..h {
        // source position at output pixel center (0.5, y + 0.5), shifted to
        // sample space
        let (mut sx, mut sy) = inv.apply(0.5, y as f64 + 0.5);
        sx -= 0.5;
        sy -= 0.5;
        let row = &mut out[y * w * ch..(y + 1) * w * ch];
        match filter {
            Filter::Nearest => {
                for x in 0..w {
                    let ix = sx.round();
                    let iy = sy.round();
                    if ix >= 0.0 && iy >= 0.0 && (ix as usize) < w && (iy as usize) < h {
                        let s = (iy as usize * w + ix as usize) * ch;
                        row[x * ch..x * ch + ch].copy_from_slice(&data[s..s + ch]);
                    }
                    sx += dx_col;
                    sy += dy_col;
                }
            }
            Filter::Bilinear => {
                // interior pixels (all four taps inside the source) form one
                // contiguous x-interval per row; solve for it and run the
                // border fallback only outside
                let ok = |x: usize| {
                    let px = sx + x as f64 * dx_col;
                    let py = sy + x as f64 * dy_col;
                    px >= 0.0 && py >= 0.0 && px < w as f64 - 1.0 && py < h as f64 - 1.0
                };
                let (mut lo_x, mut hi_x) = interior_interval(sx, dx_col, w as f64 - 1.0)
                    .intersect(interior_interval(sy, dy_col, h as f64 - 1.0))
                    .clamp_to(w);
                // the predicate is the authority; the analytic interval only
                // seeds it (both computed coordinates are monotone in x, so
                // endpoint checks cover the whole range)
                while lo_x < hi_x && !ok(lo_x) {
                    lo_x += 1;
                }
                while hi_x > lo_x && !ok(hi_x - 1) {
                    hi_x -= 1;
                }
                let border = |x: usize, sx: f64, sy: f64, row: &mut [u8]| {
                    if sx > -1.0 && sy > -1.0 && sx < w as f64 && sy < h as f64 {
                        let d = x * ch;
                        let x0 = sx.floor();
                        let y0 = sy.floor();
                        let fx = (sx - x0) as f32;
                        let fy = (sy - y0) as f32;
                        let tap = |px: f64, py: f64| -> Option<usize> {
                            if px >= 0.0 && py >= 0.0 && (px as usize) < w && (py as usize) < h {
                                Some((py as usize * w + px as usize) * ch)
                            } else {
                                None
                            }
                        };
                        let quad = [
                            (tap(x0, y0), (1.0 - fx) * (1.0 - fy)),
                            (tap(x0 + 1.0, y0), fx * (1.0 - fy)),
                            (tap(x0, y0 + 1.0), (1.0 - fx) * fy),
                            (tap(x0 + 1.0, y0 + 1.0), fx * fy),
                        ];
                        for c in 0..ch {
                            let mut acc = 0f32;
                            for &(idx, wgt) in &quad {
                                if let Some(i) = idx {
                                    acc += data[i + c] as f32 * wgt;
                                }
                            }
                            row[d + c] = (acc + 0.5) as u8;
                        }
                    }
                };
                for x in 0..lo_x {
                    border(x, sx + x as f64 * dx_col, sy + x as f64 * dy_col, row);
                }
                for x in lo_x..hi_x {
                    let ix = sx + x as f64 * dx_col;
                    let iy = sy + x as f64 * dy_col;
                    let x0 = ix as usize;
                    let y0 = iy as usize;
                    let fx = (ix - x0 as f64) as f32;
                    let fy = (iy - y0 as f64) as f32;
                    let w00 = (1.0 - fx) * (1.0 - fy);
                    let w10 = fx * (1.0 - fy);
                    let w01 = (1.0 - fx) * fy;
                    let w11 = fx * fy;
                    let i00 = (y0 * w + x0) * ch;
                    let i01 = i00 + w * ch;
                    let d = x * ch;
                    // SAFETY: lo_x..hi_x guarantees 0 <= x0 <= w-2 and
                    // 0 <= y0 <= h-2, so i00+..+ch+2 and i01+..+ch+2 are in
                    // bounds; d+2 < row len since x < w.
                    unsafe {
                        for c in 0..ch {
                            let v = *data.get_unchecked(i00 + c) as f32 * w00
                                + *data.get_unchecked(i00 + ch + c) as f32 * w10
                                + *data.get_unchecked(i01 + c) as f32 * w01
                                + *data.get_unchecked(i01 + ch + c) as f32 * w11;
                            *row.get_unchecked_mut(d + c) = (v + 0.5) as u8;
                        }
                    }
                }
                for x in hi_x..w {
                    border(x, sx + x as f64 * dx_col, sy + x as f64 * dy_col, row);
                }
            }
        }
    }
    ImageRaster::from_samples(src.width(), src.height(), out).expect("sized buffer")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> ImageRaster {
        let mut r = ImageRaster::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                r.set_pixel(x, y, [(x * 3 % 256) as u8, (y * 5 % 256) as u8, 77]);
            }
        }
        r
    }

    #[test]
    fn resize_dims_plain_scale() {
        // 500x400 at short side 800 -> exactly 1000x800, long side under cap
        assert_eq!(resize_dims_for(500, 400, 800, 1333), (1000, 800));
    }

    #[test]
    fn resize_dims_long_side_capped() {
        // 4000x1000 at short side 1200 would blow the cap; clamp to 1333 long
        assert_eq!(resize_dims_for(4000, 1000, 1200, 1333), (1333, 333));
    }

    #[test]
    fn resize_constant_image_stays_constant() {
        let src = ImageRaster::filled(64, 48, [10, 200, 31]);
        let out = resize_raster(&src, 100, 30, Filter::Bilinear);
        assert!(out
            .samples()
            .chunks_exact(3)
            .all(|px| px == [10, 200, 31]));
    }

    #[test]
    fn resize_identity_dimensions_is_noop() {
        let src = gradient(20, 10);
        assert_eq!(resize_raster(&src, 20, 10, Filter::Bilinear), src);
    }

    #[test]
    fn double_flip_restores_raster() {
        let src = gradient(31, 17);
        assert_eq!(flip_horizontal(&flip_horizontal(&src)), src);
    }

    #[test]
    fn warp_identity_preserves_raster() {
        let src = gradient(25, 25);
        let out = warp_affine(&src, &AffineTransform::identity(), Filter::Bilinear);
        assert_eq!(out, src);
    }

    #[test]
    fn warp_translate_moves_content() {
        let mut src = ImageRaster::filled(10, 10, [0, 0, 0]);
        src.set_pixel(2, 2, [255, 0, 0]);
        let out = warp_affine(
            &src,
            &AffineTransform::translate(3.0, 0.0),
            Filter::Nearest,
        );
        assert_eq!(out.pixel(5, 2), [255, 0, 0]);
        assert_eq!(out.pixel(2, 2), [0, 0, 0]);
    }
}
