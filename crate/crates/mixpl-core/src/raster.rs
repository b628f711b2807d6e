//! 8-bit RGB raster with an explicit padded/unpadded state.
//!
//! Cached pseudo-labeled images are stored unpadded to save memory and padded
//! again (zero fill, bottom/right) when they join a batch; the round trip is
//! bit-exact. The raw dump format (`MXPL` magic) is the interchange format
//! for cache spills and batch dumps; PNG is used for image files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CHANNELS: u8 = 3;
const RAW_MAGIC: &[u8; 4] = b"MXPL";

/// Whether the stored samples include zero padding beyond the content area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadState {
    Unpadded,
    /// Samples cover `target_w x target_h`; content remains `width x height`
    /// at the top-left, the rest is zero fill.
    Padded { target_w: u32, target_h: u32 },
}

/// Row-major H x W x 3 raster of 8-bit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    width: u32,
    height: u32,
    pad_state: PadState,
    data: Vec<u8>,
}

impl ImageRaster {
    /// Allocate an unpadded raster filled with `fill`.
    pub fn filled(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let mut data = vec![0u8; width as usize * height as usize * CHANNELS as usize];
        if fill != [0, 0, 0] {
            for px in data.chunks_exact_mut(3) {
                px.copy_from_slice(&fill);
            }
        }
        ImageRaster {
            width,
            height,
            pad_state: PadState::Unpadded,
            data,
        }
    }

    /// Wrap raw samples; `data` must be `width * height * 3` bytes.
    pub fn from_samples(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * CHANNELS as usize;
        if data.len() != expected {
            return Err(Error::RasterFormat(format!(
                "sample count {} does not match {width}x{height}x{CHANNELS}",
                data.len()
            )));
        }
        Ok(ImageRaster {
            width,
            height,
            pad_state: PadState::Unpadded,
            data,
        })
    }

    /// Content width (excludes padding).
    pub fn width(&self) -> u32 {
        self.width
    }

    /// Content height (excludes padding).
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Width of the stored sample grid (equals content width when unpadded).
    pub fn storage_width(&self) -> u32 {
        match self.pad_state {
            PadState::Unpadded => self.width,
            PadState::Padded { target_w, .. } => target_w,
        }
    }

    /// Height of the stored sample grid.
    pub fn storage_height(&self) -> u32 {
        match self.pad_state {
            PadState::Unpadded => self.height,
            PadState::Padded { target_h, .. } => target_h,
        }
    }

    pub fn pad_state(&self) -> PadState {
        self.pad_state
    }

    pub fn samples(&self) -> &[u8] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn long_edge(&self) -> u32 {
        self.width.max(self.height)
    }

    pub fn short_edge(&self) -> u32 {
        self.width.min(self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        let w = self.storage_width() as usize;
        self.data[(y as usize * w + x as usize) * CHANNELS as usize + c as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: u8, v: u8) {
        let w = self.storage_width() as usize;
        self.data[(y as usize * w + x as usize) * CHANNELS as usize + c as usize] = v;
    }

    /// Pixel as an RGB triple.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let w = self.storage_width() as usize;
        let i = (y as usize * w + x as usize) * CHANNELS as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, px: [u8; 3]) {
        let w = self.storage_width() as usize;
        let i = (y as usize * w + x as usize) * CHANNELS as usize;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Fill the axis-aligned pixel rectangle `[x0, x1) x [y0, y1)` with `value`.
    /// Coordinates are clamped to the storage grid.
    pub fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, value: [u8; 3]) {
        let (sw, sh) = (self.storage_width(), self.storage_height());
        let x1 = x1.min(sw);
        let y1 = y1.min(sh);
        if x0 >= x1 || y0 >= y1 {
            return;
        }
        let w = sw as usize;
        for y in y0..y1 {
            let row = (y as usize * w + x0 as usize) * CHANNELS as usize;
            let end = (y as usize * w + x1 as usize) * CHANNELS as usize;
            for px in self.data[row..end].chunks_exact_mut(3) {
                px.copy_from_slice(&value);
            }
        }
    }

    /// Zero-pad bottom/right to `target_w x target_h`. Errors when the target
    /// is smaller than the content; padding an already padded raster is not
    /// supported (unpad first).
    pub fn pad_to(&self, target_w: u32, target_h: u32) -> Result<ImageRaster> {
        if self.pad_state != PadState::Unpadded {
            return Err(Error::RasterFormat("raster is already padded".into()));
        }
        if target_w < self.width || target_h < self.height {
            return Err(Error::PadTarget {
                width: self.width,
                height: self.height,
                target_w,
                target_h,
            });
        }
        let row_src = self.width as usize * CHANNELS as usize;
        let row_dst = target_w as usize * CHANNELS as usize;
        let mut data = vec![0u8; row_dst * target_h as usize];
        for y in 0..self.height as usize {
            data[y * row_dst..y * row_dst + row_src]
                .copy_from_slice(&self.data[y * row_src..(y + 1) * row_src]);
        }
        Ok(ImageRaster {
            width: self.width,
            height: self.height,
            pad_state: PadState::Padded { target_w, target_h },
            data,
        })
    }

    /// Strip padding, recovering the original content bit-exactly. Errors on
    /// an unpadded raster.
    pub fn unpad(&self) -> Result<ImageRaster> {
        let PadState::Padded { target_w, .. } = self.pad_state else {
            return Err(Error::RasterFormat("raster is not padded".into()));
        };
        let row_src = target_w as usize * CHANNELS as usize;
        let row_dst = self.width as usize * CHANNELS as usize;
        let mut data = vec![0u8; row_dst * self.height as usize];
        for y in 0..self.height as usize {
            data[y * row_dst..(y + 1) * row_dst]
                .copy_from_slice(&self.data[y * row_src..y * row_src + row_dst]);
        }
        Ok(ImageRaster {
            width: self.width,
            height: self.height,
            pad_state: PadState::Unpadded,
            data,
        })
    }

    /// Ensure unpadded form (no-op when already unpadded).
    pub fn unpadded(&self) -> Result<ImageRaster> {
        match self.pad_state {
            PadState::Unpadded => Ok(self.clone()),
            PadState::Padded { .. } => self.unpad(),
        }
    }

    /// Write the raw dump: `MXPL`, u32-le width, u32-le height, u8 channels,
    /// samples row-major. Padded rasters are stored unpadded.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let flat = self.unpadded()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut header = Vec::with_capacity(13);
        header.extend_from_slice(RAW_MAGIC);
        header.extend_from_slice(&flat.width.to_le_bytes());
        header.extend_from_slice(&flat.height.to_le_bytes());
        header.push(CHANNELS);
        f.write_all(&header).map_err(|e| Error::io(path, e))?;
        f.write_all(&flat.data).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Read a raw dump written by [`ImageRaster::write_raw`].
    pub fn read_raw(path: &Path) -> Result<ImageRaster> {
        let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 13];
        f.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        if &header[0..4] != RAW_MAGIC {
            return Err(Error::RasterFormat("bad magic bytes".into()));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let channels = header[12];
        if channels != CHANNELS {
            return Err(Error::RasterFormat(format!(
                "unsupported channel count {channels}"
            )));
        }
        let mut data = vec![0u8; width as usize * height as usize * CHANNELS as usize];
        f.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
        ImageRaster::from_samples(width, height, data)
    }

    /// Encode as PNG (content area only).
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let flat = self.unpadded()?;
        let buf = image::RgbImage::from_raw(flat.width, flat.height, flat.data)
            .ok_or_else(|| Error::Codec("raster does not fit an RGB image buffer".into()))?;
        buf.save(path).map_err(|e| Error::Codec(e.to_string()))
    }

    /// Decode a PNG file into an unpadded raster.
    pub fn read_png(path: &Path) -> Result<ImageRaster> {
        let img = image::open(path)
            .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = (img.width(), img.height());
        ImageRaster::from_samples(w, h, img.into_raw())
    }
}
