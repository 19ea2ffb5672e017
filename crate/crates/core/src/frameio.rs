//! Frame-sequence loading and clip normalization.
//!
//! A clip on disk is a directory of `frame_%06d.pgm` / `frame_%06d.ppm` files
//! numbered consecutively from zero. Normalization maps any `w x h x l` clip to
//! a fixed `320 x 320 x 100` luminance volume in `[0, 1]`:
//!
//! 1. nearest-index temporal resampling, `src = floor(dst * l / 100)` (0-based);
//! 2. luminance (Rec.601) for color frames, `/255` for gray frames;
//! 3. bilinear spatial resize to `320 x 320`;
//! 4. 3x3 Gaussian smoothing (sigma 0.5, replicate border), unless disabled.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence, Plane, Role};
use crate::imgproc::{convolve_separable, gaussian_kernel, resize_bilinear};
use crate::pnm;

pub const CLIP_SIZE: usize = 320;
pub const CLIP_FRAMES: usize = 100;

const SMOOTHING_SIGMA: f64 = 0.5;

/// Luminance volume of a normalized clip, values in `[0, 1]`.
///
/// Layout is frame-major: `volume[k * size * size + i * size + j]` with `i`
/// the row and `j` the column.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedClip {
    size: usize,
    frames: usize,
    volume: Vec<f64>,
    role: Role,
}

impl NormalizedClip {
    pub fn from_volume(size: usize, frames: usize, volume: Vec<f64>, role: Role) -> Result<Self> {
        if size < 3 || frames == 0 {
            return Err(Error::Shape(format!("clip geometry {size}x{size}x{frames}")));
        }
        if volume.len() != size * size * frames {
            return Err(Error::LengthMismatch {
                expected: size * size * frames,
                got: volume.len(),
            });
        }
        if let Some(v) = volume.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("volume value {v} outside [0, 1]")));
        }
        Ok(NormalizedClip {
            size,
            frames,
            volume,
            role,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    /// One `size x size` frame, row-major.
    pub fn frame(&self, k: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.volume[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.volume[(k * self.size + i) * self.size + j]
    }

    /// Applies a pixel remapping `(i, j) -> (src_i, src_j)` to every frame.
    pub fn remap(&self, f: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let s = self.size;
        let mut volume = vec![0.0; self.volume.len()];
        for k in 0..self.frames {
            for i in 0..s {
                for j in 0..s {
                    let (si, sj) = f(i, j);
                    volume[(k * s + i) * s + j] = self.at(si, sj, k);
                }
            }
        }
        NormalizedClip {
            volume,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormalizeOptions {
    pub size: usize,
    pub frames: usize,
    /// Disabling smoothing makes canonical-size inputs map to themselves.
    pub smoothing: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            size: CLIP_SIZE,
            frames: CLIP_FRAMES,
            smoothing: true,
        }
    }
}

/// Rec.601 luminance in `[0, 1]`.
pub fn to_luminance(frame: &Frame) -> Plane {
    let mut p = Plane::new(frame.width(), frame.height());
    if frame.is_gray() {
        for (dst, &v) in p.data.iter_mut().zip(frame.data()) {
            *dst = v as f64 / 255.0;
        }
    } else {
        for (dst, px) in p.data.iter_mut().zip(frame.data().chunks_exact(3)) {
            // integer weights keep white at exactly 1.0
            let y = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
            *dst = y as f64 / 255_000.0;
        }
    }
    p
}

/// 0-based source frame for each of `dst_len` output frames.
pub fn temporal_indices(src_len: usize, dst_len: usize) -> Vec<usize> {
    (0..dst_len).map(|k| k * src_len / dst_len).collect()
}

pub fn normalize_clip(seq: &FrameSequence) -> Result<NormalizedClip> {
    normalize_clip_with(seq, NormalizeOptions::default())
}

pub fn normalize_clip_with(seq: &FrameSequence, opts: NormalizeOptions) -> Result<NormalizedClip> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let indices = temporal_indices(seq.len(), opts.frames);
    let kernel = gaussian_kernel(3, SMOOTHING_SIGMA);
    let mut cache: BTreeMap<usize, Plane> = BTreeMap::new();
    let plane_len = opts.size * opts.size;
    let mut volume = Vec::with_capacity(plane_len * opts.frames);
    for &src in &indices {
        let plane = cache.entry(src).or_insert_with(|| {
            let lum = to_luminance(&seq.frames()[src]);
            let resized = resize_bilinear(&lum, opts.size, opts.size);
            if opts.smoothing {
                convolve_separable(&resized, &kernel)
            } else {
                resized
            }
        });
        volume.extend(plane.data.iter().map(|v| v.clamp(0.0, 1.0)));
    }
    NormalizedClip::from_volume(opts.size, opts.frames, volume, seq.role())
}

fn frame_path(dir: &Path, index: usize, ext: &str) -> PathBuf {
    dir.join(format!("frame_{index:06}.{ext}"))
}

fn parse_frame_name(name: &str) -> Option<(usize, &str)> {
    let rest = name.strip_prefix("frame_")?;
    let (num, ext) = rest.split_once('.')?;
    if num.len() != 6 || !num.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    matches!(ext, "pgm" | "ppm").then(|| (num.parse().unwrap(), ext))
}

/// Loads `frame_000000.*` .. `frame_NNNNNN.*` from `dir`.
pub fn load_clip(dir: &Path, role: Role) -> Result<FrameSequence> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let mut found: BTreeMap<usize, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some((index, _)) = parse_frame_name(name) {
            if found.insert(index, entry.path()).is_some() {
                return Err(Error::Format(format!("frame {index} present twice")));
            }
        }
    }
    if found.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let mut frames = Vec::with_capacity(found.len());
    for (expected, (index, path)) in found.iter().enumerate() {
        if *index != expected {
            return Err(Error::FrameGap { expected });
        }
        frames.push(pnm::read_frame(path)?);
    }
    FrameSequence::new(frames, role)
}

/// Writes a sequence as `frame_%06d.pgm|ppm` into `dir`, creating it.
pub fn save_clip(dir: &Path, seq: &FrameSequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, f) in seq.frames().iter().enumerate() {
        let ext = if f.is_gray() { "pgm" } else { "ppm" };
        pnm::write_frame(&frame_path(dir, k, ext), f)?;
    }
    Ok(())
}
