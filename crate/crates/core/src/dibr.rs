//! Depth-image-based rendering of left/right virtual views.
//!
//! Horizontal-shift warp around a convergence plane: each pixel moves by
//! `p = round(baseline * w / 2 * (depth - convergence))` columns, to the right
//! in the left view and to the left in the right view. Larger depth values are
//! nearer and win occlusion conflicts; holes take the value of the nearest
//! background (smaller depth) neighbour on the same row.

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence, Role};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Camera baseline as a fraction of the frame width, in `(0, 0.1]`.
    pub baseline_fraction: f64,
    /// Depth value (in `[0, 1]`) that renders with zero disparity.
    pub convergence_depth: f64,
}

impl BaselineConfig {
    pub fn new(baseline_fraction: f64, convergence_depth: f64) -> Result<Self> {
        if !(baseline_fraction > 0.0 && baseline_fraction <= 0.1) {
            return Err(Error::Config(format!(
                "baseline fraction {baseline_fraction} outside (0, 0.1]"
            )));
        }
        if !(0.0..=1.0).contains(&convergence_depth) {
            return Err(Error::Config(format!(
                "convergence depth {convergence_depth} outside [0, 1]"
            )));
        }
        Ok(BaselineConfig {
            baseline_fraction,
            convergence_depth,
        })
    }
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            baseline_fraction: 0.05,
            convergence_depth: 0.5,
        }
    }
}

/// Signed disparity in whole pixels for a depth value in `[0, 1]`.
pub fn disparity(depth: f64, width: usize, cfg: &BaselineConfig) -> isize {
    (cfg.baseline_fraction * width as f64 / 2.0 * (depth - cfg.convergence_depth)).round() as isize
}

/// Warps one row: `direction` is +1 for the left view, -1 for the right view.
fn warp_row(
    frame: &Frame,
    depth: &Frame,
    y: usize,
    direction: isize,
    cfg: &BaselineConfig,
    out: &mut Frame,
) {
    let w = frame.width();
    let n = frame.channels().count();
    let mut z: Vec<Option<u8>> = vec![None; w];
    for x in 0..w {
        let d = depth.get(x, y, 0);
        let tx = x as isize + direction * disparity(d as f64 / 255.0, w, cfg);
        if tx < 0 || tx >= w as isize {
            continue;
        }
        let tx = tx as usize;
        // on equal depth the later source pixel wins, keeping rows stable
        if z[tx].is_none_or(|cur| d >= cur) {
            z[tx] = Some(d);
            for c in 0..n {
                out.set(tx, y, c, frame.get(x, y, c));
            }
        }
    }
    // holes: copy from the nearest filled neighbour with the smaller depth
    let filled: Vec<Option<u8>> = z.clone();
    for x in 0..w {
        if filled[x].is_some() {
            continue;
        }
        let left = (0..x).rev().find(|&i| filled[i].is_some());
        let right = (x + 1..w).find(|&i| filled[i].is_some());
        let src = match (left, right) {
            (Some(l), Some(r)) => {
                if filled[r].unwrap() < filled[l].unwrap() {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => continue,
        };
        for c in 0..n {
            let v = out.get(src, y, c);
            out.set(x, y, c, v);
        }
    }
}

/// Renders `(left, right)` views of `frame` using `depth` (8-bit, 255 = nearest).
pub fn synthesize_views(frame: &Frame, depth: &Frame, cfg: &BaselineConfig) -> Result<(Frame, Frame)> {
    if frame.width() != depth.width() || frame.height() != depth.height() {
        return Err(Error::Shape(format!(
            "frame {}x{} vs depth {}x{}",
            frame.width(),
            frame.height(),
            depth.width(),
            depth.height()
        )));
    }
    if !depth.is_gray() {
        return Err(Error::Shape("depth map must be single-channel".into()));
    }
    let mut left = Frame::filled(frame.width(), frame.height(), frame.channels(), 0);
    let mut right = left.clone();
    for y in 0..frame.height() {
        warp_row(frame, depth, y, 1, cfg, &mut left);
        warp_row(frame, depth, y, -1, cfg, &mut right);
    }
    Ok((left, right))
}

/// Per-frame view synthesis; both outputs carry the synthesized role.
pub fn synthesize_clip(
    seq_2d: &FrameSequence,
    seq_depth: &FrameSequence,
    cfg: &BaselineConfig,
) -> Result<(FrameSequence, FrameSequence)> {
    if seq_2d.len() != seq_depth.len() {
        return Err(Error::FrameCountMismatch {
            left: seq_2d.len(),
            right: seq_depth.len(),
        });
    }
    let mut lefts = Vec::with_capacity(seq_2d.len());
    let mut rights = Vec::with_capacity(seq_2d.len());
    for (f, d) in seq_2d.frames().iter().zip(seq_depth.frames()) {
        let (l, r) = synthesize_views(f, d, cfg)?;
        lefts.push(l);
        rights.push(r);
    }
    let mut left = FrameSequence::new(lefts, Role::Synthesized)?;
    let mut right = FrameSequence::new(rights, Role::Synthesized)?;
    left.fps = seq_2d.fps;
    right.fps = seq_2d.fps;
    Ok((left, right))
}
