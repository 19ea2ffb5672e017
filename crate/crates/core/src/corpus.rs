//! Procedural test clips: textured RGB video with a matching depth sequence.
//!
//! Each clip has a drifting multi-grating background on a depth ramp and a few
//! textured discs at constant depth moving along smooth random paths. A global
//! illumination curve and the object paths are drawn from the clip's own seed,
//! so different clips have unrelated temporal structure.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence, Role};
use crate::vss::{Watermark, WATERMARK_SIDE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusParams {
    pub clips: usize,
    /// Square frame side in pixels.
    pub size: usize,
    pub frames: usize,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            clips: 20,
            size: 160,
            frames: 64,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub id: String,
    pub video: FrameSequence,
    pub depth: FrameSequence,
    pub w_2d: Watermark,
    pub w_depth: Watermark,
}

#[derive(Debug, Clone)]
struct Grating {
    fx: f64,
    fy: f64,
    vx: f64,
    vy: f64,
    phase: f64,
    amp: f64,
    tint: [f64; 3],
}

#[derive(Debug, Clone)]
struct Disc {
    radius: f64,
    depth: f64,
    color: [f64; 3],
    stripes: f64,
    // path: centre + sum of two sinusoids per axis, in frame-size units
    centre: [f64; 2],
    amp: [[f64; 2]; 2],
    freq: [f64; 2],
    phase: [[f64; 2]; 2],
}

impl Disc {
    fn position(&self, t: f64) -> (f64, f64) {
        let mut p = self.centre;
        for (axis, p) in p.iter_mut().enumerate() {
            for h in 0..2 {
                *p += self.amp[axis][h] * (TAU * self.freq[h] * t + self.phase[axis][h]).sin();
            }
        }
        (p[0], p[1])
    }
}

#[derive(Debug, Clone)]
struct Scene {
    gratings: Vec<Grating>,
    discs: Vec<Disc>,
    ramp: (f64, f64, f64),
    light: Vec<(f64, f64, f64)>,
}

impl Scene {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let gratings = (0..3)
            .map(|_| {
                let angle = rng.random_range(0.0..TAU);
                let freq = rng.random_range(2.0..9.0);
                let speed = rng.random_range(-1.5..1.5);
                Grating {
                    fx: freq * angle.cos(),
                    fy: freq * angle.sin(),
                    vx: speed * angle.cos(),
                    vy: speed * angle.sin(),
                    phase: rng.random_range(0.0..TAU),
                    amp: rng.random_range(0.08..0.2),
                    tint: [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)],
                }
            })
            .collect();
        let n_discs = rng.random_range(3..6);
        let mut discs: Vec<Disc> = (0..n_discs)
            .map(|_| Disc {
                radius: rng.random_range(0.07..0.18),
                depth: rng.random_range(0.5..1.0),
                color: [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)],
                stripes: rng.random_range(8.0..30.0),
                centre: [rng.random_range(0.25..0.75), rng.random_range(0.25..0.75)],
                amp: [
                    [rng.random_range(0.05..0.2), rng.random_range(0.0..0.08)],
                    [rng.random_range(0.05..0.2), rng.random_range(0.0..0.08)],
                ],
                freq: [rng.random_range(0.3..1.5), rng.random_range(1.5..4.0)],
                phase: [
                    [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
                    [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
                ],
            })
            .collect();
        // far to near so later discs occlude earlier ones
        discs.sort_by(|a, b| a.depth.total_cmp(&b.depth));
        let angle = rng.random_range(0.0..TAU);
        let light = (0..3)
            .map(|_| (rng.random_range(0.03..0.12), rng.random_range(0.5..3.0), rng.random_range(0.0..TAU)))
            .collect();
        Scene {
            gratings,
            discs,
            ramp: (angle.cos(), angle.sin(), rng.random_range(0.1..0.4)),
            light,
        }
    }

    /// Index of the nearest disc covering `(u, v)` at time `t`, if any.
    fn hit(&self, positions: &[(f64, f64)], u: f64, v: f64) -> Option<usize> {
        (0..self.discs.len()).rev().find(|&i| {
            let (cx, cy) = positions[i];
            let r = self.discs[i].radius;
            (u - cx).powi(2) + (v - cy).powi(2) < r * r
        })
    }

    fn render(&self, size: usize, t: f64) -> (Frame, Frame) {
        let positions: Vec<(f64, f64)> = self.discs.iter().map(|d| d.position(t)).collect();
        let gain = 1.0
            + self
                .light
                .iter()
                .map(|&(a, f, p)| a * (TAU * f * t + p).sin())
                .sum::<f64>();
        let mut video = Frame::filled(size, size, crate::frame::Channels::Rgb, 0);
        let mut depth = Frame::filled(size, size, crate::frame::Channels::Gray, 0);
        let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        for y in 0..size {
            for x in 0..size {
                let u = (x as f64 + 0.5) / size as f64;
                let v = (y as f64 + 0.5) / size as f64;
                let (rgb, z) = match self.hit(&positions, u, v) {
                    Some(i) => {
                        let d = &self.discs[i];
                        let (cx, cy) = positions[i];
                        let r = ((u - cx).powi(2) + (v - cy).powi(2)).sqrt() / d.radius;
                        let s = 0.75 + 0.25 * (TAU * d.stripes * (u - cx + 0.5 * (v - cy))).sin();
                        let shade = 1.0 - 0.3 * r * r;
                        (d.color.map(|c| c * s * shade), d.depth)
                    }
                    None => {
                        let mut rgb = [0.45; 3];
                        for g in &self.gratings {
                            let arg = TAU * (g.fx * (u - g.vx * t) + g.fy * (v - g.vy * t)) + g.phase;
                            let w = g.amp * arg.sin();
                            for (c, tint) in rgb.iter_mut().zip(g.tint) {
                                *c += w * tint;
                            }
                        }
                        let (rx, ry, base) = self.ramp;
                        (rgb, base + 0.1 * (rx * (u - 0.5) + ry * (v - 0.5)))
                    }
                };
                for (c, value) in rgb.into_iter().enumerate() {
                    video.set(x, y, c, to_u8(value * gain));
                }
                depth.set(x, y, 0, to_u8(z));
            }
        }
        (video, depth)
    }
}

/// A random 40x40 watermark.
pub fn random_watermark(rng: &mut impl Rng) -> Watermark {
    Watermark::new(BitMatrix::from_fn(WATERMARK_SIDE, WATERMARK_SIDE, |_, _| rng.random())).unwrap()
}

fn clip_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Clip `index` of the corpus described by `params`.
pub fn generate_clip(params: &CorpusParams, index: usize) -> Result<SyntheticClip> {
    if params.size < 8 || params.frames < 2 {
        return Err(Error::Config(format!(
            "corpus clips need size >= 8 and frames >= 2, got {} and {}",
            params.size, params.frames
        )));
    }
    let mut rng = clip_rng(params.seed, index);
    let scene = Scene::random(&mut rng);
    let w_2d = random_watermark(&mut rng);
    let w_depth = random_watermark(&mut rng);
    let (video, depth): (Vec<Frame>, Vec<Frame>) = (0..params.frames)
        .map(|k| scene.render(params.size, k as f64 / params.frames as f64))
        .unzip();
    Ok(SyntheticClip {
        id: format!("clip{index:03}"),
        video: FrameSequence::new(video, Role::TwoD)?,
        depth: FrameSequence::new(depth, Role::Depth)?,
        w_2d,
        w_depth,
    })
}

pub fn generate_corpus(params: &CorpusParams) -> Result<Vec<SyntheticClip>> {
    (0..params.clips).map(|i| generate_clip(params, i)).collect()
}
