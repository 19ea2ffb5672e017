//! Deterministic clip attacks for robustness evaluation: 14 families,
//! 26 parameterizations.
//!
//! Pixel maps (contrast, brightness, gamma, noise) round to the nearest
//! level and clamp to `0..=255`. Spatial filters use a replicate border.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frame::{clamp_u8, Frame, FrameSequence, Plane};
use crate::imgproc::{box_filter, convolve_separable, gaussian_kernel, median_filter_u8, resize_bilinear};

/// Seed used by [`attack_catalog`] for the stochastic families.
pub const CATALOG_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlipAxis {
    /// Upside down (rows reversed).
    Vertical,
    /// Mirror (columns reversed).
    Horizontal,
}

/// One attack with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attack {
    /// Gaussian blur, unit variance, square window.
    GaussianBlur { window: usize },
    AverageFilter { window: usize },
    MedianFilter { window: usize },
    /// Contrast change around mid-gray by a signed fraction.
    Contrast { change: f64 },
    /// Multiplicative brightness change by a signed fraction.
    Brightness { change: f64 },
    Gamma { gamma: f64 },
    /// Additive zero-mean noise, variance on the `[0, 1]` scale.
    GaussianNoise { variance: f64 },
    /// Opaque checkerboard logo at the upper-left corner.
    Logo { size: usize },
    /// Downscale every dimension by `1 / factor`.
    Resize { factor: usize },
    /// Remove a fraction of width/height from every edge.
    Crop { fraction: f64 },
    Rotate { degrees: u32 },
    Flip { axis: FlipAxis },
    /// Replace a fraction of frames with their predecessor.
    FrameReplace { rate: f64 },
    FrameDrop { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub attack: Attack,
    pub seed: Option<u64>,
}

fn approx_in(v: f64, set: &[f64]) -> bool {
    set.iter().any(|s| (v - s).abs() < 1e-9)
}

impl Attack {
    pub fn family(&self) -> &'static str {
        match self {
            Attack::GaussianBlur { .. } => "GB",
            Attack::AverageFilter { .. } => "AF",
            Attack::MedianFilter { .. } => "MF",
            Attack::Contrast { .. } => "CC",
            Attack::Brightness { .. } => "CB",
            Attack::Gamma { .. } => "GT",
            Attack::GaussianNoise { .. } => "GN",
            Attack::Logo { .. } => "LI",
            Attack::Resize { .. } => "RS",
            Attack::Crop { .. } => "CR",
            Attack::Rotate { .. } => "RT",
            Attack::Flip { .. } => "FL",
            Attack::FrameReplace { .. } => "FR",
            Attack::FrameDrop { .. } => "FD",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Attack::GaussianNoise { .. } | Attack::FrameReplace { .. } | Attack::FrameDrop { .. }
        )
    }

    /// Parameter as printed in reports and accepted by [`Attack::parse`].
    pub fn param_string(&self) -> String {
        match *self {
            Attack::GaussianBlur { window }
            | Attack::AverageFilter { window }
            | Attack::MedianFilter { window } => format!("{window}"),
            Attack::Contrast { change } | Attack::Brightness { change } => {
                format!("{:+}", (change * 100.0).round() as i64)
            }
            Attack::Gamma { gamma } => format!("{gamma}"),
            Attack::GaussianNoise { variance } => format!("{variance}"),
            Attack::Logo { size } => format!("{size}"),
            Attack::Resize { factor } => format!("1/{factor}"),
            Attack::Crop { fraction } => format!("{}%", (fraction * 100.0).round() as i64),
            Attack::Rotate { degrees } => format!("{degrees}"),
            Attack::Flip { axis: FlipAxis::Vertical } => "vertical".into(),
            Attack::Flip { axis: FlipAxis::Horizontal } => "horizontal".into(),
            Attack::FrameReplace { rate } | Attack::FrameDrop { rate } => {
                format!("{}%", (rate * 100.0).round() as i64)
            }
        }
    }

    /// Rejects parameters outside the supported sets.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Attack::GaussianBlur { window }
            | Attack::AverageFilter { window }
            | Attack::MedianFilter { window } => matches!(window, 9 | 15),
            Attack::Contrast { change } | Attack::Brightness { change } => approx_in(change, &[-0.3, 0.3]),
            Attack::Gamma { gamma } => approx_in(gamma, &[0.6, 1.4]),
            Attack::GaussianNoise { variance } => approx_in(variance, &[0.005, 0.01]),
            Attack::Logo { size } => matches!(size, 32 | 64),
            Attack::Resize { factor } => matches!(factor, 2 | 5),
            Attack::Crop { fraction } => approx_in(fraction, &[0.05, 0.10]),
            Attack::Rotate { degrees } => matches!(degrees, 45 | 90),
            Attack::Flip { .. } => true,
            Attack::FrameReplace { rate } | Attack::FrameDrop { rate } => approx_in(rate, &[0.05]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidAttack(format!("{} {}", self.family(), self.param_string())))
        }
    }

    /// Parses a family abbreviation (case-insensitive) and its parameter,
    /// e.g. `("gb", "9")`, `("cc", "-30")`, `("rs", "1/5")`, `("cr", "10%")`.
    pub fn parse(family: &str, param: &str) -> Result<Self> {
        let bad = || Error::InvalidAttack(format!("{family} {param}"));
        let num = |s: &str| -> Result<f64> { s.trim().trim_end_matches('%').parse::<f64>().map_err(|_| bad()) };
        let int = |s: &str| -> Result<usize> {
            let s = s.trim();
            let s = s.split_once(['x', '×']).map_or(s, |(a, _)| a);
            s.parse::<usize>().map_err(|_| bad())
        };
        let percent = |s: &str| -> Result<f64> {
            let v = num(s)?;
            Ok(if s.contains('%') || v.abs() >= 1.0 { v / 100.0 } else { v })
        };
        let attack = match family.to_ascii_lowercase().as_str() {
            "gb" => Attack::GaussianBlur { window: int(param)? },
            "af" => Attack::AverageFilter { window: int(param)? },
            "mf" => Attack::MedianFilter { window: int(param)? },
            "cc" => Attack::Contrast { change: percent(param)? },
            "cb" => Attack::Brightness { change: percent(param)? },
            "gt" => Attack::Gamma { gamma: num(param)? },
            "gn" => Attack::GaussianNoise { variance: num(param)? },
            "li" => Attack::Logo { size: int(param)? },
            "rs" => Attack::Resize {
                factor: int(param.trim().trim_start_matches("1/"))?,
            },
            "cr" => Attack::Crop { fraction: percent(param)? },
            "rt" => Attack::Rotate {
                degrees: int(param.trim().trim_end_matches('°'))? as u32,
            },
            "fl" => Attack::Flip {
                axis: match param.trim().to_ascii_lowercase().as_str() {
                    "vertical" | "v" => FlipAxis::Vertical,
                    "horizontal" | "h" => FlipAxis::Horizontal,
                    _ => return Err(bad()),
                },
            },
            "fr" => Attack::FrameReplace { rate: percent(param)? },
            "fd" => Attack::FrameDrop { rate: percent(param)? },
            _ => return Err(bad()),
        };
        attack.validate()?;
        Ok(attack)
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.family(), self.param_string())
    }
}

impl FromStr for Attack {
    type Err = Error;

    /// `"GB 9"`, `"rt 45"`, ...
    fn from_str(s: &str) -> Result<Self> {
        let (fam, param) = s
            .trim()
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::InvalidAttack(s.to_owned()))?;
        Attack::parse(fam, param)
    }
}

impl AttackSpec {
    pub fn new(attack: Attack, seed: Option<u64>) -> Self {
        AttackSpec { attack, seed }
    }

    pub fn label(&self) -> String {
        self.attack.to_string()
    }
}

/// The 26 attack instances used for robustness evaluation, in report order.
pub fn attack_catalog() -> Vec<AttackSpec> {
    attack_catalog_seeded(CATALOG_SEED)
}

pub fn attack_catalog_seeded(seed: u64) -> Vec<AttackSpec> {
    use Attack::*;
    let attacks = [
        GaussianBlur { window: 9 },
        GaussianBlur { window: 15 },
        AverageFilter { window: 9 },
        AverageFilter { window: 15 },
        MedianFilter { window: 9 },
        MedianFilter { window: 15 },
        Contrast { change: -0.3 },
        Contrast { change: 0.3 },
        Brightness { change: -0.3 },
        Brightness { change: 0.3 },
        Gamma { gamma: 0.6 },
        Gamma { gamma: 1.4 },
        GaussianNoise { variance: 0.005 },
        GaussianNoise { variance: 0.01 },
        Logo { size: 32 },
        Logo { size: 64 },
        Resize { factor: 2 },
        Resize { factor: 5 },
        Crop { fraction: 0.05 },
        Crop { fraction: 0.10 },
        Rotate { degrees: 45 },
        Rotate { degrees: 90 },
        Flip { axis: FlipAxis::Vertical },
        Flip { axis: FlipAxis::Horizontal },
        FrameReplace { rate: 0.05 },
        FrameDrop { rate: 0.05 },
    ];
    attacks
        .into_iter()
        .map(|a| AttackSpec::new(a, a.is_stochastic().then_some(seed)))
        .collect()
}

fn map_levels(frame: &Frame, f: impl Fn(f64) -> f64) -> Frame {
    let lut: Vec<u8> = (0..256).map(|v| clamp_u8(f(v as f64))).collect();
    let mut out = frame.clone();
    for v in out.data_mut() {
        *v = lut[*v as usize];
    }
    out
}

fn checkerboard_logo(frame: &Frame, size: usize) -> Frame {
    let cell = (size / 8).max(1);
    let mut out = frame.clone();
    let n = frame.channels().count();
    for y in 0..size.min(frame.height()) {
        for x in 0..size.min(frame.width()) {
            let v = if (x / cell + y / cell).is_multiple_of(2) { 255 } else { 0 };
            for c in 0..n {
                out.set(x, y, c, v);
            }
        }
    }
    out
}

fn crop_edges(frame: &Frame, fraction: f64) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let dx = (fraction * w as f64).round() as usize;
    let dy = (fraction * h as f64).round() as usize;
    let (nw, nh) = (w.saturating_sub(2 * dx).max(1), h.saturating_sub(2 * dy).max(1));
    let n = frame.channels().count();
    let mut data = Vec::with_capacity(nw * nh * n);
    for y in dy..dy + nh {
        for x in dx..dx + nw {
            for c in 0..n {
                data.push(frame.get(x, y, c));
            }
        }
    }
    Frame::from_raw(nw, nh, frame.channels(), data).expect("crop keeps a valid frame")
}

/// Bilinear rotation about the frame center, same canvas, black outside.
fn rotate_bilinear(p: &Plane, degrees: f64) -> Plane {
    let (w, h) = (p.width, p.height);
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            // inverse map: rotate the output position back by -theta
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = c * dx - s * dy + cx;
            let sy = s * dx + c * dy + cy;
            if sx < -0.5 || sy < -0.5 || sx > w as f64 - 0.5 || sy > h as f64 - 0.5 {
                continue;
            }
            let sx = sx.clamp(0.0, w as f64 - 1.0);
            let sy = sy.clamp(0.0, h as f64 - 1.0);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let top = p.get(x0, y0) * (1.0 - fx) + p.get(x1, y0) * fx;
            let bot = p.get(x0, y1) * (1.0 - fx) + p.get(x1, y1) * fx;
            out.set(x, y, top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn attack_frame(frame: &Frame, attack: &Attack, noise: Option<(&mut ChaCha8Rng, Normal<f64>)>) -> Frame {
    match *attack {
        Attack::GaussianBlur { window } => {
            let k = gaussian_kernel(window, 1.0);
            frame.map_planes(|p| convolve_separable(p, &k))
        }
        Attack::AverageFilter { window } => frame.map_planes(|p| box_filter(p, window)),
        Attack::MedianFilter { window } => {
            let planes: Vec<Plane> = frame
                .to_planes()
                .iter()
                .map(|p| {
                    let bytes: Vec<u8> = p.data.iter().map(|&v| v as u8).collect();
                    let med = median_filter_u8(&bytes, p.width, p.height, window);
                    Plane {
                        width: p.width,
                        height: p.height,
                        data: med.into_iter().map(f64::from).collect(),
                    }
                })
                .collect();
            Frame::from_planes(&planes).expect("same channel count")
        }
        Attack::Contrast { change } => map_levels(frame, |v| 128.0 + (v - 128.0) * (1.0 + change)),
        Attack::Brightness { change } => map_levels(frame, |v| v * (1.0 + change)),
        Attack::Gamma { gamma } => map_levels(frame, |v| (v / 255.0).powf(gamma) * 255.0),
        Attack::GaussianNoise { .. } => {
            let (rng, dist) = noise.expect("noise source for GN");
            let mut out = frame.clone();
            for v in out.data_mut() {
                let x = *v as f64 / 255.0 + dist.sample(rng);
                *v = clamp_u8(x.clamp(0.0, 1.0) * 255.0);
            }
            out
        }
        Attack::Logo { size } => checkerboard_logo(frame, size),
        Attack::Resize { factor } => {
            let nw = ((frame.width() as f64 / factor as f64).round() as usize).max(1);
            let nh = ((frame.height() as f64 / factor as f64).round() as usize).max(1);
            frame.map_planes(|p| resize_bilinear(p, nw, nh))
        }
        Attack::Crop { fraction } => crop_edges(frame, fraction),
        Attack::Rotate { degrees: 90 } => frame.rotate90(),
        Attack::Rotate { degrees } => frame.map_planes(|p| rotate_bilinear(p, degrees as f64)),
        Attack::Flip { axis: FlipAxis::Horizontal } => frame.flip_horizontal(),
        Attack::Flip { axis: FlipAxis::Vertical } => frame.flip_vertical(),
        Attack::FrameReplace { .. } | Attack::FrameDrop { .. } => frame.clone(),
    }
}

/// Number of frames touched by a temporal attack on an `l`-frame clip.
pub fn temporal_count(rate: f64, l: usize) -> usize {
    (rate * l as f64).round() as usize
}

/// Applies one attack to every frame (or to the frame list, for temporal attacks).
pub fn apply_attack(seq: &FrameSequence, spec: &AttackSpec) -> Result<FrameSequence> {
    let attack = &spec.attack;
    attack.validate()?;
    let seed = match (attack.is_stochastic(), spec.seed) {
        (true, None) => return Err(Error::MissingSeed(attack.family())),
        (_, s) => s.unwrap_or(0),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames: Vec<Frame> = match *attack {
        Attack::FrameReplace { rate } => {
            let l = seq.len();
            let mut frames = seq.frames().to_vec();
            if l > 1 {
                let k = temporal_count(rate, l).min(l - 1);
                let mut picked = sample(&mut rng, l - 1, k).into_vec();
                picked.sort_unstable();
                for i in picked {
                    // frame i+1 becomes a copy of its original predecessor
                    frames[i + 1] = seq.frames()[i].clone();
                }
            }
            frames
        }
        Attack::FrameDrop { rate } => {
            let l = seq.len();
            let k = temporal_count(rate, l).min(l - 1);
            let mut drop = vec![false; l];
            for i in sample(&mut rng, l, k) {
                drop[i] = true;
            }
            seq.frames()
                .iter()
                .zip(&drop)
                .filter(|(_, &d)| !d)
                .map(|(f, _)| f.clone())
                .collect()
        }
        Attack::GaussianNoise { variance } => {
            let dist = Normal::new(0.0, variance.sqrt()).expect("positive variance");
            seq.frames()
                .iter()
                .map(|f| attack_frame(f, attack, Some((&mut rng, dist))))
                .collect()
        }
        _ => seq.frames().iter().map(|f| attack_frame(f, attack, None)).collect(),
    };
    let mut out = FrameSequence::new(frames, seq.role())?;
    out.fps = seq.fps;
    Ok(out)
}
