//! In-memory frame and plane types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What a clip represents inside a 3D video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    TwoD,
    Depth,
    Synthesized,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::TwoD => "2d",
            Role::Depth => "depth",
            Role::Synthesized => "synthesized",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2d" => Ok(Role::TwoD),
            "depth" => Ok(Role::Depth),
            "synthesized" => Ok(Role::Synthesized),
            other => Err(Error::Config(format!("unknown clip role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

/// An 8-bit image, interleaved row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: Channels,
    data: Vec<u8>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn from_raw(width: usize, height: usize, channels: Channels, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty frame {width}x{height}")));
        }
        let expected = width * height * channels.count();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: Channels, value: u8) -> Self {
        Frame {
            width,
            height,
            channels,
            data: vec![value; width * height * channels.count()],
        }
    }

    pub fn from_fn_gray(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame {
            width,
            height,
            channels: Channels::Gray,
            data,
        }
    }

    pub fn from_fn_rgb(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Frame {
            width,
            height,
            channels: Channels::Rgb,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn is_gray(&self) -> bool {
        self.channels == Channels::Gray
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Sample at `(x, y)` on channel `c`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels.count() + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        let n = self.channels.count();
        self.data[(y * self.width + x) * n + c] = v;
    }

    /// Splits into one float plane per channel, values in 0..=255.
    pub fn to_planes(&self) -> Vec<Plane> {
        let n = self.channels.count();
        (0..n)
            .map(|c| Plane {
                width: self.width,
                height: self.height,
                data: self.data.iter().skip(c).step_by(n).map(|&v| v as f64).collect(),
            })
            .collect()
    }

    /// Inverse of [`Frame::to_planes`]; values are rounded and clamped to 0..=255.
    pub fn from_planes(planes: &[Plane]) -> Result<Self> {
        let channels = match planes.len() {
            1 => Channels::Gray,
            3 => Channels::Rgb,
            n => return Err(Error::Shape(format!("{n} planes cannot form a frame"))),
        };
        let (w, h) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(Error::Shape("planes differ in size".into()));
        }
        let mut data = Vec::with_capacity(w * h * planes.len());
        for i in 0..w * h {
            for p in planes {
                data.push(clamp_u8(p.data[i]));
            }
        }
        Frame::from_raw(w, h, channels, data)
    }

    /// Applies `f` to every plane and reassembles the frame.
    pub fn map_planes(&self, mut f: impl FnMut(&Plane) -> Plane) -> Self {
        let planes: Vec<Plane> = self.to_planes().iter().map(&mut f).collect();
        Frame::from_planes(&planes).expect("plane map preserves channel count")
    }

    pub fn flip_horizontal(&self) -> Self {
        let n = self.channels.count();
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = (y * self.width + (self.width - 1 - x)) * n;
                let dst = (y * self.width + x) * n;
                out.data[dst..dst + n].copy_from_slice(&self.data[src..src + n]);
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let row = self.width * self.channels.count();
        let mut out = self.clone();
        for y in 0..self.height {
            let src = (self.height - 1 - y) * row;
            out.data[y * row..(y + 1) * row].copy_from_slice(&self.data[src..src + row]);
        }
        out
    }

    /// Quarter turn counter-clockwise; output is `height x width`.
    pub fn rotate90(&self) -> Self {
        let n = self.channels.count();
        let (w, h) = (self.width, self.height);
        let mut data = vec![0u8; self.data.len()];
        // output (x', y') with width h, height w: (x', y') <- (w-1-y', x')
        for yo in 0..w {
            for xo in 0..h {
                let src = (xo * w + (w - 1 - yo)) * n;
                let dst = (yo * h + xo) * n;
                data[dst..dst + n].copy_from_slice(&self.data[src..src + n]);
            }
        }
        Frame {
            width: h,
            height: w,
            channels: self.channels,
            data,
        }
    }
}

#[inline]
pub(crate) fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// A single-channel float image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the plane (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

/// Ordered frames of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    role: Role,
    /// Frame rate as numerator/denominator; metadata only.
    pub fps: (u32, u32),
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, role: Role) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let (w, h) = (first.width(), first.height());
        for (index, f) in frames.iter().enumerate() {
            if f.width() != w || f.height() != h {
                return Err(Error::MixedDimensions {
                    index,
                    got_w: f.width(),
                    got_h: f.height(),
                    want_w: w,
                    want_h: h,
                });
            }
        }
        if role == Role::Depth && frames.iter().any(|f| !f.is_gray()) {
            return Err(Error::Shape("depth frames must be single-channel".into()));
        }
        Ok(FrameSequence {
            frames,
            role,
            fps: (25, 1),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn with_role(self, role: Role) -> Result<Self> {
        let fps = self.fps;
        let mut seq = FrameSequence::new(self.frames, role)?;
        seq.fps = fps;
        Ok(seq)
    }

    /// Applies `f` to every frame, keeping role and frame rate.
    pub fn map_frames(&self, f: impl FnMut(&Frame) -> Frame) -> Result<Self> {
        let mut seq = FrameSequence::new(self.frames.iter().map(f).collect(), self.role)?;
        seq.fps = self.fps;
        Ok(seq)
    }
}
