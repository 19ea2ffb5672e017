//! Invariant clip features built from a temporally informative representative
//! image (TIRI).
//!
//! Pipeline on a normalized `S x S x K` clip:
//!
//! * TIRI: weighted mean of frames `stride, 2*stride, .., K` (1-based), weights `a^k`.
//! * Deviation: for interior pixels, the maximal absolute difference between
//!   the frame pixel and the TIRI over its 8 spatial neighbours.
//! * Normalization: `atan(D / TIRI)`, with the limit convention at `TIRI = 0`.
//! * Ring centroids: TIRI-weighted mean of the normalized deviation over each
//!   of `N` concentric annuli `[n*r, (n+1)*r)` about the grid center, per frame.
//! * z-score over the resulting `N * K` values.
//!
//! Every step only depends on distances to the grid center and on 8-neighbour
//! sets, so the feature is exactly invariant to flips and quarter turns.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Role;
use crate::frameio::{NormalizedClip, CLIP_FRAMES, CLIP_SIZE};

pub const RING_WIDTH: f64 = 10.0;
pub const RING_COUNT: usize = 16;
pub const TIRI_STRIDE: usize = 5;
pub const TIRI_DECAY: f64 = 1.0;
pub const FEATURE_LEN: usize = RING_COUNT * CLIP_FRAMES;

const DEGENERATE_SIGMA: f64 = 1e-12;

/// Geometry and constants of the feature pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub size: usize,
    pub frames: usize,
    pub ring_width: f64,
    pub rings: usize,
    pub tiri_stride: usize,
    /// Base `a` of the TIRI weights `a^k`.
    pub decay: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            size: CLIP_SIZE,
            frames: CLIP_FRAMES,
            ring_width: RING_WIDTH,
            rings: RING_COUNT,
            tiri_stride: TIRI_STRIDE,
            decay: TIRI_DECAY,
        }
    }
}

impl FeatureParams {
    pub fn feature_len(&self) -> usize {
        self.rings * self.frames
    }

    fn center(&self) -> f64 {
        (self.size as f64 - 1.0) / 2.0
    }

    fn check_clip(&self, clip: &NormalizedClip) -> Result<()> {
        if clip.size() != self.size || clip.frames() != self.frames {
            return Err(Error::Shape(format!(
                "clip is {s}x{s}x{k}, feature geometry expects {gs}x{gs}x{gk}",
                s = clip.size(),
                k = clip.frames(),
                gs = self.size,
                gk = self.frames
            )));
        }
        if self.tiri_stride == 0 || self.tiri_stride > self.frames {
            return Err(Error::Config(format!("TIRI stride {}", self.tiri_stride)));
        }
        Ok(())
    }
}

/// Representative image of a clip, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiriImage {
    pub size: usize,
    pub pixels: Vec<f64>,
}

impl TiriImage {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.size + j]
    }
}

/// Per-frame deviation from the TIRI. Border rows and columns are invalid and
/// hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationStack {
    pub size: usize,
    pub frames: usize,
    pub values: Vec<f64>,
}

impl DeviationStack {
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.size + i) * self.size + j]
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && j >= 1 && i + 1 < self.size && j + 1 < self.size
    }
}

/// Deviations mapped through `atan(D / TIRI)`, values in `[0, pi/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDeviationStack {
    pub size: usize,
    pub frames: usize,
    pub values: Vec<f64>,
}

impl NormalizedDeviationStack {
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.size + i) * self.size + j]
    }
}

/// The z-scored feature; `values[k * rings + n]` is ring `n` of frame `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub role: Role,
    /// Set when the intermediate feature had (near) zero spread; values are then all zero.
    pub degenerate: bool,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, role: Role) -> Self {
        FeatureVector {
            values,
            role,
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn compute_tiri(clip: &NormalizedClip, params: &FeatureParams) -> Result<TiriImage> {
    params.check_clip(clip)?;
    let n = params.size * params.size;
    let mut acc = vec![0.0; n];
    let mut weight_sum = 0.0;
    for k in (params.tiri_stride..=params.frames).step_by(params.tiri_stride) {
        let w = params.decay.powi(k as i32);
        weight_sum += w;
        for (a, &v) in acc.iter_mut().zip(clip.frame(k - 1)) {
            *a += w * v;
        }
    }
    for a in acc.iter_mut() {
        *a = (*a / weight_sum).clamp(0.0, 1.0);
    }
    Ok(TiriImage {
        size: params.size,
        pixels: acc,
    })
}

pub fn tiri_deviation(clip: &NormalizedClip, tiri: &TiriImage) -> Result<DeviationStack> {
    let s = clip.size();
    if tiri.size != s {
        return Err(Error::Shape(format!("TIRI {} vs clip {s}", tiri.size)));
    }
    // |t - r| is maximized at an extreme of t, and rounded subtraction is
    // monotone, so the neighbourhood max/min give the exact answer.
    let mut nmax = vec![0.0; s * s];
    let mut nmin = vec![0.0; s * s];
    for i in 1..s - 1 {
        for j in 1..s - 1 {
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for di in [i - 1, i, i + 1] {
                for dj in [j - 1, j, j + 1] {
                    if di == i && dj == j {
                        continue;
                    }
                    let t = tiri.at(di, dj);
                    hi = hi.max(t);
                    lo = lo.min(t);
                }
            }
            nmax[i * s + j] = hi;
            nmin[i * s + j] = lo;
        }
    }
    let mut values = vec![0.0; s * s * clip.frames()];
    for k in 0..clip.frames() {
        let frame = clip.frame(k);
        let out = &mut values[k * s * s..(k + 1) * s * s];
        for i in 1..s - 1 {
            for j in 1..s - 1 {
                let p = i * s + j;
                let r = frame[p];
                out[p] = (nmax[p] - r).abs().max((r - nmin[p]).abs());
            }
        }
    }
    Ok(DeviationStack {
        size: s,
        frames: clip.frames(),
        values,
    })
}

/// `atan(d / t)` with `atan(0/0) = 0` and `atan(d/0) = pi/2` for `d > 0`.
#[inline]
pub fn normalized_angle(d: f64, t: f64) -> f64 {
    if t == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            FRAC_PI_2
        }
    } else {
        (d / t).atan()
    }
}

pub fn normalize_deviation(dev: &DeviationStack, tiri: &TiriImage) -> NormalizedDeviationStack {
    let plane = dev.size * dev.size;
    let values = dev
        .values
        .iter()
        .enumerate()
        .map(|(idx, &d)| normalized_angle(d, tiri.pixels[idx % plane]))
        .collect();
    NormalizedDeviationStack {
        size: dev.size,
        frames: dev.frames,
        values,
    }
}

/// Ring of 0-based pixel `(i, j)`, or `None` outside the outermost ring.
pub fn ring_index(i: usize, j: usize, params: &FeatureParams) -> Option<usize> {
    let c = params.center();
    let di = i as f64 - c;
    let dj = j as f64 - c;
    let dist = (di * di + dj * dj).sqrt();
    let n = (dist / params.ring_width).floor() as usize;
    (n < params.rings).then_some(n)
}

/// Interior pixels grouped by ring, in row-major order within each ring.
fn ring_members(params: &FeatureParams) -> Vec<Vec<usize>> {
    let s = params.size;
    let mut rings = vec![Vec::new(); params.rings];
    for i in 1..s - 1 {
        for j in 1..s - 1 {
            if let Some(n) = ring_index(i, j, params) {
                rings[n].push(i * s + j);
            }
        }
    }
    rings
}

/// TIRI-weighted centroid of the normalized deviation per ring and frame.
/// A ring with zero total weight yields 0.
pub fn ring_centroids(
    norm: &NormalizedDeviationStack,
    tiri: &TiriImage,
    params: &FeatureParams,
) -> Vec<f64> {
    let s = norm.size;
    let members = ring_members(params);
    let weight_sums: Vec<f64> = members
        .iter()
        .map(|m| m.iter().map(|&p| tiri.pixels[p]).sum())
        .collect();
    let mut f = Vec::with_capacity(params.rings * norm.frames);
    for k in 0..norm.frames {
        let frame = &norm.values[k * s * s..(k + 1) * s * s];
        for (ring, &wsum) in members.iter().zip(&weight_sums) {
            if wsum == 0.0 {
                f.push(0.0);
                continue;
            }
            let acc: f64 = ring.iter().map(|&p| tiri.pixels[p] * frame[p]).sum();
            f.push(acc / wsum);
        }
    }
    f
}

/// Standardizes by the sample mean and the `n - 1` standard deviation.
pub fn zscore(f: &[f64], role: Role) -> FeatureVector {
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if !(sigma >= DEGENERATE_SIGMA) {
        return FeatureVector {
            values: vec![0.0; f.len()],
            role,
            degenerate: true,
        };
    }
    FeatureVector::new(f.iter().map(|v| (v - mean) / sigma).collect(), role)
}

pub fn extract_feature(clip: &NormalizedClip) -> Result<FeatureVector> {
    extract_feature_with(clip, &FeatureParams::default())
}

pub fn extract_feature_with(clip: &NormalizedClip, params: &FeatureParams) -> Result<FeatureVector> {
    let tiri = compute_tiri(clip, params)?;
    let dev = tiri_deviation(clip, &tiri)?;
    let norm = normalize_deviation(&dev, &tiri);
    let f = ring_centroids(&norm, &tiri, params);
    let role = match clip.role() {
        Role::Depth => Role::Depth,
        _ => Role::TwoD,
    };
    Ok(zscore(&f, role))
}

/// Dumps values as raw little-endian `f64`, for cross-checking against other tools.
pub fn dump_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_params() -> FeatureParams {
        FeatureParams {
            size: 20,
            frames: 4,
            ring_width: 2.0,
            rings: 5,
            tiri_stride: 2,
            decay: 1.0,
        }
    }

    fn random_clip(params: &FeatureParams, seed: u64) -> NormalizedClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = params.size * params.size * params.frames;
        let v = (0..n).map(|_| rng.random::<f64>()).collect();
        NormalizedClip::from_volume(params.size, params.frames, v, Role::TwoD).unwrap()
    }

    fn constant_clip(params: &FeatureParams, f: impl Fn(usize) -> f64) -> NormalizedClip {
        let plane = params.size * params.size;
        let v = (0..plane * params.frames).map(|idx| f(idx / plane)).collect();
        NormalizedClip::from_volume(params.size, params.frames, v, Role::TwoD).unwrap()
    }

    #[test]
    fn tiri_of_constant_clip() {
        let p = FeatureParams::default();
        let clip = constant_clip(&p, |_| 0.5);
        let t = compute_tiri(&clip, &p).unwrap();
        assert!(t.pixels.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn tiri_of_ramp_clip() {
        // frame k (1-based) = k/100; mean of 0.05, 0.10, .., 1.00
        let p = FeatureParams::default();
        let clip = constant_clip(&p, |k| (k + 1) as f64 / 100.0);
        let t = compute_tiri(&clip, &p).unwrap();
        assert!(t.pixels.iter().all(|v| (v - 0.525).abs() < 1e-12));
    }

    #[test]
    fn tiri_decay_one_is_plain_average() {
        let p = small_params();
        let clip = random_clip(&p, 3);
        let t = compute_tiri(&clip, &p).unwrap();
        for idx in 0..p.size * p.size {
            let mean = (clip.frame(1)[idx] + clip.frame(3)[idx]) / 2.0;
            assert!((t.pixels[idx] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn deviation_of_self_identical_constant_clip_is_zero() {
        let p = small_params();
        let clip = constant_clip(&p, |_| 0.3);
        let t = compute_tiri(&clip, &p).unwrap();
        let d = tiri_deviation(&clip, &t).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deviation_single_bright_pixel() {
        let p = small_params();
        let s = p.size;
        let mut v = vec![0.0; s * s * p.frames];
        v[(2 * s + 7) * s + 9] = 1.0; // frame 2 (0-based), row 7, col 9
        let clip = NormalizedClip::from_volume(s, p.frames, v, Role::TwoD).unwrap();
        let tiri = TiriImage {
            size: s,
            pixels: vec![0.0; s * s],
        };
        let d = tiri_deviation(&clip, &tiri).unwrap();
        assert_eq!(d.at(7, 9, 2), 1.0);
        assert_eq!(d.at(7, 10, 2), 0.0);
    }

    #[test]
    fn deviation_matches_brute_force_on_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = 6;
        let v: Vec<f64> = (0..s * s * 2).map(|_| rng.random()).collect();
        let clip = NormalizedClip::from_volume(s, 2, v, Role::TwoD).unwrap();
        let tiri = TiriImage {
            size: s,
            pixels: (0..s * s).map(|_| rng.random()).collect(),
        };
        let d = tiri_deviation(&clip, &tiri).unwrap();
        for k in 0..2 {
            for i in 0..s {
                for j in 0..s {
                    if i == 0 || j == 0 || i == s - 1 || j == s - 1 {
                        assert_eq!(d.at(i, j, k), 0.0);
                        continue;
                    }
                    let mut best = 0.0f64;
                    for ni in i - 1..=i + 1 {
                        for nj in j - 1..=j + 1 {
                            if (ni, nj) != (i, j) {
                                best = best.max((tiri.at(ni, nj) - clip.at(i, j, k)).abs());
                            }
                        }
                    }
                    assert_eq!(d.at(i, j, k), best);
                }
            }
        }
    }

    #[test]
    fn normalized_angle_cases() {
        assert_eq!(normalized_angle(0.0, 0.7), 0.0);
        assert_eq!(normalized_angle(0.0, 0.0), 0.0);
        assert_eq!(normalized_angle(0.2, 0.0), FRAC_PI_2);
        assert!((normalized_angle(0.4, 0.4) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((normalized_angle(0.3, 0.6) - 0.5f64.atan()).abs() < 1e-15);
        assert!((normalized_angle(0.3, 0.6) - 0.46365).abs() < 1e-5);
    }

    #[test]
    fn ring_index_examples() {
        let p = FeatureParams::default();
        // 1-based (161,161), (161,320), (1,1)
        assert_eq!(ring_index(160, 160, &p), Some(0));
        assert_eq!(ring_index(160, 319, &p), Some(15));
        assert_eq!(ring_index(0, 0, &p), None);
    }

    #[test]
    fn ring_centroid_two_pixel_example() {
        // a 4x4 grid has interior pixels (1,1),(1,2),(2,1),(2,2), all at
        // distance sqrt(0.5) from the center; a huge ring width puts them in ring 0
        let p = FeatureParams {
            size: 4,
            frames: 1,
            ring_width: 100.0,
            rings: 1,
            tiri_stride: 1,
            decay: 1.0,
        };
        let mut tiri = TiriImage {
            size: 4,
            pixels: vec![0.0; 16],
        };
        tiri.pixels[4 + 1] = 0.2;
        tiri.pixels[4 + 2] = 0.6;
        let mut values = vec![0.0; 16];
        values[4 + 1] = 1.0;
        let norm = NormalizedDeviationStack {
            size: 4,
            frames: 1,
            values,
        };
        let f = ring_centroids(&norm, &tiri, &p);
        assert!((f[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ring_centroid_of_constant_is_constant_and_scale_free() {
        let p = small_params();
        let clip = random_clip(&p, 5);
        let tiri = compute_tiri(&clip, &p).unwrap();
        let norm = NormalizedDeviationStack {
            size: p.size,
            frames: p.frames,
            values: vec![0.7; p.size * p.size * p.frames],
        };
        let f = ring_centroids(&norm, &tiri, &p);
        assert_eq!(f.len(), p.rings * p.frames);
        assert!(f.iter().all(|v| (v - 0.7).abs() < 1e-12));

        let dev = tiri_deviation(&clip, &tiri).unwrap();
        let norm = normalize_deviation(&dev, &tiri);
        let base = ring_centroids(&norm, &tiri, &p);
        let scaled = TiriImage {
            size: p.size,
            pixels: tiri.pixels.iter().map(|v| v * 3.7).collect(),
        };
        let again = ring_centroids(&norm, &scaled, &p);
        for (a, b) in base.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_ring_yields_zero() {
        let p = small_params();
        let tiri = TiriImage {
            size: p.size,
            pixels: vec![0.0; p.size * p.size],
        };
        let norm = NormalizedDeviationStack {
            size: p.size,
            frames: p.frames,
            values: vec![1.0; p.size * p.size * p.frames],
        };
        assert!(ring_centroids(&norm, &tiri, &p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zscore_properties() {
        let f: Vec<f64> = (0..1600).map(|i| ((i * 7919) % 1601) as f64).collect();
        let z = zscore(&f, Role::TwoD);
        let mean = z.values.iter().sum::<f64>() / 1600.0;
        let sd = (z.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1599.0).sqrt();
        assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        assert!(!z.degenerate);

        let affine: Vec<f64> = f.iter().map(|v| 2.5 * v - 4.0).collect();
        let za = zscore(&affine, Role::TwoD);
        for (a, b) in z.values.iter().zip(&za.values) {
            assert!((a - b).abs() < 1e-12);
        }

        let c = zscore(&[0.4; 1600], Role::Depth);
        assert!(c.degenerate && c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn values_stay_in_range() {
        let p = small_params();
        let clip = random_clip(&p, 9);
        let tiri = compute_tiri(&clip, &p).unwrap();
        let norm = normalize_deviation(&tiri_deviation(&clip, &tiri).unwrap(), &tiri);
        assert!(norm.values.iter().all(|v| (0.0..=FRAC_PI_2).contains(v)));
        let f = ring_centroids(&norm, &tiri, &p);
        assert!(f.iter().all(|v| (0.0..=FRAC_PI_2).contains(v)));
    }

    #[test]
    fn full_geometry_length_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = (0..320 * 320 * 100).map(|_| rng.random::<f64>()).collect();
        let clip = NormalizedClip::from_volume(320, 100, v, Role::TwoD).unwrap();
        let a = extract_feature(&clip).unwrap();
        assert_eq!(a.len(), FEATURE_LEN);
        assert_eq!(FEATURE_LEN, 1600);
        let b = extract_feature(&clip).unwrap();
        assert_eq!(a, b);
        let flipped = clip.remap(|i, j| (i, 319 - j));
        let c = extract_feature(&flipped).unwrap();
        for (x, y) in a.values.iter().zip(&c.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_wrong_geometry() {
        let clip = random_clip(&small_params(), 1);
        assert!(matches!(extract_feature(&clip), Err(Error::Shape(_))));
    }

    fn quarter_turns(clip: &NormalizedClip) -> Vec<NormalizedClip> {
        let m = clip.size() - 1;
        vec![
            clip.remap(|i, j| (i, m - j)),
            clip.remap(|i, j| (m - i, j)),
            clip.remap(|i, j| (j, m - i)),
            clip.remap(|i, j| (m - i, m - j)),
            clip.remap(|i, j| (m - j, i)),
            clip.remap(|i, j| (j, i)),
        ]
    }

    proptest! {
        #[test]
        fn invariant_under_grid_symmetries(seed in any::<u64>(), size in 8usize..24) {
            let p = FeatureParams { size, ..small_params() };
            let clip = random_clip(&p, seed);
            let base = extract_feature_with(&clip, &p).unwrap();
            for t in quarter_turns(&clip) {
                let f = extract_feature_with(&t, &p).unwrap();
                for (a, b) in f.values.iter().zip(&base.values) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn zscore_ignores_positive_affine_maps(
            f in prop::collection::vec(-5.0f64..5.0, 3..60),
            a in 0.01f64..100.0,
            b in -10.0f64..10.0,
        ) {
            let z = zscore(&f, Role::TwoD);
            prop_assume!(!z.degenerate);
            let g: Vec<f64> = f.iter().map(|v| a * v + b).collect();
            let zg = zscore(&g, Role::TwoD);
            for (x, y) in z.values.iter().zip(&zg.values) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn independent_noise_clips_are_far_apart() {
        // full temporal structure (100 frames, stride 5) on a smaller grid
        let p = FeatureParams {
            size: 64,
            ring_width: 2.0,
            ..FeatureParams::default()
        };
        for pair in 0..50 {
            let a = extract_feature_with(&random_clip(&p, 2 * pair), &p).unwrap();
            let b = extract_feature_with(&random_clip(&p, 2 * pair + 1), &p).unwrap();
            let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
            assert!(d > 0.5, "pair {pair}: distance {d}");
        }
    }
}
