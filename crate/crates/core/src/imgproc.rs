//! Small image-processing kernels shared by normalization and the attack simulator.
//! Everything here works on [`Plane`]s in `f64` and is deterministic.

use crate::frame::Plane;

/// Bilinear resize with pixel-center alignment and replicate border.
///
/// Source coordinate for output column `x` is `(x + 0.5) * sw / dw - 0.5`,
/// which is mirror-symmetric, so the resize commutes with flips and
/// transposes. Same-size resizing is the identity.
pub fn resize_bilinear(src: &Plane, dw: usize, dh: usize) -> Plane {
    let xs = axis_taps(src.width, dw);
    let ys = axis_taps(src.height, dh);
    let mut out = Plane::new(dw, dh);
    for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
        let r0 = &src.data[y0 * src.width..(y0 + 1) * src.width];
        let r1 = &src.data[y1 * src.width..(y1 + 1) * src.width];
        let row = &mut out.data[y * dw..(y + 1) * dw];
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
            let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
            row[x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|x| {
            let s = ((x as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Normalized 1-D Gaussian taps of length `window` with the given variance.
pub fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as isize;
    let raw: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable convolution with a symmetric odd-length kernel, replicate border.
pub fn convolve_separable(src: &Plane, kernel: &[f64]) -> Plane {
    let half = (kernel.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let mut tmp = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * src.get_clamped(x as isize + t as isize - half, y as isize);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * tmp.get_clamped(x as isize, y as isize + t as isize - half);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Box (mean) filter over a `window x window` neighbourhood, replicate border.
pub fn box_filter(src: &Plane, window: usize) -> Plane {
    convolve_separable(src, &vec![1.0 / window as f64; window])
}

/// Median over a `window x window` neighbourhood of an 8-bit plane, replicate
/// border. Uses a sliding 256-bin histogram per row.
pub fn median_filter_u8(src: &[u8], w: usize, h: usize, window: usize) -> Vec<u8> {
    let half = (window / 2) as isize;
    let at = |x: isize, y: isize| -> u8 {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        src[y * w + x]
    };
    let target = (window * window) / 2;
    let mut out = vec![0u8; w * h];
    for y in 0..h as isize {
        let mut hist = [0u32; 256];
        for dy in -half..=half {
            for dx in -half..=half {
                hist[at(dx, y + dy) as usize] += 1;
            }
        }
        for x in 0..w as isize {
            if x > 0 {
                for dy in -half..=half {
                    hist[at(x - 1 - half, y + dy) as usize] -= 1;
                    hist[at(x + half, y + dy) as usize] += 1;
                }
            }
            let mut seen = 0usize;
            let mut v = 0usize;
            loop {
                seen += hist[v] as usize;
                if seen > target {
                    break;
                }
                v += 1;
            }
            out[y as usize * w + x as usize] = v as u8;
        }
    }
    out
}
