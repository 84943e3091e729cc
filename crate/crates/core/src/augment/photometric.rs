//! Colour, blur and noise transforms. All quantize with round-half-up.

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::seeding::keyed_rng;

fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Scales HSV saturation by `1 + delta` (clamped to [0, 1]) keeping hue and
/// value. With `V = max` and `S = (V - min) / V`, each channel moves to
/// `V - (V - c) * S'/S`, which leaves the hue angle unchanged.
pub fn adjust_saturation(img: &RgbImage, delta: f64) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        let [r, g, b] = px.0;
        let v = r.max(g).max(b) as f64;
        let m = r.min(g).min(b) as f64;
        if v == m {
            continue;
        }
        let s = (v - m) / v;
        let s_new = (s * (1.0 + delta)).clamp(0.0, 1.0);
        let k = s_new / s;
        px.0 = [r, g, b].map(|c| quantize(v - (v - c as f64) * k));
    }
    out
}

/// `v -> clamp(round(v * (1 + delta)))` on every channel.
pub fn adjust_exposure(img: &RgbImage, delta: f64) -> RgbImage {
    let mut out = img.clone();
    let gain = 1.0 + delta;
    for px in out.pixels_mut() {
        px.0 = px.0.map(|c| quantize(c as f64 * gain));
    }
    out
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders. The intermediate pass
/// stays in floating point; only the final value is quantized.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let idx = |x: i64, y: i64| (y * w + x) as usize;

    let mut horiz = vec![[0.0f64; 3]; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, weight) in kernel.iter().enumerate() {
                let sx = (x + k as i64 - radius).clamp(0, w - 1);
                let p = img.get_pixel(sx as u32, y as u32).0;
                for c in 0..3 {
                    acc[c] += weight * p[c] as f64;
                }
            }
            horiz[idx(x, y)] = acc;
        }
    }

    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as i64, y as i64);
        let mut acc = [0.0; 3];
        for (k, weight) in kernel.iter().enumerate() {
            let sy = (y + k as i64 - radius).clamp(0, h - 1);
            let p = horiz[idx(x, sy)];
            for c in 0..3 {
                acc[c] += weight * p[c];
            }
        }
        Rgb(acc.map(quantize))
    })
}

/// Replaces exactly `floor(frac * W * H)` distinct pixels with uniformly
/// random colours that differ from the original pixel.
pub fn pixel_noise(img: &RgbImage, frac: f64, seed: u64) -> RgbImage {
    let mut out = img.clone();
    let total = img.width() as usize * img.height() as usize;
    let count = ((frac.clamp(0.0, 1.0) * total as f64).floor() as usize).min(total);
    if count == 0 {
        return out;
    }
    let mut rng = keyed_rng(seed, &[b"pixel-noise"]);
    let positions = rand::seq::index::sample(&mut rng, total, count);
    for pos in positions.iter() {
        let (x, y) = ((pos % img.width() as usize) as u32, (pos / img.width() as usize) as u32);
        let original = img.get_pixel(x, y).0;
        let replacement = loop {
            let candidate: [u8; 3] = rng.random();
            if candidate != original {
                break candidate;
            }
        };
        out.put_pixel(x, y, Rgb(replacement));
    }
    out
}
