//! Geometric transforms on pixels and boxes.
//!
//! Boxes span the continuous interval `[x, x + w]`; a transformed box is the
//! integer hull of its four mapped corners, clipped to the new canvas.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::corpus::BoundingBox;

/// Values this close to an integer are treated as that integer before
/// flooring or ceiling, so `50 * tan(45°)` counts as 50.
const SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Cw,
    Ccw,
}

/// Horizontal mirrors left/right, vertical mirrors top/bottom.
pub fn flip(img: &RgbImage, axis: Axis) -> RgbImage {
    match axis {
        Axis::Horizontal => image::imageops::flip_horizontal(img),
        Axis::Vertical => image::imageops::flip_vertical(img),
    }
}

pub fn flip_box(b: &BoundingBox, axis: Axis, width: u32, height: u32) -> BoundingBox {
    let mut out = b.clone();
    match axis {
        Axis::Horizontal => out.x = width - b.x - b.w,
        Axis::Vertical => out.y = height - b.y - b.h,
    }
    out
}

pub fn rotate90(img: &RgbImage, turn: Turn) -> RgbImage {
    match turn {
        Turn::Cw => image::imageops::rotate90(img),
        Turn::Ccw => image::imageops::rotate270(img),
    }
}

/// Box on a `width` x `height` canvas after a quarter turn; the canvas
/// becomes `height` x `width`.
pub fn rotate90_box(b: &BoundingBox, turn: Turn, width: u32, height: u32) -> BoundingBox {
    let (x, y) = match turn {
        Turn::Cw => (height - b.y - b.h, b.x),
        Turn::Ccw => (b.y, width - b.x - b.w),
    };
    BoundingBox::new(x, y, b.h, b.w, b.label.clone())
}

/// An affine map `p -> A p + t` between continuous pixel coordinates.
#[derive(Clone, Copy, Debug)]
struct Affine {
    a: [[f64; 2]; 2],
    t: [f64; 2],
}

impl Affine {
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a[0][0] * x + self.a[0][1] * y + self.t[0],
            self.a[1][0] * x + self.a[1][1] * y + self.t[1],
        )
    }

    fn inverse(&self) -> Affine {
        let [[a, b], [c, d]] = self.a;
        let det = a * d - b * c;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let t = [
            -(inv[0][0] * self.t[0] + inv[0][1] * self.t[1]),
            -(inv[1][0] * self.t[0] + inv[1][1] * self.t[1]),
        ];
        Affine { a: inv, t }
    }
}

fn canvas_dim(v: f64) -> u32 {
    ((v - SNAP).ceil() as u32).max(1)
}

/// Canvas that holds a `width` x `height` image rotated by `angle_deg`.
pub fn rotated_canvas(width: u32, height: u32, angle_deg: f64) -> (u32, u32) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (w, h) = (width as f64, height as f64);
    (canvas_dim(w * c.abs() + h * s.abs()), canvas_dim(w * s.abs() + h * c.abs()))
}

/// Rotation about the image centre, clockwise on screen for positive angles
/// (y grows downward), re-centred on the expanded canvas.
fn rotation(width: u32, height: u32, angle_deg: f64) -> (Affine, u32, u32) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (nw, nh) = rotated_canvas(width, height, angle_deg);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let (ncx, ncy) = (nw as f64 / 2.0, nh as f64 / 2.0);
    let a = [[c, -s], [s, c]];
    let t = [ncx - (c * cx - s * cy), ncy - (s * cx + c * cy)];
    (Affine { a, t }, nw, nh)
}

fn tan_deg(angle_deg: f64) -> f64 {
    angle_deg.to_radians().tan()
}

/// Shear along `axis`: horizontal maps `(x, y) -> (x + y tan θ, y)`, shifted
/// so the canvas starts at zero.
fn shearing(width: u32, height: u32, angle_deg: f64, axis: Axis) -> (Affine, u32, u32) {
    let t = tan_deg(angle_deg);
    let (w, h) = (width as f64, height as f64);
    match axis {
        Axis::Horizontal => {
            let off = if t < 0.0 { h * -t } else { 0.0 };
            let a = Affine { a: [[1.0, t], [0.0, 1.0]], t: [off, 0.0] };
            (a, canvas_dim(w + h * t.abs()), height)
        }
        Axis::Vertical => {
            let off = if t < 0.0 { w * -t } else { 0.0 };
            let a = Affine { a: [[1.0, 0.0], [t, 1.0]], t: [0.0, off] };
            (a, width, canvas_dim(h + w * t.abs()))
        }
    }
}

fn warp(img: &RgbImage, map: &Affine, nw: u32, nh: u32, fill: [u8; 3]) -> RgbImage {
    let inv = map.inverse();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut out = RgbImage::from_pixel(nw, nh, Rgb(fill));
    for (x, y, px) in out.enumerate_pixels_mut() {
        let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
        if sx < 0.0 || sy < 0.0 || sx > w || sy > h {
            continue;
        }
        *px = bilinear(img, sx - 0.5, sy - 0.5);
    }
    out
}

/// Sample at continuous pixel-index coordinates, clamping to the edge.
fn bilinear(img: &RgbImage, u: f64, v: f64) -> Rgb<u8> {
    let (maxx, maxy) = (img.width() as i64 - 1, img.height() as i64 - 1);
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let at = |x: i64, y: i64| img.get_pixel(x.clamp(0, maxx) as u32, y.clamp(0, maxy) as u32).0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let (p00, p10, p01, p11) = (at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        out[c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

fn hull_box(b: &BoundingBox, map: &Affine, nw: u32, nh: u32) -> Option<BoundingBox> {
    let (x0, y0) = (b.x as f64, b.y as f64);
    let (x1, y1) = (b.right() as f64, b.bottom() as f64);
    let corners = [map.apply(x0, y0), map.apply(x1, y0), map.apply(x0, y1), map.apply(x1, y1)];
    let min_x = corners.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = corners.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = corners.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = corners.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let left = (min_x + SNAP).floor().clamp(0.0, nw as f64) as u32;
    let right = (max_x - SNAP).ceil().clamp(0.0, nw as f64) as u32;
    let top = (min_y + SNAP).floor().clamp(0.0, nh as f64) as u32;
    let bottom = (max_y - SNAP).ceil().clamp(0.0, nh as f64) as u32;
    if right <= left || bottom <= top {
        return None;
    }
    Some(BoundingBox::new(left, top, right - left, bottom - top, b.label.clone()))
}

/// Rotation by `angle_deg` onto an expanded canvas; uncovered pixels get `fill`.
pub fn rotate(img: &RgbImage, angle_deg: f64, fill: [u8; 3]) -> RgbImage {
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (map, nw, nh) = rotation(img.width(), img.height(), angle_deg);
    warp(img, &map, nw, nh, fill)
}

/// `None` when the clipped hull has no area.
pub fn rotate_box(b: &BoundingBox, angle_deg: f64, width: u32, height: u32) -> Option<BoundingBox> {
    if angle_deg == 0.0 {
        return Some(b.clone());
    }
    let (map, nw, nh) = rotation(width, height, angle_deg);
    hull_box(b, &map, nw, nh)
}

pub fn shear(img: &RgbImage, angle_deg: f64, axis: Axis, fill: [u8; 3]) -> RgbImage {
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (map, nw, nh) = shearing(img.width(), img.height(), angle_deg, axis);
    warp(img, &map, nw, nh, fill)
}

pub fn shear_box(b: &BoundingBox, angle_deg: f64, axis: Axis, width: u32, height: u32) -> Option<BoundingBox> {
    if angle_deg == 0.0 {
        return Some(b.clone());
    }
    let (map, nw, nh) = shearing(width, height, angle_deg, axis);
    hull_box(b, &map, nw, nh)
}

pub fn sheared_canvas(width: u32, height: u32, angle_deg: f64, axis: Axis) -> (u32, u32) {
    if angle_deg == 0.0 {
        return (width, height);
    }
    let (_, nw, nh) = shearing(width, height, angle_deg, axis);
    (nw, nh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h, "s")
    }

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x ^ y) % 256) as u8]))
    }

    #[test]
    fn flip_examples() {
        assert_eq!(flip_box(&b(10, 5, 20, 10), Axis::Horizontal, 100, 50), b(70, 5, 20, 10));
        assert_eq!(flip_box(&b(10, 5, 20, 10), Axis::Vertical, 100, 50), b(10, 35, 20, 10));
        let img = gradient(9, 5);
        assert_eq!(flip(&flip(&img, Axis::Vertical), Axis::Vertical), img);
    }

    #[test]
    fn rotate90_example() {
        assert_eq!(rotate90_box(&b(10, 5, 20, 10), Turn::Cw, 100, 50), b(35, 10, 10, 20));
        let img = gradient(7, 3);
        let cw = rotate90(&img, Turn::Cw);
        assert_eq!(cw.dimensions(), (3, 7));
        assert_eq!(rotate90(&cw, Turn::Ccw), img);
    }

    #[test]
    fn rotate90_box_matches_pixels() {
        // A box painted white must land where rotate90_box says.
        let mut img = RgbImage::new(11, 6);
        let bx = b(2, 1, 4, 3);
        for y in bx.y..bx.y + bx.h {
            for x in bx.x..bx.x + bx.w {
                img.put_pixel(x, y, Rgb([255, 255, 255]));
            }
        }
        for turn in [Turn::Cw, Turn::Ccw] {
            let r = rotate90(&img, turn);
            let rb = rotate90_box(&bx, turn, 11, 6);
            let painted: Vec<(u32, u32)> =
                r.enumerate_pixels().filter(|p| p.2 .0[0] == 255).map(|p| (p.0, p.1)).collect();
            assert_eq!(painted.len() as u64, rb.area());
            assert!(painted.iter().all(|&(x, y)| x >= rb.x && x < rb.x + rb.w && y >= rb.y && y < rb.y + rb.h));
        }
    }

    #[test]
    fn rotation_canvas() {
        assert_eq!(rotated_canvas(100, 100, 45.0), (142, 142));
        assert_eq!(rotated_canvas(100, 50, 0.0), (100, 50));
        assert_eq!(rotated_canvas(100, 50, -45.0), (107, 107));
        let img = gradient(100, 100);
        assert_eq!(rotate(&img, 45.0, [0, 0, 0]).dimensions(), (142, 142));
        assert_eq!(rotate(&img, 0.0, [0, 0, 0]), img);
    }

    #[test]
    fn rotated_box_hulls_corners() {
        // centred 20x20 box in a 100x100 image: hull side 20*sqrt(2) = 28.28
        let rb = rotate_box(&b(40, 40, 20, 20), 45.0, 100, 100).unwrap();
        assert!(rb.area() >= 400);
        assert!(rb.w == 29 || rb.w == 30, "{rb:?}");
        assert!(rb.fits(142, 142));
    }

    #[test]
    fn shear_widens_by_height() {
        assert_eq!(sheared_canvas(80, 50, 45.0, Axis::Horizontal), (130, 50));
        assert_eq!(sheared_canvas(80, 50, -45.0, Axis::Horizontal), (130, 50));
        assert_eq!(sheared_canvas(80, 50, 45.0, Axis::Vertical), (80, 130));
        let img = gradient(80, 50);
        assert_eq!(shear(&img, 45.0, Axis::Horizontal, [0, 0, 0]).dimensions(), (130, 50));
        assert_eq!(shear(&img, 0.0, Axis::Horizontal, [0, 0, 0]), img);
    }

    #[test]
    fn sheared_box_grows_by_h_tan() {
        let sb = shear_box(&b(10, 5, 20, 10), 45.0, Axis::Horizontal, 80, 50).unwrap();
        assert_eq!(sb, b(15, 5, 30, 10));
        let sb = shear_box(&b(10, 5, 20, 10), -45.0, Axis::Horizontal, 80, 50).unwrap();
        assert_eq!(sb.w, 30);
        assert_eq!(sb.x, 10 + 50 - 15);
    }
}
