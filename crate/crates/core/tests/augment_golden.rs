use image::{Rgb, RgbImage};
use scorpid_core::augment::{
    adjust_exposure, adjust_saturation, augment_corpus, flip, flip_box, gaussian_blur, gaussian_kernel, pixel_noise,
    rotate, rotate90, rotate90_box, rotate_box, rotated_canvas, shear, shear_box, sheared_canvas, AugmentSpec, Axis,
    Transform, TransformRecord, Turn,
};
use scorpid_core::corpus::{split_corpus, AnnotatedImage, BoundingBox, Split, SplitOptions, SplitRatios};
use scorpid_core::synth::{classification_fixture, render, DetectionFixture, SyntheticSource};
use sha2::{Digest, Sha256};

fn digest(img: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn golden_source() -> (AnnotatedImage, RgbImage) {
    let rec = AnnotatedImage::new("golden", "golden.png", 40, 30)
        .with_boxes(vec![BoundingBox::new(6, 4, 12, 9, "Tityus"), BoundingBox::new(22, 15, 10, 8, "Bothriurus")]);
    let img = render(&rec, 7);
    (rec, img)
}

// Pinned outputs: any change to sampling, interpolation or rounding shows up here.
const GOLDEN: &[(&str, &str)] = &[
    ("source", "a6c0462770dbf4ace20b735e9718b28cf46257e6785d02ab94f5ef393b9d5c01"),
    ("flip_h", "d7768f2b6308ef4208500f86df3b2b9d6ace5396f07fbdaff3af87f3334dc70a"),
    ("flip_v", "64f94e670f55accf3585333c9e2301408f1199905b7c89c2974188f07f68f539"),
    ("rot90_cw", "1bbde12626996d9e5de52a7a4e6fedacf6abede26567f3e3b07e009198aaa265"),
    ("rot90_ccw", "93c9fd694e03c30235539962532df9f28f7cfddbd0cc0bd3f99d272a8791b74c"),
    ("rotate_30", "510418ede2ca5798f2d958276dc122de371f8cd8b1a250ca5c5bae751f2ab8ca"),
    ("rotate_-45", "a535f67f6ae680c388c4c245f9509c6e34fb4a128f780fa0d85c28d64191baf2"),
    ("shear_h_20", "793ee2990431bb97a5a4a340b1f2d288dbbc842b5b5bd6bba6f9b1bc98dee69f"),
    ("shear_v_-45", "256f13bfda07190d26b8189d13f3d645413a94e4391d17b73e1219873859f0b5"),
    ("saturation_+0.48", "f36a8a8e12fa1d91d924372b611d39ad75fd2ab9b9381253a8b1470e07714f83"),
    ("saturation_-0.3", "6f95fc07c99e9fff41aa6d94b45e44ef5f1f9000a809d4446087f5529e0cbaa7"),
    ("exposure_+0.25", "7c6c5e41a2c9935bebf36ac589d7c9a280cd2f65ebcce84feae294dc45626588"),
    ("exposure_-0.25", "56be9261c5349625df45be86cc7dc4adbceae5d897acc4be67a81a63d650a28e"),
    ("blur_1.75", "831dc7426431aec76ed2bed41409470b27468bf71f5751985529470dcbc73b86"),
    ("noise_0.05", "23f337138398e7bb887a421a87c62431bec25245965ac55d2817f8a52e8f7459"),
];

fn golden_outputs() -> Vec<(&'static str, RgbImage)> {
    let (_, img) = golden_source();
    let black = [0, 0, 0];
    vec![
        ("source", img.clone()),
        ("flip_h", flip(&img, Axis::Horizontal)),
        ("flip_v", flip(&img, Axis::Vertical)),
        ("rot90_cw", rotate90(&img, Turn::Cw)),
        ("rot90_ccw", rotate90(&img, Turn::Ccw)),
        ("rotate_30", rotate(&img, 30.0, black)),
        ("rotate_-45", rotate(&img, -45.0, black)),
        ("shear_h_20", shear(&img, 20.0, Axis::Horizontal, black)),
        ("shear_v_-45", shear(&img, -45.0, Axis::Vertical, black)),
        ("saturation_+0.48", adjust_saturation(&img, 0.48)),
        ("saturation_-0.3", adjust_saturation(&img, -0.3)),
        ("exposure_+0.25", adjust_exposure(&img, 0.25)),
        ("exposure_-0.25", adjust_exposure(&img, -0.25)),
        ("blur_1.75", gaussian_blur(&img, 1.75)),
        ("noise_0.05", pixel_noise(&img, 0.05, 11)),
    ]
}

#[test]
fn golden_digests() {
    let actual: Vec<(&str, String)> = golden_outputs().iter().map(|(k, img)| (*k, digest(img))).collect();
    let mismatches: Vec<String> = actual
        .iter()
        .zip(GOLDEN)
        .filter(|((_, a), (_, g))| a != g)
        .map(|((k, a), _)| format!("    (\"{k}\", \"{a}\"),"))
        .collect();
    assert!(mismatches.is_empty(), "golden digests differ:\n{}", mismatches.join("\n"));
}

#[test]
fn flip_examples() {
    let b = BoundingBox::new(10, 5, 20, 10, "Tityus");
    let h = flip_box(&b, Axis::Horizontal, 100, 50);
    assert_eq!((h.x, h.y, h.w, h.h), (70, 5, 20, 10));
    let v = flip_box(&b, Axis::Vertical, 100, 50);
    assert_eq!((v.x, v.y, v.w, v.h), (10, 35, 20, 10));
}

#[test]
fn rotate90_example() {
    let b = BoundingBox::new(10, 5, 20, 10, "Tityus");
    let r = rotate90_box(&b, Turn::Cw, 100, 50);
    assert_eq!((r.x, r.y, r.w, r.h), (35, 10, 10, 20));
    let img = RgbImage::new(100, 50);
    assert_eq!(rotate90(&img, Turn::Cw).dimensions(), (50, 100));
}

#[test]
fn rotate90_moves_pixels_with_boxes() {
    let (rec, img) = golden_source();
    for turn in [Turn::Cw, Turn::Ccw] {
        let out = rotate90(&img, turn);
        for b in &rec.boxes {
            let r = rotate90_box(b, turn, img.width(), img.height());
            let mut before: Vec<_> = (b.y..b.y + b.h)
                .flat_map(|y| (b.x..b.x + b.w).map(move |x| (x, y)))
                .map(|(x, y)| img.get_pixel(x, y).0)
                .collect();
            let mut after: Vec<_> = (r.y..r.y + r.h)
                .flat_map(|y| (r.x..r.x + r.w).map(move |x| (x, y)))
                .map(|(x, y)| out.get_pixel(x, y).0)
                .collect();
            before.sort();
            after.sort();
            assert_eq!(before, after);
        }
    }
}

fn identity_images() -> Vec<(AnnotatedImage, RgbImage)> {
    (0..20u32)
        .map(|i| {
            let (w, h) = (17 + 7 * i, 11 + 5 * (i % 6));
            let rec = DetectionFixture::new(1, 0)
                .with_size(w, h)
                .with_max_boxes(3)
                .with_seed(u64::from(i))
                .build()
                .into_records()
                .remove(0);
            let img = render(&rec, u64::from(i));
            (rec, img)
        })
        .collect()
}

#[test]
fn flip_twice_and_four_quarter_turns_are_identities() {
    for (rec, img) in identity_images() {
        let (w, h) = img.dimensions();
        for axis in [Axis::Horizontal, Axis::Vertical] {
            assert_eq!(flip(&flip(&img, axis), axis), img);
            for b in &rec.boxes {
                let once = flip_box(b, axis, w, h);
                assert_eq!(once.area(), b.area());
                assert!(once.fits(w, h));
                assert_eq!(&flip_box(&once, axis, w, h), b);
            }
        }
        for turn in [Turn::Cw, Turn::Ccw] {
            let mut out = img.clone();
            let mut boxes = rec.boxes.clone();
            let (mut cw, mut ch) = (w, h);
            for _ in 0..4 {
                out = rotate90(&out, turn);
                boxes = boxes.iter().map(|b| rotate90_box(b, turn, cw, ch)).collect();
                (cw, ch) = (ch, cw);
                assert!(boxes.iter().all(|b| b.fits(cw, ch)));
            }
            assert_eq!(out, img);
            assert_eq!(boxes, rec.boxes);
        }
        let back = rotate90(&rotate90(&img, Turn::Cw), Turn::Ccw);
        assert_eq!(back, img);
    }
}

// Corner-rotation oracle, independent of the library's canvas code.
fn hull_of_rotated(w: f64, h: f64, deg: f64) -> (f64, f64) {
    let (s, c) = deg.to_radians().sin_cos();
    let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)];
    let xs: Vec<f64> = corners.iter().map(|&(x, y)| x * c - y * s).collect();
    let ys: Vec<f64> = corners.iter().map(|&(x, y)| x * s + y * c).collect();
    let span = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    (span(&xs), span(&ys))
}

#[test]
fn rotation_canvas_matches_corner_oracle() {
    assert_eq!(rotated_canvas(100, 100, 45.0), (142, 142));
    assert_eq!(rotated_canvas(100, 50, 0.0), (100, 50));
    for (w, h) in [(100u32, 100u32), (64, 48), (33, 91)] {
        for deg in [-45.0, -30.0, -7.5, 12.0, 45.0] {
            let (ew, eh) = hull_of_rotated(f64::from(w), f64::from(h), deg);
            let (cw, ch) = rotated_canvas(w, h, deg);
            assert_eq!(cw, (ew - 1e-9).ceil() as u32, "{w}x{h} at {deg}");
            assert_eq!(ch, (eh - 1e-9).ceil() as u32, "{w}x{h} at {deg}");
            assert_eq!(rotate(&RgbImage::new(w, h), deg, [0, 0, 0]).dimensions(), (cw, ch));
        }
    }
}

#[test]
fn zero_angle_is_identity() {
    let (rec, img) = golden_source();
    assert_eq!(rotate(&img, 0.0, [0, 0, 0]), img);
    assert_eq!(shear(&img, 0.0, Axis::Horizontal, [0, 0, 0]), img);
    for b in &rec.boxes {
        assert_eq!(rotate_box(b, 0.0, 40, 30).as_ref(), Some(b));
        assert_eq!(shear_box(b, 0.0, Axis::Vertical, 40, 30).as_ref(), Some(b));
    }
}

#[test]
fn centered_square_grows_under_rotation() {
    let b = BoundingBox::new(40, 40, 20, 20, "Tityus");
    let r = rotate_box(&b, 45.0, 100, 100).unwrap();
    assert!(r.area() >= b.area());
    let (cw, ch) = rotated_canvas(100, 100, 45.0);
    assert!(r.fits(cw, ch));
    // side of the hull of a rotated 20x20 square is 20*sqrt(2) = 28.28
    assert!((28..=30).contains(&r.w) && (28..=30).contains(&r.h), "{r:?}");
}

#[test]
fn shear_widens_canvas_and_boxes_by_tangent() {
    assert_eq!(sheared_canvas(80, 50, 45.0, Axis::Horizontal), (130, 50));
    assert_eq!(sheared_canvas(80, 50, -45.0, Axis::Horizontal), (130, 50));
    assert_eq!(sheared_canvas(80, 50, 45.0, Axis::Vertical), (80, 130));
    let b = BoundingBox::new(10, 10, 20, 16, "Tityus");
    for deg in [45.0f64, -45.0, 20.0] {
        let s = shear_box(&b, deg, Axis::Horizontal, 80, 50).unwrap();
        let grow = f64::from(b.h) * deg.to_radians().tan().abs();
        // Continuous extent is w + h*tan; snapping outward to the pixel grid adds under 2.
        let extent = f64::from(b.w) + grow;
        assert!(f64::from(s.w) >= extent - 1e-9 && f64::from(s.w) < extent + 2.0, "{deg}: {s:?}");
        assert_eq!(s.h, b.h);
    }
}

#[test]
fn blur_impulse_matches_kernel_peak() {
    let sigma = 1.75;
    let k = gaussian_kernel(sigma);
    let half = (k.len() / 2) as i32;
    // Direct evaluation of the normalized 1-D Gaussian.
    let raw: Vec<f64> = (-half..=half).map(|i| (-(f64::from(i * i)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let peak = raw[half as usize] / total;
    assert!((k[half as usize] - peak).abs() < 1e-12);

    let mut img = RgbImage::new(31, 31);
    img.put_pixel(15, 15, Rgb([255, 255, 255]));
    let out = gaussian_blur(&img, sigma);
    let centre = f64::from(out.get_pixel(15, 15).0[0]);
    assert!((centre - 255.0 * peak * peak).abs() <= 1.0, "{centre}");
    // Rounding each tap can drift by half a step per pixel; the mass stays close.
    let sum: f64 = out.pixels().map(|p| f64::from(p.0[0])).sum();
    let taps = out.pixels().filter(|p| p.0[0] > 0).count() as f64;
    assert!((sum - 255.0).abs() <= taps * 0.5 + 1.0, "{sum}");
}

#[test]
fn transform_records_replay_bit_exactly() {
    let corpus = classification_fixture([4, 4, 2], 48, 36, 3);
    let spec = AugmentSpec {
        per_image_variants: 3,
        seed: 21,
        ..AugmentSpec::default()
    };
    let source = SyntheticSource { seed: 3 };
    let out = augment_corpus(&corpus, &spec, &source, "aug").unwrap();
    assert_eq!(out.variants.len(), 30);
    for v in &out.variants {
        let parent = corpus.get(&v.ledger.parent_id).unwrap();
        let json = serde_json::to_string(&v.ledger.record).unwrap();
        let back: TransformRecord = serde_json::from_str(&json).unwrap();
        let replayed = back.replay(&render(parent, 3), &parent.boxes);
        assert_eq!(replayed.image, v.image);
        assert_eq!(replayed.boxes, v.record.boxes);
        assert_eq!(v.image.dimensions(), (v.record.width, v.record.height));
    }
    let again = augment_corpus(&corpus, &spec, &source, "aug").unwrap();
    assert_eq!(again.corpus, out.corpus);
}

#[test]
fn ledger_serializes_ops_by_name() {
    let rec = TransformRecord {
        transforms: vec![Transform::Flip { axis: Axis::Horizontal }, Transform::Blur { sigma: 1.75 }],
    };
    let v = serde_json::to_value(&rec).unwrap();
    assert_eq!(v["transforms"][0]["op"], "flip");
    assert_eq!(v["transforms"][1]["op"], "blur");
}

#[test]
fn classification_counts_triple_with_two_variants() {
    let corpus = classification_fixture([105, 113, 60], 24, 18, 1);
    let spec = AugmentSpec {
        per_image_variants: 2,
        seed: 5,
        ..AugmentSpec::default()
    };
    let out = augment_corpus(&corpus, &spec, &SyntheticSource { seed: 1 }, "aug").unwrap();
    assert!(out.dropped.is_empty());
    let mut counts = [0usize; 3];
    for r in out.corpus.records() {
        counts[r.class_label.unwrap().index()] += 1;
    }
    assert_eq!(counts, [315, 339, 180]);
}

#[test]
fn detection_counts_only_grow_train() {
    let corpus = DetectionFixture::new(700, 109).with_size(24, 18).with_seed(2).build();
    let split = split_corpus(&corpus, &SplitRatios::new(0.7, 0.2, 0.1).unwrap(), &SplitOptions::default()).unwrap();
    let spec = AugmentSpec {
        per_image_variants: 2,
        seed: 8,
        ..AugmentSpec::default()
    };
    let out = augment_corpus(&split, &spec, &SyntheticSource::default(), "aug").unwrap();
    assert_eq!(out.corpus.len() + out.dropped.len(), 1941);
    assert_eq!(out.corpus.in_split(Split::Test).count(), 81);
    assert_eq!(out.corpus.in_split(Split::Valid).count(), 162);

    let unsplit = augment_corpus(&corpus, &spec, &SyntheticSource::default(), "aug");
    assert!(unsplit.is_err());
    let none = AugmentSpec {
        per_image_variants: 0,
        ..spec
    };
    assert_eq!(augment_corpus(&split, &none, &SyntheticSource::default(), "aug").unwrap().corpus, split);
}

#[test]
fn seeded_variant_boxes_stay_in_canvas() {
    let corpus = DetectionFixture::new(100, 0).with_size(40, 30).with_max_boxes(3).with_seed(4).build();
    let split = split_corpus(&corpus, &SplitRatios::new(1.0, 0.0, 0.0).unwrap(), &SplitOptions::default()).unwrap();
    let spec = AugmentSpec {
        per_image_variants: 5,
        seed: 13,
        ..AugmentSpec::default()
    };
    let out = augment_corpus(&split, &spec, &SyntheticSource::default(), "aug").unwrap();
    assert_eq!(out.variants.len() + out.dropped.len(), 500);
    for v in &out.variants {
        assert!(!v.record.boxes.is_empty());
        for b in &v.record.boxes {
            assert!(b.w >= 1 && b.h >= 1);
            assert!(b.fits(v.record.width, v.record.height), "{} {b:?}", v.record.id);
        }
    }
}
