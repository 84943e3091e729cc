//! Seeded, replayable augmentation of images together with their boxes.

mod geometry;
mod photometric;

use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedImage, BoundingBox, Corpus, CorpusError, CorpusKind, Origin, Split};
use crate::seeding::keyed_rng;

pub use geometry::{
    flip, flip_box, rotate, rotate90, rotate90_box, rotate_box, rotated_canvas, shear, shear_box, sheared_canvas,
    Axis, Turn,
};
pub use photometric::{adjust_exposure, adjust_saturation, gaussian_blur, gaussian_kernel, pixel_noise};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("invalid augmentation settings: {0}")]
    InvalidSpec(String),
    #[error("detection corpora must be split before augmentation (record `{0}` is unassigned)")]
    Unsplit(String),
    #[error("image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Which transforms may be drawn and how strongly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub flip_h: bool,
    pub flip_v: bool,
    pub rot90: bool,
    pub rot45: bool,
    pub tilt45: bool,
    /// Largest rotation magnitude in degrees.
    pub rotate_max_deg: f64,
    /// Largest shear magnitude in degrees.
    pub shear_max_deg: f64,
    pub saturation_pct: f64,
    pub exposure_pct: f64,
    /// Gaussian sigma in pixels; 0 disables blur.
    pub blur_px: f64,
    /// Fraction of pixels replaced by noise; 0 disables it.
    pub noise_frac: f64,
    pub per_image_variants: u32,
    pub seed: u64,
    pub fill: [u8; 3],
    /// Fresh draws allowed when every box of a variant degenerates.
    pub max_retries: u32,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            flip_h: true,
            flip_v: true,
            rot90: true,
            rot45: true,
            tilt45: true,
            rotate_max_deg: 45.0,
            shear_max_deg: 45.0,
            saturation_pct: 48.0,
            exposure_pct: 25.0,
            blur_px: 1.75,
            noise_frac: 0.05,
            per_image_variants: 2,
            seed: 0,
            fill: [0, 0, 0],
            max_retries: 8,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidSpec(m));
        if !(0.0..=100.0).contains(&self.saturation_pct) {
            return bad(format!("saturation_pct {} outside [0, 100]", self.saturation_pct));
        }
        if !(0.0..=100.0).contains(&self.exposure_pct) {
            return bad(format!("exposure_pct {} outside [0, 100]", self.exposure_pct));
        }
        if !(0.0..=1.0).contains(&self.noise_frac) {
            return bad(format!("noise_frac {} outside [0, 1]", self.noise_frac));
        }
        if self.blur_px.is_nan() || self.blur_px < 0.0 {
            return bad(format!("blur_px {} is negative", self.blur_px));
        }
        for (name, v) in [("rotate_max_deg", self.rotate_max_deg), ("shear_max_deg", self.shear_max_deg)] {
            if !(0.0..=45.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 45]"));
            }
        }
        Ok(())
    }

    /// Each enabled transform is included with probability 1/2, in a fixed
    /// order, with parameters drawn uniformly from its range.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> TransformRecord {
        let mut ops = Vec::new();
        let coin = |rng: &mut ChaCha8Rng| rng.random_bool(0.5);
        if self.flip_h && coin(rng) {
            ops.push(Transform::Flip { axis: Axis::Horizontal });
        }
        if self.flip_v && coin(rng) {
            ops.push(Transform::Flip { axis: Axis::Vertical });
        }
        if self.rot90 && coin(rng) {
            let turn = if rng.random_bool(0.5) { Turn::Cw } else { Turn::Ccw };
            ops.push(Transform::Rotate90 { turn });
        }
        if self.rot45 && self.rotate_max_deg > 0.0 && coin(rng) {
            let m = self.rotate_max_deg;
            ops.push(Transform::Rotate {
                angle_deg: rng.random_range(-m..=m),
                fill: self.fill,
            });
        }
        if self.tilt45 && self.shear_max_deg > 0.0 && coin(rng) {
            let m = self.shear_max_deg;
            let angle_deg = rng.random_range(-m..=m);
            let axis = if rng.random_bool(0.5) { Axis::Horizontal } else { Axis::Vertical };
            ops.push(Transform::Shear {
                angle_deg,
                axis,
                fill: self.fill,
            });
        }
        if self.saturation_pct > 0.0 && coin(rng) {
            let m = self.saturation_pct / 100.0;
            ops.push(Transform::Saturation {
                delta: rng.random_range(-m..=m),
            });
        }
        if self.exposure_pct > 0.0 && coin(rng) {
            let m = self.exposure_pct / 100.0;
            ops.push(Transform::Exposure {
                delta: rng.random_range(-m..=m),
            });
        }
        if self.blur_px > 0.0 && coin(rng) {
            ops.push(Transform::Blur { sigma: self.blur_px });
        }
        if self.noise_frac > 0.0 && coin(rng) {
            ops.push(Transform::Noise {
                frac: self.noise_frac,
                seed: rng.random(),
            });
        }
        TransformRecord { transforms: ops }
    }
}

/// A primitive transform with its sampled parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    Flip { axis: Axis },
    Rotate90 { turn: Turn },
    Rotate { angle_deg: f64, fill: [u8; 3] },
    Shear { angle_deg: f64, axis: Axis, fill: [u8; 3] },
    Saturation { delta: f64 },
    Exposure { delta: f64 },
    Blur { sigma: f64 },
    Noise { frac: f64, seed: u64 },
}

impl Transform {
    pub fn apply_image(&self, img: &RgbImage) -> RgbImage {
        match *self {
            Transform::Flip { axis } => flip(img, axis),
            Transform::Rotate90 { turn } => rotate90(img, turn),
            Transform::Rotate { angle_deg, fill } => rotate(img, angle_deg, fill),
            Transform::Shear { angle_deg, axis, fill } => shear(img, angle_deg, axis, fill),
            Transform::Saturation { delta } => adjust_saturation(img, delta),
            Transform::Exposure { delta } => adjust_exposure(img, delta),
            Transform::Blur { sigma } => gaussian_blur(img, sigma),
            Transform::Noise { frac, seed } => pixel_noise(img, frac, seed),
        }
    }

    /// Canvas size after this transform.
    pub fn canvas(&self, width: u32, height: u32) -> (u32, u32) {
        match *self {
            Transform::Rotate90 { .. } => (height, width),
            Transform::Rotate { angle_deg, .. } => {
                if angle_deg == 0.0 {
                    (width, height)
                } else {
                    rotated_canvas(width, height, angle_deg)
                }
            }
            Transform::Shear { angle_deg, axis, .. } => sheared_canvas(width, height, angle_deg, axis),
            _ => (width, height),
        }
    }

    /// Maps one box; `None` if it degenerates after clipping.
    pub fn apply_box(&self, b: &BoundingBox, width: u32, height: u32) -> Option<BoundingBox> {
        match *self {
            Transform::Flip { axis } => Some(flip_box(b, axis, width, height)),
            Transform::Rotate90 { turn } => Some(rotate90_box(b, turn, width, height)),
            Transform::Rotate { angle_deg, .. } => rotate_box(b, angle_deg, width, height),
            Transform::Shear { angle_deg, axis, .. } => shear_box(b, angle_deg, axis, width, height),
            _ => Some(b.clone()),
        }
    }
}

/// Ordered transforms applied to one variant; replaying them on the parent
/// reproduces the variant exactly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub transforms: Vec<Transform>,
}

/// Boxes after a replay plus how many were lost to clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct Replayed {
    pub image: RgbImage,
    pub boxes: Vec<BoundingBox>,
    pub dropped_boxes: usize,
}

impl TransformRecord {
    pub fn replay(&self, img: &RgbImage, boxes: &[BoundingBox]) -> Replayed {
        let mut image = img.clone();
        let mut boxes = boxes.to_vec();
        let mut dropped_boxes = 0;
        for t in &self.transforms {
            let (w, h) = image.dimensions();
            boxes = boxes
                .iter()
                .filter_map(|b| {
                    let out = t.apply_box(b, w, h);
                    if out.is_none() {
                        dropped_boxes += 1;
                    }
                    out
                })
                .collect();
            image = t.apply_image(&image);
        }
        Replayed {
            image,
            boxes,
            dropped_boxes,
        }
    }
}

/// One line of `transforms.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: String,
    pub parent_id: String,
    #[serde(flatten)]
    pub record: TransformRecord,
}

/// Loads pixels for a record.
pub trait ImageSource: Sync {
    fn load(&self, record: &AnnotatedImage) -> Result<RgbImage, AugmentError>;
}

/// Reads image files, resolving relative record paths against `base`.
#[derive(Clone, Debug)]
pub struct FsImageSource {
    pub base: PathBuf,
}

impl FsImageSource {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self { base: base.into() }
    }

    pub fn resolve(&self, record: &AnnotatedImage) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

impl ImageSource for FsImageSource {
    fn load(&self, record: &AnnotatedImage) -> Result<RgbImage, AugmentError> {
        let path = self.resolve(record);
        image::open(&path)
            .map(|img| img.to_rgb8())
            .map_err(|e| AugmentError::Image {
                path,
                message: e.to_string(),
            })
    }
}

#[derive(Clone, Debug)]
pub struct Variant {
    pub record: AnnotatedImage,
    pub image: RgbImage,
    pub ledger: LedgerEntry,
}

#[derive(Clone, Debug)]
pub struct Augmented {
    pub corpus: Corpus,
    pub variants: Vec<Variant>,
    /// Ids of variants given up on after `max_retries`.
    pub dropped: Vec<String>,
}

pub fn variant_id(parent: &str, index: u32) -> String {
    format!("{parent}~aug{index}")
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Records that receive variants: train originals for detection corpora,
/// every original for classification corpora.
pub fn eligible(corpus: &Corpus) -> Result<Vec<&AnnotatedImage>, AugmentError> {
    let originals = corpus.records().iter().filter(|r| r.origin == Origin::Original);
    match corpus.kind() {
        CorpusKind::Classification => Ok(originals.collect()),
        CorpusKind::Detection => {
            let originals: Vec<_> = originals.collect();
            if let Some(r) = originals.iter().find(|r| r.split == Split::Unassigned) {
                return Err(AugmentError::Unsplit(r.id.clone()));
            }
            Ok(originals.into_iter().filter(|r| r.split == Split::Train).collect())
        }
    }
}

/// Builds variant `index` of `parent`. Randomness is keyed by
/// `(seed, parent id, index)`, so the result does not depend on which other
/// records are processed or in what order.
pub fn make_variant(
    parent: &AnnotatedImage,
    image: &RgbImage,
    index: u32,
    spec: &AugmentSpec,
    image_dir: &str,
) -> Option<Variant> {
    let mut rng = keyed_rng(spec.seed, &[b"augment", parent.id.as_bytes(), &index.to_le_bytes()]);
    for _ in 0..=spec.max_retries {
        let record = spec.sample(&mut rng);
        let out = record.replay(image, &parent.boxes);
        if !parent.boxes.is_empty() && out.boxes.is_empty() {
            continue;
        }
        if out.dropped_boxes > 0 {
            log::warn!("variant {index} of `{}` lost {} box(es) to clipping", parent.id, out.dropped_boxes);
        }
        let id = variant_id(&parent.id, index);
        let (width, height) = out.image.dimensions();
        let path = if image_dir.is_empty() {
            format!("{}.png", file_stem(&id))
        } else {
            format!("{}/{}.png", image_dir.trim_end_matches('/'), file_stem(&id))
        };
        let rec = AnnotatedImage {
            id: id.clone(),
            path,
            width,
            height,
            split: parent.split,
            origin: Origin::Augmented,
            parent_id: Some(parent.id.clone()),
            boxes: out.boxes,
            class_label: parent.class_label,
            extra: Default::default(),
        };
        return Some(Variant {
            record: rec,
            image: out.image,
            ledger: LedgerEntry {
                id,
                parent_id: parent.id.clone(),
                record,
            },
        });
    }
    None
}

/// Streams every variant to `sink` and returns the expanded corpus
/// (originals first, then variants in parent order) with the dropped ids.
pub fn augment_corpus_with(
    corpus: &Corpus,
    spec: &AugmentSpec,
    source: &dyn ImageSource,
    image_dir: &str,
    mut sink: impl FnMut(Variant) -> Result<(), AugmentError>,
) -> Result<(Corpus, Vec<String>), AugmentError> {
    spec.validate()?;
    let parents = eligible(corpus)?;
    let mut records = corpus.records().to_vec();
    let mut dropped = Vec::new();
    if spec.per_image_variants == 0 {
        return Ok((corpus.clone(), dropped));
    }
    for parent in parents {
        let image = source.load(parent)?;
        for index in 0..spec.per_image_variants {
            match make_variant(parent, &image, index, spec, image_dir) {
                Some(v) => {
                    records.push(v.record.clone());
                    sink(v)?;
                }
                None => {
                    let id = variant_id(&parent.id, index);
                    log::warn!("dropping `{id}`: every box degenerated in {} draws", spec.max_retries + 1);
                    dropped.push(id);
                }
            }
        }
    }
    Ok((Corpus::new(corpus.kind(), records)?, dropped))
}

/// In-memory variant of [`augment_corpus_with`].
pub fn augment_corpus(
    corpus: &Corpus,
    spec: &AugmentSpec,
    source: &dyn ImageSource,
    image_dir: &str,
) -> Result<Augmented, AugmentError> {
    let mut variants = Vec::new();
    let (corpus, dropped) = augment_corpus_with(corpus, spec, source, image_dir, |v| {
        variants.push(v);
        Ok(())
    })?;
    Ok(Augmented {
        corpus,
        variants,
        dropped,
    })
}
