//! Deterministic synthetic corpora and images for fixtures and tests.

use std::io;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::augment::{AugmentError, ImageSource};
use crate::corpus::{save_manifest, AnnotatedImage, BoundingBox, ClassLabel, Corpus, CorpusError, CorpusKind};
use crate::seeding::keyed_rng;

#[derive(Clone, Debug)]
pub struct DetectionFixture {
    pub positives: usize,
    pub negatives: usize,
    pub width: u32,
    pub height: u32,
    /// Positive images carry between 1 and `max_boxes` boxes.
    pub max_boxes: usize,
    pub seed: u64,
}

impl DetectionFixture {
    pub fn new(positives: usize, negatives: usize) -> Self {
        Self {
            positives,
            negatives,
            width: 64,
            height: 48,
            max_boxes: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_boxes(mut self, max_boxes: usize) -> Self {
        self.max_boxes = max_boxes.max(1);
        self
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    /// Positives are `pos0000..`, negatives `neg0000..`. Box labels
    /// alternate Tityus, Bothriurus.
    pub fn build(&self) -> Corpus {
        let mut records = Vec::with_capacity(self.positives + self.negatives);
        let mut label_turn = 0usize;
        for i in 0..self.positives {
            let id = format!("pos{i:04}");
            let mut rng = keyed_rng(self.seed, &[b"synth-boxes", id.as_bytes()]);
            let count = rng.random_range(1..=self.max_boxes);
            let boxes = (0..count)
                .map(|_| {
                    let label = if label_turn.is_multiple_of(2) { ClassLabel::Tityus } else { ClassLabel::Bothriurus };
                    label_turn += 1;
                    random_box(&mut rng, self.width, self.height, label.as_str())
                })
                .collect();
            records.push(AnnotatedImage::new(id.clone(), format!("images/{id}.png"), self.width, self.height).with_boxes(boxes));
        }
        for i in 0..self.negatives {
            let id = format!("neg{i:04}");
            records.push(AnnotatedImage::new(id.clone(), format!("images/{id}.png"), self.width, self.height));
        }
        Corpus::new(CorpusKind::Detection, records).expect("synthetic records are valid")
    }
}

fn random_box(rng: &mut impl Rng, width: u32, height: u32, label: &str) -> BoundingBox {
    let w = rng.random_range(1.max(width / 6)..=1.max(width / 2));
    let h = rng.random_range(1.max(height / 6)..=1.max(height / 2));
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=height - h);
    BoundingBox::new(x, y, w, h, label)
}

/// Classification corpus with `counts[c]` images of class `ClassLabel::ALL[c]`.
/// Scorpion images carry one box labelled with their class.
pub fn classification_fixture(counts: [usize; 3], width: u32, height: u32, seed: u64) -> Corpus {
    let mut records = Vec::new();
    for (class, &count) in ClassLabel::ALL.iter().zip(&counts) {
        for i in 0..count {
            let id = format!("{}{i:04}", class.as_str().to_lowercase());
            let mut rec = AnnotatedImage::new(id.clone(), format!("images/{id}.png"), width, height).with_class(*class);
            if *class != ClassLabel::None {
                let mut rng = keyed_rng(seed, &[b"synth-boxes", id.as_bytes()]);
                rec.boxes.push(random_box(&mut rng, width, height, class.as_str()));
            }
            records.push(rec);
        }
    }
    Corpus::new(CorpusKind::Classification, records).expect("synthetic records are valid")
}

/// Pixels for a record: seeded noise background with boxes painted in a
/// per-label colour. Distinct ids give distinct images.
pub fn render(record: &AnnotatedImage, seed: u64) -> RgbImage {
    let mut rng = keyed_rng(seed, &[b"synth-pixels", record.id.as_bytes()]);
    let mut img = RgbImage::from_fn(record.width, record.height, |_, _| {
        let v: u8 = rng.random_range(40..=120);
        Rgb([v, v.saturating_add(10), v / 2])
    });
    for b in &record.boxes {
        let base = match b.label.as_str() {
            "Tityus" => [230, 190, 40],
            "Bothriurus" => [90, 50, 20],
            _ => [200, 200, 200],
        };
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                let jitter: u8 = rng.random_range(0..16);
                img.put_pixel(x, y, Rgb(base.map(|c: u8| c.saturating_add(jitter))));
            }
        }
    }
    img
}

/// Renders images on demand instead of reading files.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticSource {
    pub seed: u64,
}

impl ImageSource for SyntheticSource {
    fn load(&self, record: &AnnotatedImage) -> Result<RgbImage, AugmentError> {
        Ok(render(record, self.seed))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MaterializeError {
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("cannot encode {path}: {source}")]
    Encode { path: String, source: image::ImageError },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Writes every record's rendered PNG under `dir` plus `dir/manifest.jsonl`.
pub fn materialize(corpus: &Corpus, dir: &Path, seed: u64) -> Result<(), MaterializeError> {
    for rec in corpus.records() {
        let path = dir.join(&rec.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| MaterializeError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        render(rec, seed).save(&path).map_err(|source| MaterializeError::Encode {
            path: path.display().to_string(),
            source,
        })?;
    }
    save_manifest(corpus, &dir.join("manifest.jsonl"))?;
    Ok(())
}
