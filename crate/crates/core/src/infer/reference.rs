use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use image::RgbImage;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::{sort_detections, Backend, BackendError, ClassScores, Detection, ImageInput};
use crate::augment::ImageSource;
use crate::corpus::{AnnotatedImage, BoundingBox, ClassLabel, Corpus};
use crate::seeding::keyed_rng;

type PixelKey = [u8; 32];

/// Ground-truth-derived fake model. Output is a pure function of
/// (corpus, eps, seed, image id).
///
/// Each truth box is reported with score `clamp(1 - eps*u)`; with probability
/// `eps/2` one extra box appears with score `eps*u'`. Classification puts
/// `1 - eps` on the true class and splits `eps` between the other two.
pub struct ReferenceBackend {
    corpus: Corpus,
    eps: f64,
    seed: u64,
    source: Option<Arc<dyn ImageSource + Send>>,
    index: OnceLock<Result<HashMap<PixelKey, usize>, String>>,
}

impl ReferenceBackend {
    pub fn new(corpus: Corpus, eps: f64, seed: u64) -> Result<Self, BackendError> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(BackendError::Unsupported(format!("noise {eps} outside [0, 1]")));
        }
        Ok(Self {
            corpus,
            eps,
            seed,
            source: None,
            index: OnceLock::new(),
        })
    }

    /// Enables byte inputs: images from `source` are hashed (decoded pixels)
    /// on first use so uploaded bytes can be mapped back to a record.
    pub fn with_images(mut self, source: impl ImageSource + Send + 'static) -> Self {
        self.source = Some(Arc::new(source));
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn index(&self) -> Result<&HashMap<PixelKey, usize>, BackendError> {
        let built = self.index.get_or_init(|| {
            let Some(source) = &self.source else {
                return Err("reference backend has no image source".to_string());
            };
            let mut map = HashMap::new();
            for (i, rec) in self.corpus.records().iter().enumerate() {
                let img = source.load(rec).map_err(|e| e.to_string())?;
                map.entry(pixel_key(&img)).or_insert(i);
            }
            Ok(map)
        });
        built.as_ref().map_err(|m| BackendError::Unsupported(m.clone()))
    }

    fn resolve(&self, input: &ImageInput) -> Result<&AnnotatedImage, BackendError> {
        match input {
            ImageInput::Id(id) => self.corpus.get(id).ok_or_else(|| BackendError::UnknownImage(id.clone())),
            ImageInput::Bytes(bytes) => {
                let img = image::load_from_memory(bytes)
                    .map_err(|e| BackendError::Decode(e.to_string()))?
                    .to_rgb8();
                let key = pixel_key(&img);
                let index = self.index()?;
                index
                    .get(&key)
                    .map(|&i| &self.corpus.records()[i])
                    .ok_or_else(|| BackendError::UnknownImage(format!("sha256:{}", hex(&key[..8]))))
            }
        }
    }

    pub fn detect_record(&self, rec: &AnnotatedImage) -> Vec<Detection> {
        let id = rec.id.as_bytes();
        let mut dets: Vec<Detection> = rec
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let u: f64 = keyed_rng(self.seed, &[b"ref-box", id, &(i as u64).to_le_bytes()]).random();
                Detection::new(rec.id.clone(), b.clone(), (1.0 - self.eps * u).clamp(0.0, 1.0))
            })
            .collect();
        let mut rng = keyed_rng(self.seed, &[b"ref-spurious", id]);
        let (coin, u2): (f64, f64) = (rng.random(), rng.random());
        if coin < self.eps / 2.0 {
            let w = rng.random_range(1..=rec.width.div_ceil(4));
            let h = rng.random_range(1..=rec.height.div_ceil(4));
            let x = rng.random_range(0..=rec.width - w);
            let y = rng.random_range(0..=rec.height - h);
            let label = if rng.random_bool(0.5) { ClassLabel::Tityus } else { ClassLabel::Bothriurus };
            dets.push(Detection::new(
                rec.id.clone(),
                BoundingBox::new(x, y, w, h, label.as_str()),
                (self.eps * u2).clamp(0.0, 1.0),
            ));
        }
        sort_detections(&mut dets);
        dets
    }

    pub fn classify_record(&self, rec: &AnnotatedImage) -> Result<ClassScores, BackendError> {
        let truth = rec.truth_class().ok_or_else(|| BackendError::NoGroundTruth(rec.id.clone()))?;
        let v: f64 = keyed_rng(self.seed, &[b"ref-class", rec.id.as_bytes()]).random();
        let mut probs = [0.0; 3];
        let others: Vec<usize> = (0..3).filter(|&i| i != truth.index()).collect();
        probs[truth.index()] = 1.0 - self.eps;
        probs[others[0]] = self.eps * v;
        probs[others[1]] = self.eps * (1.0 - v);
        ClassScores::from_weights(probs).map_err(BackendError::Malformed)
    }
}

fn pixel_key(img: &RgbImage) -> PixelKey {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    h.finalize().into()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Backend for ReferenceBackend {
    fn name(&self) -> String {
        format!("reference(eps={},seed={})", self.eps, self.seed)
    }

    fn detect(&self, input: &ImageInput) -> Result<Vec<Detection>, BackendError> {
        Ok(self.detect_record(self.resolve(input)?))
    }

    fn classify(&self, input: &ImageInput) -> Result<ClassScores, BackendError> {
        self.classify_record(self.resolve(input)?)
    }

    fn health(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusKind;
    use crate::synth::{render, DetectionFixture, SyntheticSource};

    fn png(img: &RgbImage) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn eps_zero_reproduces_truth() {
        let c = DetectionFixture::new(3, 2).build();
        let b = ReferenceBackend::new(c.clone(), 0.0, 1).unwrap();
        let pos = c.get("pos0000").unwrap();
        let dets = b.detect(&ImageInput::Id(pos.id.clone())).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, pos.boxes[0]);
        assert_eq!(dets[0].score, 1.0);
        assert!(b.detect(&ImageInput::Id("neg0000".into())).unwrap().is_empty());
        let s = b.classify(&ImageInput::Id("pos0000".into())).unwrap();
        assert_eq!(s.probs(), [1.0, 0.0, 0.0]);
        assert!(s.dangerous());
        let s = b.classify(&ImageInput::Id("pos0001".into())).unwrap();
        assert!(!s.dangerous());
    }

    #[test]
    fn noisy_output_is_deterministic_and_valid() {
        let c = DetectionFixture::new(40, 40).with_max_boxes(3).build();
        let a = ReferenceBackend::new(c.clone(), 0.7, 9).unwrap();
        let b = ReferenceBackend::new(c.clone(), 0.7, 9).unwrap();
        for rec in c.records() {
            let input = ImageInput::Id(rec.id.clone());
            let da = a.detect(&input).unwrap();
            assert_eq!(da, b.detect(&input).unwrap());
            for d in &da {
                d.check().unwrap();
                assert!(d.fits(rec));
            }
            assert!(da.windows(2).all(|w| w[0].score >= w[1].score));
            let s = a.classify(&input).unwrap();
            assert_eq!(s, b.classify(&input).unwrap());
            assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn bytes_map_back_to_records() {
        let c = DetectionFixture::new(2, 1).build();
        let b = ReferenceBackend::new(c.clone(), 0.0, 1).unwrap().with_images(SyntheticSource { seed: 4 });
        let rec = c.get("pos0001").unwrap();
        let dets = b.detect(&ImageInput::Bytes(png(&render(rec, 4)))).unwrap();
        assert_eq!(dets[0].image_id, "pos0001");
        let blank = RgbImage::new(64, 48);
        assert!(matches!(
            b.detect(&ImageInput::Bytes(png(&blank))),
            Err(BackendError::UnknownImage(_))
        ));
        assert!(matches!(
            b.detect(&ImageInput::Bytes(b"not an image".to_vec())),
            Err(BackendError::Decode(_))
        ));
    }

    #[test]
    fn missing_class_is_reported() {
        let mut rec = AnnotatedImage::new("x", "x.png", 4, 4);
        rec.boxes.push(BoundingBox::new(0, 0, 2, 2, "spider"));
        let c = Corpus::new(CorpusKind::Detection, vec![rec]).unwrap();
        let b = ReferenceBackend::new(c, 0.0, 0).unwrap();
        assert!(matches!(
            b.classify(&ImageInput::Id("x".into())),
            Err(BackendError::NoGroundTruth(_))
        ));
    }
}
