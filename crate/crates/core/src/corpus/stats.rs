use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{ClassLabel, Corpus, Origin, Split};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub unassigned: usize,
    pub positives: usize,
    pub negatives: usize,
    pub originals: usize,
    pub augmented: usize,
    pub by_class: BTreeMap<ClassLabel, usize>,
}

impl CorpusStats {
    /// Share of (train + valid) in the whole corpus, in percent.
    pub fn train_valid_pct(&self) -> Option<f64> {
        pct(self.train + self.valid, self.total)
    }

    /// Share of train within (train + valid), in percent.
    pub fn train_within_fit_pct(&self) -> Option<f64> {
        pct(self.train, self.train + self.valid)
    }
}

fn pct(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| 100.0 * part as f64 / whole as f64)
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut s = CorpusStats {
        total: corpus.len(),
        ..Default::default()
    };
    for rec in corpus.records() {
        match rec.split {
            Split::Train => s.train += 1,
            Split::Valid => s.valid += 1,
            Split::Test => s.test += 1,
            Split::Unassigned => s.unassigned += 1,
        }
        if rec.is_positive() {
            s.positives += 1;
        } else {
            s.negatives += 1;
        }
        match rec.origin {
            Origin::Original => s.originals += 1,
            Origin::Augmented => s.augmented += 1,
        }
        if let Some(c) = rec.class_label {
            *s.by_class.entry(c).or_default() += 1;
        }
    }
    s
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {} ({} original, {} augmented)", self.total, self.originals, self.augmented)?;
        writeln!(
            f,
            "splits: train {} / valid {} / test {} / unassigned {}",
            self.train, self.valid, self.test, self.unassigned
        )?;
        writeln!(f, "positives: {}  negatives: {}", self.positives, self.negatives)?;
        if !self.by_class.is_empty() {
            let parts: Vec<String> = self.by_class.iter().map(|(c, n)| format!("{c} {n}")).collect();
            writeln!(f, "classes: {}", parts.join(" / "))?;
        }
        if let (Some(fit), Some(train)) = (self.train_valid_pct(), self.train_within_fit_pct()) {
            writeln!(f, "train+valid of total: {fit:.1}%")?;
            writeln!(f, "train:valid = {train:.1}:{:.1}", 100.0 - train)?;
        }
        Ok(())
    }
}
