use std::collections::{BTreeMap, HashMap};

use super::{AnnotatedImage, Corpus, CorpusError, CorpusKind, Origin, Split};
use crate::seeding::keyed_u64;

const RATIO_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, CorpusError> {
        for (name, v) in [("train", train), ("valid", valid), ("test", test)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CorpusError::InvalidRatios(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let sum = train + valid + test;
        if (sum - 1.0).abs() > RATIO_SUM_TOLERANCE {
            return Err(CorpusError::InvalidRatios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(Self { train, valid, test })
    }

    /// Parses `"0.7,0.2,0.1"`.
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(CorpusError::InvalidRatios(format!("expected three comma-separated values, got `{s}`")));
        }
        let mut vals = [0.0; 3];
        for (slot, p) in vals.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| CorpusError::InvalidRatios(format!("`{p}` is not a number")))?;
        }
        Self::new(vals[0], vals[1], vals[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }

    /// Largest-remainder apportionment of `n` items. Remainder ties go to the
    /// earlier split (train, then valid, then test).
    pub fn apportion(&self, n: usize) -> [usize; 3] {
        let quotas = self.as_array().map(|r| n as f64 * r);
        let mut sizes = quotas.map(|q| q.floor() as usize);
        let assigned: usize = sizes.iter().sum();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            sizes[i] += 1;
        }
        sizes
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SplitOptions {
    pub seed: u64,
    /// Apportion positives/negatives (detection) or each class
    /// (classification) separately.
    pub stratify: bool,
    pub allow_reassign: bool,
}

/// Assigns every original record to train/valid/test. Augmented records
/// follow their parent.
///
/// A record's split depends only on the set of original ids, the ratios and
/// the seed: ids are ranked by a seeded hash, so input order is irrelevant.
pub fn split_corpus(corpus: &Corpus, ratios: &SplitRatios, opts: &SplitOptions) -> Result<Corpus, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !opts.allow_reassign {
        if let Some(r) = corpus.records().iter().find(|r| r.split != Split::Unassigned) {
            return Err(CorpusError::AlreadyAssigned(r.id.clone()));
        }
    }

    let mut strata: BTreeMap<String, Vec<&AnnotatedImage>> = BTreeMap::new();
    for rec in corpus.records().iter().filter(|r| r.origin == Origin::Original) {
        let key = if opts.stratify { stratum(corpus.kind(), rec) } else { String::new() };
        strata.entry(key).or_default().push(rec);
    }

    let mut assigned: HashMap<&str, Split> = HashMap::new();
    for members in strata.values_mut() {
        members.sort_by_cached_key(|r| (keyed_u64(opts.seed, &[b"split", r.id.as_bytes()]), r.id.clone()));
        let [n_train, n_valid, _] = ratios.apportion(members.len());
        for (i, rec) in members.iter().enumerate() {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
            assigned.insert(rec.id.as_str(), split);
        }
    }

    let parents: HashMap<&str, &str> = corpus
        .records()
        .iter()
        .filter_map(|r| r.parent_id.as_deref().map(|p| (r.id.as_str(), p)))
        .collect();
    let resolve = |id: &str| -> Split {
        let mut cur = id;
        for _ in 0..=parents.len() {
            if let Some(s) = assigned.get(cur) {
                return *s;
            }
            match parents.get(cur) {
                Some(p) => cur = p,
                None => break,
            }
        }
        Split::Unassigned
    };

    let records = corpus
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.split = resolve(&r.id);
            r
        })
        .collect();
    Corpus::new(corpus.kind(), records)
}

fn stratum(kind: CorpusKind, rec: &AnnotatedImage) -> String {
    match kind {
        CorpusKind::Classification => rec.class_label.map(|c| c.as_str().to_string()).unwrap_or_default(),
        CorpusKind::Detection => if rec.is_positive() { "positive" } else { "negative" }.to_string(),
    }
}
