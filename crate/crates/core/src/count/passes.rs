use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{for_each_token, CountError, OccurrenceMatrix, Vocabulary};
use crate::ingest::Document;

/// What to do with a document whose year is outside the counted range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YearMode {
    #[default]
    Strict,
    /// Skip and tally.
    Lenient,
}

const PAR_CHUNK: usize = 2048;

/// A single pass over documents that can be split into shards and merged.
///
/// Implementations must make `merge` associative and commutative with
/// `empty()` as identity, so any shard partition gives the same result.
pub trait ShardedPass: Sync {
    type Acc: Send;

    fn empty(&self) -> Self::Acc;
    fn add(&self, acc: &mut Self::Acc, doc: &Document) -> Result<(), CountError>;
    fn merge(&self, a: Self::Acc, b: Self::Acc) -> Result<Self::Acc, CountError>;

    fn run_sequential<'a>(&self, docs: impl IntoIterator<Item = &'a Document>) -> Result<Self::Acc, CountError> {
        let mut acc = self.empty();
        for d in docs {
            self.add(&mut acc, d)?;
        }
        Ok(acc)
    }

    /// Splits the slice into chunks processed on the rayon pool.
    fn run_parallel(&self, docs: &[Document]) -> Result<Self::Acc, CountError> {
        docs.par_chunks(PAR_CHUNK)
            .map(|chunk| self.run_sequential(chunk))
            .try_reduce(|| self.empty(), |a, b| self.merge(a, b))
    }

    /// Pulls `shard_size` documents at a time from a stream, processes each
    /// shard in parallel, and folds it into the running result. Memory is
    /// bounded by one shard plus the accumulator.
    fn run_stream<I, E>(&self, docs: I, shard_size: usize) -> Result<Self::Acc, E>
    where
        I: IntoIterator<Item = Result<Document, E>>,
        E: From<CountError>,
    {
        let shard_size = shard_size.max(1);
        let mut total = self.empty();
        let mut shard = Vec::with_capacity(shard_size);
        let mut iter = docs.into_iter();
        loop {
            shard.clear();
            for doc in iter.by_ref().take(shard_size) {
                shard.push(doc?);
            }
            if shard.is_empty() {
                break;
            }
            let part = self.run_parallel(&shard)?;
            total = self.merge(total, part)?;
        }
        Ok(total)
    }
}

fn year_slot(years: &[i32], doc: &Document, mode: YearMode, out_of_range: &mut u64) -> Result<Option<usize>, CountError> {
    match years.binary_search(&doc.year) {
        Ok(i) => Ok(Some(i)),
        Err(_) => match mode {
            YearMode::Strict => Err(CountError::YearOutOfRange {
                id: doc.id.clone(),
                year: doc.year,
                lo: years.first().copied().unwrap_or_default(),
                hi: years.last().copied().unwrap_or_default(),
            }),
            YearMode::Lenient => {
                *out_of_range += 1;
                Ok(None)
            }
        },
    }
}

fn check_years(years: &[i32]) -> Result<(), CountError> {
    if years.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CountError::Invalid("years must be strictly ascending".into()));
    }
    Ok(())
}

/// Word×year occurrence counting against a fixed vocabulary.
pub struct OccurrencePass<'v> {
    vocab: &'v Vocabulary,
    years: Vec<i32>,
    mode: YearMode,
}

impl<'v> OccurrencePass<'v> {
    pub fn new(vocab: &'v Vocabulary, years: Vec<i32>, mode: YearMode) -> Result<Self, CountError> {
        check_years(&years)?;
        Ok(OccurrencePass { vocab, years, mode })
    }
}

impl ShardedPass for OccurrencePass<'_> {
    type Acc = (OccurrenceMatrix, u64);

    fn empty(&self) -> Self::Acc {
        let m = OccurrenceMatrix::zeros(self.years.clone(), self.vocab.words().to_vec())
            .expect("validated years and unique vocabulary");
        (m, 0)
    }

    fn add(&self, acc: &mut Self::Acc, doc: &Document) -> Result<(), CountError> {
        let Some(y) = year_slot(&self.years, doc, self.mode, &mut acc.1)? else {
            return Ok(());
        };
        let mut ids: Vec<u32> = Vec::new();
        for_each_token(&doc.text, |t| {
            if let Some(i) = self.vocab.get(t) {
                ids.push(i);
            }
        });
        ids.sort_unstable();
        ids.dedup();
        let ny = self.years.len();
        let (counts, totals) = acc.0.counts_mut();
        totals[y] += 1;
        for i in ids {
            counts[i as usize * ny + y] += 1;
        }
        Ok(())
    }

    fn merge(&self, a: Self::Acc, b: Self::Acc) -> Result<Self::Acc, CountError> {
        Ok((a.0.merge(&b.0)?, a.1 + b.1))
    }
}

/// Sequential occurrence count. Returns the matrix and the number of
/// documents skipped for being outside `years` (always 0 in strict mode).
pub fn count_occurrences<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    vocab: &Vocabulary,
    years: Vec<i32>,
    mode: YearMode,
) -> Result<(OccurrenceMatrix, u64), CountError> {
    OccurrencePass::new(vocab, years, mode)?.run_sequential(docs)
}

/// Parallel occurrence count over an in-memory corpus; equal to
/// [`count_occurrences`] for any input.
pub fn count_occurrences_sharded(
    docs: &[Document],
    vocab: &Vocabulary,
    years: Vec<i32>,
    mode: YearMode,
) -> Result<(OccurrenceMatrix, u64), CountError> {
    OccurrencePass::new(vocab, years, mode)?.run_parallel(docs)
}

/// Per-year number of documents containing at least one word of a set,
/// alongside per-year totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainmentCounts {
    pub years: Vec<i32>,
    pub hits: Vec<u64>,
    pub totals: Vec<u64>,
    #[serde(default)]
    pub out_of_range: u64,
}

impl ContainmentCounts {
    pub fn zeros(years: Vec<i32>) -> Self {
        let n = years.len();
        ContainmentCounts {
            years,
            hits: vec![0; n],
            totals: vec![0; n],
            out_of_range: 0,
        }
    }

    pub fn get(&self, year: i32) -> Option<(u64, u64)> {
        let i = self.years.binary_search(&year).ok()?;
        Some((self.hits[i], self.totals[i]))
    }

    fn merge(mut self, other: ContainmentCounts) -> Result<Self, CountError> {
        if self.years != other.years {
            return Err(CountError::Mismatch("years"));
        }
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(other.totals) {
            *a += b;
        }
        self.out_of_range += other.out_of_range;
        Ok(self)
    }
}

pub struct ContainmentPass {
    words: HashSet<String>,
    years: Vec<i32>,
    mode: YearMode,
}

impl ContainmentPass {
    pub fn new(words: &BTreeSet<String>, years: Vec<i32>, mode: YearMode) -> Result<Self, CountError> {
        if words.is_empty() {
            return Err(CountError::EmptyWordSet);
        }
        check_years(&years)?;
        Ok(ContainmentPass {
            words: words.iter().cloned().collect(),
            years,
            mode,
        })
    }

    pub fn contains_any(&self, text: &str) -> bool {
        let mut hit = false;
        for_each_token(text, |t| {
            if !hit && self.words.contains(t) {
                hit = true;
            }
        });
        hit
    }
}

impl ShardedPass for ContainmentPass {
    type Acc = ContainmentCounts;

    fn empty(&self) -> Self::Acc {
        ContainmentCounts::zeros(self.years.clone())
    }

    fn add(&self, acc: &mut Self::Acc, doc: &Document) -> Result<(), CountError> {
        let Some(y) = year_slot(&self.years, doc, self.mode, &mut acc.out_of_range)? else {
            return Ok(());
        };
        acc.totals[y] += 1;
        if self.contains_any(&doc.text) {
            acc.hits[y] += 1;
        }
        Ok(())
    }

    fn merge(&self, a: Self::Acc, b: Self::Acc) -> Result<Self::Acc, CountError> {
        a.merge(b)
    }
}

/// Document pass counting, per year, the documents that contain at least
/// one word of `words`. Union counts cannot be recovered from the
/// occurrence matrix.
pub fn containment_counts(
    docs: &[Document],
    words: &BTreeSet<String>,
    years: Vec<i32>,
    mode: YearMode,
) -> Result<ContainmentCounts, CountError> {
    ContainmentPass::new(words, years, mode)?.run_parallel(docs)
}

/// Minimum candidate frequency among the candidate words a text contains.
pub fn doc_min_frequency(text: &str, candidates: &HashMap<String, f64>) -> Option<f64> {
    let mut best: Option<f64> = None;
    for_each_token(text, |t| {
        if let Some(&f) = candidates.get(t) {
            best = Some(best.map_or(f, |b| b.min(f)));
        }
    });
    best
}

/// Per-year sorted multiset of per-document minimum candidate frequencies.
///
/// A document contains a candidate with frequency below `T` exactly when
/// its minimum is below `T`, so one pass answers containment for every
/// threshold subset `{w : p_w < T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerProfile {
    years: Vec<i32>,
    candidates: BTreeMap<String, f64>,
    sorted_freqs: Vec<f64>,
    values: Vec<Vec<f64>>,
    totals: Vec<u64>,
    out_of_range: u64,
}

impl MarkerProfile {
    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn candidates(&self) -> &BTreeMap<String, f64> {
        &self.candidates
    }

    pub fn out_of_range(&self) -> u64 {
        self.out_of_range
    }

    /// Number of candidate words with frequency strictly below `t`.
    pub fn words_below(&self, t: f64) -> usize {
        self.sorted_freqs.partition_point(|&f| f < t)
    }

    /// Candidate words with frequency strictly below `t`.
    pub fn subset_below(&self, t: f64) -> BTreeSet<String> {
        self.candidates
            .iter()
            .filter(|(_, &f)| f < t)
            .map(|(w, _)| w.clone())
            .collect()
    }

    /// (documents containing a candidate with frequency < `t`, total
    /// documents) for a year.
    pub fn hits_below(&self, year: i32, t: f64) -> Option<(u64, u64)> {
        let i = self.years.binary_search(&year).ok()?;
        let hits = self.values[i].partition_point(|&v| v < t) as u64;
        Some((hits, self.totals[i]))
    }

    /// Containment counts for the subset of candidates below `t`.
    pub fn containment_below(&self, t: f64) -> ContainmentCounts {
        let hits = self
            .values
            .iter()
            .map(|v| v.partition_point(|&x| x < t) as u64)
            .collect();
        ContainmentCounts {
            years: self.years.clone(),
            hits,
            totals: self.totals.clone(),
            out_of_range: self.out_of_range,
        }
    }
}

pub struct ProfilePass {
    candidates: HashMap<String, f64>,
    years: Vec<i32>,
    mode: YearMode,
}

pub struct ProfileAcc {
    values: Vec<Vec<f64>>,
    totals: Vec<u64>,
    out_of_range: u64,
}

impl ProfilePass {
    pub fn new(candidates: &BTreeMap<String, f64>, years: Vec<i32>, mode: YearMode) -> Result<Self, CountError> {
        if candidates.is_empty() {
            return Err(CountError::EmptyWordSet);
        }
        for (w, &f) in candidates {
            if !(f > 0.0 && f <= 1.0) {
                return Err(CountError::BadFrequency {
                    word: w.clone(),
                    freq: f,
                });
            }
        }
        check_years(&years)?;
        Ok(ProfilePass {
            candidates: candidates.iter().map(|(w, f)| (w.clone(), *f)).collect(),
            years,
            mode,
        })
    }

    pub fn finish(&self, acc: ProfileAcc) -> MarkerProfile {
        let mut values = acc.values;
        for v in &mut values {
            v.sort_unstable_by(f64::total_cmp);
        }
        let mut sorted_freqs: Vec<f64> = self.candidates.values().copied().collect();
        sorted_freqs.sort_unstable_by(f64::total_cmp);
        MarkerProfile {
            years: self.years.clone(),
            candidates: self.candidates.iter().map(|(w, f)| (w.clone(), *f)).collect(),
            sorted_freqs,
            values,
            totals: acc.totals,
            out_of_range: acc.out_of_range,
        }
    }
}

impl ShardedPass for ProfilePass {
    type Acc = ProfileAcc;

    fn empty(&self) -> Self::Acc {
        ProfileAcc {
            values: vec![Vec::new(); self.years.len()],
            totals: vec![0; self.years.len()],
            out_of_range: 0,
        }
    }

    fn add(&self, acc: &mut Self::Acc, doc: &Document) -> Result<(), CountError> {
        let Some(y) = year_slot(&self.years, doc, self.mode, &mut acc.out_of_range)? else {
            return Ok(());
        };
        acc.totals[y] += 1;
        if let Some(f) = doc_min_frequency(&doc.text, &self.candidates) {
            acc.values[y].push(f);
        }
        Ok(())
    }

    fn merge(&self, mut a: Self::Acc, b: Self::Acc) -> Result<Self::Acc, CountError> {
        for (va, vb) in a.values.iter_mut().zip(b.values) {
            va.extend(vb);
        }
        for (ta, tb) in a.totals.iter_mut().zip(b.totals) {
            *ta += tb;
        }
        a.out_of_range += b.out_of_range;
        Ok(a)
    }
}

pub fn min_marker_frequency_profile(
    docs: &[Document],
    candidates: &BTreeMap<String, f64>,
    years: Vec<i32>,
    mode: YearMode,
) -> Result<MarkerProfile, CountError> {
    let pass = ProfilePass::new(candidates, years, mode)?;
    let acc = pass.run_parallel(docs)?;
    Ok(pass.finish(acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, year: i32, text: &str) -> Document {
        Document::new(id, year, text)
    }

    fn words(ws: &[&str]) -> BTreeSet<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn occurrence_example() {
        let docs = vec![
            doc("1", 2020, "alpha beta"),
            doc("2", 2020, "alpha alpha"),
            doc("3", 2021, "beta"),
        ];
        let vocab = Vocabulary::from_words(["alpha", "beta"]);
        let (m, skipped) = count_occurrences(&docs, &vocab, vec![2020, 2021], YearMode::Strict).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(m.row(m.word_index("alpha").unwrap()), &[2, 0]);
        assert_eq!(m.row(m.word_index("beta").unwrap()), &[1, 1]);
        assert_eq!(m.totals(), &[2, 1]);
        let (par, _) = count_occurrences_sharded(&docs, &vocab, vec![2020, 2021], YearMode::Strict).unwrap();
        assert_eq!(par, m);
    }

    #[test]
    fn empty_year_in_range() {
        let docs = vec![doc("1", 2020, "alpha")];
        let vocab = Vocabulary::from_words(["alpha"]);
        let (m, _) = count_occurrences(&docs, &vocab, vec![2020, 2021, 2022], YearMode::Strict).unwrap();
        assert_eq!(m.total(2022), Some(0));
        assert_eq!(m.count("alpha", 2022), Some(0));
    }

    #[test]
    fn out_of_range_years() {
        let docs = vec![doc("1", 2020, "alpha"), doc("2", 2030, "alpha")];
        let vocab = Vocabulary::from_words(["alpha"]);
        let err = count_occurrences(&docs, &vocab, vec![2020], YearMode::Strict).unwrap_err();
        assert!(matches!(err, CountError::YearOutOfRange { year: 2030, .. }));
        let (m, skipped) = count_occurrences(&docs, &vocab, vec![2020], YearMode::Lenient).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(m.totals(), &[1]);
    }

    #[test]
    fn stream_matches_slice() {
        let docs: Vec<Document> = (0..50)
            .map(|i| doc(&i.to_string(), 2020 + (i % 3), if i % 2 == 0 { "alpha beta" } else { "gamma" }))
            .collect();
        let vocab = Vocabulary::from_words(["alpha", "beta", "gamma"]);
        let pass = OccurrencePass::new(&vocab, vec![2020, 2021, 2022], YearMode::Strict).unwrap();
        let whole = pass.run_sequential(&docs).unwrap();
        let streamed: (OccurrenceMatrix, u64) = pass
            .run_stream(docs.iter().cloned().map(Ok::<_, CountError>), 7)
            .unwrap();
        assert_eq!(whole, streamed);
    }

    #[test]
    fn containment_example() {
        let docs = vec![doc("1", 2020, "alpha beta"), doc("2", 2020, "gamma")];
        let c = containment_counts(&docs, &words(&["alpha", "beta"]), vec![2020], YearMode::Strict).unwrap();
        assert_eq!(c.get(2020), Some((1, 2)));
        assert!(matches!(
            containment_counts(&docs, &BTreeSet::new(), vec![2020], YearMode::Strict),
            Err(CountError::EmptyWordSet)
        ));
    }

    #[test]
    fn profile_min_semantics() {
        let cands: BTreeMap<String, f64> = [("rare".to_string(), 0.005), ("common".to_string(), 0.03)].into();
        let hm: HashMap<String, f64> = cands.clone().into_iter().collect();
        assert_eq!(doc_min_frequency("common and rare", &hm), Some(0.005));
        assert_eq!(doc_min_frequency("common only", &hm), Some(0.03));
        assert_eq!(doc_min_frequency("nothing here", &hm), None);

        let docs = vec![
            doc("1", 2020, "common and rare"),
            doc("2", 2020, "common only"),
            doc("3", 2020, "nothing"),
        ];
        let p = min_marker_frequency_profile(&docs, &cands, vec![2020], YearMode::Strict).unwrap();
        assert_eq!(p.hits_below(2020, 0.01), Some((1, 3)));
        assert_eq!(p.hits_below(2020, 0.05), Some((2, 3)));
        assert_eq!(p.hits_below(2020, 0.005), Some((0, 3)));
        assert_eq!(p.words_below(0.01), 1);
        assert_eq!(p.subset_below(0.05).len(), 2);
    }

    #[test]
    fn profile_rejects_bad_frequencies() {
        let cands: BTreeMap<String, f64> = [("x".to_string(), 0.0)].into();
        assert!(matches!(
            ProfilePass::new(&cands, vec![2020], YearMode::Strict),
            Err(CountError::BadFrequency { .. })
        ));
    }
}
