//! Synthetic longitudinal corpora with known word trajectories and a known
//! injected marker rate, plus naive reference counters.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::count::{ContainmentCounts, OccurrenceMatrix};
use crate::ingest::Document;
use crate::markergap::Predicate;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("word {word:?}: probability {p} for {year} outside [0, 1]")]
    Probability { word: String, year: i32, p: f64 },
    #[error("target year {0} not present in corpus")]
    MissingYear(i32),
    #[error("document {id}: every pool marker is already present")]
    PoolExhausted { id: String },
    #[error("oracle limited to {limit} documents, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Year → containment probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Constant(f64),
    /// Explicit value per year; every generated year must be listed.
    PerYear(BTreeMap<i32, f64>),
    /// `start + slope · (year − first year)`.
    Linear { start: f64, slope: f64 },
}

impl Trajectory {
    fn at(&self, year: i32, first_year: i32) -> Option<f64> {
        match self {
            Trajectory::Constant(p) => Some(*p),
            Trajectory::PerYear(m) => m.get(&year).copied(),
            Trajectory::Linear { start, slope } => Some(start + slope * f64::from(year - first_year)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseWord {
    pub word: String,
    pub trajectory: Trajectory,
}

/// Uniform number of filler tokens per document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocLength {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Inclusive year range.
    pub years: (i32, i32),
    pub docs_per_year: usize,
    pub base_vocab: Vec<BaseWord>,
    pub doc_length: DocLength,
    /// Size of the generated filler vocabulary when `filler_words` is empty.
    #[serde(default = "default_filler_vocab")]
    pub filler_vocab: usize,
    #[serde(default)]
    pub filler_words: Vec<String>,
    /// Assigned round-robin to documents' `country`, for subgroup tests.
    #[serde(default)]
    pub countries: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_filler_vocab() -> usize {
    500
}

/// Filler word `i`: `fil` followed by four letters.
fn filler_word(i: usize) -> String {
    let mut s = String::from("fil");
    let mut n = i;
    for _ in 0..4 {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
    }
    s
}

impl SyntheticSpec {
    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.years.0..=self.years.1
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.years.0 > self.years.1 {
            return Err(SynthError::Spec(format!("empty year range {:?}", self.years)));
        }
        if self.docs_per_year == 0 {
            return Err(SynthError::Spec("docs_per_year must be at least 1".into()));
        }
        if self.doc_length.min > self.doc_length.max {
            return Err(SynthError::Spec("doc_length.min exceeds doc_length.max".into()));
        }
        if self.filler_words.is_empty() && self.filler_vocab == 0 && self.doc_length.max > 0 {
            return Err(SynthError::Spec("filler tokens requested but filler vocabulary is empty".into()));
        }
        if self.filler_vocab > 26usize.pow(4) {
            return Err(SynthError::Spec("filler_vocab at most 456976".into()));
        }
        let mut seen = HashSet::new();
        for b in &self.base_vocab {
            if b.word.is_empty() || b.word.chars().any(|c| !c.is_alphanumeric() && c != '_') || b.word != b.word.to_lowercase() {
                return Err(SynthError::Spec(format!("base word {:?} must be a single lowercase token", b.word)));
            }
            if !seen.insert(b.word.as_str()) {
                return Err(SynthError::Spec(format!("duplicate base word {:?}", b.word)));
            }
            for y in self.years() {
                let p = b.trajectory.at(y, self.years.0).ok_or_else(|| {
                    SynthError::Spec(format!("word {:?}: trajectory has no value for {y}", b.word))
                })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(SynthError::Probability {
                        word: b.word.clone(),
                        year: y,
                        p,
                    });
                }
            }
        }
        let fillers = self.fillers();
        if let Some(f) = fillers.iter().find(|f| seen.contains(f.as_str())) {
            return Err(SynthError::Spec(format!("filler word {f:?} is also a base word")));
        }
        Ok(())
    }

    fn fillers(&self) -> Vec<String> {
        if self.filler_words.is_empty() {
            (0..self.filler_vocab).map(filler_word).collect()
        } else {
            self.filler_words.clone()
        }
    }
}

fn year_rng(seed: u64, year: i32, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(year as u32 as u64);
    rng
}

const GENERATE: u64 = 1;
const SELECT: u64 = 2;
const MARK: u64 = 3;

/// Generates `docs_per_year` documents per year. Each base word enters a
/// document independently with its trajectory probability; filler tokens
/// pad the text. Output is a pure function of the spec (seed included) and
/// is ordered by year then index.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<Vec<Document>, SynthError> {
    spec.validate()?;
    let fillers = spec.fillers();
    let years: Vec<i32> = spec.years().collect();
    let per_year: Vec<Vec<Document>> = years
        .par_iter()
        .map(|&year| {
            let mut rng = year_rng(spec.seed, year, GENERATE);
            let probs: Vec<(&str, f64)> = spec
                .base_vocab
                .iter()
                .map(|b| (b.word.as_str(), b.trajectory.at(year, spec.years.0).expect("validated")))
                .collect();
            let mut docs = Vec::with_capacity(spec.docs_per_year);
            let mut tokens: Vec<&str> = Vec::new();
            for i in 0..spec.docs_per_year {
                tokens.clear();
                for &(w, p) in &probs {
                    if rng.random::<f64>() < p {
                        tokens.push(w);
                    }
                }
                let len = rng.random_range(spec.doc_length.min..=spec.doc_length.max);
                for _ in 0..len {
                    tokens.push(&fillers[rng.random_range(0..fillers.len())]);
                }
                tokens.shuffle(&mut rng);
                let mut d = Document::new(format!("syn-{year}-{i:07}"), year, tokens.join(" "));
                if !spec.countries.is_empty() {
                    d.country = Some(spec.countries[i % spec.countries.len()].clone());
                }
                docs.push(d);
            }
            docs
        })
        .collect();
    Ok(per_year.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub target_year: i32,
    pub fraction: f64,
    pub marker_pool: Vec<String>,
    #[serde(default = "one")]
    pub words_per_doc: usize,
    #[serde(default)]
    pub guarantee_novel: bool,
    /// Probability that a processed document has its pool markers removed
    /// instead of receiving new ones.
    #[serde(default)]
    pub censor_probability: f64,
    /// Restricts eligible documents (e.g. one subgroup).
    #[serde(default)]
    pub only: Option<Predicate>,
}

fn one() -> usize {
    1
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(SynthError::Spec(format!("fraction {} outside [0, 1]", self.fraction)));
        }
        if !(0.0..=1.0).contains(&self.censor_probability) {
            return Err(SynthError::Spec(format!(
                "censor_probability {} outside [0, 1]",
                self.censor_probability
            )));
        }
        if self.marker_pool.is_empty() {
            return Err(SynthError::Spec("marker_pool is empty".into()));
        }
        if self.words_per_doc == 0 {
            return Err(SynthError::Spec("words_per_doc must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which documents were processed, and which of those were censored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InjectionTruth {
    pub processed: BTreeSet<String>,
    pub censored: BTreeSet<String>,
}

fn tokens_of(text: &str) -> HashSet<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Processes exactly `round(f · n)` of the `n` eligible target-year
/// documents, chosen uniformly. A processed document either gets
/// `words_per_doc` distinct pool markers appended (at least one new to it
/// under `guarantee_novel`) or, with `censor_probability`, loses every
/// pool marker it had. The choice of documents depends only on the seed,
/// the target year, `n`, and `f`.
pub fn inject_markers(corpus: &mut [Document], spec: &InjectionSpec, seed: u64) -> Result<InjectionTruth, SynthError> {
    spec.validate()?;
    let eligible: Vec<usize> = corpus
        .iter()
        .enumerate()
        .filter(|(_, d)| d.year == spec.target_year && spec.only.as_ref().is_none_or(|p| p.matches(d)))
        .map(|(i, _)| i)
        .collect();
    if !corpus.iter().any(|d| d.year == spec.target_year) {
        return Err(SynthError::MissingYear(spec.target_year));
    }
    let n = eligible.len();
    let m = (spec.fraction * n as f64).round() as usize;
    let mut chosen: Vec<usize> = index::sample(&mut year_rng(seed, spec.target_year, SELECT), n, m).into_vec();
    chosen.sort_unstable();
    let mut rng = year_rng(seed, spec.target_year, MARK);
    let pool: BTreeSet<&str> = spec.marker_pool.iter().map(String::as_str).collect();
    let pool: Vec<&str> = pool.into_iter().collect();
    let mut truth = InjectionTruth::default();
    for c in chosen {
        let doc = &mut corpus[eligible[c]];
        truth.processed.insert(doc.id.clone());
        if spec.censor_probability > 0.0 && rng.random::<f64>() < spec.censor_probability {
            let kept: Vec<&str> = doc
                .text
                .split(' ')
                .filter(|chunk| !tokens_of(chunk).iter().any(|t| pool.contains(&t.as_str())))
                .collect();
            doc.text = kept.join(" ");
            truth.censored.insert(doc.id.clone());
            continue;
        }
        let present = tokens_of(&doc.text);
        let k = spec.words_per_doc.min(pool.len());
        let mut picks: Vec<&str> = Vec::with_capacity(k);
        if spec.guarantee_novel {
            let novel: Vec<&str> = pool.iter().copied().filter(|w| !present.contains(*w)).collect();
            let first = *novel.get(rng.random_range(0..novel.len().max(1))).ok_or_else(|| SynthError::PoolExhausted {
                id: doc.id.clone(),
            })?;
            picks.push(first);
        }
        let rest: Vec<&str> = pool.iter().copied().filter(|w| !picks.contains(w)).collect();
        for i in index::sample(&mut rng, rest.len(), k - picks.len()) {
            picks.push(rest[i]);
        }
        for w in picks {
            doc.text.push(' ');
            doc.text.push_str(w);
        }
    }
    Ok(truth)
}

/// Writes `id,injected` for every document.
pub fn write_truth_csv<W: Write>(out: W, corpus: &[Document], truth: &InjectionTruth) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "injected"])?;
    for d in corpus {
        w.write_record([d.id.as_str(), if truth.processed.contains(&d.id) { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

pub const ORACLE_LIMIT: usize = 10_000;

fn check_size(corpus: &[Document]) -> Result<(), SynthError> {
    if corpus.len() > ORACLE_LIMIT {
        return Err(SynthError::TooLarge {
            n: corpus.len(),
            limit: ORACLE_LIMIT,
        });
    }
    Ok(())
}

/// Naive occurrence counts: for every document and every word, a linear
/// scan of the document's tokens. Years are those present in the corpus.
pub fn oracle_counts(corpus: &[Document], words: &[String]) -> Result<OccurrenceMatrix, SynthError> {
    check_size(corpus)?;
    let years: Vec<i32> = corpus.iter().map(|d| d.year).collect::<BTreeSet<_>>().into_iter().collect();
    let mut words: Vec<String> = words.to_vec();
    words.sort();
    words.dedup();
    let ny = years.len();
    let mut counts = vec![0u64; words.len() * ny];
    let mut totals = vec![0u64; ny];
    for d in corpus {
        let y = years.iter().position(|&x| x == d.year).expect("year collected above");
        totals[y] += 1;
        let toks: Vec<String> = d
            .text
            .split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .map(str::to_lowercase)
            .collect();
        for (w, word) in words.iter().enumerate() {
            if toks.iter().any(|t| t == word) {
                counts[w * ny + y] += 1;
            }
        }
    }
    OccurrenceMatrix::from_parts(years, words, counts, totals).map_err(|e| SynthError::Spec(e.to_string()))
}

/// Naive containment counts over the given years.
pub fn oracle_containment(corpus: &[Document], set: &BTreeSet<String>, years: &[i32]) -> Result<ContainmentCounts, SynthError> {
    check_size(corpus)?;
    let mut c = ContainmentCounts::zeros(years.to_vec());
    for d in corpus {
        let Some(y) = years.iter().position(|&x| x == d.year) else {
            continue;
        };
        c.totals[y] += 1;
        let hit = d
            .text
            .split(|ch: char| !(ch.is_alphanumeric() || ch == '_'))
            .any(|t| set.contains(&t.to_lowercase()));
        if hit {
            c.hits[y] += 1;
        }
    }
    Ok(c)
}
