//! Binary document-term counting: tokenization, vocabulary construction,
//! the word×year occurrence matrix, and set-containment passes.

mod matrix;
mod passes;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::Document;

pub use matrix::{read_matrix, read_matrix_file, write_matrix, write_matrix_file, OccurrenceMatrix};
pub use passes::{
    containment_counts, count_occurrences, count_occurrences_sharded, doc_min_frequency,
    min_marker_frequency_profile, ContainmentCounts, ContainmentPass, MarkerProfile, OccurrencePass, ProfileAcc,
    ProfilePass, ShardedPass, YearMode,
};

#[derive(Debug, thiserror::Error)]
pub enum CountError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("document {id}: year {year} outside matrix range {lo}..={hi}")]
    YearOutOfRange { id: String, year: i32, lo: i32, hi: i32 },
    #[error("mismatched {0} between matrices")]
    Mismatch(&'static str),
    #[error("MISSING_TOTALS: matrix has no final `total` row")]
    MissingTotals,
    #[error("shape mismatch at line {line}: expected {expected} cells, found {found}")]
    Shape { line: usize, expected: usize, found: usize },
    #[error("non-integer cell at line {line}, column {column}: {value:?}")]
    NonInteger { line: usize, column: usize, value: String },
    #[error("invalid matrix: {0}")]
    Invalid(String),
    #[error("empty word set")]
    EmptyWordSet,
    #[error("candidate {word}: frequency {freq} outside (0, 1]")]
    BadFrequency { word: String, freq: f64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Calls `f` with every lowercased token of `text`, in order, duplicates
/// included. Tokens are maximal runs of alphanumeric characters or `_`.
pub fn for_each_token(text: &str, mut f: impl FnMut(&str)) {
    let mut buf = String::new();
    let mut start = None;
    let flush = |s: &str, buf: &mut String, f: &mut dyn FnMut(&str)| {
        if s.is_ascii() {
            if s.bytes().any(|b| b.is_ascii_uppercase()) {
                buf.clear();
                buf.push_str(s);
                buf.make_ascii_lowercase();
                f(buf);
            } else {
                f(s);
            }
        } else {
            buf.clear();
            buf.extend(s.chars().flat_map(char::to_lowercase));
            f(buf);
        }
    };
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            flush(&text[s..i], &mut buf, &mut f);
        }
    }
    if let Some(s) = start {
        flush(&text[s..], &mut buf, &mut f);
    }
}

/// Lowercased set of distinct tokens. Tokens with digits, non-ASCII letters,
/// or fewer than four characters are kept here and removed by the
/// vocabulary filter.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for_each_token(text, |t| {
        if !out.contains(t) {
            out.insert(t.to_string());
        }
    });
    out
}

/// At least four characters, all in `a`–`z`.
pub fn is_eligible_word(word: &str) -> bool {
    word.len() >= 4 && word.bytes().all(|b| b.is_ascii_lowercase())
}

/// Which tokens may enter a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabFilter {
    /// Four or more letters a–z (the analysis vocabulary).
    #[default]
    Eligible,
    /// Every token of two or more characters, mirroring the layout of a
    /// full token matrix; eligibility is then applied at analysis time.
    AllTokens,
}

impl VocabFilter {
    pub fn accepts(self, token: &str) -> bool {
        match self {
            VocabFilter::Eligible => is_eligible_word(token),
            VocabFilter::AllTokens => token.chars().nth(1).is_some(),
        }
    }
}

/// Sorted word list with an index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words.into_iter().map(Into::into).collect();
        let words: Vec<String> = set.into_iter().collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary { words, index }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// Document-frequency table over all tokens accepted by a filter.
#[derive(Debug, Clone, Default)]
pub struct DocFrequencies {
    pub n_docs: u64,
    pub df: HashMap<String, u64>,
}

impl DocFrequencies {
    pub fn add(&mut self, doc: &Document, filter: VocabFilter) {
        self.n_docs += 1;
        let mut seen: Vec<String> = Vec::new();
        for_each_token(&doc.text, |t| {
            if filter.accepts(t) {
                seen.push(t.to_string());
            }
        });
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *self.df.entry(t).or_default() += 1;
        }
    }

    pub fn merge(mut self, other: DocFrequencies) -> DocFrequencies {
        let (mut big, small) = if self.df.len() >= other.df.len() {
            (std::mem::take(&mut self.df), other.df)
        } else {
            (other.df, std::mem::take(&mut self.df))
        };
        for (k, v) in small {
            *big.entry(k).or_default() += v;
        }
        DocFrequencies {
            n_docs: self.n_docs + other.n_docs,
            df: big,
        }
    }

    /// Keeps tokens whose document frequency is at least `min_df` of all
    /// documents.
    pub fn into_vocabulary(self, min_df: f64) -> Result<Vocabulary, CountError> {
        if self.n_docs == 0 {
            return Err(CountError::EmptyCorpus);
        }
        let min_count = min_df * self.n_docs as f64;
        Ok(Vocabulary::from_words(
            self.df
                .into_iter()
                .filter(|(_, n)| *n as f64 >= min_count)
                .map(|(w, _)| w),
        ))
    }
}

/// First pass over a corpus: tokens passing `filter` whose document
/// frequency is at least `min_df` (a fraction of all documents).
pub fn build_vocabulary<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    min_df: f64,
    filter: VocabFilter,
) -> Result<Vocabulary, CountError> {
    let mut df = DocFrequencies::default();
    for doc in docs {
        df.add(doc, filter);
    }
    df.into_vocabulary(min_df)
}

/// Parallel variant of [`build_vocabulary`] over an in-memory slice.
pub fn build_vocabulary_parallel(
    docs: &[Document],
    min_df: f64,
    filter: VocabFilter,
) -> Result<Vocabulary, CountError> {
    use rayon::prelude::*;
    let df = docs
        .par_chunks(4096)
        .map(|chunk| {
            let mut df = DocFrequencies::default();
            for d in chunk {
                df.add(d, filter);
            }
            df
        })
        .reduce(DocFrequencies::default, DocFrequencies::merge);
    df.into_vocabulary(min_df)
}

/// Reads a word list (one word per line, `#` comments, blank lines
/// ignored), lowercasing entries.
pub fn parse_word_list(src: &str) -> BTreeSet<String> {
    src.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}
