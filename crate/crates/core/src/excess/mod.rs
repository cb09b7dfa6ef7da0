//! Per-word excess statistics for a target year: smoothed frequencies,
//! counterfactual projection, gap and ratio, excess classification, lemma
//! collapsing, and annotation joins.

mod annotations;
mod lemma;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::count::{is_eligible_word, OccurrenceMatrix};

pub use annotations::{Annotation, AnnotationTable, Label, Pos};
pub use lemma::{lemma_set, Lemmatizer};

#[derive(Debug, thiserror::Error)]
pub enum ExcessError {
    #[error("count {a} exceeds total {b}")]
    CountExceedsTotal { a: u64, b: u64 },
    #[error("WORD_UNKNOWN: {0:?} is not in the matrix")]
    WordUnknown(String),
    #[error("matrix has no column for year {0}")]
    MissingYear(i32),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("{what} line {line}: {message}")]
    Format { what: String, line: usize, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// How raw counts become frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// `(a+1)/(b+1)`.
    #[default]
    AddOne,
    /// `a/b`; only for tests of scale invariance.
    None,
}

impl Smoothing {
    pub fn frequency(self, a: u64, b: u64) -> Result<f64, ExcessError> {
        if a > b {
            return Err(ExcessError::CountExceedsTotal { a, b });
        }
        Ok(match self {
            Smoothing::AddOne => (a as f64 + 1.0) / (b as f64 + 1.0),
            Smoothing::None => a as f64 / b as f64,
        })
    }
}

/// `(a+1)/(b+1)`.
pub fn smoothed_frequency(a: u64, b: u64) -> Result<f64, ExcessError> {
    Smoothing::AddOne.frequency(a, b)
}

/// Linear extrapolation two years ahead of `p_minus2`, never below it,
/// capped at 1.
pub fn counterfactual(p_minus3: f64, p_minus2: f64) -> f64 {
    (p_minus2 + 2.0 * (p_minus2 - p_minus3).max(0.0)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcessThresholds {
    pub delta_min: f64,
    /// Slope of the ratio line in log₁₀r versus log₁₀p.
    pub ratio_line_slope: f64,
    /// log₁₀r of the ratio line at p = 1.
    pub ratio_line_intercept: f64,
    /// Minimum frequency in both the target year and the year before.
    pub eligibility_min_freq: f64,
}

impl Default for ExcessThresholds {
    fn default() -> Self {
        ExcessThresholds {
            delta_min: 0.01,
            ratio_line_slope: -std::f64::consts::LOG10_2 / 4.0,
            ratio_line_intercept: 0.0,
            eligibility_min_freq: 1e-4,
        }
    }
}

impl ExcessThresholds {
    pub fn validate(&self) -> Result<(), ExcessError> {
        if !(self.delta_min > 0.0) {
            return Err(ExcessError::Thresholds(format!("delta_min {} must be > 0", self.delta_min)));
        }
        if !(self.eligibility_min_freq > 0.0) {
            return Err(ExcessError::Thresholds(format!(
                "eligibility_min_freq {} must be > 0",
                self.eligibility_min_freq
            )));
        }
        if !self.ratio_line_slope.is_finite() || !self.ratio_line_intercept.is_finite() {
            return Err(ExcessError::Thresholds("ratio line must be finite".into()));
        }
        Ok(())
    }

    /// Ratio a word of frequency `p` must exceed to count as excess.
    pub fn ratio_threshold(&self, p: f64) -> f64 {
        10f64.powf(self.log_ratio_threshold(p))
    }

    fn log_ratio_threshold(&self, p: f64) -> f64 {
        self.ratio_line_intercept + self.ratio_line_slope * p.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExcessVia {
    Gap,
    Ratio,
    Both,
    None,
}

impl ExcessVia {
    pub fn as_str(self) -> &'static str {
        match self {
            ExcessVia::Gap => "GAP",
            ExcessVia::Ratio => "RATIO",
            ExcessVia::Both => "BOTH",
            ExcessVia::None => "NONE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordYearStats {
    pub word: String,
    pub year: i32,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub ratio: f64,
    /// Frequency in the year before the target year.
    pub p_prev: f64,
    pub p_minus2: f64,
    pub p_minus3: f64,
    /// Above the eligibility frequency in the target and previous year.
    pub eligible: bool,
    pub excess: bool,
    pub excess_via: ExcessVia,
}

/// Classifies a (p, δ, r) triple. Both comparisons are strict.
pub fn classify(p: f64, delta: f64, ratio: f64, t: &ExcessThresholds) -> ExcessVia {
    let gap = delta > t.delta_min;
    let by_ratio = ratio.log10() > t.log_ratio_threshold(p);
    match (gap, by_ratio) {
        (true, true) => ExcessVia::Both,
        (true, false) => ExcessVia::Gap,
        (false, true) => ExcessVia::Ratio,
        (false, false) => ExcessVia::None,
    }
}

/// Excess decision for stats already known to be eligible.
pub fn is_excess(stats: &WordYearStats, t: &ExcessThresholds) -> (bool, ExcessVia) {
    let via = classify(stats.p, stats.delta, stats.ratio, t);
    (via != ExcessVia::None, via)
}

/// Column indices for Y, Y−1, Y−2, Y−3.
#[derive(Debug, Clone, Copy)]
struct YearCols {
    y: usize,
    y1: usize,
    y2: usize,
    y3: usize,
}

impl YearCols {
    fn new(m: &OccurrenceMatrix, year: i32) -> Result<Self, ExcessError> {
        let col = |yr: i32| m.year_index(yr).ok_or(ExcessError::MissingYear(yr));
        Ok(YearCols {
            y: col(year)?,
            y1: col(year - 1)?,
            y2: col(year - 2)?,
            y3: col(year - 3)?,
        })
    }
}

fn stats_for_row(
    m: &OccurrenceMatrix,
    word_idx: usize,
    year: i32,
    cols: YearCols,
    t: &ExcessThresholds,
    smoothing: Smoothing,
) -> Result<WordYearStats, ExcessError> {
    let row = m.row(word_idx);
    let totals = m.totals();
    let f = |c: usize| smoothing.frequency(row[c], totals[c]);
    let (p, p_prev, p_minus2, p_minus3) = (f(cols.y)?, f(cols.y1)?, f(cols.y2)?, f(cols.y3)?);
    let q = counterfactual(p_minus3, p_minus2);
    let delta = p - q;
    let ratio = p / q;
    let eligible = p > t.eligibility_min_freq && p_prev > t.eligibility_min_freq;
    let excess_via = if eligible {
        classify(p, delta, ratio, t)
    } else {
        ExcessVia::None
    };
    Ok(WordYearStats {
        word: m.words()[word_idx].clone(),
        year,
        p,
        q,
        delta,
        ratio,
        p_prev,
        p_minus2,
        p_minus3,
        eligible,
        excess: excess_via != ExcessVia::None,
        excess_via,
    })
}

/// Statistics of one word for target year `year`, extrapolating from
/// `year−3` and `year−2`. Ineligible words get `excess = false`.
pub fn word_year_stats(
    m: &OccurrenceMatrix,
    word: &str,
    year: i32,
    t: &ExcessThresholds,
    smoothing: Smoothing,
) -> Result<WordYearStats, ExcessError> {
    let idx = m.word_index(word).ok_or_else(|| ExcessError::WordUnknown(word.to_string()))?;
    stats_for_row(m, idx, year, YearCols::new(m, year)?, t, smoothing)
}

/// All eligible words for one target year, sorted by ratio descending
/// (ties by word).
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessCensus {
    pub year: i32,
    pub stats: Vec<WordYearStats>,
}

impl ExcessCensus {
    pub fn eligible_count(&self) -> usize {
        self.stats.len()
    }

    pub fn excess(&self) -> impl Iterator<Item = &WordYearStats> {
        self.stats.iter().filter(|s| s.excess)
    }

    pub fn excess_count(&self) -> usize {
        self.excess().count()
    }

    /// Number of excess words per annotation label; unannotated words are
    /// counted under `unannotated`.
    pub fn label_counts(&self, annotations: &AnnotationTable) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for s in self.excess() {
            let key = annotations
                .get(&s.word)
                .map_or("unannotated", |a| a.label.as_str());
            *out.entry(key.to_string()).or_default() += 1;
        }
        out
    }
}

fn by_ratio_desc(a: &WordYearStats, b: &WordYearStats) -> std::cmp::Ordering {
    b.ratio.total_cmp(&a.ratio).then_with(|| a.word.cmp(&b.word))
}

/// Classifies every eligible word (four or more letters a–z, frequency
/// above the threshold in the target and previous year).
pub fn excess_words(
    m: &OccurrenceMatrix,
    year: i32,
    t: &ExcessThresholds,
    smoothing: Smoothing,
) -> Result<ExcessCensus, ExcessError> {
    t.validate()?;
    let cols = YearCols::new(m, year)?;
    let results: Result<Vec<Option<WordYearStats>>, ExcessError> = (0..m.words().len())
        .into_par_iter()
        .map(|i| {
            if !is_eligible_word(&m.words()[i]) {
                return Ok(None);
            }
            let s = stats_for_row(m, i, year, cols, t, smoothing)?;
            Ok(s.eligible.then_some(s))
        })
        .collect();
    let mut stats: Vec<WordYearStats> = results?.into_iter().flatten().collect();
    stats.par_sort_unstable_by(by_ratio_desc);
    Ok(ExcessCensus { year, stats })
}

/// Distinct lemmas among excess words, overall and per label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LemmaCounts {
    pub total: usize,
    pub per_label: BTreeMap<String, usize>,
}

/// Counts distinct lemmas of `words`. A lemma is attributed to a label if
/// any of its words carries that label.
pub fn unique_lemma_count<'a>(
    words: impl IntoIterator<Item = &'a str>,
    lemmatizer: &Lemmatizer,
    annotations: Option<&AnnotationTable>,
) -> LemmaCounts {
    let mut by_label: BTreeMap<String, std::collections::BTreeSet<String>> = BTreeMap::new();
    let mut all = std::collections::BTreeSet::new();
    for w in words {
        let lemma = lemmatizer.lemmatize(w);
        if let Some(a) = annotations.and_then(|t| t.get(w)) {
            by_label.entry(a.label.as_str().to_string()).or_default().insert(lemma.clone());
        }
        all.insert(lemma);
    }
    LemmaCounts {
        total: all.len(),
        per_label: by_label.into_iter().map(|(k, v)| (k, v.len())).collect(),
    }
}

/// Highest-ratio word with `p > p_min` and `ratio > r_min`; ties go to the
/// lexicographically smaller word.
pub fn representative_word<'a>(
    stats: impl IntoIterator<Item = &'a WordYearStats>,
    p_min: f64,
    r_min: f64,
) -> Option<&'a WordYearStats> {
    stats
        .into_iter()
        .filter(|s| s.p > p_min && s.ratio > r_min)
        .min_by(|a, b| by_ratio_desc(a, b))
}

pub const REPRESENTATIVE_P_MIN: f64 = 0.0015;
pub const REPRESENTATIVE_R_MIN: f64 = 3.0;

/// Writes `word,year,p,q,delta,ratio,excess,excess_via,label,pos,lemma`.
pub fn write_stats_csv<'a, W: Write>(
    out: W,
    stats: impl IntoIterator<Item = &'a WordYearStats>,
    annotations: Option<&AnnotationTable>,
    lemmatizer: &Lemmatizer,
) -> Result<(), ExcessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["word", "year", "p", "q", "delta", "ratio", "excess", "excess_via", "label", "pos", "lemma"])?;
    for s in stats {
        let ann = annotations.and_then(|t| t.get(&s.word));
        w.write_record([
            s.word.as_str(),
            &s.year.to_string(),
            &s.p.to_string(),
            &s.q.to_string(),
            &s.delta.to_string(),
            &s.ratio.to_string(),
            if s.excess { "1" } else { "0" },
            s.excess_via.as_str(),
            ann.map_or("", |a| a.label.as_str()),
            ann.and_then(|a| a.pos).map_or("", Pos::as_str),
            &lemmatizer.lemmatize(&s.word),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One bar of the excess-words-per-year chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearSummary {
    pub year: i32,
    pub eligible: usize,
    pub excess: usize,
    pub content: usize,
    pub style: usize,
    pub ambiguous: usize,
    pub unannotated: usize,
    pub lemmas: usize,
    pub content_lemmas: usize,
    pub style_lemmas: usize,
    pub representative: Option<String>,
    pub representative_ratio: Option<f64>,
}

pub fn summarize_year(census: &ExcessCensus, annotations: &AnnotationTable, lemmatizer: &Lemmatizer) -> YearSummary {
    let labels = census.label_counts(annotations);
    let get = |k: &str| labels.get(k).copied().unwrap_or(0);
    let lemmas = unique_lemma_count(census.excess().map(|s| s.word.as_str()), lemmatizer, Some(annotations));
    let lget = |k: &str| lemmas.per_label.get(k).copied().unwrap_or(0);
    let rep = representative_word(census.excess(), REPRESENTATIVE_P_MIN, REPRESENTATIVE_R_MIN);
    YearSummary {
        year: census.year,
        eligible: census.eligible_count(),
        excess: census.excess_count(),
        content: get("content"),
        style: get("style"),
        ambiguous: get("ambiguous"),
        unannotated: get("unannotated"),
        lemmas: lemmas.total,
        content_lemmas: lget("content"),
        style_lemmas: lget("style"),
        representative: rep.map(|s| s.word.clone()),
        representative_ratio: rep.map(|s| s.ratio),
    }
}

pub fn write_year_summaries<W: Write>(out: W, rows: &[YearSummary]) -> Result<(), ExcessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
