//! Marker-set gaps: the set-level frequency gap, the rare-set threshold
//! sweep, the combined estimate, subgroup tables, and neighbourhood gaps
//! over 2D embeddings.

mod local;
mod subgroup;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::count::{for_each_token, parse_word_list, ContainmentCounts, CountError, MarkerProfile};
use crate::excess::{counterfactual, smoothed_frequency, AnnotationTable, ExcessCensus, ExcessError, Label};
use crate::ingest::Document;

pub use local::{
    join_points, local_delta, read_points_csv, write_local_delta_csv, EmbeddedPoint, LocalDelta, LocalDeltaReport,
    PointRow,
};
pub use subgroup::{
    parse_subgroup_specs, subgroup_gaps, subgroup_years, write_gaps_csv, Eligibility, Predicate, SubgroupPass, SubgroupRow,
    SubgroupSpec,
};

const COMMON_MARKERS: &str = include_str!("../../data/common_markers.txt");
const COVID_MARKERS: &str = include_str!("../../data/covid_markers.txt");

#[derive(Debug, thiserror::Error)]
pub enum MarkerError {
    #[error("marker set {0:?} is empty")]
    EmptySet(String),
    #[error("no containment counts for year {0}")]
    MissingYear(i32),
    #[error("SETS_OVERLAP: rare and common sets share {0:?}")]
    SetsOverlap(Vec<String>),
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("subgroup specs: {0}")]
    Spec(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("point {id}: non-finite coordinates")]
    NonFinite { id: String },
    #[error("points line {line}: {message}")]
    Points { line: usize, message: String },
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Excess(#[from] ExcessError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SetKind {
    Rare,
    Common,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub name: String,
    pub words: BTreeSet<String>,
    pub kind: SetKind,
}

impl MarkerSet {
    pub fn new<I, S>(name: &str, kind: SetKind, words: I) -> Result<Self, MarkerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).collect();
        if words.is_empty() {
            return Err(MarkerError::EmptySet(name.to_string()));
        }
        Ok(MarkerSet {
            name: name.to_string(),
            words,
            kind,
        })
    }

    /// One word per line, `#` comments.
    pub fn parse(name: &str, kind: SetKind, src: &str) -> Result<Self, MarkerError> {
        MarkerSet::new(name, kind, parse_word_list(src))
    }

    pub fn load(path: &Path, kind: SetKind) -> Result<Self, MarkerError> {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("markers");
        MarkerSet::parse(name, kind, &std::fs::read_to_string(path)?)
    }

    /// The shipped ten-word common set.
    pub fn default_common() -> Self {
        MarkerSet::parse("common", SetKind::Common, COMMON_MARKERS).expect("shipped set is non-empty")
    }

    /// The shipped pandemic comparison set.
    pub fn covid() -> Self {
        MarkerSet::parse("covid", SetKind::Custom, COVID_MARKERS).expect("shipped set is non-empty")
    }

    /// Whether any token of `text` is in the set.
    pub fn matches(&self, text: &str) -> bool {
        let mut hit = false;
        for_each_token(text, |t| {
            if !hit && self.words.contains(t) {
                hit = true;
            }
        });
        hit
    }
}

/// Set-level gap for one target year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub year: i32,
    /// Observed smoothed containment fraction.
    pub p: f64,
    /// Counterfactual containment fraction.
    pub q: f64,
    pub delta: f64,
    pub hits: u64,
    pub n_docs: u64,
}

fn fraction(counts: &ContainmentCounts, year: i32) -> Result<(f64, u64, u64), MarkerError> {
    let (hits, total) = counts.get(year).ok_or(MarkerError::MissingYear(year))?;
    Ok((smoothed_frequency(hits, total)?, hits, total))
}

/// Δ = P − Q with P the smoothed fraction of target-year documents
/// containing any marker and Q projected from years Y−3 and Y−2 exactly as
/// for single words. Negative values are returned unchanged.
pub fn gap(counts: &ContainmentCounts, year: i32) -> Result<GapResult, MarkerError> {
    let (p, hits, n_docs) = fraction(counts, year)?;
    let (p3, _, _) = fraction(counts, year - 3)?;
    let (p2, _, _) = fraction(counts, year - 2)?;
    let q = counterfactual(p3, p2);
    Ok(GapResult {
        year,
        p,
        q,
        delta: p - q,
        hits,
        n_docs,
    })
}

/// Raw between-year difference of containment fractions (no projection).
pub fn year_difference(counts: &ContainmentCounts, reference_year: i32, target_year: i32) -> Result<f64, MarkerError> {
    let (a, _, _) = fraction(counts, reference_year)?;
    let (b, _, _) = fraction(counts, target_year)?;
    Ok(b - a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub n_words: usize,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub year: i32,
    /// Points in threshold order; thresholds below every candidate are
    /// omitted.
    pub points: Vec<SweepPoint>,
}

impl Sweep {
    /// Point with the largest Δ; the smaller threshold wins ties.
    pub fn best(&self) -> Option<&SweepPoint> {
        self.points.iter().fold(None, |best: Option<&SweepPoint>, pt| match best {
            Some(b) if b.delta >= pt.delta => Some(b),
            _ => Some(pt),
        })
    }
}

/// `{1, 1.5, 2, 3, 5, 7} × 10^k` for k = −4…−1, then 1.
pub fn default_sweep_thresholds() -> Vec<f64> {
    let mut out = Vec::new();
    for k in -4..=-1 {
        for m in ["1", "1.5", "2", "3", "5", "7"] {
            out.push(format!("{m}e{k}").parse().expect("valid literal"));
        }
    }
    out.push(1.0);
    out
}

/// Δ as a function of the frequency threshold T, where each point uses the
/// candidates with target-year frequency below T.
pub fn rare_sweep(profile: &MarkerProfile, thresholds: &[f64], year: i32) -> Result<Sweep, MarkerError> {
    if profile.candidates().is_empty() {
        return Err(MarkerError::EmptyCandidates);
    }
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut points = Vec::new();
    for t in thresholds {
        let n_words = profile.words_below(t);
        if n_words == 0 {
            continue;
        }
        let g = gap(&profile.containment_below(t), year)?;
        points.push(SweepPoint {
            threshold: t,
            n_words,
            p: g.p,
            q: g.q,
            delta: g.delta,
        });
    }
    Ok(Sweep { year, points })
}

/// Target-year frequencies of excess words labelled as style.
pub fn rare_candidates(census: &ExcessCensus, annotations: &AnnotationTable) -> BTreeMap<String, f64> {
    census
        .excess()
        .filter(|s| annotations.get(&s.word).is_some_and(|a| a.label == Label::Style))
        .map(|s| (s.word.clone(), s.p))
        .collect()
}

/// Mean of the rare-set and common-set gaps; the sets must be disjoint.
pub fn combined_estimate(
    rare: &MarkerSet,
    common: &MarkerSet,
    delta_rare: f64,
    delta_common: f64,
) -> Result<f64, MarkerError> {
    let shared: Vec<String> = rare.words.intersection(&common.words).cloned().collect();
    if !shared.is_empty() {
        return Err(MarkerError::SetsOverlap(shared));
    }
    Ok((delta_rare + delta_common) / 2.0)
}

/// Greedy construction of a marker set: repeatedly adds the candidate that
/// most increases the set-level Δ, stopping at `max_size` or when no
/// candidate increases it.
pub fn greedy_marker_set(
    docs: &[Document],
    candidates: &[String],
    year: i32,
    max_size: usize,
) -> Result<Vec<(String, f64)>, MarkerError> {
    if candidates.is_empty() {
        return Err(MarkerError::EmptyCandidates);
    }
    let years = [year - 3, year - 2, year];
    let index: HashMap<&str, usize> = candidates.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    // Per relevant document: year slot and contained candidate indices.
    let mut members: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut totals = [0u64; 3];
    for d in docs {
        let Some(slot) = years.iter().position(|&y| y == d.year) else {
            continue;
        };
        totals[slot] += 1;
        let mut hit = Vec::new();
        for_each_token(&d.text, |t| {
            if let Some(&i) = index.get(t) {
                hit.push(i);
            }
        });
        hit.sort_unstable();
        hit.dedup();
        if !hit.is_empty() {
            members.push((slot, hit));
        }
    }
    let delta_of = |hits: [u64; 3]| -> Result<f64, MarkerError> {
        let f = |s: usize| smoothed_frequency(hits[s], totals[s]);
        let (p3, p2, p) = (f(0)?, f(1)?, f(2)?);
        Ok(p - counterfactual(p3, p2))
    };
    let mut covered = vec![false; members.len()];
    let mut chosen = vec![false; candidates.len()];
    let mut hits = [0u64; 3];
    let mut current = delta_of(hits)?;
    let mut out = Vec::new();
    while out.len() < max_size {
        let mut gain = vec![[0u64; 3]; candidates.len()];
        for (m, (slot, hit)) in members.iter().enumerate() {
            if covered[m] {
                continue;
            }
            for &c in hit {
                gain[c][*slot] += 1;
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for c in 0..candidates.len() {
            if chosen[c] {
                continue;
            }
            let h = [hits[0] + gain[c][0], hits[1] + gain[c][1], hits[2] + gain[c][2]];
            let d = delta_of(h)?;
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((c, d));
            }
        }
        let Some((c, d)) = best else { break };
        if d <= current {
            break;
        }
        chosen[c] = true;
        for s in 0..3 {
            hits[s] += gain[c][s];
        }
        for (m, (_, hit)) in members.iter().enumerate() {
            if !covered[m] && hit.contains(&c) {
                covered[m] = true;
            }
        }
        current = d;
        out.push((candidates[c].clone(), d));
    }
    Ok(out)
}

/// `T,n_words,P,Q,delta`.
pub fn write_sweep_csv<W: Write>(out: W, sweep: &Sweep) -> Result<(), MarkerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T", "n_words", "P", "Q", "delta"])?;
    for p in &sweep.points {
        w.write_record([
            p.threshold.to_string(),
            p.n_words.to_string(),
            p.p.to_string(),
            p.q.to_string(),
            p.delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::count::{containment_counts, min_marker_frequency_profile, YearMode};

    fn counts(years: &[i32], hits: &[u64], totals: &[u64]) -> ContainmentCounts {
        ContainmentCounts {
            years: years.to_vec(),
            hits: hits.to_vec(),
            totals: totals.to_vec(),
            out_of_range: 0,
        }
    }

    #[test]
    fn gap_arithmetic() {
        let c = counts(&[2021, 2022, 2023, 2024], &[99, 149, 0, 299], &[9999; 4]);
        let g = gap(&c, 2024).unwrap();
        assert!((g.q - 0.025).abs() < 1e-12);
        assert!((g.p - 0.03).abs() < 1e-12);
        assert_eq!(g.delta, g.p - g.q);
        assert!(matches!(gap(&c, 2023), Err(MarkerError::MissingYear(2020))));
    }

    #[test]
    fn absent_words_give_zero_gap() {
        let c = counts(&[2021, 2022, 2023, 2024], &[0; 4], &[500; 4]);
        let g = gap(&c, 2024).unwrap();
        assert_eq!(g.p, g.q);
        assert_eq!(g.delta, 0.0);
    }

    #[test]
    fn combined() {
        let rare = MarkerSet::new("rare", SetKind::Rare, ["delves"]).unwrap();
        let common = MarkerSet::default_common();
        assert!((combined_estimate(&rare, &common, 0.136, 0.134).unwrap() - 0.135).abs() < 1e-12);
        assert_eq!(combined_estimate(&rare, &common, 0.2, 0.2).unwrap(), 0.2);
        let bad = MarkerSet::new("rare", SetKind::Rare, ["crucial", "delves"]).unwrap();
        assert!(matches!(
            combined_estimate(&bad, &common, 0.1, 0.1),
            Err(MarkerError::SetsOverlap(w)) if w == ["crucial"]
        ));
    }

    #[test]
    fn shipped_sets() {
        let c = MarkerSet::default_common();
        assert_eq!(c.words.len(), 10);
        assert!(c.words.contains("notably"));
        assert_eq!(MarkerSet::covid().words.len(), 4);
        assert!(MarkerSet::new("x", SetKind::Custom, Vec::<String>::new()).is_err());
    }

    #[test]
    fn thresholds() {
        let t = default_sweep_thresholds();
        assert_eq!(t.len(), 25);
        assert_eq!(t[0], 1e-4);
        assert_eq!(t[1], 1.5e-4);
        assert!(t.contains(&0.02));
        assert_eq!(*t.last().unwrap(), 1.0);
    }

    fn toy_docs() -> Vec<Document> {
        let mut docs = Vec::new();
        let mut id = 0;
        for (year, texts) in [
            (2021, vec!["plain", "plain", "aaaa", "plain"]),
            (2022, vec!["plain", "aaaa", "plain", "plain"]),
            (2023, vec!["plain", "plain", "plain", "plain"]),
            (2024, vec!["aaaa bbbb", "bbbb", "cccc", "plain"]),
        ] {
            for t in texts {
                id += 1;
                docs.push(Document::new(id.to_string(), year, t));
            }
        }
        docs
    }

    #[test]
    fn sweep_matches_direct_gaps() {
        let docs = toy_docs();
        let cands: BTreeMap<String, f64> =
            [("aaaa".into(), 0.01), ("bbbb".into(), 0.02), ("cccc".into(), 0.05)].into();
        let years = vec![2021, 2022, 2023, 2024];
        let prof = min_marker_frequency_profile(&docs, &cands, years.clone(), YearMode::Strict).unwrap();
        let sweep = rare_sweep(&prof, &[0.001, 0.015, 0.03, 0.1], 2024).unwrap();
        assert_eq!(sweep.points.len(), 3, "threshold below all candidates is skipped");
        for pt in &sweep.points {
            let subset: BTreeSet<String> = cands.iter().filter(|(_, &f)| f < pt.threshold).map(|(w, _)| w.clone()).collect();
            let direct = gap(&containment_counts(&docs, &subset, years.clone(), YearMode::Strict).unwrap(), 2024).unwrap();
            assert_eq!(pt.delta, direct.delta);
            assert_eq!(pt.n_words, subset.len());
        }
        assert_eq!(sweep.best().unwrap().threshold, 0.1);
    }

    #[test]
    fn sweep_p_monotone_in_threshold() {
        let docs = toy_docs();
        let cands: BTreeMap<String, f64> =
            [("aaaa".into(), 0.01), ("bbbb".into(), 0.02), ("cccc".into(), 0.05)].into();
        let prof = min_marker_frequency_profile(&docs, &cands, vec![2021, 2022, 2023, 2024], YearMode::Strict).unwrap();
        let sweep = rare_sweep(&prof, &default_sweep_thresholds(), 2024).unwrap();
        assert!(sweep.points.windows(2).all(|w| w[0].p <= w[1].p));
    }

    #[test]
    fn greedy_prefers_new_words() {
        let docs = toy_docs();
        let cands: Vec<String> = ["aaaa", "bbbb", "cccc", "plain"].iter().map(|s| s.to_string()).collect();
        let picked = greedy_marker_set(&docs, &cands, 2024, 3).unwrap();
        assert_eq!(picked[0].0, "bbbb");
        assert!(picked.windows(2).all(|w| w[0].1 < w[1].1));
        assert!(picked.iter().all(|(w, _)| w != "plain"));
    }
}
