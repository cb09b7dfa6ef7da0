//! Rule-driven removal of contaminating strings (copyright lines, citation
//! blocks, editor notes) and detection of erratum/retraction notices.
//!
//! Rules live in a TSV file, one per line:
//!
//! ```text
//! # id        anchor    action          pattern
//! copyright   SUFFIX    STRIP_TO_END    (?is)copyright\s*©.*
//! ```
//!
//! Rules are tried in file order and each fires at most once per text, on
//! its first match.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ingest::{Document, RejectReason};

const STARTER_RULES: &str = include_str!("../data/cleaning_rules.tsv");

/// Pseudo rule id recorded when a document is dropped because its title is
/// a correction notice.
pub const CORRECTION_NOTICE_RULE: &str = "correction_notice_title";

#[derive(Debug, thiserror::Error)]
pub enum CleanError {
    #[error("rule {id} (line {line}): invalid pattern: {message}")]
    InvalidPattern { id: String, line: usize, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("rule {id} (line {line}): duplicate rule id")]
    DuplicateId { id: String, line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    StripMatch,
    /// From the match start to the end of the text.
    StripToEnd,
    /// From the start of the text to the match end.
    StripToStart,
    DropDocument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Anchor {
    Anywhere,
    Prefix,
    Suffix,
}

impl Action {
    fn parse(s: &str) -> Option<Action> {
        Some(match s {
            "STRIP_MATCH" => Action::StripMatch,
            "STRIP_TO_END" => Action::StripToEnd,
            "STRIP_TO_START" => Action::StripToStart,
            "DROP_DOCUMENT" => Action::DropDocument,
            _ => return None,
        })
    }
}

impl Anchor {
    fn parse(s: &str) -> Option<Anchor> {
        Some(match s {
            "ANYWHERE" => Anchor::Anywhere,
            "PREFIX" => Anchor::Prefix,
            "SUFFIX" => Anchor::Suffix,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CleaningRule {
    pub id: String,
    pub pattern: String,
    pub action: Action,
    pub anchor: Anchor,
    compiled: Regex,
}

impl CleaningRule {
    pub fn new(id: &str, anchor: Anchor, action: Action, pattern: &str) -> Result<Self, regex::Error> {
        let anchored = match anchor {
            Anchor::Anywhere => pattern.to_string(),
            Anchor::Prefix => format!(r"\A(?:{pattern})"),
            Anchor::Suffix => format!(r"(?:{pattern})\z"),
        };
        Ok(CleaningRule {
            id: id.to_string(),
            pattern: pattern.to_string(),
            action,
            anchor,
            compiled: Regex::new(&anchored)?,
        })
    }

    /// First non-empty match honouring the anchor.
    fn find(&self, text: &str) -> Option<(usize, usize)> {
        self.compiled
            .find_iter(text)
            .find(|m| !m.is_empty())
            .map(|m| (m.start(), m.end()))
    }
}

/// Ordered, immutable rule set.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<CleaningRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<CleaningRule>) -> Self {
        RuleSet { rules }
    }

    pub fn rules(&self) -> &[CleaningRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn starter() -> Self {
        parse_rules(STARTER_RULES).expect("shipped cleaning rules parse")
    }
}

/// Parses the TSV rule format (`id<TAB>anchor<TAB>action<TAB>pattern`).
pub fn parse_rules(src: &str) -> Result<RuleSet, CleanError> {
    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.splitn(4, '\t').collect();
        if cols.len() != 4 {
            return Err(CleanError::Format {
                line: line_no,
                message: "expected 4 tab-separated columns: id, anchor, action, pattern".into(),
            });
        }
        let id = cols[0].trim();
        if id.is_empty() {
            return Err(CleanError::Format {
                line: line_no,
                message: "empty rule id".into(),
            });
        }
        let anchor = Anchor::parse(cols[1].trim()).ok_or_else(|| CleanError::Format {
            line: line_no,
            message: format!("rule {id}: unknown anchor `{}`", cols[1].trim()),
        })?;
        let action = Action::parse(cols[2].trim()).ok_or_else(|| CleanError::Format {
            line: line_no,
            message: format!("rule {id}: unknown action `{}`", cols[2].trim()),
        })?;
        if !seen.insert(id.to_string()) {
            return Err(CleanError::DuplicateId {
                id: id.to_string(),
                line: line_no,
            });
        }
        let rule = CleaningRule::new(id, anchor, action, cols[3]).map_err(|e| CleanError::InvalidPattern {
            id: id.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        rules.push(rule);
    }
    Ok(RuleSet { rules })
}

pub fn load_rules(path: &Path) -> Result<RuleSet, CleanError> {
    parse_rules(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanOutcome {
    pub text: String,
    pub applied: Vec<String>,
    pub dropped: bool,
}

pub fn clean_text(text: &str, rules: &RuleSet) -> CleanOutcome {
    let mut current = text.to_string();
    let mut applied = Vec::new();
    for rule in &rules.rules {
        let Some((start, end)) = rule.find(&current) else {
            continue;
        };
        applied.push(rule.id.clone());
        let next = match rule.action {
            Action::DropDocument => {
                return CleanOutcome {
                    text: current,
                    applied,
                    dropped: true,
                }
            }
            Action::StripMatch => splice(&current[..start], &current[end..]),
            Action::StripToEnd => current[..start].trim().to_string(),
            Action::StripToStart => current[end..].trim().to_string(),
        };
        current = next;
    }
    CleanOutcome {
        text: current,
        applied,
        dropped: false,
    }
}

fn splice(left: &str, right: &str) -> String {
    let left = left.trim();
    let right = right.trim();
    match (left.is_empty(), right.is_empty()) {
        (true, _) => right.to_string(),
        (_, true) => left.to_string(),
        _ => {
            let mut s = String::with_capacity(left.len() + right.len() + 1);
            s.push_str(left);
            s.push(' ');
            s.push_str(right);
            s
        }
    }
}

fn notice_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?ix)
            ^\s*[\[(]?\s*
            (?:
                (?:erratum|errata|corrigendum|corrigenda|addendum)\b
              | expression\s+of\s+concern\s*(?:$|[:.\])\-]|for\b\s*:|regarding\b)
              | notice\s+of\s+(?:retraction|withdrawal|duplicate\s+publication)\b
              | retracted\s*(?:article|paper|publication)?\s*[:.\])]
              | retraction\s*(?:$|[:.\])\-]|to\b|of\s*:|notice\b|note\b|statement\b|for\b\s*:)
              | correction\s*(?:$|[:.\])\-]|to\b|notice\b|note\b|statement\b|in\b\s*:|for\b\s*:)
              | withdrawn\s*(?:$|[:.\])\-]|article\b|paper\b)
              | withdrawal\s*(?:$|[:.\])\-]|notice\b|note\b)
            )",
        )
        .expect("notice pattern compiles")
    })
}

/// True when a title has the form of an erratum, corrigendum, correction,
/// retraction, or withdrawal notice.
pub fn is_correction_notice(title: &str) -> bool {
    notice_pattern().is_match(title)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanDecision {
    Keep { modified: bool },
    Drop { reason: DropReason },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    CorrectionNotice,
    Rule(String),
    Rejected(RejectReason),
}

/// Summary of a cleaning pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub documents_seen: u64,
    pub documents_modified: u64,
    pub documents_dropped: u64,
    pub documents_too_short: u64,
    pub per_rule_counts: BTreeMap<String, u64>,
}

impl CleanReport {
    pub fn absorb(&mut self, other: &CleanReport) {
        self.documents_seen += other.documents_seen;
        self.documents_modified += other.documents_modified;
        self.documents_dropped += other.documents_dropped;
        self.documents_too_short += other.documents_too_short;
        for (k, v) in &other.per_rule_counts {
            *self.per_rule_counts.entry(k.clone()).or_default() += v;
        }
    }
}

/// Cleans one document in place: drops notices by title, applies the rules
/// to the abstract, and re-checks the minimum length (`min_chars`, counted
/// in Unicode scalar values).
pub fn clean_document(
    doc: &mut Document,
    rules: &RuleSet,
    min_chars: usize,
    report: &mut CleanReport,
) -> CleanDecision {
    report.documents_seen += 1;
    if is_correction_notice(&doc.title) {
        report.documents_dropped += 1;
        *report
            .per_rule_counts
            .entry(CORRECTION_NOTICE_RULE.to_string())
            .or_default() += 1;
        return CleanDecision::Drop {
            reason: DropReason::CorrectionNotice,
        };
    }
    let outcome = clean_text(&doc.text, rules);
    for id in &outcome.applied {
        *report.per_rule_counts.entry(id.clone()).or_default() += 1;
    }
    if outcome.dropped {
        report.documents_dropped += 1;
        let id = outcome.applied.last().cloned().unwrap_or_default();
        return CleanDecision::Drop {
            reason: DropReason::Rule(id),
        };
    }
    let modified = !outcome.applied.is_empty();
    if modified {
        report.documents_modified += 1;
        doc.text = outcome.text;
        if doc.char_len() < min_chars {
            report.documents_too_short += 1;
            return CleanDecision::Drop {
                reason: DropReason::Rejected(RejectReason::CleanedTooShort),
            };
        }
    }
    CleanDecision::Keep { modified }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules(src: &str) -> RuleSet {
        parse_rules(src).unwrap()
    }

    #[test]
    fn load_in_order() {
        let rs = rules("# c\na\tANYWHERE\tSTRIP_MATCH\tfoo\nb\tPREFIX\tSTRIP_TO_START\tbar\n\nc\tSUFFIX\tDROP_DOCUMENT\tbaz\n");
        let ids: Vec<_> = rs.rules().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn invalid_pattern_names_rule() {
        let err = parse_rules("r1\tANYWHERE\tSTRIP_MATCH\tok\nr2\tANYWHERE\tSTRIP_MATCH\t([\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("rule r2"), "{msg}");
        assert!(msg.contains("invalid pattern"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn format_errors() {
        assert!(matches!(
            parse_rules("a\tANYWHERE\tSTRIP_MATCH\n"),
            Err(CleanError::Format { line: 1, .. })
        ));
        assert!(matches!(
            parse_rules("a\tMIDDLE\tSTRIP_MATCH\tx\n"),
            Err(CleanError::Format { .. })
        ));
        assert!(matches!(
            parse_rules("a\tANYWHERE\tSTRIP_MATCH\tx\na\tANYWHERE\tSTRIP_MATCH\ty\n"),
            Err(CleanError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn empty_rule_set_is_identity() {
        let rs = rules("");
        assert!(rs.is_empty());
        let out = clean_text("  anything © at all  ", &rs);
        assert_eq!(out.text, "  anything © at all  ");
        assert!(out.applied.is_empty());
        assert!(!out.dropped);
    }

    #[test]
    fn copyright_suffix() {
        let rs = rules("copyright\tSUFFIX\tSTRIP_TO_END\tCopyright ©.*$\n");
        let out = clean_text("We report results. Copyright © 2022 Elsevier Inc.", &rs);
        assert_eq!(out.text, "We report results.");
        assert_eq!(out.applied, vec!["copyright"]);
    }

    #[test]
    fn prefix_anchor_requires_start() {
        let rs = rules("cite\tPREFIX\tSTRIP_TO_START\tHow to cite this article:[^.]*\\.\n");
        let out = clean_text("How to cite this article: Smith J. Body text follows.", &rs);
        assert_eq!(out.text, "Body text follows.");
        let out = clean_text("Body. How to cite this article: Smith J. More.", &rs);
        assert!(out.applied.is_empty());
    }

    #[test]
    fn strip_match_only_first_occurrence() {
        let rs = rules("fig\tANYWHERE\tSTRIP_MATCH\t\\[x\\]\n");
        let out = clean_text("a [x] b [x] c", &rs);
        assert_eq!(out.text, "a b [x] c");
    }

    #[test]
    fn drop_document_stops() {
        let rs = rules("d\tPREFIX\tDROP_DOCUMENT\tThis corrects\nlater\tANYWHERE\tSTRIP_MATCH\tx\n");
        let out = clean_text("This corrects the article x", &rs);
        assert!(out.dropped);
        assert_eq!(out.applied, vec!["d"]);
    }

    #[test]
    fn starter_rules_examples() {
        let rs = RuleSet::starter();
        assert!(rs.len() >= 18, "{}", rs.len());
        let body = "We measured the effect of treatment on outcomes in a cohort of patients.";
        let cases = [
            format!("{body} Copyright © 2022 Elsevier Inc. All rights reserved."),
            format!("{body} © 2023 The Authors. Published by Wiley."),
            format!("How to cite this article: Smith J, Doe A. A title. J Foo. 2020;12(3):45-67. {body}"),
            format!("{body} Communicated by Ramaswamy H. Sarma"),
            format!("{body} (PsycInfo Database Record (c) 2024 APA, all rights reserved)."),
            format!("{body} This article is protected by copyright. All rights reserved."),
            format!("ABSTRACT: {body}"),
            format!("{body} Video Abstract."),
            format!("{body} [Figure: see text]"),
        ];
        for c in &cases {
            let out = clean_text(c, &rs);
            assert_eq!(out.text, body, "input: {c}; applied {:?}", out.applied);
        }
        let out = clean_text(body, &rs);
        assert_eq!(out.text, body);
        assert!(out.applied.is_empty());
    }

    #[test]
    fn starter_rules_drop_correction_text() {
        let rs = RuleSet::starter();
        let out = clean_text("This corrects the article DOI: 10.1000/xyz.", &rs);
        assert!(out.dropped);
    }

    fn sample_corpus() -> Vec<String> {
        let bodies = [
            "Background: we studied sleep in adolescents. Results were robust across sites.",
            "Copyright is discussed as a topic here, as are © symbols in patents.",
            "Deep learning delves into intricate patterns; notably, it showcases results.",
            "",
            "   whitespace around   ",
        ];
        let decorations: [(&str, &str); 8] = [
            ("", ""),
            ("", " Copyright © 2021 Elsevier B.V. All rights reserved."),
            ("How to cite this article: Doe J. Title. Journal. 2019;5:1-2. ", ""),
            ("", " Communicated by: A. Editor."),
            ("Abstract ", " © The Author(s) 2022."),
            ("", " KEYWORDS: sleep; adolescents"),
            ("", " This article is protected by copyright. All rights reserved."),
            ("[Figure: see text] ", " Supplementary Information: The online version contains supplementary material available at 10.1007/x."),
        ];
        let mut out = Vec::new();
        for b in bodies {
            for (pre, post) in decorations {
                out.push(format!("{pre}{b}{post}"));
            }
        }
        out
    }

    #[test]
    fn starter_rules_idempotent_and_non_increasing() {
        let rs = RuleSet::starter();
        for text in sample_corpus() {
            let once = clean_text(&text, &rs);
            assert!(once.text.chars().count() <= text.chars().count());
            if once.dropped {
                continue;
            }
            let twice = clean_text(&once.text, &rs);
            assert_eq!(twice.text, once.text, "not idempotent for {text:?}");
        }
    }

    #[test]
    fn notice_titles_hand_labeled() {
        // 50 titles labelled by hand: true = erratum/correction/retraction notice.
        let labeled: [(&str, bool); 50] = [
            ("Erratum: Gene expression in the developing mouse cortex", true),
            ("Erratum", true),
            ("Erratum to: Outcomes after hip arthroplasty", true),
            ("[Erratum]", true),
            ("Errata", true),
            ("Corrigendum to \"Effects of caffeine on sleep\" [J Sleep Res 2019]", true),
            ("Corrigendum: Microglia in aging", true),
            ("Correction: Antibody responses to SARS-CoV-2", true),
            ("Correction to: Cardiac MRI in athletes", true),
            ("Correction", true),
            ("Correction.", true),
            ("Correction notice", true),
            ("CORRECTION: Title of the original article", true),
            ("[Correction]", true),
            ("Correction to Lancet Oncol 2020; 21: 1234", true),
            ("Retraction: Stem cell therapy for heart failure", true),
            ("Retraction notice to \"A novel biomarker\"", true),
            ("Retraction Note: Tumour suppression by miR-21", true),
            ("Retraction", true),
            ("Notice of Retraction: Machine learning for ECG", true),
            ("Retracted: Effects of exercise on depression", true),
            ("RETRACTED ARTICLE: Graphene sensors in sweat", true),
            ("Retraction of: Insulin signalling in flies", true),
            ("Retraction statement: Oral microbiome study", true),
            ("Expression of Concern: Data integrity in trial X", true),
            ("Withdrawn: Protocol for a randomized trial", true),
            ("Withdrawal notice", true),
            ("Addendum: Supplementary data for cohort study", true),
            ("Notice of withdrawal: Vaccine efficacy paper", true),
            ("Correction for: Nanoparticle uptake in liver", true),
            ("Correcting for batch effects in RNA-seq", false),
            ("Correction of hip dysplasia in adolescents", false),
            ("Corrections to the Bonferroni method for dependent tests", false),
            ("Corrective surgery outcomes after scoliosis", false),
            ("Error correction in long-read sequencing", false),
            ("Retraction of the upper eyelid after thyroid disease", false),
            ("Retractions in the biomedical literature: a bibliometric study", false),
            ("Why retractions matter", false),
            ("Withdrawal symptoms after opioid tapering", false),
            ("Withdrawal of life-sustaining treatment in the ICU", false),
            ("Gene expression in the developing mouse cortex", false),
            ("A study of erratic blood pressure patterns", false),
            ("Notice: A new framework for consent", false),
            ("Concern for patient safety in night shifts", false),
            ("Expression of concern markers in tumours", false),
            ("Mismatch repair and DNA correction fidelity", false),
            ("Self-correction in children's speech", false),
            ("Correctional health care: a review", false),
            ("", false),
            ("The errata problem in citation databases", false),
        ];
        for (title, want) in labeled {
            assert_eq!(is_correction_notice(title), want, "{title:?}");
        }
    }

    #[test]
    fn clean_document_rechecks_length() {
        let rs = rules("c\tSUFFIX\tSTRIP_TO_END\t©.*\n");
        let mut report = CleanReport::default();
        let mut doc = Document::new("1", 2020, format!("{} © 2020 Publisher", "a".repeat(245)));
        let d = clean_document(&mut doc, &rs, 250, &mut report);
        assert_eq!(
            d,
            CleanDecision::Drop {
                reason: DropReason::Rejected(RejectReason::CleanedTooShort)
            }
        );
        let mut doc = Document::new("2", 2020, format!("{} © 2020 Publisher", "a".repeat(260)));
        assert_eq!(
            clean_document(&mut doc, &rs, 250, &mut report),
            CleanDecision::Keep { modified: true }
        );
        let mut doc = Document::new("3", 2020, "a".repeat(300));
        doc.title = "Erratum: x".into();
        assert!(matches!(
            clean_document(&mut doc, &rs, 250, &mut report),
            CleanDecision::Drop {
                reason: DropReason::CorrectionNotice
            }
        ));
        assert_eq!(report.documents_seen, 3);
        assert_eq!(report.documents_modified, 2);
        assert_eq!(report.documents_dropped, 1);
        assert_eq!(report.documents_too_short, 1);
        assert_eq!(report.per_rule_counts.get("c"), Some(&2));
    }
}
