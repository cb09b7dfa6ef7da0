use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExcessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Content,
    Style,
    Ambiguous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Content => "content",
            Label::Style => "style",
            Label::Ambiguous => "ambiguous",
        }
    }

    fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "content" | "c" => Some(Label::Content),
            "style" | "s" => Some(Label::Style),
            "ambiguous" | "a" | "unclear" => Some(Label::Ambiguous),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Other,
}

impl Pos {
    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adjective => "adjective",
            Pos::Adverb => "adverb",
            Pos::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<Pos> {
        match s.trim().to_ascii_lowercase().as_str() {
            "noun" | "n" => Some(Pos::Noun),
            "verb" | "v" => Some(Pos::Verb),
            "adjective" | "adj" | "a" => Some(Pos::Adjective),
            "adverb" | "adv" | "r" => Some(Pos::Adverb),
            "other" | "o" | "x" => Some(Pos::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: Label,
    pub pos: Option<Pos>,
}

/// Word → content/style label and part of speech. Words missing from the
/// file stay absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationTable {
    entries: BTreeMap<String, Annotation>,
}

impl AnnotationTable {
    /// Parses CSV with a header naming `word` and `label` columns and an
    /// optional `pos` column (any column order; extra columns ignored).
    pub fn parse(src: &str) -> Result<Self, ExcessError> {
        let fmt = |line: usize, message: String| ExcessError::Format {
            what: "annotations".into(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(src.as_bytes());
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let word_col = col("word").ok_or_else(|| fmt(1, "missing `word` column".into()))?;
        let label_col = col("label").ok_or_else(|| fmt(1, "missing `label` column".into()))?;
        let pos_col = col("pos");
        let mut entries = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let word = rec.get(word_col).unwrap_or("").trim().to_lowercase();
            if word.is_empty() {
                continue;
            }
            let raw_label = rec.get(label_col).unwrap_or("");
            let label = Label::parse(raw_label).ok_or_else(|| fmt(line, format!("unknown label {raw_label:?}")))?;
            let pos = match pos_col.and_then(|c| rec.get(c)).map(str::trim) {
                None | Some("") => None,
                Some(p) => Some(Pos::parse(p).ok_or_else(|| fmt(line, format!("unknown part of speech {p:?}")))?),
            };
            entries.insert(word, Annotation { label, pos });
        }
        Ok(AnnotationTable { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ExcessError> {
        AnnotationTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, word: &str) -> Option<&Annotation> {
        self.entries.get(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Annotation)> {
        self.entries.iter().map(|(w, a)| (w.as_str(), a))
    }

    pub fn words_with_label(&self, label: Label) -> impl Iterator<Item = &str> {
        self.iter().filter(move |(_, a)| a.label == label).map(|(w, _)| w)
    }
}
