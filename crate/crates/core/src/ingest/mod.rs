//! Document model and ingestion: MEDLINE XML, canonical JSONL, inclusion
//! filters, and metadata attachment (fields, countries).

mod country;
mod fields;
mod jsonl;
mod pubmed;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

pub use country::CountryTable;
pub use fields::{assign_fields, load_field_rules, parse_field_rules, starter_field_rules, FieldRule};
pub use jsonl::{parse_jsonl, write_jsonl, write_jsonl_line, JsonlDocuments, ParseMode};
pub use pubmed::{parse_pubmed_xml, PubmedDocuments};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("field rules line {line}: {message}")]
    FieldRule { line: usize, message: String },
    #[error("invalid filter criteria: {0}")]
    Criteria(String),
}

/// One abstract with its publication year and metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub year: i32,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    /// Declared language tag (e.g. `eng`), when the source carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub fields: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, year: i32, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            year,
            title: String::new(),
            text: text.into(),
            journal: None,
            country: None,
            language: None,
            fields: BTreeSet::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Text length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

pub const MIN_YEAR: i32 = 1800;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterCriteria {
    pub min_chars: usize,
    pub max_chars: usize,
    pub language: String,
    pub year_range: (i32, i32),
}

impl Default for FilterCriteria {
    fn default() -> Self {
        FilterCriteria {
            min_chars: 250,
            max_chars: 4000,
            language: "eng".to_string(),
            year_range: (2010, 2024),
        }
    }
}

impl FilterCriteria {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.min_chars > self.max_chars {
            return Err(IngestError::Criteria(format!(
                "min_chars {} > max_chars {}",
                self.min_chars, self.max_chars
            )));
        }
        if self.year_range.0 > self.year_range.1 {
            return Err(IngestError::Criteria(format!(
                "year range {}..={} is empty",
                self.year_range.0, self.year_range.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    TooShort,
    TooLong,
    WrongLanguage,
    YearOutOfRange,
    /// The abstract fell below the minimum length after contamination
    /// stripping.
    CleanedTooShort,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::TooShort => "TOO_SHORT",
            RejectReason::TooLong => "TOO_LONG",
            RejectReason::WrongLanguage => "WRONG_LANGUAGE",
            RejectReason::YearOutOfRange => "YEAR_OUT_OF_RANGE",
            RejectReason::CleanedTooShort => "CLEANED_TOO_SHORT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Accept,
    Reject(RejectReason),
}

/// Applies the inclusion filters. Length is checked first, then language,
/// then year.
pub fn filter_document(doc: &Document, criteria: &FilterCriteria) -> FilterDecision {
    let len = doc.char_len();
    if len < criteria.min_chars {
        return FilterDecision::Reject(RejectReason::TooShort);
    }
    if len > criteria.max_chars {
        return FilterDecision::Reject(RejectReason::TooLong);
    }
    if let Some(lang) = &doc.language {
        if !lang.eq_ignore_ascii_case(&criteria.language) {
            return FilterDecision::Reject(RejectReason::WrongLanguage);
        }
    }
    let (lo, hi) = criteria.year_range;
    if doc.year < lo || doc.year > hi {
        return FilterDecision::Reject(RejectReason::YearOutOfRange);
    }
    FilterDecision::Accept
}

/// Fills `fields` from the journal name and `country` from the first
/// affiliation (kept in `extra["affiliation"]`). Existing values are kept.
pub fn attach_metadata(doc: &mut Document, field_rules: &[FieldRule], countries: &CountryTable) {
    if doc.fields.is_empty() {
        doc.fields = assign_fields(doc.journal.as_deref(), field_rules);
    }
    if doc.country.is_none() {
        if let Some(aff) = doc.extra.get("affiliation") {
            doc.country = countries.match_affiliation(aff);
        }
    }
}

/// Counts of documents skipped or rejected during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipTally {
    pub missing_abstract: u64,
    pub bad_year: u64,
    pub missing_id: u64,
    pub malformed_line: u64,
    pub duplicate_id: u64,
    pub rejected: BTreeMap<String, u64>,
}

impl SkipTally {
    pub fn reject(&mut self, reason: RejectReason) {
        *self.rejected.entry(reason.code().to_string()).or_default() += 1;
    }

    pub fn absorb(&mut self, other: &SkipTally) {
        self.missing_abstract += other.missing_abstract;
        self.bad_year += other.bad_year;
        self.missing_id += other.missing_id;
        self.malformed_line += other.malformed_line;
        self.duplicate_id += other.duplicate_id;
        for (k, v) in &other.rejected {
            *self.rejected.entry(k.clone()).or_default() += v;
        }
    }

    pub fn total(&self) -> u64 {
        self.missing_abstract
            + self.bad_year
            + self.missing_id
            + self.malformed_line
            + self.duplicate_id
            + self.rejected.values().sum::<u64>()
    }
}

/// Wraps a reader, transparently gunzipping when the stream starts with
/// the gzip magic bytes.
pub fn maybe_gunzip<R: Read + 'static>(reader: R) -> io::Result<Box<dyn BufRead>> {
    let mut buffered = BufReader::with_capacity(1 << 16, reader);
    let head = buffered.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b {
        Ok(Box::new(BufReader::with_capacity(
            1 << 16,
            MultiGzDecoder::new(buffered),
        )))
    } else {
        Ok(Box::new(buffered))
    }
}

pub fn open_input(path: &Path) -> io::Result<Box<dyn BufRead>> {
    maybe_gunzip(File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    PubmedXml,
    Jsonl,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<InputFormat> {
        let name = path.file_name()?.to_str()?.to_ascii_lowercase();
        let name = name.strip_suffix(".gz").unwrap_or(&name);
        if name.ends_with(".xml") {
            Some(InputFormat::PubmedXml)
        } else if name.ends_with(".jsonl") || name.ends_with(".json") {
            Some(InputFormat::Jsonl)
        } else {
            None
        }
    }
}
