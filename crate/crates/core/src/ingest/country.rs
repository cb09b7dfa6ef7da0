use std::collections::HashMap;
use std::path::Path;

use regex::{Regex, RegexBuilder};

use super::IngestError;

const STARTER_COUNTRIES: &str = include_str!("../../data/countries.tsv");

/// Maps affiliation strings to canonical country names via an alias table.
#[derive(Debug, Clone)]
pub struct CountryTable {
    matcher: Option<Regex>,
    canonical: HashMap<String, String>,
}

impl CountryTable {
    /// Parses `canonical<TAB>alias|alias|...` lines.
    pub fn parse(src: &str) -> Result<Self, IngestError> {
        let mut canonical = HashMap::new();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (name, aliases) = line.split_once('\t').ok_or_else(|| IngestError::FieldRule {
                line: i + 1,
                message: "expected `country<TAB>aliases`".into(),
            })?;
            let name = name.trim();
            canonical.insert(name.to_lowercase(), name.to_string());
            for alias in aliases.split('|').map(str::trim).filter(|a| !a.is_empty()) {
                canonical.insert(alias.to_lowercase(), name.to_string());
            }
        }
        Ok(Self::from_map(canonical))
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn starter() -> Self {
        Self::parse(STARTER_COUNTRIES).expect("shipped country table parses")
    }

    fn from_map(canonical: HashMap<String, String>) -> Self {
        if canonical.is_empty() {
            return CountryTable {
                matcher: None,
                canonical,
            };
        }
        let mut aliases: Vec<&String> = canonical.keys().collect();
        // Longest alias first so "p.r. china" wins over "china".
        aliases.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let alternation = aliases
            .iter()
            .map(|a| regex::escape(a))
            .collect::<Vec<_>>()
            .join("|");
        // Aliases may end in '.', so the right boundary is "not a word char".
        let pattern = format!(r"(?:^|[^\w])({alternation})(?:$|[^\w])");
        let matcher = RegexBuilder::new(&pattern)
            .case_insensitive(true)
            .build()
            .expect("escaped alternation compiles");
        CountryTable {
            matcher: Some(matcher),
            canonical,
        }
    }

    /// Country of an affiliation string. Segments are scanned from the last
    /// comma-separated part backwards, since the country conventionally
    /// closes an affiliation.
    pub fn match_affiliation(&self, affiliation: &str) -> Option<String> {
        let matcher = self.matcher.as_ref()?;
        let body = strip_contact(affiliation);
        for segment in body.rsplit([',', ';']) {
            let segment = segment.trim().trim_end_matches('.');
            if let Some(caps) = matcher.captures(segment) {
                let alias = caps[1].to_lowercase();
                return self.canonical.get(&alias).cloned();
            }
        }
        None
    }
}

fn strip_contact(affiliation: &str) -> &str {
    let lower_cut = ["electronic address", "e-mail", "email"]
        .iter()
        .filter_map(|m| affiliation.to_ascii_lowercase().find(m))
        .min();
    let mut body = match lower_cut {
        Some(i) => &affiliation[..i],
        None => affiliation,
    };
    if let Some(at) = body.find('@') {
        // drop the token containing an address
        let start = body[..at].rfind(char::is_whitespace).unwrap_or(0);
        body = &body[..start];
    }
    body.trim().trim_end_matches([',', '.', ';']).trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn common_forms() {
        let t = CountryTable::starter();
        let cases = [
            ("Department of Physiology, Sun Yat-sen University, Guangzhou 510080, P.R. China.", Some("China")),
            ("Harvard Medical School, Boston, MA 02115, USA. someone@hms.harvard.edu", Some("United States")),
            ("University of Oxford, Oxford, UK", Some("United Kingdom")),
            ("Dept. of Neurology, University of New Mexico, Albuquerque, NM, USA", Some("United States")),
            ("Charité, Berlin, Germany. Electronic address: x@y.de", Some("Germany")),
            ("Seoul National University, Seoul, Republic of Korea", Some("South Korea")),
            ("Some Institute, Atlantis", None),
            ("", None),
        ];
        for (aff, want) in cases {
            assert_eq!(t.match_affiliation(aff).as_deref(), want, "{aff}");
        }
    }

    #[test]
    fn word_boundaries() {
        let t = CountryTable::starter();
        // "US" must not fire inside "Campus" or "Houston".
        assert_eq!(t.match_affiliation("Houston Campus"), None);
        assert_eq!(t.match_affiliation("Omaha, Nebraska, US"), Some("United States".into()));
    }

    #[test]
    fn empty_table() {
        let t = CountryTable::parse("# nothing\n").unwrap();
        assert_eq!(t.match_affiliation("Berlin, Germany"), None);
    }
}
