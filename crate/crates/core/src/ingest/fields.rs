use std::collections::BTreeSet;
use std::path::Path;

use super::IngestError;

const STARTER_FIELD_RULES: &str = include_str!("../../data/field_rules.tsv");

/// Assigns a field label to every journal whose name contains
/// `journal_substring` (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldRule {
    pub field_name: String,
    journal_substring: String,
}

impl FieldRule {
    pub fn new(field_name: impl Into<String>, journal_substring: &str) -> Result<Self, IngestError> {
        if journal_substring.trim().is_empty() {
            return Err(IngestError::FieldRule {
                line: 0,
                message: "journal substring must be non-empty".into(),
            });
        }
        Ok(FieldRule {
            field_name: field_name.into(),
            journal_substring: journal_substring.to_lowercase(),
        })
    }

    pub fn journal_substring(&self) -> &str {
        &self.journal_substring
    }

    fn matches(&self, journal_lower: &str) -> bool {
        journal_lower.contains(&self.journal_substring)
    }
}

pub fn assign_fields(journal: Option<&str>, rules: &[FieldRule]) -> BTreeSet<String> {
    let Some(journal) = journal else {
        return BTreeSet::new();
    };
    let lower = journal.to_lowercase();
    rules
        .iter()
        .filter(|r| r.matches(&lower))
        .map(|r| r.field_name.clone())
        .collect()
}

/// Parses `field<TAB>journal substring` lines; `#` starts a comment line.
pub fn parse_field_rules(src: &str) -> Result<Vec<FieldRule>, IngestError> {
    let mut rules = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let (field, substring) = trimmed.split_once('\t').ok_or_else(|| IngestError::FieldRule {
            line: i + 1,
            message: "expected `field<TAB>journal substring`".into(),
        })?;
        let rule = FieldRule::new(field.trim(), substring.trim()).map_err(|_| IngestError::FieldRule {
            line: i + 1,
            message: "journal substring must be non-empty".into(),
        })?;
        rules.push(rule);
    }
    Ok(rules)
}

pub fn load_field_rules(path: &Path) -> Result<Vec<FieldRule>, IngestError> {
    parse_field_rules(&std::fs::read_to_string(path)?)
}

pub fn starter_field_rules() -> Vec<FieldRule> {
    parse_field_rules(STARTER_FIELD_RULES).expect("shipped field rules parse")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules(pairs: &[(&str, &str)]) -> Vec<FieldRule> {
        pairs.iter().map(|(f, s)| FieldRule::new(*f, s).unwrap()).collect()
    }

    #[test]
    fn neuroscience_journal() {
        let r = rules(&[("neuroscience", "neuroscience")]);
        let got = assign_fields(Some("Nature Neuroscience"), &r);
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec!["neuroscience"]);
        let got = assign_fields(Some("The Journal of Neuroscience"), &r);
        assert!(got.contains("neuroscience"));
    }

    #[test]
    fn no_match_and_absent_journal() {
        let r = rules(&[("neuroscience", "neuroscience")]);
        assert!(assign_fields(Some("Cell"), &r).is_empty());
        assert!(assign_fields(None, &r).is_empty());
    }

    #[test]
    fn multi_match() {
        let r = rules(&[("neuroscience", "neuroscience"), ("bioinformatics", "bioinformatics")]);
        let got = assign_fields(Some("Frontiers in Neuroscience and Bioinformatics Letters"), &r);
        assert_eq!(
            got.into_iter().collect::<Vec<_>>(),
            vec!["bioinformatics", "neuroscience"]
        );
    }

    #[test]
    fn empty_substring_rejected() {
        assert!(FieldRule::new("x", "  ").is_err());
        let err = parse_field_rules("a\tb\nbroken line\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn starter_rules_load() {
        let r = starter_field_rules();
        assert!(r.len() >= 30);
        assert!(assign_fields(Some("Journal of Neuroscience Methods"), &r).contains("neuroscience"));
        assert!(assign_fields(Some("Cancer Research"), &r).contains("oncology"));
    }
}
