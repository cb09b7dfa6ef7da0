//! Rule-based lemmatizer: British→US spelling, an override table, then
//! inflectional suffix rules, iterated to a fixed point.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use super::ExcessError;

const STARTER_OVERRIDES: &str = include_str!("../../data/lemma_overrides.csv");
const STARTER_SPELLING: &str = include_str!("../../data/spelling_us.csv");

/// Stems that take a final `e` once `-ing`/`-ed` is removed, used when no
/// lexicon is available (`delv` → `delve`, `showcas` → `showcase`).
const E_RESTORING_ENDINGS: &[&str] = &[
    "v", "c", "at", "bl", "pl", "tl", "dl", "gl", "kl", "cl", "fl", "iz", "yz", "ys", "is", "os", "as",
    "dg", "rg", "ns", "rs", "ls", "ps", "aus", "ag", "chang", "rrang", "lleng", "ik", "ak", "ok", "mot",
    "vot", "quot", "cit", "vit", "writ", "plet", "elet", "mpet", "scor", "stor", "plor", "gnor", "uir",
];

fn is_vowel(b: u8) -> bool {
    matches!(b, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Consonant + single vowel + one of r/n/d/t/l/m at the end, where a plain
/// stem of that shape is usually missing its `e` (`compar`, `determin`,
/// `provid`, `comput`, `modul`, `ensur`). `q` followed by `u` counts as a
/// consonant.
fn consonant_vowel_tail(stem: &[u8]) -> bool {
    let n = stem.len();
    if n < 4 {
        return false;
    }
    let (c, v, t) = (stem[n - 3], stem[n - 2], stem[n - 1]);
    let v_ok = matches!(v, b'a' | b'i' | b'u' | b'o');
    let c_ok = !is_vowel(c) || (c == b'u' && n >= 4 && stem[n - 4] == b'q');
    let pair_ok = matches!(
        (v, t),
        (b'a', b'r') | (b'i', b'r') | (b'u', b'r') | (b'i', b'n') | (b'i', b'd') | (b'o', b'd') | (b'u', b't') | (b'u', b'l') | (b'u', b'm') | (b'i', b'm')
    );
    v_ok && c_ok && pair_ok && !(v == b'o' && t == b'r')
}

/// Stems ending vowel-vowel-consonant rarely drop an `e` (`treat`, `break`,
/// `reveal`); these are the exceptions.
const DIGRAPH_EXCEPTIONS: &[&str] = &["creat", "aus", "eas", "oos", "uis"];

fn vowel_digraph_tail(stem: &[u8]) -> bool {
    let n = stem.len();
    if n < 3 {
        return false;
    }
    let first_is_vowel = is_vowel(stem[n - 3]) && !(stem[n - 3] == b'u' && n >= 4 && stem[n - 4] == b'q');
    first_is_vowel && is_vowel(stem[n - 2]) && !is_vowel(stem[n - 1])
}

fn wants_e(stem: &str) -> bool {
    if stem.ends_with('v') || DIGRAPH_EXCEPTIONS.iter().any(|e| stem.ends_with(e)) {
        return true;
    }
    if stem.ends_with("ss") || vowel_digraph_tail(stem.as_bytes()) {
        return false;
    }
    E_RESTORING_ENDINGS.iter().any(|e| stem.ends_with(e)) || consonant_vowel_tail(stem.as_bytes())
}

fn undouble(stem: &str) -> Option<&str> {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z' | b'f') {
        Some(&stem[..n - 1])
    } else {
        None
    }
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(|b| is_vowel(b) || b == b'y')
}

/// Candidate base forms for one inflectional step, most preferred first.
fn suffix_candidates(w: &str) -> Vec<String> {
    let mut out = Vec::new();
    if w.len() < 4 {
        return out;
    }
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.len() >= 2 {
            out.push(format!("{stem}y"));
            out.push(format!("{stem}ie"));
        }
    } else if let Some(stem) = w.strip_suffix("ing") {
        if stem.len() >= 3 && has_vowel(stem) {
            if let Some(u) = undouble(stem) {
                out.push(u.to_string());
            }
            out.push(format!("{stem}e"));
            out.push(stem.to_string());
        }
    } else if let Some(stem) = w.strip_suffix("ied") {
        if stem.len() >= 2 {
            out.push(format!("{stem}y"));
        }
    } else if w.ends_with("eed") {
        out.push(w[..w.len() - 1].to_string());
    } else if let Some(stem) = w.strip_suffix("ed") {
        if stem.len() >= 3 && has_vowel(stem) {
            if let Some(u) = undouble(stem) {
                out.push(u.to_string());
            }
            out.push(format!("{stem}e"));
            out.push(stem.to_string());
        }
    } else if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") || w.ends_with("ous") {
    } else if let Some(stem) = w.strip_suffix("es") {
        let sibilant = ["x", "ch", "sh", "ss", "z"].iter().any(|e| stem.ends_with(e));
        if sibilant {
            out.push(stem.to_string());
            out.push(format!("{stem}e"));
        } else {
            out.push(format!("{stem}e"));
            out.push(stem.to_string());
        }
    } else if let Some(stem) = w.strip_suffix('s') {
        out.push(stem.to_string());
    }
    out
}

/// Heuristic choice among candidates when no lexicon is present.
fn heuristic_pick(w: &str, cands: &[String]) -> Option<String> {
    if cands.is_empty() {
        return None;
    }
    if w.ends_with("eed") {
        return None;
    }
    if let Some(stem) = w.strip_suffix("ing").or_else(|| w.strip_suffix("ed").filter(|_| !w.ends_with("ied"))) {
        if let Some(u) = undouble(stem) {
            return Some(u.to_string());
        }
        return Some(if wants_e(stem) {
            format!("{stem}e")
        } else {
            stem.to_string()
        });
    }
    if w.ends_with("ies") {
        let stem = &w[..w.len() - 3];
        return Some(if stem.len() >= 3 {
            format!("{stem}y")
        } else {
            format!("{stem}ie")
        });
    }
    if let Some(stem) = w.strip_suffix("es") {
        let sibilant = ["x", "ch", "sh", "ss", "z"].iter().any(|e| stem.ends_with(e));
        return Some(if sibilant { stem.to_string() } else { format!("{stem}e") });
    }
    Some(cands[0].clone())
}

fn parse_pairs(src: &str, what: &str) -> Result<HashMap<String, String>, ExcessError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(src.as_bytes());
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(ExcessError::Format {
                what: what.to_string(),
                line,
                message: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        let (a, b) = (rec[0].trim().to_lowercase(), rec[1].trim().to_lowercase());
        if i == 0 && !a.is_empty() && !b.is_empty() && (a == "word" || a == "british" || a == "from") {
            continue;
        }
        if a.is_empty() || b.is_empty() {
            return Err(ExcessError::Format {
                what: what.to_string(),
                line,
                message: "empty cell".into(),
            });
        }
        out.insert(a, b);
    }
    Ok(out)
}

/// Maps inflected and British-spelled words to a canonical lemma.
///
/// Each step applies, in order, the spelling map, the override table, and
/// one suffix rule; steps repeat until the word stops changing. With a
/// lexicon, a suffix rule only fires when its candidate is a known word.
#[derive(Debug, Clone, Default)]
pub struct Lemmatizer {
    overrides: HashMap<String, String>,
    spelling: HashMap<String, String>,
    lexicon: Option<HashSet<String>>,
}

impl Lemmatizer {
    pub fn new(overrides: HashMap<String, String>, spelling: HashMap<String, String>) -> Self {
        Lemmatizer {
            overrides,
            spelling,
            lexicon: None,
        }
    }

    /// Shipped override table and British→US spelling map.
    pub fn starter() -> Self {
        Lemmatizer::new(
            parse_pairs(STARTER_OVERRIDES, "lemma overrides").expect("shipped overrides parse"),
            parse_pairs(STARTER_SPELLING, "spelling map").expect("shipped spelling map parses"),
        )
    }

    pub fn from_csv(overrides: &str, spelling: &str) -> Result<Self, ExcessError> {
        Ok(Lemmatizer::new(
            parse_pairs(overrides, "lemma overrides")?,
            parse_pairs(spelling, "spelling map")?,
        ))
    }

    pub fn load(overrides: Option<&Path>, spelling: Option<&Path>) -> Result<Self, ExcessError> {
        let o = match overrides {
            Some(p) => std::fs::read_to_string(p)?,
            None => STARTER_OVERRIDES.to_string(),
        };
        let s = match spelling {
            Some(p) => std::fs::read_to_string(p)?,
            None => STARTER_SPELLING.to_string(),
        };
        Lemmatizer::from_csv(&o, &s)
    }

    /// Restricts suffix-rule outputs to words in `lexicon` (typically the
    /// matrix vocabulary).
    pub fn with_lexicon<I, S>(mut self, lexicon: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.lexicon = Some(lexicon.into_iter().map(Into::into).collect());
        self
    }

    fn step(&self, word: &str) -> String {
        let spelled = self.spelling.get(word).map_or(word, String::as_str);
        if let Some(o) = self.overrides.get(spelled) {
            return o.clone();
        }
        let cands = suffix_candidates(spelled);
        let pick = match &self.lexicon {
            Some(lex) => cands.into_iter().find(|c| lex.contains(c)),
            None => heuristic_pick(spelled, &cands),
        };
        pick.unwrap_or_else(|| spelled.to_string())
    }

    /// Lemma of a lowercase word. Idempotent: if iteration enters a cycle,
    /// the lexicographically smallest member is returned, and that member
    /// maps to itself.
    pub fn lemmatize(&self, word: &str) -> String {
        let mut seen: Vec<String> = vec![word.to_string()];
        loop {
            let next = self.step(seen.last().expect("non-empty"));
            if &next == seen.last().expect("non-empty") {
                return next;
            }
            if let Some(pos) = seen.iter().position(|w| *w == next) {
                return seen[pos..].iter().min().expect("non-empty cycle").clone();
            }
            seen.push(next);
        }
    }
}

/// Distinct lemmas of a word list.
pub fn lemma_set<'a>(words: impl IntoIterator<Item = &'a str>, lemmatizer: &Lemmatizer) -> BTreeSet<String> {
    words.into_iter().map(|w| lemmatizer.lemmatize(w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_examples() {
        let l = Lemmatizer::starter();
        assert_eq!(l.lemmatize("chatbots"), "chatbot");
        assert_eq!(l.lemmatize("circrnas"), "circrna");
        for w in ["delves", "delving", "delved", "delve"] {
            assert_eq!(l.lemmatize(w), "delve", "{w}");
        }
        assert_eq!(l.lemmatize("analyse"), "analyze");
    }

    #[test]
    fn heuristic_forms() {
        let l = Lemmatizer::starter();
        let cases = [
            ("masks", "mask"),
            ("studies", "study"),
            ("studied", "study"),
            ("showcasing", "showcase"),
            ("showcased", "showcase"),
            ("showcases", "showcase"),
            ("enhancing", "enhance"),
            ("insights", "insight"),
            ("exhibited", "exhibit"),
            ("running", "run"),
            ("emphasizing", "emphasize"),
            ("emphasising", "emphasize"),
            ("leveraging", "leverage"),
            ("facilitating", "facilitate"),
            ("harnessing", "harness"),
            ("processes", "process"),
            ("boxes", "box"),
            ("causes", "cause"),
            ("determining", "determine"),
            ("computing", "compute"),
            ("comparing", "compare"),
            ("providing", "provide"),
            ("revealing", "reveal"),
            ("treating", "treat"),
            ("breaking", "break"),
            ("creating", "create"),
            ("increasing", "increase"),
            ("causing", "cause"),
            ("requiring", "require"),
            ("taking", "take"),
            ("agreed", "agree"),
            ("underscores", "underscore"),
            ("analysis", "analysis"),
            ("across", "across"),
            ("tumours", "tumor"),
        ];
        for (w, want) in cases {
            assert_eq!(l.lemmatize(w), want, "{w}");
        }
    }

    #[test]
    fn lexicon_mode() {
        let l = Lemmatizer::starter().with_lexicon(["delve", "show", "hope", "hop", "open", "study"]);
        assert_eq!(l.lemmatize("delving"), "delve");
        assert_eq!(l.lemmatize("showed"), "show");
        assert_eq!(l.lemmatize("hoping"), "hope");
        assert_eq!(l.lemmatize("hopping"), "hop");
        assert_eq!(l.lemmatize("opening"), "open");
        assert_eq!(l.lemmatize("studies"), "study");
        // No candidate in the lexicon: unchanged.
        assert_eq!(l.lemmatize("zorbings"), "zorbings");
    }

    #[test]
    fn cycles_resolve_to_smallest_member() {
        let overrides: HashMap<String, String> =
            [("beta".into(), "alpha".into()), ("alpha".into(), "beta".into())].into();
        let l = Lemmatizer::new(overrides, HashMap::new());
        assert_eq!(l.lemmatize("beta"), "alpha");
        assert_eq!(l.lemmatize("alpha"), "alpha");
    }

    #[test]
    fn bad_csv() {
        let err = Lemmatizer::from_csv("word,lemma\na,b,c\n", "").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn lemma_set_collapses() {
        let l = Lemmatizer::starter();
        assert_eq!(lemma_set(["mask", "masks"], &l).len(), 1);
        assert!(lemma_set([], &l).is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn idempotent(w in "[a-z]{4,14}") {
            let l = Lemmatizer::starter();
            let once = l.lemmatize(&w);
            prop_assert_eq!(l.lemmatize(&once), once);
        }

        #[test]
        fn idempotent_inflected(stem in "[a-z]{3,10}", suf in prop::sample::select(vec!["s", "es", "ies", "ing", "ed", "ied", "ings", "ers"])) {
            let l = Lemmatizer::starter();
            let w = format!("{stem}{suf}");
            let once = l.lemmatize(&w);
            prop_assert_eq!(l.lemmatize(&once), once);
        }
    }
}
