use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde_json::{Map, Value};

use super::{Document, IngestError, SkipTally, MAX_YEAR, MIN_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// Streaming JSONL reader. In lenient mode malformed lines are skipped and
/// tallied; in strict mode the first one is returned as an error.
pub struct JsonlDocuments<R> {
    reader: R,
    mode: ParseMode,
    line_no: usize,
    buf: String,
    tally: SkipTally,
}

pub fn parse_jsonl<R: BufRead>(reader: R, mode: ParseMode) -> JsonlDocuments<R> {
    JsonlDocuments {
        reader,
        mode,
        line_no: 0,
        buf: String::new(),
        tally: SkipTally::default(),
    }
}

impl<R: BufRead> JsonlDocuments<R> {
    pub fn tally(&self) -> &SkipTally {
        &self.tally
    }
}

impl<R: BufRead> Iterator for JsonlDocuments<R> {
    type Item = Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            match document_from_line(line) {
                Ok(doc) => return Some(Ok(doc)),
                Err(message) => match self.mode {
                    ParseMode::Strict => {
                        return Some(Err(IngestError::Jsonl {
                            line: self.line_no,
                            message,
                        }))
                    }
                    ParseMode::Lenient => self.tally.malformed_line += 1,
                },
            }
        }
    }
}

fn document_from_line(line: &str) -> Result<Document, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(mut obj) = value else {
        return Err("invalid JSON: expected an object".into());
    };
    let id = match obj.remove("id") {
        Some(Value::String(s)) if !s.is_empty() => s,
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err("`id` must be a non-empty string".into()),
        None => return Err("missing `id`".into()),
    };
    let year = match obj.remove("year") {
        Some(Value::Number(n)) => n
            .as_i64()
            .and_then(|y| i32::try_from(y).ok())
            .ok_or("`year` must be an integer")?,
        Some(Value::String(s)) => s.trim().parse::<i32>().map_err(|_| "`year` must be an integer")?,
        Some(_) => return Err("`year` must be an integer".into()),
        None => return Err("missing `year`".into()),
    };
    if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
        return Err(format!("`year` {year} outside {MIN_YEAR}..={MAX_YEAR}"));
    }
    let text = match obj.remove("text") {
        Some(Value::String(s)) => s,
        Some(_) => return Err("`text` must be a string".into()),
        None => return Err("missing `text`".into()),
    };
    let title = optional_string(&mut obj, "title")?.unwrap_or_default();
    let journal = optional_string(&mut obj, "journal")?;
    let country = optional_string(&mut obj, "country")?;
    let language = optional_string(&mut obj, "language")?;
    let fields = match obj.remove("fields") {
        None | Some(Value::Null) => BTreeSet::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err("`fields` must be an array of strings".to_string()),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err("`fields` must be an array of strings".into()),
    };
    let mut extra = BTreeMap::new();
    match obj.remove("extra") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (k, v) in map {
                extra.insert(k, value_to_string(v));
            }
        }
        Some(_) => return Err("`extra` must be an object".into()),
    }
    for (k, v) in obj {
        extra.insert(k, value_to_string(v));
    }
    Ok(Document {
        id,
        year,
        title,
        text,
        journal,
        country,
        language,
        fields,
        extra,
    })
}

fn optional_string(obj: &mut Map<String, Value>, key: &str) -> Result<Option<String>, String> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(format!("`{key}` must be a string")),
    }
}

fn value_to_string(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

pub fn write_jsonl_line<W: Write>(out: &mut W, doc: &Document) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, doc)?;
    out.write_all(b"\n")
}

pub fn write_jsonl<'a, W: Write>(
    out: &mut W,
    docs: impl IntoIterator<Item = &'a Document>,
) -> std::io::Result<()> {
    for doc in docs {
        write_jsonl_line(out, doc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn collect(src: &str, mode: ParseMode) -> (Vec<Result<Document, IngestError>>, SkipTally) {
        let mut it = parse_jsonl(Cursor::new(src.as_bytes().to_vec()), mode);
        let docs: Vec<_> = it.by_ref().collect();
        (docs, it.tally().clone())
    }

    #[test]
    fn minimal_record() {
        let text = "x".repeat(300);
        let src = format!("{{\"id\":\"1\",\"year\":2024,\"text\":\"{text}\"}}\n");
        let (docs, _) = collect(&src, ParseMode::Strict);
        let doc = docs.into_iter().next().unwrap().unwrap();
        assert_eq!(doc.id, "1");
        assert_eq!(doc.year, 2024);
        assert_eq!(doc.char_len(), 300);
    }

    #[test]
    fn strict_error_names_line() {
        let (docs, _) = collect("not json\n", ParseMode::Strict);
        let err = docs.into_iter().next().unwrap().unwrap_err();
        assert!(err.to_string().starts_with("line 1: invalid JSON"), "{err}");
    }

    #[test]
    fn lenient_skips_bad_lines() {
        let src = "{\"id\":\"a\",\"year\":2020,\"text\":\"t\"}\nnot json\n{\"id\":\"b\",\"year\":2021,\"text\":\"u\"}\n";
        let (docs, tally) = collect(src, ParseMode::Lenient);
        assert_eq!(docs.len(), 2);
        assert!(docs.iter().all(|d| d.is_ok()));
        assert_eq!(tally.malformed_line, 1);
    }

    #[test]
    fn unknown_keys_go_to_extra() {
        let src = r#"{"id":"a","year":2020,"text":"t","gender_first":"f","score":3,"extra":{"k":"v"}}"#;
        let (docs, _) = collect(src, ParseMode::Strict);
        let doc = docs.into_iter().next().unwrap().unwrap();
        assert_eq!(doc.extra.get("gender_first").map(String::as_str), Some("f"));
        assert_eq!(doc.extra.get("score").map(String::as_str), Some("3"));
        assert_eq!(doc.extra.get("k").map(String::as_str), Some("v"));
    }

    #[test]
    fn missing_keys_and_bad_year() {
        for (src, needle) in [
            (r#"{"year":2020,"text":"t"}"#, "missing `id`"),
            (r#"{"id":"a","text":"t"}"#, "missing `year`"),
            (r#"{"id":"a","year":2020}"#, "missing `text`"),
            (r#"{"id":"a","year":1700,"text":"t"}"#, "outside"),
            (r#"[1,2]"#, "expected an object"),
        ] {
            let (docs, _) = collect(src, ParseMode::Strict);
            let err = docs.into_iter().next().unwrap().unwrap_err().to_string();
            assert!(err.contains(needle), "{src}: {err}");
        }
    }

    fn arb_document() -> impl Strategy<Value = Document> {
        (
            "[a-z0-9]{1,8}",
            MIN_YEAR..=MAX_YEAR,
            ".{0,40}",
            ".{0,200}",
            proptest::option::of("[A-Za-z ]{1,20}"),
            proptest::option::of("[A-Za-z ]{1,12}"),
            proptest::option::of("[a-z]{3}"),
            proptest::collection::btree_set("[a-z]{1,10}", 0..3),
            proptest::collection::btree_map("x_[a-z]{1,6}", ".{0,10}", 0..3),
        )
            .prop_map(|(id, year, title, text, journal, country, language, fields, extra)| Document {
                id,
                year,
                title,
                text,
                journal,
                country,
                language,
                fields,
                extra,
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(docs in proptest::collection::vec(arb_document(), 0..8)) {
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &docs).unwrap();
            let back: Vec<Document> = parse_jsonl(Cursor::new(buf.clone()), ParseMode::Strict)
                .collect::<Result<_, _>>()
                .unwrap();
            prop_assert_eq!(&back, &docs);
            let mut again = Vec::new();
            write_jsonl(&mut again, &back).unwrap();
            prop_assert_eq!(again, buf);
        }
    }
}
