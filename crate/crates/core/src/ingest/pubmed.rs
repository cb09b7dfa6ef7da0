//! Streaming reader for MEDLINE/PubMed citation XML (`PubmedArticleSet`).

use std::io::BufRead;

use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::Event;
use quick_xml::Reader;

use super::{Document, IngestError, SkipTally, MAX_YEAR, MIN_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Capture {
    Pmid,
    ArticleTitle,
    AbstractText,
    JournalTitle,
    PubDateYear,
    MedlineDate,
    ArticleDateYear,
    Language,
    Affiliation,
}

#[derive(Default)]
struct CitationBuilder {
    pmid: Option<String>,
    title: String,
    abstract_parts: Vec<String>,
    journal: Option<String>,
    years: Vec<i32>,
    language: Option<String>,
    affiliation: Option<String>,
    authors_seen: usize,
    affiliations_in_author: usize,
}

impl CitationBuilder {
    fn finish(self, tally: &mut SkipTally) -> Option<Document> {
        let Some(id) = self.pmid.filter(|p| !p.is_empty()) else {
            tally.missing_id += 1;
            return None;
        };
        let text = self
            .abstract_parts
            .iter()
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if text.is_empty() {
            tally.missing_abstract += 1;
            return None;
        }
        let Some(year) = self
            .years
            .into_iter()
            .filter(|y| (MIN_YEAR..=MAX_YEAR).contains(y))
            .min()
        else {
            tally.bad_year += 1;
            return None;
        };
        let mut doc = Document::new(id, year, text);
        doc.title = self.title.trim().to_string();
        doc.journal = self.journal.map(|j| j.trim().to_string()).filter(|j| !j.is_empty());
        doc.language = self.language.map(|l| l.trim().to_string()).filter(|l| !l.is_empty());
        if let Some(aff) = self.affiliation {
            let aff = aff.trim();
            if !aff.is_empty() {
                doc.extra.insert("affiliation".into(), aff.to_string());
            }
        }
        Some(doc)
    }
}

/// Iterator over the documents of one MEDLINE XML stream.
///
/// Yields a [`Document`] per `MedlineCitation` that has an abstract; the
/// first author's first affiliation is stored under `extra["affiliation"]`
/// for later country matching. Citations without an abstract, PMID, or
/// parseable year are skipped and counted in [`PubmedDocuments::tally`].
pub struct PubmedDocuments<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    stack: Vec<String>,
    citation: Option<CitationBuilder>,
    capture: Option<(Capture, usize, String)>,
    tally: SkipTally,
    finished: bool,
}

pub fn parse_pubmed_xml<R: BufRead>(input: R) -> PubmedDocuments<R> {
    let mut reader = Reader::from_reader(input);
    let config = reader.config_mut();
    config.expand_empty_elements = true;
    config.check_end_names = true;
    PubmedDocuments {
        reader,
        buf: Vec::with_capacity(1 << 14),
        stack: Vec::new(),
        citation: None,
        capture: None,
        tally: SkipTally::default(),
        finished: false,
    }
}

impl<R: BufRead> PubmedDocuments<R> {
    pub fn tally(&self) -> &SkipTally {
        &self.tally
    }

    fn parent_is(&self, names: &[&str]) -> bool {
        self.stack.len() >= names.len()
            && self.stack[self.stack.len() - names.len()..]
                .iter()
                .zip(names)
                .all(|(a, b)| a == b)
    }

    fn capture_for(&mut self, name: &str) -> Option<Capture> {
        let citation = self.citation.as_ref()?;
        let capture = match name {
            "PMID" if self.parent_is(&["MedlineCitation"]) => Capture::Pmid,
            "ArticleTitle" if self.parent_is(&["Article"]) => Capture::ArticleTitle,
            "AbstractText" if self.parent_is(&["Article", "Abstract"]) => Capture::AbstractText,
            "Title" if self.parent_is(&["Article", "Journal"]) => Capture::JournalTitle,
            "Year" if self.parent_is(&["JournalIssue", "PubDate"]) => Capture::PubDateYear,
            "MedlineDate" if self.parent_is(&["JournalIssue", "PubDate"]) => Capture::MedlineDate,
            "Year" if self.parent_is(&["Article", "ArticleDate"]) => Capture::ArticleDateYear,
            "Language" if self.parent_is(&["Article"]) && citation.language.is_none() => {
                Capture::Language
            }
            "Affiliation"
                if self.parent_is(&["AuthorList", "Author", "AffiliationInfo"])
                    && citation.authors_seen == 1
                    && citation.affiliations_in_author == 1
                    && citation.affiliation.is_none() =>
            {
                Capture::Affiliation
            }
            // Pre-2014 records carry a single article-level affiliation.
            "Affiliation" if self.parent_is(&["Article"]) && citation.affiliation.is_none() => {
                Capture::Affiliation
            }
            _ => return None,
        };
        Some(capture)
    }

    fn finish_capture(&mut self, kind: Capture, text: String) {
        let Some(c) = self.citation.as_mut() else { return };
        match kind {
            Capture::Pmid => {
                if c.pmid.is_none() {
                    c.pmid = Some(text.trim().to_string());
                }
            }
            Capture::ArticleTitle => c.title = text,
            Capture::AbstractText => c.abstract_parts.push(text),
            Capture::JournalTitle => c.journal = Some(text),
            Capture::PubDateYear | Capture::ArticleDateYear => {
                if let Ok(y) = text.trim().parse::<i32>() {
                    c.years.push(y);
                }
            }
            Capture::MedlineDate => {
                if let Some(y) = first_four_digit_year(&text) {
                    c.years.push(y);
                }
            }
            Capture::Language => c.language = Some(text),
            Capture::Affiliation => c.affiliation = Some(text),
        }
    }

    fn xml_error(&self, message: impl Into<String>) -> IngestError {
        IngestError::Xml {
            offset: self.reader.error_position().max(self.reader.buffer_position()),
            message: message.into(),
        }
    }

    fn append_text(&mut self, s: &str) {
        if let Some((_, _, text)) = self.capture.as_mut() {
            text.push_str(s);
        }
    }
}

fn first_four_digit_year(s: &str) -> Option<i32> {
    let bytes = s.as_bytes();
    bytes
        .windows(4)
        .enumerate()
        .find(|(i, w)| {
            w.iter().all(u8::is_ascii_digit)
                && (*i == 0 || !bytes[i - 1].is_ascii_digit())
                && bytes.get(i + 4).is_none_or(|b| !b.is_ascii_digit())
        })
        .and_then(|(i, _)| s[i..i + 4].parse().ok())
}

impl<R: BufRead> Iterator for PubmedDocuments<R> {
    type Item = Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev.into_owned(),
                Err(e) => {
                    self.finished = true;
                    return Some(Err(self.xml_error(e.to_string())));
                }
            };
            match event {
                Event::Start(e) => {
                    let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                    if name == "MedlineCitation" {
                        self.citation = Some(CitationBuilder::default());
                    } else if let Some(c) = self.citation.as_mut() {
                        if name == "Author" && self.stack.last().is_some_and(|p| p == "AuthorList") {
                            c.authors_seen += 1;
                            c.affiliations_in_author = 0;
                        } else if name == "AffiliationInfo" {
                            c.affiliations_in_author += 1;
                        }
                    }
                    if self.capture.is_none() {
                        if let Some(kind) = self.capture_for(&name) {
                            self.capture = Some((kind, self.stack.len(), String::new()));
                        }
                    }
                    self.stack.push(name);
                }
                Event::End(e) => {
                    let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                    self.stack.pop();
                    if let Some((kind, depth, _)) = &self.capture {
                        if *depth == self.stack.len() {
                            let kind = *kind;
                            let (_, _, text) = self.capture.take().expect("capture present");
                            self.finish_capture(kind, text);
                        }
                    }
                    if name == "MedlineCitation" {
                        if let Some(builder) = self.citation.take() {
                            if let Some(doc) = builder.finish(&mut self.tally) {
                                return Some(Ok(doc));
                            }
                        }
                    }
                }
                Event::Text(t) => {
                    if self.capture.is_some() {
                        match t.decode() {
                            Ok(s) => {
                                let s = s.into_owned();
                                self.append_text(&s);
                            }
                            Err(e) => {
                                self.finished = true;
                                return Some(Err(self.xml_error(e.to_string())));
                            }
                        }
                    }
                }
                Event::CData(t) => {
                    if self.capture.is_some() {
                        let s = String::from_utf8_lossy(&t).into_owned();
                        self.append_text(&s);
                    }
                }
                Event::GeneralRef(r) => {
                    if self.capture.is_some() {
                        let resolved = match r.resolve_char_ref() {
                            Ok(Some(ch)) => ch.to_string(),
                            Ok(None) => {
                                let name = String::from_utf8_lossy(&r).into_owned();
                                match resolve_predefined_entity(&name) {
                                    Some(s) => s.to_string(),
                                    None => format!("&{name};"),
                                }
                            }
                            Err(e) => {
                                self.finished = true;
                                return Some(Err(self.xml_error(e.to_string())));
                            }
                        };
                        self.append_text(&resolved);
                    }
                }
                Event::Eof => {
                    self.finished = true;
                    if let Some(open) = self.stack.last() {
                        let msg = format!("unexpected end of input inside <{open}>");
                        return Some(Err(self.xml_error(msg)));
                    }
                    return None;
                }
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn article(pmid: &str, body: &str) -> String {
        format!(
            "<PubmedArticle><MedlineCitation Status=\"MEDLINE\" Owner=\"NLM\"><PMID Version=\"1\">{pmid}</PMID>{body}</MedlineCitation><PubmedData><History><PubMedPubDate PubStatus=\"entrez\"><Year>1999</Year></PubMedPubDate></History></PubmedData></PubmedArticle>"
        )
    }

    fn wrap(articles: &[String]) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<!DOCTYPE PubmedArticleSet PUBLIC \"-//NLM//DTD PubMedArticle, 1st January 2025//EN\" \"https://dtd.nlm.nih.gov/ncbi/pubmed/out/pubmed_250101.dtd\">\n<PubmedArticleSet>{}</PubmedArticleSet>",
            articles.concat()
        )
    }

    fn parse(xml: &str) -> (Vec<Result<Document, IngestError>>, SkipTally) {
        let mut it = parse_pubmed_xml(Cursor::new(xml.as_bytes().to_vec()));
        let out: Vec<_> = it.by_ref().collect();
        (out, it.tally().clone())
    }

    const FULL_BODY: &str = r#"<Article PubModel="Print-Electronic"><Journal><JournalIssue CitedMedium="Internet"><Volume>5</Volume><PubDate><Year>2021</Year><Month>Mar</Month></PubDate></JournalIssue><Title>Nature Neuroscience</Title></Journal><ArticleTitle>A <i>careful</i> study &amp; more.</ArticleTitle><Abstract><AbstractText Label="BACKGROUND">First part &lt;here&gt;.</AbstractText><AbstractText Label="RESULTS">Second part with H<sub>2</sub>O &#x3b1;.</AbstractText></Abstract><AuthorList CompleteYN="Y"><Author ValidYN="Y"><LastName>Doe</LastName><AffiliationInfo><Affiliation>Dept. X, Peking University, Beijing, China.</Affiliation></AffiliationInfo><AffiliationInfo><Affiliation>Second affiliation, Germany</Affiliation></AffiliationInfo></Author><Author ValidYN="Y"><LastName>Roe</LastName><AffiliationInfo><Affiliation>Other place, USA</Affiliation></AffiliationInfo></Author></AuthorList><Language>eng</Language><ArticleDate DateType="Electronic"><Year>2020</Year><Month>12</Month></ArticleDate></Article>"#;

    #[test]
    fn full_record() {
        let (docs, tally) = parse(&wrap(&[article("123", FULL_BODY)]));
        assert_eq!(docs.len(), 1);
        let d = docs.into_iter().next().unwrap().unwrap();
        assert_eq!(d.id, "123");
        assert_eq!(d.year, 2020, "earliest of PubDate 2021 and ArticleDate 2020");
        assert_eq!(d.title, "A careful study & more.");
        assert_eq!(d.text, "First part <here>. Second part with H2O α.");
        assert_eq!(d.journal.as_deref(), Some("Nature Neuroscience"));
        assert_eq!(d.language.as_deref(), Some("eng"));
        assert_eq!(
            d.extra.get("affiliation").map(String::as_str),
            Some("Dept. X, Peking University, Beijing, China.")
        );
        assert_eq!(tally.total(), 0);
    }

    #[test]
    fn minimal_record() {
        let text = "y".repeat(300);
        let body = format!(
            "<Article><Journal><JournalIssue><PubDate><Year>2020</Year></PubDate></JournalIssue></Journal><Abstract><AbstractText>{text}</AbstractText></Abstract></Article>"
        );
        let (docs, _) = parse(&wrap(&[article("7", &body)]));
        let d = docs.into_iter().next().unwrap().unwrap();
        assert_eq!(d.year, 2020);
        assert_eq!(d.char_len(), 300);
    }

    #[test]
    fn missing_abstract_is_tallied() {
        let body = "<Article><Journal><JournalIssue><PubDate><Year>2020</Year></PubDate></JournalIssue></Journal><ArticleTitle>No abstract</ArticleTitle></Article>";
        let (docs, tally) = parse(&wrap(&[article("8", body)]));
        assert!(docs.is_empty());
        assert_eq!(tally.missing_abstract, 1);
    }

    #[test]
    fn medline_date_and_bad_year() {
        let good = "<Article><Journal><JournalIssue><PubDate><MedlineDate>2015 Nov-Dec</MedlineDate></PubDate></JournalIssue></Journal><Abstract><AbstractText>text</AbstractText></Abstract></Article>";
        let bad = "<Article><Journal><JournalIssue><PubDate><Season>Spring</Season></PubDate></JournalIssue></Journal><Abstract><AbstractText>text</AbstractText></Abstract></Article>";
        let (docs, tally) = parse(&wrap(&[article("1", good), article("2", bad)]));
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].as_ref().unwrap().year, 2015);
        assert_eq!(tally.bad_year, 1);
    }

    #[test]
    fn delete_citation_pmids_ignored() {
        let body = "<Article><Journal><JournalIssue><PubDate><Year>2020</Year></PubDate></JournalIssue></Journal><Abstract><AbstractText>a b c</AbstractText></Abstract></Article>";
        let xml = format!(
            "<PubmedArticleSet>{}<DeleteCitation><PMID Version=\"1\">999</PMID></DeleteCitation></PubmedArticleSet>",
            article("5", body)
        );
        let (docs, tally) = parse(&xml);
        assert_eq!(docs.len(), 1);
        assert_eq!(tally.total(), 0);
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let xml = "<PubmedArticleSet><PubmedArticle><MedlineCitation><PMID>1</PMID></Oops></PubmedArticleSet>";
        let (docs, _) = parse(xml);
        let err = docs.into_iter().last().unwrap().unwrap_err();
        match err {
            IngestError::Xml { offset, .. } => assert!(offset > 0 && offset as usize <= xml.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_input_is_an_error() {
        let xml = "<PubmedArticleSet><PubmedArticle><MedlineCitation><PMID>1</PMID>";
        let (docs, _) = parse(xml);
        assert!(matches!(docs.last(), Some(Err(IngestError::Xml { .. }))));
    }

    #[test]
    fn gzipped_stream() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let xml = wrap(&[article("123", FULL_BODY)]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(xml.as_bytes()).unwrap();
        let gz = enc.finish().unwrap();
        let input = crate::ingest::maybe_gunzip(Cursor::new(gz)).unwrap();
        let docs: Vec<_> = parse_pubmed_xml(input).collect::<Result<_, _>>().unwrap();
        assert_eq!(docs.len(), 1);
    }

    #[test]
    fn year_extraction() {
        assert_eq!(first_four_digit_year("1998 Dec-1999 Jan"), Some(1998));
        assert_eq!(first_four_digit_year("Spring 2001"), Some(2001));
        assert_eq!(first_four_digit_year("12345"), None);
        assert_eq!(first_four_digit_year(""), None);
    }
}
