use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{gap, MarkerError, MarkerSet};
use crate::count::{for_each_token, ContainmentCounts, CountError, ShardedPass};
use crate::ingest::Document;

/// Metadata-only document predicate. String comparisons ignore ASCII case.
///
/// JSON form is externally tagged, e.g. `{"country": "China"}` or
/// `{"all": [{"country": "China"}, {"field": "computation"}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Country(String),
    Journal(String),
    JournalIn(Vec<String>),
    /// `*` matches any run of characters.
    JournalGlob(String),
    Field(String),
    Extra { key: String, value: String },
    /// Conjunction; empty matches every document.
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

fn same(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.to_lowercase().chars().collect();
    let t: Vec<char> = text.to_lowercase().chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

impl Predicate {
    pub fn matches(&self, doc: &Document) -> bool {
        match self {
            Predicate::Country(c) => doc.country.as_deref().is_some_and(|d| same(d, c)),
            Predicate::Journal(j) => doc.journal.as_deref().is_some_and(|d| same(d, j)),
            Predicate::JournalIn(js) => doc.journal.as_deref().is_some_and(|d| js.iter().any(|j| same(d, j))),
            Predicate::JournalGlob(g) => doc.journal.as_deref().is_some_and(|d| glob_match(g.trim(), d.trim())),
            Predicate::Field(f) => doc.fields.iter().any(|d| same(d, f)),
            Predicate::Extra { key, value } => doc.extra.get(key).is_some_and(|v| same(v, value)),
            Predicate::All(ps) => ps.iter().all(|p| p.matches(doc)),
            Predicate::Any(ps) => ps.iter().any(|p| p.matches(doc)),
            Predicate::Not(p) => !p.matches(doc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub name: String,
    pub predicate: Predicate,
}

/// Parses a JSON list of `{name, predicate}`; names must be unique.
pub fn parse_subgroup_specs(src: &str) -> Result<Vec<SubgroupSpec>, MarkerError> {
    let specs: Vec<SubgroupSpec> = serde_json::from_str(src)?;
    let mut seen = BTreeSet::new();
    for s in &specs {
        if s.name.trim().is_empty() {
            return Err(MarkerError::Spec("subgroup with empty name".into()));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(MarkerError::Spec(format!("duplicate subgroup name {:?}", s.name)));
        }
    }
    Ok(specs)
}

/// Minimum papers per year over an inclusive range of years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Eligibility {
    pub min_papers: u64,
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for Eligibility {
    fn default() -> Self {
        Eligibility {
            min_papers: 300,
            first_year: 2018,
            last_year: 2023,
        }
    }
}

impl Eligibility {
    /// `None` when eligible, otherwise the first failing year as
    /// `"2019: 299 papers < 300"`.
    pub fn check(&self, n_per_year: &BTreeMap<i32, u64>) -> Option<String> {
        (self.first_year..=self.last_year).find_map(|y| {
            let n = n_per_year.get(&y).copied().unwrap_or(0);
            (n < self.min_papers).then(|| format!("{y}: {n} papers < {}", self.min_papers))
        })
    }
}

/// One pass tallying, per subgroup and year, all documents and those
/// containing a rare or a common marker.
pub struct SubgroupPass<'a> {
    specs: &'a [SubgroupSpec],
    years: Vec<i32>,
    markers: HashMap<String, u8>,
}

const RARE_BIT: u8 = 1;
const COMMON_BIT: u8 = 2;

/// Per spec and year: `[total, rare hits, common hits]`.
pub type SubgroupAcc = Vec<[u64; 3]>;

impl<'a> SubgroupPass<'a> {
    pub fn new(specs: &'a [SubgroupSpec], rare: &MarkerSet, common: &MarkerSet, years: Vec<i32>) -> Self {
        let mut markers: HashMap<String, u8> = HashMap::new();
        for w in &rare.words {
            *markers.entry(w.clone()).or_default() |= RARE_BIT;
        }
        for w in &common.words {
            *markers.entry(w.clone()).or_default() |= COMMON_BIT;
        }
        SubgroupPass { specs, years, markers }
    }

    fn membership(&self, text: &str) -> u8 {
        let mut bits = 0u8;
        for_each_token(text, |t| {
            if let Some(&b) = self.markers.get(t) {
                bits |= b;
            }
        });
        bits
    }
}

impl ShardedPass for SubgroupPass<'_> {
    type Acc = SubgroupAcc;

    fn empty(&self) -> Self::Acc {
        vec![[0; 3]; self.specs.len() * self.years.len()]
    }

    fn add(&self, acc: &mut Self::Acc, doc: &Document) -> Result<(), CountError> {
        let Ok(y) = self.years.binary_search(&doc.year) else {
            return Ok(());
        };
        let mut bits = None;
        for (s, spec) in self.specs.iter().enumerate() {
            if !spec.predicate.matches(doc) {
                continue;
            }
            let b = *bits.get_or_insert_with(|| self.membership(&doc.text));
            let cell = &mut acc[s * self.years.len() + y];
            cell[0] += 1;
            cell[1] += u64::from(b & RARE_BIT != 0);
            cell[2] += u64::from(b & COMMON_BIT != 0);
        }
        Ok(())
    }

    fn merge(&self, mut a: Self::Acc, b: Self::Acc) -> Result<Self::Acc, CountError> {
        for (x, y) in a.iter_mut().zip(b) {
            for k in 0..3 {
                x[k] += y[k];
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupRow {
    pub name: String,
    pub eligible: bool,
    /// Why the subgroup was excluded.
    pub reason: Option<String>,
    pub delta_rare: Option<f64>,
    pub delta_common: Option<f64>,
    pub delta: Option<f64>,
    pub n_per_year: BTreeMap<i32, u64>,
}

impl<'a> SubgroupPass<'a> {
    /// Gaps per subgroup from an accumulated pass.
    pub fn finish(&self, acc: &SubgroupAcc, target_year: i32, eligibility: &Eligibility) -> Result<Vec<SubgroupRow>, MarkerError> {
        let ny = self.years.len();
        let mut rows = Vec::with_capacity(self.specs.len());
        for (s, spec) in self.specs.iter().enumerate() {
            let cells = &acc[s * ny..(s + 1) * ny];
            let n_per_year: BTreeMap<i32, u64> = self.years.iter().zip(cells).map(|(&y, c)| (y, c[0])).collect();
            let reason = eligibility.check(&n_per_year);
            let (delta_rare, delta_common, delta) = if reason.is_none() {
                let build = |k: usize| ContainmentCounts {
                    years: self.years.clone(),
                    hits: cells.iter().map(|c| c[k]).collect(),
                    totals: cells.iter().map(|c| c[0]).collect(),
                    out_of_range: 0,
                };
                let dr = gap(&build(1), target_year)?.delta;
                let dc = gap(&build(2), target_year)?.delta;
                (Some(dr), Some(dc), Some((dr + dc) / 2.0))
            } else {
                (None, None, None)
            };
            rows.push(SubgroupRow {
                name: spec.name.clone(),
                eligible: reason.is_none(),
                reason,
                delta_rare,
                delta_common,
                delta,
                n_per_year,
            });
        }
        Ok(rows)
    }
}

/// Years a subgroup table needs: the eligibility window plus Y−3…Y.
pub fn subgroup_years(target_year: i32, eligibility: &Eligibility) -> Vec<i32> {
    let lo = eligibility.first_year.min(target_year - 3);
    let hi = eligibility.last_year.max(target_year);
    (lo..=hi).collect()
}

/// Δ_rare, Δ_common, and their mean per subgroup, with the marker sets
/// fixed across subgroups. Ineligible subgroups carry a reason and no gaps.
pub fn subgroup_gaps(
    docs: &[Document],
    specs: &[SubgroupSpec],
    rare: &MarkerSet,
    common: &MarkerSet,
    target_year: i32,
    eligibility: &Eligibility,
) -> Result<Vec<SubgroupRow>, MarkerError> {
    let pass = SubgroupPass::new(specs, rare, common, subgroup_years(target_year, eligibility));
    let acc = pass.run_parallel(docs)?;
    pass.finish(&acc, target_year, eligibility)
}

/// `subgroup,delta_rare,delta_common,delta,n_<year>…,eligible,reason`.
pub fn write_gaps_csv<W: Write>(out: W, rows: &[SubgroupRow]) -> Result<(), MarkerError> {
    let mut w = csv::Writer::from_writer(out);
    let years: Vec<i32> = rows.first().map(|r| r.n_per_year.keys().copied().collect()).unwrap_or_default();
    let mut header = vec!["subgroup".to_string(), "delta_rare".into(), "delta_common".into(), "delta".into()];
    header.extend(years.iter().map(|y| format!("n_{y}")));
    header.extend(["eligible".to_string(), "reason".into()]);
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![r.name.clone(), opt(r.delta_rare), opt(r.delta_common), opt(r.delta)];
        rec.extend(years.iter().map(|y| r.n_per_year.get(y).copied().unwrap_or(0).to_string()));
        rec.push(if r.eligible { "1".into() } else { "0".into() });
        rec.push(r.reason.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markergap::SetKind;

    fn doc(year: i32, country: &str, journal: &str, text: &str) -> Document {
        let mut d = Document::new(format!("{year}-{country}-{journal}-{text}"), year, text);
        d.country = Some(country.into());
        d.journal = Some(journal.into());
        d
    }

    #[test]
    fn predicates() {
        let mut d = doc(2020, "China", "Sensors", "x");
        d.fields.insert("computation".into());
        d.extra.insert("gender".into(), "female".into());
        let p: Predicate = serde_json::from_str(r#"{"all": [{"country": "china"}, {"field": "computation"}]}"#).unwrap();
        assert!(p.matches(&d));
        assert!(Predicate::JournalIn(vec!["Cureus".into(), "sensors".into()]).matches(&d));
        assert!(Predicate::JournalGlob("Sens*".into()).matches(&d));
        assert!(!Predicate::JournalGlob("*Reports".into()).matches(&d));
        assert!(Predicate::Extra { key: "gender".into(), value: "Female".into() }.matches(&d));
        assert!(Predicate::All(vec![]).matches(&d));
        assert!(!Predicate::Any(vec![]).matches(&d));
        assert!(Predicate::Not(Box::new(Predicate::Country("UK".into()))).matches(&d));
        d.journal = None;
        assert!(!Predicate::Journal("Sensors".into()).matches(&d));
    }

    #[test]
    fn glob() {
        assert!(glob_match("scientific reports*", "scientific reports"));
        assert!(glob_match("*a*b*", "xxaxxbxx"));
        assert!(!glob_match("a*b", "ab c"));
        assert!(glob_match("*", ""));
    }

    #[test]
    fn spec_parsing() {
        let specs = parse_subgroup_specs(
            r#"[{"name": "china", "predicate": {"country": "China"}},
                {"name": "mdpi", "predicate": {"journal_in": ["Sensors", "Cancers"]}}]"#,
        )
        .unwrap();
        assert_eq!(specs.len(), 2);
        assert!(parse_subgroup_specs(r#"[{"name": "a", "predicate": {"all": []}}, {"name": "a", "predicate": {"all": []}}]"#).is_err());
        assert!(parse_subgroup_specs(r#"[{"name": "a", "predicate": {"planet": "Mars"}}]"#).is_err());
    }

    #[test]
    fn eligibility_reason() {
        let e = Eligibility::default();
        let mut n: BTreeMap<i32, u64> = (2018..=2023).map(|y| (y, 300)).collect();
        assert_eq!(e.check(&n), None);
        n.insert(2019, 299);
        assert_eq!(e.check(&n).unwrap(), "2019: 299 papers < 300");
    }

    #[test]
    fn small_table() {
        let elig = Eligibility {
            min_papers: 2,
            first_year: 2021,
            last_year: 2023,
        };
        let mut docs = Vec::new();
        for y in 2021..=2024 {
            docs.push(doc(y, "A", "J", "plain text"));
            docs.push(doc(y, "A", "J", if y == 2024 { "delves here" } else { "plain" }));
            docs.push(doc(y, "B", "J", "plain"));
        }
        let specs = vec![
            SubgroupSpec { name: "a".into(), predicate: Predicate::Country("A".into()) },
            SubgroupSpec { name: "b".into(), predicate: Predicate::Country("B".into()) },
        ];
        let rare = MarkerSet::new("rare", SetKind::Rare, ["delves"]).unwrap();
        let common = MarkerSet::new("common", SetKind::Common, ["notably"]).unwrap();
        let rows = subgroup_gaps(&docs, &specs, &rare, &common, 2024, &elig).unwrap();
        assert!(rows[0].eligible);
        // P = 2/3, Q = 1/3.
        assert!((rows[0].delta_rare.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(rows[0].delta_common, Some(0.0));
        assert!(!rows[1].eligible);
        assert_eq!(rows[1].reason.as_deref(), Some("2021: 1 papers < 2"));
        let mut buf = Vec::new();
        write_gaps_csv(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("subgroup,delta_rare,delta_common,delta,n_2021,n_2022,n_2023,n_2024,eligible,reason\n"));
        assert!(s.contains("\nb,,,,1,1,1,1,0,2021: 1 papers < 2\n"), "{s}");
    }
}
