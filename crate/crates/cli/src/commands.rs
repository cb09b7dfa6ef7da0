use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use excessvocab::clean::{clean_document, load_rules, CleanDecision, CleanReport, RuleSet};
use excessvocab::count::{
    read_matrix_file, write_matrix_file, CountError, DocFrequencies, OccurrenceMatrix, OccurrencePass, ProfilePass,
    ShardedPass, VocabFilter, YearMode,
};
use excessvocab::excess::{
    excess_words, summarize_year, write_stats_csv, write_year_summaries, AnnotationTable, ExcessCensus, Lemmatizer,
};
use excessvocab::ingest::{
    attach_metadata, filter_document, load_field_rules, open_input, parse_jsonl, parse_pubmed_xml, starter_field_rules,
    write_jsonl_line, CountryTable, Document, FieldRule, FilterDecision, InputFormat, ParseMode, SkipTally,
};
use excessvocab::markergap::{
    combined_estimate, gap as set_gap, join_points, local_delta as compute_local_delta, parse_subgroup_specs, rare_candidates,
    rare_sweep, read_points_csv, subgroup_years, write_gaps_csv, write_local_delta_csv, write_sweep_csv, MarkerSet,
    SetKind, SubgroupPass,
};
use excessvocab::synth::{generate_corpus, inject_markers, write_truth_csv, InjectionSpec, InjectionTruth, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Failure;

pub const DOCUMENTS: &str = "documents.jsonl";
pub const CLEAN: &str = "clean.jsonl";
pub const MATRIX: &str = "matrix.csv.gz";
pub const RARE_MARKERS: &str = "rare_markers.txt";

pub(crate) fn ensure_out_dir(cfg: &RunConfig) -> Result<(), Failure> {
    fs::create_dir_all(&cfg.paths.out_dir)
        .map_err(|e| Failure::data(format!("output directory {}: {e}", cfg.paths.out_dir.display())))
}

fn require(path: PathBuf, producer: &str) -> Result<PathBuf, Failure> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::missing(&path, producer))
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn year_mode(cfg: &RunConfig) -> YearMode {
    match cfg.mode {
        ParseMode::Strict => YearMode::Strict,
        ParseMode::Lenient => YearMode::Lenient,
    }
}

/// Streams canonical JSONL documents, prefixing errors with the file name.
fn documents(path: &Path, mode: ParseMode) -> Result<impl Iterator<Item = Result<Document, Failure>>, Failure> {
    let name = path.display().to_string();
    let reader = open_input(path).map_err(|e| Failure::data(format!("{name}: {e}")))?;
    Ok(parse_jsonl(reader, mode).map(move |r| r.map_err(|e| Failure::data(format!("{name}: {e}")))))
}

fn corpus_path(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    require(cfg.out(CLEAN), "clean` or `excessvocab synth")
}

pub(crate) fn matrix_path(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    match &cfg.paths.matrix {
        Some(p) if p.exists() => Ok(p.clone()),
        Some(p) => Err(Failure::data(format!("matrix {} does not exist", p.display()))),
        None => require(cfg.out(MATRIX), "count"),
    }
}

pub(crate) fn load_matrix(cfg: &RunConfig) -> Result<OccurrenceMatrix, Failure> {
    let path = matrix_path(cfg)?;
    read_matrix_file(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub(crate) fn load_annotations(cfg: &RunConfig) -> Result<Option<AnnotationTable>, Failure> {
    cfg.paths
        .annotations
        .as_deref()
        .map(AnnotationTable::load)
        .transpose()
        .map_err(Failure::from)
}

pub(crate) fn lemmatizer_for(cfg: &RunConfig, m: &OccurrenceMatrix) -> Result<Lemmatizer, Failure> {
    Ok(Lemmatizer::load(cfg.paths.lemma_overrides.as_deref(), cfg.paths.spelling.as_deref())?
        .with_lexicon(m.words().iter().cloned()))
}

pub(crate) fn census(cfg: &RunConfig, m: &OccurrenceMatrix, year: i32) -> Result<ExcessCensus, Failure> {
    Ok(excess_words(m, year, &cfg.thresholds, cfg.analysis.smoothing)?)
}

fn rare_set(cfg: &RunConfig) -> Result<MarkerSet, Failure> {
    let path = match &cfg.paths.rare_markers {
        Some(p) => p.clone(),
        None => require(cfg.out(RARE_MARKERS), "sweep")?,
    };
    Ok(MarkerSet::load(&path, SetKind::Rare)?)
}

fn common_set(cfg: &RunConfig) -> Result<MarkerSet, Failure> {
    match &cfg.paths.common_markers {
        Some(p) => Ok(MarkerSet::load(p, SetKind::Common)?),
        None => Ok(MarkerSet::default_common()),
    }
}

#[derive(Debug, Serialize)]
struct FileReport {
    path: String,
    documents: u64,
    accepted: u64,
    skipped: SkipTally,
}

#[derive(Debug, Serialize)]
struct IngestReport {
    accepted: u64,
    skipped: SkipTally,
    files: Vec<FileReport>,
}

struct Accepter<'a> {
    cfg: &'a RunConfig,
    field_rules: Vec<FieldRule>,
    countries: CountryTable,
    seen: HashSet<String>,
    out: BufWriter<File>,
}

impl Accepter<'_> {
    /// Deduplicates by id (first occurrence wins), filters, attaches
    /// metadata, and writes accepted documents.
    fn offer(&mut self, mut doc: Document, tally: &mut SkipTally) -> Result<bool, Failure> {
        if !self.seen.insert(doc.id.clone()) {
            tally.duplicate_id += 1;
            return Ok(false);
        }
        if let FilterDecision::Reject(reason) = filter_document(&doc, &self.cfg.filter) {
            tally.reject(reason);
            return Ok(false);
        }
        attach_metadata(&mut doc, &self.field_rules, &self.countries);
        write_jsonl_line(&mut self.out, &doc)?;
        Ok(true)
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.paths.inputs.is_empty() {
        return Err(Failure::usage("ingest: no input files"));
    }
    let formats = cfg
        .paths
        .inputs
        .iter()
        .map(|p| {
            InputFormat::from_path(p)
                .ok_or_else(|| Failure::usage(format!("{}: expected .xml, .jsonl or .json (optionally .gz)", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ensure_out_dir(cfg)?;
    let mut acc = Accepter {
        cfg,
        field_rules: match &cfg.paths.field_rules {
            Some(p) => load_field_rules(p)?,
            None => starter_field_rules(),
        },
        countries: match &cfg.paths.countries {
            Some(p) => CountryTable::load(p)?,
            None => CountryTable::starter(),
        },
        seen: HashSet::new(),
        out: create(&cfg.out(DOCUMENTS))?,
    };
    let mut report = IngestReport {
        accepted: 0,
        skipped: SkipTally::default(),
        files: Vec::new(),
    };
    for (path, format) in cfg.paths.inputs.iter().zip(formats) {
        let name = path.display().to_string();
        let reader = open_input(path).map_err(|e| Failure::data(format!("{name}: {e}")))?;
        let mut tally = SkipTally::default();
        let (mut documents, mut accepted) = (0u64, 0u64);
        let mut take = |doc: Document, tally: &mut SkipTally| -> Result<(), Failure> {
            documents += 1;
            accepted += u64::from(acc.offer(doc, tally)?);
            Ok(())
        };
        match format {
            InputFormat::PubmedXml => {
                let mut it = parse_pubmed_xml(reader);
                for doc in it.by_ref() {
                    take(doc.map_err(|e| Failure::data(format!("{name}: {e}")))?, &mut tally)?;
                }
                tally.absorb(it.tally());
            }
            InputFormat::Jsonl => {
                let mut it = parse_jsonl(reader, cfg.mode);
                for doc in it.by_ref() {
                    take(doc.map_err(|e| Failure::data(format!("{name}: {e}")))?, &mut tally)?;
                }
                tally.absorb(it.tally());
            }
        }
        report.accepted += accepted;
        report.skipped.absorb(&tally);
        report.files.push(FileReport {
            path: name,
            documents,
            accepted,
            skipped: tally,
        });
    }
    acc.out.flush()?;
    write_json(&cfg.out("ingest_report.json"), &report)?;
    println!("ingest: {} documents accepted, {} skipped", report.accepted, report.skipped.total());
    Ok(())
}

pub fn clean(cfg: &RunConfig) -> Result<(), Failure> {
    let input = require(cfg.out(DOCUMENTS), "ingest")?;
    let rules = match &cfg.paths.cleaning_rules {
        Some(p) => load_rules(p)?,
        None => RuleSet::starter(),
    };
    let mut out = create(&cfg.out(CLEAN))?;
    let mut report = CleanReport::default();
    for doc in documents(&input, cfg.mode)? {
        let mut doc = doc?;
        if let CleanDecision::Keep { .. } = clean_document(&mut doc, &rules, cfg.filter.min_chars, &mut report) {
            write_jsonl_line(&mut out, &doc)?;
        }
    }
    out.flush()?;
    write_json(&cfg.out("clean_report.json"), &report)?;
    println!(
        "clean: {} seen, {} modified, {} dropped, {} too short after cleaning",
        report.documents_seen, report.documents_modified, report.documents_dropped, report.documents_too_short
    );
    Ok(())
}

/// First counting pass: document frequencies and the set of years seen.
struct VocabPass(VocabFilter);

impl ShardedPass for VocabPass {
    type Acc = (DocFrequencies, BTreeSet<i32>);

    fn empty(&self) -> Self::Acc {
        Default::default()
    }

    fn add(&self, acc: &mut Self::Acc, doc: &Document) -> Result<(), CountError> {
        acc.0.add(doc, self.0);
        acc.1.insert(doc.year);
        Ok(())
    }

    fn merge(&self, a: Self::Acc, mut b: Self::Acc) -> Result<Self::Acc, CountError> {
        let mut years = a.1;
        years.append(&mut b.1);
        Ok((a.0.merge(b.0), years))
    }
}

#[derive(Debug, Serialize)]
struct CountReport {
    documents: u64,
    counted: u64,
    out_of_range: u64,
    words: usize,
    years: Vec<i32>,
    totals: BTreeMap<i32, u64>,
}

pub fn count(cfg: &RunConfig) -> Result<(), Failure> {
    let input = corpus_path(cfg)?;
    let shard = cfg.count.shard_size;
    let (df, seen_years) = VocabPass(cfg.count.vocab).run_stream(documents(&input, cfg.mode)?, shard)?;
    if df.n_docs == 0 {
        return Err(Failure::data("no documents"));
    }
    let n_docs = df.n_docs;
    let (lo, hi) = match cfg.count.years {
        Some(r) => r,
        None => (*seen_years.first().expect("non-empty"), *seen_years.last().expect("non-empty")),
    };
    let years: Vec<i32> = (lo..=hi).collect();
    let vocab = df.into_vocabulary(cfg.count.min_df)?;
    let pass = OccurrencePass::new(&vocab, years.clone(), year_mode(cfg))?;
    let (m, out_of_range) = pass.run_stream(documents(&input, cfg.mode)?, shard)?;
    write_matrix_file(&m, &cfg.out(MATRIX))?;
    let report = CountReport {
        documents: n_docs,
        counted: n_docs - out_of_range,
        out_of_range,
        words: m.words().len(),
        years: years.clone(),
        totals: years.iter().copied().zip(m.totals().iter().copied()).collect(),
    };
    write_json(&cfg.out("count_report.json"), &report)?;
    println!(
        "count: {} documents, {} words, years {lo}-{hi}, {out_of_range} out of range",
        report.counted, report.words
    );
    Ok(())
}

/// Years with the three earlier years present, i.e. those a census can
/// be computed for.
pub(crate) fn census_years(m: &OccurrenceMatrix) -> Vec<i32> {
    m.years()
        .iter()
        .copied()
        .filter(|&y| m.year_index(y - 3).is_some() && m.year_index(y - 2).is_some() && m.year_index(y - 1).is_some())
        .collect()
}

pub fn excess(cfg: &RunConfig, all_years: bool) -> Result<(), Failure> {
    let m = load_matrix(cfg)?;
    let ann = load_annotations(cfg)?;
    let lem = lemmatizer_for(cfg, &m)?;
    ensure_out_dir(cfg)?;
    let year = cfg.analysis.target_year;
    let c = census(cfg, &m, year)?;
    let path = cfg.out(&format!("excess_{year}.csv"));
    let mut w = create(&path)?;
    write_stats_csv(&mut w, &c.stats, ann.as_ref(), &lem)?;
    w.flush()?;
    println!("excess {year}: {} eligible, {} excess", c.eligible_count(), c.excess_count());
    if all_years {
        let empty = AnnotationTable::default();
        let ann = ann.as_ref().unwrap_or(&empty);
        let rows = census_years(&m)
            .into_iter()
            .map(|y| Ok(summarize_year(&census(cfg, &m, y)?, ann, &lem)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let mut w = create(&cfg.out("excess_per_year.csv"))?;
        write_year_summaries(&mut w, &rows)?;
        w.flush()?;
    }
    Ok(())
}

/// Containment counts for several sets in one document pass.
struct MultiContainment {
    years: Vec<i32>,
    n_sets: usize,
    /// Word → bitmask of the sets containing it.
    words: HashMap<String, u64>,
}

impl MultiContainment {
    fn new(sets: &[MarkerSet], years: Vec<i32>) -> Result<Self, Failure> {
        if sets.len() > 64 {
            return Err(Failure::usage("at most 64 marker sets per run"));
        }
        let mut words: HashMap<String, u64> = HashMap::new();
        for (i, s) in sets.iter().enumerate() {
            for w in &s.words {
                *words.entry(w.clone()).or_default() |= 1 << i;
            }
        }
        Ok(MultiContainment {
            years,
            n_sets: sets.len(),
            words,
        })
    }

    fn counts(&self, acc: &MultiAcc, set: usize) -> excessvocab::count::ContainmentCounts {
        let ny = self.years.len();
        excessvocab::count::ContainmentCounts {
            years: self.years.clone(),
            hits: acc.hits[set * ny..(set + 1) * ny].to_vec(),
            totals: acc.totals.clone(),
            out_of_range: acc.out_of_range,
        }
    }
}

struct MultiAcc {
    hits: Vec<u64>,
    totals: Vec<u64>,
    out_of_range: u64,
}

impl ShardedPass for MultiContainment {
    type Acc = MultiAcc;

    fn empty(&self) -> MultiAcc {
        MultiAcc {
            hits: vec![0; self.n_sets * self.years.len()],
            totals: vec![0; self.years.len()],
            out_of_range: 0,
        }
    }

    fn add(&self, acc: &mut MultiAcc, doc: &Document) -> Result<(), CountError> {
        let Ok(y) = self.years.binary_search(&doc.year) else {
            acc.out_of_range += 1;
            return Ok(());
        };
        acc.totals[y] += 1;
        let mut bits = 0u64;
        excessvocab::count::for_each_token(&doc.text, |t| {
            if let Some(b) = self.words.get(t) {
                bits |= b;
            }
        });
        for s in 0..self.n_sets {
            if bits & (1 << s) != 0 {
                acc.hits[s * self.years.len() + y] += 1;
            }
        }
        Ok(())
    }

    fn merge(&self, mut a: MultiAcc, b: MultiAcc) -> Result<MultiAcc, CountError> {
        a.hits.iter_mut().zip(b.hits).for_each(|(x, y)| *x += y);
        a.totals.iter_mut().zip(b.totals).for_each(|(x, y)| *x += y);
        a.out_of_range += b.out_of_range;
        Ok(a)
    }
}

#[derive(Debug, Serialize)]
struct Combined {
    year: i32,
    delta_rare: f64,
    delta_common: f64,
    delta: f64,
}

pub fn gap(cfg: &RunConfig) -> Result<(), Failure> {
    let input = corpus_path(cfg)?;
    let year = cfg.analysis.target_year;
    let sets: Vec<MarkerSet> = if cfg.paths.markers.is_empty() {
        vec![rare_set(cfg)?, common_set(cfg)?, MarkerSet::covid()]
    } else {
        cfg.paths
            .markers
            .iter()
            .map(|p| MarkerSet::load(p, SetKind::Custom))
            .collect::<Result<_, _>>()?
    };
    let (lo, hi) = cfg.count.years.unwrap_or((year - 3, year));
    let years: Vec<i32> = (lo..=hi).collect();
    let pass = MultiContainment::new(&sets, years.clone())?;
    let acc = pass.run_stream(documents(&input, cfg.mode)?, cfg.count.shard_size)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out("gap.csv"))?);
    w.write_record(["set", "kind", "n_words", "year", "P", "Q", "delta", "hits", "n_docs"])?;
    let (mut delta_rare, mut delta_common) = (None, None);
    for (i, set) in sets.iter().enumerate() {
        let counts = pass.counts(&acc, i);
        for &y in years.iter().filter(|&&y| y - 3 >= lo) {
            let g = set_gap(&counts, y)?;
            if y == year {
                match set.kind {
                    SetKind::Rare => delta_rare = Some(g.delta),
                    SetKind::Common => delta_common = Some(g.delta),
                    SetKind::Custom => {}
                }
                println!("gap {} {y}: P={:.6} Q={:.6} delta={:.6}", set.name, g.p, g.q, g.delta);
            }
            w.write_record([
                set.name.clone(),
                format!("{:?}", set.kind).to_uppercase(),
                set.words.len().to_string(),
                y.to_string(),
                g.p.to_string(),
                g.q.to_string(),
                g.delta.to_string(),
                g.hits.to_string(),
                g.n_docs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    if let (Some(dr), Some(dc)) = (delta_rare, delta_common) {
        let delta = combined_estimate(&sets[0], &sets[1], dr, dc)?;
        println!("combined {year}: delta={delta:.6}");
        write_json(
            &cfg.out("gap.json"),
            &Combined {
                year,
                delta_rare: dr,
                delta_common: dc,
                delta,
            },
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    year: i32,
    candidates: usize,
    annotated: bool,
    threshold: f64,
    n_words: usize,
    delta: f64,
}

pub fn sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let m = load_matrix(cfg)?;
    let input = corpus_path(cfg)?;
    let year = cfg.analysis.target_year;
    let c = census(cfg, &m, year)?;
    let ann = load_annotations(cfg)?;
    let mut candidates: BTreeMap<String, f64> = match &ann {
        Some(a) => rare_candidates(&c, a),
        None => {
            eprintln!("sweep: no annotations given; every excess word is a candidate");
            c.excess().map(|s| (s.word.clone(), s.p)).collect()
        }
    };
    let common = common_set(cfg)?;
    candidates.retain(|w, _| !common.words.contains(w));
    if candidates.is_empty() {
        return Err(Failure::data(format!("sweep: no rare-marker candidates for {year}")));
    }
    let pass = ProfilePass::new(&candidates, (year - 3..=year).collect(), YearMode::Lenient)?;
    let acc = pass.run_stream(documents(&input, cfg.mode)?, cfg.count.shard_size)?;
    let profile = pass.finish(acc);
    let sw = rare_sweep(&profile, &cfg.analysis.sweep_thresholds, year)?;
    let best = *sw
        .best()
        .ok_or_else(|| Failure::data("sweep: every threshold lies below all candidates"))?;
    let mut w = create(&cfg.out("sweep.csv"))?;
    write_sweep_csv(&mut w, &sw)?;
    w.flush()?;
    let mut w = create(&cfg.out(RARE_MARKERS))?;
    writeln!(w, "# rare markers for {year}, frequency below {}", best.threshold)?;
    for word in profile.subset_below(best.threshold) {
        writeln!(w, "{word}")?;
    }
    w.flush()?;
    write_json(
        &cfg.out("sweep.json"),
        &SweepSummary {
            year,
            candidates: candidates.len(),
            annotated: ann.is_some(),
            threshold: best.threshold,
            n_words: best.n_words,
            delta: best.delta,
        },
    )?;
    println!("sweep {year}: best T={} with {} words, delta={:.6}", best.threshold, best.n_words, best.delta);
    Ok(())
}

pub fn subgroups(cfg: &RunConfig) -> Result<(), Failure> {
    let spec_path = cfg
        .paths
        .subgroup_specs
        .as_deref()
        .ok_or_else(|| Failure::usage("subgroups: no subgroup specs (--specs or paths.subgroup_specs)"))?;
    let specs = parse_subgroup_specs(&fs::read_to_string(spec_path)?)?;
    let input = corpus_path(cfg)?;
    let (rare, common) = (rare_set(cfg)?, common_set(cfg)?);
    combined_estimate(&rare, &common, 0.0, 0.0)?;
    let year = cfg.analysis.target_year;
    let pass = SubgroupPass::new(&specs, &rare, &common, subgroup_years(year, &cfg.eligibility));
    let acc = pass.run_stream(documents(&input, cfg.mode)?, cfg.count.shard_size)?;
    let rows = pass.finish(&acc, year, &cfg.eligibility)?;
    let mut w = create(&cfg.out("gaps.csv"))?;
    write_gaps_csv(&mut w, &rows)?;
    w.flush()?;
    let eligible = rows.iter().filter(|r| r.eligible).count();
    println!("subgroups {year}: {eligible} of {} eligible", rows.len());
    Ok(())
}

pub fn local_delta(cfg: &RunConfig) -> Result<(), Failure> {
    let points_path = cfg
        .paths
        .points
        .as_deref()
        .ok_or_else(|| Failure::usage("local-delta: no coordinates (--points or paths.points)"))?;
    let rows = read_points_csv(File::open(points_path)?)?;
    let needs_docs = rows.iter().any(|r| r.year.is_none() || r.rare.is_none() || r.common.is_none());
    let needs_sets = rows.iter().any(|r| r.rare.is_none() || r.common.is_none());
    let docs: Vec<Document> = if needs_docs {
        let ids: HashSet<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        let mut docs = Vec::new();
        for d in documents(&corpus_path(cfg)?, cfg.mode)? {
            let d = d?;
            if ids.contains(d.id.as_str()) {
                docs.push(d);
            }
        }
        docs
    } else {
        Vec::new()
    };
    let common = common_set(cfg)?;
    let rare = if needs_sets { rare_set(cfg)? } else { common.clone() };
    let points = join_points(rows, &docs, &rare, &common)?;
    let (k, reference, target) = (cfg.analysis.local_k, cfg.analysis.reference_year, cfg.analysis.target_year);
    let report = compute_local_delta(&points, k, reference, target)?;
    ensure_out_dir(cfg)?;
    let mut w = create(&cfg.out("local_delta.csv"))?;
    write_local_delta_csv(&mut w, &report)?;
    w.flush()?;
    println!(
        "local-delta {reference}->{target}, k={k}: {} points, {} with too few neighbours",
        report.rows.len(),
        report.errors
    );
    Ok(())
}

/// The `synth` spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub corpus: SyntheticSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<InjectionSpec>,
}

pub fn synth(cfg: &RunConfig) -> Result<(), Failure> {
    let spec_path = cfg
        .paths
        .synth_spec
        .as_deref()
        .ok_or_else(|| Failure::usage("synth: no spec (--spec or paths.synth_spec)"))?;
    let mut spec: SynthFile = serde_json::from_str(&fs::read_to_string(spec_path)?)
        .map_err(|e| Failure::data(format!("{}: {e}", spec_path.display())))?;
    if let Some(seed) = cfg.seed {
        spec.corpus.seed = seed;
    }
    let mut docs = generate_corpus(&spec.corpus)?;
    let truth = match &spec.injection {
        Some(inj) => inject_markers(&mut docs, inj, spec.corpus.seed)?,
        None => InjectionTruth::default(),
    };
    ensure_out_dir(cfg)?;
    let mut w = create(&cfg.out(CLEAN))?;
    for d in &docs {
        write_jsonl_line(&mut w, d)?;
    }
    w.flush()?;
    let mut w = create(&cfg.out("truth.csv"))?;
    write_truth_csv(&mut w, &docs, &truth)?;
    w.flush()?;
    if let Some(inj) = &spec.injection {
        let mut w = create(&cfg.out("injected_markers.txt"))?;
        let pool: BTreeSet<&str> = inj.marker_pool.iter().map(String::as_str).collect();
        for word in pool {
            writeln!(w, "{word}")?;
        }
        w.flush()?;
    }
    write_json(&cfg.out("synth_spec.json"), &spec)?;
    println!(
        "synth: {} documents, {} processed, {} censored",
        docs.len(),
        truth.processed.len(),
        truth.censored.len()
    );
    Ok(())
}
