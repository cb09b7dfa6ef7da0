//! `report`: every figure table in one directory with a manifest naming
//! the figure kinds each file feeds.

use std::fs;
use std::io::Write;
use std::path::Path;

use excessvocab::count::OccurrenceMatrix;
use excessvocab::excess::{counterfactual, summarize_year, write_stats_csv, write_year_summaries};
use serde::Serialize;

use crate::commands::{census, census_years, create, ensure_out_dir, lemmatizer_for, load_annotations, load_matrix, write_json};
use crate::config::RunConfig;
use crate::Failure;

#[derive(Debug, Serialize)]
struct Entry {
    file: String,
    kinds: Vec<&'static str>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    target_year: i32,
    files: Vec<Entry>,
    /// Optional tables whose producing subcommand has not been run.
    missing: Vec<String>,
}

/// Tables copied from the output directory when present.
const COPIED: [(&str, &[&str]); 4] = [
    ("sweep.csv", &["sweep"]),
    ("gaps.csv", &["subgroup_dots"]),
    ("gap.csv", &[]),
    ("local_delta.csv", &[]),
];

pub fn report(cfg: &RunConfig) -> Result<(), Failure> {
    let m = load_matrix(cfg)?;
    let ann = load_annotations(cfg)?.unwrap_or_default();
    let lem = lemmatizer_for(cfg, &m)?;
    ensure_out_dir(cfg)?;
    let dir = cfg.paths.out_dir.join("report");
    fs::create_dir_all(&dir)?;
    let year = cfg.analysis.target_year;
    let mut files = Vec::new();

    let target = census(cfg, &m, year)?;
    let name = format!("excess_{year}.csv");
    let mut w = create(&dir.join(&name))?;
    write_stats_csv(&mut w, &target.stats, Some(&ann), &lem)?;
    w.flush()?;
    files.push(Entry {
        file: name,
        kinds: vec!["scatter_gap", "scatter_ratio"],
    });

    let rows = census_years(&m)
        .into_iter()
        .map(|y| Ok(summarize_year(&census(cfg, &m, y)?, &ann, &lem)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let mut w = create(&dir.join("excess_per_year.csv"))?;
    write_year_summaries(&mut w, &rows)?;
    w.flush()?;
    files.push(Entry {
        file: "excess_per_year.csv".into(),
        kinds: vec!["stacked_bars"],
    });

    write_timeseries(cfg, &m, &dir.join("timeseries.csv"))?;
    files.push(Entry {
        file: "timeseries.csv".into(),
        kinds: vec!["timeseries"],
    });

    let mut missing = Vec::new();
    for (name, kinds) in COPIED {
        let src = cfg.out(name);
        if src.exists() {
            fs::copy(&src, dir.join(name))?;
            files.push(Entry {
                file: name.into(),
                kinds: kinds.to_vec(),
            });
        } else {
            missing.push(name.to_string());
        }
    }
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            target_year: year,
            files,
            missing,
        },
    )?;
    println!("report: {}", dir.display());
    Ok(())
}

/// `word,year,p,q` for the configured highlight words present in the
/// matrix; `q` is empty for years without the two projection years.
fn write_timeseries(cfg: &RunConfig, m: &OccurrenceMatrix, path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["word", "year", "p", "q"])?;
    let smoothing = cfg.analysis.smoothing;
    for word in &cfg.analysis.highlight_words {
        let Some(idx) = m.word_index(word) else { continue };
        let row = m.row(idx);
        let p: Vec<f64> = row
            .iter()
            .zip(m.totals())
            .map(|(&a, &b)| smoothing.frequency(a, b))
            .collect::<Result<_, _>>()?;
        for (i, &y) in m.years().iter().enumerate() {
            let q = match (m.year_index(y - 3), m.year_index(y - 2)) {
                (Some(i3), Some(i2)) => counterfactual(p[i3], p[i2]).to_string(),
                _ => String::new(),
            };
            w.write_record([word.clone(), y.to_string(), p[i].to_string(), q])?;
        }
    }
    w.flush()?;
    Ok(())
}
