use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MarkerError, MarkerSet};
use crate::ingest::Document;
use crate::knn::KdTree;

/// A document placed in a precomputed 2D embedding, with its marker-set
/// membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub id: String,
    pub year: i32,
    pub x: f64,
    pub y: f64,
    pub rare: bool,
    pub common: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDelta {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub delta: Option<f64>,
    pub delta_rare: Option<f64>,
    pub delta_common: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDeltaReport {
    pub rows: Vec<LocalDelta>,
    /// Points for which fewer than `k` neighbours existed in a year.
    pub errors: usize,
}

struct YearIndex {
    tree: KdTree,
    rare: Vec<bool>,
    common: Vec<bool>,
}

impl YearIndex {
    fn new(points: &[EmbeddedPoint], year: i32) -> Self {
        let sel: Vec<&EmbeddedPoint> = points.iter().filter(|p| p.year == year).collect();
        YearIndex {
            tree: KdTree::new(sel.iter().map(|p| [p.x, p.y]).collect()),
            rare: sel.iter().map(|p| p.rare).collect(),
            common: sel.iter().map(|p| p.common).collect(),
        }
    }

    /// Fractions of the k nearest containing a rare / common marker.
    fn fractions(&self, q: [f64; 2], k: usize) -> (f64, f64) {
        let nn = self.tree.nearest(q, k);
        let n = nn.len() as f64;
        let r = nn.iter().filter(|&&i| self.rare[i]).count() as f64;
        let c = nn.iter().filter(|&&i| self.common[i]).count() as f64;
        (r / n, c / n)
    }
}

/// For every point, compares marker fractions among its `k` nearest
/// target-year and `k` nearest reference-year neighbours (the point itself
/// included when it belongs to that year). Δ is the mean of the rare and
/// common differences; no counterfactual projection is applied.
pub fn local_delta(points: &[EmbeddedPoint], k: usize, reference_year: i32, target_year: i32) -> Result<LocalDeltaReport, MarkerError> {
    if k == 0 {
        return Err(MarkerError::InvalidK);
    }
    if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(MarkerError::NonFinite { id: p.id.clone() });
    }
    let reference = YearIndex::new(points, reference_year);
    let target = YearIndex::new(points, target_year);
    let rows: Vec<LocalDelta> = points
        .par_iter()
        .map(|p| {
            let mut row = LocalDelta {
                id: p.id.clone(),
                x: p.x,
                y: p.y,
                delta: None,
                delta_rare: None,
                delta_common: None,
                error: None,
            };
            let short = [(reference_year, &reference), (target_year, &target)]
                .into_iter()
                .find(|(_, idx)| idx.tree.len() < k);
            if let Some((year, idx)) = short {
                row.error = Some(format!("{year}: {} points < k={k}", idx.tree.len()));
                return row;
            }
            let q = [p.x, p.y];
            let (rr, rc) = reference.fractions(q, k);
            let (tr, tc) = target.fractions(q, k);
            let (dr, dc) = (tr - rr, tc - rc);
            row.delta_rare = Some(dr);
            row.delta_common = Some(dc);
            row.delta = Some((dr + dc) / 2.0);
            row
        })
        .collect();
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    Ok(LocalDeltaReport { rows, errors })
}

/// One row of a coordinates file: `id,x,y` with optional `year`, `rare`,
/// `common` columns.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PointRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default, deserialize_with = "flag")]
    pub rare: Option<bool>,
    #[serde(default, deserialize_with = "flag")]
    pub common: Option<bool>,
}

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    match s.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some("1") | Some("true") | Some("True") => Ok(Some(true)),
        Some("0") | Some("false") | Some("False") => Ok(Some(false)),
        Some(other) => Err(serde::de::Error::custom(format!("invalid flag {other:?}"))),
    }
}

pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<PointRow>, MarkerError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: PointRow = rec.map_err(|e| MarkerError::Points {
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(row);
    }
    Ok(out)
}

/// Completes coordinate rows with year and marker membership. Missing
/// fields come from the document with the same id; rows whose id is not
/// among `docs` and lack a year or flag are reported.
pub fn join_points(
    rows: Vec<PointRow>,
    docs: &[Document],
    rare: &MarkerSet,
    common: &MarkerSet,
) -> Result<Vec<EmbeddedPoint>, MarkerError> {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let doc = by_id.get(r.id.as_str()).copied();
            let missing = |what: &str| MarkerError::Points {
                line: i + 2,
                message: format!("{}: no {what} and no matching document", r.id),
            };
            let year = match (r.year, doc) {
                (Some(y), _) => y,
                (None, Some(d)) => d.year,
                (None, None) => return Err(missing("year")),
            };
            let rare_flag = match (r.rare, doc) {
                (Some(b), _) => b,
                (None, Some(d)) => rare.matches(&d.text),
                (None, None) => return Err(missing("rare flag")),
            };
            let common_flag = match (r.common, doc) {
                (Some(b), _) => b,
                (None, Some(d)) => common.matches(&d.text),
                (None, None) => return Err(missing("common flag")),
            };
            Ok(EmbeddedPoint {
                id: r.id,
                year,
                x: r.x,
                y: r.y,
                rare: rare_flag,
                common: common_flag,
            })
        })
        .collect()
}

/// `id,x,y,delta,delta_rare,delta_common,error`.
pub fn write_local_delta_csv<W: Write>(out: W, report: &LocalDeltaReport) -> Result<(), MarkerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "x", "y", "delta", "delta_rare", "delta_common", "error"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.id.clone(),
            r.x.to_string(),
            r.y.to_string(),
            opt(r.delta),
            opt(r.delta_rare),
            opt(r.delta_common),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
