use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::CountError;

/// Per-word, per-year document counts plus per-year document totals.
///
/// `counts` is row-major: `counts[w * years.len() + y]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccurrenceMatrix {
    years: Vec<i32>,
    words: Vec<String>,
    counts: Vec<u64>,
    totals: Vec<u64>,
    index: HashMap<String, usize>,
}

impl OccurrenceMatrix {
    /// All-zero matrix.
    pub fn zeros(years: Vec<i32>, words: Vec<String>) -> Result<Self, CountError> {
        let n = words.len() * years.len();
        let totals = vec![0; years.len()];
        Self::from_parts(years, words, vec![0; n], totals)
    }

    pub fn from_parts(
        years: Vec<i32>,
        words: Vec<String>,
        counts: Vec<u64>,
        totals: Vec<u64>,
    ) -> Result<Self, CountError> {
        if years.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CountError::Invalid("years must be strictly ascending".into()));
        }
        if totals.len() != years.len() || counts.len() != words.len() * years.len() {
            return Err(CountError::Invalid(format!(
                "{} words × {} years needs {} counts and {} totals, got {} and {}",
                words.len(),
                years.len(),
                words.len() * years.len(),
                years.len(),
                counts.len(),
                totals.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(CountError::Invalid(format!("duplicate word {w:?}")));
            }
        }
        let ny = years.len();
        if ny > 0 {
            for (w, row) in counts.chunks(ny).enumerate() {
                if let Some(y) = (0..ny).find(|&y| row[y] > totals[y]) {
                    return Err(CountError::Invalid(format!(
                        "count {} for {:?} in {} exceeds total {}",
                        row[y], words[w], years[y], totals[y]
                    )));
                }
            }
        }
        Ok(OccurrenceMatrix {
            years,
            words,
            counts,
            totals,
            index,
        })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.binary_search(&year).ok()
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, word_idx: usize) -> &[u64] {
        let ny = self.years.len();
        &self.counts[word_idx * ny..(word_idx + 1) * ny]
    }

    pub fn count(&self, word: &str, year: i32) -> Option<u64> {
        let w = self.word_index(word)?;
        let y = self.year_index(year)?;
        Some(self.row(w)[y])
    }

    pub fn total(&self, year: i32) -> Option<u64> {
        self.year_index(year).map(|y| self.totals[y])
    }

    pub(crate) fn counts_mut(&mut self) -> (&mut [u64], &mut [u64]) {
        (&mut self.counts, &mut self.totals)
    }

    /// Element-wise sum of two matrices over the same years and words.
    pub fn merge(mut self, other: &OccurrenceMatrix) -> Result<Self, CountError> {
        if self.years != other.years {
            return Err(CountError::Mismatch("years"));
        }
        if self.words != other.words {
            return Err(CountError::Mismatch("vocabulary"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        Ok(self)
    }

    /// Restricts the matrix to words satisfying `keep`, preserving order.
    pub fn filter_words(&self, mut keep: impl FnMut(&str) -> bool) -> OccurrenceMatrix {
        let ny = self.years.len();
        let mut words = Vec::new();
        let mut counts = Vec::new();
        for (i, w) in self.words.iter().enumerate() {
            if keep(w) {
                words.push(w.clone());
                counts.extend_from_slice(&self.counts[i * ny..(i + 1) * ny]);
            }
        }
        OccurrenceMatrix::from_parts(self.years.clone(), words, counts, self.totals.clone())
            .expect("subset of a valid matrix is valid")
    }
}

const TOTAL_LABEL: &str = "total";

/// Writes the gzip-compressed CSV form: a header of years (first cell
/// empty), one `word,count,...` row per word, and a final `total` row.
pub fn write_matrix<W: Write>(m: &OccurrenceMatrix, out: W) -> Result<(), CountError> {
    let gz = GzEncoder::new(out, Compression::default());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(gz);
    let mut header = Vec::with_capacity(m.years.len() + 1);
    header.push(String::new());
    header.extend(m.years.iter().map(i32::to_string));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(m.years.len() + 1);
    for (i, word) in m.words.iter().enumerate() {
        record.clear();
        record.push(word.clone());
        record.extend(m.row(i).iter().map(u64::to_string));
        w.write_record(&record)?;
    }
    record.clear();
    record.push(TOTAL_LABEL.to_string());
    record.extend(m.totals.iter().map(u64::to_string));
    w.write_record(&record)?;
    let gz = w.into_inner().map_err(|e| CountError::Io(e.into_error()))?;
    gz.finish()?.flush()?;
    Ok(())
}

/// Reads the CSV form, gzip-compressed or plain. The header may carry an
/// index label in its first cell or only the years; the last row must be
/// labelled `total`.
pub fn read_matrix<R: Read>(input: R) -> Result<OccurrenceMatrix, CountError> {
    let mut buffered = std::io::BufReader::new(input);
    let head = buffered.fill_buf()?;
    let reader: Box<dyn Read> = if head.starts_with(&[0x1f, 0x8b]) {
        Box::new(MultiGzDecoder::new(buffered))
    } else {
        Box::new(buffered)
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| CountError::Invalid("empty file".into()))??;
    let cells: Vec<&str> = header.iter().collect();
    let year_cells = match cells.first() {
        Some(first) if first.trim().parse::<i32>().is_err() => &cells[1..],
        _ => &cells[..],
    };
    let years = year_cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.trim().parse::<i32>().map_err(|_| CountError::NonInteger {
                line: 1,
                column: i + 1,
                value: c.to_string(),
            })
        })
        .collect::<Result<Vec<i32>, _>>()?;
    let ny = years.len();
    let mut words = Vec::new();
    let mut counts = Vec::new();
    let mut last: Option<(String, Vec<u64>)> = None;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != ny + 1 {
            return Err(CountError::Shape {
                line,
                expected: ny + 1,
                found: rec.len(),
            });
        }
        let mut row = Vec::with_capacity(ny);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v = cell.parse::<u64>().map_err(|_| CountError::NonInteger {
                line,
                column: j + 2,
                value: cell.to_string(),
            })?;
            row.push(v);
        }
        if let Some((w, r)) = last.replace((rec[0].to_string(), row)) {
            words.push(w);
            counts.extend(r);
        }
    }
    let totals = match last {
        Some((label, row)) if label == TOTAL_LABEL => row,
        _ => return Err(CountError::MissingTotals),
    };
    OccurrenceMatrix::from_parts(years, words, counts, totals)
}

pub fn write_matrix_file(m: &OccurrenceMatrix, path: &Path) -> Result<(), CountError> {
    let f = std::fs::File::create(path)?;
    write_matrix(m, std::io::BufWriter::new(f))
}

pub fn read_matrix_file(path: &Path) -> Result<OccurrenceMatrix, CountError> {
    read_matrix(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> OccurrenceMatrix {
        OccurrenceMatrix::from_parts(
            vec![2020, 2021],
            vec!["alpha".into(), "beta".into()],
            vec![2, 0, 1, 1],
            vec![2, 1],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_two_by_two() {
        let m = small();
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        assert_eq!(read_matrix(&buf[..]).unwrap(), m);
        let mut again = Vec::new();
        write_matrix(&m, &mut again).unwrap();
        assert_eq!(buf, again, "writer output is deterministic");
    }

    #[test]
    fn plain_csv_with_and_without_index_label() {
        let with_label = "word,2020,2021\nalpha,2,0\nbeta,1,1\ntotal,2,1\n";
        let years_only = "2020,2021\nalpha,2,0\nbeta,1,1\ntotal,2,1\n";
        assert_eq!(read_matrix(with_label.as_bytes()).unwrap(), small());
        assert_eq!(read_matrix(years_only.as_bytes()).unwrap(), small());
    }

    #[test]
    fn word_called_total_is_a_word() {
        let src = ",2020\ntotal,1\nalpha,2\ntotal,3\n";
        let m = read_matrix(src.as_bytes()).unwrap();
        assert_eq!(m.words(), &["total".to_string(), "alpha".to_string()]);
        assert_eq!(m.totals(), &[3]);
    }

    #[test]
    fn missing_totals() {
        let err = read_matrix(",2020,2021\nalpha,2,0\nbeta,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CountError::MissingTotals));
        assert!(err.to_string().contains("MISSING_TOTALS"));
    }

    #[test]
    fn shape_and_integer_errors() {
        let err = read_matrix(",2020,2021\nalpha,2\ntotal,2,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CountError::Shape { line: 2, .. }), "{err}");
        let err = read_matrix(",2020,2021\nalpha,2,x\ntotal,2,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CountError::NonInteger { line: 2, column: 3, .. }), "{err}");
        let err = read_matrix(",2020,2021\nalpha,3,0\ntotal,2,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CountError::Invalid(_)), "{err}");
    }

    #[test]
    fn merge_checks_shape() {
        let m = small();
        let z = OccurrenceMatrix::zeros(vec![2020, 2021], m.words().to_vec()).unwrap();
        assert_eq!(m.clone().merge(&z).unwrap(), m);
        let other = OccurrenceMatrix::zeros(vec![2020, 2022], m.words().to_vec()).unwrap();
        assert!(matches!(m.clone().merge(&other), Err(CountError::Mismatch("years"))));
        let other = OccurrenceMatrix::zeros(vec![2020, 2021], vec!["alpha".into()]).unwrap();
        assert!(matches!(m.merge(&other), Err(CountError::Mismatch("vocabulary"))));
    }

    #[test]
    fn lookups_and_filter() {
        let m = small();
        assert_eq!(m.count("alpha", 2020), Some(2));
        assert_eq!(m.count("beta", 2021), Some(1));
        assert_eq!(m.count("gamma", 2021), None);
        assert_eq!(m.total(2019), None);
        let f = m.filter_words(|w| w.starts_with('b'));
        assert_eq!(f.words(), &["beta".to_string()]);
        assert_eq!(f.row(0), &[1, 1]);
    }

    pub(crate) fn arb_matrix() -> impl Strategy<Value = OccurrenceMatrix> {
        (2000i32..2020, 1usize..6, proptest::collection::btree_set("[a-z]{1,8}", 0..12))
            .prop_flat_map(|(y0, ny, words)| {
                let words: Vec<String> = words.into_iter().collect();
                let nw = words.len();
                (
                    Just((y0..y0 + ny as i32).collect::<Vec<_>>()),
                    Just(words),
                    proptest::collection::vec(0u64..1_000_000, ny),
                    proptest::collection::vec(0.0f64..=1.0, nw * ny),
                )
            })
            .prop_map(|(years, words, totals, fracs)| {
                let ny = years.len();
                let counts = fracs
                    .iter()
                    .enumerate()
                    .map(|(i, f)| (f * totals[i % ny] as f64).floor() as u64)
                    .collect();
                OccurrenceMatrix::from_parts(years, words, counts, totals).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn csv_round_trip_bit_exact(m in arb_matrix()) {
            let mut buf = Vec::new();
            write_matrix(&m, &mut buf).unwrap();
            let back = read_matrix(&buf[..]).unwrap();
            prop_assert_eq!(&back, &m);
            let mut again = Vec::new();
            write_matrix(&back, &mut again).unwrap();
            prop_assert_eq!(again, buf);
        }
    }
}
