//! On-disk formats.
//!
//! Matrix files (`.simm`): a 14-byte little-endian header, magic `SIMM`,
//! `u16` version (1), `u32` rows, `u32` cols, followed by `rows * cols`
//! little-endian `f32` values in row-major order. CSV import is also
//! accepted: first record `rows,cols`, then one record per row.
//!
//! Registry files: one sample per line, `index,person,modality,camera`,
//! modality `IR` or `RGB`, camera empty when unknown.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{EvalReport, REPORT_RANKS};
use crate::types::{Matrix, PersonId, Registry, SampleId};

pub const MAGIC: &[u8; 4] = b"SIMM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 14;

/// Contents of a `.simm` file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub rows: u32,
    pub cols: u32,
    pub data: Vec<f32>,
}

impl MatrixFile {
    /// Narrows to `f32`.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let rows = u32::try_from(m.rows())
            .map_err(|_| Error::InvalidParams("matrix has too many rows".into()))?;
        let cols = u32::try_from(m.cols())
            .map_err(|_| Error::InvalidParams("matrix has too many columns".into()))?;
        Ok(MatrixFile {
            rows,
            cols,
            data: m.as_slice().iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        Matrix::new(
            self.rows as usize,
            self.cols as usize,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::BadMatrixHeader);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
        let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes"));
        let payload = &bytes[HEADER_LEN..];
        let expected = rows as usize * cols as usize * 4;
        if payload.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(MatrixFile { rows, cols, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        MatrixFile::from_bytes(&bytes).map_err(|e| match e {
            Error::BadMatrixHeader => Error::parse(path, "bad matrix header"),
            other => Error::parse(path, other.to_string()),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a CSV matrix: first record `rows,cols`, then the rows.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let dims: Vec<usize> = header
        .iter()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, "first record must be rows,cols"))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::parse(path, "first record must be rows,cols"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        if rec.len() != cols {
            return Err(Error::parse(
                path,
                format!("row {line} has {} values, expected {cols}", rec.len()),
            ));
        }
        for f in rec.iter() {
            data.push(
                f.parse::<f64>()
                    .map_err(|_| Error::parse(path, format!("row {line}: bad number {f:?}")))?,
            );
        }
    }
    Matrix::new(rows, cols, data).map_err(|e| Error::parse(path, e.to_string()))
}

/// Reads a matrix from `.simm` or, for a `.csv` extension, CSV.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_matrix_csv(path)
    } else {
        MatrixFile::read(path)?.to_matrix()
    }
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    MatrixFile::from_matrix(m)?.write(path)
}

/// Maps identity labels to [`PersonId`]s. Integer labels are used as-is;
/// any other label gets a fresh id from [`LabelMap::FIRST_TEXT_ID`] upward,
/// in first-seen order. Share one map across the query and gallery files.
#[derive(Debug, Clone, Default)]
pub struct LabelMap {
    text: HashMap<String, PersonId>,
}

impl LabelMap {
    pub const FIRST_TEXT_ID: PersonId = 1 << 48;

    pub fn id(&mut self, label: &str) -> PersonId {
        if let Ok(v) = label.parse::<PersonId>() {
            return v;
        }
        let next = Self::FIRST_TEXT_ID + self.text.len() as PersonId;
        *self.text.entry(label.to_owned()).or_insert(next)
    }
}

pub fn parse_registry(text: &str, labels: &mut LabelMap) -> Result<Registry> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut samples = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidRegistry(format!("line {}: {e}", line + 1)))?;
        let bad = |what: &str| Error::InvalidRegistry(format!("line {}: {what}", line + 1));
        if rec.len() != 4 {
            return Err(bad("expected index,person,modality,camera"));
        }
        let index = rec[0].parse::<usize>().map_err(|_| bad("bad index"))?;
        let person = labels.id(&rec[1]);
        let modality = rec[2]
            .parse()
            .map_err(|_| bad("modality must be IR or RGB"))?;
        let camera = match &rec[3] {
            "" => None,
            c => Some(c.parse::<i32>().map_err(|_| bad("bad camera"))?),
        };
        samples.push(SampleId {
            index,
            person,
            modality,
            camera,
        });
    }
    Registry::new(samples)
}

pub fn format_registry(reg: &Registry) -> String {
    let mut out = String::new();
    for s in reg.samples() {
        let camera = s.camera.map(|c| c.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", s.index, s.person, s.modality, camera).expect("string write");
    }
    out
}

pub fn read_registry(path: impl AsRef<Path>, labels: &mut LabelMap) -> Result<Registry> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_registry(&text, labels).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_registry(path: impl AsRef<Path>, reg: &Registry) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_registry(reg)).map_err(|e| Error::io(path, e))
}

/// One line per query: the query's index then gallery indices in rank order.
pub fn format_rankings(rankings: &[Vec<usize>], query: &Registry, gallery: &Registry) -> String {
    let mut out = String::new();
    for (i, ranking) in rankings.iter().enumerate() {
        out.push_str(&query.get(i).index.to_string());
        for &g in ranking {
            out.push(' ');
            out.push_str(&gallery.get(g).index.to_string());
        }
        out.push('\n');
    }
    out
}

/// Plain-text report, six fixed decimals, no locale-dependent formatting.
pub fn format_report(r: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "map {:.6}", r.map).expect("string write");
    for rank in REPORT_RANKS {
        if let Some(v) = r.rank(rank) {
            writeln!(out, "rank{rank} {v:.6}").expect("string write");
        }
    }
    writeln!(out, "queries {}", r.per_query_ap.len()).expect("string write");
    writeln!(out, "excluded {}", r.excluded).expect("string write");
    writeln!(out, "trials {}", r.trials).expect("string write");
    writeln!(out, "seed {}", r.seed).expect("string write");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Modality;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let f = MatrixFile {
            rows: 1,
            cols: 2,
            data: vec![1.0, -0.5],
        };
        let b = f.to_bytes();
        assert_eq!(&b[..4], b"SIMM");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[1, 0, 0, 0]);
        assert_eq!(&b[10..14], &[2, 0, 0, 0]);
        assert_eq!(&b[14..18], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 22);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut b = MatrixFile {
            rows: 1,
            cols: 1,
            data: vec![3.0],
        }
        .to_bytes();
        let short = &b[..b.len() - 1];
        assert!(matches!(
            MatrixFile::from_bytes(short),
            Err(Error::ShapeMismatch { .. })
        ));
        b[0] = b'X';
        assert!(matches!(
            MatrixFile::from_bytes(&b),
            Err(Error::BadMatrixHeader)
        ));
        assert!(matches!(
            MatrixFile::from_bytes(b"SIM"),
            Err(Error::BadMatrixHeader)
        ));
    }

    #[test]
    fn wrong_version() {
        let mut b = MatrixFile {
            rows: 0,
            cols: 0,
            data: vec![],
        }
        .to_bytes();
        b[4] = 2;
        assert!(matches!(
            MatrixFile::from_bytes(&b),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "2,3\n0,1,2\n3,4.5,5\n").unwrap();
        let m = read_matrix(&path).unwrap();
        assert_eq!(m.as_slice(), &[0.0, 1.0, 2.0, 3.0, 4.5, 5.0]);
        fs::write(&path, "2,3\n0,1,2\n").unwrap();
        assert!(read_matrix(&path).is_err());
    }

    #[test]
    fn registry_text_labels_are_interned() {
        let mut labels = LabelMap::default();
        let q = parse_registry("0,alice,IR,1\n1,bob,IR,\n", &mut labels).unwrap();
        let g = parse_registry("0,bob,RGB,2\n1,7,RGB,2\n", &mut labels).unwrap();
        assert_eq!(q.get(1).person, g.get(0).person);
        assert_ne!(q.get(0).person, q.get(1).person);
        assert_eq!(g.get(1).person, 7);
        assert_eq!(q.get(1).camera, None);
        assert!(parse_registry("0,1,VIS,\n", &mut labels).is_err());
        assert!(parse_registry("0,1,IR\n", &mut labels).is_err());
    }

    #[test]
    fn rankings_use_registry_indices() {
        let q = Registry::new(vec![SampleId::new(7, 0, Modality::Ir)]).unwrap();
        let g = Registry::new(vec![
            SampleId::new(10, 0, Modality::Rgb),
            SampleId::new(11, 1, Modality::Rgb),
        ])
        .unwrap();
        assert_eq!(format_rankings(&[vec![1, 0]], &q, &g), "7 11 10\n");
    }

    fn sample() -> impl Strategy<Value = (i64, Option<i32>)> {
        (any::<i64>(), proptest::option::of(any::<i32>()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn matrix_bytes_round_trip(rows in 0u32..6, cols in 0u32..6, seed in any::<u64>()) {
            let n = (rows * cols) as usize;
            let data: Vec<f32> = (0..n)
                .map(|i| f32::from_bits((seed as u32).wrapping_mul(2654435761).wrapping_add(i as u32 * 40503)))
                .collect();
            let f = MatrixFile { rows, cols, data };
            let back = MatrixFile::from_bytes(&f.to_bytes()).unwrap();
            let bits = |m: &MatrixFile| m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(back.rows, rows);
            prop_assert_eq!(back.cols, cols);
            prop_assert_eq!(bits(&back), bits(&f));
        }

        #[test]
        fn registry_round_trip(entries in proptest::collection::vec(sample(), 0..12), ir in any::<bool>()) {
            let modality = if ir { Modality::Ir } else { Modality::Rgb };
            let reg = Registry::new(
                entries
                    .iter()
                    .enumerate()
                    .map(|(i, &(person, camera))| SampleId { index: i * 3 + 1, person, modality, camera })
                    .collect(),
            )
            .unwrap();
            let back = parse_registry(&format_registry(&reg), &mut LabelMap::default()).unwrap();
            prop_assert_eq!(back, reg);
        }
    }
}
