//! Matrix and sparse-triplet file formats.
//!
//! * Matrix CSV: a first record `rows,cols`, then one record per matrix row.
//!   Lines starting with `#` are comments. Values are written with Rust's
//!   shortest round-trip float formatting, so write → read is exact.
//! * Matrix binary: `rows: u64 LE`, `cols: u64 LE`, then `rows·cols` f64 LE
//!   entries in row-major order.
//! * Triplet CSV: a `# rows=R,cols=C` comment, a header `i,j,value`, then one
//!   record per stored entry.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lsh::{SparseCorrection, SupportSet};
use crate::matrix::DenseMatrix;
use crate::scalar::Real;

pub fn write_matrix_csv<T: Real, W: Write>(m: &DenseMatrix<T>, mut w: W) -> Result<()> {
    writeln!(w, "{},{}", m.rows(), m.cols())?;
    let mut line = String::new();
    for row in m.iter_rows() {
        line.clear();
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_value(x.as_f64()));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Shortest of the plain and exponent forms; both round-trip exactly.
pub fn format_value(x: f64) -> String {
    let plain = format!("{x}");
    let exp = format!("{x:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_field<F: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<F> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} `{field}`")))
}

pub fn read_matrix_csv<T: Real, R: Read>(r: R) -> Result<DenseMatrix<T>> {
    let mut records = csv_reader(r).into_records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    if header.len() != 2 {
        return Err(Error::Parse("first record must be `rows,cols`".into()));
    }
    let rows: usize = parse_field(&header[0], "row count", 1)?;
    let cols: usize = parse_field(&header[1], "column count", 1)?;
    let mut data = Vec::with_capacity(rows * cols);
    for rec in records {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols {
            return Err(Error::Parse(format!(
                "line {line}: expected {cols} values, found {}",
                rec.len()
            )));
        }
        for f in rec.iter() {
            data.push(T::of(parse_field::<f64>(f, "value", line)?));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {rows} rows, found {}",
            data.len() / cols.max(1)
        )));
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn write_matrix_bin<T: Real, W: Write>(m: &DenseMatrix<T>, mut w: W) -> Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for x in m.as_slice() {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_bin<T: Real, R: Read>(mut r: R) -> Result<DenseMatrix<T>> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Parse(format!("dimensions {rows}x{cols} overflow")))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        data.push(T::of(f64::from_le_bytes(word)));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes", rest.len())));
    }
    DenseMatrix::new(rows, cols, data)
}

/// On-disk matrix encoding, chosen by file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Bin,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Self::Csv),
            Some("bin") => Ok(Self::Bin),
            _ => Err(Error::InvalidParameter(format!(
                "{}: expected a .csv or .bin extension",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Bin => "bin",
        }
    }
}

pub fn load_matrix<T: Real>(path: &Path) -> Result<DenseMatrix<T>> {
    let r = BufReader::new(File::open(path)?);
    match MatrixFormat::from_path(path)? {
        MatrixFormat::Csv => read_matrix_csv(r),
        MatrixFormat::Bin => read_matrix_bin(r),
    }
}

pub fn save_matrix<T: Real>(m: &DenseMatrix<T>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match MatrixFormat::from_path(path)? {
        MatrixFormat::Csv => write_matrix_csv(m, &mut w)?,
        MatrixFormat::Bin => write_matrix_bin(m, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn write_triplets<W: Write>(
    rows: usize,
    cols: usize,
    entries: impl Iterator<Item = (u32, u32, f64)>,
    mut w: W,
) -> Result<()> {
    writeln!(w, "# rows={rows},cols={cols}")?;
    writeln!(w, "i,j,value")?;
    for (i, j, v) in entries {
        writeln!(w, "{i},{j},{}", format_value(v))?;
    }
    Ok(())
}

/// Support pairs as triplets with value `1`.
pub fn write_support_csv<W: Write>(s: &SupportSet, w: W) -> Result<()> {
    write_triplets(
        s.n_q(),
        s.n_k(),
        s.pairs().iter().map(|&(i, j)| (i, j, 1.0)),
        w,
    )
}

pub fn write_correction_csv<T: Real, W: Write>(c: &SparseCorrection<T>, w: W) -> Result<()> {
    let s = c.support();
    write_triplets(
        s.n_q(),
        s.n_k(),
        s.pairs()
            .iter()
            .zip(c.values())
            .map(|(&(i, j), v)| (i, j, v.as_f64())),
        w,
    )
}

/// Reads triplets written by [`write_correction_csv`] or [`write_support_csv`].
/// Returns `(rows, cols, entries)`.
pub fn read_triplets_csv<R: Read>(r: R) -> Result<(usize, usize, Vec<(u32, u32, f64)>)> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut lines = text.lines();
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| Error::Parse("missing `# rows=..,cols=..` line".into()))?;
    let mut dims = [None, None];
    for kv in meta.split(',') {
        match kv.split_once('=') {
            Some(("rows", v)) => dims[0] = Some(parse_field::<usize>(v, "rows", 1)?),
            Some(("cols", v)) => dims[1] = Some(parse_field::<usize>(v, "cols", 1)?),
            _ => {}
        }
    }
    let (rows, cols) = match dims {
        [Some(r), Some(c)] => (r, c),
        _ => return Err(Error::Parse("metadata line lacks rows/cols".into())),
    };
    let mut entries = Vec::new();
    for rec in csv_reader(lines.collect::<Vec<_>>().join("\n").as_bytes()).records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line()) + 1;
        if &rec[0] == "i" {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::Parse(format!("line {line}: expected i,j,value")));
        }
        entries.push((
            parse_field(&rec[0], "row index", line)?,
            parse_field(&rec[1], "column index", line)?,
            parse_field(&rec[2], "value", line)?,
        ));
    }
    Ok((rows, cols, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_layout_is_dims_then_rows() {
        let m = DenseMatrix::<f64>::from_rows(&[&[1.0, 0.5], &[-2.0, 1e-300]]).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2,2\n1,0.5\n-2,1e-300\n");
    }

    #[test]
    fn binary_layout_is_two_u64_then_f64() {
        let m = DenseMatrix::<f64>::from_rows(&[&[1.5]]).unwrap();
        let mut buf = Vec::new();
        write_matrix_bin(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 24);
        assert_eq!(&buf[..8], &1u64.to_le_bytes());
        assert_eq!(&buf[16..], &1.5f64.to_le_bytes());
    }

    #[test]
    fn malformed_inputs_are_parse_errors() {
        assert!(read_matrix_csv::<f64, _>("2,2\n1,2\n3\n".as_bytes()).is_err());
        assert!(read_matrix_csv::<f64, _>("1,1\nnan\n".as_bytes()).is_err());
        assert!(read_matrix_bin::<f64, _>(&[1u8, 0, 0][..]).is_err());
    }

    #[test]
    fn comments_are_skipped() {
        let m: DenseMatrix<f64> = read_matrix_csv("# seed=1\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(m.as_slice(), &[3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn csv_and_bin_round_trip(rows in 0usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut r = crate::rng::stream(seed, 0);
            let m: DenseMatrix<f64> = crate::rng::gaussian_matrix(rows, cols, &mut r);
            let mut csv = Vec::new();
            write_matrix_csv(&m, &mut csv).unwrap();
            prop_assert_eq!(read_matrix_csv::<f64, _>(&csv[..]).unwrap(), m.clone());
            let mut bin = Vec::new();
            write_matrix_bin(&m, &mut bin).unwrap();
            prop_assert_eq!(read_matrix_bin::<f64, _>(&bin[..]).unwrap(), m);
        }
    }
}
