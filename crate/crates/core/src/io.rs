//! Grid file formats: CSV, PGM (P2/P5, 8 or 16 bit) and a plain text format
//! with an `n d dtype` header line followed by whitespace separated values in
//! row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AmsError, Result};
use crate::localmeans::{Dtype, Field};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridFormat {
    Csv,
    Pgm,
    RawText,
}

impl GridFormat {
    /// Guesses the format from the file extension (`.csv`, `.pgm`, anything
    /// else is raw text).
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") => GridFormat::Csv,
            Some("pgm") => GridFormat::Pgm,
            _ => GridFormat::RawText,
        }
    }
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> AmsError {
    AmsError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

fn dtype_name(d: Dtype) -> &'static str {
    match d {
        Dtype::Counts => "counts",
        Dtype::Reals => "reals",
    }
}

/// Counts when every value is a nonnegative integer, reals otherwise.
fn infer_dtype(values: &[f64]) -> Dtype {
    if values.iter().all(|v| *v >= 0.0 && v.fract() == 0.0) {
        Dtype::Counts
    } else {
        Dtype::Reals
    }
}

fn build(values: Vec<f64>, n: usize, d: usize, dtype: Option<Dtype>) -> Result<Field> {
    let dtype = dtype.unwrap_or_else(|| infer_dtype(&values));
    Field::new(values, n, d, dtype)
}

pub fn read_grid(path: &Path, format: GridFormat, dtype: Option<Dtype>) -> Result<Field> {
    let bytes = fs::read(path)?;
    parse_grid(&bytes, format, dtype)
}

/// Parses grid file contents. `dtype` of `None` infers the type from the
/// values; PGM input is always counts.
pub fn parse_grid(bytes: &[u8], format: GridFormat, dtype: Option<Dtype>) -> Result<Field> {
    match format {
        GridFormat::Pgm => parse_pgm(bytes),
        GridFormat::Csv => parse_csv(as_text(bytes)?, dtype),
        GridFormat::RawText => parse_raw(as_text(bytes)?, dtype),
    }
}

fn as_text(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes)
        .map_err(|e| parse_err(format!("byte {}", e.valid_up_to()), "invalid UTF-8"))
}

fn parse_value(tok: &str, location: impl FnOnce() -> String) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|e| parse_err(location(), format!("cannot parse {:?}: {e}", tok.trim())))
}

/// A single row is a 1-D grid; `n` rows of `n` columns a 2-D grid.
fn parse_csv(text: &str, dtype: Option<Dtype>) -> Result<Field> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_err(
                    format!("row {row}"),
                    format!("expected {w} columns, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        for (j, f) in fields.iter().enumerate() {
            values.push(parse_value(f, || format!("row {row}, column {}", j + 1))?);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_err("row 1", "empty CSV"))?;
    match rows {
        1 => build(values, width, 1, dtype),
        r if r == width => build(values, width, 2, dtype),
        r => Err(AmsError::Shape(format!(
            "CSV grid has {r} rows and {width} columns; grids must be square"
        ))),
    }
}

fn parse_raw(text: &str, dtype: Option<Dtype>) -> Result<Field> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err("line 1", "missing header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 {
        return Err(parse_err("line 1", "header must be `n d dtype`"));
    }
    let n: usize = head[0]
        .parse()
        .map_err(|_| parse_err("line 1", format!("bad n {:?}", head[0])))?;
    let d: usize = head[1]
        .parse()
        .map_err(|_| parse_err("line 1", format!("bad d {:?}", head[1])))?;
    let declared = match head[2] {
        "counts" => Dtype::Counts,
        "reals" => Dtype::Reals,
        other => return Err(parse_err("line 1", format!("unknown dtype {other:?}"))),
    };
    if let Some(want) = dtype {
        if want != declared {
            return Err(AmsError::config(format!(
                "file declares {} but {} was requested",
                dtype_name(declared),
                dtype_name(want)
            )));
        }
    }
    let mut values = Vec::new();
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            values.push(parse_value(tok, || format!("line {}", i + 1))?);
        }
    }
    let expected = n.checked_pow(d as u32).unwrap_or(usize::MAX);
    if values.len() != expected {
        return Err(AmsError::Shape(format!(
            "header declares {n}^{d} = {expected} values, found {}",
            values.len()
        )));
    }
    Field::new(values, n, d, declared)
}

struct PgmReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmReader<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(format!("byte {start}"), "unexpected end of file"));
        }
        as_text(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let at = self.pos;
        let tok = self.token()?;
        tok.parse().map_err(|_| {
            parse_err(
                format!("byte {at}"),
                format!("expected an integer, found {tok:?}"),
            )
        })
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<Field> {
    let mut r = PgmReader { bytes, pos: 0 };
    let magic = r.token()?.to_string();
    let (w, h, maxval) = (r.number()?, r.number()?, r.number()?);
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(
            "header",
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let len = w * h;
    let mut values = Vec::with_capacity(len);
    match magic.as_str() {
        "P2" => {
            for _ in 0..len {
                values.push(r.number()? as f64);
            }
        }
        "P5" => {
            // A single whitespace byte separates the header from the raster.
            let start = r.pos + 1;
            let width = if maxval < 256 { 1 } else { 2 };
            let raster = bytes.get(start..start + len * width).ok_or_else(|| {
                parse_err(
                    format!("byte {start}"),
                    format!(
                        "raster needs {} bytes, found {}",
                        len * width,
                        bytes.len().saturating_sub(start)
                    ),
                )
            })?;
            if width == 1 {
                values.extend(raster.iter().map(|&b| b as f64));
            } else {
                values.extend(
                    raster
                        .chunks_exact(2)
                        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64),
                );
            }
        }
        other => {
            return Err(parse_err(
                "byte 0",
                format!("unsupported PGM magic {other:?}"),
            ))
        }
    }
    if let Some(v) = values.iter().find(|&&v| v > maxval as f64) {
        return Err(parse_err(
            "raster",
            format!("value {v} exceeds maxval {maxval}"),
        ));
    }
    if h == 1 {
        Field::new(values, w, 1, Dtype::Counts)
    } else if w == h {
        Field::new(values, w, 2, Dtype::Counts)
    } else {
        Err(AmsError::Shape(format!(
            "PGM is {w}x{h}; grids must be square"
        )))
    }
}

/// Serialises `field`; the output reads back to identical values.
pub fn format_grid(field: &Field, format: GridFormat) -> Result<Vec<u8>> {
    let (n, d) = (field.n(), field.d());
    match format {
        GridFormat::Csv => {
            if d > 2 {
                return Err(AmsError::config(format!(
                    "CSV holds 1-D or 2-D grids, not d={d}"
                )));
            }
            let mut s = String::new();
            for row in field.data().chunks(n) {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            Ok(s.into_bytes())
        }
        GridFormat::RawText => {
            let mut s = format!("{n} {d} {}\n", dtype_name(field.dtype()));
            for row in field.data().chunks(n) {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}", cells.join(" "));
            }
            Ok(s.into_bytes())
        }
        GridFormat::Pgm => {
            if d > 2 || field.dtype() != Dtype::Counts {
                return Err(AmsError::config("PGM holds 1-D or 2-D count grids only"));
            }
            let max = field.data().iter().cloned().fold(0.0, f64::max);
            if max > 65535.0 {
                return Err(AmsError::config(format!(
                    "count {max} does not fit a 16-bit PGM"
                )));
            }
            let maxval = if max < 256.0 { 255 } else { 65535 };
            let h = if d == 1 { 1 } else { n };
            let mut out = format!("P5\n{n} {h}\n{maxval}\n").into_bytes();
            for &v in field.data() {
                if maxval == 255 {
                    out.push(v as u8);
                } else {
                    out.extend_from_slice(&(v as u16).to_be_bytes());
                }
            }
            Ok(out)
        }
    }
}

pub fn write_grid(field: &Field, path: &Path, format: GridFormat) -> Result<()> {
    fs::write(path, format_grid(field, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_two_by_two() {
        let f = parse_grid(b"1,2\n3,4", GridFormat::Csv, None).unwrap();
        assert_eq!((f.n(), f.d(), f.dtype()), (2, 2, Dtype::Counts));
        assert_eq!(f.data(), &[1.0, 2.0, 3.0, 4.0]);
        let r = parse_grid(b"1.5,-2\n3,4\n", GridFormat::Csv, None).unwrap();
        assert_eq!(r.dtype(), Dtype::Reals);
    }

    #[test]
    fn ragged_csv_reports_row() {
        match parse_grid(b"1,2\n3\n", GridFormat::Csv, None) {
            Err(AmsError::Parse { location, .. }) => assert_eq!(location, "row 2"),
            other => panic!("{other:?}"),
        }
        match parse_grid(b"1,2\n3,x\n", GridFormat::Csv, None) {
            Err(AmsError::Parse { location, .. }) => assert_eq!(location, "row 2, column 2"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_grid(b"1,2\n3,4\n5,6\n", GridFormat::Csv, None),
            Err(AmsError::Shape(_))
        ));
        assert!(matches!(
            parse_grid(b"1,-2\n3,4\n", GridFormat::Csv, Some(Dtype::Counts)),
            Err(AmsError::NegativeCount { .. })
        ));
    }

    #[test]
    fn pgm_sixteen_bit() {
        let mut bytes = b"P5\n# comment\n2 2\n65535\n".to_vec();
        for v in [0u16, 1, 300, 65535] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let f = parse_grid(&bytes, GridFormat::Pgm, None).unwrap();
        assert_eq!(f.dtype(), Dtype::Counts);
        assert_eq!(f.data(), &[0.0, 1.0, 300.0, 65535.0]);
        let ascii = parse_grid(b"P2 2 2 15\n1 2\n3 15\n", GridFormat::Pgm, None).unwrap();
        assert_eq!(ascii.data(), &[1.0, 2.0, 3.0, 15.0]);
        assert!(parse_grid(b"P5 2 2 255\n\x01\x02", GridFormat::Pgm, None).is_err());
    }

    #[test]
    fn raw_text_three_d() {
        let f = parse_grid(
            b"2 3 reals\n1 2 3 4\n5 6 7 8.5\n",
            GridFormat::RawText,
            None,
        )
        .unwrap();
        assert_eq!((f.n(), f.d()), (2, 3));
        assert!(matches!(
            parse_grid(b"2 3 reals\n1 2 3\n", GridFormat::RawText, None),
            Err(AmsError::Shape(_))
        ));
    }

    #[test]
    fn roundtrips() {
        let reals = Field::new(vec![0.1, -1.0 / 3.0, 1e-300, 2.5e17], 2, 2, Dtype::Reals).unwrap();
        let counts = Field::new(vec![0.0, 255.0, 7.0, 1.0], 2, 2, Dtype::Counts).unwrap();
        let wide = Field::new(vec![0.0, 65535.0, 7.0], 3, 1, Dtype::Counts).unwrap();
        for fmt in [GridFormat::Csv, GridFormat::RawText] {
            let back =
                parse_grid(&format_grid(&reals, fmt).unwrap(), fmt, Some(Dtype::Reals)).unwrap();
            assert_eq!(back, reals);
        }
        for f in [&counts, &wide] {
            for fmt in [GridFormat::Csv, GridFormat::RawText, GridFormat::Pgm] {
                let back = parse_grid(&format_grid(f, fmt).unwrap(), fmt, None).unwrap();
                assert_eq!(&back, f);
            }
        }
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(GridFormat::from_path(Path::new("a/b.CSV")), GridFormat::Csv);
        assert_eq!(GridFormat::from_path(Path::new("x.pgm")), GridFormat::Pgm);
        assert_eq!(
            GridFormat::from_path(Path::new("x.txt")),
            GridFormat::RawText
        );
    }
}
