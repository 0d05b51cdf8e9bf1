//! Dataset files.
//!
//! CSV: header `y,x1,...,xp`, one observation per line.
//! Binary: 16-byte header (`SGLM`, u32 LE n, u32 LE p, u32 reserved) followed
//! by `n·(p+1)` little-endian f64 values laid out row-major as `(y, x1..xp)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::glm::Dataset;

pub const MAGIC: &[u8; 4] = b"SGLM";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Binary,
}

impl DataFormat {
    /// `.bin`/`.sglm` are binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("sglm") => DataFormat::Binary,
            _ => DataFormat::Csv,
        }
    }
}

pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    write!(w, "y")?;
    for j in 1..=data.p() {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for i in 0..data.n() {
        // `{:?}` prints the shortest representation that round-trips
        write!(w, "{:?}", data.y()[i])?;
        for v in data.row(i) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R, d: usize) -> Result<Dataset> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))??;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols.first() != Some(&"y") || cols.len() < 2 {
        return Err(Error::Parse(format!("bad header `{header}`")));
    }
    for (j, c) in cols[1..].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(Error::Parse(format!("bad header column `{c}`")));
        }
    }
    let p = cols.len() - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            let s = s.ok_or_else(|| Error::Parse(format!("line {}: too few fields", lineno + 2)))?;
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
        };
        y.push(parse(fields.next())?);
        for _ in 0..p {
            x.push(parse(fields.next())?);
        }
        if fields.next().is_some() {
            return Err(Error::Parse(format!("line {}: too many fields", lineno + 2)));
        }
    }
    Dataset::new(x, y, p, d)
}

pub fn write_binary<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let n = u32::try_from(data.n()).map_err(|_| Error::InvalidInput("n exceeds u32".into()))?;
    let p = u32::try_from(data.p()).map_err(|_| Error::InvalidInput("p exceeds u32".into()))?;
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&p.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for i in 0..data.n() {
        w.write_all(&data.y()[i].to_le_bytes())?;
        for v in data.row(i) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(input: R, d: usize) -> Result<Dataset> {
    let mut r = BufReader::new(input);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::Parse("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Parse("bad magic; expected SGLM".into()));
    }
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap()) as usize;
    let (n, p) = (word(4), word(8));
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Parse("truncated body".into()))?;
        y.push(f64::from_le_bytes(buf));
        for _ in 0..p {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Parse("truncated body".into()))?;
            x.push(f64::from_le_bytes(buf));
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::Parse("trailing bytes after body".into()));
    }
    Dataset::new(x, y, p, d)
}

pub fn read_dataset(path: &Path, d: usize) -> Result<Dataset> {
    let f = File::open(path)?;
    match DataFormat::from_path(path) {
        DataFormat::Csv => read_csv(f, d),
        DataFormat::Binary => read_binary(f, d),
    }
}

pub fn write_dataset(data: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    let f = File::create(path)?;
    match format {
        DataFormat::Csv => write_csv(data, f),
        DataFormat::Binary => write_binary(data, f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Dataset {
        Dataset::new(vec![1.0, -2.5, 0.1, 3.0, 1e-300, -0.0], vec![0.5, 1.0], 3, 1).unwrap()
    }

    #[test]
    fn binary_layout_is_bit_exact() {
        let mut buf = Vec::new();
        write_binary(&sample(), &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 2 * 4 * 8);
        assert_eq!(&buf[..4], b"SGLM");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(&buf[12..16], &[0, 0, 0, 0]);
        assert_eq!(&buf[16..24], &0.5f64.to_le_bytes());
        assert_eq!(&buf[24..32], &1.0f64.to_le_bytes());
        assert_eq!(&buf[48..56], &1.0f64.to_le_bytes());
    }

    #[test]
    fn csv_header_and_errors() {
        let mut buf = Vec::new();
        write_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("y,x1,x2,x3\n"));
        assert!(read_csv("y,x2\n1,2\n".as_bytes(), 1).is_err());
        assert!(read_csv("y,x1,x2\n1,2\n".as_bytes(), 1).is_err());
        assert!(read_csv("y,x1,x2\n1,2,abc\n".as_bytes(), 1).is_err());
        assert!(read_binary(&b"XGLM0000000000000000"[..], 1).is_err());
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let data = Dataset::new(vals[..9].to_vec(), vals[9..].to_vec(), 3, 2).unwrap();
            let mut csv = Vec::new();
            write_csv(&data, &mut csv).unwrap();
            prop_assert_eq!(read_csv(csv.as_slice(), 2).unwrap(), data.clone());
            let mut bin = Vec::new();
            write_binary(&data, &mut bin).unwrap();
            prop_assert_eq!(read_binary(bin.as_slice(), 2).unwrap(), data);
        }
    }
}
