//! Dataset files.
//!
//! CSV: header `x_0,..,x_{d-1},y,corrupted`, one row per sample, `corrupted`
//! is `0` or `1`.
//!
//! Binary (little-endian, columnar):
//!
//! ```text
//! magic  8 bytes  "SIMRDS01"
//! n      u64
//! d      u64
//! seed   u64
//! x      d columns of n f64
//! y      n f64
//! mask   n u8
//! ```
//!
//! Neither format stores the ground truth; reloaded datasets carry none.

use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Points;

pub const BINARY_MAGIC: &[u8; 8] = b"SIMRDS01";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = ds.d();
    let mut header: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
    header.push("y".into());
    header.push("corrupted".into());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(d + 2);
    for ((x, y), c) in ds.covariates().iter_rows().zip(ds.responses()).zip(ds.corrupted_mask()) {
        rec.clear();
        // `{:?}` prints the shortest string that round-trips exactly
        rec.extend(x.iter().map(|v| format!("{v:?}")));
        rec.push(format!("{y:?}"));
        rec.push(if *c { "1".into() } else { "0".into() });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 3 || &header[cols - 2] != "y" || &header[cols - 1] != "corrupted" {
        return Err(format_err("CSV header must be x_0..x_{d-1},y,corrupted"));
    }
    let d = cols - 2;
    for (j, h) in header.iter().take(d).enumerate() {
        if h != format!("x_{j}") {
            return Err(format_err(format!("unexpected column {h:?} at position {j}")));
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut mask = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| format_err(format!("row {line}, column {k}: {e}")))
        };
        for k in 0..d {
            x.push(num(k)?);
        }
        y.push(num(d)?);
        mask.push(match rec[d + 1].trim() {
            "0" => false,
            "1" => true,
            other => return Err(format_err(format!("row {line}: corrupted flag {other:?}"))),
        });
    }
    let n = y.len();
    Dataset::from_parts(Points::new(n, d, x)?, y, None, 0)?.with_mask(mask)
}

pub fn write_binary<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let (n, d) = (ds.n(), ds.d());
    out.write_all(BINARY_MAGIC)?;
    for v in [n as u64, d as u64, ds.seed()] {
        out.write_all(&v.to_le_bytes())?;
    }
    let x = ds.covariates();
    let mut buf = Vec::with_capacity(n * 8);
    for j in 0..d {
        buf.clear();
        x.iter_rows()
            .for_each(|row| buf.extend_from_slice(&row[j].to_le_bytes()));
        out.write_all(&buf)?;
    }
    buf.clear();
    ds.responses()
        .iter()
        .for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    out.write_all(&buf)?;
    let mask: Vec<u8> = ds.corrupted_mask().iter().map(|&c| c as u8).collect();
    out.write_all(&mask)?;
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Dataset> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(format_err("not a dataset file (bad magic)"));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |input: &mut R| -> Result<u64> {
        input.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let n = next_u64(&mut input)? as usize;
    let d = next_u64(&mut input)? as usize;
    let seed = next_u64(&mut input)?;
    let cells = n
        .checked_mul(d)
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| format_err("header dimensions overflow"))?;
    let read_f64s = |input: &mut R, len: usize| -> Result<Vec<f64>> {
        let mut raw = vec![0u8; len * 8];
        input.read_exact(&mut raw)?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect())
    };
    let columns = read_f64s(&mut input, cells)?;
    let mut x = vec![0.0; cells];
    for (j, col) in columns.chunks_exact(n.max(1)).take(d).enumerate() {
        for (i, v) in col.iter().enumerate() {
            x[i * d + j] = *v;
        }
    }
    let y = read_f64s(&mut input, n)?;
    let mut raw = vec![0u8; n];
    input.read_exact(&mut raw)?;
    let mask = raw
        .into_iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format_err(format!("mask byte {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_parts(Points::new(n, d, x)?, y, None, seed)?.with_mask(mask)
}

/// Picks the format from the extension: `.csv` or anything else as binary.
pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if is_csv(path) {
        write_csv(ds, file)
    } else {
        write_binary(ds, file)
    }
}

pub fn load(path: &Path) -> Result<Dataset> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if is_csv(path) {
        read_csv(file)
    } else {
        read_binary(file)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{corrupt, sample_clean, AdversaryKind, AdversaryModel, GroundTruth, NoiseModel};
    use crate::link::LinkName;

    fn fixture() -> Dataset {
        let t = GroundTruth::random(3, LinkName::Tanh, NoiseModel::gaussian(0.3).unwrap(), 4);
        let ds = sample_clean(57, 3, &t, 4).unwrap();
        corrupt(ds, 0.1, &AdversaryModel::new(AdversaryKind::Mixed, 7.5, 1), 4).unwrap()
    }

    fn same_samples(a: &Dataset, b: &Dataset) {
        assert_eq!(a.covariates(), b.covariates());
        assert_eq!(a.responses(), b.responses());
        assert_eq!(a.corrupted_mask(), b.corrupted_mask());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = fixture();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_0,x_1,x_2,y,corrupted\n"));
        same_samples(&ds, &read_csv(buf.as_slice()).unwrap());
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let ds = fixture();
        let mut buf = Vec::new();
        write_binary(&ds, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 24 + 57 * 3 * 8 + 57 * 8 + 57);
        let back = read_binary(buf.as_slice()).unwrap();
        same_samples(&ds, &back);
        assert_eq!(back.seed(), ds.seed());
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(read_binary(&b"NOTADATA"[..]).is_err());
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_csv("x_0,x_1,y,corrupted\n1,2,3,7\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_binary(&fixture(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn files_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture();
        for name in ["d.csv", "d.bin"] {
            let p = dir.path().join(name);
            save(&ds, &p).unwrap();
            same_samples(&ds, &load(&p).unwrap());
        }
    }
}
