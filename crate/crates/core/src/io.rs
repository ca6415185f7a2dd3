//! File formats for matrices and shadow counts.
//!
//! Matrices come in three encodings, detected on read:
//!
//! * text: a `KQFI-MATRIX <dim> complex128|real64` header, then one line per
//!   row holding `re im` pairs (complex) or plain values (real);
//! * binary: magic `KQFIMAT\0`, `u64` dimension, `u8` dtype (0 = complex128,
//!   1 = real64), then row-major little-endian `f64`s;
//! * JSON: `{"dim": d, "re": [[..]], "im": [[..]]}` with `im` optional.
//!
//! Shadow counts are written as text
//!
//! ```text
//! KQFI-SHADOWS v1
//! num_qubits,total_shadows,num_batches,seed
//! 2,1000,3,7
//! batch,0,334
//! XZ,01,12
//! ...
//! ```
//!
//! with one `basis_string,outcome_bits,count` record per distinct key, or as
//! binary: magic `KQFISHD\0`, `u32` qubits, `u64` shots, `u32` batches,
//! `u64` seed, then per batch a `u64` record count followed by
//! `(u32 basis, u32 outcome, u64 count)` records.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, CMatrix, DensityMatrix, Observable};
use crate::shadows::{PauliBasis, ShadowCounts, ShadowKey};

const MATRIX_MAGIC: &[u8; 8] = b"KQFIMAT\0";
const SHADOW_MAGIC: &[u8; 8] = b"KQFISHD\0";
const MATRIX_HEADER: &str = "KQFI-MATRIX";
const SHADOW_HEADER: &str = "KQFI-SHADOWS v1";
const SHADOW_COLUMNS: &str = "num_qubits,total_shadows,num_batches,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Text,
    Binary,
    Json,
}

impl MatrixFormat {
    /// `.bin` and `.json` select those encodings; anything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::Binary,
            Some("json") => MatrixFormat::Json,
            _ => MatrixFormat::Text,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonMatrix {
    dim: usize,
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Option<Vec<Vec<f64>>>,
}

fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn write_matrix<W: Write>(mut w: W, m: &CMatrix, format: MatrixFormat) -> Result<()> {
    let d = m.nrows();
    match format {
        MatrixFormat::Text => {
            let real = is_real(m);
            writeln!(w, "{MATRIX_HEADER} {d} {}", if real { "real64" } else { "complex128" })?;
            for i in 0..d {
                let row: Vec<String> = (0..d)
                    .map(|j| {
                        let z = m[(i, j)];
                        if real {
                            format!("{:e}", z.re)
                        } else {
                            format!("{:e} {:e}", z.re, z.im)
                        }
                    })
                    .collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        MatrixFormat::Binary => {
            let real = is_real(m);
            w.write_all(MATRIX_MAGIC)?;
            w.write_all(&(d as u64).to_le_bytes())?;
            w.write_all(&[u8::from(real)])?;
            for i in 0..d {
                for j in 0..d {
                    w.write_all(&m[(i, j)].re.to_le_bytes())?;
                    if !real {
                        w.write_all(&m[(i, j)].im.to_le_bytes())?;
                    }
                }
            }
        }
        MatrixFormat::Json => {
            let grid = |f: fn(&crate::qcore::C64) -> f64| -> Vec<Vec<f64>> {
                (0..d).map(|i| (0..d).map(|j| f(&m[(i, j)])).collect()).collect()
            };
            let doc = JsonMatrix {
                dim: d,
                re: grid(|z| z.re),
                im: if is_real(m) { None } else { Some(grid(|z| z.im)) },
            };
            serde_json::to_writer(&mut w, &doc)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn parse_f64(tok: &str) -> Result<f64> {
    tok.parse().map_err(|_| Error::Parse(format!("bad number '{tok}'")))
}

fn read_matrix_text(s: &str) -> Result<CMatrix> {
    let mut lines = s.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != MATRIX_HEADER {
        return Err(Error::Parse(format!("bad matrix header '{header}'")));
    }
    let d: usize = parts[1].parse().map_err(|_| Error::Parse(format!("bad dimension '{}'", parts[1])))?;
    let complex = match parts[2] {
        "complex128" => true,
        "real64" => false,
        other => return Err(Error::Parse(format!("unknown dtype '{other}'"))),
    };
    let per_entry = if complex { 2 } else { 1 };
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
        let vals: Vec<f64> = line.split_whitespace().map(parse_f64).collect::<Result<_>>()?;
        if vals.len() != d * per_entry {
            return Err(Error::Parse(format!("row {i} has {} values, expected {}", vals.len(), d * per_entry)));
        }
        for j in 0..d {
            m[(i, j)] = if complex {
                c(vals[2 * j], vals[2 * j + 1])
            } else {
                c(vals[j], 0.0)
            };
        }
    }
    if lines.next().is_some() {
        return Err(Error::Parse("trailing rows after matrix".into()));
    }
    Ok(m)
}

fn read_u64(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let end = *pos + 8;
    let chunk = bytes.get(*pos..end).ok_or_else(|| Error::Parse("truncated binary file".into()))?;
    *pos = end;
    Ok(u64::from_le_bytes(chunk.try_into().expect("8 bytes")))
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let end = *pos + 4;
    let chunk = bytes.get(*pos..end).ok_or_else(|| Error::Parse("truncated binary file".into()))?;
    *pos = end;
    Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
}

fn read_matrix_binary(bytes: &[u8]) -> Result<CMatrix> {
    let mut pos = MATRIX_MAGIC.len();
    let d = read_u64(bytes, &mut pos)? as usize;
    let real = match bytes.get(pos) {
        Some(0) => false,
        Some(1) => true,
        Some(t) => return Err(Error::Parse(format!("unknown dtype byte {t}"))),
        None => return Err(Error::Parse("truncated binary file".into())),
    };
    pos += 1;
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let re = f64::from_bits(read_u64(bytes, &mut pos)?);
            let im = if real { 0.0 } else { f64::from_bits(read_u64(bytes, &mut pos)?) };
            m[(i, j)] = c(re, im);
        }
    }
    if pos != bytes.len() {
        return Err(Error::Parse("trailing bytes after matrix".into()));
    }
    Ok(m)
}

fn read_matrix_json(s: &str) -> Result<CMatrix> {
    let doc: JsonMatrix = serde_json::from_str(s)?;
    let d = doc.dim;
    let check = |g: &Vec<Vec<f64>>| g.len() == d && g.iter().all(|r| r.len() == d);
    if !check(&doc.re) || doc.im.as_ref().is_some_and(|g| !check(g)) {
        return Err(Error::Parse(format!("JSON matrix rows do not match dim {d}")));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| {
        c(doc.re[i][j], doc.im.as_ref().map_or(0.0, |g| g[i][j]))
    }))
}

/// Parse a matrix in any of the three encodings.
pub fn parse_matrix(bytes: &[u8]) -> Result<CMatrix> {
    if bytes.starts_with(MATRIX_MAGIC) {
        return read_matrix_binary(bytes);
    }
    let s = std::str::from_utf8(bytes).map_err(|_| Error::Parse("matrix file is not UTF-8".into()))?;
    if s.trim_start().starts_with('{') {
        read_matrix_json(s)
    } else {
        read_matrix_text(s)
    }
}

pub fn read_matrix(path: &Path) -> Result<CMatrix> {
    parse_matrix(&fs::read(path)?)
}

pub fn save_matrix(path: &Path, m: &CMatrix) -> Result<()> {
    let file = BufWriter::new(fs::File::create(path)?);
    write_matrix(file, m, MatrixFormat::from_path(path))
}

/// Read and validate a density matrix.
pub fn load_state(path: &Path) -> Result<DensityMatrix> {
    DensityMatrix::new(read_matrix(path)?)
}

/// Read and validate an observable.
pub fn load_observable(path: &Path) -> Result<Observable> {
    Observable::new(read_matrix(path)?)
}

pub fn write_counts_text<W: Write>(mut w: W, counts: &ShadowCounts) -> Result<()> {
    let n = counts.num_qubits;
    writeln!(w, "{SHADOW_HEADER}")?;
    writeln!(w, "{SHADOW_COLUMNS}")?;
    writeln!(w, "{},{},{},{}", n, counts.total_shadows, counts.num_batches(), counts.seed)?;
    for (i, batch) in counts.batches.iter().enumerate() {
        writeln!(w, "batch,{i},{}", batch.values().sum::<u64>())?;
        for (key, count) in batch {
            writeln!(w, "{},{},{count}", key.basis_string(n), key.outcome_string(n))?;
        }
    }
    Ok(())
}

fn parse_int<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
    tok.trim().parse().map_err(|_| Error::Parse(format!("bad {what} '{tok}'")))
}

pub fn read_counts_text<R: BufRead>(r: R) -> Result<ShadowCounts> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse(format!("missing {what}")))
    };
    if next("header")?.trim() != SHADOW_HEADER {
        return Err(Error::Parse("not a shadow-count file".into()));
    }
    if next("column line")?.trim() != SHADOW_COLUMNS {
        return Err(Error::Parse("bad shadow-count column line".into()));
    }
    let meta = next("metadata")?;
    let fields: Vec<&str> = meta.split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Parse(format!("bad metadata line '{meta}'")));
    }
    let num_qubits: usize = parse_int(fields[0], "qubit count")?;
    let total_shadows: u64 = parse_int(fields[1], "shot count")?;
    let num_batches: usize = parse_int(fields[2], "batch count")?;
    let seed: u64 = parse_int(fields[3], "seed")?;

    let mut batches: Vec<BTreeMap<ShadowKey, u64>> = Vec::with_capacity(num_batches);
    let mut declared: Vec<u64> = Vec::with_capacity(num_batches);
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("bad record '{line}'")));
        }
        if parts[0] == "batch" {
            let index: usize = parse_int(parts[1], "batch index")?;
            if index != batches.len() {
                return Err(Error::Parse(format!("batch {index} out of order")));
            }
            declared.push(parse_int(parts[2], "batch size")?);
            batches.push(BTreeMap::new());
            continue;
        }
        let batch = batches
            .last_mut()
            .ok_or_else(|| Error::Parse("record before first batch line".into()))?;
        let bases: Vec<PauliBasis> = parts[0].chars().map(PauliBasis::from_char).collect::<Result<_>>()?;
        let bits: Vec<u8> = parts[1]
            .chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Parse(format!("bad outcome bit '{ch}'"))),
            })
            .collect::<Result<_>>()?;
        if bases.len() != num_qubits || bits.len() != num_qubits {
            return Err(Error::Parse(format!("record '{line}' does not have {num_qubits} qubits")));
        }
        let key = ShadowKey::from_parts(&bases, &bits)?;
        *batch.entry(key).or_insert(0) += parse_int::<u64>(parts[2], "count")?;
    }
    if batches.len() != num_batches {
        return Err(Error::Parse(format!("expected {num_batches} batches, found {}", batches.len())));
    }
    for (i, (batch, size)) in batches.iter().zip(&declared).enumerate() {
        if batch.values().sum::<u64>() != *size {
            return Err(Error::Parse(format!("batch {i} records do not sum to {size}")));
        }
    }
    let counts = ShadowCounts {
        num_qubits,
        total_shadows,
        seed,
        batches,
    };
    counts.validate()?;
    Ok(counts)
}

pub fn write_counts_binary<W: Write>(mut w: W, counts: &ShadowCounts) -> Result<()> {
    w.write_all(SHADOW_MAGIC)?;
    w.write_all(&(counts.num_qubits as u32).to_le_bytes())?;
    w.write_all(&counts.total_shadows.to_le_bytes())?;
    w.write_all(&(counts.num_batches() as u32).to_le_bytes())?;
    w.write_all(&counts.seed.to_le_bytes())?;
    for batch in &counts.batches {
        w.write_all(&(batch.len() as u64).to_le_bytes())?;
        for (key, count) in batch {
            w.write_all(&key.basis.to_le_bytes())?;
            w.write_all(&key.outcome.to_le_bytes())?;
            w.write_all(&count.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn parse_counts_binary(bytes: &[u8]) -> Result<ShadowCounts> {
    if !bytes.starts_with(SHADOW_MAGIC) {
        return Err(Error::Parse("not a binary shadow-count file".into()));
    }
    let mut pos = SHADOW_MAGIC.len();
    let num_qubits = read_u32(bytes, &mut pos)? as usize;
    let total_shadows = read_u64(bytes, &mut pos)?;
    let num_batches = read_u32(bytes, &mut pos)? as usize;
    let seed = read_u64(bytes, &mut pos)?;
    let mut batches = Vec::with_capacity(num_batches);
    for _ in 0..num_batches {
        let records = read_u64(bytes, &mut pos)?;
        let mut batch = BTreeMap::new();
        for _ in 0..records {
            let basis = read_u32(bytes, &mut pos)?;
            let outcome = read_u32(bytes, &mut pos)?;
            let count = read_u64(bytes, &mut pos)?;
            batch.insert(ShadowKey { basis, outcome }, count);
        }
        batches.push(batch);
    }
    if pos != bytes.len() {
        return Err(Error::Parse("trailing bytes after shadow counts".into()));
    }
    let counts = ShadowCounts {
        num_qubits,
        total_shadows,
        seed,
        batches,
    };
    counts.validate()?;
    Ok(counts)
}

/// Write counts; a `.bin` extension selects the binary form.
pub fn save_counts(path: &Path, counts: &ShadowCounts) -> Result<()> {
    let mut file = BufWriter::new(fs::File::create(path)?);
    if MatrixFormat::from_path(path) == MatrixFormat::Binary {
        write_counts_binary(&mut file, counts)?;
    } else {
        write_counts_text(&mut file, counts)?;
    }
    file.flush()?;
    Ok(())
}

/// Read counts in either form, detected from the leading bytes.
pub fn load_counts(path: &Path) -> Result<ShadowCounts> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(SHADOW_MAGIC) {
        parse_counts_binary(&bytes)
    } else {
        read_counts_text(BufReader::new(bytes.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shadows::sample_shadows;

    fn sample_matrix() -> CMatrix {
        crate::ensembles::random_fullrank(4, 3).unwrap().matrix().clone()
    }

    #[test]
    fn matrix_round_trips() {
        let m = sample_matrix();
        for format in [MatrixFormat::Text, MatrixFormat::Binary, MatrixFormat::Json] {
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m, format).unwrap();
            assert_eq!(parse_matrix(&buf).unwrap(), m, "{format:?}");
        }
        let real = CMatrix::from_fn(3, 3, |i, j| c((i * 3 + j) as f64 * 0.1, 0.0));
        let mut buf = Vec::new();
        write_matrix(&mut buf, &real, MatrixFormat::Text).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("KQFI-MATRIX 3 real64"));
        assert_eq!(parse_matrix(&buf).unwrap(), real);
    }

    #[test]
    fn matrix_parse_errors() {
        assert!(parse_matrix(b"KQFI-MATRIX 2 real64\n1 0\n").is_err());
        assert!(parse_matrix(b"KQFI-MATRIX 2 quaternion\n1 0\n0 1\n").is_err());
        assert!(parse_matrix(b"{\"dim\": 2, \"re\": [[1, 0]]}").is_err());
        let ok = parse_matrix(b"# identity\nKQFI-MATRIX 2 real64\n1 0\n0 1\n").unwrap();
        assert_eq!(ok, CMatrix::identity(2, 2));
    }

    #[test]
    fn counts_round_trip_both_forms() {
        let rho = crate::ensembles::random_fullrank(4, 1).unwrap();
        let counts = sample_shadows(&rho, 5000, 3, 11).unwrap();
        let mut text = Vec::new();
        write_counts_text(&mut text, &counts).unwrap();
        assert_eq!(read_counts_text(BufReader::new(text.as_slice())).unwrap(), counts);
        let mut bin = Vec::new();
        write_counts_binary(&mut bin, &counts).unwrap();
        assert_eq!(parse_counts_binary(&bin).unwrap(), counts);

        let dir = tempfile::tempdir().unwrap();
        for name in ["c.txt", "c.bin"] {
            let path = dir.path().join(name);
            save_counts(&path, &counts).unwrap();
            assert_eq!(load_counts(&path).unwrap(), counts);
        }
    }

    #[test]
    fn counts_text_rejects_inconsistent_totals() {
        let bad = "KQFI-SHADOWS v1\nnum_qubits,total_shadows,num_batches,seed\n1,3,1,0\nbatch,0,2\nZ,0,2\n";
        assert!(read_counts_text(BufReader::new(bad.as_bytes())).is_err());
        let good = "KQFI-SHADOWS v1\nnum_qubits,total_shadows,num_batches,seed\n1,2,1,0\nbatch,0,2\nZ,0,2\n";
        let counts = read_counts_text(BufReader::new(good.as_bytes())).unwrap();
        assert_eq!(counts.batch_size(0), 2);
    }
}
