//! Embedding container formats.
//!
//! Binary layout: magic `DSCLEMB1`, little-endian `u32` n, `u32` d, one
//! flags byte (bit0: assigned labels present, bit1: latent labels present),
//! `n×d` little-endian `f32` values row-major, then the optional label
//! arrays as `u32`. Vectors are stored in f32, so a write→read→write cycle
//! is byte-identical; loaded rows are kept exactly as stored (unit norm
//! within f32 tolerance) rather than renormalized.
//!
//! A plain CSV path (full f64 precision, exact round-trip via shortest
//! decimal representation) is provided for interoperability.

use std::path::Path;

use crate::batch::{EmbeddingBatch, LabeledBatch};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 8] = b"DSCLEMB1";

const FLAG_ASSIGNED: u8 = 0b01;
const FLAG_LATENT: u8 = 0b10;

/// Decoded file contents before label validation.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredEmbeddings {
    pub embeddings: EmbeddingBatch,
    pub assigned: Option<Vec<u32>>,
    pub latent: Option<Vec<u32>>,
}

impl StoredEmbeddings {
    pub fn into_labeled(self) -> Result<LabeledBatch> {
        let assigned = self
            .assigned
            .ok_or_else(|| Error::MalformedFile("file carries no assigned labels".into()))?;
        LabeledBatch::new(self.embeddings, assigned, self.latent)
    }
}

pub fn encode(
    embeddings: &EmbeddingBatch,
    assigned: Option<&[u32]>,
    latent: Option<&[u32]>,
) -> Result<Vec<u8>> {
    let n = embeddings.n();
    if let Some(a) = assigned {
        if a.len() != n {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: n,
            });
        }
    }
    if let Some(l) = latent {
        if l.len() != n {
            return Err(Error::LengthMismatch {
                left: l.len(),
                right: n,
            });
        }
    }
    let d = embeddings.dim();
    let mut out = Vec::with_capacity(8 + 9 + n * d * 4 + n * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    let mut flags = 0u8;
    if assigned.is_some() {
        flags |= FLAG_ASSIGNED;
    }
    if latent.is_some() {
        flags |= FLAG_LATENT;
    }
    out.push(flags);
    for &v in embeddings.vectors().data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(a) = assigned {
        for &x in a {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(l) = latent {
        for &x in l {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn encode_labeled(batch: &LabeledBatch) -> Result<Vec<u8>> {
    encode(&batch.embeddings, Some(batch.assigned()), batch.latent())
}

pub fn decode(bytes: &[u8], temperature: f64) -> Result<StoredEmbeddings> {
    let take = |offset: &mut usize, len: usize| -> Result<&[u8]> {
        if *offset + len > bytes.len() {
            return Err(Error::MalformedFile(format!(
                "truncated at byte {} (need {len} more)",
                *offset
            )));
        }
        let slice = &bytes[*offset..*offset + len];
        *offset += len;
        Ok(slice)
    };
    let mut offset = 0usize;
    if take(&mut offset, 8)? != MAGIC {
        return Err(Error::MalformedFile("bad magic".into()));
    }
    let n = u32::from_le_bytes(take(&mut offset, 4)?.try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(take(&mut offset, 4)?.try_into().unwrap()) as usize;
    let flags = take(&mut offset, 1)?[0];
    if flags & !(FLAG_ASSIGNED | FLAG_LATENT) != 0 {
        return Err(Error::MalformedFile(format!("unknown flags {flags:#x}")));
    }
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let raw = f32::from_le_bytes(take(&mut offset, 4)?.try_into().unwrap());
        data.push(raw as f64);
    }
    let mut read_labels = |present: bool| -> Result<Option<Vec<u32>>> {
        if !present {
            return Ok(None);
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(u32::from_le_bytes(take(&mut offset, 4)?.try_into().unwrap()));
        }
        Ok(Some(labels))
    };
    let assigned = read_labels(flags & FLAG_ASSIGNED != 0)?;
    let latent = read_labels(flags & FLAG_LATENT != 0)?;
    if offset != bytes.len() {
        return Err(Error::MalformedFile(format!(
            "{} trailing bytes",
            bytes.len() - offset
        )));
    }
    let embeddings = EmbeddingBatch::from_unit_rows(Matrix::from_vec(n, d, data), temperature)?;
    Ok(StoredEmbeddings {
        embeddings,
        assigned,
        latent,
    })
}

pub fn write_labeled(path: &Path, batch: &LabeledBatch) -> Result<()> {
    std::fs::write(path, encode_labeled(batch)?)?;
    Ok(())
}

pub fn read_labeled(path: &Path, temperature: f64) -> Result<LabeledBatch> {
    decode(&std::fs::read(path)?, temperature)?.into_labeled()
}

pub fn read_stored(path: &Path, temperature: f64) -> Result<StoredEmbeddings> {
    decode(&std::fs::read(path)?, temperature)
}

// --- CSV ------------------------------------------------------------------

/// Header `x0,..,x{d-1}[,assigned][,latent]`, one row per sample. Floats use
/// the shortest round-trip decimal form, so values survive exactly.
pub fn to_csv(batch: &LabeledBatch) -> String {
    let d = batch.embeddings.dim();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format!("x{j}"));
    }
    out.push_str(",assigned");
    if batch.latent().is_some() {
        out.push_str(",latent");
    }
    out.push('\n');
    for i in 0..batch.n() {
        for (j, v) in batch.embeddings.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push_str(&format!(",{}", batch.assigned()[i]));
        if let Some(latent) = batch.latent() {
            out.push_str(&format!(",{}", latent[i]));
        }
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str, temperature: f64) -> Result<LabeledBatch> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedFile("empty csv".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let has_latent = columns.last() == Some(&"latent");
    let assigned_col = columns
        .iter()
        .position(|&c| c == "assigned")
        .ok_or_else(|| Error::MalformedFile("csv has no assigned column".into()))?;
    let d = assigned_col;
    if d < 2 {
        return Err(Error::MalformedFile("fewer than 2 feature columns".into()));
    }
    let mut rows = Vec::new();
    let mut assigned = Vec::new();
    let mut latent = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = d + 1 + usize::from(has_latent);
        if fields.len() != expect {
            return Err(Error::MalformedFile(format!(
                "line {}: {} fields, expected {expect}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::MalformedFile(format!("bad float {s:?}")))
        };
        let parse_u = |s: &str| -> Result<u32> {
            s.parse()
                .map_err(|_| Error::MalformedFile(format!("bad label {s:?}")))
        };
        let mut row = Vec::with_capacity(d);
        for f in &fields[..d] {
            row.push(parse_f(f)?);
        }
        rows.push(row);
        assigned.push(parse_u(fields[d])?);
        if has_latent {
            latent.push(parse_u(fields[d + 1])?);
        }
    }
    if rows.is_empty() {
        return Err(Error::MalformedFile("csv has no data rows".into()));
    }
    let embeddings = EmbeddingBatch::from_unit_rows(Matrix::from_rows(&rows), temperature)?;
    LabeledBatch::new(embeddings, assigned, has_latent.then_some(latent))
}
