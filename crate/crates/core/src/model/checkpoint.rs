//! Binary checkpoint container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "HNCK" | version | tag_len | ablation tag (utf-8)
//! entry count | entries: name_len name rows cols      (dimension table)
//! tensor count | tensors: name_len name rows cols f64-le data...
//! ```

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::scenario::Ablation;

use super::params::{ModelDims, ModelParams};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"HNCK";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint does not match the expected architecture:\n{0}")]
    Mismatch(String),
}

fn format_err(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Format(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let named = params.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_str(&mut out, params.ablation.tag());
    put_u32(&mut out, named.len() as u32);
    for (name, t) in &named {
        put_str(&mut out, name);
        put_u32(&mut out, t.rows() as u32);
        put_u32(&mut out, t.cols() as u32);
    }
    put_u32(&mut out, named.len() as u32);
    for (name, t) in &named {
        put_str(&mut out, name);
        put_u32(&mut out, t.rows() as u32);
        put_u32(&mut out, t.cols() as u32);
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format_err(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| format_err("name is not utf-8"))
    }
}

type DimTable = Vec<(String, usize, usize)>;

type Decoded = (Ablation, DimTable, Vec<(String, Tensor)>);

fn decode_raw(bytes: &[u8]) -> Result<Decoded, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let tag = r.string()?;
    let ablation = Ablation::from_tag(&tag).ok_or_else(|| format_err(format!("unknown ablation tag {tag:?}")))?;
    let n = r.u32()? as usize;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.string()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        table.push((name, rows, cols));
    }
    let n = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.string()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let len = rows.checked_mul(cols).ok_or_else(|| format_err("tensor too large"))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| format_err("tensor too large"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, Tensor::from_vec(rows, cols, data)));
    }
    if r.pos != bytes.len() {
        return Err(format_err("trailing bytes"));
    }
    Ok((ablation, table, tensors))
}

fn infer_dims(table: &DimTable) -> Result<ModelDims, CheckpointError> {
    let cols = |name: &str| {
        table
            .iter()
            .find(|(n, ..)| n == name)
            .map(|&(_, _, c)| c)
            .ok_or_else(|| format_err(format!("dimension table lacks {name}")))
    };
    let hidden = cols("embed_cr.0.weight")?;
    let mut value_hidden = Vec::new();
    let mut i = 0;
    while let Ok(c) = cols(&format!("value.{i}.weight")) {
        value_hidden.push(c);
        i += 1;
    }
    if value_hidden.pop() != Some(1) {
        return Err(format_err("value head must end in a single output"));
    }
    Ok(ModelDims { hidden, value_hidden })
}

/// Lists every difference between two dimension tables.
fn table_diff(expected: &DimTable, found: &DimTable) -> String {
    let mut diff = String::new();
    for (name, r, c) in expected {
        match found.iter().find(|(n, ..)| n == name) {
            None => writeln!(diff, "  missing {name} ({r}x{c})").unwrap(),
            Some((_, fr, fc)) if (fr, fc) != (r, c) => {
                writeln!(diff, "  {name}: expected {r}x{c}, found {fr}x{fc}").unwrap()
            }
            _ => {}
        }
    }
    for (name, r, c) in found {
        if !expected.iter().any(|(n, ..)| n == name) {
            writeln!(diff, "  unexpected {name} ({r}x{c})").unwrap();
        }
    }
    diff
}

fn table_of(params: &ModelParams) -> DimTable {
    params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.rows(), t.cols()))
        .collect()
}

/// Decodes a checkpoint. With `expected`, the ablation and every tensor
/// shape must match that architecture.
pub fn decode(bytes: &[u8], expected: Option<(Ablation, &ModelDims)>) -> Result<ModelParams, CheckpointError> {
    let (ablation, table, tensors) = decode_raw(bytes)?;
    let dims = infer_dims(&table)?;
    if let Some((want_ablation, want_dims)) = expected {
        let want = table_of(&ModelParams::zeros(want_ablation, want_dims));
        let mut diff = table_diff(&want, &table);
        if want_ablation != ablation {
            diff.insert_str(
                0,
                &format!("  ablation: expected {}, found {}\n", want_ablation.tag(), ablation.tag()),
            );
        }
        if !diff.is_empty() {
            return Err(CheckpointError::Mismatch(diff));
        }
    }
    let mut params = ModelParams::zeros(ablation, &dims);
    let layout = table_of(&params);
    let diff = table_diff(&layout, &table);
    if !diff.is_empty() {
        return Err(CheckpointError::Mismatch(diff));
    }
    let names: Vec<String> = layout.into_iter().map(|(n, ..)| n).collect();
    if tensors.len() != names.len() {
        return Err(format_err("tensor count differs from dimension table"));
    }
    for (slot, name) in params.tensors_mut().into_iter().zip(&names) {
        let (_, t) = tensors
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| format_err(format!("missing tensor {name}")))?;
        if t.shape() != slot.shape() {
            return Err(format_err(format!("tensor {name} disagrees with dimension table")));
        }
        *slot = t.clone();
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&encode(params)).map_err(io)?;
    f.sync_all().map_err(io)
}

pub fn load_checkpoint(
    path: &Path,
    expected: Option<(Ablation, &ModelDims)>,
) -> Result<ModelParams, CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
    decode(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn round_trip_is_bit_exact() {
        for ablation in Ablation::ALL {
            let p = ModelParams::init(ablation, &ModelDims::default(), &mut RngStream::from_seed(1));
            let bytes = encode(&p);
            let back = decode(&bytes, Some((ablation, &ModelDims::default()))).unwrap();
            assert_eq!(back, p);
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt_0.bin");
        let p = ModelParams::init(Ablation::HeR, &ModelDims::default(), &mut RngStream::from_seed(9));
        save_checkpoint(&path, &p).unwrap();
        assert_eq!(load_checkpoint(&path, None).unwrap(), p);
    }

    #[test]
    fn ablation_mismatch_reports_diff() {
        let p = ModelParams::zeros(Ablation::HeRNoCate, &ModelDims::default());
        let err = decode(&encode(&p), Some((Ablation::HeR, &ModelDims::default()))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ablation: expected HeR, found HeR_nocate"), "{msg}");
        assert!(msg.contains("embed_h.0.weight: expected 8x64, found 7x64"), "{msg}");
    }

    #[test]
    fn dimension_mismatch_reports_diff() {
        let small = ModelDims { hidden: 16, value_hidden: vec![8] };
        let p = ModelParams::zeros(Ablation::HeR, &small);
        let err = decode(&encode(&p), Some((Ablation::HeR, &ModelDims::default()))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing value.3.weight"), "{msg}");
        // Without expectations the smaller architecture loads fine.
        assert_eq!(decode(&encode(&p), None).unwrap(), p);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let p = ModelParams::zeros(Ablation::HoR, &ModelDims::default());
        let bytes = encode(&p);
        assert!(decode(&bytes[..bytes.len() - 3], None).is_err());
        assert!(decode(b"nope", None).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad, None), Err(CheckpointError::Format(_))));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_checkpoint(Path::new("/nonexistent/ckpt.bin"), None).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/ckpt.bin"));
    }
}
