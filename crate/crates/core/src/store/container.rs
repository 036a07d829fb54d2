//! Single-file tensor container:
//!
//! ```text
//! [u64 LE header length H][H bytes of JSON header][data region]
//! ```
//!
//! The header maps tensor names to `{"dtype", "shape", "data_offsets"}`,
//! offsets relative to the start of the data region, plus an optional
//! `"__metadata__"` string map. Payloads are little-endian, row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{Checkpoint, DType, StoreError, TensorRecord};

const METADATA_KEY: &str = "__metadata__";

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_bytes(&bytes)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let bytes = to_bytes(ckpt)?;
    fs::write(path, bytes).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    begin: usize,
    end: usize,
}

fn bad(tensor: &str, reason: impl Into<String>) -> StoreError {
    StoreError::BadTensor {
        tensor: tensor.to_string(),
        reason: reason.into(),
    }
}

fn parse_usize_array(v: &Value, tensor: &str, field: &str) -> Result<Vec<usize>, StoreError> {
    let arr = v
        .as_array()
        .ok_or_else(|| bad(tensor, format!("{field} is not an array")))?;
    arr.iter()
        .map(|x| {
            x.as_u64()
                .and_then(|u| usize::try_from(u).ok())
                .ok_or_else(|| bad(tensor, format!("{field} has a non-integer entry")))
        })
        .collect()
}

fn parse_entry(name: &str, v: &Value) -> Result<Entry, StoreError> {
    let obj = v
        .as_object()
        .ok_or_else(|| bad(name, "header entry is not an object"))?;
    let dtype = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| bad(name, "missing dtype"))?
        .parse::<DType>()
        .map_err(|e| bad(name, e))?;
    let shape = parse_usize_array(obj.get("shape").ok_or_else(|| bad(name, "missing shape"))?, name, "shape")?;
    if shape.len() > 2 {
        return Err(bad(name, format!("rank {} tensors are not supported", shape.len())));
    }
    let offsets = parse_usize_array(
        obj.get("data_offsets").ok_or_else(|| bad(name, "missing data_offsets"))?,
        name,
        "data_offsets",
    )?;
    let [begin, end] = offsets[..] else {
        return Err(bad(name, "data_offsets must have two entries"));
    };
    Ok(Entry {
        name: name.to_string(),
        dtype,
        shape,
        begin,
        end,
    })
}

/// Parses and validates a container image.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, StoreError> {
    if bytes.len() < 8 {
        return Err(StoreError::Truncated { len: bytes.len() });
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let available = bytes.len() - 8;
    if header_len > available as u64 {
        return Err(StoreError::HeaderOverrun { header_len, available });
    }
    let header_end = 8 + header_len as usize;
    let header_text = std::str::from_utf8(&bytes[8..header_end])
        .map_err(|e| StoreError::MalformedHeader(format!("not UTF-8: {e}")))?;
    let header: Value =
        serde_json::from_str(header_text).map_err(|e| StoreError::MalformedHeader(e.to_string()))?;
    let map = header
        .as_object()
        .ok_or_else(|| StoreError::MalformedHeader("header is not an object".into()))?;
    let data = &bytes[header_end..];

    let mut metadata = BTreeMap::new();
    let mut entries = Vec::with_capacity(map.len());
    for (key, value) in map {
        if key == METADATA_KEY {
            let obj = value
                .as_object()
                .ok_or_else(|| StoreError::MalformedHeader("__metadata__ is not an object".into()))?;
            for (k, v) in obj {
                let s = v
                    .as_str()
                    .ok_or_else(|| StoreError::MalformedHeader(format!("__metadata__ value for {k:?} is not a string")))?;
                metadata.insert(k.clone(), s.to_string());
            }
            continue;
        }
        entries.push(parse_entry(key, value)?);
    }

    for e in &entries {
        if e.begin > e.end || e.end > data.len() {
            return Err(StoreError::OffsetsOutOfBounds {
                tensor: e.name.clone(),
                begin: e.begin,
                end: e.end,
                data_len: data.len(),
            });
        }
        let expected = e.shape.iter().product::<usize>() * e.dtype.size_bytes();
        if e.end - e.begin != expected {
            return Err(bad(
                &e.name,
                format!(
                    "data_offsets span {} bytes but shape {:?} in {} needs {expected}",
                    e.end - e.begin,
                    e.shape,
                    e.dtype
                ),
            ));
        }
    }

    // Regions must tile the data region exactly, in file order.
    entries.sort_by_key(|e| (e.begin, e.end));
    let mut cursor = 0usize;
    let mut prev_name: Option<&str> = None;
    for e in &entries {
        if e.begin < cursor {
            return Err(StoreError::Overlap {
                tensor: e.name.clone(),
                other: prev_name.unwrap_or_default().to_string(),
            });
        }
        if e.begin > cursor {
            return Err(StoreError::Gap {
                tensor: e.name.clone(),
                begin: e.begin,
                prev_end: cursor,
            });
        }
        cursor = e.end;
        prev_name = Some(&e.name);
    }
    if cursor != data.len() {
        return Err(StoreError::Uncovered(data.len() - cursor));
    }

    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        let size = e.dtype.size_bytes();
        let payload = &data[e.begin..e.end];
        let mut values = Vec::with_capacity(payload.len() / size);
        for (index, chunk) in payload.chunks_exact(size).enumerate() {
            let x = e.dtype.decode(chunk);
            if !x.is_finite() {
                return Err(StoreError::NonFinite { tensor: e.name, index });
            }
            values.push(x);
        }
        records.push(TensorRecord {
            name: e.name,
            shape: e.shape,
            source_dtype: e.dtype,
            data: values,
        });
    }
    Checkpoint::new(records, metadata)
}

/// Serializes a checkpoint; tensors are laid out in checkpoint order and
/// each value is narrowed to its record's dtype (round-to-nearest-even).
pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>, StoreError> {
    let mut payload = Vec::new();
    let mut header = String::from("{");
    let mut first = true;
    let mut push_key = |header: &mut String, key: &str| {
        if !first {
            header.push(',');
        }
        first = false;
        header.push_str(&serde_json::to_string(key).expect("string serializes"));
        header.push(':');
    };

    if !ckpt.metadata.is_empty() {
        push_key(&mut header, METADATA_KEY);
        header.push_str(&serde_json::to_string(&ckpt.metadata).expect("map serializes"));
    }
    for rec in ckpt.records() {
        rec.validate()?;
        let begin = payload.len();
        for &x in &rec.data {
            rec.source_dtype.encode(x, &mut payload).ok_or(StoreError::Overflow {
                tensor: rec.name.clone(),
                value: x,
                dtype: rec.source_dtype,
            })?;
        }
        let end = payload.len();
        push_key(&mut header, &rec.name);
        header.push_str(&format!(
            "{{\"dtype\":\"{}\",\"shape\":{},\"data_offsets\":[{begin},{end}]}}",
            rec.source_dtype,
            serde_json::to_string(&rec.shape).expect("shape serializes"),
        ));
    }
    header.push('}');
    while header.len() % 8 != 0 {
        header.push(' ');
    }

    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}
