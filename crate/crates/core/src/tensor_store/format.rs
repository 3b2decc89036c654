use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Checkpoint, DType, StoreError, Tensor, TensorData, METADATA_KEY};

const PREFIX_LEN: usize = 8;
const HEADER_ALIGN: usize = 8;

/// Header object entries in file order; duplicates are kept so they can be
/// reported instead of silently collapsed.
struct Entries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = Entries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object mapping tensor names to entries")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, Value>()? {
                    out.push(entry);
                }
                Ok(Entries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [u64; 2],
}

#[derive(Serialize)]
struct EntryOut<'a> {
    dtype: &'static str,
    shape: &'a [usize],
    data_offsets: [u64; 2],
}

struct Parsed {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    start: u64,
    end: u64,
}

pub(super) fn decode(bytes: &[u8]) -> Result<Checkpoint, StoreError> {
    if bytes.len() < PREFIX_LEN {
        return Err(StoreError::HeaderLength(format!(
            "file holds {} bytes, fewer than the {PREFIX_LEN}-byte length prefix",
            bytes.len()
        )));
    }
    let mut prefix = [0u8; PREFIX_LEN];
    prefix.copy_from_slice(&bytes[..PREFIX_LEN]);
    let header_len = u64::from_le_bytes(prefix);
    let remaining = (bytes.len() - PREFIX_LEN) as u64;
    if header_len > remaining {
        return Err(StoreError::HeaderLength(format!(
            "prefix at offset 0 declares {header_len} header bytes but only {remaining} bytes follow"
        )));
    }
    let header_end = PREFIX_LEN + header_len as usize;
    let json_err = |reason: String| StoreError::HeaderJson { end: header_end as u64, reason };

    let header = std::str::from_utf8(&bytes[PREFIX_LEN..header_end])
        .map_err(|e| json_err(format!("not UTF-8: {e}")))?;
    let mut de = serde_json::Deserializer::from_str(header);
    let Entries(entries) = Entries::deserialize(&mut de).map_err(|e| json_err(e.to_string()))?;
    de.end().map_err(|e| json_err(e.to_string()))?;

    let data = &bytes[header_end..];
    let available = data.len() as u64;

    let mut seen = HashSet::new();
    let mut metadata = BTreeMap::new();
    let mut parsed = Vec::with_capacity(entries.len());
    for (name, value) in entries {
        if !seen.insert(name.clone()) {
            return Err(StoreError::DuplicateName(name));
        }
        if name == METADATA_KEY {
            metadata = serde_json::from_value::<BTreeMap<String, String>>(value).map_err(|e| {
                StoreError::InvalidEntry { name: name.clone(), reason: e.to_string() }
            })?;
            continue;
        }
        if name.is_empty() {
            return Err(StoreError::InvalidName(name));
        }
        let raw: RawEntry = serde_json::from_value(value)
            .map_err(|e| StoreError::InvalidEntry { name: name.clone(), reason: e.to_string() })?;
        let dtype = DType::parse(&raw.dtype)
            .ok_or_else(|| StoreError::UnknownDtype { name: name.clone(), dtype: raw.dtype.clone() })?;
        let [start, end] = raw.data_offsets;
        if start > end {
            return Err(StoreError::InvalidEntry {
                name,
                reason: format!("data_offsets start {start} exceeds end {end}"),
            });
        }
        if end > available {
            return Err(StoreError::OutOfBounds {
                file_start: start.saturating_add(header_end as u64),
                file_end: end.saturating_add(header_end as u64),
                name,
                start,
                end,
                available,
            });
        }
        let expected = raw
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .and_then(|n| n.checked_mul(dtype.size() as u64));
        if expected != Some(end - start) {
            return Err(StoreError::SizeMismatch {
                name,
                dtype,
                shape: raw.shape,
                expected: expected.unwrap_or(u64::MAX),
                actual: end - start,
            });
        }
        parsed.push(Parsed { name, dtype, shape: raw.shape, start, end });
    }

    let mut by_offset: Vec<&Parsed> = parsed.iter().filter(|p| p.end > p.start).collect();
    by_offset.sort_by_key(|p| (p.start, p.end));
    for pair in by_offset.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.start < a.end {
            return Err(StoreError::Overlap {
                first: a.name.clone(),
                first_start: a.start,
                first_end: a.end,
                second: b.name.clone(),
                second_start: b.start,
                second_end: b.end,
            });
        }
    }

    let mut ckpt = Checkpoint::new();
    *ckpt.metadata_mut() = metadata;
    for p in parsed {
        let raw = &data[p.start as usize..p.end as usize];
        ckpt.insert(p.name, Tensor { shape: p.shape, data: TensorData::from_le(p.dtype, raw) });
    }
    Ok(ckpt)
}

pub(super) fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>, StoreError> {
    ckpt.validate()?;

    // serde_json output is deterministic for these types; failure is impossible
    // for string maps and plain structs.
    let mut header = String::from("{");
    let mut first = true;
    let mut push_entry = |header: &mut String, key: &str, value: String| {
        if !first {
            header.push(',');
        }
        first = false;
        header.push_str(&serde_json::to_string(key).expect("string key"));
        header.push(':');
        header.push_str(&value);
    };
    if !ckpt.metadata().is_empty() {
        let value = serde_json::to_string(ckpt.metadata()).expect("string map");
        push_entry(&mut header, METADATA_KEY, value);
    }
    for meta in ckpt.metas() {
        let entry = EntryOut {
            dtype: meta.dtype.as_str(),
            shape: &meta.shape,
            data_offsets: [meta.byte_range.0, meta.byte_range.1],
        };
        push_entry(&mut header, &meta.name, serde_json::to_string(&entry).expect("plain struct"));
    }
    header.push('}');
    let pad = (HEADER_ALIGN - header.len() % HEADER_ALIGN) % HEADER_ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));

    let data_len: usize = ckpt.iter().map(|(_, t)| t.byte_len()).sum();
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + data_len);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for (_, tensor) in ckpt.iter() {
        tensor.data.write_le(&mut out);
    }
    Ok(out)
}

/// Reads and validates a checkpoint file.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
    decode(&bytes)
}

/// Writes the canonical serialization. Nothing touches the file system if the
/// checkpoint fails validation.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let bytes = encode(ckpt)?;
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    // Write next to the target and rename, so readers never see a partial file.
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    if let Err(e) = fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(io(e));
    }
    Ok(())
}
