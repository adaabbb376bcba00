//! Batched 3D Model container.
//!
//! Layout: 28-byte header (`b3dm`, then little-endian u32 version,
//! byteLength, featureTableJSONByteLength, featureTableBinaryByteLength,
//! batchTableJSONByteLength, batchTableBinaryByteLength), the four table
//! sections in that order, and the embedded GLB.

use serde_json::{Map, Value};

use super::BuildingError;

pub const HEADER_LEN: usize = 28;
const MAGIC: &[u8; 4] = b"b3dm";

/// JSON header plus binary body of a feature or batch table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub json: Map<String, Value>,
    pub binary: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct B3dmPayload {
    pub feature_table: Table,
    pub batch_table: Table,
    pub glb: Vec<u8>,
}

impl B3dmPayload {
    pub fn batch_length(&self) -> Result<usize, BuildingError> {
        self.feature_table
            .json
            .get("BATCH_LENGTH")
            .and_then(Value::as_u64)
            .map(|n| n as usize)
            .ok_or_else(|| BuildingError::MalformedTable("feature table lacks BATCH_LENGTH".into()))
    }

    /// `RTC_CENTER` from the feature table, or the origin.
    pub fn rtc_center(&self) -> [f64; 3] {
        let get = |v: &Value| -> Option<[f64; 3]> {
            let a = v.as_array()?;
            Some([a.first()?.as_f64()?, a.get(1)?.as_f64()?, a.get(2)?.as_f64()?])
        };
        self.feature_table.json.get("RTC_CENTER").and_then(get).unwrap_or([0.0; 3])
    }

    /// Row `batch` of a JSON batch-table column, rendered as text.
    pub fn batch_value(&self, column: &str, batch: usize) -> Option<String> {
        match self.batch_table.json.get(column)?.as_array()?.get(batch)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        }
    }

    fn validate(&self) -> Result<(), BuildingError> {
        let n = self.batch_length()?;
        for (name, col) in &self.batch_table.json {
            match col {
                Value::Array(items) if items.len() != n => {
                    return Err(BuildingError::MalformedTable(format!("batch column {name} has {} entries for {n} batches", items.len())));
                }
                Value::Array(_) => {}
                Value::Object(o) if o.contains_key("byteOffset") => {}
                // Extensions and other non-column entries.
                _ if name == "extensions" || name == "extras" => {}
                _ => return Err(BuildingError::MalformedTable(format!("batch column {name} is not an array"))),
            }
        }
        Ok(())
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("four bytes"))
}

fn parse_table_json(bytes: &[u8], what: &str) -> Result<Map<String, Value>, BuildingError> {
    if bytes.iter().all(|&b| b == b' ') {
        return Ok(Map::new());
    }
    match serde_json::from_slice(bytes) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(BuildingError::MalformedTable(format!("{what} JSON is not an object"))),
        Err(e) => Err(BuildingError::MalformedTable(format!("{what} JSON: {e}"))),
    }
}

pub fn parse_b3dm(bytes: &[u8]) -> Result<B3dmPayload, BuildingError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(BuildingError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(BuildingError::LengthMismatch { header: HEADER_LEN, actual: bytes.len() });
    }
    let version = u32_at(bytes, 4);
    if version != 1 {
        return Err(BuildingError::UnsupportedVersion(version));
    }
    let total = u32_at(bytes, 8) as usize;
    if total != bytes.len() {
        return Err(BuildingError::LengthMismatch { header: total, actual: bytes.len() });
    }
    let lens: Vec<usize> = (0..4).map(|k| u32_at(bytes, 12 + 4 * k) as usize).collect();
    let tables_end = HEADER_LEN + lens.iter().sum::<usize>();
    if tables_end > total {
        return Err(BuildingError::LengthMismatch { header: tables_end, actual: total });
    }
    let mut at = HEADER_LEN;
    let mut take = |n: usize| {
        let s = &bytes[at..at + n];
        at += n;
        s
    };
    let ft_json = parse_table_json(take(lens[0]), "feature table")?;
    let ft_bin = take(lens[1]).to_vec();
    let bt_json = parse_table_json(take(lens[2]), "batch table")?;
    let bt_bin = take(lens[3]).to_vec();
    let payload = B3dmPayload {
        feature_table: Table { json: ft_json, binary: ft_bin },
        batch_table: Table { json: bt_json, binary: bt_bin },
        glb: bytes[tables_end..].to_vec(),
    };
    payload.validate()?;
    Ok(payload)
}

/// Pads `buf` with `fill` until `offset + buf.len()` is a multiple of 8.
fn pad8(buf: &mut Vec<u8>, offset: usize, fill: u8) {
    while (offset + buf.len()) % 8 != 0 {
        buf.push(fill);
    }
}

/// Reference writer. Table JSON is emitted with sorted keys and padded with
/// spaces, binary bodies with zeros, so every section starts 8-byte aligned.
pub fn write_b3dm(payload: &B3dmPayload) -> Vec<u8> {
    let encode = |m: &Map<String, Value>| -> Vec<u8> {
        if m.is_empty() {
            Vec::new()
        } else {
            serde_json::to_vec(m).expect("json values serialize")
        }
    };
    let mut sections: Vec<Vec<u8>> = Vec::with_capacity(4);
    let mut offset = HEADER_LEN;
    for (body, fill) in [
        (encode(&payload.feature_table.json), b' '),
        (payload.feature_table.binary.clone(), 0),
        (encode(&payload.batch_table.json), b' '),
        (payload.batch_table.binary.clone(), 0),
    ] {
        let mut body = body;
        if !body.is_empty() {
            pad8(&mut body, offset, fill);
        }
        offset += body.len();
        sections.push(body);
    }
    let total = offset + payload.glb.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    for v in [1, total, sections[0].len(), sections[1].len(), sections[2].len(), sections[3].len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for s in &sections {
        out.extend_from_slice(s);
    }
    out.extend_from_slice(&payload.glb);
    out
}
