//! Binary snapshot framing: `magic | version | body_len | sha256(body) | body`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::corpus::{AnnotationEvent, CorpusIndex, FieldFreqs};
use super::IndexError;
use crate::dndo::{from_json_value, to_json_value};

pub const MAGIC: &[u8; 8] = b"DNMIDX\x00\x01";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

#[derive(Serialize, Deserialize)]
struct Body {
    name: String,
    comment_cap: usize,
    docs: Vec<Value>,
    postings: BTreeMap<String, BTreeMap<String, FieldFreqs>>,
    field_lens: BTreeMap<String, FieldFreqs>,
    annotation_log: Vec<AnnotationEvent>,
}

pub fn encode(index: &CorpusIndex) -> Vec<u8> {
    let body = Body {
        name: index.name.clone(),
        comment_cap: index.comment_cap,
        docs: index.docs.values().map(to_json_value).collect(),
        postings: index.postings.clone(),
        field_lens: index.field_lens.clone(),
        annotation_log: index.annotation_log.clone(),
    };
    let body = serde_json::to_vec(&body).expect("snapshot body serializes");
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&body));
    out.extend_from_slice(&body);
    out
}

fn corrupt(reason: impl Into<String>) -> IndexError {
    IndexError::CorruptSnapshot(reason.into())
}

pub fn decode(bytes: &[u8]) -> Result<CorpusIndex, IndexError> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != len {
        return Err(corrupt(format!("body is {} bytes, header says {len}", body.len())));
    }
    if Sha256::digest(body).as_slice() != &bytes[20..52] {
        return Err(corrupt("checksum mismatch"));
    }
    let body: Body = serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))?;
    let mut index = CorpusIndex::new(body.name).with_comment_cap(body.comment_cap);
    for raw in body.docs {
        let d = from_json_value(raw).map_err(|e| corrupt(e.to_string()))?;
        index.docs.insert(d.doc_id(), d);
    }
    index.annotation_log = body.annotation_log;
    index.rebuild();
    if index.postings != body.postings || index.field_lens != body.field_lens {
        return Err(corrupt("postings disagree with stored documents"));
    }
    Ok(index)
}
