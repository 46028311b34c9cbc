//! Model file layout, all integers little-endian:
//!
//! ```text
//! "WCCEWS"                  6 bytes
//! format version            u32
//! section count             u32
//! per section:
//!   name length             u16
//!   name                    UTF-8
//!   body length             u64
//!   body                    JSON
//! sha256 of all bytes above 32 bytes
//! ```
//!
//! Sections: `schema`, `metadata`, `m_crime`, `m_fine`, `m_type`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureSpec, RiskError, WccewsModel};
use crate::data::Taxonomy;

pub const MAGIC: &[u8; 6] = b"WCCEWS";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct SchemaSection {
    feature_schema: Vec<String>,
    taxonomy: Taxonomy,
    features: FeatureSpec,
}

fn push_section<T: Serialize>(out: &mut Vec<u8>, name: &str, value: &T) {
    let body = serde_json::to_vec(value).expect("model sections serialize");
    out.extend((name.len() as u16).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((body.len() as u64).to_le_bytes());
    out.extend(body);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RiskError> {
        if self.buf.len() - self.pos < n {
            return Err(RiskError::Integrity(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, RiskError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, RiskError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, RiskError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn section<T: DeserializeOwned>(sections: &[(String, &[u8])], name: &str) -> Result<T, RiskError> {
    let (_, body) = sections
        .iter()
        .find(|(n, _)| n == name)
        .ok_or_else(|| RiskError::Format(format!("missing section {name:?}")))?;
    serde_json::from_slice(body).map_err(|e| RiskError::Format(format!("section {name:?}: {e}")))
}

impl WccewsModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend(5u32.to_le_bytes());
        push_section(
            &mut out,
            "schema",
            &SchemaSection {
                feature_schema: self.feature_schema.clone(),
                taxonomy: self.taxonomy.clone(),
                features: self.features.clone(),
            },
        );
        push_section(&mut out, "metadata", &self.metadata);
        push_section(&mut out, "m_crime", &self.m_crime);
        push_section(&mut out, "m_fine", &self.m_fine);
        push_section(&mut out, "m_type", &self.m_type);
        let digest = Sha256::digest(&out);
        out.extend(digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RiskError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(RiskError::Format("not a model file (bad magic)".into()));
        }
        let mut r = Reader {
            buf: bytes,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(RiskError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if bytes.len() < r.pos + 4 + DIGEST_LEN {
            return Err(RiskError::Integrity("file too short".into()));
        }
        let (payload, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(RiskError::Integrity("checksum mismatch (truncated or corrupted)".into()));
        }
        let mut r = Reader { buf: payload, pos: r.pos };
        let count = r.u32()?;
        let mut sections = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| RiskError::Format("section name is not UTF-8".into()))?
                .to_string();
            let len = usize::try_from(r.u64()?).map_err(|_| RiskError::Integrity("section too large".into()))?;
            sections.push((name, r.take(len)?));
        }
        if r.pos != payload.len() {
            return Err(RiskError::Integrity("trailing bytes after the last section".into()));
        }
        let schema: SchemaSection = section(&sections, "schema")?;
        Ok(Self {
            m_crime: section(&sections, "m_crime")?,
            m_fine: section(&sections, "m_fine")?,
            m_type: section(&sections, "m_type")?,
            metadata: section(&sections, "metadata")?,
            feature_schema: schema.feature_schema,
            taxonomy: schema.taxonomy,
            features: schema.features,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RiskError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| RiskError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RiskError> {
        let bytes = std::fs::read(path).map_err(|source| RiskError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
