//! `.evrx` file format, little-endian:
//!
//! ```text
//! "EVRX" u16:version
//! u32:m u32:m0 u32:ef_construction u32:ef_search f64:ml u64:rng_seed u128:rng_word_pos
//! u32:dim u32:entry (u32::MAX when empty)
//! u64:count
//! count × { u32:id_len id  f32×dim  u32:payload_len payload_json  u32:level
//!           (level+1) × { u32:n  u32×n } }
//! u32:crc32 of everything above
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::hnsw::{HnswIndex, HnswParams, Node};
use super::VIndexError;

pub const MAGIC: &[u8; 4] = b"EVRX";
pub const FORMAT_VERSION: u16 = 1;
const NO_ENTRY: u32 = u32::MAX;

pub(super) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VIndexError + '_ {
    move |source| VIndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes to a sibling temp file, syncs, then renames over `path`.
pub(super) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), VIndexError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| VIndexError::InvalidParams(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(bytes).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub(super) fn u32_len(n: usize) -> Result<u32, VIndexError> {
    u32::try_from(n).map_err(|_| VIndexError::InvalidParams(format!("length {n} does not fit in u32")))
}

/// Appends the CRC32 of `buf` to it.
pub(super) fn seal(buf: &mut Vec<u8>) {
    let crc = crc32fast::hash(buf);
    buf.extend_from_slice(&crc.to_le_bytes());
}

/// Checks magic, then version, then checksum. Returns the body after the
/// version field, without the trailing CRC.
pub(super) fn open<'a>(bytes: &'a [u8], magic: &[u8; 4], version: u16) -> Result<&'a [u8], VIndexError> {
    if bytes.len() < 4 + 2 + 4 {
        return Err(VIndexError::CorruptFile(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(VIndexError::CorruptFile("bad magic".into()));
    }
    let found = u16::from_le_bytes([bytes[4], bytes[5]]);
    if found != version {
        return Err(VIndexError::VersionMismatch {
            found,
            expected: version,
        });
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(VIndexError::CorruptFile("checksum mismatch".into()));
    }
    Ok(&body[6..])
}

pub(super) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], VIndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| VIndexError::CorruptFile(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], VIndexError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    pub fn u32(&mut self) -> Result<u32, VIndexError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, VIndexError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn u128(&mut self) -> Result<u128, VIndexError> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, VIndexError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, VIndexError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| VIndexError::CorruptFile("overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn string(&mut self) -> Result<String, VIndexError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| VIndexError::CorruptFile("invalid UTF-8".into()))
    }

    pub fn finish(&self) -> Result<(), VIndexError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(VIndexError::CorruptFile(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

pub(super) fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<(), VIndexError> {
    buf.extend_from_slice(&u32_len(s.len())?.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

pub(super) fn put_f32s(buf: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode(index: &HnswIndex) -> Result<Vec<u8>, VIndexError> {
    let p = &index.params;
    let mut buf = Vec::with_capacity(64 + index.nodes.len() * (index.dim * 4 + 256));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [p.m, p.m0, p.ef_construction, p.ef_search] {
        buf.extend_from_slice(&u32_len(v)?.to_le_bytes());
    }
    buf.extend_from_slice(&p.ml.to_le_bytes());
    buf.extend_from_slice(&p.rng_seed.to_le_bytes());
    buf.extend_from_slice(&index.rng.get_word_pos().to_le_bytes());
    buf.extend_from_slice(&u32_len(index.dim)?.to_le_bytes());
    buf.extend_from_slice(&index.entry.unwrap_or(NO_ENTRY).to_le_bytes());
    buf.extend_from_slice(&(index.nodes.len() as u64).to_le_bytes());
    for node in &index.nodes {
        put_str(&mut buf, &node.id)?;
        put_f32s(&mut buf, &node.vector);
        let payload = serde_json::to_vec(&node.payload).expect("JSON values serialize");
        buf.extend_from_slice(&u32_len(payload.len())?.to_le_bytes());
        buf.extend_from_slice(&payload);
        buf.extend_from_slice(&u32_len(node.level())?.to_le_bytes());
        for links in &node.links {
            buf.extend_from_slice(&u32_len(links.len())?.to_le_bytes());
            for &n in links {
                buf.extend_from_slice(&n.to_le_bytes());
            }
        }
    }
    seal(&mut buf);
    Ok(buf)
}

fn decode(bytes: &[u8]) -> Result<HnswIndex, VIndexError> {
    let mut r = Reader::new(open(bytes, MAGIC, FORMAT_VERSION)?);
    let corrupt = |msg: String| VIndexError::CorruptFile(msg);
    let params = HnswParams {
        m: r.u32()? as usize,
        m0: r.u32()? as usize,
        ef_construction: r.u32()? as usize,
        ef_search: r.u32()? as usize,
        ml: r.f64()?,
        rng_seed: r.u64()?,
    };
    params
        .validate()
        .map_err(|e| corrupt(format!("bad params: {e}")))?;
    let word_pos = r.u128()?;
    let dim = r.u32()? as usize;
    let entry = r.u32()?;
    let count = r.u64()?;
    if count > u64::from(u32::MAX) {
        return Err(corrupt(format!("implausible item count {count}")));
    }
    let count = count as usize;

    let mut index = HnswIndex::new(dim, params).map_err(|e| corrupt(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(index.params.rng_seed);
    rng.set_word_pos(word_pos);
    index.rng = rng;

    let mut nodes = Vec::with_capacity(count.min(1 << 20));
    let mut by_id = HashMap::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let id = r.string()?;
        let vector = r.f32s(dim)?;
        let payload_len = r.u32()? as usize;
        let payload = serde_json::from_slice(r.take(payload_len)?)
            .map_err(|e| corrupt(format!("payload of {id}: {e}")))?;
        let level = r.u32()? as usize;
        if level > 64 {
            return Err(corrupt(format!("implausible level {level} for {id}")));
        }
        let mut links = Vec::with_capacity(level + 1);
        for _ in 0..=level {
            let n = r.u32()? as usize;
            let mut layer = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let target = r.u32()?;
                if target as usize >= count {
                    return Err(corrupt(format!("link to missing node {target}")));
                }
                layer.push(target);
            }
            links.push(layer);
        }
        if by_id.insert(id.clone(), i as u32).is_some() {
            return Err(corrupt(format!("duplicate id {id}")));
        }
        nodes.push(Node {
            id,
            vector,
            payload,
            links,
        });
    }
    r.finish()?;
    index.entry = match (entry, count) {
        (NO_ENTRY, 0) => None,
        (e, n) if (e as usize) < n => Some(e),
        _ => return Err(corrupt(format!("bad entry point {entry}"))),
    };
    index.nodes = nodes;
    index.by_id = by_id;
    Ok(index)
}

/// Writes the index atomically.
pub fn persist(index: &HnswIndex, path: &Path) -> Result<(), VIndexError> {
    write_atomic(path, &encode(index)?)
}

pub fn load(path: &Path) -> Result<HnswIndex, VIndexError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes)
}

impl HnswIndex {
    pub fn to_bytes(&self) -> Result<Vec<u8>, VIndexError> {
        encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VIndexError> {
        decode(bytes)
    }
}
