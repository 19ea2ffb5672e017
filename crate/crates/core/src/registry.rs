//! Append-only registration database.
//!
//! One file holds both the feature index and the ownership shares, so the
//! id -> (features, shares) mapping is updated atomically per record.
//!
//! Layout (little-endian):
//!
//! ```text
//! header:  "ZW3D" | version u16 | record count u64
//! record:  id_len u16 | id (UTF-8) | fn_2d 1600 x f64 | fn_depth 1600 x f64
//!          | O_2d 800 B | O_depth 800 B | W_2d 200 B | W_depth 200 B | crc32 u32
//! ```
//!
//! Bit matrices are packed row-major, MSB first. The CRC covers the record
//! body (everything before it). The header count is rewritten after each
//! append; bytes past the last counted record are an interrupted append and
//! are ignored by readers and truncated by the next writer.
//!
//! Watermarks are stored only so evaluation can compute BER against the
//! original; a deployment that does not need that can store all-white
//! watermarks without changing the format.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::feature::{FeatureVector, FEATURE_LEN};
use crate::frame::Role;
use crate::vss::{Share, ShareKind, Watermark, SHARE_SIDE, WATERMARK_SIDE};

pub const MAGIC: &[u8; 4] = b"ZW3D";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8;
const SHARE_BYTES: usize = SHARE_SIDE * SHARE_SIDE / 8;
const WATERMARK_BYTES: usize = WATERMARK_SIDE * WATERMARK_SIDE / 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationRecord {
    pub id: String,
    pub fn_2d: FeatureVector,
    pub fn_depth: FeatureVector,
    pub o_2d: Share,
    pub o_depth: Share,
    pub w_2d: Watermark,
    pub w_depth: Watermark,
}

/// Stored ownership material for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Ownership {
    pub o_2d: Share,
    pub o_depth: Share,
    pub w_2d: Watermark,
    pub w_depth: Watermark,
}

impl RegistrationRecord {
    fn validate(&self) -> Result<()> {
        if self.id.len() > u16::MAX as usize {
            return Err(Error::Shape(format!("id is {} bytes long", self.id.len())));
        }
        for f in [&self.fn_2d, &self.fn_depth] {
            if f.len() != FEATURE_LEN {
                return Err(Error::LengthMismatch {
                    expected: FEATURE_LEN,
                    got: f.len(),
                });
            }
        }
        for s in [&self.o_2d, &self.o_depth] {
            if s.kind() != ShareKind::Ownership {
                return Err(Error::Shape("registry stores ownership shares only".into()));
            }
        }
        Ok(())
    }

    pub fn ownership(&self) -> Ownership {
        Ownership {
            o_2d: self.o_2d.clone(),
            o_depth: self.o_depth.clone(),
            w_2d: self.w_2d.clone(),
            w_depth: self.w_depth.clone(),
        }
    }

    /// Serialized record including its trailing CRC.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&(self.id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.id.as_bytes());
        for f in [&self.fn_2d, &self.fn_depth] {
            for v in &f.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.o_2d.bits().pack_msb());
        out.extend_from_slice(&self.o_depth.bits().pack_msb());
        out.extend_from_slice(&self.w_2d.bits().pack_msb());
        out.extend_from_slice(&self.w_depth.bits().pack_msb());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    fn encoded_len(&self) -> usize {
        2 + self.id.len() + 2 * FEATURE_LEN * 8 + 2 * SHARE_BYTES + 2 * WATERMARK_BYTES + 4
    }

    /// Decodes one record from the front of `buf`, returning it and the bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize)> {
        let truncated = || Error::Corrupt("truncated record".into());
        let id_len = u16::from_le_bytes(buf.get(0..2).ok_or_else(truncated)?.try_into().unwrap()) as usize;
        let body_len = 2 + id_len + 2 * FEATURE_LEN * 8 + 2 * SHARE_BYTES + 2 * WATERMARK_BYTES;
        let body = buf.get(..body_len).ok_or_else(truncated)?;
        let stored = u32::from_le_bytes(buf.get(body_len..body_len + 4).ok_or_else(truncated)?.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Corrupt("record checksum mismatch".into()));
        }
        let mut pos = 2;
        let id = std::str::from_utf8(&body[pos..pos + id_len])
            .map_err(|_| Error::Corrupt("record id is not UTF-8".into()))?
            .to_owned();
        pos += id_len;
        let mut feature = |role| {
            let values = body[pos..pos + FEATURE_LEN * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += FEATURE_LEN * 8;
            FeatureVector::new(values, role)
        };
        let fn_2d = feature(Role::TwoD);
        let fn_depth = feature(Role::Depth);
        let mut take = |n: usize| {
            let s = &body[pos..pos + n];
            pos += n;
            s
        };
        let share = |bytes: &[u8]| -> Result<Share> {
            let bits = BitMatrix::unpack_msb(SHARE_SIDE, SHARE_SIDE, bytes)?;
            Share::new(bits, ShareKind::Ownership)
                .map_err(|e| Error::Corrupt(format!("ownership share: {e}")))
        };
        let o_2d = share(take(SHARE_BYTES))?;
        let o_depth = share(take(SHARE_BYTES))?;
        let wm = |bytes: &[u8]| -> Result<Watermark> {
            Watermark::new(BitMatrix::unpack_msb(WATERMARK_SIDE, WATERMARK_SIDE, bytes)?)
        };
        let w_2d = wm(take(WATERMARK_BYTES))?;
        let w_depth = wm(take(WATERMARK_BYTES))?;
        let rec = RegistrationRecord {
            id,
            fn_2d,
            fn_depth,
            o_2d,
            o_depth,
            w_2d,
            w_depth,
        };
        Ok((rec, body_len + 4))
    }
}

/// An open registry file. Readers hold an in-memory snapshot taken at open;
/// the writer additionally holds an exclusive advisory lock on the file.
#[derive(Debug)]
pub struct Registry {
    path: PathBuf,
    writer: Option<File>,
    records: Vec<RegistrationRecord>,
    index: HashMap<String, usize>,
    committed_len: u64,
    closed: bool,
}

fn header_bytes(count: u64) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&VERSION.to_le_bytes());
    h.extend_from_slice(&count.to_le_bytes());
    h
}

/// Parses a whole registry image; returns records and the committed length.
fn parse_image(buf: &[u8]) -> Result<(Vec<RegistrationRecord>, u64)> {
    if buf.len() < HEADER_LEN || &buf[0..4] != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(Error::Corrupt(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(buf[6..14].try_into().unwrap());
    let mut pos = HEADER_LEN;
    let mut records = Vec::new();
    for _ in 0..count {
        let (rec, used) = RegistrationRecord::decode(&buf[pos..])?;
        records.push(rec);
        pos += used;
    }
    Ok((records, pos as u64))
}

fn build_index(records: &[RegistrationRecord]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if index.insert(r.id.clone(), i).is_some() {
            return Err(Error::Corrupt(format!("id {:?} stored twice", r.id)));
        }
    }
    Ok(index)
}

impl Registry {
    /// Opens a read-only snapshot.
    pub fn open(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (records, committed_len) = parse_image(&buf)?;
        let index = build_index(&records)?;
        Ok(Registry {
            path: path.to_path_buf(),
            writer: None,
            records,
            index,
            committed_len,
            closed: false,
        })
    }

    /// Opens (creating if needed) for appending. Fails with [`Error::Locked`]
    /// if another writer holds the file.
    pub fn open_writer(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        match file.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => return Err(Error::Locked(path.to_path_buf())),
            Err(std::fs::TryLockError::Error(e)) => return Err(Error::io(path, e)),
        }
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
        let (records, committed_len) = if buf.is_empty() {
            file.write_all(&header_bytes(0)).map_err(|e| Error::io(path, e))?;
            file.sync_all().map_err(|e| Error::io(path, e))?;
            (Vec::new(), HEADER_LEN as u64)
        } else {
            parse_image(&buf)?
        };
        if (buf.len() as u64) > committed_len {
            file.set_len(committed_len).map_err(|e| Error::io(path, e))?;
        }
        let index = build_index(&records)?;
        Ok(Registry {
            path: path.to_path_buf(),
            writer: Some(file),
            records,
            index,
            committed_len,
            closed: false,
        })
    }

    fn check_open(&self) -> Result<()> {
        if self.closed {
            Err(Error::RegistryClosed)
        } else {
            Ok(())
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record durably; returns the new record count.
    pub fn register(&mut self, record: RegistrationRecord) -> Result<usize> {
        self.check_open()?;
        record.validate()?;
        if self.index.contains_key(&record.id) {
            return Err(Error::DuplicateId(record.id));
        }
        let path = self.path.clone();
        let file = self.writer.as_mut().ok_or(Error::ReadOnly)?;
        let bytes = record.encode();
        let io = |e| Error::io(&path, e);
        file.seek(SeekFrom::Start(self.committed_len)).map_err(io)?;
        file.write_all(&bytes).map_err(io)?;
        file.sync_data().map_err(io)?;
        let count = self.records.len() as u64 + 1;
        file.seek(SeekFrom::Start(6)).map_err(io)?;
        file.write_all(&count.to_le_bytes()).map_err(io)?;
        file.sync_data().map_err(io)?;
        self.committed_len += bytes.len() as u64;
        self.index.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(self.records.len())
    }

    pub fn get(&self, id: &str) -> Result<&RegistrationRecord> {
        self.check_open()?;
        self.index
            .get(id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    pub fn lookup_ownership(&self, id: &str) -> Result<Ownership> {
        self.get(id).map(RegistrationRecord::ownership)
    }

    /// `(id, fn_2d, fn_depth)` in insertion order.
    pub fn iterate_features(
        &self,
    ) -> Result<impl Iterator<Item = (&str, &FeatureVector, &FeatureVector)> + '_> {
        self.check_open()?;
        Ok(self
            .records
            .iter()
            .map(|r| (r.id.as_str(), &r.fn_2d, &r.fn_depth)))
    }

    pub fn records(&self) -> Result<&[RegistrationRecord]> {
        self.check_open()?;
        Ok(&self.records)
    }

    /// Serializes the current contents to a fresh file in canonical form.
    pub fn write_canonical(&self, path: &Path) -> Result<()> {
        self.check_open()?;
        let mut buf = header_bytes(self.records.len() as u64);
        for r in &self.records {
            buf.extend_from_slice(&r.encode());
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Releases the writer lock; further operations fail with [`Error::RegistryClosed`].
    pub fn close(&mut self) {
        if let Some(f) = self.writer.take() {
            let _ = f.unlock();
        }
        self.closed = true;
    }
}

impl Drop for Registry {
    fn drop(&mut self) {
        if let Some(f) = self.writer.take() {
            let _ = f.unlock();
        }
    }
}
