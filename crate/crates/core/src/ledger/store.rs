//! On-disk block log and state snapshots.
//!
//! Block log (`blocks.log`): a sequence of records, each a big-endian `u32`
//! length followed by that many bytes of canonical block encoding. Records
//! are appended in height order.
//!
//! Snapshot (`state.snap`):
//!
//! ```text
//! magic     8 bytes  "PCSNAP\0\x01"
//! height    u64 BE
//! blockhash 32 bytes
//! count     u32 BE
//! entries   count x (u32 len, key utf-8, u32 len, value)
//! checksum  32 bytes sha256 of everything above
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encode, Encoder};
use crate::crypto::Hash32;

use super::Block;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"PCSNAP\0\x01";
const MAX_RECORD: usize = 256 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("truncated block log at record {0}")]
    Truncated(usize),
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub height: u64,
    pub block_hash: Hash32,
    pub entries: Vec<(String, Vec<u8>)>,
}

/// Append-only block log plus snapshot file in one directory.
#[derive(Debug, Clone)]
pub struct BlockStore {
    dir: PathBuf,
}

impl BlockStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("blocks.log")
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.dir.join("state.snap")
    }

    pub fn append(&self, block: &Block) -> Result<(), StoreError> {
        let bytes = block.to_canonical_bytes();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.log_path())?;
        let mut rec = Vec::with_capacity(bytes.len() + 4);
        rec.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        rec.extend_from_slice(&bytes);
        f.write_all(&rec)?;
        f.sync_data()?;
        Ok(())
    }

    /// Rewrites the whole log.
    pub fn write_all(&self, blocks: &[Block]) -> Result<(), StoreError> {
        let records: Vec<Vec<u8>> = blocks.iter().map(|b| b.to_canonical_bytes()).collect();
        self.write_records(&records)
    }

    pub fn write_records(&self, records: &[Vec<u8>]) -> Result<(), StoreError> {
        let tmp = self.dir.join("blocks.log.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for r in records {
                w.write_all(&(r.len() as u32).to_be_bytes())?;
                w.write_all(r)?;
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        fs::rename(tmp, self.log_path())?;
        Ok(())
    }

    /// Raw records, undecoded. A missing log is an empty chain.
    pub fn read_records(&self) -> Result<Vec<Vec<u8>>, StoreError> {
        let mut data = Vec::new();
        match File::open(self.log_path()) {
            Ok(mut f) => {
                f.read_to_end(&mut data)?;
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        }
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < data.len() {
            if data.len() - pos < 4 {
                return Err(StoreError::Truncated(out.len()));
            }
            let len = u32::from_be_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if len > MAX_RECORD || data.len() - pos < len {
                return Err(StoreError::Truncated(out.len()));
            }
            out.push(data[pos..pos + len].to_vec());
            pos += len;
        }
        Ok(out)
    }

    pub fn write_snapshot(&self, snap: &Snapshot) -> Result<(), StoreError> {
        let tmp = self.dir.join("state.snap.tmp");
        fs::write(&tmp, encode_snapshot(snap))?;
        fs::rename(tmp, self.snapshot_path())?;
        Ok(())
    }

    pub fn read_snapshot(&self) -> Result<Option<Snapshot>, StoreError> {
        match fs::read(self.snapshot_path()) {
            Ok(data) => decode_snapshot(&data).map(Some),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

pub fn encode_snapshot(snap: &Snapshot) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.fixed(SNAPSHOT_MAGIC)
        .u64(snap.height)
        .value(&snap.block_hash)
        .len(snap.entries.len());
    for (k, v) in &snap.entries {
        enc.str(k).bytes(v);
    }
    let sum = Hash32::digest(enc.as_bytes());
    enc.value(&sum);
    enc.into_bytes()
}

pub fn decode_snapshot(data: &[u8]) -> Result<Snapshot, StoreError> {
    let bad = |m: &str| StoreError::BadSnapshot(m.to_string());
    if data.len() < 8 + 32 || &data[..8] != SNAPSHOT_MAGIC {
        return Err(bad("missing magic"));
    }
    let (body, sum) = data.split_at(data.len() - 32);
    if Hash32::digest(body).0 != sum {
        return Err(bad("checksum mismatch"));
    }
    let mut dec = Decoder::new(&body[8..]);
    let height = dec.u64()?;
    let block_hash = dec.value()?;
    let count = dec.length()?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        entries.push((dec.string()?, dec.bytes()?));
    }
    dec.finish()?;
    Ok(Snapshot {
        height,
        block_hash,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_and_checksum() {
        let snap = Snapshot {
            height: 7,
            block_hash: Hash32::digest(b"b"),
            entries: vec![("a".into(), vec![1, 2]), ("b".into(), vec![])],
        };
        let bytes = encode_snapshot(&snap);
        assert_eq!(&bytes[..8], SNAPSHOT_MAGIC);
        assert_eq!(decode_snapshot(&bytes).unwrap(), snap);
        for i in 0..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x01;
            assert!(decode_snapshot(&b).is_err(), "flip at {i} accepted");
        }
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = BlockStore::open(dir.path()).unwrap();
        assert!(s.read_records().unwrap().is_empty());
        s.write_records(&[vec![1, 2, 3], vec![]]).unwrap();
        assert_eq!(s.read_records().unwrap(), vec![vec![1, 2, 3], vec![]]);
        let mut raw = fs::read(s.log_path()).unwrap();
        raw.pop();
        fs::write(s.log_path(), raw).unwrap();
        assert!(matches!(s.read_records(), Err(StoreError::Truncated(1))));
    }
}
