//! Map-side buffering and the partitioned shuffle store.
//!
//! Buffered pairs are laid out as length-prefixed records
//! (`u32 LE key_len, key, u32 LE value_len, value`). The same layout is used
//! for in-memory chunks and for spill files, so a spilled partition is read
//! back by concatenation.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::marker::PhantomData;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use tempfile::TempDir;

use crate::codec::Codec;
use crate::partition::partition_of_bytes;

/// Collects the pairs emitted by one mapper invocation stream.
pub struct Emitter<K, V> {
    buffers: Vec<Vec<u8>>,
    scratch: Vec<u8>,
    buffered: usize,
    emitted: u64,
    _marker: PhantomData<fn(K, V)>,
}

impl<K: Codec, V: Codec> Emitter<K, V> {
    pub(crate) fn new(partitions: usize) -> Self {
        Self {
            buffers: vec![Vec::new(); partitions],
            scratch: Vec::with_capacity(64),
            buffered: 0,
            emitted: 0,
            _marker: PhantomData,
        }
    }

    pub fn emit(&mut self, key: K, value: V) {
        self.scratch.clear();
        key.encode(&mut self.scratch);
        let partition = partition_of_bytes(&self.scratch, self.buffers.len());
        let buf = &mut self.buffers[partition];
        let before = buf.len();
        push_record_key(buf, &self.scratch);
        self.scratch.clear();
        value.encode(&mut self.scratch);
        buf.extend_from_slice(&(self.scratch.len() as u32).to_le_bytes());
        buf.extend_from_slice(&self.scratch);
        self.buffered += buf.len() - before;
        self.emitted += 1;
    }

    /// Pairs emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub(crate) fn buffered_bytes(&self) -> usize {
        self.buffered
    }

    pub(crate) fn drain(&mut self) -> impl Iterator<Item = (usize, Vec<u8>)> + '_ {
        self.buffered = 0;
        self.buffers
            .iter_mut()
            .enumerate()
            .filter(|(_, b)| !b.is_empty())
            .map(|(p, b)| (p, std::mem::take(b)))
    }
}

fn push_record_key(buf: &mut Vec<u8>, key: &[u8]) {
    buf.extend_from_slice(&(key.len() as u32).to_le_bytes());
    buf.extend_from_slice(key);
}

#[derive(Default)]
struct PartitionData {
    chunks: Vec<Vec<u8>>,
    spill: Option<(PathBuf, File)>,
}

/// Shared shuffle state: one slot per reduce partition plus the spill
/// directory, created on first spill and removed when the store drops.
pub(crate) struct ShuffleStore {
    partitions: Vec<Mutex<PartitionData>>,
    buffered: AtomicUsize,
    threshold: usize,
    spill_root: Option<PathBuf>,
    spill_dir: Mutex<Option<TempDir>>,
    spill_events: AtomicU64,
    spilled_bytes: AtomicU64,
}

impl ShuffleStore {
    pub(crate) fn new(partitions: usize, threshold: usize, spill_root: Option<PathBuf>) -> Self {
        Self {
            partitions: (0..partitions).map(|_| Mutex::default()).collect(),
            buffered: AtomicUsize::new(0),
            threshold,
            spill_root,
            spill_dir: Mutex::new(None),
            spill_events: AtomicU64::new(0),
            spilled_bytes: AtomicU64::new(0),
        }
    }

    pub(crate) fn add_chunk(&self, partition: usize, chunk: Vec<u8>) -> io::Result<()> {
        let len = chunk.len();
        self.partitions[partition]
            .lock()
            .expect("shuffle partition poisoned")
            .chunks
            .push(chunk);
        let total = self.buffered.fetch_add(len, Ordering::AcqRel) + len;
        if total > self.threshold {
            self.spill_all()?;
        }
        Ok(())
    }

    fn spill_all(&self) -> io::Result<()> {
        let dir = self.ensure_spill_dir()?;
        let mut wrote = false;
        for (idx, slot) in self.partitions.iter().enumerate() {
            let mut data = slot.lock().expect("shuffle partition poisoned");
            if data.chunks.is_empty() {
                continue;
            }
            if data.spill.is_none() {
                let path = dir.join(format!("part-{idx:05}.spill"));
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .read(true)
                    .open(&path)?;
                data.spill = Some((path, file));
            }
            let chunks = std::mem::take(&mut data.chunks);
            let (_, file) = data.spill.as_mut().expect("spill file opened above");
            let mut bytes = 0;
            for chunk in &chunks {
                file.write_all(chunk)?;
                bytes += chunk.len();
            }
            self.buffered.fetch_sub(bytes, Ordering::AcqRel);
            self.spilled_bytes.fetch_add(bytes as u64, Ordering::Relaxed);
            wrote = true;
        }
        if wrote {
            self.spill_events.fetch_add(1, Ordering::Relaxed);
            tracing::debug!(dir = %dir.display(), "spilled shuffle buffers");
        }
        Ok(())
    }

    fn ensure_spill_dir(&self) -> io::Result<PathBuf> {
        let mut guard = self.spill_dir.lock().expect("spill dir lock poisoned");
        if guard.is_none() {
            let builder = {
                let mut b = tempfile::Builder::new();
                b.prefix("gantryflow-spill-");
                b
            };
            let dir = match &self.spill_root {
                Some(root) => builder.tempdir_in(root)?,
                None => builder.tempdir()?,
            };
            *guard = Some(dir);
        }
        Ok(guard.as_ref().map(|d| d.path().to_path_buf()).expect("set above"))
    }

    /// Removes and returns every buffer belonging to `partition`, reading its
    /// spill file back into memory if one exists.
    pub(crate) fn take_partition(&self, partition: usize) -> io::Result<Vec<Vec<u8>>> {
        let mut data = self.partitions[partition]
            .lock()
            .expect("shuffle partition poisoned");
        let mut out = Vec::with_capacity(data.chunks.len() + 1);
        if let Some((path, mut file)) = data.spill.take() {
            file.flush()?;
            drop(file);
            let mut bytes = Vec::new();
            File::open(&path)?.read_to_end(&mut bytes)?;
            std::fs::remove_file(&path)?;
            out.push(bytes);
        }
        let chunks = std::mem::take(&mut data.chunks);
        let len: usize = chunks.iter().map(Vec::len).sum();
        self.buffered.fetch_sub(len, Ordering::AcqRel);
        out.extend(chunks);
        Ok(out)
    }

    pub(crate) fn spill_events(&self) -> u64 {
        self.spill_events.load(Ordering::Relaxed)
    }

    pub(crate) fn spilled_bytes(&self) -> u64 {
        self.spilled_bytes.load(Ordering::Relaxed)
    }

    #[cfg(test)]
    pub(crate) fn spill_path(&self) -> Option<PathBuf> {
        self.spill_dir
            .lock()
            .unwrap()
            .as_ref()
            .map(|d| d.path().to_path_buf())
    }
}

/// Splits a buffer of length-prefixed records into `(key, value)` slices.
pub(crate) fn parse_records<'a>(
    buf: &'a [u8],
    out: &mut Vec<(&'a [u8], &'a [u8])>,
) -> Result<(), String> {
    let mut rest = buf;
    while !rest.is_empty() {
        let (key, tail) = split_prefixed(rest)?;
        let (value, tail) = split_prefixed(tail)?;
        out.push((key, value));
        rest = tail;
    }
    Ok(())
}

fn split_prefixed(buf: &[u8]) -> Result<(&[u8], &[u8]), String> {
    if buf.len() < 4 {
        return Err(format!("truncated length prefix ({} bytes left)", buf.len()));
    }
    let len = u32::from_le_bytes(buf[..4].try_into().expect("4 bytes")) as usize;
    let body = &buf[4..];
    if body.len() < len {
        return Err(format!("record of {len} bytes truncated to {}", body.len()));
    }
    Ok(body.split_at(len))
}
