//! On-disk candidate store: one binary file per (topic, slice offset) plus
//! a JSON-lines index.
//!
//! File layout (PFC1):
//!   magic `PFC1`
//!   topic id, u64 little-endian
//!   slice_start, 1 byte
//!   username count, u32 little-endian
//!   per username:
//!     the username's ASCII text hex-encoded (2 bytes per character)
//!     address count, u32 little-endian
//!     addresses, u32 little-endian each, sorted ascending
//!
//! The format is position-independent and mergeable; readers can seek
//! through it without a schema.

use crate::enumerate::CandidateSet;
use crate::error::{Error, Result};
use crate::scheme::{Address, TopicId, Username};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"PFC1";

/// One line of the JSON-lines index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub topic: u64,
    pub slice_start: usize,
    pub usernames: Vec<String>,
    pub sizes: Vec<u64>,
    pub file: String,
}

pub fn candidate_file_name(topic: TopicId, slice_start: usize) -> String {
    format!("t{}_s{}.pfc", topic.value(), slice_start)
}

/// Write all candidate sets of one (topic, slice) into `dir`, returning
/// the index entry. Sets must share the topic and slice offset.
pub fn write_topic_file(
    dir: &Path,
    topic: TopicId,
    slice_start: usize,
    sets: &[&CandidateSet],
) -> Result<IndexEntry> {
    let name = candidate_file_name(topic, slice_start);
    let path = dir.join(&name);
    let mut out = BufWriter::new(std::fs::File::create(&path)?);
    out.write_all(MAGIC)?;
    out.write_all(&topic.value().to_le_bytes())?;
    out.write_all(&[slice_start as u8])?;
    out.write_all(&(sets.len() as u32).to_le_bytes())?;
    let mut entry = IndexEntry {
        topic: topic.value(),
        slice_start,
        usernames: Vec::with_capacity(sets.len()),
        sizes: Vec::with_capacity(sets.len()),
        file: name,
    };
    for set in sets {
        debug_assert_eq!(set.topic, topic);
        debug_assert_eq!(set.slice_start, slice_start);
        let text = set.username.as_str();
        let mut hex = String::with_capacity(text.len() * 2);
        for b in text.bytes() {
            hex.push_str(&format!("{b:02x}"));
        }
        out.write_all(hex.as_bytes())?;
        out.write_all(&(set.addresses.len() as u32).to_le_bytes())?;
        for addr in &set.addresses {
            out.write_all(&addr.value().to_le_bytes())?;
        }
        entry.usernames.push(text.to_string());
        entry.sizes.push(set.addresses.len() as u64);
    }
    out.flush()?;
    Ok(entry)
}

/// Read one PFC1 file back into candidate sets.
pub fn read_topic_file(path: &Path, username_len: usize) -> Result<Vec<CandidateSet>> {
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data(format!(
            "{}: bad magic {magic:?}",
            path.display()
        )));
    }
    let mut u64buf = [0u8; 8];
    input.read_exact(&mut u64buf)?;
    let topic = TopicId(u64::from_le_bytes(u64buf));
    let mut byte = [0u8; 1];
    input.read_exact(&mut byte)?;
    let slice_start = byte[0] as usize;
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf)?;
    let username_count = u32::from_le_bytes(u32buf);

    let mut sets = Vec::with_capacity(username_count as usize);
    for _ in 0..username_count {
        let mut hex = vec![0u8; username_len * 2];
        input.read_exact(&mut hex)?;
        let mut text = String::with_capacity(username_len);
        for pair in hex.chunks_exact(2) {
            let hi = std::str::from_utf8(pair)
                .ok()
                .and_then(|s| u8::from_str_radix(s, 16).ok())
                .ok_or_else(|| Error::data(format!("{}: bad username hex", path.display())))?;
            text.push(hi as char);
        }
        let username = Username::new(text, username_len)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        input.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf);
        let mut addresses = Vec::with_capacity(count as usize);
        let mut raw = vec![0u8; count as usize * 4];
        input.read_exact(&mut raw)?;
        for quad in raw.chunks_exact(4) {
            addresses.push(Address(u32::from_le_bytes(quad.try_into().unwrap())));
        }
        sets.push(CandidateSet {
            topic,
            slice_start,
            username,
            addresses,
        });
    }
    Ok(sets)
}

pub const INDEX_FILE: &str = "index.jsonl";

pub fn append_index(dir: &Path, entries: &[IndexEntry]) -> Result<()> {
    let mut out = BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(INDEX_FILE))?,
    );
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexEntry>> {
    let text = std::fs::read_to_string(dir.join(INDEX_FILE))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        entries.push(
            serde_json::from_str(line)
                .map_err(|e| Error::parse(lineno + 1, format!("index: {e}")))?,
        );
    }
    Ok(entries)
}

/// In-memory view of a store directory, keyed for the attribution
/// pipeline's hot lookups.
pub struct CandidateStore {
    username_len: usize,
    /// (topic, slice) -> username value -> sorted addresses.
    topics: HashMap<(u64, usize), HashMap<u32, Vec<u32>>>,
    dir: PathBuf,
}

impl CandidateStore {
    /// Load every indexed file into memory.
    pub fn load(dir: &Path, username_len: usize) -> Result<Self> {
        let mut topics: HashMap<(u64, usize), HashMap<u32, Vec<u32>>> = HashMap::new();
        for entry in read_index(dir)? {
            let sets = read_topic_file(&dir.join(&entry.file), username_len)?;
            let bucket = topics.entry((entry.topic, entry.slice_start)).or_default();
            for set in sets {
                bucket.insert(
                    set.username.value(),
                    set.addresses.iter().map(|a| a.value()).collect(),
                );
            }
        }
        Ok(CandidateStore {
            username_len,
            topics,
            dir: dir.to_path_buf(),
        })
    }

    pub fn username_len(&self) -> usize {
        self.username_len
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn has_topic(&self, topic: TopicId, slice_start: usize) -> bool {
        self.topics.contains_key(&(topic.value(), slice_start))
    }

    /// Candidate addresses for one (topic, slice, username value), if the
    /// topic was enumerated at that slice.
    pub fn get(&self, topic: TopicId, slice_start: usize, username_value: u32) -> Option<&[u32]> {
        self.topics
            .get(&(topic.value(), slice_start))
            .and_then(|m| m.get(&username_value))
            .map(|v| v.as_slice())
    }

    /// Iterate all (topic, slice, username value, addresses) entries.
    pub fn iter(&self) -> impl Iterator<Item = (TopicId, usize, u32, &[u32])> + '_ {
        self.topics.iter().flat_map(|(&(topic, slice), users)| {
            users
                .iter()
                .map(move |(&value, addrs)| (TopicId(topic), slice, value, addrs.as_slice()))
        })
    }
}
