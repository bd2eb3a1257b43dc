//! On-disk text formats: the public dump, ground truth, assignments,
//! anchors, and report files.
//!
//! Every file starts with `#` comment lines recording the tool version,
//! the seed, and a digest of the configuration that produced it, so a
//! result can always be traced back to its inputs. Readers skip comments.

use crate::attribute::{AssignmentRecord, WindowKind};
use crate::error::{Error, Result};
use crate::scheme::{Address, TopicId, Username};
use crate::synth::{GroundTruth, Post};
use chrono::{DateTime, NaiveDateTime};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance recorded at the top of every output file.
#[derive(Debug, Clone, Default)]
pub struct FileStamp {
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
}

impl FileStamp {
    pub fn new(seed: u64, config_digest: impl Into<String>) -> Self {
        FileStamp {
            seed: Some(seed),
            config_digest: Some(config_digest.into()),
        }
    }

    fn write(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# hashslice v{TOOL_VERSION}")?;
        if let Some(seed) = self.seed {
            writeln!(out, "# seed={seed}")?;
        }
        if let Some(digest) = &self.config_digest {
            writeln!(out, "# config={digest}")?;
        }
        Ok(())
    }
}

/// SHA-1 digest of a configuration's canonical JSON, for the file headers.
pub fn config_digest<T: serde::Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(crate::hash::hex_digest(crate::hash::HashKind::Sha1, &json))
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = (usize, String)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    Ok(reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) => {
                let trimmed = l.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some((i + 1, l))
                }
            }
            Err(_) => None,
        }))
}

// ---------------------------------------------------------------------------
// Public dump
// ---------------------------------------------------------------------------

pub fn write_dump(path: &Path, posts: &[Post], stamp: &FileStamp) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    stamp.write(&mut out)?;
    writeln!(out, "post_id,topic_id,username,timestamp")?;
    for post in posts {
        writeln!(
            out,
            "{},{},{},{}",
            post.post_id,
            post.topic.value(),
            post.username,
            post.timestamp
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path, username_len: usize) -> Result<Vec<Post>> {
    let mut posts = Vec::new();
    for (lineno, line) in data_lines(path)? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(lineno, format!("expected 4 fields: {line:?}")));
        }
        if fields[0] == "post_id" {
            continue;
        }
        let parse_u64 = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|e| Error::parse(lineno, format!("bad {what}: {e}")))
        };
        posts.push(Post {
            post_id: parse_u64(fields[0], "post_id")?,
            topic: TopicId(parse_u64(fields[1], "topic_id")?),
            username: Username::new(fields[2], username_len)
                .map_err(|e| Error::parse(lineno, e.to_string()))?,
            timestamp: fields[3]
                .parse::<i64>()
                .map_err(|e| Error::parse(lineno, format!("bad timestamp: {e}")))?,
        });
    }
    posts.sort_by_key(|p| p.post_id);
    Ok(posts)
}

// ---------------------------------------------------------------------------
// Ground truth (never read by the attribution pipeline)
// ---------------------------------------------------------------------------

pub fn write_ground_truth(path: &Path, truth: &GroundTruth, stamp: &FileStamp) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    stamp.write(&mut out)?;
    writeln!(out, "post_id,address")?;
    for (post_id, address) in truth.iter() {
        writeln!(out, "{post_id},{address}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut truth = GroundTruth::default();
    for (lineno, line) in data_lines(path)? {
        let Some((id, addr)) = line.split_once(',') else {
            return Err(Error::parse(lineno, format!("expected 2 fields: {line:?}")));
        };
        if id == "post_id" {
            continue;
        }
        truth.insert(
            id.parse()
                .map_err(|e| Error::parse(lineno, format!("bad post_id: {e}")))?,
            Address::parse_dotted(addr).map_err(|e| Error::parse(lineno, e.to_string()))?,
        );
    }
    Ok(truth)
}

// ---------------------------------------------------------------------------
// Assignments
// ---------------------------------------------------------------------------

pub fn write_assignments(
    path: &Path,
    records: &[AssignmentRecord],
    stamp: &FileStamp,
) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    stamp.write(&mut out)?;
    writeln!(out, "post_id,address,log10_p,window,slice_start")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.post_id,
            r.address,
            r.log_p / std::f64::consts::LN_10,
            r.window.days(),
            r.slice_start
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in data_lines(path)? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(lineno, format!("expected 5 fields: {line:?}")));
        }
        if fields[0] == "post_id" {
            continue;
        }
        let log10_p: f64 = fields[2]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad log10_p: {e}")))?;
        records.push(AssignmentRecord {
            post_id: fields[0]
                .parse()
                .map_err(|e| Error::parse(lineno, format!("bad post_id: {e}")))?,
            address: Address::parse_dotted(fields[1])
                .map_err(|e| Error::parse(lineno, e.to_string()))?,
            log_p: log10_p * std::f64::consts::LN_10,
            window: WindowKind::from_days(
                fields[3]
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("bad window: {e}")))?,
            )
            .map_err(|e| Error::parse(lineno, e.to_string()))?,
            slice_start: fields[4]
                .parse()
                .map_err(|e| Error::parse(lineno, format!("bad slice_start: {e}")))?,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Timestamp anchors
// ---------------------------------------------------------------------------

pub fn write_anchors(path: &Path, anchors: &[(u64, i64)], stamp: &FileStamp) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    stamp.write(&mut out)?;
    writeln!(out, "post_id,timestamp_iso8601")?;
    for &(post_id, ts) in anchors {
        let dt = DateTime::from_timestamp(ts, 0)
            .ok_or_else(|| Error::usage(format!("timestamp {ts} out of range")))?;
        writeln!(out, "{post_id},{}", dt.format("%Y-%m-%dT%H:%M:%SZ"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_anchors(path: &Path) -> Result<Vec<(u64, i64)>> {
    let mut anchors = Vec::new();
    for (lineno, line) in data_lines(path)? {
        let Some((id, ts)) = line.split_once(',') else {
            return Err(Error::parse(lineno, format!("expected 2 fields: {line:?}")));
        };
        if id == "post_id" {
            continue;
        }
        let parsed = NaiveDateTime::parse_from_str(ts.trim_end_matches('Z'), "%Y-%m-%dT%H:%M:%S")
            .map_err(|e| Error::parse(lineno, format!("bad timestamp {ts:?}: {e}")))?;
        anchors.push((
            id.parse()
                .map_err(|e| Error::parse(lineno, format!("bad post_id: {e}")))?,
            parsed.and_utc().timestamp(),
        ));
    }
    Ok(anchors)
}

// ---------------------------------------------------------------------------
// Text corpora (for normalization)
// ---------------------------------------------------------------------------

/// `post_id,text` with RFC 4180 quoting; text may contain commas and
/// newlines.
pub fn write_texts(path: &Path, rows: &[(u64, String)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["post_id", "text"])?;
    for (id, text) in rows {
        writer.write_record([id.to_string().as_str(), text.as_str()])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_texts(path: &Path) -> Result<Vec<(u64, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id: u64 = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::usage("text csv needs a numeric post_id column"))?;
        rows.push((id, record.get(1).unwrap_or("").to_string()));
    }
    Ok(rows)
}

/// Write any serializable report as pretty JSON.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(
        std::fs::File::open(path)?,
    ))?)
}
