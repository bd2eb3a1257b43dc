//! The hash-slice username scheme and the identifier types shared by the
//! rest of the toolkit.
//!
//! A poster's username on a topic is a fixed-length slice of
//! `hash(topic digits ++ salt ++ dotted-decimal address)`. Which slice
//! offset was in effect depends on the calendar date (the site shifted the
//! slice by one position mid-history), so the offset is resolved through a
//! [`RegimeTable`].

use crate::error::{Error, Result};
use crate::hash::{self, HashKind, SingleBlock};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// A 32-bit network endpoint identifier, rendered dotted-decimal when
/// hashed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Address(pub u32);

impl Address {
    pub fn value(&self) -> u32 {
        self.0
    }

    /// Dotted-decimal rendering: four octets, most significant first,
    /// no zero padding.
    pub fn dotted(&self) -> String {
        let mut buf = [0u8; 15];
        let n = hash::write_dotted(&mut buf, self.0);
        String::from_utf8_lossy(&buf[..n]).into_owned()
    }

    pub fn parse_dotted(text: &str) -> Result<Self> {
        let mut value: u32 = 0;
        let mut fields = 0;
        for field in text.split('.') {
            if field.is_empty()
                || field.len() > 3
                || (field.len() > 1 && field.starts_with('0'))
                || !field.bytes().all(|b| b.is_ascii_digit())
            {
                return Err(Error::usage(format!("malformed dotted address {text:?}")));
            }
            let octet: u32 = field
                .parse()
                .map_err(|_| Error::usage(format!("malformed dotted address {text:?}")))?;
            if octet > 255 {
                return Err(Error::usage(format!("octet out of range in {text:?}")));
            }
            value = (value << 8) | octet;
            fields += 1;
        }
        if fields != 4 {
            return Err(Error::usage(format!(
                "expected four octets in {text:?}, got {fields}"
            )));
        }
        Ok(Address(value))
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.dotted())
    }
}

/// A forum topic's auto-incrementing integer key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicId(pub u64);

impl TopicId {
    pub fn new(value: u64) -> Result<Self> {
        if value == 0 {
            return Err(Error::usage("topic ids start at 1"));
        }
        Ok(TopicId(value))
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl std::fmt::Display for TopicId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A generated pseudonym: `username_len` lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Username(String);

impl Username {
    pub fn new(text: impl Into<String>, expected_len: usize) -> Result<Self> {
        let text = text.into();
        if text.len() != expected_len
            || !text
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        {
            return Err(Error::usage(format!(
                "username must be {expected_len} lowercase hex characters, got {text:?}"
            )));
        }
        Ok(Username(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The username's integer value (first character in the high nibble).
    pub fn value(&self) -> u32 {
        u32::from_str_radix(&self.0, 16).expect("validated hex")
    }

    /// Rebuild the text from an integer value.
    pub fn from_value(value: u32, len: usize) -> Self {
        Username(format!("{value:0width$x}", width = len))
    }
}

impl std::fmt::Display for Username {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The hash, salt, slice window, and address-space settings that define
/// username generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Hash backing the scheme; only SHA-1 reproduces the real site.
    pub hash_algorithm: HashKind,
    /// Bytes mixed between the topic digits and the address text. Empty on
    /// the real site.
    #[serde(with = "salt_text")]
    pub salt: Vec<u8>,
    /// 0-based character offset into the 40-character hex digest.
    pub slice_start: usize,
    /// Username length in hex characters.
    pub username_len: usize,
    /// Size of the enumerable address space, as an exponent: offsets run
    /// over `[0, 2^address_space_bits)` before embedding.
    pub address_space_bits: u32,
    /// High bits fixed when `address_space_bits < 32`, so the dotted
    /// rendering stays a well-formed full address. Must have zero bits
    /// inside the enumerated range.
    pub address_base: u32,
}

mod salt_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(salt: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(salt))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            hash_algorithm: HashKind::Sha1,
            salt: Vec::new(),
            slice_start: 9,
            username_len: 4,
            address_space_bits: 32,
            address_base: 0,
        }
    }
}

impl SchemeConfig {
    /// Username entropy in bits (4 bits per hex character).
    pub fn username_bits(&self) -> u32 {
        4 * self.username_len as u32
    }

    /// Number of addresses in the enumerable space.
    pub fn space_size(&self) -> u64 {
        1u64 << self.address_space_bits
    }

    /// Embed an offset within the enumerable space into a full address.
    pub fn embed(&self, offset: u32) -> Address {
        Address(self.address_base | offset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.username_len == 0 || self.slice_start + self.username_len > hash::DIGEST_HEX_LEN {
            return Err(Error::config(format!(
                "slice [{}, {}) exceeds the {}-character digest",
                self.slice_start,
                self.slice_start + self.username_len,
                hash::DIGEST_HEX_LEN
            )));
        }
        if self.username_len > 8 {
            return Err(Error::config("username_len above 8 is not supported"));
        }
        if self.address_space_bits == 0 || self.address_space_bits > 32 {
            return Err(Error::config("address_space_bits must be in [1, 32]"));
        }
        if self.address_space_bits < 32 {
            let mask = (1u32 << self.address_space_bits) - 1;
            if self.address_base & mask != 0 {
                return Err(Error::config(
                    "address_base must have zero bits inside the enumerated range",
                ));
            }
        } else if self.address_base != 0 {
            return Err(Error::config("address_base is meaningless at 32 bits"));
        }
        Ok(())
    }

    /// This scheme with the slice offset replaced (regime handling and the
    /// shifted noise position).
    pub fn at_slice(&self, slice_start: usize) -> SchemeConfig {
        SchemeConfig {
            slice_start,
            ..self.clone()
        }
    }

    /// The hash-input prefix for a topic: decimal digits then salt.
    pub fn message_prefix(&self, topic: TopicId) -> Vec<u8> {
        let mut prefix = topic.to_string().into_bytes();
        prefix.extend_from_slice(&self.salt);
        prefix
    }
}

/// Full hex digest for one (topic, address) pair.
pub fn digest_for(topic: TopicId, address: Address, config: &SchemeConfig) -> Result<String> {
    config.validate()?;
    let mut msg = config.message_prefix(topic);
    msg.extend_from_slice(address.dotted().as_bytes());
    Ok(hash::hex_digest(config.hash_algorithm, &msg))
}

/// The username assigned to `address` on `topic` under `config`.
pub fn username_for(topic: TopicId, address: Address, config: &SchemeConfig) -> Result<Username> {
    let digest = digest_for(topic, address, config)?;
    Ok(Username(
        digest[config.slice_start..config.slice_start + config.username_len].to_string(),
    ))
}

/// Same computation via the single-block fast path, returning the
/// username's integer value.
#[inline]
pub fn username_value_fast(
    block: &mut SingleBlock,
    kernel: &hash::BlockKernel,
    address: Address,
    slice_start: usize,
    username_len: usize,
) -> u32 {
    block.set_address(address.value());
    let words = kernel.digest(block);
    hash::slice_value(&words, slice_start, username_len)
}

// ---------------------------------------------------------------------------
// Slice regimes
// ---------------------------------------------------------------------------

/// One contiguous date range using a fixed slice offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSpan {
    pub start: NaiveDate,
    /// Inclusive end date.
    pub end: NaiveDate,
    pub slice_start: usize,
}

/// Contiguous, non-overlapping mapping from calendar date to slice offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeTable {
    spans: Vec<RegimeSpan>,
}

impl RegimeTable {
    pub fn new(spans: Vec<RegimeSpan>) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::config("regime table must have at least one span"));
        }
        for span in &spans {
            if span.start > span.end {
                return Err(Error::config(format!(
                    "regime span {} .. {} is inverted",
                    span.start, span.end
                )));
            }
        }
        for pair in spans.windows(2) {
            let expected = pair[0].end.succ_opt().expect("date overflow");
            if pair[1].start != expected {
                return Err(Error::config(format!(
                    "regime spans must be contiguous: {} is followed by {}",
                    pair[0].end, pair[1].start
                )));
            }
        }
        Ok(RegimeTable { spans })
    }

    /// The site's historical table: slice 8 before 2013-07-08, slice 9
    /// from then through 2023-05-17.
    pub fn historical() -> Self {
        RegimeTable::new(vec![
            RegimeSpan {
                start: NaiveDate::from_ymd_opt(2010, 12, 17).unwrap(),
                end: NaiveDate::from_ymd_opt(2013, 7, 7).unwrap(),
                slice_start: 8,
            },
            RegimeSpan {
                start: NaiveDate::from_ymd_opt(2013, 7, 8).unwrap(),
                end: NaiveDate::from_ymd_opt(2023, 5, 17).unwrap(),
                slice_start: 9,
            },
        ])
        .expect("static table is valid")
    }

    /// A single span covering `[start, end]` at one slice offset.
    pub fn single(start: NaiveDate, end: NaiveDate, slice_start: usize) -> Result<Self> {
        RegimeTable::new(vec![RegimeSpan {
            start,
            end,
            slice_start,
        }])
    }

    pub fn spans(&self) -> &[RegimeSpan] {
        &self.spans
    }

    pub fn start(&self) -> NaiveDate {
        self.spans[0].start
    }

    pub fn end(&self) -> NaiveDate {
        self.spans[self.spans.len() - 1].end
    }

    /// Slice offsets in effect on `date`. On the first day of a later
    /// regime both the old and new offsets are returned, oldest first.
    pub fn slices_for(&self, date: NaiveDate) -> Result<Vec<usize>> {
        let idx = self
            .spans
            .iter()
            .position(|s| s.start <= date && date <= s.end)
            .ok_or_else(|| {
                Error::range(format!(
                    "date {date} outside configured span {} .. {}",
                    self.start(),
                    self.end()
                ))
            })?;
        let mut slices = vec![self.spans[idx].slice_start];
        if idx > 0 && self.spans[idx].start == date {
            slices.insert(0, self.spans[idx - 1].slice_start);
        }
        Ok(slices)
    }

    /// Every slice offset appearing in the table, ascending and deduplicated.
    pub fn all_slices(&self) -> Vec<usize> {
        let mut slices: Vec<usize> = self.spans.iter().map(|s| s.slice_start).collect();
        slices.sort_unstable();
        slices.dedup();
        slices
    }

    /// Split the table at `switch_date`, decrementing the slice offset by
    /// one before it (the pre-switch era used the slice one position left).
    pub fn with_switch_at(&self, switch_date: NaiveDate) -> Result<Self> {
        if self.spans.len() != 1 {
            return Err(Error::config(
                "switch injection expects a single-regime table",
            ));
        }
        let span = self.spans[0];
        if switch_date < span.start || switch_date > span.end {
            return Err(Error::range(format!(
                "switch date {switch_date} outside span {} .. {}",
                span.start, span.end
            )));
        }
        if switch_date == span.start {
            return Ok(self.clone());
        }
        RegimeTable::new(vec![
            RegimeSpan {
                start: span.start,
                end: switch_date.pred_opt().expect("date overflow"),
                slice_start: span.slice_start - 1,
            },
            RegimeSpan {
                start: switch_date,
                end: span.end,
                slice_start: span.slice_start,
            },
        ])
    }

    /// Parse the `start_date,end_date,slice_start` config format. `#`
    /// starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spans = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    lineno + 1,
                    format!("expected start_date,end_date,slice_start, got {line:?}"),
                ));
            }
            let parse_date = |s: &str| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|e| Error::parse(lineno + 1, format!("bad date {s:?}: {e}")))
            };
            spans.push(RegimeSpan {
                start: parse_date(fields[0])?,
                end: parse_date(fields[1])?,
                slice_start: fields[2]
                    .parse()
                    .map_err(|e| Error::parse(lineno + 1, format!("bad slice_start: {e}")))?,
            });
        }
        RegimeTable::new(spans)
    }

    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for span in &self.spans {
            out.push_str(&format!(
                "{},{},{}\n",
                span.start, span.end, span.slice_start
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_DIGEST: &str = "e8b5eae32c2b197a0ac4cb889a9bbb8f417f3bff";

    fn paper_pair() -> (TopicId, Address) {
        (
            TopicId(227259),
            Address::parse_dotted("131.111.5.175").unwrap(),
        )
    }

    #[test]
    fn dotted_rendering_examples() {
        assert_eq!(Address(2189728028).dotted(), "130.132.153.28");
        assert_eq!(Address(0).dotted(), "0.0.0.0");
        assert_eq!(Address(u32::MAX).dotted(), "255.255.255.255");
    }

    #[test]
    fn dotted_parse_round_trip() {
        for value in [0u32, 1, 255, 256, 2189728028, u32::MAX] {
            let addr = Address(value);
            assert_eq!(Address::parse_dotted(&addr.dotted()).unwrap(), addr);
        }
        assert!(Address::parse_dotted("1.2.3").is_err());
        assert!(Address::parse_dotted("1.2.3.256").is_err());
        assert!(Address::parse_dotted("01.2.3.4").is_err());
        assert!(Address::parse_dotted("1.2.3.4.5").is_err());
    }

    #[test]
    fn digest_reproduces_published_value() {
        let (topic, addr) = paper_pair();
        let config = SchemeConfig::default();
        assert_eq!(digest_for(topic, addr, &config).unwrap(), PAPER_DIGEST);
        // Determinism.
        assert_eq!(digest_for(topic, addr, &config).unwrap(), PAPER_DIGEST);
    }

    #[test]
    fn usernames_at_each_slice() {
        let (topic, addr) = paper_pair();
        let config = SchemeConfig::default();
        for (slice, expected) in [(8, "2c2b"), (9, "c2b1"), (10, "2b19")] {
            let username = username_for(topic, addr, &config.at_slice(slice)).unwrap();
            assert_eq!(username.as_str(), expected, "slice {slice}");
        }
    }

    #[test]
    fn fast_path_matches_streaming_path() {
        let config = SchemeConfig::default();
        let topic = TopicId(227259);
        let kernel = hash::BlockKernel::new(config.hash_algorithm);
        let mut block = SingleBlock::with_prefix(&config.message_prefix(topic)).unwrap();
        let mut addr = 0x01234567u32;
        for _ in 0..500 {
            addr = addr.wrapping_mul(1664525).wrapping_add(1013904223);
            let fast = username_value_fast(&mut block, &kernel, Address(addr), 9, 4);
            let slow = username_for(topic, Address(addr), &config).unwrap();
            assert_eq!(Username::from_value(fast, 4), slow);
        }
    }

    #[test]
    fn salt_sits_between_topic_and_address() {
        let (topic, addr) = paper_pair();
        let mut config = SchemeConfig::default();
        config.salt = b"pepper".to_vec();
        let digest = digest_for(topic, addr, &config).unwrap();
        assert_eq!(
            digest,
            hash::hex_digest(HashKind::Sha1, b"227259pepper131.111.5.175")
        );
    }

    #[test]
    fn config_validation() {
        let mut config = SchemeConfig::default();
        config.slice_start = 37;
        assert!(config.validate().is_err());

        let mut config = SchemeConfig::default();
        config.address_space_bits = 24;
        config.address_base = 0x0100_0000;
        assert!(config.validate().is_ok());
        config.address_base = 0x0080_0000;
        assert!(config.validate().is_err());
    }

    #[test]
    fn regime_lookup_and_cutoff() {
        let table = RegimeTable::historical();
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        assert_eq!(table.slices_for(d(2012, 1, 1)).unwrap(), vec![8]);
        assert_eq!(table.slices_for(d(2015, 6, 1)).unwrap(), vec![9]);
        assert_eq!(table.slices_for(d(2013, 7, 8)).unwrap(), vec![8, 9]);
        assert!(table.slices_for(d(2024, 1, 1)).is_err());
        assert!(table.slices_for(d(2009, 1, 1)).is_err());
    }

    #[test]
    fn regime_table_text_round_trip() {
        let table = RegimeTable::historical();
        let parsed = RegimeTable::parse(&table.to_config_text()).unwrap();
        assert_eq!(parsed, table);
        assert!(RegimeTable::parse("2013-01-01,2012-01-01,9").is_err());
        // Gap between spans.
        let text = "2012-01-01,2012-06-01,8\n2012-06-05,2012-12-31,9\n";
        assert!(RegimeTable::parse(text).is_err());
    }

    #[test]
    fn switch_injection_splits_single_regime() {
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        let table = RegimeTable::single(d(2015, 1, 1), d(2015, 3, 1), 9).unwrap();
        let switched = table.with_switch_at(d(2015, 1, 31)).unwrap();
        assert_eq!(switched.slices_for(d(2015, 1, 30)).unwrap(), vec![8]);
        assert_eq!(switched.slices_for(d(2015, 1, 31)).unwrap(), vec![8, 9]);
        assert_eq!(switched.slices_for(d(2015, 2, 1)).unwrap(), vec![9]);
        // Switch on the first day keeps a single regime.
        let same = table.with_switch_at(d(2015, 1, 1)).unwrap();
        assert_eq!(same, table);
    }

    #[test]
    fn username_value_round_trip() {
        let u = Username::new("c2b1", 4).unwrap();
        assert_eq!(u.value(), 0xc2b1);
        assert_eq!(Username::from_value(0xc2b1, 4), u);
        assert_eq!(Username::from_value(0x001a, 4).as_str(), "001a");
        assert!(Username::new("C2B1", 4).is_err());
        assert!(Username::new("c2b", 4).is_err());
    }
}
