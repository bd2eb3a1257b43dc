//! Brute-force candidate enumeration: for each topic, scan the whole
//! configured address space and record which addresses produce each
//! observed username.
//!
//! The scan hashes once per address and extracts every requested slice
//! offset from the same digest, so auditing several slice positions (the
//! true regime, the shifted noise position, a pre-switch regime) costs one
//! pass. Matching uses a dense `2^U`-entry table from username value to
//! output bucket; workers own private buckets over disjoint address chunks
//! and a deterministic in-order merge produces canonical sorted sets.

use crate::error::{Error, Result};
use crate::hash::{self, BlockKernel, SingleBlock};
use crate::scheme::{Address, SchemeConfig, TopicId, Username};
use rayon::prelude::*;

/// All candidate addresses for one (topic, username) pair at one slice
/// offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub topic: TopicId,
    pub slice_start: usize,
    pub username: Username,
    /// Strictly ascending, no duplicates, complete within the configured
    /// space.
    pub addresses: Vec<Address>,
}

/// The deduplicated scan work for one topic.
#[derive(Debug, Clone)]
pub struct TopicWorkOrder {
    pub topic: TopicId,
    /// Observed usernames, deduplicated (repeats carry no information).
    pub usernames: Vec<Username>,
    /// Slice offsets to extract; one normally, two on a regime cutoff,
    /// more when priming several audit positions in one pass.
    pub slice_starts: Vec<usize>,
}

impl TopicWorkOrder {
    pub fn new(topic: TopicId, mut usernames: Vec<Username>, slice_starts: Vec<usize>) -> Self {
        usernames.sort();
        usernames.dedup();
        TopicWorkOrder {
            topic,
            usernames,
            slice_starts,
        }
    }
}

/// Address chunk size per work unit; large enough to amortize dispatch,
/// small enough to parallelize small spaces.
const CHUNK_BITS: u32 = 20;

struct SliceMatch {
    slice_start: usize,
    /// Username value -> bucket index, `u32::MAX` when unobserved.
    table: Vec<u32>,
}

/// Scan the whole address space for one topic and return one sorted
/// candidate set per (username, slice offset) pair. Output is independent
/// of worker count and chunk boundaries.
pub fn candidates_for_topic(
    order: &TopicWorkOrder,
    config: &SchemeConfig,
    workers: usize,
) -> Result<Vec<CandidateSet>> {
    config.validate()?;
    if order.usernames.is_empty() || order.slice_starts.is_empty() {
        return Ok(Vec::new());
    }
    for slice in &order.slice_starts {
        if slice + config.username_len > hash::DIGEST_HEX_LEN {
            return Err(Error::config(format!(
                "slice offset {slice} does not fit the digest"
            )));
        }
    }
    let matchers: Vec<SliceMatch> = order
        .slice_starts
        .iter()
        .map(|&slice_start| {
            let mut table = vec![u32::MAX; 1 << config.username_bits()];
            for (i, u) in order.usernames.iter().enumerate() {
                table[u.value() as usize] = i as u32;
            }
            SliceMatch { slice_start, table }
        })
        .collect();

    let prefix = config.message_prefix(order.topic);
    SingleBlock::with_prefix(&prefix)?;
    let kernel = BlockKernel::new(config.hash_algorithm);

    let space = config.space_size();
    let chunk_count = space.div_ceil(1 << CHUNK_BITS);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;

    let buckets_per_slice = order.usernames.len();
    let chunk_results: Vec<Vec<Vec<u32>>> = pool.install(|| {
        (0..chunk_count)
            .into_par_iter()
            .map(|chunk| {
                let start = chunk << CHUNK_BITS;
                let end = (start + (1 << CHUNK_BITS)).min(space);
                scan_chunk(
                    &prefix,
                    &kernel,
                    config,
                    &matchers,
                    buckets_per_slice,
                    start as u32,
                    end,
                )
            })
            .collect()
    });

    // Chunks arrive in ascending address order, so concatenation keeps
    // every bucket sorted.
    let mut sets = Vec::with_capacity(matchers.len() * buckets_per_slice);
    for (si, matcher) in matchers.iter().enumerate() {
        for (ui, username) in order.usernames.iter().enumerate() {
            let mut addresses = Vec::new();
            for chunk in &chunk_results {
                addresses.extend(
                    chunk[si * buckets_per_slice + ui]
                        .iter()
                        .map(|&a| Address(a)),
                );
            }
            sets.push(CandidateSet {
                topic: order.topic,
                slice_start: matcher.slice_start,
                username: username.clone(),
                addresses,
            });
        }
    }
    Ok(sets)
}

fn scan_chunk(
    prefix: &[u8],
    kernel: &BlockKernel,
    config: &SchemeConfig,
    matchers: &[SliceMatch],
    buckets_per_slice: usize,
    start: u32,
    end: u64,
) -> Vec<Vec<u32>> {
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); matchers.len() * buckets_per_slice];
    let mut b0 = SingleBlock::with_prefix(prefix).expect("prefix checked");
    let mut b1 = b0.clone();
    let len = config.username_len;

    let record = |digest: &hash::DigestWords, offset: u32, buckets: &mut Vec<Vec<u32>>| {
        for (si, matcher) in matchers.iter().enumerate() {
            let value = hash::slice_value(digest, matcher.slice_start, len);
            let bucket = matcher.table[value as usize];
            if bucket != u32::MAX {
                buckets[si * buckets_per_slice + bucket as usize]
                    .push(config.embed(offset).value());
            }
        }
    };

    let mut offset = start as u64;
    while offset + 1 < end {
        b0.set_address(config.embed(offset as u32).value());
        b1.set_address(config.embed(offset as u32 + 1).value());
        let (d0, d1) = kernel.digest_pair(&b0, &b1);
        record(&d0, offset as u32, &mut buckets);
        record(&d1, offset as u32 + 1, &mut buckets);
        offset += 2;
    }
    if offset < end {
        b0.set_address(config.embed(offset as u32).value());
        let d = kernel.digest(&b0);
        record(&d, offset as u32, &mut buckets);
    }
    buckets
}

/// Addresses present in every input set. Sets must be sorted ascending,
/// which enumeration guarantees.
pub fn intersect(sets: &[&[Address]]) -> Result<Vec<Address>> {
    if sets.is_empty() {
        return Err(Error::usage("intersect needs at least one set"));
    }
    let mut acc: Vec<Address> = sets[0].to_vec();
    for set in &sets[1..] {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < acc.len() && j < set.len() {
            match acc[i].cmp(&set[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(acc[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc = out;
    }
    Ok(acc)
}

/// All addresses with the given last octet whose full digest of
/// `prefix ++ dotted address` equals `digest_hex`. Scans the 2^24
/// possibilities for the leading three octets, single-threaded.
pub fn find_suffix_preimages(
    prefix: &str,
    digest_hex: &str,
    fixed_last_octet: u16,
) -> Result<Vec<Address>> {
    if fixed_last_octet > 255 {
        return Err(Error::usage("last octet must be in [0, 256)"));
    }
    let target = hash::hex_to_words(digest_hex)?;
    let mut block = SingleBlock::with_prefix(prefix.as_bytes())?;
    let mut pair = block.clone();
    let kernel = BlockKernel::new(crate::hash::HashKind::Sha1);
    let mut found = Vec::new();
    let mut hi = 0u32;
    while hi < (1 << 24) {
        let a0 = (hi << 8) | fixed_last_octet as u32;
        let a1 = ((hi + 1) << 8) | fixed_last_octet as u32;
        block.set_address(a0);
        pair.set_address(a1);
        let (d0, d1) = kernel.digest_pair(&block, &pair);
        if d0 == target {
            found.push(Address(a0));
        }
        if d1 == target {
            found.push(Address(a1));
        }
        hi += 2;
    }
    Ok(found)
}

/// Exact size summary over candidate sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct CandidateStats {
    pub min: u64,
    pub max: u64,
    pub count: u64,
    pub total: u64,
}

impl CandidateStats {
    pub fn mean(&self) -> f64 {
        self.total as f64 / self.count as f64
    }
}

pub fn candidate_stats<I: IntoIterator<Item = usize>>(sizes: I) -> Result<CandidateStats> {
    let mut stats = CandidateStats {
        min: u64::MAX,
        max: 0,
        count: 0,
        total: 0,
    };
    for size in sizes {
        let size = size as u64;
        stats.min = stats.min.min(size);
        stats.max = stats.max.max(size);
        stats.count += 1;
        stats.total += size;
    }
    if stats.count == 0 {
        return Err(Error::usage("candidate_stats needs at least one set"));
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{username_for, SchemeConfig};

    fn small_config(bits: u32) -> SchemeConfig {
        SchemeConfig {
            address_space_bits: bits,
            address_base: 0xc0a8_0000 & !((1u32 << bits) - 1),
            ..SchemeConfig::default()
        }
    }

    /// Naive single-threaded re-scan through the string-based path.
    fn naive_scan(
        topic: TopicId,
        username: &Username,
        slice: usize,
        config: &SchemeConfig,
    ) -> Vec<Address> {
        let config = config.at_slice(slice);
        (0..config.space_size())
            .map(|off| config.embed(off as u32))
            .filter(|addr| &username_for(topic, *addr, &config).unwrap() == username)
            .collect()
    }

    #[test]
    fn engine_matches_naive_rescan() {
        let config = small_config(16);
        let topic = TopicId(9157);
        let usernames = vec![
            Username::new("00ff", 4).unwrap(),
            Username::new("c2b1", 4).unwrap(),
            Username::new("1234", 4).unwrap(),
        ];
        let order = TopicWorkOrder::new(topic, usernames.clone(), vec![8, 9]);
        let sets = candidates_for_topic(&order, &config, 2).unwrap();
        assert_eq!(sets.len(), 6);
        for set in &sets {
            let naive = naive_scan(topic, &set.username, set.slice_start, &config);
            assert_eq!(
                set.addresses, naive,
                "slice {} user {}",
                set.slice_start, set.username
            );
            assert!(set.addresses.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn output_invariant_to_worker_count() {
        let config = small_config(17);
        let topic = TopicId(31);
        let order = TopicWorkOrder::new(
            topic,
            vec![
                Username::new("abcd", 4).unwrap(),
                Username::new("7e1f", 4).unwrap(),
            ],
            vec![9],
        );
        let one = candidates_for_topic(&order, &config, 1).unwrap();
        let two = candidates_for_topic(&order, &config, 2).unwrap();
        let five = candidates_for_topic(&order, &config, 5).unwrap();
        assert_eq!(one, two);
        assert_eq!(one, five);
    }

    #[test]
    fn duplicate_usernames_are_dropped() {
        let u = Username::new("beef", 4).unwrap();
        let order = TopicWorkOrder::new(TopicId(5), vec![u.clone(), u.clone()], vec![9]);
        assert_eq!(order.usernames.len(), 1);
    }

    #[test]
    fn empty_username_set_gives_empty_output() {
        let config = small_config(16);
        let order = TopicWorkOrder::new(TopicId(5), vec![], vec![9]);
        assert!(candidates_for_topic(&order, &config, 2).unwrap().is_empty());
    }

    #[test]
    fn true_poster_is_always_recovered() {
        let config = small_config(18);
        let topic = TopicId(227259);
        let addr = config.embed(0x2a5a5);
        let username = username_for(topic, addr, &config).unwrap();
        let order = TopicWorkOrder::new(topic, vec![username], vec![config.slice_start]);
        let sets = candidates_for_topic(&order, &config, 2).unwrap();
        assert!(sets[0].addresses.contains(&addr));
    }

    #[test]
    fn intersect_examples() {
        let a = [Address(1), Address(5), Address(9)];
        let b = [Address(5), Address(9), Address(12)];
        let c = [Address(9)];
        assert_eq!(intersect(&[&a, &b]).unwrap(), vec![Address(5), Address(9)]);
        assert_eq!(intersect(&[&a, &b, &c]).unwrap(), vec![Address(9)]);
        // Idempotence and disjointness.
        assert_eq!(intersect(&[&a, &a]).unwrap(), a.to_vec());
        assert_eq!(intersect(&[&a, &c[..1], &b[..1]]).unwrap(), vec![]);
        assert!(intersect(&[]).is_err());
    }

    #[test]
    fn suffix_preimage_round_trip() {
        // Build a digest from a chosen address, then invert it.
        let addr = Address::parse_dotted("10.77.3.42").unwrap();
        let msg = format!("6234{}", addr.dotted());
        let digest = hash::hex_digest(crate::hash::HashKind::Sha1, msg.as_bytes());
        let found = find_suffix_preimages("6234", &digest, 42).unwrap();
        assert_eq!(found, vec![addr]);

        // A digest from outside the family matches nothing.
        let alien = hash::hex_digest(crate::hash::HashKind::Sha1, b"not an address message");
        let found = find_suffix_preimages("6234", &alien, 42).unwrap();
        assert!(found.is_empty());
    }

    #[test]
    fn stats_examples() {
        let stats = candidate_stats([1usize]).unwrap();
        assert_eq!((stats.min, stats.max, stats.mean()), (1, 1, 1.0));
        let stats = candidate_stats([2usize, 4, 6]).unwrap();
        assert_eq!((stats.min, stats.max, stats.total), (2, 6, 12));
        assert_eq!(stats.mean(), 4.0);
        assert!(candidate_stats(Vec::<usize>::new()).is_err());
    }
}
