//! Falsification and scoring: bogon exclusion, chi-squared uniformity
//! checks, and ground-truth precision/recall.

use crate::attribute::AssignmentRecord;
use crate::error::{Error, Result};
use crate::scheme::Address;
use crate::synth::{GroundTruth, Post};
use chrono::Days;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

// ---------------------------------------------------------------------------
// Bogons
// ---------------------------------------------------------------------------

/// A CIDR block: base address plus prefix length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CidrRange {
    pub base: u32,
    pub prefix_len: u8,
}

impl CidrRange {
    pub fn parse(text: &str) -> Result<Self> {
        let (addr, len) = text
            .split_once('/')
            .ok_or_else(|| Error::usage(format!("expected cidr notation, got {text:?}")))?;
        let base = Address::parse_dotted(addr)?.value();
        let prefix_len: u8 = len
            .parse()
            .map_err(|_| Error::usage(format!("bad prefix length in {text:?}")))?;
        if prefix_len > 32 {
            return Err(Error::usage(format!("prefix length {prefix_len} > 32")));
        }
        let range = CidrRange { base, prefix_len };
        if base & !range.mask() != 0 {
            return Err(Error::usage(format!(
                "{text:?} has nonzero bits below the prefix"
            )));
        }
        Ok(range)
    }

    fn mask(&self) -> u32 {
        if self.prefix_len == 0 {
            0
        } else {
            u32::MAX << (32 - self.prefix_len)
        }
    }

    pub fn first(&self) -> u32 {
        self.base
    }

    pub fn last(&self) -> u32 {
        self.base | !self.mask()
    }

    pub fn contains(&self, addr: Address) -> bool {
        addr.value() & self.mask() == self.base
    }

    pub fn size(&self) -> u64 {
        1u64 << (32 - self.prefix_len)
    }
}

impl std::fmt::Display for CidrRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", Address(self.base), self.prefix_len)
    }
}

/// Reserved ranges, merged into disjoint sorted intervals for O(log n)
/// containment checks.
#[derive(Debug, Clone, Default)]
pub struct BogonList {
    /// Inclusive (first, last) intervals, sorted, non-overlapping.
    intervals: Vec<(u32, u32)>,
}

impl BogonList {
    pub fn new(ranges: &[CidrRange]) -> Self {
        let mut intervals: Vec<(u32, u32)> = ranges.iter().map(|r| (r.first(), r.last())).collect();
        intervals.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(intervals.len());
        for (lo, hi) in intervals {
            match merged.last_mut() {
                Some((_, last_hi)) if lo <= last_hi.saturating_add(1) => {
                    *last_hi = (*last_hi).max(hi);
                }
                _ => merged.push((lo, hi)),
            }
        }
        BogonList { intervals: merged }
    }

    /// Parse a text fixture: one CIDR per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut ranges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let range = CidrRange::parse(line).map_err(|e| match e {
                Error::Usage(msg) => Error::parse(lineno + 1, msg),
                other => other,
            })?;
            ranges.push(range);
        }
        Ok(BogonList::new(&ranges))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        BogonList::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, addr: Address) -> bool {
        let v = addr.value();
        match self.intervals.binary_search_by(|&(lo, _)| lo.cmp(&v)) {
            Ok(_) => true,
            Err(0) => false,
            Err(i) => v <= self.intervals[i - 1].1,
        }
    }

    /// Total covered addresses.
    pub fn covered(&self) -> u64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| hi as u64 - lo as u64 + 1)
            .sum()
    }

    /// Covered fraction of the full 32-bit space.
    pub fn coverage_fraction(&self) -> f64 {
        self.covered() as f64 / 2f64.powi(32)
    }
}

/// Count assignments that landed in a bogon range. Anything nonzero means
/// the pipeline invented traffic from unroutable space.
pub fn bogon_check(assignments: &[AssignmentRecord], bogons: &BogonList) -> u64 {
    assignments
        .iter()
        .filter(|r| bogons.contains(r.address))
        .count() as u64
}

// ---------------------------------------------------------------------------
// Chi-squared uniformity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: u64,
    /// Double-precision p-value; 0 when it underflows.
    pub p_value: f64,
    /// log10 of the p-value, from an asymptotic tail expansion when the
    /// double-precision value underflows.
    pub log10_p: f64,
}

impl Chi2Result {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Pearson chi-squared against the uniform distribution over all cells.
///
/// Requires every expected cell count to be at least 5, i.e. a total of
/// `5 * cells` observations.
pub fn uniformity_chi2(histogram: &[u64]) -> Result<Chi2Result> {
    let cells = histogram.len() as u64;
    if cells < 2 {
        return Err(Error::usage("need at least two cells"));
    }
    let total: u64 = histogram.iter().sum();
    if total < 5 * cells {
        return Err(Error::usage(format!(
            "undersized sample: {total} observations over {cells} cells \
             (expected cell count below 5)"
        )));
    }
    let expected = total as f64 / cells as f64;
    let statistic: f64 = histogram
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = cells - 1;
    let a = dof as f64 / 2.0;
    let x = statistic / 2.0;
    let p_value = if x <= 0.0 {
        1.0
    } else {
        statrs::function::gamma::checked_gamma_ur(a, x).unwrap_or(0.0)
    };
    let log10_p = if p_value > 0.0 {
        p_value.log10()
    } else {
        log_gamma_q_asymptotic(a, x) / std::f64::consts::LN_10
    };
    Ok(Chi2Result {
        statistic,
        dof,
        p_value,
        log10_p,
    })
}

/// `ln Q(a, x)` for `x >> a`, where the double-precision tail underflows:
/// Q(a, x) = x^(a-1) e^(-x) / Gamma(a) * (1 + (a-1)/x + (a-1)(a-2)/x^2 + ...)
fn log_gamma_q_asymptotic(a: f64, x: f64) -> f64 {
    let mut series = 1.0;
    let mut term = 1.0;
    for i in 1..30 {
        term *= (a - i as f64) / x;
        let next = series + term;
        if next == series {
            break;
        }
        series = next;
    }
    (a - 1.0) * x.ln() - x - statrs::function::gamma::ln_gamma(a) + series.max(1e-300).ln()
}

// ---------------------------------------------------------------------------
// Ground-truth scoring
// ---------------------------------------------------------------------------

/// An address is a heavy poster around a post when it reaches this many
/// distinct topics inside the post's 7-day window.
pub const HEAVY_TOPICS_PER_WEEK: usize = 12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub total_posts: u64,
    pub assigned: u64,
    pub correct: u64,
    /// `correct / assigned`; absent when nothing was assigned.
    pub precision: Option<f64>,
    /// Correctly assigned fraction of all posts.
    pub recall_all: f64,
    /// Correctly assigned fraction of posts whose true address was a heavy
    /// poster in the post's own week.
    pub recall_heavy: f64,
    pub heavy_posts: u64,
    pub heavy_addresses: u64,
    /// Fraction of assignments that went to an address that was active in
    /// the forum but is not the post's true source.
    pub stealing_rate: Option<f64>,
}

/// Score assignments against ground truth.
pub fn score(
    posts: &[Post],
    truth: &GroundTruth,
    assignments: &[AssignmentRecord],
) -> Result<ScoreReport> {
    let mut assigned_by_post: BTreeMap<u64, Address> = BTreeMap::new();
    for record in assignments {
        assigned_by_post.insert(record.post_id, record.address);
    }
    for post in posts {
        if !truth.contains(post.post_id) {
            return Err(Error::data(format!(
                "post {} missing from ground truth",
                post.post_id
            )));
        }
    }
    let active: HashSet<Address> = posts
        .iter()
        .filter_map(|p| truth.address_of(p.post_id))
        .collect();

    let heavy = heavy_eligible_posts(posts, truth);

    let mut correct = 0u64;
    let mut stolen = 0u64;
    let mut heavy_correct = 0u64;
    for post in posts {
        let true_addr = truth.address_of(post.post_id).expect("checked above");
        if let Some(&got) = assigned_by_post.get(&post.post_id) {
            if got == true_addr {
                correct += 1;
                if heavy.posts.contains(&post.post_id) {
                    heavy_correct += 1;
                }
            } else if active.contains(&got) {
                stolen += 1;
            }
        }
    }

    let assigned = assigned_by_post.len() as u64;
    Ok(ScoreReport {
        total_posts: posts.len() as u64,
        assigned,
        correct,
        precision: (assigned > 0).then(|| correct as f64 / assigned as f64),
        recall_all: if posts.is_empty() {
            0.0
        } else {
            correct as f64 / posts.len() as f64
        },
        recall_heavy: if heavy.posts.is_empty() {
            0.0
        } else {
            heavy_correct as f64 / heavy.posts.len() as f64
        },
        heavy_posts: heavy.posts.len() as u64,
        heavy_addresses: heavy.addresses.len() as u64,
        stealing_rate: (assigned > 0).then(|| stolen as f64 / assigned as f64),
    })
}

struct HeavySet {
    posts: HashSet<u64>,
    addresses: HashSet<Address>,
}

/// Posts whose true address hit `HEAVY_TOPICS_PER_WEEK` distinct topics
/// within the symmetric 7-day window around the post's own day.
fn heavy_eligible_posts(posts: &[Post], truth: &GroundTruth) -> HeavySet {
    let mut by_address: HashMap<Address, Vec<(chrono::NaiveDate, u64, u64)>> = HashMap::new();
    for post in posts {
        if let Some(addr) = truth.address_of(post.post_id) {
            by_address.entry(addr).or_default().push((
                post.date(),
                post.topic.value(),
                post.post_id,
            ));
        }
    }

    let mut heavy_posts = HashSet::new();
    let mut heavy_addresses = HashSet::new();
    for (addr, mut events) in by_address {
        events.sort_unstable();
        for &(date, _, post_id) in &events {
            let lo = date - Days::new(3);
            let hi = date + Days::new(3);
            let mut topics = HashSet::new();
            for &(d, topic, _) in &events {
                if d >= lo && d <= hi {
                    topics.insert(topic);
                }
            }
            if topics.len() >= HEAVY_TOPICS_PER_WEEK {
                heavy_posts.insert(post_id);
                heavy_addresses.insert(addr);
            }
        }
    }
    HeavySet {
        posts: heavy_posts,
        addresses: heavy_addresses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::WindowKind;
    use crate::scheme::{TopicId, Username};

    fn record(post_id: u64, addr: u32) -> AssignmentRecord {
        AssignmentRecord {
            post_id,
            address: Address(addr),
            log_p: -60.0,
            window: WindowKind::Days7,
            slice_start: 9,
        }
    }

    #[test]
    fn cidr_parse_and_containment() {
        let r = CidrRange::parse("10.0.0.0/8").unwrap();
        assert!(r.contains(Address::parse_dotted("10.1.2.3").unwrap()));
        assert!(!r.contains(Address::parse_dotted("11.0.0.0").unwrap()));
        assert_eq!(r.size(), 1 << 24);
        assert!(CidrRange::parse("10.0.0.1/8").is_err());
        assert!(CidrRange::parse("10.0.0.0/33").is_err());
        assert!(CidrRange::parse("10.0.0.0").is_err());
        let whole = CidrRange::parse("0.0.0.0/0").unwrap();
        assert_eq!(whole.size(), 1 << 32);
        assert!(whole.contains(Address(u32::MAX)));
    }

    #[test]
    fn bogon_list_containment_and_line_numbers() {
        let list = BogonList::parse("# reserved\n10.0.0.0/8\n192.168.0.0/16\n").unwrap();
        assert!(list.contains(Address::parse_dotted("10.1.2.3").unwrap()));
        assert!(list.contains(Address::parse_dotted("192.168.255.1").unwrap()));
        assert!(!list.contains(Address::parse_dotted("192.167.255.255").unwrap()));
        assert!(!list.contains(Address::parse_dotted("9.255.255.255").unwrap()));
        assert_eq!(list.covered(), (1 << 24) + (1 << 16));

        let err = BogonList::parse("10.0.0.0/8\nnot-a-cidr\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn bogon_check_counts_containment() {
        let list = BogonList::parse("10.0.0.0/8\n").unwrap();
        let records = vec![record(1, 0x0a010203), record(2, 0x0b010203)];
        assert_eq!(bogon_check(&records, &list), 1);
        assert_eq!(bogon_check(&[], &list), 0);
    }

    #[test]
    fn chi2_accepts_uniform_and_rejects_degenerate() {
        // A flat histogram scores statistic 0, p = 1.
        let flat = vec![100u64; 64];
        let result = uniformity_chi2(&flat).unwrap();
        assert_eq!(result.statistic, 0.0);
        assert!((result.p_value - 1.0).abs() < 1e-12);
        assert!(!result.rejects(0.01));

        // All mass on one cell is rejected overwhelmingly.
        let mut degenerate = vec![0u64; 64];
        degenerate[0] = 1_000_000;
        let result = uniformity_chi2(&degenerate).unwrap();
        assert!(result.rejects(0.01));
        assert!(result.log10_p < -300.0, "log10_p = {}", result.log10_p);
        assert!(result.p_value < 1e-300);

        // Undersized samples are refused.
        assert!(uniformity_chi2(&vec![1u64; 64]).is_err());
    }

    #[test]
    fn chi2_log_tail_is_continuous_with_double_precision() {
        // Straddle the underflow boundary and make sure log10_p tracks.
        let a = 8.0f64; // dof 16
        for &x in &[50.0f64, 200.0, 400.0, 700.0] {
            let direct = statrs::function::gamma::gamma_ur(a, x);
            let asym = (log_gamma_q_asymptotic(a, x) / std::f64::consts::LN_10).exp();
            if direct > 0.0 {
                let ratio = asym / direct.log10().exp();
                assert!((ratio - 1.0).abs() < 1e-6, "x={x}: {ratio}");
            }
        }
    }

    #[test]
    fn score_reports_exact_counts() {
        use crate::synth::GroundTruth;
        let posts: Vec<Post> = (1..=4)
            .map(|i| Post {
                post_id: i,
                topic: TopicId(i),
                username: Username::new("aaaa", 4).unwrap(),
                timestamp: 1_600_000_000 + i as i64,
            })
            .collect();
        let mut truth = GroundTruth::default();
        for i in 1..=4 {
            truth.insert(i, Address(100 + i as u32));
        }
        // Post 1 correct, post 2 stolen by an active address, post 3
        // assigned to a never-active address, post 4 unassigned.
        let records = vec![record(1, 101), record(2, 103), record(3, 999)];
        let report = score(&posts, &truth, &records).unwrap();
        assert_eq!(report.assigned, 3);
        assert_eq!(report.correct, 1);
        assert_eq!(report.precision, Some(1.0 / 3.0));
        assert_eq!(report.recall_all, 0.25);
        assert_eq!(report.stealing_rate, Some(1.0 / 3.0));

        // Empty assignments: precision absent, recall zero.
        let report = score(&posts, &truth, &[]).unwrap();
        assert_eq!(report.precision, None);
        assert_eq!(report.recall_all, 0.0);

        // A post missing from ground truth is a data error.
        let missing = GroundTruth::default();
        assert!(score(&posts, &missing, &[]).is_err());
    }

    #[test]
    fn heavy_posts_require_twelve_topics_in_window() {
        use crate::synth::GroundTruth;
        let mut posts = Vec::new();
        let mut truth = GroundTruth::default();
        let base = 1_600_000_000i64;
        // Address 1: 12 distinct topics within one day -> every post heavy.
        for i in 0..12u64 {
            posts.push(Post {
                post_id: i + 1,
                topic: TopicId(100 + i),
                username: Username::new("aaaa", 4).unwrap(),
                timestamp: base + (i as i64) * 3600,
            });
            truth.insert(i + 1, Address(1));
        }
        // Address 2: one post.
        posts.push(Post {
            post_id: 100,
            topic: TopicId(500),
            username: Username::new("bbbb", 4).unwrap(),
            timestamp: base,
        });
        truth.insert(100, Address(2));

        let heavy = heavy_eligible_posts(&posts, &truth);
        assert_eq!(heavy.addresses.len(), 1);
        assert!(heavy.addresses.contains(&Address(1)));
        assert_eq!(heavy.posts.len(), 12);
        assert!(!heavy.posts.contains(&100));
    }
}
