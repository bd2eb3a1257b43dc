//! Post-attribution descriptive analytics: concentration of posting,
//! stretched-exponential rank fits with population extrapolation,
//! CIDR-label aggregation, and time-of-day profiles.

use crate::error::{Error, Result};
use crate::scheme::Address;
use crate::synth::Post;
use crate::validate::CidrRange;
use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Posts per address, sorted descending; rank 1 is the heaviest poster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankCounts {
    counts: Vec<u64>,
}

impl RankCounts {
    pub fn new(mut counts: Vec<u64>) -> Result<Self> {
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::usage("rank counts must be at least 1"));
        }
        counts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(RankCounts { counts })
    }

    /// Tally posts per address and rank them.
    pub fn from_address_counts<I: IntoIterator<Item = Address>>(addresses: I) -> Result<Self> {
        let mut tally: HashMap<Address, u64> = HashMap::new();
        for addr in addresses {
            *tally.entry(addr).or_insert(0) += 1;
        }
        if tally.is_empty() {
            return Err(Error::usage("no addresses to rank"));
        }
        RankCounts::new(tally.into_values().collect())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Share of posts contributed by the top `fraction` of addresses (count
/// rounded up to whole addresses).
pub fn concentration(counts: &RankCounts, fraction: f64) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::usage("empty rank counts"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::usage("fraction must be in (0, 1]"));
    }
    let top = ((fraction * counts.len() as f64).ceil() as usize).clamp(1, counts.len());
    let head: u64 = counts.counts()[..top].iter().sum();
    let total: u64 = counts.counts().iter().sum();
    Ok(head as f64 / total as f64)
}

/// Parameters of `log y(r) = a - b * r^c` fitted over ranks `1..=fit_len`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StretchedExpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub fit_len: usize,
    /// Residual sum of squares in the log domain.
    pub rss: f64,
}

/// Least-squares fit of the rank-ordered stretched exponential: a
/// golden-section search over the shape `c`, with the closed-form linear
/// regression for `(a, b)` at each trial shape.
pub fn fit_stretched_exponential(values: &[f64], fit_len: usize) -> Result<StretchedExpFit> {
    if fit_len < 3 {
        return Err(Error::usage("need at least three ranks to fit"));
    }
    if fit_len > values.len() {
        return Err(Error::usage(format!(
            "fit range {fit_len} exceeds the {} available ranks",
            values.len()
        )));
    }
    let head = &values[..fit_len];
    if head.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::usage("counts must be positive and finite"));
    }
    let log_y: Vec<f64> = head.iter().map(|&v| v.ln()).collect();

    let rss_at = |c: f64| -> (f64, f64, f64) {
        // Regress log y on x = r^c: log y = a - b x.
        let n = fit_len as f64;
        let xs: Vec<f64> = (1..=fit_len).map(|r| (r as f64).powf(c)).collect();
        let x_mean = xs.iter().sum::<f64>() / n;
        let y_mean = log_y.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var = 0.0;
        for (x, y) in xs.iter().zip(&log_y) {
            cov += (x - x_mean) * (y - y_mean);
            var += (x - x_mean) * (x - x_mean);
        }
        let slope = if var > 0.0 { cov / var } else { 0.0 };
        let intercept = y_mean - slope * x_mean;
        let rss: f64 = xs
            .iter()
            .zip(&log_y)
            .map(|(x, y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum();
        (rss, intercept, -slope)
    };

    // Golden-section search on c in (0, 1].
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1e-6f64, 1.0f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = rss_at(x1).0;
    let mut f2 = rss_at(x2).0;
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = rss_at(x1).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = rss_at(x2).0;
        }
    }
    let c = 0.5 * (lo + hi);
    let (rss, a, b) = rss_at(c);
    Ok(StretchedExpFit {
        a,
        b,
        c,
        fit_len,
        rss,
    })
}

/// Project the fitted law out to the rank whose predicted count reaches 1
/// (the log-count zero crossing). Returns that rank and the total posts
/// the fit predicts up to it.
pub fn extrapolate_population(fit: &StretchedExpFit) -> Result<(u64, f64)> {
    if !(fit.b > 0.0) || !(fit.c > 0.0) {
        return Err(Error::usage("invalid fit: needs b > 0 and c > 0"));
    }
    if fit.a < 0.0 {
        return Ok((0, 0.0));
    }
    let r_star = (fit.a / fit.b).powf(1.0 / fit.c);
    let n_star = r_star.floor() as u64;
    let mut total = 0.0;
    for r in 1..=n_star {
        total += (fit.a - fit.b * (r as f64).powf(fit.c)).exp();
    }
    Ok((n_star, total))
}

// ---------------------------------------------------------------------------
// CIDR labels
// ---------------------------------------------------------------------------

/// CIDR blocks mapped to labels; lookups take the longest matching prefix.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    /// Sorted by descending prefix length so the first hit wins.
    entries: Vec<(CidrRange, String)>,
}

pub const UNLABELED: &str = "unlabeled";

impl LabelTable {
    pub fn new(mut entries: Vec<(CidrRange, String)>) -> Self {
        entries.sort_by(|a, b| {
            b.0.prefix_len
                .cmp(&a.0.prefix_len)
                .then(a.0.base.cmp(&b.0.base))
        });
        LabelTable { entries }
    }

    /// Parse `cidr,label` CSV lines; `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line == "cidr,label" {
                continue;
            }
            let Some((cidr, label)) = line.split_once(',') else {
                return Err(Error::parse(lineno + 1, format!("expected cidr,label: {line:?}")));
            };
            let range = CidrRange::parse(cidr.trim()).map_err(|e| match e {
                Error::Usage(msg) => Error::parse(lineno + 1, msg),
                other => other,
            })?;
            entries.push((range, label.trim().to_string()));
        }
        Ok(LabelTable::new(entries))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        LabelTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn lookup(&self, addr: Address) -> &str {
        self.entries
            .iter()
            .find(|(range, _)| range.contains(addr))
            .map(|(_, label)| label.as_str())
            .unwrap_or(UNLABELED)
    }
}

/// Per-label post counts and shares over assigned addresses. Counts always
/// partition the input exactly.
pub fn label_aggregate<'a, I>(addresses: I, labels: &LabelTable) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = &'a Address>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for addr in addresses {
        *counts.entry(labels.lookup(*addr).to_string()).or_insert(0) += 1;
    }
    counts
}

// ---------------------------------------------------------------------------
// Time-of-day profile
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TimeProfile {
    pub bucket_minutes: u32,
    pub timezone_offset_minutes: i32,
    /// Year -> per-bucket average posts per minute.
    pub by_year: BTreeMap<i32, Vec<f64>>,
}

/// Average posts per minute by time-of-day bucket, per year, in the given
/// timezone offset.
pub fn time_profile(
    posts: &[Post],
    bucket_minutes: u32,
    timezone_offset_minutes: i32,
) -> Result<TimeProfile> {
    if bucket_minutes == 0 || 1440 % bucket_minutes != 0 {
        return Err(Error::usage("bucket length must divide 1440 minutes"));
    }
    let buckets = (1440 / bucket_minutes) as usize;
    let mut tallies: BTreeMap<i32, (Vec<u64>, std::collections::BTreeSet<chrono::NaiveDate>)> =
        BTreeMap::new();
    for post in posts {
        let shifted = post.timestamp + timezone_offset_minutes as i64 * 60;
        let dt = chrono::DateTime::from_timestamp(shifted, 0)
            .ok_or_else(|| Error::usage("timestamp out of range"))?;
        let entry = tallies
            .entry(dt.year())
            .or_insert_with(|| (vec![0; buckets], Default::default()));
        let minute = dt.hour() * 60 + dt.minute();
        entry.0[(minute / bucket_minutes) as usize] += 1;
        entry.1.insert(dt.date_naive());
    }
    let by_year = tallies
        .into_iter()
        .map(|(year, (counts, days))| {
            let denom = (days.len() as f64) * bucket_minutes as f64;
            (
                year,
                counts.iter().map(|&c| c as f64 / denom).collect::<Vec<f64>>(),
            )
        })
        .collect();
    Ok(TimeProfile {
        bucket_minutes,
        timezone_offset_minutes,
        by_year,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{TopicId, Username};

    #[test]
    fn concentration_examples() {
        let counts = RankCounts::new(vec![50, 30, 20]).unwrap();
        assert_eq!(concentration(&counts, 1.0 / 3.0).unwrap(), 0.5);
        assert_eq!(concentration(&counts, 1.0).unwrap(), 1.0);
        // Monotone nondecreasing in f.
        let mut prev = 0.0;
        for i in 1..=100 {
            let share = concentration(&counts, i as f64 / 100.0).unwrap();
            assert!(share >= prev);
            prev = share;
        }
        assert!(concentration(&counts, 0.0).is_err());
        assert!(concentration(&RankCounts::new(vec![1]).unwrap(), 2.0).is_err());
    }

    #[test]
    fn exact_model_fit_recovers_parameters() {
        let (a, b, c) = (10.0, 0.5, 0.4);
        let values: Vec<f64> = (1..=500)
            .map(|r| (a - b * (r as f64).powf(c)).exp())
            .collect();
        let fit = fit_stretched_exponential(&values, 500).unwrap();
        assert!((fit.a - a).abs() < 1e-6, "a = {}", fit.a);
        assert!((fit.b - b).abs() < 1e-6, "b = {}", fit.b);
        assert!((fit.c - c).abs() < 1e-6, "c = {}", fit.c);
        assert!(fit.rss < 1e-9, "rss = {}", fit.rss);
    }

    #[test]
    fn pure_exponential_hits_the_shape_boundary() {
        let values: Vec<f64> = (1..=200).map(|r| (8.0 - 0.03 * r as f64).exp()).collect();
        let fit = fit_stretched_exponential(&values, 200).unwrap();
        assert!((fit.c - 1.0).abs() < 1e-3, "c = {}", fit.c);
    }

    #[test]
    fn fit_preconditions() {
        assert!(fit_stretched_exponential(&[1.0, 2.0], 2).is_err());
        assert!(fit_stretched_exponential(&[1.0, 2.0, 3.0], 5).is_err());
        assert!(fit_stretched_exponential(&[1.0, 0.0, 3.0], 3).is_err());
    }

    #[test]
    fn extrapolation_boundaries() {
        // a = b puts the unit count exactly at rank 1.
        let fit = StretchedExpFit {
            a: 2.0,
            b: 2.0,
            c: 0.5,
            fit_len: 10,
            rss: 0.0,
        };
        let (n_star, total) = extrapolate_population(&fit).unwrap();
        assert_eq!(n_star, 1);
        assert!((total - 1.0).abs() < 1e-12);

        // Monotonicity: raising a with b, c fixed strictly increases the
        // projected population.
        let mut prev = 0;
        for a in [2.0, 4.0, 6.0, 8.0] {
            let fit = StretchedExpFit {
                a,
                b: 2.0,
                c: 0.5,
                fit_len: 10,
                rss: 0.0,
            };
            let (n_star, _) = extrapolate_population(&fit).unwrap();
            assert!(n_star > prev || (a == 2.0 && n_star == 1));
            prev = n_star;
        }

        let bad = StretchedExpFit {
            a: 1.0,
            b: -0.1,
            c: 0.5,
            fit_len: 10,
            rss: 0.0,
        };
        assert!(extrapolate_population(&bad).is_err());
    }

    #[test]
    fn label_lookup_is_longest_prefix() {
        let table = LabelTable::parse(
            "cidr,label\n10.0.0.0/8,corp\n10.1.0.0/16,lab\n192.168.7.0/24,home\n",
        )
        .unwrap();
        let a = |s: &str| Address::parse_dotted(s).unwrap();
        assert_eq!(table.lookup(a("10.0.0.1")), "corp");
        assert_eq!(table.lookup(a("10.1.2.3")), "lab");
        assert_eq!(table.lookup(a("192.168.7.9")), "home");
        assert_eq!(table.lookup(a("8.8.8.8")), UNLABELED);
        assert!(LabelTable::parse("nonsense\n").is_err());
    }

    #[test]
    fn label_aggregate_partitions_input() {
        let table = LabelTable::parse("10.0.0.0/8,corp\n").unwrap();
        let addrs = vec![
            Address::parse_dotted("10.0.0.1").unwrap(),
            Address::parse_dotted("10.0.0.2").unwrap(),
            Address::parse_dotted("8.8.8.8").unwrap(),
        ];
        let agg = label_aggregate(addrs.iter(), &table);
        assert_eq!(agg.get("corp"), Some(&2));
        assert_eq!(agg.get(UNLABELED), Some(&1));
        assert_eq!(agg.values().sum::<u64>(), addrs.len() as u64);
    }

    fn post_at(id: u64, ts: i64) -> Post {
        Post {
            post_id: id,
            topic: TopicId(1),
            username: Username::new("aaaa", 4).unwrap(),
            timestamp: ts,
        }
    }

    #[test]
    fn time_profile_noon_spike_and_rotation() {
        // 2015-06-01 12:00:00 UTC.
        let noon = 1_433_160_000i64;
        let posts: Vec<Post> = (0..10).map(|i| post_at(i, noon + i as i64)).collect();
        let profile = time_profile(&posts, 60, 0).unwrap();
        let buckets = &profile.by_year[&2015];
        assert!(buckets[12] > 0.0);
        assert_eq!(buckets.iter().filter(|&&b| b > 0.0).count(), 1);

        // A +60 minute offset rotates the spike one bucket forward.
        let rotated = time_profile(&posts, 60, 60).unwrap();
        assert!(rotated.by_year[&2015][13] > 0.0);
        assert_eq!(rotated.by_year[&2015][12], 0.0);

        assert!(time_profile(&posts, 7, 0).is_err());
    }

    #[test]
    fn rank_counts_from_addresses() {
        let counts = RankCounts::from_address_counts(vec![
            Address(1),
            Address(1),
            Address(2),
            Address(1),
        ])
        .unwrap();
        assert_eq!(counts.counts(), &[3, 1]);
        assert!(RankCounts::new(vec![3, 0]).is_err());
    }
}
