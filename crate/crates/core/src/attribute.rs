//! Windowed assignment of posts to addresses.
//!
//! For each calendar day the pipeline gathers a symmetric window of posts,
//! counts how often every address appears across the window's candidate
//! sets, and scores those counts against the Poisson-binomial null. A post
//! on the target day is assigned to the candidate with the smallest tail
//! probability, but only when that probability clears a threshold
//! calibrated so that the shifted noise slice yields zero assignments.
//! Three passes (7, 31, then 91 days) let slower posters accumulate
//! enough evidence; later passes never override earlier assignments.

use crate::error::{Error, Result};
use crate::pbnull::{self, TopicLoad};
use crate::scheme::{Address, RegimeTable, TopicId};
use crate::store::CandidateStore;
use crate::synth::Post;
use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

/// The three window lengths, identified by their day span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowKind {
    Days7,
    Days31,
    Days91,
}

impl WindowKind {
    pub const ALL: [WindowKind; 3] = [WindowKind::Days7, WindowKind::Days31, WindowKind::Days91];

    /// Days on each side of the target day (3, 15, 45).
    pub fn half_width(&self) -> u64 {
        match self {
            WindowKind::Days7 => 3,
            WindowKind::Days31 => 15,
            WindowKind::Days91 => 45,
        }
    }

    pub fn days(&self) -> u32 {
        match self {
            WindowKind::Days7 => 7,
            WindowKind::Days31 => 31,
            WindowKind::Days91 => 91,
        }
    }

    pub fn from_days(days: u32) -> Result<Self> {
        match days {
            7 => Ok(WindowKind::Days7),
            31 => Ok(WindowKind::Days31),
            91 => Ok(WindowKind::Days91),
            other => Err(Error::usage(format!("no {other}-day window kind"))),
        }
    }

    fn index(&self) -> usize {
        match self {
            WindowKind::Days7 => 0,
            WindowKind::Days31 => 1,
            WindowKind::Days91 => 2,
        }
    }
}

/// A symmetric window around one target day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kind: WindowKind,
    pub target: NaiveDate,
}

impl Window {
    pub fn span(&self) -> (NaiveDate, NaiveDate) {
        let half = self.kind.half_width();
        (self.target - Days::new(half), self.target + Days::new(half))
    }
}

/// Per-window p-value cutoffs, kept as natural logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub log_p7: f64,
    pub log_p31: f64,
    pub log_p91: f64,
}

impl Thresholds {
    pub fn log_for(&self, kind: WindowKind) -> f64 {
        [self.log_p7, self.log_p31, self.log_p91][kind.index()]
    }

    /// The calibration contract: every threshold strictly positive and
    /// below 1e-6.
    pub fn validate(&self) -> Result<()> {
        for kind in WindowKind::ALL {
            let log_p = self.log_for(kind);
            if !(log_p.is_finite() && log_p < (1e-6f64).ln()) {
                return Err(Error::Calibration(format!(
                    "{}-day threshold {:e} outside (0, 1e-6)",
                    kind.days(),
                    log_p.exp()
                )));
            }
        }
        Ok(())
    }
}

/// A post bound to its inferred address.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub post_id: u64,
    pub address: Address,
    /// Natural log of the winning tail probability.
    pub log_p: f64,
    pub window: WindowKind,
    pub slice_start: usize,
}

/// Which slice offsets a day's scan uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlicePolicy {
    /// The regime table's offsets (both on a cutoff day).
    Regime,
    /// Every regime offset shifted one position right: the empirical null.
    NoiseShifted,
}

impl SlicePolicy {
    fn slices_for(&self, regimes: &RegimeTable, date: NaiveDate) -> Result<Vec<usize>> {
        let mut slices = regimes.slices_for(date)?;
        if let SlicePolicy::NoiseShifted = self {
            for s in &mut slices {
                *s += 1;
            }
        }
        slices.dedup();
        Ok(slices)
    }
}

/// Sparse or dense per-window occurrence counts.
enum CountTable {
    Dense { base: u32, counts: Vec<u32> },
    Sparse { map: HashMap<u32, u32> },
}

/// Address spaces up to this many bits get a dense counter array.
const DENSE_BITS: u32 = 26;

impl CountTable {
    fn new(space_bits: u32, base: u32) -> Self {
        if space_bits <= DENSE_BITS {
            CountTable::Dense {
                base,
                counts: vec![0u32; 1usize << space_bits],
            }
        } else {
            CountTable::Sparse {
                map: HashMap::new(),
            }
        }
    }

    #[inline]
    fn increment(&mut self, addr: u32) {
        match self {
            CountTable::Dense { base, counts } => counts[(addr - *base) as usize] += 1,
            CountTable::Sparse { map } => *map.entry(addr).or_insert(0) += 1,
        }
    }

    #[inline]
    fn get(&self, addr: u32) -> u32 {
        match self {
            CountTable::Dense { base, counts } => counts[(addr - *base) as usize],
            CountTable::Sparse { map } => map.get(&addr).copied().unwrap_or(0),
        }
    }
}

/// Everything the pipeline needs to scan one dump.
pub struct Pipeline<'a> {
    pub posts: &'a [Post],
    pub store: &'a CandidateStore,
    pub regimes: &'a RegimeTable,
    pub username_bits: u32,
    pub address_space_bits: u32,
    pub address_base: u32,
    pub workers: usize,
}

/// The minimal-p verdict for one post in one window.
#[derive(Debug, Clone, Copy)]
struct PostMin {
    post_id: u64,
    log_p: f64,
    address: u32,
    slice_start: usize,
}

/// Precomputed day-level grouping of the dump.
struct DayIndex {
    /// Distinct dates carrying posts, ascending.
    dates: Vec<NaiveDate>,
    /// date -> indices into `posts`.
    posts_by_date: BTreeMap<NaiveDate, Vec<usize>>,
    /// date -> topic -> distinct username values.
    pairs_by_date: BTreeMap<NaiveDate, BTreeMap<u64, BTreeSet<u32>>>,
}

impl DayIndex {
    fn build(posts: &[Post]) -> Self {
        let mut posts_by_date: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
        let mut pairs_by_date: BTreeMap<NaiveDate, BTreeMap<u64, BTreeSet<u32>>> = BTreeMap::new();
        for (i, post) in posts.iter().enumerate() {
            let date = post.date();
            posts_by_date.entry(date).or_default().push(i);
            pairs_by_date
                .entry(date)
                .or_default()
                .entry(post.topic.value())
                .or_default()
                .insert(post.username.value());
        }
        DayIndex {
            dates: posts_by_date.keys().copied().collect(),
            posts_by_date,
            pairs_by_date,
        }
    }

    /// Deduplicated (topic -> username values) over a date span.
    fn span_pairs(&self, lo: NaiveDate, hi: NaiveDate) -> BTreeMap<u64, BTreeSet<u32>> {
        let mut merged: BTreeMap<u64, BTreeSet<u32>> = BTreeMap::new();
        for (_, topics) in self.pairs_by_date.range(lo..=hi) {
            for (&topic, values) in topics {
                merged.entry(topic).or_default().extend(values.iter());
            }
        }
        merged
    }
}

impl Pipeline<'_> {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))
    }

    /// Score every post on `date` within one window kind: count the span,
    /// build the null, and take each post's minimal tail probability over
    /// its candidates. `slices` usually has one entry; on a regime cutoff
    /// both offsets compete and the lower p-value wins.
    fn day_scan(
        &self,
        index: &DayIndex,
        date: NaiveDate,
        kind: WindowKind,
        slices: &[usize],
        only: Option<&HashSet<u64>>,
    ) -> Result<Vec<PostMin>> {
        let window = Window { kind, target: date };
        let (lo, hi) = window.span();
        let pairs = index.span_pairs(lo, hi);

        // One count table per slice offset; the null is slice-independent
        // (it only sees the per-topic username counts).
        let mut tables: Vec<CountTable> = Vec::with_capacity(slices.len());
        let mut max_count = 0u64;
        for &slice in slices {
            let mut table = CountTable::new(self.address_space_bits, self.address_base);
            for (&topic, values) in &pairs {
                for &value in values {
                    let set = self
                        .store
                        .get(TopicId(topic), slice, value)
                        .ok_or_else(|| {
                            Error::data(format!(
                                "candidate store has no entry for topic {topic} slice {slice}"
                            ))
                        })?;
                    for &addr in set {
                        table.increment(addr);
                    }
                }
            }
            // Track the largest count for the truncation rule.
            for (&topic, values) in &pairs {
                for &value in values {
                    let set = self.store.get(TopicId(topic), slice, value).unwrap();
                    for &addr in set {
                        max_count = max_count.max(table.get(addr) as u64);
                    }
                }
            }
            tables.push(table);
        }

        let loads_vec: Vec<u32> = pairs.values().map(|v| v.len() as u32).collect();
        let loads = TopicLoad::new(loads_vec, self.username_bits)?;
        let null = pbnull::window_pmf(&loads, self.username_bits, pbnull::default_c_max(max_count))?;

        let mut results = Vec::new();
        for &post_idx in index.posts_by_date.get(&date).into_iter().flatten() {
            let post = &self.posts[post_idx];
            if let Some(filter) = only {
                if !filter.contains(&post.post_id) {
                    continue;
                }
            }
            let mut best: Option<(f64, u32, usize)> = None;
            for (si, &slice) in slices.iter().enumerate() {
                let set = self
                    .store
                    .get(post.topic, slice, post.username.value())
                    .ok_or_else(|| {
                        Error::data(format!(
                            "candidate store has no entry for topic {} slice {slice}",
                            post.topic
                        ))
                    })?;
                for &addr in set {
                    let log_p = null.log_survival(tables[si].get(addr) as u64);
                    let candidate = (log_p, addr, slice);
                    let better = match best {
                        None => true,
                        Some((bp, ba, _)) => {
                            log_p < bp || (log_p == bp && addr < ba)
                        }
                    };
                    if better {
                        best = Some(candidate);
                    }
                }
            }
            if let Some((log_p, address, slice_start)) = best {
                results.push(PostMin {
                    post_id: post.post_id,
                    log_p,
                    address,
                    slice_start,
                });
            }
        }
        Ok(results)
    }

    /// Run every target day of one window kind in parallel.
    fn pass(
        &self,
        index: &DayIndex,
        kind: WindowKind,
        policy: SlicePolicy,
        only: Option<&HashSet<u64>>,
    ) -> Result<Vec<PostMin>> {
        let pool = self.pool()?;
        let outcomes: Vec<Result<Vec<PostMin>>> = pool.install(|| {
            index
                .dates
                .par_iter()
                .map(|&date| {
                    let slices = policy.slices_for(self.regimes, date)?;
                    self.day_scan(index, date, kind, &slices, only)
                })
                .collect()
        });
        let mut merged = Vec::new();
        for outcome in outcomes {
            merged.extend(outcome?);
        }
        merged.sort_by_key(|m| m.post_id);
        Ok(merged)
    }

    /// The full three-pass assignment. Posts assigned by an earlier pass
    /// are never revisited.
    pub fn run(&self, thresholds: &Thresholds, policy: SlicePolicy) -> Result<Vec<AssignmentRecord>> {
        let index = DayIndex::build(self.posts);
        let mut unassigned: HashSet<u64> = self.posts.iter().map(|p| p.post_id).collect();
        let mut records: Vec<AssignmentRecord> = Vec::new();
        for kind in WindowKind::ALL {
            let cutoff = thresholds.log_for(kind);
            let minima = self.pass(&index, kind, policy, Some(&unassigned))?;
            for m in minima {
                if m.log_p < cutoff {
                    unassigned.remove(&m.post_id);
                    records.push(AssignmentRecord {
                        post_id: m.post_id,
                        address: Address(m.address),
                        log_p: m.log_p,
                        window: kind,
                        slice_start: m.slice_start,
                    });
                }
            }
        }
        records.sort_by_key(|r| r.post_id);
        Ok(records)
    }

    /// Score the shifted noise position and derive thresholds: for each
    /// window kind, the largest value strictly below the smallest per-post
    /// minimal p-value seen anywhere in the noise run.
    pub fn calibrate(&self) -> Result<CalibrationReport> {
        let index = DayIndex::build(self.posts);
        let mut windows = Vec::with_capacity(3);
        for kind in WindowKind::ALL {
            let minima = self.pass(&index, kind, SlicePolicy::NoiseShifted, None)?;
            if minima.is_empty() {
                return Err(Error::Calibration(format!(
                    "noise run produced no scored posts for the {}-day window",
                    kind.days()
                )));
            }
            let min_log_p = minima
                .iter()
                .map(|m| m.log_p)
                .fold(f64::INFINITY, f64::min);
            windows.push(WindowCalibration {
                window_days: kind.days(),
                posts_scored: minima.len() as u64,
                min_noise_log10_p: min_log_p / std::f64::consts::LN_10,
                threshold_log10_p: min_log_p.next_down() / std::f64::consts::LN_10,
            });
        }
        Ok(CalibrationReport { windows })
    }

    /// Weekly mean of per-post minimal log10 p-values for each slice
    /// position, using the 7-day window. The series makes regime changes
    /// visible as an ordering flip between two positions.
    pub fn scan_positions(&self, positions: &[usize]) -> Result<PositionScan> {
        if positions.is_empty() {
            return Err(Error::usage("scan needs at least one position"));
        }
        let index = DayIndex::build(self.posts);
        let first = *index
            .dates
            .first()
            .ok_or_else(|| Error::usage("empty dump"))?;
        let mut series = Vec::new();
        for &position in positions {
            let pool = self.pool()?;
            let outcomes: Vec<Result<(NaiveDate, Vec<PostMin>)>> = pool.install(|| {
                index
                    .dates
                    .par_iter()
                    .map(|&date| {
                        Ok((
                            date,
                            self.day_scan(&index, date, WindowKind::Days7, &[position], None)?,
                        ))
                    })
                    .collect()
            });
            let mut weeks: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
            for outcome in outcomes {
                let (date, minima) = outcome?;
                let week = (date - first).num_days() as u64 / 7;
                for m in minima {
                    let entry = weeks.entry(week).or_insert((0.0, 0));
                    entry.0 += m.log_p / std::f64::consts::LN_10;
                    entry.1 += 1;
                }
            }
            series.push(PositionSeries {
                slice_start: position,
                weeks: weeks
                    .into_iter()
                    .map(|(week, (sum, n))| WeekPoint {
                        week_start: first + Days::new(week * 7),
                        mean_log10_min_p: sum / n as f64,
                        posts: n,
                    })
                    .collect(),
            });
        }
        Ok(PositionScan { series })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowCalibration {
    pub window_days: u32,
    pub posts_scored: u64,
    pub min_noise_log10_p: f64,
    pub threshold_log10_p: f64,
}

/// The calibration artifact: per-window noise minima and the thresholds
/// derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub windows: Vec<WindowCalibration>,
}

impl CalibrationReport {
    pub fn thresholds(&self) -> Result<Thresholds> {
        let get = |days: u32| {
            self.windows
                .iter()
                .find(|w| w.window_days == days)
                .map(|w| w.threshold_log10_p * std::f64::consts::LN_10)
                .ok_or_else(|| {
                    Error::Calibration(format!("calibration lacks the {days}-day window"))
                })
        };
        Ok(Thresholds {
            log_p7: get(7)?,
            log_p31: get(31)?,
            log_p91: get(91)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeekPoint {
    pub week_start: NaiveDate,
    pub mean_log10_min_p: f64,
    pub posts: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionSeries {
    pub slice_start: usize,
    pub weeks: Vec<WeekPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionScan {
    pub series: Vec<PositionSeries>,
}

impl PositionScan {
    /// The week where the lowest-mean position changes, if it ever does.
    /// Returns (week start, position before, position after).
    pub fn detect_switch(&self) -> Option<(NaiveDate, usize, usize)> {
        let mut best_by_week: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
        for series in &self.series {
            for point in &series.weeks {
                let entry = best_by_week
                    .entry(point.week_start)
                    .or_insert((f64::INFINITY, usize::MAX));
                if point.mean_log10_min_p < entry.0 {
                    *entry = (point.mean_log10_min_p, series.slice_start);
                }
            }
        }
        let mut prev: Option<(NaiveDate, usize)> = None;
        for (week, (_, position)) in best_by_week {
            if let Some((_, prev_pos)) = prev {
                if prev_pos != position {
                    return Some((week, prev_pos, position));
                }
            }
            prev = Some((week, position));
        }
        None
    }
}
