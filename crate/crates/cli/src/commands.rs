//! Command implementations. Each command is idempotent for fixed inputs
//! and seed; diagnostics go to stderr, data goes to files.

use crate::config::Config;
use crate::paths::RunPaths;
use hashslice_core::attribute::{CalibrationReport, Pipeline, SlicePolicy, Thresholds};
use hashslice_core::enumerate::{candidates_for_topic, TopicWorkOrder};
use hashslice_core::error::{Error, Result};
use hashslice_core::formats::{self, FileStamp};
use hashslice_core::scheme::{RegimeTable, SchemeConfig, TopicId, Username};
use hashslice_core::store::{append_index, write_topic_file, CandidateStore, INDEX_FILE};
use hashslice_core::synth::{self, Post};
use hashslice_core::validate::{bogon_check, score, BogonList};
use hashslice_core::{analytics, textnorm};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub struct Ctx {
    pub config: Config,
    pub paths: RunPaths,
    pub workers: usize,
    pub seed: u64,
}

impl Ctx {
    pub fn new(
        config: Config,
        out_override: Option<PathBuf>,
        workers_override: Option<usize>,
        seed_override: Option<u64>,
    ) -> Result<Self> {
        let paths = RunPaths::new(&config, out_override);
        let workers = workers_override.unwrap_or(config.workers()?);
        let seed = seed_override.unwrap_or(config.seed()?);
        Ok(Ctx {
            config,
            paths,
            workers,
            seed,
        })
    }

    fn stamp(&self) -> FileStamp {
        FileStamp::new(self.seed, self.config.digest())
    }

    fn bogons(&self) -> Result<BogonList> {
        match self.config.get_path("paths.bogons") {
            Some(path) => BogonList::load(&path),
            None => Ok(BogonList::default()),
        }
    }

    fn scheme(&self) -> Result<SchemeConfig> {
        self.config.scheme()
    }

    fn load_regimes(&self) -> Result<RegimeTable> {
        let default = self.paths.regimes(&self.config);
        self.config.regimes(Some(&default))
    }

    fn load_dump(&self) -> Result<Vec<Post>> {
        let scheme = self.scheme()?;
        let path = self.paths.dump(&self.config);
        if !path.exists() {
            return Err(Error::usage(format!(
                "dump {} does not exist; run `simulate` first or point paths.dump at one",
                path.display()
            )));
        }
        formats::read_dump(&path, scheme.username_len)
    }

    fn load_store(&self) -> Result<CandidateStore> {
        let scheme = self.scheme()?;
        let dir = self.paths.store(&self.config);
        if !dir.join(INDEX_FILE).exists() {
            return Err(Error::usage(format!(
                "candidate store {} is missing; run `enumerate` first",
                dir.display()
            )));
        }
        CandidateStore::load(&dir, scheme.username_len)
    }

    fn pipeline<'a>(
        &self,
        posts: &'a [Post],
        store: &'a CandidateStore,
        regimes: &'a RegimeTable,
        scheme: &SchemeConfig,
    ) -> Pipeline<'a> {
        Pipeline {
            posts,
            store,
            regimes,
            username_bits: scheme.username_bits(),
            address_space_bits: scheme.address_space_bits,
            address_base: scheme.address_base,
            workers: self.workers,
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(ctx: &Ctx) -> Result<()> {
    let scheme = ctx.scheme()?;
    let mut forum = ctx.config.forum()?;
    forum.seed = ctx.seed;
    let population = ctx.config.population()?;
    let bogons = ctx.bogons()?;

    let (posts, truth) = synth::generate(&population, &forum, &scheme, &bogons)?;
    std::fs::create_dir_all(&ctx.paths.out_dir)?;
    let stamp = ctx.stamp();
    formats::write_dump(&ctx.paths.dump(&ctx.config), &posts, &stamp)?;
    formats::write_ground_truth(&ctx.paths.ground_truth(&ctx.config), &truth, &stamp)?;
    std::fs::write(
        ctx.paths.regimes(&ctx.config),
        forum.regimes.to_config_text(),
    )?;
    eprintln!(
        "simulated {} posts across {} topics over {} days ({} addresses)",
        posts.len(),
        posts
            .iter()
            .map(|p| p.topic)
            .collect::<std::collections::HashSet<_>>()
            .len(),
        forum.days,
        truth.active_addresses().len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// enumerate
// ---------------------------------------------------------------------------

/// Default audit positions: every regime slice plus its shifted noise
/// position.
fn default_positions(regimes: &RegimeTable) -> Vec<usize> {
    let mut positions = regimes.all_slices();
    let noise: Vec<usize> = positions.iter().map(|s| s + 1).collect();
    positions.extend(noise);
    positions.sort_unstable();
    positions.dedup();
    positions
}

pub fn enumerate(ctx: &Ctx, positions_override: Option<Vec<usize>>) -> Result<()> {
    let scheme = ctx.scheme()?;
    let regimes = ctx.load_regimes()?;
    let posts = ctx.load_dump()?;
    let positions = positions_override.unwrap_or_else(|| default_positions(&regimes));
    if positions.is_empty() {
        return Err(Error::usage("no slice positions to enumerate"));
    }

    let store_dir = ctx.paths.store(&ctx.config);
    std::fs::create_dir_all(&store_dir)?;
    let index_path = store_dir.join(INDEX_FILE);
    if index_path.exists() {
        std::fs::remove_file(&index_path)?;
    }

    let mut by_topic: BTreeMap<TopicId, Vec<Username>> = BTreeMap::new();
    for post in &posts {
        by_topic
            .entry(post.topic)
            .or_default()
            .push(post.username.clone());
    }

    let total = by_topic.len();
    let started = std::time::Instant::now();
    for (done, (topic, usernames)) in by_topic.into_iter().enumerate() {
        let order = TopicWorkOrder::new(topic, usernames, positions.clone());
        let sets = candidates_for_topic(&order, &scheme, ctx.workers)?;
        let mut entries = Vec::with_capacity(positions.len());
        for &slice in &positions {
            let slice_sets: Vec<_> = sets.iter().filter(|s| s.slice_start == slice).collect();
            entries.push(write_topic_file(&store_dir, topic, slice, &slice_sets)?);
        }
        append_index(&store_dir, &entries)?;
        if (done + 1) % 50 == 0 || done + 1 == total {
            eprintln!(
                "enumerated {}/{} topics ({:.0}s elapsed)",
                done + 1,
                total,
                started.elapsed().as_secs_f64()
            );
        }
    }
    eprintln!(
        "candidate store written to {} (positions {:?})",
        store_dir.display(),
        positions
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CalibrationFile {
    tool_version: String,
    seed: u64,
    config_digest: String,
    #[serde(flatten)]
    report: CalibrationReport,
}

pub fn calibrate(ctx: &Ctx) -> Result<()> {
    let scheme = ctx.scheme()?;
    let regimes = ctx.load_regimes()?;
    let posts = ctx.load_dump()?;
    let store = ctx.load_store()?;
    let pipeline = ctx.pipeline(&posts, &store, &regimes, &scheme);
    let report = pipeline.calibrate()?;
    for w in &report.windows {
        eprintln!(
            "{}-day window: min noise log10 p = {:.3}, threshold log10 p* = {:.3}",
            w.window_days, w.min_noise_log10_p, w.threshold_log10_p
        );
    }
    formats::write_json(
        &ctx.paths.calibration(&ctx.config),
        &CalibrationFile {
            tool_version: formats::TOOL_VERSION.to_string(),
            seed: ctx.seed,
            config_digest: ctx.config.digest(),
            report,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// assign
// ---------------------------------------------------------------------------

pub struct ThresholdOverrides {
    pub p7: Option<f64>,
    pub p31: Option<f64>,
    pub p91: Option<f64>,
}

impl ThresholdOverrides {
    fn complete(&self) -> Option<Thresholds> {
        Some(Thresholds {
            log_p7: self.p7?.ln(),
            log_p31: self.p31?.ln(),
            log_p91: self.p91?.ln(),
        })
    }
}

fn load_thresholds(ctx: &Ctx, overrides: &ThresholdOverrides) -> Result<Thresholds> {
    if let Some(t) = overrides.complete() {
        return Ok(t);
    }
    let path = ctx.paths.calibration(&ctx.config);
    if !path.exists() {
        return Err(Error::usage(format!(
            "no thresholds: calibration file {} is missing; run `calibrate` first \
             or pass --p7/--p31/--p91",
            path.display()
        )));
    }
    let report: CalibrationReport = formats::read_json(&path)?;
    let mut thresholds = report.thresholds()?;
    if let Some(p7) = overrides.p7 {
        thresholds.log_p7 = p7.ln();
    }
    if let Some(p31) = overrides.p31 {
        thresholds.log_p31 = p31.ln();
    }
    if let Some(p91) = overrides.p91 {
        thresholds.log_p91 = p91.ln();
    }
    Ok(thresholds)
}

pub fn assign(ctx: &Ctx, overrides: &ThresholdOverrides, noise: bool) -> Result<()> {
    let scheme = ctx.scheme()?;
    let regimes = ctx.load_regimes()?;
    let posts = ctx.load_dump()?;
    let store = ctx.load_store()?;
    let thresholds = load_thresholds(ctx, overrides)?;
    let policy = if noise {
        SlicePolicy::NoiseShifted
    } else {
        SlicePolicy::Regime
    };
    let pipeline = ctx.pipeline(&posts, &store, &regimes, &scheme);
    let records = pipeline.run(&thresholds, policy)?;
    eprintln!(
        "assigned {} of {} posts ({:.1}%){}",
        records.len(),
        posts.len(),
        100.0 * records.len() as f64 / posts.len().max(1) as f64,
        if noise { " [noise position]" } else { "" }
    );
    formats::write_assignments(&ctx.paths.assignments(&ctx.config), &records, &ctx.stamp())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// scan-positions
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ScanSummary {
    positions: Vec<usize>,
    detected_switch: Option<DetectedSwitch>,
}

#[derive(Serialize)]
struct DetectedSwitch {
    week_start: chrono::NaiveDate,
    from_position: usize,
    to_position: usize,
}

pub fn scan_positions(ctx: &Ctx, positions_override: Option<Vec<usize>>) -> Result<()> {
    let scheme = ctx.scheme()?;
    let regimes = ctx.load_regimes()?;
    let posts = ctx.load_dump()?;
    let store = ctx.load_store()?;
    let positions = positions_override.unwrap_or_else(|| default_positions(&regimes));
    let pipeline = ctx.pipeline(&posts, &store, &regimes, &scheme);
    let scan = pipeline.scan_positions(&positions)?;

    let mut csv = String::from("position,week_start,mean_log10_min_p,posts\n");
    for series in &scan.series {
        for point in &series.weeks {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                series.slice_start, point.week_start, point.mean_log10_min_p, point.posts
            ));
        }
    }
    std::fs::create_dir_all(&ctx.paths.out_dir)?;
    std::fs::write(ctx.paths.scan_csv(&ctx.config), csv)?;

    let detected = scan.detect_switch();
    match &detected {
        Some((week, from, to)) => eprintln!(
            "slice regime change detected in the week of {week}: position {from} -> {to}"
        ),
        None => eprintln!("no slice regime change detected"),
    }
    formats::write_json(
        &ctx.paths.scan_summary(&ctx.config),
        &ScanSummary {
            positions,
            detected_switch: detected.map(|(week_start, from_position, to_position)| {
                DetectedSwitch {
                    week_start,
                    from_position,
                    to_position,
                }
            }),
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ValidationFile {
    tool_version: String,
    seed: u64,
    bogon_assigned: u64,
    bogon_coverage_fraction: f64,
    score: Option<hashslice_core::validate::ScoreReport>,
}

/// Returns the process exit code: 0 when clean, 1 when the bogon check
/// fails.
pub fn validate(ctx: &Ctx) -> Result<i32> {
    let assignments_path = ctx.paths.assignments(&ctx.config);
    if !assignments_path.exists() {
        return Err(Error::usage(format!(
            "assignments {} missing; run `assign` first",
            assignments_path.display()
        )));
    }
    let assignments = formats::read_assignments(&assignments_path)?;
    let bogons = ctx.bogons()?;
    let bogon_assigned = bogon_check(&assignments, &bogons);

    let truth_path = ctx.paths.ground_truth(&ctx.config);
    let score_report = if truth_path.exists() {
        let truth = formats::read_ground_truth(&truth_path)?;
        let posts = ctx.load_dump()?;
        Some(score(&posts, &truth, &assignments)?)
    } else {
        None
    };

    if let Some(report) = &score_report {
        eprintln!(
            "score: assigned {} / {} posts, precision {:?}, heavy recall {:.4}",
            report.assigned, report.total_posts, report.precision, report.recall_heavy
        );
    }
    eprintln!(
        "bogon check: {bogon_assigned} assignments in reserved ranges ({} ranges covering {:.1}% of the space)",
        if bogons.is_empty() { "no" } else { "listed" },
        100.0 * bogons.coverage_fraction()
    );

    formats::write_json(
        &ctx.paths.score_report(&ctx.config),
        &ValidationFile {
            tool_version: formats::TOOL_VERSION.to_string(),
            seed: ctx.seed,
            bogon_assigned,
            bogon_coverage_fraction: bogons.coverage_fraction(),
            score: score_report,
        },
    )?;

    Ok(if bogon_assigned > 0 { 1 } else { 0 })
}

// ---------------------------------------------------------------------------
// normalize-text
// ---------------------------------------------------------------------------

pub fn normalize_text(ctx: &Ctx, input: &Path, output: &Path) -> Result<()> {
    let lexicon = match (
        ctx.config.get_path("paths.lexicon"),
        ctx.config.get_path("paths.profanity"),
    ) {
        (Some(words), Some(profanity)) => textnorm::Lexicon::load(&words, &profanity)?,
        _ => {
            return Err(Error::config(
                "normalize-text needs paths.lexicon and paths.profanity",
            ))
        }
    };
    let table = match ctx.config.get_path("paths.substitutions") {
        Some(path) => textnorm::SubstitutionTable::load(&path)?,
        None => textnorm::SubstitutionTable::default(),
    };
    let canon = match ctx.config.get_path("paths.canon") {
        Some(path) => textnorm::CanonMap::load(&path)?,
        None => textnorm::CanonMap::default(),
    };
    let skip = match ctx.config.get_path("paths.skiplist") {
        Some(path) => textnorm::SkipList::load(&path)?,
        None => textnorm::SkipList::default(),
    };

    let rows = formats::read_texts(input)?;
    let normalized: Vec<(u64, String)> = rows
        .into_iter()
        .map(|(id, text)| (id, textnorm::normalize(&text, &lexicon, &table, &canon, &skip)))
        .collect();
    formats::write_texts(output, &normalized)?;
    eprintln!("normalized {} posts into {}", normalized.len(), output.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitSummary {
    fit: analytics::StretchedExpFit,
    projected_population: u64,
    projected_total_posts: f64,
    observed_addresses: usize,
    observed_posts: u64,
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let assignments_path = ctx.paths.assignments(&ctx.config);
    if !assignments_path.exists() {
        return Err(Error::usage(format!(
            "assignments {} missing; run `assign` first",
            assignments_path.display()
        )));
    }
    let assignments = formats::read_assignments(&assignments_path)?;
    if assignments.is_empty() {
        return Err(Error::usage("no assignments to report on"));
    }
    let dir = ctx.paths.report_dir(&ctx.config);
    std::fs::create_dir_all(&dir)?;

    // Rank counts and concentration.
    let counts =
        analytics::RankCounts::from_address_counts(assignments.iter().map(|r| r.address))?;
    let mut rank_csv = String::from("rank,posts\n");
    for (i, c) in counts.counts().iter().enumerate() {
        rank_csv.push_str(&format!("{},{c}\n", i + 1));
    }
    std::fs::write(dir.join("rank_counts.csv"), rank_csv)?;

    let mut conc_csv = String::from("top_fraction,post_share\n");
    for percent in [1u32, 2, 5, 10, 20, 50, 100] {
        let share = analytics::concentration(&counts, percent as f64 / 100.0)?;
        conc_csv.push_str(&format!("{},{share}\n", percent as f64 / 100.0));
    }
    std::fs::write(dir.join("concentration.csv"), conc_csv)?;

    // Stretched-exponential fit and population projection.
    let fit_rank_max = ctx.config.get_u64("analytics.fit_rank_max", 40_000)? as usize;
    let values = counts.as_f64();
    let fit_len = fit_rank_max.min(values.len());
    if fit_len >= 3 {
        let fit = analytics::fit_stretched_exponential(&values, fit_len)?;
        let (population, total) = analytics::extrapolate_population(&fit)?;
        formats::write_json(
            &dir.join("stretched_fit.json"),
            &FitSummary {
                fit,
                projected_population: population,
                projected_total_posts: total,
                observed_addresses: counts.len(),
                observed_posts: counts.counts().iter().sum(),
            },
        )?;
        eprintln!(
            "fit: log y = {:.3} - {:.3} r^{:.3}; projected population {population}",
            fit.a, fit.b, fit.c
        );
    }

    // Label aggregation.
    if let Some(labels_path) = ctx.config.get_path("paths.labels") {
        let labels = analytics::LabelTable::load(&labels_path)?;
        let addresses: Vec<_> = assignments.iter().map(|r| r.address).collect();
        let agg = analytics::label_aggregate(addresses.iter(), &labels);
        let total: u64 = agg.values().sum();
        let mut label_csv = String::from("label,posts,share\n");
        for (label, n) in &agg {
            label_csv.push_str(&format!("{label},{n},{}\n", *n as f64 / total as f64));
        }
        std::fs::write(dir.join("labels.csv"), label_csv)?;
    }

    // Time-of-day profile over the whole dump.
    if ctx.paths.dump(&ctx.config).exists() {
        let posts = ctx.load_dump()?;
        let bucket = ctx.config.get_u64("analytics.bucket_minutes", 10)? as u32;
        let offset = ctx.config.get_f64("analytics.tz_offset_minutes", 0.0)? as i32;
        let profile = analytics::time_profile(&posts, bucket, offset)?;
        let mut profile_csv = String::from("year,bucket_start_minute,posts_per_minute\n");
        for (year, buckets) in &profile.by_year {
            for (i, v) in buckets.iter().enumerate() {
                profile_csv.push_str(&format!("{year},{},{v}\n", i as u32 * bucket));
            }
        }
        std::fs::write(dir.join("time_profile.csv"), profile_csv)?;
    }

    eprintln!("report written to {}", dir.display());
    Ok(())
}
