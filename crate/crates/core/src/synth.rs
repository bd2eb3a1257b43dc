//! Synthetic forum generation with hidden ground truth.
//!
//! A run is fully determined by its seed. Draws happen in a fixed,
//! documented order so dumps are reproducible byte for byte:
//!
//!   1. population addresses, rank by rank (rejection-sampled against the
//!      bogon list and earlier picks);
//!   2. per day: churn decisions per rank, then the topic count, then per
//!      topic the post count, then per post the poster rank and the
//!      second-of-day.
//!
//! Posts are then ordered by timestamp (sequence number breaking ties) and
//! numbered from 1, so post ids increase with time. Usernames come from
//! the true scheme at the regime slice of each post's date; the public
//! dump carries no address information.

use crate::error::{Error, Result};
use crate::scheme::{username_for, Address, RegimeTable, SchemeConfig, TopicId, Username};
use crate::validate::BogonList;
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

/// One public post: everything the attacker gets to see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: u64,
    pub topic: TopicId,
    pub username: Username,
    /// Seconds since epoch, UTC.
    pub timestamp: i64,
}

impl Post {
    pub fn date(&self) -> NaiveDate {
        date_of_timestamp(self.timestamp)
    }
}

/// Seconds-since-epoch to UTC calendar date.
pub fn date_of_timestamp(ts: i64) -> NaiveDate {
    chrono::DateTime::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .date_naive()
}

/// The hidden map from post to true source address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    by_post: BTreeMap<u64, Address>,
}

impl GroundTruth {
    pub fn insert(&mut self, post_id: u64, address: Address) {
        self.by_post.insert(post_id, address);
    }

    pub fn address_of(&self, post_id: u64) -> Option<Address> {
        self.by_post.get(&post_id).copied()
    }

    pub fn contains(&self, post_id: u64) -> bool {
        self.by_post.contains_key(&post_id)
    }

    pub fn len(&self) -> usize {
        self.by_post.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_post.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, Address)> + '_ {
        self.by_post.iter().map(|(&id, &addr)| (id, addr))
    }

    /// Distinct addresses that authored at least one post.
    pub fn active_addresses(&self) -> HashSet<Address> {
        self.by_post.values().copied().collect()
    }
}

/// How many of something to draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DrawLaw {
    Fixed(u64),
    /// Knuth sampling; fine for the small means used here.
    Poisson(f64),
    /// Inclusive bounds.
    Uniform { lo: u64, hi: u64 },
}

impl DrawLaw {
    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            DrawLaw::Fixed(n) => n,
            DrawLaw::Poisson(lambda) => {
                let threshold = (-lambda).exp();
                let mut k = 0u64;
                let mut p = 1.0;
                loop {
                    p *= rng.random::<f64>();
                    if p <= threshold {
                        return k;
                    }
                    k += 1;
                }
            }
            DrawLaw::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DrawLaw::Fixed(n) => n as f64,
            DrawLaw::Poisson(lambda) => lambda,
            DrawLaw::Uniform { lo, hi } => (lo + hi) as f64 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DrawLaw::Poisson(lambda) if !(lambda.is_finite() && lambda >= 0.0) => {
                Err(Error::config("poisson mean must be finite and nonnegative"))
            }
            DrawLaw::Uniform { lo, hi } if lo > hi => {
                Err(Error::config("uniform draw bounds inverted"))
            }
            _ => Ok(()),
        }
    }
}

/// Rank-activity law: how much each address posts relative to the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivityLaw {
    Uniform,
    /// Weight of rank r (1-based) proportional to `exp(-decay * r^shape)`,
    /// the usual rank-concentration law on posting platforms.
    StretchedExponential { decay: f64, shape: f64 },
}

impl ActivityLaw {
    fn weights(&self, n: usize) -> Result<Vec<f64>> {
        let weights: Vec<f64> = match *self {
            ActivityLaw::Uniform => vec![1.0; n],
            ActivityLaw::StretchedExponential { decay, shape } => {
                if decay <= 0.0 || shape <= 0.0 || shape > 1.0 {
                    return Err(Error::config(
                        "stretched exponential needs decay > 0 and shape in (0, 1]",
                    ));
                }
                (1..=n)
                    .map(|r| (-decay * (r as f64).powf(shape)).exp())
                    .collect()
            }
        };
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::config("activity weights must be positive and finite"));
        }
        Ok(weights)
    }
}

/// Who is posting: population size, activity skew, churn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    pub n_addresses: usize,
    pub activity: ActivityLaw,
    /// Per-day probability that an active address is replaced by a fresh
    /// one. Retired addresses are never reused within a run.
    pub churn_rate: f64,
}

impl Default for PopulationModel {
    fn default() -> Self {
        PopulationModel {
            n_addresses: 300,
            activity: ActivityLaw::StretchedExponential {
                decay: 0.368,
                shape: 0.5,
            },
            churn_rate: 0.0,
        }
    }
}

/// Shape of the simulated forum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForumConfig {
    pub start_date: NaiveDate,
    pub days: u32,
    pub topics_per_day: DrawLaw,
    /// Posts per topic; draws of zero are lifted to one (a topic exists
    /// because someone posted).
    pub posts_per_topic: DrawLaw,
    pub regimes: RegimeTable,
    pub seed: u64,
    pub first_topic_id: u64,
    /// Optional 24-entry time-of-day intensity histogram; uniform when
    /// absent.
    pub hour_weights: Option<Vec<f64>>,
}

impl ForumConfig {
    pub fn end_date(&self) -> NaiveDate {
        if self.days == 0 {
            self.start_date
        } else {
            self.start_date + Days::new(self.days as u64 - 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topics_per_day.validate()?;
        self.posts_per_topic.validate()?;
        if self.first_topic_id == 0 {
            return Err(Error::config("topic ids start at 1"));
        }
        if let Some(w) = &self.hour_weights {
            if w.len() != 24 || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config("hour_weights needs 24 nonnegative entries"));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::config("hour_weights must have positive mass"));
            }
        }
        if self.days > 0 {
            let covered = self.regimes.start() <= self.start_date
                && self.regimes.end() >= self.end_date();
            if !covered {
                return Err(Error::config(format!(
                    "regime table {} .. {} does not cover the simulated span {} .. {}",
                    self.regimes.start(),
                    self.regimes.end(),
                    self.start_date,
                    self.end_date()
                )));
            }
        }
        Ok(())
    }

    /// Split the regime table at `switch_date`, so earlier posts use the
    /// slice one position left.
    pub fn inject_regime_switch(&self, switch_date: NaiveDate) -> Result<ForumConfig> {
        if switch_date < self.start_date || switch_date > self.end_date() {
            return Err(Error::range(format!(
                "switch date {switch_date} outside simulated span {} .. {}",
                self.start_date,
                self.end_date()
            )));
        }
        Ok(ForumConfig {
            regimes: self.regimes.with_switch_at(switch_date)?,
            ..self.clone()
        })
    }
}

/// Generate the public dump and its hidden ground truth.
pub fn generate(
    population: &PopulationModel,
    forum: &ForumConfig,
    scheme: &SchemeConfig,
    bogons: &BogonList,
) -> Result<(Vec<Post>, GroundTruth)> {
    scheme.validate()?;
    forum.validate()?;
    if forum.days == 0 {
        return Ok((Vec::new(), GroundTruth::default()));
    }
    if population.n_addresses == 0 && forum.topics_per_day.mean() > 0.0 {
        return Err(Error::config(
            "zero addresses cannot produce a positive posting rate",
        ));
    }
    if !(0.0..=1.0).contains(&population.churn_rate) {
        return Err(Error::config("churn_rate must be a probability"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(forum.seed);

    // Draw 1: the address pool, rank by rank.
    let mut used: HashSet<Address> = HashSet::new();
    let mut pool: Vec<Address> = Vec::with_capacity(population.n_addresses);
    for _ in 0..population.n_addresses {
        pool.push(sample_fresh_address(&mut rng, scheme, bogons, &mut used)?);
    }

    let weights = population.activity.weights(population.n_addresses)?;
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total_weight = *cumulative.last().unwrap_or(&0.0);

    let hour_cumulative: Option<Vec<f64>> = forum.hour_weights.as_ref().map(|w| {
        w.iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    });

    struct Draft {
        seq: u64,
        topic: TopicId,
        address: Address,
        timestamp: i64,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    let mut next_topic = forum.first_topic_id;
    let mut seq = 0u64;

    for day in 0..forum.days {
        let date = forum.start_date + Days::new(day as u64);
        let midnight = date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();

        // Draw 2a: churn, rank by rank.
        if population.churn_rate > 0.0 {
            for rank in 0..pool.len() {
                if rng.random::<f64>() < population.churn_rate {
                    pool[rank] = sample_fresh_address(&mut rng, scheme, bogons, &mut used)?;
                }
            }
        }

        // Draw 2b: today's topics and posts.
        let topics_today = forum.topics_per_day.sample(&mut rng);
        for _ in 0..topics_today {
            let topic = TopicId(next_topic);
            next_topic += 1;
            let posts = forum.posts_per_topic.sample(&mut rng).max(1);
            for _ in 0..posts {
                let rank = {
                    let u = rng.random::<f64>() * total_weight;
                    cumulative.partition_point(|&c| c <= u)
                }
                .min(pool.len() - 1);
                let second = match &hour_cumulative {
                    None => rng.random_range(0..86_400i64),
                    Some(cum) => {
                        let total = *cum.last().unwrap();
                        let u = rng.random::<f64>() * total;
                        let hour = cum.partition_point(|&c| c <= u).min(23) as i64;
                        hour * 3600 + rng.random_range(0..3600i64)
                    }
                };
                drafts.push(Draft {
                    seq,
                    topic,
                    address: pool[rank],
                    timestamp: midnight + second,
                });
                seq += 1;
            }
        }
    }

    // Time orders the ids; generation sequence breaks exact-second ties.
    drafts.sort_by_key(|d| (d.timestamp, d.seq));

    let mut posts = Vec::with_capacity(drafts.len());
    let mut truth = GroundTruth::default();
    for (i, draft) in drafts.iter().enumerate() {
        let post_id = i as u64 + 1;
        let date = date_of_timestamp(draft.timestamp);
        // On a cutoff date the site has already switched: the new regime's
        // slice applies.
        let slice = *forum
            .regimes
            .slices_for(date)?
            .last()
            .expect("regime lookup returns at least one slice");
        let username = username_for(draft.topic, draft.address, &scheme.at_slice(slice))?;
        posts.push(Post {
            post_id,
            topic: draft.topic,
            username,
            timestamp: draft.timestamp,
        });
        truth.insert(post_id, draft.address);
    }
    Ok((posts, truth))
}

fn sample_fresh_address(
    rng: &mut ChaCha8Rng,
    scheme: &SchemeConfig,
    bogons: &BogonList,
    used: &mut HashSet<Address>,
) -> Result<Address> {
    let space = scheme.space_size();
    for _ in 0..100_000 {
        let offset = rng.random_range(0..space) as u32;
        let addr = scheme.embed(offset);
        if bogons.contains(addr) || used.contains(&addr) {
            continue;
        }
        used.insert(addr);
        return Ok(addr);
    }
    Err(Error::config(
        "address pool exhausted: bogon list covers too much of the configured space",
    ))
}
