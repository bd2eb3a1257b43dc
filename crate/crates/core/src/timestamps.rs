//! Timestamp recovery for posts that only have an id: linear
//! interpolation over the auto-incrementing post id between anchor posts
//! whose exact times are known.

use crate::error::{Error, Result};
use serde::Serialize;

/// Anchor posts: (post id, exact timestamp), strictly increasing in both.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    anchors: Vec<(u64, i64)>,
}

impl AnchorSet {
    pub fn new(mut anchors: Vec<(u64, i64)>) -> Result<Self> {
        anchors.sort_unstable();
        for pair in anchors.windows(2) {
            if pair[1].0 == pair[0].0 {
                return Err(Error::usage(format!(
                    "duplicate anchor for post {}",
                    pair[0].0
                )));
            }
            if pair[1].1 < pair[0].1 {
                return Err(Error::usage(format!(
                    "anchor timestamps must be nondecreasing in post id \
                     (post {} at {}, post {} at {})",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        if anchors.is_empty() {
            return Err(Error::usage("anchor set is empty"));
        }
        Ok(AnchorSet { anchors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn contains(&self, post_id: u64) -> bool {
        self.anchors.binary_search_by_key(&post_id, |a| a.0).is_ok()
    }

    /// Timestamp for `post_id`: the anchor's own time when anchored,
    /// linear interpolation between the bracketing anchors otherwise, and
    /// linear extrapolation from the two nearest anchors outside the
    /// range. Extrapolated values are clamped to the nearest anchor's
    /// time rather than ever inverting the order.
    pub fn interpolate(&self, post_id: u64) -> i64 {
        match self.anchors.binary_search_by_key(&post_id, |a| a.0) {
            Ok(i) => self.anchors[i].1,
            Err(pos) => {
                let (lo, hi) = if pos == 0 {
                    if self.anchors.len() == 1 {
                        return self.anchors[0].1;
                    }
                    (self.anchors[0], self.anchors[1])
                } else if pos == self.anchors.len() {
                    if self.anchors.len() == 1 {
                        return self.anchors[0].1;
                    }
                    (self.anchors[pos - 2], self.anchors[pos - 1])
                } else {
                    (self.anchors[pos - 1], self.anchors[pos])
                };
                let slope = (hi.1 - lo.1) as f64 / (hi.0 - lo.0) as f64;
                let value = lo.1 as f64 + slope * (post_id as f64 - lo.0 as f64);
                let value = value.round() as i64;
                if post_id < self.anchors[0].0 {
                    value.min(self.anchors[0].1)
                } else if post_id > self.anchors[self.anchors.len() - 1].0 {
                    value.max(self.anchors[self.anchors.len() - 1].1)
                } else {
                    value
                }
            }
        }
    }

    /// The bracketing anchor pair for an unanchored post, if any.
    fn bracket(&self, post_id: u64) -> Option<((u64, i64), (u64, i64))> {
        match self.anchors.binary_search_by_key(&post_id, |a| a.0) {
            Ok(_) => None,
            Err(pos) if pos == 0 || pos == self.anchors.len() => None,
            Err(pos) => Some((self.anchors[pos - 1], self.anchors[pos])),
        }
    }
}

/// Time gaps between anchors that bracket at least one unanchored post.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GapStats {
    /// Anchor pairs with at least one unanchored post between them.
    pub gaps: u64,
    /// Unanchored posts outside the anchor range (no bracketing pair).
    pub unbracketed_posts: u64,
    pub mean_seconds: f64,
    pub p95_seconds: i64,
    pub p99_seconds: i64,
}

pub fn gap_stats(anchors: &AnchorSet, post_ids: &[u64]) -> GapStats {
    let mut qualifying: std::collections::BTreeSet<(u64, i64, i64)> =
        std::collections::BTreeSet::new();
    let mut unbracketed = 0u64;
    for &id in post_ids {
        if anchors.contains(id) {
            continue;
        }
        match anchors.bracket(id) {
            Some((lo, hi)) => {
                qualifying.insert((lo.0, lo.1, hi.1));
            }
            None => unbracketed += 1,
        }
    }
    if qualifying.is_empty() {
        return GapStats {
            unbracketed_posts: unbracketed,
            ..GapStats::default()
        };
    }
    let mut gaps: Vec<i64> = qualifying.iter().map(|&(_, lo, hi)| hi - lo).collect();
    gaps.sort_unstable();
    let nearest_rank = |q: f64| -> i64 {
        let rank = ((q * gaps.len() as f64).ceil() as usize).clamp(1, gaps.len());
        gaps[rank - 1]
    };
    GapStats {
        gaps: gaps.len() as u64,
        unbracketed_posts: unbracketed,
        mean_seconds: gaps.iter().sum::<i64>() as f64 / gaps.len() as f64,
        p95_seconds: nearest_rank(0.95),
        p99_seconds: nearest_rank(0.99),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_anchor_hits() {
        let anchors = AnchorSet::new(vec![(100, 1000), (200, 2000)]).unwrap();
        assert_eq!(anchors.interpolate(150), 1500);
        assert_eq!(anchors.interpolate(100), 1000);
        assert_eq!(anchors.interpolate(200), 2000);
        assert_eq!(anchors.interpolate(175), 1750);
    }

    #[test]
    fn extrapolation_uses_nearest_two() {
        let anchors = AnchorSet::new(vec![(100, 1000), (200, 2000), (300, 2500)]).unwrap();
        // Before the range: slope 10/post from the first two.
        assert_eq!(anchors.interpolate(50), 500);
        // After the range: slope 5/post from the last two.
        assert_eq!(anchors.interpolate(400), 3000);
    }

    #[test]
    fn single_anchor_is_constant() {
        let anchors = AnchorSet::new(vec![(10, 777)]).unwrap();
        assert_eq!(anchors.interpolate(1), 777);
        assert_eq!(anchors.interpolate(10), 777);
        assert_eq!(anchors.interpolate(999), 777);
    }

    #[test]
    fn empty_anchor_set_is_an_error() {
        assert!(AnchorSet::new(vec![]).is_err());
    }

    #[test]
    fn inverted_anchors_are_rejected() {
        assert!(AnchorSet::new(vec![(100, 2000), (200, 1000)]).is_err());
        assert!(AnchorSet::new(vec![(100, 1000), (100, 2000)]).is_err());
    }

    #[test]
    fn interpolation_is_monotone_in_post_id() {
        let anchors =
            AnchorSet::new(vec![(10, 100), (50, 900), (90, 910), (200, 50_000)]).unwrap();
        let mut prev = i64::MIN;
        for id in 0..250 {
            let t = anchors.interpolate(id);
            assert!(t >= prev, "id {id}: {t} < {prev}");
            prev = t;
        }
    }

    #[test]
    fn exact_when_process_is_affine() {
        let anchors: Vec<(u64, i64)> = (0..10).map(|i| (i * 100, 5000 + i as i64 * 700)).collect();
        let set = AnchorSet::new(anchors).unwrap();
        for id in 0..900 {
            assert_eq!(set.interpolate(id), 5000 + (id as i64 * 7));
        }
    }

    #[test]
    fn gap_stats_examples() {
        // Anchors at every post: nothing qualifies, stats degenerate to 0.
        let anchors = AnchorSet::new(vec![(1, 10), (2, 20), (3, 30)]).unwrap();
        let stats = gap_stats(&anchors, &[1, 2, 3]);
        assert_eq!(stats.gaps, 0);
        assert_eq!(stats.mean_seconds, 0.0);
        assert_eq!(stats.p95_seconds, 0);

        // Two gaps with unanchored posts, one without.
        let anchors = AnchorSet::new(vec![(1, 0), (10, 180), (20, 300), (30, 3000)]).unwrap();
        let stats = gap_stats(&anchors, &[1, 5, 6, 10, 20, 25, 40]);
        // Gap (1,10) = 180s has posts 5, 6; gap (20,30) = 2700s has 25;
        // post 40 is unbracketed; gap (10,20) holds no unanchored posts.
        assert_eq!(stats.gaps, 2);
        assert_eq!(stats.unbracketed_posts, 1);
        assert_eq!(stats.mean_seconds, (180.0 + 2700.0) / 2.0);
        assert_eq!(stats.p95_seconds, 2700);
        assert_eq!(stats.p99_seconds, 2700);
    }
}
