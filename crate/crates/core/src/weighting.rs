//! Edge weights for the tripartite graph.
//!
//! User–item edges carry the z-score of the rating within the rater's own
//! train ratings; user–tag edges carry an Okapi BM25 score that treats each
//! user as a document and each tag as a term.

use crate::dataset::{RatingTable, TagTable};
use crate::error::{Error, Result};

/// Spread below which a user's ratings are treated as constant.
pub const STDDEV_EPSILON: f64 = 1e-9;

/// Per-user mean and population standard deviation of train ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRatingStats {
    mean: Vec<f64>,
    stddev: Vec<f64>,
    count: Vec<usize>,
}

impl UserRatingStats {
    pub fn from_ratings(train: &RatingTable) -> Self {
        let n = train.user_count();
        let mut mean = vec![0.0; n];
        let mut stddev = vec![0.0; n];
        let mut count = vec![0; n];
        for u in 0..n {
            let (_, rs) = train.user_ratings(u);
            if rs.is_empty() {
                continue;
            }
            let len = rs.len() as f64;
            let m = rs.iter().sum::<f64>() / len;
            let var = rs.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / len;
            mean[u] = m;
            stddev[u] = var.sqrt();
            count[u] = rs.len();
        }
        UserRatingStats { mean, stddev, count }
    }

    pub fn mean(&self, u: usize) -> f64 {
        self.mean[u]
    }

    pub fn stddev(&self, u: usize) -> f64 {
        self.stddev[u]
    }

    pub fn rating_count(&self, u: usize) -> usize {
        self.count[u]
    }

    /// `(r - mean_u) / stddev_u`, or 1.0 when the user's spread is below
    /// [`STDDEV_EPSILON`].
    pub fn zscore(&self, u: usize, r: f64) -> Result<f64> {
        if u >= self.count.len() || self.count[u] == 0 {
            return Err(Error::input(format!("user {u} has no train ratings")));
        }
        let sd = self.stddev[u];
        if sd < STDDEV_EPSILON {
            Ok(1.0)
        } else {
            Ok((r - self.mean[u]) / sd)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 2.0, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::input(format!("bm25 k1 must be positive, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::input(format!("bm25 b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Precomputed collection statistics for scoring (user, tag) pairs.
///
/// `M` counts users with at least one tag assignment, `|u|` is the user's total
/// number of assignments and `avg(U)` is the mean of `|u|` over those users.
#[derive(Debug, Clone)]
pub struct Bm25Scorer<'a> {
    tags: &'a TagTable,
    params: Bm25Params,
    tagging_users: usize,
    avg_profile: f64,
}

impl<'a> Bm25Scorer<'a> {
    pub fn new(tags: &'a TagTable, params: Bm25Params) -> Result<Self> {
        params.validate()?;
        let (tagging_users, total) = (0..tags.user_count())
            .map(|u| tags.assignments(u))
            .filter(|&a| a > 0)
            .fold((0usize, 0u64), |(n, s), a| (n + 1, s + a));
        let avg_profile = if tagging_users == 0 {
            0.0
        } else {
            total as f64 / tagging_users as f64
        };
        Ok(Bm25Scorer {
            tags,
            params,
            tagging_users,
            avg_profile,
        })
    }

    pub fn tagging_users(&self) -> usize {
        self.tagging_users
    }

    pub fn avg_profile(&self) -> f64 {
        self.avg_profile
    }

    /// BM25 weight `w(u, t)`; errors when `u` never used `t`.
    pub fn score(&self, u: usize, t: usize) -> Result<f64> {
        if u >= self.tags.user_count() || t >= self.tags.tag_count() {
            return Err(Error::input(format!("(user {u}, tag {t}) out of range")));
        }
        let tf = self.tags.count(u, t);
        if tf == 0 {
            return Err(Error::input(format!("user {u} never used tag {t}")));
        }
        Ok(bm25_formula(
            self.params,
            self.tagging_users as f64,
            self.tags.tag_degree(t) as f64,
            f64::from(tf),
            self.tags.assignments(u) as f64,
            self.avg_profile,
        ))
    }
}

/// `ln(M / n_t) * tf (k1 + 1) / (tf + k1 (1 - b + b |u| / avg))`.
pub fn bm25_formula(p: Bm25Params, m: f64, n_t: f64, tf: f64, profile: f64, avg_profile: f64) -> f64 {
    let idf = (m / n_t).ln();
    let norm = p.k1 * (1.0 - p.b + p.b * profile / avg_profile);
    idf * tf * (p.k1 + 1.0) / (tf + norm)
}

/// One-shot convenience wrapper around [`Bm25Scorer`].
pub fn bm25(tags: &TagTable, params: Bm25Params, u: usize, t: usize) -> Result<f64> {
    Bm25Scorer::new(tags, params)?.score(u, t)
}
