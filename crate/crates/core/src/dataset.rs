//! Dense-id sparse containers shared by every stage of the pipeline.
//!
//! Users, items and tags are addressed by 0-based `usize` indices that are
//! contiguous per entity class. External string labels live only in
//! [`Dataset`]; everything downstream works on indices.

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};

/// Sparse matrix stored row-major (by user) with an inverted column index.
///
/// Within a row, columns are strictly ascending. The column index lists the
/// rows of each column in ascending order together with the entry position in
/// the row-major arrays.
#[derive(Debug, Clone, PartialEq)]
struct Csr<V> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<V>,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_entries: Vec<usize>,
}

impl<V: Copy> Csr<V> {
    /// `entries` must already be unique per (row, col).
    fn from_map(n_rows: usize, n_cols: usize, entries: &BTreeMap<(usize, usize), V>) -> Self {
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_counts = vec![0usize; n_cols + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        for (&(r, c), &v) in entries {
            row_ptr[r + 1] += 1;
            col_counts[c + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        for c in 0..n_cols {
            col_counts[c + 1] += col_counts[c];
        }
        let col_ptr = col_counts.clone();
        let mut fill = col_counts;
        let mut col_rows = vec![0usize; entries.len()];
        let mut col_entries = vec![0usize; entries.len()];
        // BTreeMap iteration is row-major, so each column's rows come out ascending.
        for (idx, &(r, c)) in entries.keys().enumerate() {
            let slot = fill[c];
            col_rows[slot] = r;
            col_entries[slot] = idx;
            fill[c] += 1;
        }
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            cols,
            vals,
            col_ptr,
            col_rows,
            col_entries,
        }
    }

    fn nnz(&self) -> usize {
        self.cols.len()
    }

    fn row(&self, r: usize) -> (&[usize], &[V]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    fn col_rows(&self, c: usize) -> &[usize] {
        &self.col_rows[self.col_ptr[c]..self.col_ptr[c + 1]]
    }

    fn row_degree(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    fn col_degree(&self, c: usize) -> usize {
        self.col_ptr[c + 1] - self.col_ptr[c]
    }

    fn entry(&self, idx: usize) -> (usize, usize, V) {
        let r = self.row_ptr.partition_point(|&p| p <= idx) - 1;
        (r, self.cols[idx], self.vals[idx])
    }

    fn iter(&self) -> impl Iterator<Item = (usize, usize, V)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cs, vs) = self.row(r);
            cs.iter().zip(vs).map(move |(&c, &v)| (r, c, v))
        })
    }
}

/// Sparse user × item ratings.
///
/// Entries have a canonical order (user ascending, then item ascending); entry
/// positions in that order are what fold plans refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    r_max: f64,
    csr: Csr<f64>,
}

impl RatingTable {
    /// Builds a table from `(user, item, rating)` triples.
    ///
    /// A repeated `(user, item)` pair keeps its last rating; the number of
    /// overwritten rows is logged as a warning.
    pub fn from_entries<I>(user_count: usize, item_count: usize, r_max: f64, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::input(format!("r_max must be positive and finite, got {r_max}")));
        }
        let mut map = BTreeMap::new();
        let mut duplicates = 0usize;
        for (u, i, r) in entries {
            if u >= user_count {
                return Err(Error::input(format!("user {u} out of range (user_count={user_count})")));
            }
            if i >= item_count {
                return Err(Error::input(format!("item {i} out of range (item_count={item_count})")));
            }
            if !(r > 0.0 && r <= r_max) {
                return Err(Error::input(format!(
                    "rating {r} for (user {u}, item {i}) outside (0, {r_max}]"
                )));
            }
            if map.insert((u, i), r).is_some() {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            warn!("{duplicates} duplicate (user, item) ratings; kept the last occurrence of each");
        }
        Ok(RatingTable {
            r_max,
            csr: Csr::from_map(user_count, item_count, &map),
        })
    }

    /// An empty table with the given dimensions.
    pub fn empty(user_count: usize, item_count: usize, r_max: f64) -> Result<Self> {
        Self::from_entries(user_count, item_count, r_max, std::iter::empty())
    }

    pub fn user_count(&self) -> usize {
        self.csr.n_rows
    }

    pub fn item_count(&self) -> usize {
        self.csr.n_cols
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Number of stored ratings.
    pub fn len(&self) -> usize {
        self.csr.nnz()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Items rated by `u` (ascending) and the matching ratings.
    pub fn user_ratings(&self, u: usize) -> (&[usize], &[f64]) {
        self.csr.row(u)
    }

    /// Users who rated item `i`, ascending.
    pub fn item_users(&self, i: usize) -> &[usize] {
        self.csr.col_rows(i)
    }

    /// Number of distinct items rated by `u`.
    pub fn user_degree(&self, u: usize) -> usize {
        self.csr.row_degree(u)
    }

    /// Number of distinct users who rated `i`.
    pub fn item_degree(&self, i: usize) -> usize {
        self.csr.col_degree(i)
    }

    /// The entry at canonical position `idx`.
    pub fn entry(&self, idx: usize) -> (usize, usize, f64) {
        self.csr.entry(idx)
    }

    /// All `(user, item, rating)` triples in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.csr.iter()
    }

    /// Mean of all ratings, or `None` for an empty table.
    pub fn mean(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else {
            Some(self.csr.vals.iter().sum::<f64>() / self.len() as f64)
        }
    }

    /// A table with the same dimensions holding only the entries at the given
    /// canonical positions.
    pub fn select(&self, positions: &[usize]) -> RatingTable {
        let map: BTreeMap<_, _> = positions
            .iter()
            .map(|&idx| {
                let (u, i, r) = self.entry(idx);
                ((u, i), r)
            })
            .collect();
        RatingTable {
            r_max: self.r_max,
            csr: Csr::from_map(self.user_count(), self.item_count(), &map),
        }
    }
}

/// Sparse user × tag assignment counts (`tf(u, t)`).
#[derive(Debug, Clone, PartialEq)]
pub struct TagTable {
    csr: Csr<u32>,
}

impl TagTable {
    /// Builds a table from `(user, tag, count)` triples. Repeated pairs are
    /// summed; zero counts are rejected.
    pub fn from_counts<I>(user_count: usize, tag_count: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, u32)>,
    {
        let mut map: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for (u, t, c) in entries {
            if u >= user_count {
                return Err(Error::input(format!("user {u} out of range (user_count={user_count})")));
            }
            if t >= tag_count {
                return Err(Error::input(format!("tag {t} out of range (tag_count={tag_count})")));
            }
            if c == 0 {
                return Err(Error::input(format!("zero tag count for (user {u}, tag {t})")));
            }
            let slot = map.entry((u, t)).or_insert(0);
            *slot = slot
                .checked_add(c)
                .ok_or_else(|| Error::input(format!("tag count overflow for (user {u}, tag {t})")))?;
        }
        Ok(TagTable {
            csr: Csr::from_map(user_count, tag_count, &map),
        })
    }

    pub fn empty(user_count: usize) -> Self {
        TagTable {
            csr: Csr::from_map(user_count, 0, &BTreeMap::new()),
        }
    }

    pub fn user_count(&self) -> usize {
        self.csr.n_rows
    }

    pub fn tag_count(&self) -> usize {
        self.csr.n_cols
    }

    /// Number of distinct (user, tag) pairs.
    pub fn len(&self) -> usize {
        self.csr.nnz()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tags used by `u` (ascending) and the matching counts.
    pub fn user_tags(&self, u: usize) -> (&[usize], &[u32]) {
        self.csr.row(u)
    }

    /// Users who used tag `t`, ascending.
    pub fn tag_users(&self, t: usize) -> &[usize] {
        self.csr.col_rows(t)
    }

    /// Number of distinct tags used by `u`.
    pub fn user_degree(&self, u: usize) -> usize {
        self.csr.row_degree(u)
    }

    /// Number of distinct users who used `t`.
    pub fn tag_degree(&self, t: usize) -> usize {
        self.csr.col_degree(t)
    }

    /// `tf(u, t)`, zero when absent.
    pub fn count(&self, u: usize, t: usize) -> u32 {
        let (tags, counts) = self.user_tags(u);
        tags.binary_search(&t).map(|p| counts[p]).unwrap_or(0)
    }

    /// Total number of tag assignments made by `u`.
    pub fn assignments(&self, u: usize) -> u64 {
        self.user_tags(u).1.iter().map(|&c| u64::from(c)).sum()
    }

    /// All `(user, tag, count)` triples, user-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.csr.iter()
    }
}

/// Ratings plus tagging side information over a shared user universe.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ratings: RatingTable,
    pub tags: TagTable,
    pub user_labels: Vec<String>,
    pub item_labels: Vec<String>,
    pub tag_labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        ratings: RatingTable,
        tags: TagTable,
        user_labels: Vec<String>,
        item_labels: Vec<String>,
        tag_labels: Vec<String>,
    ) -> Result<Self> {
        if ratings.user_count() != tags.user_count() {
            return Err(Error::input(format!(
                "rating table has {} users but tag table has {}",
                ratings.user_count(),
                tags.user_count()
            )));
        }
        let checks = [
            ("user", user_labels.len(), ratings.user_count()),
            ("item", item_labels.len(), ratings.item_count()),
            ("tag", tag_labels.len(), tags.tag_count()),
        ];
        for (what, labels, count) in checks {
            if labels != count {
                return Err(Error::input(format!("{labels} {what} labels for {count} {what}s")));
            }
        }
        Ok(Dataset {
            ratings,
            tags,
            user_labels,
            item_labels,
            tag_labels,
        })
    }

    /// Wraps tables whose labels are simply their dense ids.
    pub fn unlabeled(ratings: RatingTable, tags: TagTable) -> Result<Self> {
        let names = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let (users, items, tag_names) = (
            names(ratings.user_count()),
            names(ratings.item_count()),
            names(tags.tag_count()),
        );
        Self::new(ratings, tags, users, items, tag_names)
    }

    pub fn user_count(&self) -> usize {
        self.ratings.user_count()
    }

    pub fn item_count(&self) -> usize {
        self.ratings.item_count()
    }

    pub fn tag_count(&self) -> usize {
        self.tags.tag_count()
    }

    pub fn degree_user_items(&self, u: usize) -> Result<usize> {
        check_id("user", u, self.user_count())?;
        Ok(self.ratings.user_degree(u))
    }

    pub fn degree_user_tags(&self, u: usize) -> Result<usize> {
        check_id("user", u, self.user_count())?;
        Ok(self.tags.user_degree(u))
    }

    pub fn degree_item(&self, i: usize) -> Result<usize> {
        check_id("item", i, self.item_count())?;
        Ok(self.ratings.item_degree(i))
    }

    pub fn degree_tag(&self, t: usize) -> Result<usize> {
        check_id("tag", t, self.tag_count())?;
        Ok(self.tags.tag_degree(t))
    }

    /// Fraction of the user × item matrix that is observed.
    pub fn density(&self) -> f64 {
        let cells = self.user_count() as f64 * self.item_count() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.ratings.len() as f64 / cells
        }
    }
}

fn check_id(what: &str, id: usize, count: usize) -> Result<()> {
    if id < count {
        Ok(())
    } else {
        Err(Error::input(format!("{what} id {id} out of range ({what}_count={count})")))
    }
}
