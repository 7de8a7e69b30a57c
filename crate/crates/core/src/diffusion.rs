//! Resource-allocation similarity on the user–item–tag tripartite graph.
//!
//! Each layer (user–item, user–tag) is a bipartite graph. A unit of resource
//! placed on user `v` spreads evenly to `v`'s neighbors and then evenly back to
//! their users; the amount that lands on `u` is the similarity of `u` to `v`.
//! The weighted variant multiplies the two endpoint edge weights inside the
//! sum. Similarity is asymmetric because it is normalized by the degree of the
//! source user `v`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{RatingTable, TagTable};
use crate::error::{Error, Result};
use crate::weighting::{Bm25Params, Bm25Scorer, UserRatingStats};

/// Adjacency with per-edge weights, stored both by user and by the other side.
#[derive(Debug, Clone, PartialEq)]
struct Layer {
    user_ptr: Vec<usize>,
    user_nbrs: Vec<usize>,
    user_w: Vec<f64>,
    node_ptr: Vec<usize>,
    node_users: Vec<usize>,
    node_w: Vec<f64>,
}

impl Layer {
    /// `rows[u]` lists `(node, weight)` with nodes strictly ascending.
    fn from_rows(rows: Vec<Vec<(usize, f64)>>, node_count: usize) -> Self {
        let mut user_ptr = vec![0];
        let mut user_nbrs = Vec::new();
        let mut user_w = Vec::new();
        let mut by_node: Vec<Vec<(usize, f64)>> = vec![Vec::new(); node_count];
        for (u, row) in rows.into_iter().enumerate() {
            for (n, w) in row {
                user_nbrs.push(n);
                user_w.push(w);
                by_node[n].push((u, w));
            }
            user_ptr.push(user_nbrs.len());
        }
        let mut node_ptr = vec![0];
        let mut node_users = Vec::new();
        let mut node_w = Vec::new();
        for col in by_node {
            for (u, w) in col {
                node_users.push(u);
                node_w.push(w);
            }
            node_ptr.push(node_users.len());
        }
        Layer {
            user_ptr,
            user_nbrs,
            user_w,
            node_ptr,
            node_users,
            node_w,
        }
    }

    fn user_edges(&self, u: usize) -> (&[usize], &[f64]) {
        let s = self.user_ptr[u]..self.user_ptr[u + 1];
        (&self.user_nbrs[s.clone()], &self.user_w[s])
    }

    fn node_edges(&self, n: usize) -> (&[usize], &[f64]) {
        let s = self.node_ptr[n]..self.node_ptr[n + 1];
        (&self.node_users[s.clone()], &self.node_w[s])
    }

    fn user_degree(&self, u: usize) -> usize {
        self.user_ptr[u + 1] - self.user_ptr[u]
    }

    fn node_degree(&self, n: usize) -> usize {
        self.node_ptr[n + 1] - self.node_ptr[n]
    }

    fn node_count(&self) -> usize {
        self.node_ptr.len() - 1
    }

    /// Similarity of `u` to `v` by merge-joining their sorted edge lists.
    fn pair(&self, u: usize, v: usize, weighted: bool) -> f64 {
        let kv = self.user_degree(v);
        if kv == 0 {
            return 0.0;
        }
        let (un, uw) = self.user_edges(u);
        let (vn, vw) = self.user_edges(v);
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < un.len() && b < vn.len() {
            match un[a].cmp(&vn[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    let prod = if weighted { uw[a] * vw[b] } else { 1.0 };
                    acc += prod / self.node_degree(un[a]) as f64;
                    a += 1;
                    b += 1;
                }
            }
        }
        acc / kv as f64
    }

    /// Adds `u`'s outgoing contributions into `acc` (indexed by `v`, before the
    /// `1/k(v)` normalization) and records every reached user in `touched`.
    fn spread_from(&self, u: usize, weighted: bool, acc: &mut [f64], seen: &mut [bool], touched: &mut Vec<usize>) {
        let (nodes, uw) = self.user_edges(u);
        for (&n, &wu) in nodes.iter().zip(uw) {
            let kn = self.node_degree(n) as f64;
            let (users, ws) = self.node_edges(n);
            for (&v, &wv) in users.iter().zip(ws) {
                let prod = if weighted { wu * wv } else { 1.0 };
                acc[v] += prod / kn;
                if !seen[v] {
                    seen[v] = true;
                    touched.push(v);
                }
            }
        }
    }
}

/// User–item and user–tag layers with materialized edge weights.
///
/// User–item edges carry the z-scored train rating; user–tag edges carry the
/// BM25 score of the (user, tag) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTripartiteGraph {
    items: Layer,
    tags: Layer,
}

impl WeightedTripartiteGraph {
    pub fn build(train: &RatingTable, tags: &TagTable, stats: &UserRatingStats, bm25: Bm25Params) -> Result<Self> {
        if train.user_count() != tags.user_count() {
            return Err(Error::input("rating and tag tables disagree on user count"));
        }
        let n = train.user_count();
        let mut ui = Vec::with_capacity(n);
        for u in 0..n {
            let (items, ratings) = train.user_ratings(u);
            let row = items
                .iter()
                .zip(ratings)
                .map(|(&i, &r)| Ok((i, stats.zscore(u, r)?)))
                .collect::<Result<Vec<_>>>()?;
            ui.push(row);
        }
        let scorer = Bm25Scorer::new(tags, bm25)?;
        let mut ut = Vec::with_capacity(n);
        for u in 0..n {
            let (ts, _) = tags.user_tags(u);
            let row = ts.iter().map(|&t| Ok((t, scorer.score(u, t)?))).collect::<Result<Vec<_>>>()?;
            ut.push(row);
        }
        Ok(WeightedTripartiteGraph {
            items: Layer::from_rows(ui, train.item_count()),
            tags: Layer::from_rows(ut, tags.tag_count()),
        })
    }

    /// Graph with every edge weight set to 1.
    pub fn unweighted(train: &RatingTable, tags: &TagTable) -> Result<Self> {
        if train.user_count() != tags.user_count() {
            return Err(Error::input("rating and tag tables disagree on user count"));
        }
        let ui = (0..train.user_count())
            .map(|u| train.user_ratings(u).0.iter().map(|&i| (i, 1.0)).collect())
            .collect();
        let ut = (0..tags.user_count())
            .map(|u| tags.user_tags(u).0.iter().map(|&t| (t, 1.0)).collect())
            .collect();
        Ok(WeightedTripartiteGraph {
            items: Layer::from_rows(ui, train.item_count()),
            tags: Layer::from_rows(ut, tags.tag_count()),
        })
    }

    pub fn user_count(&self) -> usize {
        self.items.user_ptr.len() - 1
    }

    pub fn item_count(&self) -> usize {
        self.items.node_count()
    }

    pub fn tag_count(&self) -> usize {
        self.tags.node_count()
    }

    /// `k(u)`: items rated by `u`.
    pub fn user_item_degree(&self, u: usize) -> usize {
        self.items.user_degree(u)
    }

    /// `k'(u)`: distinct tags used by `u`.
    pub fn user_tag_degree(&self, u: usize) -> usize {
        self.tags.user_degree(u)
    }

    /// `k(i)`.
    pub fn item_degree(&self, i: usize) -> usize {
        self.items.node_degree(i)
    }

    /// `k'(t)`.
    pub fn tag_degree(&self, t: usize) -> usize {
        self.tags.node_degree(t)
    }

    /// `(item, weight)` edges of `u`, items ascending.
    pub fn item_edges(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (n, w) = self.items.user_edges(u);
        n.iter().copied().zip(w.iter().copied())
    }

    /// `(tag, weight)` edges of `u`, tags ascending.
    pub fn tag_edges(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (n, w) = self.tags.user_edges(u);
        n.iter().copied().zip(w.iter().copied())
    }

    pub fn udiff_rating(&self, u: usize, v: usize) -> f64 {
        self.items.pair(u, v, false)
    }

    pub fn udiff_tag(&self, u: usize, v: usize) -> f64 {
        self.tags.pair(u, v, false)
    }

    pub fn wudiff_rating(&self, u: usize, v: usize) -> f64 {
        self.items.pair(u, v, true)
    }

    pub fn wudiff_tag(&self, u: usize, v: usize) -> f64 {
        self.tags.pair(u, v, true)
    }

    /// `lambda * ws_uv + (1 - lambda) * ws'_uv`.
    pub fn combined_similarity(&self, u: usize, v: usize, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        Ok(mix(lambda, self.wudiff_rating(u, v), self.wudiff_tag(u, v)))
    }

    /// Top-`k` users by combined weighted similarity to each user.
    ///
    /// Only users sharing at least one item or tag with `u` are candidates;
    /// everyone else has similarity exactly zero.
    pub fn top_k_neighbors(&self, cfg: &NeighborConfig) -> Result<NeighborSets> {
        cfg.validate()?;
        let n = self.user_count();
        let lists = (0..n)
            .into_par_iter()
            .map_init(
                || Scratch::new(n),
                |scratch, u| self.neighbors_of(u, cfg, scratch),
            )
            .collect();
        Ok(NeighborSets { lists })
    }

    fn neighbors_of(&self, u: usize, cfg: &NeighborConfig, s: &mut Scratch) -> Vec<(usize, f64)> {
        self.items.spread_from(u, true, &mut s.rating, &mut s.seen, &mut s.touched);
        self.tags.spread_from(u, true, &mut s.tag, &mut s.seen, &mut s.touched);
        let mut out = Vec::with_capacity(s.touched.len());
        for &v in &s.touched {
            if v != u {
                let ws = normalize(s.rating[v], self.items.user_degree(v));
                let wt = normalize(s.tag[v], self.tags.user_degree(v));
                let mut sim = mix(cfg.lambda, ws, wt);
                if cfg.clamp_nonneg {
                    sim = sim.max(0.0);
                }
                out.push((v, sim));
            }
            s.rating[v] = 0.0;
            s.tag[v] = 0.0;
            s.seen[v] = false;
        }
        s.touched.clear();
        rank(&mut out);
        out.truncate(cfg.k_neighbors);
        out
    }
}

struct Scratch {
    rating: Vec<f64>,
    tag: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            rating: vec![0.0; n],
            tag: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }
}

fn normalize(acc: f64, degree: usize) -> f64 {
    if degree == 0 {
        0.0
    } else {
        acc / degree as f64
    }
}

fn mix(lambda: f64, rating: f64, tag: f64) -> f64 {
    lambda * rating + (1.0 - lambda) * tag
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::input(format!("lambda must be in [0, 1], got {lambda}")))
    }
}

/// Sorts by similarity descending, ties by user id ascending.
pub fn rank(list: &mut [(usize, f64)]) {
    list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborConfig {
    /// Weight of the rating layer; `1 - lambda` goes to the tag layer.
    pub lambda: f64,
    pub k_neighbors: usize,
    /// Replace negative similarities by zero.
    pub clamp_nonneg: bool,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig {
            lambda: 0.5,
            k_neighbors: 20,
            clamp_nonneg: false,
        }
    }
}

impl NeighborConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.k_neighbors == 0 {
            return Err(Error::input("k_neighbors must be at least 1"));
        }
        Ok(())
    }
}

/// Graph weighting plus neighbor selection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiffusionConfig {
    pub neighbors: NeighborConfig,
    pub bm25: Bm25Params,
}

/// Computes the weighted graph of a train split and its neighbor sets.
pub fn neighbors_for(train: &RatingTable, tags: &TagTable, cfg: &DiffusionConfig) -> Result<NeighborSets> {
    let stats = UserRatingStats::from_ratings(train);
    let g = WeightedTripartiteGraph::build(train, tags, &stats, cfg.bm25)?;
    g.top_k_neighbors(&cfg.neighbors)
}

/// Per-user ranked lists of `(neighbor, similarity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets {
    lists: Vec<Vec<(usize, f64)>>,
}

impl NeighborSets {
    /// No user has neighbors.
    pub fn empty(user_count: usize) -> Self {
        NeighborSets {
            lists: vec![Vec::new(); user_count],
        }
    }

    /// Wraps explicit lists, ranking each one. Rejects self-loops, repeated or
    /// out-of-range neighbors and non-finite similarities.
    pub fn from_lists(mut lists: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = lists.len();
        for (u, list) in lists.iter_mut().enumerate() {
            for &(v, s) in list.iter() {
                if v == u || v >= n {
                    return Err(Error::input(format!("invalid neighbor {v} for user {u}")));
                }
                if !s.is_finite() {
                    return Err(Error::input(format!("non-finite similarity for ({u}, {v})")));
                }
            }
            rank(list);
            let mut ids: Vec<usize> = list.iter().map(|e| e.0).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::input(format!("repeated neighbor for user {u}")));
            }
        }
        Ok(NeighborSets { lists })
    }

    pub fn user_count(&self) -> usize {
        self.lists.len()
    }

    /// `S(u)` as `(v, ws*_uv)`, best first.
    pub fn of(&self, u: usize) -> &[(usize, f64)] {
        self.lists.get(u).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// `u v sim` rows sorted by (u, rank), similarity to 12 significant digits.
    pub fn write_tsv(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (u, list) in self.lists.iter().enumerate() {
            for &(v, s) in list {
                writeln!(w, "{u}\t{v}\t{s:.11e}")?;
            }
        }
        Ok(())
    }
}
