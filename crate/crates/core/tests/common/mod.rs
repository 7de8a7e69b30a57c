//! Independent reference implementations used by the integration tests.
//!
//! The similarity oracles work on dense matrices built straight from the raw
//! entries, without touching the library's graph or weighting code, so a
//! disagreement points at one side or the other rather than at shared code.
//! The gradient helpers compare the library's step directions with finite
//! differences of its own objective.

#![allow(dead_code)]

use rand::Rng;
use wudiff::diffusion::NeighborSets;
use wudiff::mf::{logistic, logistic_deriv, objective, step_directions};
use wudiff::{Dataset, FactorModel, RatingTable, TagTable, TrainConfig};

/// Dense copy of a dataset: `rating[u][i]` and `tag[u][t]` (0 = absent).
pub struct Dense {
    pub rating: Vec<Vec<Option<f64>>>,
    pub tag: Vec<Vec<u32>>,
}

impl Dense {
    pub fn of(ratings: &RatingTable, tags: &TagTable) -> Self {
        let mut rating = vec![vec![None; ratings.item_count()]; ratings.user_count()];
        for (u, i, r) in ratings.iter() {
            rating[u][i] = Some(r);
        }
        let mut tag = vec![vec![0; tags.tag_count()]; tags.user_count()];
        for (u, t, c) in tags.iter() {
            tag[u][t] = c;
        }
        Dense { rating, tag }
    }

    pub fn users(&self) -> usize {
        self.rating.len()
    }
}

/// z-score weights, evaluated in the same order of operations as a
/// straightforward two-pass mean/variance.
pub fn zscore_weights(d: &Dense) -> Vec<Vec<f64>> {
    d.rating
        .iter()
        .map(|row| {
            let rs: Vec<f64> = row.iter().flatten().copied().collect();
            let mut out = vec![0.0; row.len()];
            if rs.is_empty() {
                return out;
            }
            let n = rs.len() as f64;
            let mean = rs.iter().sum::<f64>() / n;
            let sd = (rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
            for (i, r) in row.iter().enumerate() {
                if let Some(r) = r {
                    out[i] = if sd < 1e-9 { 1.0 } else { (r - mean) / sd };
                }
            }
            out
        })
        .collect()
}

pub fn bm25_weights(d: &Dense, k1: f64, b: f64) -> Vec<Vec<f64>> {
    let profiles: Vec<u64> = d.tag.iter().map(|row| row.iter().map(|&c| u64::from(c)).sum()).collect();
    let m = profiles.iter().filter(|&&p| p > 0).count();
    let total: u64 = profiles.iter().sum();
    let avg = if m == 0 { 0.0 } else { total as f64 / m as f64 };
    let tags = d.tag.first().map_or(0, Vec::len);
    let n_t: Vec<usize> = (0..tags).map(|t| d.tag.iter().filter(|row| row[t] > 0).count()).collect();
    d.tag
        .iter()
        .enumerate()
        .map(|(u, row)| {
            row.iter()
                .enumerate()
                .map(|(t, &c)| {
                    if c == 0 {
                        return 0.0;
                    }
                    let tf = f64::from(c);
                    let idf = (m as f64 / n_t[t] as f64).ln();
                    let norm = k1 * (1.0 - b + b * profiles[u] as f64 / avg);
                    idf * tf * (k1 + 1.0) / (tf + norm)
                })
                .collect()
        })
        .collect()
}

/// `s[u][v] = (1/k(v)) Σ_n present(u,n) present(v,n) w[u][n] w[v][n] / k(n)`.
pub fn spread(present: &[Vec<bool>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = present.len();
    let nodes = present.first().map_or(0, Vec::len);
    let node_deg: Vec<usize> = (0..nodes).map(|j| present.iter().filter(|row| row[j]).count()).collect();
    let user_deg: Vec<usize> = present.iter().map(|row| row.iter().filter(|&&x| x).count()).collect();
    let mut s = vec![vec![0.0; n]; n];
    for u in 0..n {
        for v in 0..n {
            if user_deg[v] == 0 {
                continue;
            }
            let mut acc = 0.0;
            for j in 0..nodes {
                if present[u][j] && present[v][j] {
                    acc += w[u][j] * w[v][j] / node_deg[j] as f64;
                }
            }
            s[u][v] = acc / user_deg[v] as f64;
        }
    }
    s
}

pub fn ones(present: &[Vec<bool>]) -> Vec<Vec<f64>> {
    present.iter().map(|row| vec![1.0; row.len()]).collect()
}

pub fn rating_presence(d: &Dense) -> Vec<Vec<bool>> {
    d.rating.iter().map(|row| row.iter().map(Option::is_some).collect()).collect()
}

pub fn tag_presence(d: &Dense) -> Vec<Vec<bool>> {
    d.tag.iter().map(|row| row.iter().map(|&c| c > 0).collect()).collect()
}

/// Weighted combined similarity for every ordered pair.
pub fn combined(d: &Dense, lambda: f64) -> Vec<Vec<f64>> {
    let rp = rating_presence(d);
    let tp = tag_presence(d);
    let ws = spread(&rp, &zscore_weights(d));
    let wt = spread(&tp, &bm25_weights(d, 2.0, 0.75));
    (0..d.users())
        .map(|u| (0..d.users()).map(|v| lambda * ws[u][v] + (1.0 - lambda) * wt[u][v]).collect())
        .collect()
}

/// Exhaustive top-k: every other user sharing an item or a tag is a
/// candidate, ordered by similarity descending then id ascending.
pub fn brute_top_k(d: &Dense, lambda: f64, k: usize, clamp_nonneg: bool) -> Vec<Vec<(usize, f64)>> {
    let sim = combined(d, lambda);
    let rp = rating_presence(d);
    let tp = tag_presence(d);
    let shares = |a: &[bool], b: &[bool]| a.iter().zip(b).any(|(x, y)| *x && *y);
    (0..d.users())
        .map(|u| {
            let mut cands: Vec<(usize, f64)> = (0..d.users())
                .filter(|&v| v != u && (shares(&rp[u], &rp[v]) || shares(&tp[u], &tp[v])))
                .map(|v| (v, if clamp_nonneg { sim[u][v].max(0.0) } else { sim[u][v] }))
                .collect();
            // Selection by repeated maximum rather than a sort.
            let mut out = Vec::new();
            while out.len() < k && !cands.is_empty() {
                let mut best = 0;
                for j in 1..cands.len() {
                    let (bv, bs) = cands[best];
                    let (cv, cs) = cands[j];
                    if cs > bs || (cs == bs && cv < bv) {
                        best = j;
                    }
                }
                out.push(cands.remove(best));
            }
            out
        })
        .collect()
}

/// Random tripartite instance. Integer ratings are mixed in so that some
/// users have constant ratings and some similarities tie.
pub fn random_dataset(rng: &mut impl Rng, max_users: usize, max_items: usize, max_tags: usize) -> Dataset {
    let users = rng.gen_range(2..=max_users);
    let items = rng.gen_range(1..=max_items);
    let tags = rng.gen_range(1..=max_tags);
    let p_rate = rng.gen_range(0.05..0.5);
    let p_tag = rng.gen_range(0.05..0.5);
    let integer = rng.gen_bool(0.5);
    let mut ratings = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.gen_bool(p_rate) {
                let r = if integer {
                    f64::from(rng.gen_range(1..=5))
                } else {
                    rng.gen_range(0.5..=5.0)
                };
                ratings.push((u, i, r));
            }
        }
    }
    let mut assignments = Vec::new();
    for u in 0..users {
        for t in 0..tags {
            if rng.gen_bool(p_tag) {
                assignments.push((u, t, rng.gen_range(1..=3)));
            }
        }
    }
    Dataset::unlabeled(
        RatingTable::from_entries(users, items, 5.0, ratings).unwrap(),
        TagTable::from_counts(users, tags, assignments).unwrap(),
    )
    .unwrap()
}

const H: f64 = 1e-5;

pub struct GradInstance {
    pub model: FactorModel,
    pub neighbors: NeighborSets,
    pub cfg: TrainConfig,
    pub rating: (usize, usize, f64),
}

pub fn random_grad_instance(rng: &mut impl Rng) -> GradInstance {
    let users = rng.gen_range(2..=5);
    let items = rng.gen_range(1..=5);
    let f = rng.gen_range(1..=5);
    let p = (0..users * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q = (0..items * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let model = FactorModel::from_parts(f, 5.0, 3.0, p, q).unwrap();
    let mut lists = vec![Vec::new(); users];
    for u in 0..users {
        for v in u + 1..users {
            if rng.gen_bool(0.6) {
                let w = rng.gen_range(-0.5..1.0);
                lists[u].push((v, w));
                lists[v].push((u, w));
            }
        }
    }
    let cfg = TrainConfig {
        factors: f,
        alpha: rng.gen_range(0.0..2.0),
        lambda_u: rng.gen_range(0.0..1.0),
        lambda_i: rng.gen_range(0.0..1.0),
        ..TrainConfig::default()
    };
    let rating = (rng.gen_range(0..users), rng.gen_range(0..items), rng.gen_range(0.5..=5.0));
    GradInstance {
        model,
        neighbors: NeighborSets::from_lists(lists).unwrap(),
        cfg,
        rating,
    }
}

/// Central differences of `loss` with respect to `p_u` (or `q_i`).
pub fn numeric_grad(m: &FactorModel, user: Option<usize>, item: Option<usize>, loss: impl Fn(&FactorModel) -> f64) -> Vec<f64> {
    let f = m.factors();
    (0..f)
        .map(|k| {
            let mut plus = m.clone();
            let mut minus = m.clone();
            if let Some(u) = user {
                plus.user_vec_mut(u)[k] += H;
                minus.user_vec_mut(u)[k] -= H;
            }
            if let Some(i) = item {
                plus.item_vec_mut(i)[k] += H;
                minus.item_vec_mut(i)[k] -= H;
            }
            (loss(&plus) - loss(&minus)) / (2.0 * H)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

pub fn error_term(m: &FactorModel, u: usize, i: usize, scaled: f64) -> (Vec<f64>, Vec<f64>) {
    let x: f64 = m.user_vec(u).iter().zip(m.item_vec(i)).map(|(a, b)| a * b).sum();
    let ge = logistic_deriv(x) * (scaled - logistic(x));
    (
        m.item_vec(i).iter().map(|q| ge * q).collect(),
        m.user_vec(u).iter().map(|p| ge * p).collect(),
    )
}

/// Relative errors of the step direction against finite differences:
/// `[neighbor+decay on p_u, decay on q_i, rating term on p_u, rating term on q_i]`.
pub fn gradient_errors(inst: &GradInstance) -> [f64; 4] {
    let m = &inst.model;
    let (u, i, r) = inst.rating;
    let (dp, dq) = step_directions(m, u, i, r / 5.0, &inst.neighbors, &inst.cfg);
    let (ep, eq) = error_term(m, u, i, r / 5.0);
    let reg_dp: Vec<f64> = dp.iter().zip(&ep).map(|(a, b)| a - b).collect();
    let reg_dq: Vec<f64> = dq.iter().zip(&eq).map(|(a, b)| a - b).collect();
    let no_ratings = RatingTable::empty(m.user_count(), m.item_count(), 5.0).unwrap();
    let reg_loss = |x: &FactorModel| objective(x, &no_ratings, &inst.neighbors, &inst.cfg).unwrap();
    let gp: Vec<f64> = numeric_grad(m, Some(u), None, reg_loss).iter().map(|g| -g).collect();
    let gq: Vec<f64> = numeric_grad(m, None, Some(i), reg_loss).iter().map(|g| -g).collect();

    let plain = TrainConfig {
        alpha: 0.0,
        lambda_u: 0.0,
        lambda_i: 0.0,
        ..inst.cfg
    };
    let (sp, sq) = step_directions(m, u, i, r / 5.0, &inst.neighbors, &plain);
    let one = RatingTable::from_entries(m.user_count(), m.item_count(), 5.0, [(u, i, r)]).unwrap();
    let se_loss = |x: &FactorModel| objective(x, &one, &inst.neighbors, &plain).unwrap();
    let hp: Vec<f64> = numeric_grad(m, Some(u), None, se_loss).iter().map(|g| -g / 2.0).collect();
    let hq: Vec<f64> = numeric_grad(m, None, Some(i), se_loss).iter().map(|g| -g / 2.0).collect();
    [
        relative_error(&reg_dp, &gp),
        relative_error(&reg_dq, &gq),
        relative_error(&sp, &hp),
        relative_error(&sq, &hq),
    ]
}
