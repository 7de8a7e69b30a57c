//! Logistic matrix factorization trained by SGD, with an optional penalty that
//! pulls each user's latent vector toward its diffusion neighbors.
//!
//! Ratings are scaled into `(0, 1]` by dividing by the rating ceiling, and the
//! inner product `p_u · q_i` is squashed through the logistic function, so a
//! prediction is `r_max * g(p_u · q_i)`. The loss is
//!
//! ```text
//! L = Σ_(u,i) (r̃_ui − g(p_u·q_i))²
//!   + α/2 Σ_u Σ_{v∈S(u)} ws*_uv ‖p_u − p_v‖²
//!   + λ_u/2 ‖P‖² + λ_i/2 ‖Q‖²
//! ```
//!
//! and each observed rating triggers the update
//!
//! ```text
//! p_u += γ1 (g'(x) e q_i − α Σ ws*(p_u − p_v) + α Σ ws*(p_v − p_u) − λ_u p_u)
//! q_i += γ2 (g'(x) e p_u − λ_i q_i)
//! ```
//!
//! with `x = p_u·q_i` and `e = r̃_ui − g(x)`, both evaluated before either
//! vector moves. The two neighbor sums are the same quantity; they are kept as
//! a doubled coefficient unless [`TrainConfig::single_sided_reg`] is set.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RatingTable;
use crate::diffusion::NeighborSets;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Latent dimension `f`.
    pub factors: usize,
    /// Neighbor regularization strength.
    pub alpha: f64,
    pub lambda_u: f64,
    pub lambda_i: f64,
    /// Learning rate for user vectors.
    pub gamma1: f64,
    /// Learning rate for item vectors.
    pub gamma2: f64,
    pub max_epochs: usize,
    /// Consecutive non-improving validation epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Shuffle the rating order every epoch instead of visiting users in id order.
    pub shuffle: bool,
    /// Use `α` instead of `2α` as the neighbor-pull coefficient.
    pub single_sided_reg: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            factors: 20,
            alpha: 0.0,
            lambda_u: 0.01,
            lambda_i: 0.01,
            gamma1: 0.01,
            gamma2: 0.01,
            max_epochs: 200,
            patience: 1,
            seed: 0,
            shuffle: false,
            single_sided_reg: false,
        }
    }
}

impl TrainConfig {
    /// All violated constraints, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.factors == 0 {
            out.push("factors must be at least 1".to_string());
        }
        let nonneg = [("alpha", self.alpha), ("lambda_u", self.lambda_u), ("lambda_i", self.lambda_i)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        for (name, v) in [("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be a finite value > 0, got {v}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Input(problems.join("; ")))
        }
    }

    fn pull_coefficient(&self) -> f64 {
        if self.single_sided_reg {
            self.alpha
        } else {
            2.0 * self.alpha
        }
    }
}

pub fn scale_rating(r: f64, r_max: f64) -> Result<f64> {
    if !(r_max > 0.0) || !(r > 0.0 && r <= r_max) {
        return Err(Error::input(format!("rating {r} outside (0, {r_max}]")));
    }
    Ok(r / r_max)
}

pub fn unscale(x: f64, r_max: f64) -> f64 {
    x * r_max
}

/// `1 / (1 + e^-x)`, evaluated without overflow for any finite `x`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `e^-x / (1 + e^-x)² = g(x) g(-x)`.
pub fn logistic_deriv(x: f64) -> f64 {
    logistic(x) * logistic(-x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// User and item latent matrices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    factors: usize,
    user_count: usize,
    item_count: usize,
    r_max: f64,
    /// Fallback prediction for ids outside the model.
    global_mean: f64,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl FactorModel {
    /// Entries i.i.d. uniform on `[0, 1/√f)`.
    pub fn init(user_count: usize, item_count: usize, factors: usize, r_max: f64, global_mean: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed, Stream::Init, &[]);
        let hi = 1.0 / (factors as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen::<f64>() * hi).collect::<Vec<_>>();
        let p = draw(user_count * factors);
        let q = draw(item_count * factors);
        FactorModel {
            factors,
            user_count,
            item_count,
            r_max,
            global_mean,
            p,
            q,
        }
    }

    /// Builds a model from explicit matrices (`p` is `user_count × factors`).
    pub fn from_parts(factors: usize, r_max: f64, global_mean: f64, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if factors == 0 || p.len() % factors != 0 || q.len() % factors != 0 {
            return Err(Error::input("latent matrices are not multiples of the factor count"));
        }
        if !(r_max > 0.0) {
            return Err(Error::input(format!("r_max must be positive, got {r_max}")));
        }
        Ok(FactorModel {
            factors,
            user_count: p.len() / factors,
            item_count: q.len() / factors,
            r_max,
            global_mean,
            p,
            q,
        })
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn user_vec(&self, u: usize) -> &[f64] {
        &self.p[u * self.factors..(u + 1) * self.factors]
    }

    pub fn item_vec(&self, i: usize) -> &[f64] {
        &self.q[i * self.factors..(i + 1) * self.factors]
    }

    pub fn user_vec_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.p[u * self.factors..(u + 1) * self.factors]
    }

    pub fn item_vec_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.q[i * self.factors..(i + 1) * self.factors]
    }

    /// `‖P‖²` and `‖Q‖²`.
    pub fn squared_norms(&self) -> (f64, f64) {
        (dot(&self.p, &self.p), dot(&self.q, &self.q))
    }

    /// Prediction on the scaled `(0, 1)` range.
    fn predict_scaled(&self, u: usize, i: usize) -> f64 {
        logistic(dot(self.user_vec(u), self.item_vec(i)))
    }

    /// `r_max · g(p_u · q_i)`; ids outside the model get the global train mean.
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        if u >= self.user_count || i >= self.item_count {
            self.global_mean
        } else {
            unscale(self.predict_scaled(u, i), self.r_max)
        }
    }

    fn all_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite())
    }

    /// Text format: `#` comment lines, a key/value header, then rows of `P`
    /// and `Q` with 17 significant digits.
    pub fn write(&self, w: &mut impl Write, comments: &[String]) -> std::io::Result<()> {
        writeln!(w, "# factor model")?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "factors\t{}", self.factors)?;
        writeln!(w, "users\t{}", self.user_count)?;
        writeln!(w, "items\t{}", self.item_count)?;
        writeln!(w, "r_max\t{:.16e}", self.r_max)?;
        writeln!(w, "global_mean\t{:.16e}", self.global_mean)?;
        for (name, m) in [("P", &self.p), ("Q", &self.q)] {
            writeln!(w, "{name}")?;
            for row in m.chunks(self.factors) {
                let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
                writeln!(w, "{}", cells.join("\t"))?;
            }
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Self> {
        let bad = |msg: String| Error::input(format!("model file: {msg}"));
        let mut lines = r
            .lines()
            .map(|l| l.map_err(|e| bad(e.to_string())))
            .filter(|l| !matches!(l, Ok(s) if s.starts_with('#') || s.trim().is_empty()));
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))??;
            match line.split_once('\t') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(bad(format!("expected {key}, found {line:?}"))),
            }
        };
        let num = |s: String, key: &str| s.parse::<f64>().map_err(|_| bad(format!("bad {key}")));
        let int = |s: String, key: &str| s.parse::<usize>().map_err(|_| bad(format!("bad {key}")));
        let factors = int(header("factors")?, "factors")?;
        let users = int(header("users")?, "users")?;
        let items = int(header("items")?, "items")?;
        let r_max = num(header("r_max")?, "r_max")?;
        let global_mean = num(header("global_mean")?, "global_mean")?;
        let mut read_matrix = |name: &str, rows: usize| -> Result<Vec<f64>> {
            let tag = lines.next().ok_or_else(|| bad(format!("missing {name}")))??;
            if tag != name {
                return Err(bad(format!("expected {name}, found {tag:?}")));
            }
            let mut out = Vec::with_capacity(rows * factors);
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| bad(format!("{name} truncated")))??;
                let row: Vec<f64> = line
                    .split('\t')
                    .map(|c| c.parse::<f64>().map_err(|_| bad(format!("bad {name} entry {c:?}"))))
                    .collect::<Result<_>>()?;
                if row.len() != factors {
                    return Err(bad(format!("{name} row has {} entries, expected {factors}", row.len())));
                }
                out.extend(row);
            }
            Ok(out)
        };
        let p = read_matrix("P", users)?;
        let q = read_matrix("Q", items)?;
        Self::from_parts(factors, r_max, global_mean, p, q)
    }
}

/// `Σ_{v∈S(u)} ws*_uv (p_u − p_v)`.
pub fn neighbor_pull(m: &FactorModel, neighbors: &NeighborSets, u: usize) -> Vec<f64> {
    let mut acc = vec![0.0; m.factors];
    accumulate_pull(m, neighbors, u, &mut acc);
    acc
}

fn accumulate_pull(m: &FactorModel, neighbors: &NeighborSets, u: usize, acc: &mut [f64]) {
    acc.fill(0.0);
    let pu = m.user_vec(u);
    for &(v, w) in neighbors.of(u) {
        for (a, (x, y)) in acc.iter_mut().zip(pu.iter().zip(m.user_vec(v))) {
            *a += w * (x - y);
        }
    }
}

/// Step directions `(Δp_u, Δq_i)` for one scaled rating, before the learning
/// rates are applied. Both are evaluated at the current parameters.
pub fn step_directions(
    m: &FactorModel,
    u: usize,
    i: usize,
    scaled_rating: f64,
    neighbors: &NeighborSets,
    cfg: &TrainConfig,
) -> (Vec<f64>, Vec<f64>) {
    let mut dirs = StepBuffers::new(m.factors);
    dirs.compute(m, u, i, scaled_rating, neighbors, cfg);
    (dirs.dp, dirs.dq)
}

struct StepBuffers {
    dp: Vec<f64>,
    dq: Vec<f64>,
    pull: Vec<f64>,
}

impl StepBuffers {
    fn new(factors: usize) -> Self {
        StepBuffers {
            dp: vec![0.0; factors],
            dq: vec![0.0; factors],
            pull: vec![0.0; factors],
        }
    }

    fn compute(
        &mut self,
        m: &FactorModel,
        u: usize,
        i: usize,
        scaled_rating: f64,
        neighbors: &NeighborSets,
        cfg: &TrainConfig,
    ) {
        let pu = m.user_vec(u);
        let qi = m.item_vec(i);
        let x = dot(pu, qi);
        let e = scaled_rating - logistic(x);
        let ge = logistic_deriv(x) * e;
        let coef = cfg.pull_coefficient();
        if coef != 0.0 {
            accumulate_pull(m, neighbors, u, &mut self.pull);
        } else {
            self.pull.fill(0.0);
        }
        for k in 0..m.factors {
            self.dp[k] = ge * qi[k] - coef * self.pull[k] - cfg.lambda_u * pu[k];
            self.dq[k] = ge * pu[k] - cfg.lambda_i * qi[k];
        }
    }
}

/// Loss on `train` (ratings in original units; scaled internally).
pub fn objective(m: &FactorModel, train: &RatingTable, neighbors: &NeighborSets, cfg: &TrainConfig) -> Result<f64> {
    let mut sq = 0.0;
    for (u, i, r) in train.iter() {
        let e = r / m.r_max - m.predict_scaled(u, i);
        sq += e * e;
    }
    let mut reg = 0.0;
    if cfg.alpha != 0.0 {
        for u in 0..m.user_count {
            let pu = m.user_vec(u);
            for &(v, w) in neighbors.of(u) {
                let d: f64 = pu.iter().zip(m.user_vec(v)).map(|(a, b)| (a - b) * (a - b)).sum();
                reg += w * d;
            }
        }
    }
    let (np, nq) = m.squared_norms();
    let loss = sq + cfg.alpha / 2.0 * reg + cfg.lambda_u / 2.0 * np + cfg.lambda_i / 2.0 * nq;
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged {
            epoch: 0,
            step: 0,
            detail: format!("objective evaluated to {loss}"),
        })
    }
}

/// Visiting order of rating entries for one epoch: user-major canonical order,
/// or a seeded shuffle of it.
fn epoch_order(train: &RatingTable, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    if cfg.shuffle {
        order.shuffle(&mut seed::rng(cfg.seed, Stream::Shuffle, &[epoch as u64]));
    }
    order
}

/// One SGD pass over `train`. `epoch` only labels diagnostics and seeds the
/// shuffle.
pub fn sgd_epoch(
    m: &mut FactorModel,
    train: &RatingTable,
    neighbors: &NeighborSets,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<()> {
    let entries: Vec<(usize, usize, f64)> = train.iter().collect();
    let mut dirs = StepBuffers::new(m.factors);
    for (step, idx) in epoch_order(train, cfg, epoch).into_iter().enumerate() {
        let (u, i, r) = entries[idx];
        dirs.compute(m, u, i, r / m.r_max, neighbors, cfg);
        for (x, d) in m.user_vec_mut(u).iter_mut().zip(&dirs.dp) {
            *x += cfg.gamma1 * d;
        }
        for (x, d) in m.item_vec_mut(i).iter_mut().zip(&dirs.dq) {
            *x += cfg.gamma2 * d;
        }
        if !m.user_vec(u).iter().chain(m.item_vec(i)).all(|x| x.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                step,
                detail: format!("non-finite latent factor after updating user {u}, item {i}"),
            });
        }
    }
    Ok(())
}

/// RMSE of `m` on `ratings` in original units; `None` when empty.
pub fn rmse_on(m: &FactorModel, ratings: &RatingTable) -> Option<f64> {
    if ratings.is_empty() {
        return None;
    }
    let sq: f64 = ratings.iter().map(|(u, i, r)| (r - m.predict(u, i)).powi(2)).sum();
    Some((sq / ratings.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_rmse: f64,
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FactorModel,
    /// Epoch whose snapshot was returned; 0 means the initialization.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn write_history_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,train_rmse,validation_rmse")?;
        for h in &self.history {
            let val = h.validation_rmse.map(|v| format!("{v:.12e}")).unwrap_or_default();
            writeln!(w, "{},{:.12e},{:.12e},{}", h.epoch, h.train_loss, h.train_rmse, val)?;
        }
        Ok(())
    }
}

/// Trains until validation RMSE has not improved for `patience` consecutive
/// epochs or `max_epochs` is reached, and returns the best snapshot. With an
/// empty validation set every epoch runs and the final model is returned.
pub fn train(
    train: &RatingTable,
    validation: &RatingTable,
    neighbors: &NeighborSets,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.alpha != 0.0 && neighbors.user_count() != train.user_count() {
        return Err(Error::input(format!(
            "neighbor sets cover {} users, train table has {}",
            neighbors.user_count(),
            train.user_count()
        )));
    }
    let r_max = train.r_max();
    let global_mean = train.mean().unwrap_or(r_max / 2.0);
    let mut model = FactorModel::init(train.user_count(), train.item_count(), cfg.factors, r_max, global_mean, cfg.seed);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_rmse = f64::INFINITY;
    let mut stale = 0;
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        sgd_epoch(&mut model, train, neighbors, cfg, epoch)?;
        if !model.all_finite() {
            return Err(Error::Diverged {
                epoch,
                step: train.len(),
                detail: "non-finite latent factor at end of epoch".into(),
            });
        }
        let train_loss = objective(&model, train, neighbors, cfg).map_err(|_| Error::Diverged {
            epoch,
            step: train.len(),
            detail: "non-finite training loss".into(),
        })?;
        let validation_rmse = rmse_on(&model, validation);
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_rmse: rmse_on(&model, train).unwrap_or(0.0),
            validation_rmse,
        });
        match validation_rmse {
            None => {
                best_epoch = epoch;
            }
            Some(v) if v < best_rmse => {
                best_rmse = v;
                best = model.clone();
                best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= cfg.patience.max(1) {
                    break;
                }
            }
        }
    }
    let model = if validation.is_empty() { model } else { best };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

/// Plain regularized factorization: [`train`] with no neighbor penalty.
pub fn train_rmf(train_set: &RatingTable, validation: &RatingTable, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let cfg = TrainConfig { alpha: 0.0, ..*cfg };
    train(train_set, validation, &NeighborSets::empty(train_set.user_count()), &cfg)
}
