//! Metrics, cross-validated runs, parameter sweeps, paired t-tests and
//! per-user-group error breakdowns.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, RatingTable};
use crate::diffusion::{self, DiffusionConfig, NeighborSets};
use crate::error::{Error, Result};
use crate::ingest::{self, Split};
use crate::mf::{self, FactorModel, TrainConfig};
use crate::seed::{self, Stream};

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_aligned(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (t - p).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_aligned(pred, truth)?;
    let sq = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum::<f64>();
    Ok((sq / pred.len() as f64).sqrt())
}

fn check_aligned(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::input("metrics need at least one test rating"));
    }
    if pred.len() != truth.len() {
        return Err(Error::input(format!(
            "{} predictions for {} ratings",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Which model a run trains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Rmf,
    WudiffRmf(DiffusionConfig),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Rmf => "rmf",
            ModelSpec::WudiffRmf(_) => "wudiff_rmf",
        }
    }
}

/// Cross-validation protocol shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Worker threads for independent runs; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            repeats: 10,
            seed: 0,
            validation_fraction: ingest::DEFAULT_VALIDATION_FRACTION,
            jobs: 0,
        }
    }
}

impl CvConfig {
    fn runs(&self) -> Vec<(usize, usize)> {
        (0..self.repeats)
            .flat_map(|r| (0..self.folds).map(move |f| (r, f)))
            .collect()
    }

    /// Runs `job` over every (repeat, fold) pair, returning results in run order.
    fn map_runs<T, F>(&self, job: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, usize) -> Result<T> + Sync,
    {
        if self.repeats == 0 {
            return Err(Error::input("repeats must be at least 1"));
        }
        let runs = self.runs();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;
        pool.install(|| runs.par_iter().map(|&(r, f)| job(r, f)).collect())
    }
}

/// Folds for one repeat of the protocol.
pub fn repeat_plan(d: &Dataset, cv: &CvConfig, repeat: usize) -> Result<ingest::FoldPlan> {
    let seed = seed::derive(cv.seed, Stream::Folds, &[repeat as u64]);
    ingest::make_folds(d, cv.folds, seed)?.with_validation_fraction(cv.validation_fraction)
}

/// Trains `spec` on the train split of one run. Weights, graph and neighbors
/// come from that train split only.
pub fn train_on_split(
    d: &Dataset,
    split: &Split,
    spec: &ModelSpec,
    train_cfg: &TrainConfig,
    run_seed: u64,
) -> Result<mf::TrainOutcome> {
    let cfg = TrainConfig {
        seed: run_seed,
        ..*train_cfg
    };
    match spec {
        ModelSpec::Rmf => mf::train_rmf(&split.train, &split.validation, &cfg),
        ModelSpec::WudiffRmf(dc) => {
            let neighbors = if cfg.alpha == 0.0 {
                NeighborSets::empty(split.train.user_count())
            } else {
                diffusion::neighbors_for(&split.train, &d.tags, dc)?
            };
            mf::train(&split.train, &split.validation, &neighbors, &cfg)
        }
    }
}

fn run_seed(cv: &CvConfig, repeat: usize, fold: usize) -> u64 {
    seed::derive(cv.seed, Stream::Init, &[repeat as u64, fold as u64])
}

fn predictions(m: &FactorModel, test: &RatingTable) -> (Vec<f64>, Vec<f64>) {
    test.iter().map(|(u, i, r)| (m.predict(u, i), r)).unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunResult {
    pub repeat: usize,
    pub fold: usize,
    pub mae: f64,
    pub rmse: f64,
    pub best_epoch: usize,
    pub test_ratings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation across runs (0 for a single run).
    pub stddev: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stddev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Summary { mean, stddev }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub mae: Summary,
    pub rmse: Summary,
    pub runs: Vec<RunResult>,
}

impl EvalReport {
    fn from_runs(model: &str, runs: Vec<RunResult>) -> Self {
        let maes: Vec<f64> = runs.iter().map(|r| r.mae).collect();
        let rmses: Vec<f64> = runs.iter().map(|r| r.rmse).collect();
        EvalReport {
            model: model.to_string(),
            mae: Summary::of(&maes),
            rmse: Summary::of(&rmses),
            runs,
        }
    }

    pub fn rmse_per_run(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.rmse).collect()
    }

    pub fn mae_per_run(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.mae).collect()
    }

    /// `metric,mean,stddev,r<repeat>f<fold>...` with one row per metric.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let cols: Vec<String> = self.runs.iter().map(|r| format!("r{}f{}", r.repeat, r.fold)).collect();
        writeln!(w, "metric,mean,stddev,{}", cols.join(","))?;
        for (name, s, vals) in [("mae", self.mae, self.mae_per_run()), ("rmse", self.rmse, self.rmse_per_run())] {
            let cells: Vec<String> = vals.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(w, "{name},{:.12e},{:.12e},{}", s.mean, s.stddev, cells.join(","))?;
        }
        Ok(())
    }
}

/// Repeated k-fold cross-validation of one model.
pub fn run_cv(d: &Dataset, spec: &ModelSpec, train_cfg: &TrainConfig, cv: &CvConfig) -> Result<EvalReport> {
    train_cfg.validate()?;
    let plans = (0..cv.repeats).map(|r| repeat_plan(d, cv, r)).collect::<Result<Vec<_>>>()?;
    let runs = cv.map_runs(|r, f| {
        let split = ingest::split(d, &plans[r], f)?;
        let out = train_on_split(d, &split, spec, train_cfg, run_seed(cv, r, f))?;
        let (pred, truth) = predictions(&out.model, &split.test);
        Ok(RunResult {
            repeat: r,
            fold: f,
            mae: mae(&pred, &truth)?,
            rmse: rmse(&pred, &truth)?,
            best_epoch: out.best_epoch,
            test_ratings: split.test.len(),
        })
    })?;
    Ok(EvalReport::from_runs(spec.name(), runs))
}

/// The parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    KNeighbors,
    Alpha,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::KNeighbors => "k_neighbors",
            SweepParam::Alpha => "alpha",
        }
    }

    /// Configuration for one grid point.
    pub fn apply(&self, value: f64, dc: &DiffusionConfig, tc: &TrainConfig) -> Result<(DiffusionConfig, TrainConfig)> {
        let (mut dc, mut tc) = (*dc, *tc);
        match self {
            SweepParam::Lambda => dc.neighbors.lambda = value,
            SweepParam::Alpha => tc.alpha = value,
            SweepParam::KNeighbors => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::input(format!("k_neighbors must be a positive integer, got {value}")));
                }
                dc.neighbors.k_neighbors = value as usize;
            }
        }
        dc.neighbors.validate()?;
        tc.validate()?;
        Ok((dc, tc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub rmse: Summary,
    pub mae: Summary,
}

/// One cross-validated WUDiff_RMF run per grid value.
pub fn sweep(
    d: &Dataset,
    param: SweepParam,
    values: &[f64],
    dc: &DiffusionConfig,
    tc: &TrainConfig,
    cv: &CvConfig,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::input("sweep grid is empty"));
    }
    values
        .iter()
        .map(|&v| {
            let (dc, tc) = param.apply(v, dc, tc)?;
            let rep = run_cv(d, &ModelSpec::WudiffRmf(dc), &tc, cv)?;
            Ok(SweepPoint {
                value: v,
                rmse: rep.rmse,
                mae: rep.mae,
            })
        })
        .collect()
}

pub fn write_sweep_csv(w: &mut impl Write, param: SweepParam, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(w, "{},rmse_mean,rmse_stddev,mae_mean,mae_stddev", param.name())?;
    for p in points {
        writeln!(
            w,
            "{},{:.12e},{:.12e},{:.12e},{:.12e}",
            p.value, p.rmse.mean, p.rmse.stddev, p.mae.mean, p.mae.stddev
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    /// Two-tailed.
    pub p: f64,
    pub dof: f64,
}

/// Two-tailed paired t-test on `a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::input(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::input("paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = Summary::of(&diffs);
    // Rounding noise on a constant shift must not produce a huge finite t.
    if !(s.stddev > 1e-12 * s.mean.abs()) {
        return Err(Error::Degenerate(format!(
            "paired differences have zero variance (mean difference {})",
            s.mean
        )));
    }
    let n = diffs.len() as f64;
    let t = s.mean / (s.stddev / n.sqrt());
    let dof = n - 1.0;
    Ok(TTest {
        t,
        p: student_t_two_tailed(t, dof),
        dof,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `dof` degrees of freedom, via the
/// regularized incomplete beta function.
pub fn student_t_two_tailed(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    statrs::function::beta::beta_reg(dof / 2.0, 0.5, x)
}

/// One user class: at most `max_ratings` train ratings and at most `max_tags`
/// tag assignments; `None` is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupClass {
    pub label: String,
    pub max_ratings: Option<usize>,
    pub max_tags: Option<usize>,
}

/// Ordered user classes. A user belongs to the first class whose bounds it
/// satisfies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserGroupSpec {
    pub classes: Vec<GroupClass>,
}

impl UserGroupSpec {
    /// The 13 MovieLens classes; the last one catches everyone else.
    pub fn movielens() -> Self {
        let bounds = [
            (5, 10),
            (10, 10),
            (10, 20),
            (15, 20),
            (15, 30),
            (20, 20),
            (20, 30),
            (25, 30),
            (30, 30),
            (30, 40),
            (35, 40),
            (50, 50),
        ];
        let mut classes: Vec<GroupClass> = bounds
            .iter()
            .map(|&(r, t)| GroupClass {
                label: format!("({r},{t})"),
                max_ratings: Some(r),
                max_tags: Some(t),
            })
            .collect();
        classes.push(GroupClass {
            label: "(>=65,>=100)".into(),
            max_ratings: None,
            max_tags: None,
        });
        UserGroupSpec { classes }
    }

    /// Cartesian bins from ascending upper edges, each axis closed by an
    /// unbounded bin.
    pub fn grid(rating_edges: &[usize], tag_edges: &[usize]) -> Self {
        let axis = |edges: &[usize]| -> Vec<Option<usize>> {
            edges.iter().map(|&e| Some(e)).chain(std::iter::once(None)).collect()
        };
        let show = |b: Option<usize>| b.map(|v| v.to_string()).unwrap_or_else(|| "inf".into());
        let mut classes = Vec::new();
        for r in axis(rating_edges) {
            for t in axis(tag_edges) {
                classes.push(GroupClass {
                    label: format!("({},{})", show(r), show(t)),
                    max_ratings: r,
                    max_tags: t,
                });
            }
        }
        UserGroupSpec { classes }
    }

    /// A single class containing every user.
    pub fn everyone() -> Self {
        UserGroupSpec {
            classes: vec![GroupClass {
                label: "all".into(),
                max_ratings: None,
                max_tags: None,
            }],
        }
    }

    /// Parses `r:t,r:t,...` where either bound may be `*` for unbounded.
    pub fn parse(s: &str) -> Result<Self> {
        let mut classes = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (r, t) = part
                .split_once(':')
                .ok_or_else(|| Error::input(format!("group class {part:?} is not rating:tag")))?;
            let bound = |b: &str| -> Result<Option<usize>> {
                if b.trim() == "*" {
                    Ok(None)
                } else {
                    b.trim()
                        .parse()
                        .map(Some)
                        .map_err(|_| Error::input(format!("bad group bound {b:?}")))
                }
            };
            classes.push(GroupClass {
                label: format!("({},{})", r.trim(), t.trim()),
                max_ratings: bound(r)?,
                max_tags: bound(t)?,
            });
        }
        if classes.is_empty() {
            return Err(Error::input("group spec has no classes"));
        }
        Ok(UserGroupSpec { classes })
    }

    pub fn assign(&self, ratings: usize, tags: u64) -> Option<usize> {
        self.classes.iter().position(|c| {
            c.max_ratings.map_or(true, |m| ratings <= m) && c.max_tags.map_or(true, |m| tags <= m as u64)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub label: String,
    /// Test users in the class, summed over runs.
    pub test_users: usize,
    pub test_ratings: usize,
    /// Pooled RMSE per model, `None` when the class has no test ratings.
    pub rmse: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub models: Vec<String>,
    pub rows: Vec<GroupRow>,
}

impl GroupReport {
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let names: Vec<String> = self.models.iter().map(|m| format!("rmse_{m}")).collect();
        writeln!(w, "group,test_users,test_ratings,{}", names.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .rmse
                .iter()
                .map(|v| v.map(|x| format!("{x:.12e}")).unwrap_or_else(|| "NA".into()))
                .collect();
            writeln!(w, "\"{}\",{},{},{}", row.label, row.test_users, row.test_ratings, cells.join(","))?;
        }
        Ok(())
    }
}

/// Per-class RMSE for each model. Users are classed by their train-split
/// rating count and total tag assignments; errors are pooled across runs.
pub fn group_report(
    d: &Dataset,
    models: &[ModelSpec],
    groups: &UserGroupSpec,
    train_cfg: &TrainConfig,
    cv: &CvConfig,
) -> Result<GroupReport> {
    train_cfg.validate()?;
    let plans = (0..cv.repeats).map(|r| repeat_plan(d, cv, r)).collect::<Result<Vec<_>>>()?;
    let k = groups.classes.len();
    struct Cell {
        users: usize,
        ratings: usize,
        sq: Vec<f64>,
    }
    let per_run = cv.map_runs(|r, f| {
        let split = ingest::split(d, &plans[r], f)?;
        let mut cells: Vec<Cell> = (0..k)
            .map(|_| Cell {
                users: 0,
                ratings: 0,
                sq: vec![0.0; models.len()],
            })
            .collect();
        let mut class_of = vec![usize::MAX; d.user_count()];
        for (u, _, _) in split.test.iter() {
            if class_of[u] == usize::MAX {
                let c = groups
                    .assign(split.train.user_degree(u), d.tags.assignments(u))
                    .ok_or_else(|| Error::input(format!("user {u} matches no group class")))?;
                class_of[u] = c;
                cells[c].users += 1;
            }
            cells[class_of[u]].ratings += 1;
        }
        for (mi, spec) in models.iter().enumerate() {
            let out = train_on_split(d, &split, spec, train_cfg, run_seed(cv, r, f))?;
            for (u, i, truth) in split.test.iter() {
                let e = truth - out.model.predict(u, i);
                cells[class_of[u]].sq[mi] += e * e;
            }
        }
        Ok(cells)
    })?;
    let rows = (0..k)
        .map(|c| {
            let users = per_run.iter().map(|cells| cells[c].users).sum();
            let ratings: usize = per_run.iter().map(|cells| cells[c].ratings).sum();
            let rmse = (0..models.len())
                .map(|mi| {
                    (ratings > 0).then(|| {
                        let sq: f64 = per_run.iter().map(|cells| cells[c].sq[mi]).sum();
                        (sq / ratings as f64).sqrt()
                    })
                })
                .collect();
            GroupRow {
                label: groups.classes[c].label.clone(),
                test_users: users,
                test_ratings: ratings,
                rmse,
            }
        })
        .collect();
    Ok(GroupReport {
        models: models.iter().map(|m| m.name().to_string()).collect(),
        rows,
    })
}

/// Pooled RMSE over all test ratings of all runs; matches a single-class
/// [`group_report`].
pub fn pooled_rmse(d: &Dataset, spec: &ModelSpec, train_cfg: &TrainConfig, cv: &CvConfig) -> Result<f64> {
    let plans = (0..cv.repeats).map(|r| repeat_plan(d, cv, r)).collect::<Result<Vec<_>>>()?;
    let parts = cv.map_runs(|r, f| {
        let split = ingest::split(d, &plans[r], f)?;
        let out = train_on_split(d, &split, spec, train_cfg, run_seed(cv, r, f))?;
        let (pred, truth) = predictions(&out.model, &split.test);
        let sq: f64 = pred.iter().zip(&truth).map(|(p, t)| (t - p) * (t - p)).sum();
        Ok((sq, truth.len()))
    })?;
    let (sq, n) = parts.iter().fold((0.0, 0), |(s, n), &(a, b)| (s + a, n + b));
    Ok((sq / n as f64).sqrt())
}
