//! Run configuration: built-in defaults, then a `key = value` file, then flags.
//!
//! Every key is also a `--kebab-case` flag. Problems are collected rather than
//! reported one at a time, so a bad config file lists everything wrong with it.

use std::fs;
use std::path::{Path, PathBuf};

use wudiff::diffusion::{DiffusionConfig, NeighborConfig};
use wudiff::eval::{CvConfig, ModelSpec, SweepParam, UserGroupSpec};
use wudiff::ingest::{LoadOptions, RatingMode};
use wudiff::weighting::Bm25Params;
use wudiff::TrainConfig;

pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    /// Boolean switch: `--flag` alone means `true`.
    pub switch: bool,
}

const fn key(name: &'static str, help: &'static str) -> Key {
    Key { name, help, switch: false }
}

const fn switch(name: &'static str, help: &'static str) -> Key {
    Key { name, help, switch: true }
}

pub const KEYS: &[Key] = &[
    key("ratings", "Rating (or interaction) file"),
    key("tags", "Tagging file"),
    key("format", "Input layout: canonical | movielens | lastfm | delicious"),
    switch("skip_header", "Skip the first data line of each input file (overrides the format preset)"),
    key("mode", "Rating mode: explicit | implicit (overrides the format preset)"),
    key("r_max", "Rating ceiling; inferred from the data when unset in explicit mode"),
    key("model", "rmf | wudiff_rmf"),
    key("factors", "Latent dimension"),
    key("alpha", "Neighbor regularization strength"),
    key("lambda_u", "User factor weight decay"),
    key("lambda_i", "Item factor weight decay"),
    key("gamma1", "User learning rate"),
    key("gamma2", "Item learning rate"),
    key("max_epochs", "Epoch limit"),
    key("patience", "Non-improving validation epochs tolerated"),
    switch("shuffle", "Shuffle rating order every epoch"),
    switch("single_sided_reg", "Use alpha instead of 2*alpha for the neighbor pull"),
    key("lambda", "Rating-layer share of the combined similarity, in [0, 1]"),
    key("k_neighbors", "Neighbors kept per user"),
    switch("clamp_nonneg", "Clamp negative similarities to zero"),
    key("bm25_k1", "BM25 term-frequency saturation"),
    key("bm25_b", "BM25 profile-length normalization"),
    key("folds", "Cross-validation folds"),
    key("repeats", "Independent repetitions of the fold protocol"),
    key("seed", "Root random seed"),
    key("validation_fraction", "Share of non-test ratings held out for early stopping"),
    key("jobs", "Worker threads for independent runs (0 = all cores)"),
    key("out", "Output directory"),
    key("sweep_param", "Swept parameter: lambda | k_neighbors | alpha"),
    key("sweep_values", "Comma-separated grid for the swept parameter"),
    key("groups", "User classes: movielens | everyone | r:t,r:t,... (* = unbounded)"),
    switch("dump_neighbors", "Also write the neighbor sets used for training"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Canonical,
    Movielens,
    Lastfm,
    Delicious,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Canonical => "canonical",
            Format::Movielens => "movielens",
            Format::Lastfm => "lastfm",
            Format::Delicious => "delicious",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Rmf,
    WudiffRmf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub ratings: Option<PathBuf>,
    pub tags: Option<PathBuf>,
    pub format: Format,
    pub skip_header: Option<bool>,
    pub mode: Option<Mode>,
    pub r_max: Option<f64>,
    pub model: Model,
    pub train: TrainConfig,
    pub diffusion: DiffusionConfig,
    pub cv: CvConfig,
    pub out: Option<PathBuf>,
    pub sweep_param: Option<SweepParam>,
    pub sweep_values: Vec<f64>,
    pub groups: String,
    pub dump_neighbors: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ratings: None,
            tags: None,
            format: Format::Canonical,
            skip_header: None,
            mode: None,
            r_max: None,
            model: Model::WudiffRmf,
            train: TrainConfig::default(),
            diffusion: DiffusionConfig::default(),
            cv: CvConfig::default(),
            out: None,
            sweep_param: None,
            sweep_values: Vec::new(),
            groups: "movielens".into(),
            dump_neighbors: false,
        }
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl RunConfig {
    /// Applies one setting; the error text omits the key name.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let v = v.trim();
        let t = &mut self.train;
        let n = &mut self.diffusion.neighbors;
        match key {
            "ratings" => self.ratings = Some(PathBuf::from(v)),
            "tags" => self.tags = (!v.is_empty()).then(|| PathBuf::from(v)),
            "format" => {
                self.format = match v {
                    "canonical" => Format::Canonical,
                    "movielens" => Format::Movielens,
                    "lastfm" => Format::Lastfm,
                    "delicious" => Format::Delicious,
                    _ => return Err(format!("unknown format {v:?}")),
                }
            }
            "skip_header" => self.skip_header = Some(boolean(v)?),
            "mode" => {
                self.mode = Some(match v {
                    "explicit" => Mode::Explicit,
                    "implicit" => Mode::Implicit,
                    _ => return Err(format!("unknown mode {v:?}")),
                })
            }
            "r_max" => self.r_max = if v.is_empty() { None } else { Some(num(v)?) },
            "model" => {
                self.model = match v {
                    "rmf" => Model::Rmf,
                    "wudiff_rmf" => Model::WudiffRmf,
                    _ => return Err(format!("unknown model {v:?} (expected rmf or wudiff_rmf)")),
                }
            }
            "factors" => t.factors = num(v)?,
            "alpha" => t.alpha = num(v)?,
            "lambda_u" => t.lambda_u = num(v)?,
            "lambda_i" => t.lambda_i = num(v)?,
            "gamma1" => t.gamma1 = num(v)?,
            "gamma2" => t.gamma2 = num(v)?,
            "max_epochs" => t.max_epochs = num(v)?,
            "patience" => t.patience = num(v)?,
            "shuffle" => t.shuffle = boolean(v)?,
            "single_sided_reg" => t.single_sided_reg = boolean(v)?,
            "lambda" => n.lambda = num(v)?,
            "k_neighbors" => n.k_neighbors = num(v)?,
            "clamp_nonneg" => n.clamp_nonneg = boolean(v)?,
            "bm25_k1" => self.diffusion.bm25.k1 = num(v)?,
            "bm25_b" => self.diffusion.bm25.b = num(v)?,
            "folds" => self.cv.folds = num(v)?,
            "repeats" => self.cv.repeats = num(v)?,
            "seed" => self.cv.seed = num(v)?,
            "validation_fraction" => self.cv.validation_fraction = num(v)?,
            "jobs" => self.cv.jobs = num(v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "sweep_param" => {
                self.sweep_param = Some(match v {
                    "lambda" => SweepParam::Lambda,
                    "k_neighbors" => SweepParam::KNeighbors,
                    "alpha" => SweepParam::Alpha,
                    _ => return Err(format!("cannot sweep {v:?}")),
                })
            }
            "sweep_values" => {
                self.sweep_values = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(num)
                    .collect::<Result<_, _>>()?
            }
            "groups" => self.groups = v.to_string(),
            "dump_neighbors" => self.dump_neighbors = boolean(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let n = &self.diffusion.neighbors;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        KEYS.iter()
            .map(|k| {
                let v = match k.name {
                    "ratings" => path(&self.ratings),
                    "tags" => path(&self.tags),
                    "format" => self.format.name().into(),
                    "skip_header" => self.load_options().skip_header.to_string(),
                    "mode" => match self.load_options().mode {
                        RatingMode::Explicit { .. } => "explicit".into(),
                        RatingMode::ImplicitBinary => "implicit".into(),
                    },
                    "r_max" => show_opt(&self.r_max),
                    "model" => self.model_spec().name().into(),
                    "factors" => t.factors.to_string(),
                    "alpha" => t.alpha.to_string(),
                    "lambda_u" => t.lambda_u.to_string(),
                    "lambda_i" => t.lambda_i.to_string(),
                    "gamma1" => t.gamma1.to_string(),
                    "gamma2" => t.gamma2.to_string(),
                    "max_epochs" => t.max_epochs.to_string(),
                    "patience" => t.patience.to_string(),
                    "shuffle" => t.shuffle.to_string(),
                    "single_sided_reg" => t.single_sided_reg.to_string(),
                    "lambda" => n.lambda.to_string(),
                    "k_neighbors" => n.k_neighbors.to_string(),
                    "clamp_nonneg" => n.clamp_nonneg.to_string(),
                    "bm25_k1" => self.diffusion.bm25.k1.to_string(),
                    "bm25_b" => self.diffusion.bm25.b.to_string(),
                    "folds" => self.cv.folds.to_string(),
                    "repeats" => self.cv.repeats.to_string(),
                    "seed" => self.cv.seed.to_string(),
                    "validation_fraction" => self.cv.validation_fraction.to_string(),
                    "jobs" => self.cv.jobs.to_string(),
                    "out" => path(&self.out),
                    "sweep_param" => self.sweep_param.map(|p| p.name().to_string()).unwrap_or_default(),
                    "sweep_values" => {
                        self.sweep_values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
                    }
                    "groups" => self.groups.clone(),
                    "dump_neighbors" => self.dump_neighbors.to_string(),
                    other => unreachable!("key {other} has no rendering"),
                };
                (k.name, v)
            })
            .collect()
    }

    pub fn load_options(&self) -> LoadOptions {
        let mut o = match self.format {
            Format::Canonical => LoadOptions {
                mode: RatingMode::Explicit { r_max: None },
                ..LoadOptions::canonical(1.0)
            },
            Format::Movielens => LoadOptions::hetrec_movielens(),
            Format::Lastfm => LoadOptions::hetrec_lastfm(),
            Format::Delicious => LoadOptions::hetrec_delicious(),
        };
        if let Some(s) = self.skip_header {
            o.skip_header = s;
        }
        match self.mode {
            Some(Mode::Implicit) => o.mode = RatingMode::ImplicitBinary,
            Some(Mode::Explicit) => {
                if o.mode == RatingMode::ImplicitBinary {
                    o.mode = RatingMode::Explicit { r_max: None };
                }
            }
            None => {}
        }
        if let (Some(r), RatingMode::Explicit { .. }) = (self.r_max, o.mode) {
            o.mode = RatingMode::Explicit { r_max: Some(r) };
        }
        o
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self.model {
            Model::Rmf => ModelSpec::Rmf,
            Model::WudiffRmf => ModelSpec::WudiffRmf(self.diffusion),
        }
    }

    /// Train configuration for a single (non cross-validated) fit.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train;
        t.seed = self.cv.seed;
        if self.model == Model::Rmf {
            t.alpha = 0.0;
        }
        t
    }

    pub fn group_spec(&self) -> Result<UserGroupSpec, String> {
        match self.groups.as_str() {
            "movielens" => Ok(UserGroupSpec::movielens()),
            "everyone" => Ok(UserGroupSpec::everyone()),
            s => UserGroupSpec::parse(s).map_err(|e| e.to_string()),
        }
    }

    /// Settings that are out of range; empty when the config is usable.
    pub fn problems(&self, required: &[&str]) -> Vec<String> {
        let mut out = Vec::new();
        for &k in required {
            let missing = match k {
                "ratings" => self.ratings.is_none(),
                "out" => self.out.is_none(),
                "sweep_param" => self.sweep_param.is_none(),
                "sweep_values" => self.sweep_values.is_empty(),
                _ => false,
            };
            if missing {
                out.push(format!("missing required setting --{} (or `{k}` in the config file)", flag_name(k)));
            }
        }
        out.extend(self.train.problems());
        let n: NeighborConfig = self.diffusion.neighbors;
        if let Err(e) = n.validate() {
            out.push(e.to_string());
        }
        let bm: Bm25Params = self.diffusion.bm25;
        if let Err(e) = bm.validate() {
            out.push(e.to_string());
        }
        if self.cv.folds < 2 {
            out.push(format!("folds must be at least 2, got {}", self.cv.folds));
        }
        if self.cv.repeats == 0 {
            out.push("repeats must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.cv.validation_fraction) {
            out.push(format!("validation_fraction must be in [0, 1), got {}", self.cv.validation_fraction));
        }
        if let Some(r) = self.r_max {
            if !(r > 0.0 && r.is_finite()) {
                out.push(format!("r_max must be positive, got {r}"));
            }
        }
        if let Err(e) = self.group_spec() {
            out.push(e);
        }
        if let Some(p) = self.sweep_param {
            for &v in &self.sweep_values {
                if let Err(e) = p.apply(v, &self.diffusion, &self.train) {
                    out.push(format!("sweep value {v}: {e}"));
                }
            }
        }
        out
    }
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// `(line, key, value)` triples from a `key = value` file.
pub fn read_config_file(path: &Path) -> Result<Vec<(usize, String, String)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => out.push((n + 1, k.trim().to_string(), v.trim().to_string())),
            None => problems.push(format!("{}:{}: expected key = value", path.display(), n + 1)),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(problems.join("\n"))
    }
}

/// Defaults, then `file` settings, then `flags`, with every problem reported.
pub fn resolve(
    file: Option<(&Path, Vec<(usize, String, String)>)>,
    flags: &[(&'static str, String)],
    required: &[&str],
) -> Result<RunConfig, Vec<String>> {
    let mut cfg = RunConfig::default();
    let mut problems = Vec::new();
    if let Some((path, entries)) = file {
        let mut seen = std::collections::BTreeSet::new();
        for (line, k, v) in entries {
            let at = format!("{}:{line}", path.display());
            if !seen.insert(k.clone()) {
                problems.push(format!("{at}: `{k}` set more than once"));
            } else if let Err(e) = cfg.set(&k, &v) {
                problems.push(format!("{at}: `{k}`: {e}"));
            }
        }
    }
    for (k, v) in flags {
        if let Err(e) = cfg.set(k, v) {
            problems.push(format!("--{}: {e}", flag_name(k)));
        }
    }
    problems.extend(cfg.problems(required));
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(problems)
    }
}
