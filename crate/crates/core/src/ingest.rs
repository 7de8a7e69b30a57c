//! Dataset files in, dense-id tables out; plus seeded cross-validation folds.
//!
//! Input files are UTF-8, tab-separated. Blank lines and lines starting with
//! `#` are ignored. Labels are mapped to dense ids per entity class in sorted
//! order (numerically when every label of the class is an unsigned integer,
//! lexicographically otherwise), so ids do not depend on row order and a
//! canonical dump re-ingests to identical tables.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::dataset::{Dataset, RatingTable, TagTable};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// How rating values are read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatingMode {
    /// Numeric ratings on `(0, r_max]`. When `r_max` is `None` it is the
    /// largest rating observed.
    Explicit { r_max: Option<f64> },
    /// Every (user, item) row is an interaction with rating 1.0 and `r_max` 1.0.
    ImplicitBinary,
}

/// Column layout of the tagging file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagLayout {
    /// One row per (user, item, tag) assignment; occurrences are aggregated
    /// per (user, tag).
    PerAssignment { user_col: usize, tag_col: usize },
    /// One row per (user, tag) with a pre-aggregated count.
    Counted {
        user_col: usize,
        tag_col: usize,
        count_col: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub user_col: usize,
    pub item_col: usize,
    /// Ignored in implicit mode.
    pub rating_col: usize,
    pub tags: TagLayout,
    pub skip_header: bool,
    pub mode: RatingMode,
}

impl LoadOptions {
    /// Layout written by [`write_canonical`]: `user item rating` and `user tag count`.
    pub fn canonical(r_max: f64) -> Self {
        LoadOptions {
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            tags: TagLayout::Counted {
                user_col: 0,
                tag_col: 1,
                count_col: 2,
            },
            skip_header: false,
            mode: RatingMode::Explicit { r_max: Some(r_max) },
        }
    }

    /// HetRec 2011 MovieLens: `user_ratedmovies.dat` and `user_taggedmovies.dat`.
    pub fn hetrec_movielens() -> Self {
        LoadOptions {
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            tags: TagLayout::PerAssignment { user_col: 0, tag_col: 2 },
            skip_header: true,
            mode: RatingMode::Explicit { r_max: Some(5.0) },
        }
    }

    /// HetRec 2011 Last.fm: `user_artists.dat` (listening counts, read as
    /// binary interactions) and `user_taggedartists.dat`.
    pub fn hetrec_lastfm() -> Self {
        LoadOptions {
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            tags: TagLayout::PerAssignment { user_col: 0, tag_col: 2 },
            skip_header: true,
            mode: RatingMode::ImplicitBinary,
        }
    }

    /// HetRec 2011 Delicious: `user_taggedbookmarks.dat` serves as both the
    /// interaction file and the tagging file.
    pub fn hetrec_delicious() -> Self {
        Self::hetrec_lastfm()
    }
}

struct Row<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn rows(text: &str, skip_header: bool) -> impl Iterator<Item = Row<'_>> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .skip(usize::from(skip_header))
        .map(|(line, l)| Row {
            line,
            fields: l.split('\t').map(str::trim).collect(),
        })
}

fn field<'a>(path: &Path, row: &Row<'a>, col: usize, what: &str) -> Result<&'a str> {
    match row.fields.get(col) {
        Some(f) if !f.is_empty() => Ok(f),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: row.line,
            msg: format!("missing {what} in column {col}"),
        }),
    }
}

fn parse_num<T: std::str::FromStr>(path: &Path, row: &Row<'_>, col: usize, what: &str) -> Result<T> {
    let raw = field(path, row, col, what)?;
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: row.line,
        msg: format!("{what} {raw:?} is not a number"),
    })
}

/// Assigns dense ids to a label set in sorted order.
fn index_labels(labels: BTreeSet<&str>) -> (Vec<String>, HashMap<String, usize>) {
    let mut sorted: Vec<&str> = labels.into_iter().collect();
    let numeric: Option<Vec<u64>> = sorted.iter().map(|l| l.parse::<u64>().ok()).collect();
    if let Some(keys) = numeric {
        let mut paired: Vec<(u64, &str)> = keys.into_iter().zip(sorted).collect();
        paired.sort();
        sorted = paired.into_iter().map(|(_, l)| l).collect();
    }
    let names: Vec<String> = sorted.iter().map(|s| s.to_string()).collect();
    let index = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    (names, index)
}

/// Loads a rating file and an optional tagging file.
pub fn load_tsv(ratings_path: &Path, tags_path: Option<&Path>, options: &LoadOptions) -> Result<Dataset> {
    let rating_text = read_text(ratings_path)?;
    let tag_text = match tags_path {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let tag_path = tags_path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<no tags>"));

    let mut raw_ratings: Vec<(&str, &str, f64, usize)> = Vec::new();
    for row in rows(&rating_text, options.skip_header) {
        let user = field(ratings_path, &row, options.user_col, "user")?;
        let item = field(ratings_path, &row, options.item_col, "item")?;
        let rating = match options.mode {
            RatingMode::ImplicitBinary => 1.0,
            RatingMode::Explicit { .. } => parse_num::<f64>(ratings_path, &row, options.rating_col, "rating")?,
        };
        raw_ratings.push((user, item, rating, row.line));
    }
    if raw_ratings.is_empty() {
        return Err(Error::input(format!("{}: no ratings found", ratings_path.display())));
    }

    let mut raw_tags: Vec<(&str, &str, u32)> = Vec::new();
    for row in rows(&tag_text, options.skip_header) {
        let (user_col, tag_col, count) = match options.tags {
            TagLayout::PerAssignment { user_col, tag_col } => (user_col, tag_col, 1),
            TagLayout::Counted {
                user_col,
                tag_col,
                count_col,
            } => (user_col, tag_col, parse_num::<u32>(&tag_path, &row, count_col, "count")?),
        };
        let user = field(&tag_path, &row, user_col, "user")?;
        let tag = field(&tag_path, &row, tag_col, "tag")?;
        if count == 0 {
            return Err(Error::input(format!("{}:{}: zero tag count", tag_path.display(), row.line)));
        }
        raw_tags.push((user, tag, count));
    }

    let r_max = match options.mode {
        RatingMode::ImplicitBinary => 1.0,
        RatingMode::Explicit { r_max: Some(m) } => m,
        RatingMode::Explicit { r_max: None } => raw_ratings.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max),
    };
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::input(format!("rating ceiling must be positive, got {r_max}")));
    }
    for &(u, i, r, line) in &raw_ratings {
        if !(r > 0.0 && r <= r_max) {
            return Err(Error::input(format!(
                "{}:{line}: rating {r} for ({u}, {i}) outside (0, {r_max}]",
                ratings_path.display()
            )));
        }
    }

    let users: BTreeSet<&str> = raw_ratings.iter().map(|r| r.0).chain(raw_tags.iter().map(|t| t.0)).collect();
    let items: BTreeSet<&str> = raw_ratings.iter().map(|r| r.1).collect();
    let tags: BTreeSet<&str> = raw_tags.iter().map(|t| t.1).collect();
    let (user_labels, user_ix) = index_labels(users);
    let (item_labels, item_ix) = index_labels(items);
    let (tag_labels, tag_ix) = index_labels(tags);

    let ratings = RatingTable::from_entries(
        user_labels.len(),
        item_labels.len(),
        r_max,
        raw_ratings.iter().map(|&(u, i, r, _)| (user_ix[u], item_ix[i], r)),
    )?;
    let tag_table = TagTable::from_counts(
        user_labels.len(),
        tag_labels.len(),
        raw_tags.iter().map(|&(u, t, c)| (user_ix[u], tag_ix[t], c)),
    )?;
    Dataset::new(ratings, tag_table, user_labels, item_labels, tag_labels)
}

/// Writes `user item rating` rows (dense ids, canonical order).
pub fn write_ratings_tsv(w: &mut impl Write, ratings: &RatingTable) -> std::io::Result<()> {
    for (u, i, r) in ratings.iter() {
        writeln!(w, "{u}\t{i}\t{r}")?;
    }
    Ok(())
}

/// Writes `user tag count` rows (dense ids, user-major).
pub fn write_tags_tsv(w: &mut impl Write, tags: &TagTable) -> std::io::Result<()> {
    for (u, t, c) in tags.iter() {
        writeln!(w, "{u}\t{t}\t{c}")?;
    }
    Ok(())
}

/// Dumps `ratings.tsv` and `tags.tsv` into `dir`, each prefixed by the given
/// `#` comment lines. Returns the two paths.
pub fn write_canonical(d: &Dataset, dir: &Path, header: &[String]) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rp = dir.join("ratings.tsv");
    let tp = dir.join("tags.tsv");
    let mut rbuf = Vec::new();
    let mut tbuf = Vec::new();
    for line in header {
        let _ = writeln!(rbuf, "# {line}");
        let _ = writeln!(tbuf, "# {line}");
    }
    write_ratings_tsv(&mut rbuf, &d.ratings).map_err(|e| Error::io(&rp, e))?;
    write_tags_tsv(&mut tbuf, &d.tags).map_err(|e| Error::io(&tp, e))?;
    fs::write(&rp, rbuf).map_err(|e| Error::io(&rp, e))?;
    fs::write(&tp, tbuf).map_err(|e| Error::io(&tp, e))?;
    Ok((rp, tp))
}

/// Assignment of every rating entry (canonical position) to a fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub seed: u64,
    pub n_folds: usize,
    pub assignments: Vec<usize>,
    /// Fraction of each training split held out for early stopping.
    pub validation_fraction: f64,
}

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;

/// Uniformly random balanced partition of the rating entries.
pub fn make_folds(d: &Dataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    make_rating_folds(&d.ratings, n_folds, seed)
}

pub fn make_rating_folds(ratings: &RatingTable, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::input(format!("need at least 2 folds, got {n_folds}")));
    }
    let n = ratings.len();
    if n < n_folds {
        return Err(Error::input(format!("{n} ratings cannot fill {n_folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Folds, &[]));
    let mut assignments = vec![0; n];
    for (slot, &entry) in order.iter().enumerate() {
        assignments[entry] = slot % n_folds;
    }
    Ok(FoldPlan {
        seed,
        n_folds,
        assignments,
        validation_fraction: DEFAULT_VALIDATION_FRACTION,
    })
}

impl FoldPlan {
    pub fn with_validation_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::input(format!("validation fraction must be in [0, 1), got {fraction}")));
        }
        self.validation_fraction = fraction;
        Ok(self)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Train / validation / test partition of the ratings for one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: RatingTable,
    pub validation: RatingTable,
    pub test: RatingTable,
}

/// Test = the entries of `test_fold`; validation = a seeded
/// `validation_fraction` of the rest; train = everything else. Tags are not
/// split.
pub fn split(d: &Dataset, plan: &FoldPlan, test_fold: usize) -> Result<Split> {
    if test_fold >= plan.n_folds {
        return Err(Error::input(format!("test fold {test_fold} >= {} folds", plan.n_folds)));
    }
    if plan.assignments.len() != d.ratings.len() {
        return Err(Error::input(format!(
            "fold plan covers {} entries, dataset has {}",
            plan.assignments.len(),
            d.ratings.len()
        )));
    }
    let (test_pos, rest): (Vec<usize>, Vec<usize>) =
        (0..plan.assignments.len()).partition(|&p| plan.assignments[p] == test_fold);
    let (train_pos, val_pos) = carve(rest, plan.validation_fraction, plan.seed, test_fold as u64);
    Ok(Split {
        train: d.ratings.select(&train_pos),
        validation: d.ratings.select(&val_pos),
        test: d.ratings.select(&test_pos),
    })
}

/// Splits all ratings into (train, validation) with a seeded fraction held out.
pub fn holdout(ratings: &RatingTable, fraction: f64, seed: u64) -> Result<(RatingTable, RatingTable)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::input(format!("validation fraction must be in [0, 1), got {fraction}")));
    }
    let (train_pos, val_pos) = carve((0..ratings.len()).collect(), fraction, seed, u64::MAX);
    Ok((ratings.select(&train_pos), ratings.select(&val_pos)))
}

fn carve(mut positions: Vec<usize>, fraction: f64, seed: u64, coord: u64) -> (Vec<usize>, Vec<usize>) {
    let n_val = (fraction * positions.len() as f64).round() as usize;
    if n_val == 0 {
        return (positions, Vec::new());
    }
    positions.shuffle(&mut seed::rng(seed, Stream::Validation, &[coord]));
    let val = positions.split_off(positions.len() - n_val);
    (positions, val)
}
