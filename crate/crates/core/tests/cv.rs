use std::collections::BTreeSet;

use wudiff::eval::{
    group_report, pooled_rmse, repeat_plan, run_cv, sweep, train_on_split, CvConfig, ModelSpec, SweepParam,
    UserGroupSpec,
};
use wudiff::ingest::split;
use wudiff::synthetic::{generate, SyntheticSpec};
use wudiff::{Dataset, DiffusionConfig, RatingTable, TrainConfig};

fn small() -> Dataset {
    let spec = SyntheticSpec {
        users: 60,
        items: 60,
        density: 0.15,
        ..SyntheticSpec::default()
    };
    generate(&spec).unwrap().dataset
}

fn fast() -> TrainConfig {
    TrainConfig {
        factors: 4,
        gamma1: 0.3,
        gamma2: 0.3,
        max_epochs: 40,
        ..TrainConfig::default()
    }
}

fn cv(jobs: usize) -> CvConfig {
    CvConfig {
        folds: 5,
        repeats: 2,
        seed: 42,
        jobs,
        ..CvConfig::default()
    }
}

#[test]
fn same_seed_same_report() {
    let d = small();
    let spec = ModelSpec::WudiffRmf(DiffusionConfig::default());
    let tc = TrainConfig { alpha: 0.01, ..fast() };
    let a = run_cv(&d, &spec, &tc, &cv(1)).unwrap();
    let b = run_cv(&d, &spec, &tc, &cv(3)).unwrap();
    assert_eq!(a, b);
    let mut ba = Vec::new();
    let mut bb = Vec::new();
    a.write_csv(&mut ba).unwrap();
    b.write_csv(&mut bb).unwrap();
    assert_eq!(ba, bb);
    assert_eq!(a.runs.len(), 10);
    assert!(a.mae.mean <= a.rmse.mean);
}

#[test]
fn zero_alpha_matches_rmf() {
    let d = small();
    let rmf = run_cv(&d, &ModelSpec::Rmf, &fast(), &cv(0)).unwrap();
    let wu = run_cv(&d, &ModelSpec::WudiffRmf(DiffusionConfig::default()), &fast(), &cv(0)).unwrap();
    assert_eq!(rmf.runs, wu.runs);
    assert_eq!(rmf.rmse, wu.rmse);

    let points = sweep(&d, SweepParam::Alpha, &[0.0, 0.01], &DiffusionConfig::default(), &fast(), &cv(0)).unwrap();
    assert_eq!(points[0].rmse, rmf.rmse);
    assert_eq!(points[0].mae, rmf.mae);
}

#[test]
fn lambda_sweep_is_finite() {
    let d = small();
    let tc = TrainConfig { alpha: 0.01, ..fast() };
    let points = sweep(&d, SweepParam::Lambda, &[0.0, 0.5, 1.0], &DiffusionConfig::default(), &tc, &cv(0)).unwrap();
    assert_eq!(points.len(), 3);
    assert!(points.iter().all(|p| p.rmse.mean.is_finite() && p.mae.mean.is_finite()));
    assert!(sweep(&d, SweepParam::Lambda, &[], &DiffusionConfig::default(), &tc, &cv(0)).is_err());
    assert!(sweep(&d, SweepParam::KNeighbors, &[2.5], &DiffusionConfig::default(), &tc, &cv(0)).is_err());
}

#[test]
fn test_folds_partition_the_ratings() {
    let d = small();
    let c = cv(0);
    for r in 0..c.repeats {
        let plan = repeat_plan(&d, &c, r).unwrap();
        let mut seen = BTreeSet::new();
        for f in 0..c.folds {
            let s = split(&d, &plan, f).unwrap();
            assert_eq!(s.train.len() + s.validation.len() + s.test.len(), d.ratings.len());
            for (u, i, _) in s.test.iter() {
                assert!(seen.insert((u, i)), "({u}, {i}) tested twice");
            }
        }
        assert_eq!(seen.len(), d.ratings.len());
    }
}

/// Overwriting test ratings must not change what is learned from the train
/// split: weights, graph and neighbors all come from train only.
#[test]
fn test_ratings_do_not_leak_into_training() {
    let d = small();
    let c = cv(0);
    let plan = repeat_plan(&d, &c, 0).unwrap();
    let s = split(&d, &plan, 0).unwrap();
    let tested: BTreeSet<(usize, usize)> = s.test.iter().map(|(u, i, _)| (u, i)).collect();
    let altered = RatingTable::from_entries(
        d.user_count(),
        d.item_count(),
        d.ratings.r_max(),
        d.ratings
            .iter()
            .map(|(u, i, r)| if tested.contains(&(u, i)) { (u, i, 6.0 - r.max(1.0)) } else { (u, i, r) }),
    )
    .unwrap();
    let d2 = Dataset { ratings: altered, ..d.clone() };
    let s2 = split(&d2, &repeat_plan(&d2, &c, 0).unwrap(), 0).unwrap();
    assert_eq!(s.train, s2.train);
    assert_ne!(s.test, s2.test);

    let spec = ModelSpec::WudiffRmf(DiffusionConfig::default());
    let tc = TrainConfig { alpha: 0.02, ..fast() };
    let a = train_on_split(&d, &s, &spec, &tc, 5).unwrap();
    let b = train_on_split(&d2, &s2, &spec, &tc, 5).unwrap();
    assert_eq!(a.model, b.model);
}

#[test]
fn single_group_equals_pooled_rmse() {
    let d = small();
    let models = [ModelSpec::Rmf, ModelSpec::WudiffRmf(DiffusionConfig::default())];
    let tc = TrainConfig { alpha: 0.01, ..fast() };
    let rep = group_report(&d, &models, &UserGroupSpec::everyone(), &tc, &cv(0)).unwrap();
    assert_eq!(rep.rows.len(), 1);
    for (mi, spec) in models.iter().enumerate() {
        let pooled = pooled_rmse(&d, spec, &tc, &cv(0)).unwrap();
        let grouped = rep.rows[0].rmse[mi].unwrap();
        assert!((pooled - grouped).abs() < 1e-12, "{pooled} vs {grouped}");
    }
}

#[test]
fn group_counts_add_up() {
    let d = small();
    let c = cv(0);
    let groups = UserGroupSpec::grid(&[5, 10], &[10, 20]);
    let rep = group_report(&d, &[ModelSpec::Rmf], &groups, &fast(), &c).unwrap();
    assert_eq!(rep.rows.len(), 9);
    let ratings: usize = rep.rows.iter().map(|r| r.test_ratings).sum();
    assert_eq!(ratings, d.ratings.len() * c.repeats);

    let mut users = 0;
    for r in 0..c.repeats {
        let plan = repeat_plan(&d, &c, r).unwrap();
        for f in 0..c.folds {
            let s = split(&d, &plan, f).unwrap();
            users += s.test.iter().map(|(u, _, _)| u).collect::<BTreeSet<_>>().len();
        }
    }
    assert_eq!(rep.rows.iter().map(|r| r.test_users).sum::<usize>(), users);
    for row in &rep.rows {
        assert_eq!(row.rmse[0].is_none(), row.test_ratings == 0);
    }
}
