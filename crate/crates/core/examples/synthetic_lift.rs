//! Compares RMF and WUDiff_RMF on a planted-factor dataset and sweeps λ and α.
//!
//! `cargo run --release -p wudiff --example synthetic_lift`

use std::env;

use wudiff::diffusion::{DiffusionConfig, NeighborConfig};
use wudiff::eval::{run_cv, sweep, CvConfig, ModelSpec, SweepParam};
use wudiff::synthetic::{generate, SyntheticSpec};
use wudiff::TrainConfig;

fn arg(name: &str, default: f64) -> f64 {
    env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> wudiff::Result<()> {
    let spec = SyntheticSpec {
        within_cluster: arg("WITHIN", 0.1),
        tag_noise: arg("TAG_NOISE", 0.2),
        topics: arg("TOPICS", 4.0) as usize,
        clusters: arg("CLUSTERS", 8.0) as usize,
        seed: arg("SEED", 0.0) as u64,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec)?.dataset;
    let tc = TrainConfig {
        factors: arg("F", 10.0) as usize,
        gamma1: arg("GAMMA", 0.5),
        gamma2: arg("GAMMA", 0.5),
        lambda_u: arg("LU", 0.01),
        lambda_i: arg("LI", 0.01),
        max_epochs: arg("EPOCHS", 200.0) as usize,
        patience: arg("PATIENCE", 1.0) as usize,
        ..TrainConfig::default()
    };
    let cv = CvConfig {
        folds: 10,
        repeats: 1,
        seed: 7,
        ..CvConfig::default()
    };
    let dc = DiffusionConfig {
        neighbors: NeighborConfig {
            lambda: 0.5,
            k_neighbors: 20,
            clamp_nonneg: false,
        },
        ..DiffusionConfig::default()
    };
    let rmf = run_cv(&data, &ModelSpec::Rmf, &tc, &cv)?;
    println!("rmf rmse {:.4} ± {:.4}", rmf.rmse.mean, rmf.rmse.stddev);
    for alpha in [0.005, 0.01, 0.05] {
        let rep = run_cv(&data, &ModelSpec::WudiffRmf(dc), &TrainConfig { alpha, ..tc }, &cv)?;
        println!(
            "alpha {alpha}: rmse {:.4} (lift {:.2}%)",
            rep.rmse.mean,
            100.0 * (1.0 - rep.rmse.mean / rmf.rmse.mean)
        );
    }
    let alpha = arg("ALPHA", 0.01);
    let lambdas: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    for p in sweep(&data, SweepParam::Lambda, &lambdas, &dc, &TrainConfig { alpha, ..tc }, &cv)? {
        println!("lambda {:.1}: {:.4}", p.value, p.rmse.mean);
    }
    let alphas = [0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2];
    for p in sweep(&data, SweepParam::Alpha, &alphas, &dc, &tc, &cv)? {
        println!("alpha {:.3}: {:.4}", p.value, p.rmse.mean);
    }
    Ok(())
}
