//! The update directions used by SGD against central finite differences of the
//! objective.
//!
//! On the neighbor and weight-decay terms the step direction is exactly the
//! negative gradient when neighbor sets are symmetric. On the rating term the
//! step carries `g'(x) e q`, which is half of the negative gradient of the
//! squared error; the learning rate absorbs the factor of two.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wudiff::diffusion::NeighborSets;
use wudiff::mf::{neighbor_pull, objective};
use wudiff::{FactorModel, RatingTable, TrainConfig};

use common::{error_term, gradient_errors, random_grad_instance};

#[test]
fn regularizer_terms_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..200 {
        let [p, q, _, _] = gradient_errors(&random_grad_instance(&mut rng));
        assert!(p < 1e-4 && q < 1e-4, "case {case}: {p} {q}");
    }
}

#[test]
fn rating_term_is_half_the_squared_error_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for case in 0..200 {
        let [_, _, p, q] = gradient_errors(&random_grad_instance(&mut rng));
        assert!(p < 1e-4 && q < 1e-4, "case {case}: {p} {q}");
    }
}

/// Summed gradient of the objective assembled from the same pieces SGD uses.
fn full_gradient(m: &FactorModel, train: &RatingTable, nb: &NeighborSets, cfg: &TrainConfig) -> (Vec<f64>, Vec<f64>) {
    let f = m.factors();
    let mut gp = vec![0.0; m.user_count() * f];
    let mut gq = vec![0.0; m.item_count() * f];
    for (u, i, r) in train.iter() {
        let (ep, eq) = error_term(m, u, i, r / m.r_max());
        for k in 0..f {
            gp[u * f + k] -= 2.0 * ep[k];
            gq[i * f + k] -= 2.0 * eq[k];
        }
    }
    for u in 0..m.user_count() {
        let pull = neighbor_pull(m, nb, u);
        for k in 0..f {
            gp[u * f + k] += 2.0 * cfg.alpha * pull[k] + cfg.lambda_u * m.user_vec(u)[k];
        }
    }
    for i in 0..m.item_count() {
        for k in 0..f {
            gq[i * f + k] += cfg.lambda_i * m.item_vec(i)[k];
        }
    }
    (gp, gq)
}

#[test]
fn full_batch_descent_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let mut inst = random_grad_instance(&mut rng);
        let (users, items) = (inst.model.user_count(), inst.model.item_count());
        let mut entries = Vec::new();
        for u in 0..users {
            for i in 0..items {
                if rng.gen_bool(0.7) {
                    entries.push((u, i, rng.gen_range(0.5..=5.0)));
                }
            }
        }
        let train = RatingTable::from_entries(users, items, 5.0, entries).unwrap();
        let m = &mut inst.model;
        let mut prev = objective(m, &train, &inst.neighbors, &inst.cfg).unwrap();
        for step in 0..50 {
            let (gp, gq) = full_gradient(m, &train, &inst.neighbors, &inst.cfg);
            let f = m.factors();
            for u in 0..users {
                for (k, x) in m.user_vec_mut(u).iter_mut().enumerate() {
                    *x -= 0.01 * gp[u * f + k];
                }
            }
            for i in 0..items {
                for (k, x) in m.item_vec_mut(i).iter_mut().enumerate() {
                    *x -= 0.01 * gq[i * f + k];
                }
            }
            let now = objective(m, &train, &inst.neighbors, &inst.cfg).unwrap();
            assert!(now <= prev + 1e-12, "step {step}: {prev} -> {now}");
            prev = now;
        }
    }
}
