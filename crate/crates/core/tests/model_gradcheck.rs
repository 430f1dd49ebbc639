//! Finite-difference verification of the score backward pass (all four
//! variants, both norms) and of the end-to-end loss gradient, in double
//! precision, plus a forward cross-check against the scalar oracle.

use quatkgc_core::test_utils::{assert_close, OracleModel};
use quatkgc_core::{
    distance, distance_backward, init_params, loss, score, score_backward, ModelParams, NormKind,
    ParamTable, ScoreVariant, Side, SparseGrads, TrainConfig, Triple,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-4;
const NUM_ENTITIES: usize = 5;
const NUM_RELATIONS: usize = 2;
const DIM: usize = 8;

fn tiny_config(variant: ScoreVariant, seed: u64) -> TrainConfig {
    TrainConfig {
        dim: DIM,
        gamma: 4.0,
        variant,
        seed,
        ..TrainConfig::default()
    }
}

fn random_batch(rng: &mut impl Rng, len: usize) -> Vec<Triple> {
    (0..len)
        .map(|_| {
            Triple::new(
                rng.gen_range(0..NUM_ENTITIES as u32),
                rng.gen_range(0..NUM_RELATIONS as u32),
                rng.gen_range(0..NUM_ENTITIES as u32),
            )
        })
        .collect()
}

/// Central differences at the pinned step are only trustworthy away from
/// L1 kinks and away from near-zero rotation coordinates, where the
/// normalization's 1/n³ curvature inflates the truncation error.
fn fd_trustworthy(params: &ModelParams<f64>, batch: &[Triple], variant: ScoreVariant, norm: NormKind) -> bool {
    let oracle = OracleModel::from_params(params);
    let kinks_ok = norm != NormKind::L1
        || batch.iter().all(|t| {
            oracle
                .residual(t.head, t.relation, t.tail, variant)
                .iter()
                .all(|e| e.abs() > 1e-3)
        });
    if !kinks_ok {
        return false;
    }
    if !variant.is_normalized() {
        return true;
    }
    batch.iter().all(|t| {
        for rot in [&oracle.rot_head[t.relation as usize], &oracle.rot_tail[t.relation as usize]] {
            let parts = variant.component_divisor();
            let m = rot.len() / parts;
            for i in 0..m {
                let n2: f64 = (0..parts).map(|k| rot[k * m + i] * rot[k * m + i]).sum();
                if n2.sqrt() < 0.15 {
                    return false;
                }
            }
        }
        true
    })
}

fn fd_over_touched(
    params: &ModelParams<f64>,
    grads: &SparseGrads<f64>,
    mut value: impl FnMut(&ModelParams<f64>) -> f64,
    rel_tol: f64,
    context: &str,
) {
    let mut probe = params.clone();
    for table in ParamTable::ALL {
        for id in grads.touched(table) {
            let analytic_row = grads.row(table, id).unwrap().to_vec();
            for (k, &analytic) in analytic_row.iter().enumerate() {
                let at = id as usize * DIM + k;
                let original = probe.table(table)[at];
                probe.table_mut(table)[at] = original + FD_STEP;
                let plus = value(&probe);
                probe.table_mut(table)[at] = original - FD_STEP;
                let minus = value(&probe);
                probe.table_mut(table)[at] = original;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                assert_close(
                    analytic,
                    numeric,
                    rel_tol,
                    1e-7,
                    &format!("{context}: {table:?} row {id} comp {k}"),
                );
            }
        }
    }
}

#[test]
fn forward_distance_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for variant in ScoreVariant::ALL {
        for norm in [NormKind::L1, NormKind::L2] {
            for seed in 0..10u64 {
                let config = tiny_config(variant, seed);
                let params: ModelParams<f64> = init_params(NUM_ENTITIES, NUM_RELATIONS, &config).unwrap();
                let oracle = OracleModel::from_params(&params);
                let batch = random_batch(&mut rng, 6);
                let dists = distance(&params, &batch, variant, norm).unwrap();
                for (triple, got) in batch.iter().zip(&dists) {
                    let want = oracle.distance(triple, variant, norm);
                    assert_close(*got, want, 1e-12, 1e-12, &format!("{variant}/{norm} forward"));
                    assert!(*got >= 0.0);
                }
            }
        }
    }
}

#[test]
fn score_backward_matches_finite_differences() {
    for variant in ScoreVariant::ALL {
        for norm in [NormKind::L1, NormKind::L2] {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + variant.component_divisor() as u64);
            let mut checked = 0;
            let mut seed = 0u64;
            while checked < 12 {
                seed += 1;
                let config = tiny_config(variant, seed);
                let params: ModelParams<f64> =
                    init_params(NUM_ENTITIES, NUM_RELATIONS, &config).unwrap();
                let batch = random_batch(&mut rng, 3);
                if !fd_trustworthy(&params, &batch, variant, norm) {
                    continue;
                }
                let upstream: Vec<f64> = (0..batch.len()).map(|_| rng.gen_range(-1.0..1.5)).collect();
                let grads = score_backward(&params, &batch, variant, norm, &upstream).unwrap();

                // only rows the batch touches may appear
                for t in &batch {
                    let _ = t;
                }
                for table in ParamTable::ALL {
                    for id in grads.touched(table) {
                        let touched = batch.iter().any(|t| match table {
                            ParamTable::EntityEmbed => t.head == id || t.tail == id,
                            _ => t.relation == id,
                        });
                        assert!(touched, "{table:?} row {id} not in batch");
                    }
                }

                fd_over_touched(
                    &params,
                    &grads,
                    |p| {
                        let s = score(p, &batch, variant, norm).unwrap();
                        s.scores.iter().zip(&upstream).map(|(a, b)| a * b).sum()
                    },
                    1e-4,
                    &format!("{variant}/{norm} case {checked}"),
                );
                checked += 1;
            }
        }
    }
}

#[test]
fn end_to_end_loss_gradient_matches_finite_differences() {
    let n = 3;
    for variant in ScoreVariant::ALL {
        for norm in [NormKind::L1, NormKind::L2] {
            let mut rng = ChaCha8Rng::seed_from_u64(31 + variant.component_divisor() as u64);
            let mut checked = 0;
            let mut seed = 100u64;
            while checked < 6 {
                seed += 1;
                let config = tiny_config(variant, seed);
                let params: ModelParams<f64> =
                    init_params(NUM_ENTITIES, NUM_RELATIONS, &config).unwrap();
                let positives = random_batch(&mut rng, 2);
                let side = if seed.is_multiple_of(2) { Side::Tail } else { Side::Head };
                let mut all: Vec<Triple> = positives.clone();
                for p in &positives {
                    for _ in 0..n {
                        all.push(p.with_entity(side, rng.gen_range(0..NUM_ENTITIES as u32)));
                    }
                }
                if !fd_trustworthy(&params, &all, variant, norm) {
                    continue;
                }
                let gamma = config.gamma;

                // weights are computed once at the base point and then frozen:
                // they are constants of the objective, not differentiated through
                let base_dists = distance(&params, &all, variant, norm).unwrap();
                let (pos_d, neg_d) = base_dists.split_at(positives.len());
                let mut weights = Vec::new();
                for i in 0..positives.len() {
                    let scores: Vec<f64> = (0..n).map(|j| -neg_d[i * n + j]).collect();
                    weights.extend(quatkgc_core::self_adversarial_weights(&scores, config.alpha));
                }

                let (_, grads_wrt) = loss(pos_d, neg_d, &weights, n, gamma).unwrap();
                let mut upstream = grads_wrt.wrt_pos.clone();
                upstream.extend(grads_wrt.wrt_neg.iter().copied());
                let grads = distance_backward(&params, &all, variant, norm, &upstream).unwrap();

                fd_over_touched(
                    &params,
                    &grads,
                    |p| {
                        let d = distance(p, &all, variant, norm).unwrap();
                        let (pd, nd) = d.split_at(positives.len());
                        loss(pd, nd, &weights, n, gamma).unwrap().0
                    },
                    1e-4,
                    &format!("end-to-end {variant}/{norm} case {checked}"),
                );
                checked += 1;
            }
        }
    }
}
