//! Algebra invariants (property-tested) and finite-difference verification
//! of the quaternion backward passes, all in double precision.

use proptest::prelude::*;
use quatkgc_core::test_utils::{assert_close, qmul};
use quatkgc_core::quat::{
    hamilton_product, hamilton_product_backward, normalize, normalize_backward, quat_norms,
    QuatBlock,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;

fn block_from(qs: &[[f64; 4]]) -> QuatBlock<f64> {
    let mut b = QuatBlock::zeros(qs.len());
    for (i, q) in qs.iter().enumerate() {
        b.set(i, *q);
    }
    b
}

fn random_block(rng: &mut impl Rng, m: usize, span: f64) -> QuatBlock<f64> {
    let mut b = QuatBlock::zeros(m);
    for i in 0..m {
        b.set(i, std::array::from_fn(|_| rng.gen_range(-span..span)));
    }
    b
}

fn quat_strategy() -> impl Strategy<Value = Vec<[f64; 4]>> {
    prop::collection::vec(
        prop::array::uniform4(-3.0f64..3.0),
        1..6,
    )
}

proptest! {
    #[test]
    fn identity_blocks_are_neutral(qs in quat_strategy()) {
        let q = block_from(&qs);
        let one = QuatBlock::identity(q.len());
        prop_assert_eq!(&hamilton_product(one.as_ref(), q.as_ref()).unwrap(), &q);
        prop_assert_eq!(&hamilton_product(q.as_ref(), one.as_ref()).unwrap(), &q);
    }

    #[test]
    fn norms_are_multiplicative(q1s in quat_strategy(), q2s in quat_strategy()) {
        let m = q1s.len().min(q2s.len());
        let q1 = block_from(&q1s[..m]);
        let q2 = block_from(&q2s[..m]);
        let product = hamilton_product(q1.as_ref(), q2.as_ref()).unwrap();
        let left = quat_norms(product.as_ref());
        let n1 = quat_norms(q1.as_ref());
        let n2 = quat_norms(q2.as_ref());
        for i in 0..m {
            let expected = n1[i] * n2[i];
            prop_assert!((left[i] - expected).abs() <= 1e-9 * expected.max(1.0));
        }
    }

    #[test]
    fn product_is_associative(q1s in quat_strategy(), q2s in quat_strategy(), q3s in quat_strategy()) {
        let m = q1s.len().min(q2s.len()).min(q3s.len());
        let q1 = block_from(&q1s[..m]);
        let q2 = block_from(&q2s[..m]);
        let q3 = block_from(&q3s[..m]);
        let left = hamilton_product(
            hamilton_product(q1.as_ref(), q2.as_ref()).unwrap().as_ref(),
            q3.as_ref(),
        )
        .unwrap();
        let right = hamilton_product(
            q1.as_ref(),
            hamilton_product(q2.as_ref(), q3.as_ref()).unwrap().as_ref(),
        )
        .unwrap();
        for i in 0..m {
            let (l, r) = (left.get(i), right.get(i));
            for k in 0..4 {
                let scale = l[k].abs().max(r[k].abs()).max(1.0);
                prop_assert!((l[k] - r[k]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn normalize_is_idempotent(qs in quat_strategy()) {
        let q = block_from(&qs);
        let once = normalize(q.as_ref(), 1e-12);
        let twice = normalize(once.as_ref(), 1e-12);
        for i in 0..q.len() {
            // meaningful only away from the eps-guarded zero
            if quat_norms(q.as_ref())[i] < 1e-3 {
                continue;
            }
            let (a, b) = (once.get(i), twice.get(i));
            for k in 0..4 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn normalized_blocks_are_unit(qs in quat_strategy()) {
        let q = block_from(&qs);
        let unit = normalize(q.as_ref(), 1e-12);
        for (i, n) in quat_norms(unit.as_ref()).into_iter().enumerate() {
            if quat_norms(q.as_ref())[i] > 1e-3 {
                prop_assert!((n - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn product_agrees_with_scalar_cross_form(q1s in quat_strategy(), q2s in quat_strategy()) {
        let m = q1s.len().min(q2s.len());
        let q1 = block_from(&q1s[..m]);
        let q2 = block_from(&q2s[..m]);
        let product = hamilton_product(q1.as_ref(), q2.as_ref()).unwrap();
        for i in 0..m {
            let expected = qmul(q1.get(i), q2.get(i));
            let got = product.get(i);
            for k in 0..4 {
                prop_assert!((got[k] - expected[k]).abs() <= 1e-12);
            }
        }
    }
}

/// Contract f(q1, q2) = Σ upstream · (q1 ⊗ q2), checked component by
/// component against central differences.
#[test]
fn hamilton_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let m = rng.gen_range(1..4);
        let q1 = if case == 0 {
            QuatBlock::zeros(m) // degenerate operand still differentiates cleanly
        } else {
            random_block(&mut rng, m, 2.5)
        };
        let q2 = random_block(&mut rng, m, 2.5);
        let upstream = random_block(&mut rng, m, 1.5);
        let (g1, g2) = hamilton_product_backward(q1.as_ref(), q2.as_ref(), upstream.as_ref()).unwrap();

        let value = |a: &QuatBlock<f64>, b: &QuatBlock<f64>| -> f64 {
            let p = hamilton_product(a.as_ref(), b.as_ref()).unwrap();
            let mut acc = 0.0;
            for i in 0..m {
                let (pi, ui) = (p.get(i), upstream.get(i));
                for k in 0..4 {
                    acc += pi[k] * ui[k];
                }
            }
            acc
        };

        for (which, analytic) in [(0, &g1), (1, &g2)] {
            for i in 0..m {
                for k in 0..4 {
                    let mut plus = (q1.clone(), q2.clone());
                    let mut minus = (q1.clone(), q2.clone());
                    let bump = |pair: &mut (QuatBlock<f64>, QuatBlock<f64>), delta: f64| {
                        let target = if which == 0 { &mut pair.0 } else { &mut pair.1 };
                        let mut q = target.get(i);
                        q[k] += delta;
                        target.set(i, q);
                    };
                    bump(&mut plus, FD_STEP);
                    bump(&mut minus, -FD_STEP);
                    let numeric = (value(&plus.0, &plus.1) - value(&minus.0, &minus.1)) / (2.0 * FD_STEP);
                    assert_close(
                        analytic.get(i)[k],
                        numeric,
                        1e-6,
                        1e-9,
                        &format!("case {case} operand {which} quat {i} comp {k}"),
                    );
                }
            }
        }
    }
}

#[test]
fn normalize_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..100 {
        let m = rng.gen_range(1..4);
        let q = random_block(&mut rng, m, 2.0);
        // keep away from the eps-guarded origin where FD is meaningless
        if quat_norms(q.as_ref()).iter().any(|n| *n < 0.05) {
            continue;
        }
        let upstream = random_block(&mut rng, m, 1.5);
        let analytic = normalize_backward(q.as_ref(), 1e-12, upstream.as_ref()).unwrap();

        let value = |q: &QuatBlock<f64>| -> f64 {
            let n = normalize(q.as_ref(), 1e-12);
            let mut acc = 0.0;
            for i in 0..m {
                let (ni, ui) = (n.get(i), upstream.get(i));
                for k in 0..4 {
                    acc += ni[k] * ui[k];
                }
            }
            acc
        };

        for i in 0..m {
            for k in 0..4 {
                let mut plus = q.clone();
                let mut minus = q.clone();
                let mut qp = plus.get(i);
                qp[k] += FD_STEP;
                plus.set(i, qp);
                let mut qm = minus.get(i);
                qm[k] -= FD_STEP;
                minus.set(i, qm);
                let numeric = (value(&plus) - value(&minus)) / (2.0 * FD_STEP);
                assert_close(
                    analytic.get(i)[k],
                    numeric,
                    1e-6,
                    1e-9,
                    &format!("case {case} quat {i} comp {k}"),
                );
            }
        }
    }
}
