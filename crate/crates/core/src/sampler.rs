//! Negative sampling: corrupted triples plus the self-adversarial weights
//! that scale their loss contributions.
//!
//! Corruption draws replacement entities uniformly, rejecting candidates
//! that form a known true train triple, with head- and tail-corruption
//! batches alternating. Weights are a temperature softmax over the current
//! negative scores and are treated as constants during backward.

use rand::Rng;

use crate::data::{FilterIndex, Side, Triple};
use crate::quat::Real;

/// Give up rejecting after this many draws (pathologically dense relation)
/// and accept the last uniform draw.
const REJECTION_CAP: usize = 1000;

/// A batch of positives with `n` corruption candidates each.
///
/// Negative `j` of positive `i` replaces the entity on `sides[i]` with
/// `negatives[i·n + j]`.
#[derive(Clone, Debug)]
pub struct NegativeBatch {
    pub positives: Vec<Triple>,
    pub sides: Vec<Side>,
    pub negatives: Vec<u32>,
    pub n: usize,
    /// Draws accepted by the rejection-cap fallback.
    pub fallback_draws: u64,
}

impl NegativeBatch {
    pub fn negative_triple(&self, pos_idx: usize, j: usize) -> Triple {
        self.positives[pos_idx].with_entity(self.sides[pos_idx], self.negatives[pos_idx * self.n + j])
    }
}

/// Draw `n` corruption candidates per positive on the given side, uniformly
/// over `[0, num_entities)`, rejecting known true train triples.
pub fn sample_negatives(
    positives: &[Triple],
    n: usize,
    side: Side,
    num_entities: usize,
    filter_train: &FilterIndex,
    rng: &mut impl Rng,
) -> NegativeBatch {
    assert!(n >= 1, "need at least one negative per positive");
    assert!(num_entities > 0, "entity pool must be nonempty");
    let mut negatives = Vec::with_capacity(positives.len() * n);
    let mut fallback_draws = 0;
    for positive in positives {
        let known = filter_train.known_entities(positive, side);
        for _ in 0..n {
            let mut candidate = 0u32;
            let mut accepted = false;
            for _ in 0..REJECTION_CAP {
                candidate = rng.gen_range(0..num_entities as u32);
                if known.binary_search(&candidate).is_err() {
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                fallback_draws += 1;
            }
            negatives.push(candidate);
        }
    }
    NegativeBatch {
        positives: positives.to_vec(),
        sides: vec![side; positives.len()],
        negatives,
        n,
        fallback_draws,
    }
}

/// Sampler that alternates corruption sides across batches.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    num_entities: usize,
    n: usize,
    next_side: Side,
}

impl NegativeSampler {
    pub fn new(num_entities: usize, negatives_per_positive: usize) -> Self {
        NegativeSampler {
            num_entities,
            n: negatives_per_positive,
            next_side: Side::Head,
        }
    }

    /// Sample one all-head or all-tail batch, then flip the side.
    pub fn sample_batch(
        &mut self,
        positives: &[Triple],
        filter_train: &FilterIndex,
        rng: &mut impl Rng,
    ) -> NegativeBatch {
        let side = self.next_side;
        self.next_side = side.flipped();
        sample_negatives(positives, self.n, side, self.num_entities, filter_train, rng)
    }
}

/// Softmax of `alpha · score` over one positive's negatives, computed with
/// max-subtraction. The result is a probability vector; callers must not
/// backpropagate through it.
pub fn self_adversarial_weights<T: Real>(neg_scores: &[T], alpha: T) -> Vec<T> {
    assert!(!neg_scores.is_empty(), "need at least one negative score");
    debug_assert!(alpha >= T::zero(), "temperature must be nonnegative");
    let mut max = T::neg_infinity();
    for &s in neg_scores {
        let scaled = alpha * s;
        if scaled > max {
            max = scaled;
        }
    }
    let mut weights: Vec<T> = neg_scores.iter().map(|&s| (alpha * s - max).exp()).collect();
    let total: T = weights.iter().copied().sum();
    let inv = total.recip();
    for w in &mut weights {
        *w *= inv;
    }
    weights
}
