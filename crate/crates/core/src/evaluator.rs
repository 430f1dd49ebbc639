//! Filtered link-prediction ranking over all entities, aggregated into
//! MR / MRR / Hits@N for head-side, tail-side, and combined prediction.
//!
//! Candidate scoring is batched: per relation, every entity embedding is
//! rotated once into a candidate table, so each query reduces to `|E|`
//! residual norms against a precomputed query vector. Ties rank at the
//! average of their positions; filtering removes every candidate that forms
//! a known true triple except the target itself.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{FilterIndex, Side, Triple};
use crate::error::Result;
use crate::model::{self, ModelParams, NormKind, ParamTable, ScoreVariant};
use crate::quat::Real;

/// Whether known true triples are removed from the candidate list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Filtered,
    Raw,
}

/// Rank aggregates for one prediction side (or both combined).
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EvalMetrics {
    /// Mean rank, ≥ 1.
    pub mr: f64,
    /// Mean reciprocal rank, in (0, 1].
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl EvalMetrics {
    pub fn from_ranks(ranks: &[f64]) -> EvalMetrics {
        if ranks.is_empty() {
            return EvalMetrics::default();
        }
        let n = ranks.len() as f64;
        let mut metrics = EvalMetrics::default();
        for &rank in ranks {
            metrics.mr += rank;
            metrics.mrr += 1.0 / rank;
            metrics.hits1 += f64::from(rank <= 1.0);
            metrics.hits3 += f64::from(rank <= 3.0);
            metrics.hits10 += f64::from(rank <= 10.0);
        }
        metrics.mr /= n;
        metrics.mrr /= n;
        metrics.hits1 /= n;
        metrics.hits3 /= n;
        metrics.hits10 /= n;
        metrics
    }
}

/// Head-side, tail-side, and combined metrics for one split. Each triple
/// contributes one head rank and one tail rank; `combined` averages over
/// both rank lists.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EvalReport {
    pub head: EvalMetrics,
    pub tail: EvalMetrics,
    pub combined: EvalMetrics,
    pub num_triples: usize,
}

impl EvalReport {
    fn from_rank_pairs(pairs: &[(f64, f64)]) -> EvalReport {
        let head: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let tail: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mut both = head.clone();
        both.extend_from_slice(&tail);
        EvalReport {
            head: EvalMetrics::from_ranks(&head),
            tail: EvalMetrics::from_ranks(&tail),
            combined: EvalMetrics::from_ranks(&both),
            num_triples: pairs.len(),
        }
    }

    /// Aligned human-readable table.
    pub fn table_string(&self) -> String {
        let mut out = format!(
            "{:<10}{:>12}{:>10}{:>10}{:>10}{:>10}\n",
            "side", "MR", "MRR", "Hits@1", "Hits@3", "Hits@10"
        );
        for (name, m) in [
            ("head", &self.head),
            ("tail", &self.tail),
            ("combined", &self.combined),
        ] {
            out.push_str(&format!(
                "{:<10}{:>12.2}{:>10.4}{:>10.4}{:>10.4}{:>10.4}\n",
                name, m.mr, m.mrr, m.hits1, m.hits3, m.hits10
            ));
        }
        out
    }
}

/// Rank of `target` among `scores` (higher score = better), skipping
/// excluded candidates; exact ties rank at their average position:
/// `1 + #strictly-higher + #ties/2`.
pub fn rank_from_scores<T: Real>(scores: &[T], target: usize, excluded: &[bool]) -> f64 {
    let target_score = scores[target];
    let mut higher = 0u64;
    let mut ties = 0u64;
    for (e, &s) in scores.iter().enumerate() {
        if e == target || excluded.get(e).copied().unwrap_or(false) {
            continue;
        }
        if s > target_score {
            higher += 1;
        } else if s == target_score {
            ties += 1;
        }
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

fn residual_norm<T: Real>(row: &[T], query: &[T], norm: NormKind) -> T {
    match norm {
        NormKind::L1 => row
            .iter()
            .zip(query)
            .map(|(w, q)| (*w - *q).abs())
            .sum(),
        NormKind::L2 => row
            .iter()
            .zip(query)
            .map(|(w, q)| {
                let e = *w - *q;
                e * e
            })
            .sum::<T>()
            .sqrt(),
    }
}

/// Stream all candidates of one query, counting strictly-closer candidates
/// and exact distance ties against the target. `excluded` must be sorted.
fn query_rank<T: Real>(
    table: &[T],
    dim: usize,
    query: &[T],
    norm: NormKind,
    target: u32,
    excluded: &[u32],
) -> f64 {
    let num_entities = table.len() / dim;
    let target_dist = residual_norm(&table[target as usize * dim..][..dim], query, norm);
    let mut higher = 0u64;
    let mut ties = 0u64;
    let mut ex = 0usize;
    for e in 0..num_entities as u32 {
        while ex < excluded.len() && excluded[ex] < e {
            ex += 1;
        }
        if e == target || (ex < excluded.len() && excluded[ex] == e) {
            continue;
        }
        let dist = residual_norm(&table[e as usize * dim..][..dim], query, norm);
        if dist < target_dist {
            higher += 1;
        } else if dist == target_dist {
            ties += 1;
        }
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

/// All entity embeddings rotated by one effective rotation row.
fn rotated_entity_table<T: Real>(
    params: &ModelParams<T>,
    rot: &[T],
    variant: ScoreVariant,
    threads: usize,
) -> Result<Vec<T>> {
    let d = params.dim();
    let entities = params.table(ParamTable::EntityEmbed);
    let mut table = vec![T::zero(); entities.len()];
    let rotate_range = |rows: &mut [T], offset: usize| -> Result<()> {
        for (i, out) in rows.chunks_exact_mut(d).enumerate() {
            let at = (offset + i) * d;
            model::apply_rotation(&entities[at..at + d], rot, variant, out)?;
        }
        Ok(())
    };
    if threads <= 1 || params.num_entities() < 1024 {
        rotate_range(&mut table, 0)?;
    } else {
        const ROWS_PER_CHUNK: usize = 512;
        table
            .par_chunks_mut(ROWS_PER_CHUNK * d)
            .enumerate()
            .try_for_each(|(c, chunk)| rotate_range(chunk, c * ROWS_PER_CHUNK))?;
    }
    Ok(table)
}

/// Effective (use-time) rotations of one relation.
fn relation_rotations<T: Real>(
    params: &ModelParams<T>,
    rel: u32,
    variant: ScoreVariant,
) -> Result<(Vec<T>, Vec<T>)> {
    let d = params.dim();
    let mut head = vec![T::zero(); d];
    let mut tail = vec![T::zero(); d];
    model::effective_rotation(params.row(ParamTable::RelRotHead, rel), variant, &mut head)?;
    model::effective_rotation(params.row(ParamTable::RelRotTail, rel), variant, &mut tail)?;
    Ok((head, tail))
}

fn query_vector<T: Real>(
    params: &ModelParams<T>,
    head_table: &[T],
    tail_table: &[T],
    triple: &Triple,
    side: Side,
) -> Vec<T> {
    let d = params.dim();
    let trans = params.row(ParamTable::RelTrans, triple.relation);
    match side {
        // rank tails: candidates live in the tail-rotated table,
        // query = h⊗r◁H + r
        Side::Tail => {
            let anchor = &head_table[triple.head as usize * d..][..d];
            anchor.iter().zip(trans).map(|(a, r)| *a + *r).collect()
        }
        // rank heads: candidates live in the head-rotated table,
        // query = t⊗r◁T − r
        Side::Head => {
            let anchor = &tail_table[triple.tail as usize * d..][..d];
            anchor.iter().zip(trans).map(|(a, r)| *a - *r).collect()
        }
    }
}

fn excluded_candidates<'f>(
    filter: &'f FilterIndex,
    triple: &Triple,
    side: Side,
    protocol: Protocol,
) -> &'f [u32] {
    match protocol {
        Protocol::Filtered => filter.known_entities(triple, side),
        Protocol::Raw => &[],
    }
}

/// Rank one triple on one side: scores all `|E|` substitutions, removes
/// known true candidates (except the target) under the filtered protocol,
/// and returns the average-tie rank.
pub fn rank_one<T: Real>(
    params: &ModelParams<T>,
    triple: &Triple,
    side: Side,
    filter: &FilterIndex,
    variant: ScoreVariant,
    norm: NormKind,
    protocol: Protocol,
) -> Result<f64> {
    params.check_batch(std::slice::from_ref(triple))?;
    let (rot_head, rot_tail) = relation_rotations(params, triple.relation, variant)?;
    let d = params.dim();
    // only the candidate-side table is needed in full; the anchor needs one row
    let mut anchor_rotated = vec![T::zero(); d];
    let (candidate_table, query) = match side {
        Side::Tail => {
            model::apply_rotation(
                params.row(ParamTable::EntityEmbed, triple.head),
                &rot_head,
                variant,
                &mut anchor_rotated,
            )?;
            let trans = params.row(ParamTable::RelTrans, triple.relation);
            let query: Vec<T> = anchor_rotated.iter().zip(trans).map(|(a, r)| *a + *r).collect();
            (rotated_entity_table(params, &rot_tail, variant, 1)?, query)
        }
        Side::Head => {
            model::apply_rotation(
                params.row(ParamTable::EntityEmbed, triple.tail),
                &rot_tail,
                variant,
                &mut anchor_rotated,
            )?;
            let trans = params.row(ParamTable::RelTrans, triple.relation);
            let query: Vec<T> = anchor_rotated.iter().zip(trans).map(|(a, r)| *a - *r).collect();
            (rotated_entity_table(params, &rot_head, variant, 1)?, query)
        }
    };
    let excluded = excluded_candidates(filter, triple, side, protocol);
    Ok(query_rank(
        &candidate_table,
        d,
        &query,
        norm,
        triple.entity(side),
        excluded,
    ))
}

/// Rank every triple of a split on both sides and aggregate.
///
/// Parallelizes across triples with read-only parameters; per-triple ranks
/// are collected in split order before aggregation, so results do not depend
/// on the worker count.
pub fn evaluate_split<T: Real>(
    params: &ModelParams<T>,
    split: &[Triple],
    filter: &FilterIndex,
    variant: ScoreVariant,
    norm: NormKind,
    protocol: Protocol,
    threads: usize,
) -> Result<EvalReport> {
    params.check_batch(split)?;
    let d = params.dim();
    let mut by_relation: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, t) in split.iter().enumerate() {
        by_relation.entry(t.relation).or_default().push(i);
    }
    let mut rank_pairs = vec![(0.0f64, 0.0f64); split.len()];
    for (&rel, indices) in &by_relation {
        let (rot_head, rot_tail) = relation_rotations(params, rel, variant)?;
        let head_table = rotated_entity_table(params, &rot_head, variant, threads)?;
        let tail_table = rotated_entity_table(params, &rot_tail, variant, threads)?;
        let rank_both = |&i: &usize| -> (usize, (f64, f64)) {
            let triple = &split[i];
            let tail_query = query_vector(params, &head_table, &tail_table, triple, Side::Tail);
            let tail_rank = query_rank(
                &tail_table,
                d,
                &tail_query,
                norm,
                triple.tail,
                excluded_candidates(filter, triple, Side::Tail, protocol),
            );
            let head_query = query_vector(params, &head_table, &tail_table, triple, Side::Head);
            let head_rank = query_rank(
                &head_table,
                d,
                &head_query,
                norm,
                triple.head,
                excluded_candidates(filter, triple, Side::Head, protocol),
            );
            (i, (head_rank, tail_rank))
        };
        let group_ranks: Vec<(usize, (f64, f64))> = if threads <= 1 {
            indices.iter().map(rank_both).collect()
        } else {
            indices.par_iter().map(rank_both).collect()
        };
        for (i, ranks) in group_ranks {
            rank_pairs[i] = ranks;
        }
    }
    Ok(EvalReport::from_rank_pairs(&rank_pairs))
}
