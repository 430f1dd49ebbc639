//! Test-only support (`test-utils` feature): an independent scalar
//! reimplementation of the score used as ranking/gradient oracle, a small
//! learnable fixture graph, and a finite-difference tolerance helper.
//!
//! The oracle deliberately uses a different formulation than the library
//! kernels: per-quaternion scalar arithmetic with the scalar/vector
//! cross-product form of the product, so the two paths share no code.

use crate::data::{FilterIndex, RawTriple, Side, Triple};
use crate::evaluator::Protocol;
use crate::model::{ModelParams, NormKind, ParamTable, ScoreVariant};
use crate::quat::Real;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(w1,v1)·(w2,v2) = (w1w2 − v1·v2, w1v2 + w2v1 + v1×v2)`.
pub fn qmul(p: [f64; 4], q: [f64; 4]) -> [f64; 4] {
    let [w1, x1, y1, z1] = p;
    let [w2, x2, y2, z2] = q;
    [
        w1 * w2 - (x1 * x2 + y1 * y2 + z1 * z2),
        w1 * x2 + w2 * x1 + (y1 * z2 - z1 * y2),
        w1 * y2 + w2 * y1 + (z1 * x2 - x1 * z2),
        w1 * z2 + w2 * z1 + (x1 * y2 - y1 * x2),
    ]
}

fn qnormalize(q: [f64; 4], eps: f64) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3] + eps).sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Plain-f64 copy of the model tables, addressed row by row.
pub struct OracleModel {
    pub dim: usize,
    pub entity: Vec<Vec<f64>>,
    pub trans: Vec<Vec<f64>>,
    pub rot_head: Vec<Vec<f64>>,
    pub rot_tail: Vec<Vec<f64>>,
}

impl OracleModel {
    pub fn from_params<T: Real>(params: &ModelParams<T>) -> Self {
        let grab = |table: ParamTable| -> Vec<Vec<f64>> {
            (0..params.table_rows(table))
                .map(|i| {
                    params
                        .row(table, i as u32)
                        .iter()
                        .map(|x| x.to_f64().unwrap())
                        .collect()
                })
                .collect()
        };
        OracleModel {
            dim: params.dim(),
            entity: grab(ParamTable::EntityEmbed),
            trans: grab(ParamTable::RelTrans),
            rot_head: grab(ParamTable::RelRotHead),
            rot_tail: grab(ParamTable::RelRotTail),
        }
    }

    /// `h·rotH + r − t·rotT` as a flat vector in storage layout.
    pub fn residual(&self, head: u32, relation: u32, tail: u32, variant: ScoreVariant) -> Vec<f64> {
        let h = &self.entity[head as usize];
        let t = &self.entity[tail as usize];
        let r = &self.trans[relation as usize];
        let rot_h = &self.rot_head[relation as usize];
        let rot_t = &self.rot_tail[relation as usize];
        let d = self.dim;
        let mut e = vec![0.0; d];
        if variant.is_hamilton() {
            let m = d / 4;
            for i in 0..m {
                let pick = |row: &[f64]| [row[i], row[m + i], row[2 * m + i], row[3 * m + i]];
                let mut qh = pick(rot_h);
                let mut qt = pick(rot_t);
                if variant.is_normalized() {
                    qh = qnormalize(qh, 1e-12);
                    qt = qnormalize(qt, 1e-12);
                }
                let hh = qmul(pick(h), qh);
                let tt = qmul(pick(t), qt);
                let rr = pick(r);
                for k in 0..4 {
                    e[k * m + i] = hh[k] + rr[k] - tt[k];
                }
            }
        } else {
            let m = d / 2;
            for i in 0..m {
                let cmul = |x: (f64, f64), w: (f64, f64)| (x.0 * w.0 - x.1 * w.1, x.0 * w.1 + x.1 * w.0);
                let mut wh = (rot_h[i], rot_h[m + i]);
                let mut wt = (rot_t[i], rot_t[m + i]);
                if variant.is_normalized() {
                    let nh = (wh.0 * wh.0 + wh.1 * wh.1 + 1e-12).sqrt();
                    wh = (wh.0 / nh, wh.1 / nh);
                    let nt = (wt.0 * wt.0 + wt.1 * wt.1 + 1e-12).sqrt();
                    wt = (wt.0 / nt, wt.1 / nt);
                }
                let hh = cmul((h[i], h[m + i]), wh);
                let tt = cmul((t[i], t[m + i]), wt);
                e[i] = hh.0 + r[i] - tt.0;
                e[m + i] = hh.1 + r[m + i] - tt.1;
            }
        }
        e
    }

    pub fn distance(&self, triple: &Triple, variant: ScoreVariant, norm: NormKind) -> f64 {
        let e = self.residual(triple.head, triple.relation, triple.tail, variant);
        match norm {
            NormKind::L1 => e.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => e.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn score(&self, triple: &Triple, variant: ScoreVariant, norm: NormKind) -> f64 {
        -self.distance(triple, variant, norm)
    }

    /// Exhaustive reranking: scores every substitution, drops known true
    /// candidates (except the target) under the filtered protocol, ranks
    /// ties at their average position.
    pub fn rank(
        &self,
        triple: &Triple,
        side: Side,
        filter: &FilterIndex,
        protocol: Protocol,
        variant: ScoreVariant,
        norm: NormKind,
    ) -> f64 {
        let known: &[u32] = match protocol {
            Protocol::Filtered => filter.known_entities(triple, side),
            Protocol::Raw => &[],
        };
        let target = triple.entity(side);
        let target_score = self.score(triple, variant, norm);
        let mut higher = 0u64;
        let mut ties = 0u64;
        for e in 0..self.entity.len() as u32 {
            if e == target || known.binary_search(&e).is_ok() {
                continue;
            }
            let candidate = triple.with_entity(side, e);
            let s = self.score(&candidate, variant, norm);
            if s > target_score {
                higher += 1;
            } else if s == target_score {
                ties += 1;
            }
        }
        1.0 + higher as f64 + ties as f64 / 2.0
    }
}

/// Tolerance check against a finite-difference value: relative where the
/// magnitudes allow it, with an absolute floor under the FD noise level.
pub fn assert_close(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64, context: &str) {
    let err = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    assert!(
        err <= rel_tol * scale + abs_floor,
        "{context}: analytic {analytic} vs numeric {numeric} (err {err:.3e}, allowed {:.3e})",
        rel_tol * scale + abs_floor
    );
}

/// Small learnable knowledge graph: entities partitioned into groups, with a
/// dense `same_group` relation and a cyclic `next` relation inside each
/// group. Held-out pairs are inferable from the group structure, so a
/// trained model can beat chance on valid/test.
pub fn group_graph(
    groups: usize,
    per_group: usize,
    seed: u64,
) -> (Vec<RawTriple>, Vec<RawTriple>, Vec<RawTriple>) {
    let name = |g: usize, i: usize| format!("g{g}e{i}");
    let mut triples: Vec<RawTriple> = Vec::new();
    for g in 0..groups {
        for i in 0..per_group {
            for j in 0..per_group {
                if i != j {
                    triples.push((name(g, i), "same_group".to_string(), name(g, j)));
                }
            }
            triples.push((name(g, i), "next".to_string(), name(g, (i + 1) % per_group)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.shuffle(&mut rng);
    let n = triples.len();
    let test_at = n - n / 10;
    let valid_at = test_at - n / 10;
    let test = triples.split_off(test_at);
    let valid = triples.split_off(valid_at);
    (triples, valid, test)
}
