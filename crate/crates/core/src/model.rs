//! Learnable parameters and the rotation-translation score.
//!
//! A triple `(h, r, t)` is scored by the distance
//! `‖ h ⊗ r◁H + r − t ⊗ r◁T ‖`: head and tail entity embeddings are rotated
//! by relation-specific unit quaternions (normalized at use time, so the
//! gradient flows through the normalization), the relation translation `r`
//! bridges the rotated embeddings, and the norm is L1 or L2 over all `d`
//! real components. Score = −distance; higher is more plausible.
//!
//! Three ablation variants replace the Hamilton product with an elementwise
//! complex (Hadamard) product and/or skip the rotation normalization.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::uniform::SampleUniform;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{Side, Triple};
use crate::error::{Error, Result};
use crate::quat::{self, real, QuatMut, QuatRef, Real};

/// Guard added inside the square root of every use-time normalization.
pub const NORM_EPS: f64 = 1e-12;
/// Guard added to the L2 root before dividing in the backward pass.
const L2_GUARD: f64 = 1e-12;

/// The four scoring-function variants: full model plus three ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreVariant {
    /// Elementwise complex product, raw (unnormalized) rotations.
    #[serde(rename = "hadamard-raw")]
    HadamardRaw,
    /// Elementwise complex product, rotations normalized to unit modulus.
    #[serde(rename = "hadamard-norm")]
    HadamardNormalized,
    /// Hamilton product, raw rotations.
    #[serde(rename = "hamilton-raw")]
    HamiltonRaw,
    /// Hamilton product with unit-quaternion rotations: the full model.
    #[serde(rename = "hamilton-norm")]
    HamiltonNormalized,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 4] = [
        ScoreVariant::HadamardRaw,
        ScoreVariant::HadamardNormalized,
        ScoreVariant::HamiltonRaw,
        ScoreVariant::HamiltonNormalized,
    ];

    pub fn is_hamilton(self) -> bool {
        matches!(self, ScoreVariant::HamiltonRaw | ScoreVariant::HamiltonNormalized)
    }

    pub fn is_normalized(self) -> bool {
        matches!(
            self,
            ScoreVariant::HadamardNormalized | ScoreVariant::HamiltonNormalized
        )
    }

    /// Embedding dimension must be divisible by this.
    pub fn component_divisor(self) -> usize {
        if self.is_hamilton() {
            4
        } else {
            2
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreVariant::HadamardRaw => "hadamard-raw",
            ScoreVariant::HadamardNormalized => "hadamard-norm",
            ScoreVariant::HamiltonRaw => "hamilton-raw",
            ScoreVariant::HamiltonNormalized => "hamilton-norm",
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScoreVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant '{s}' (expected hadamard-raw|hadamard-norm|hamilton-raw|hamilton-norm)"
                ))
            })
    }
}

/// Norm applied to the residual vector in the distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            other => Err(Error::Config(format!("unknown norm '{other}' (expected l1|l2)"))),
        }
    }
}

/// The four learnable tables, row-major flat storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamTable {
    EntityEmbed,
    RelTrans,
    RelRotHead,
    RelRotTail,
}

impl ParamTable {
    pub const ALL: [ParamTable; 4] = [
        ParamTable::EntityEmbed,
        ParamTable::RelTrans,
        ParamTable::RelRotHead,
        ParamTable::RelRotTail,
    ];

    pub(crate) fn index(self) -> usize {
        match self {
            ParamTable::EntityEmbed => 0,
            ParamTable::RelTrans => 1,
            ParamTable::RelRotHead => 2,
            ParamTable::RelRotTail => 3,
        }
    }
}

/// Entity embedding table plus the three relation tables (translation,
/// head rotation, tail rotation), each `rows × dim` and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    tables: [Vec<T>; 4],
}

impl<T: Real> ModelParams<T> {
    pub fn from_tables(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        entity_embed: Vec<T>,
        rel_trans: Vec<T>,
        rel_rot_head: Vec<T>,
        rel_rot_tail: Vec<T>,
    ) -> Result<Self> {
        let tables = [entity_embed, rel_trans, rel_rot_head, rel_rot_tail];
        let expected = [
            num_entities * dim,
            num_relations * dim,
            num_relations * dim,
            num_relations * dim,
        ];
        for (table, want) in tables.iter().zip(expected) {
            if table.len() != want {
                return Err(Error::LengthMismatch {
                    left: table.len(),
                    right: want,
                    context: "parameter table size",
                });
            }
        }
        Ok(ModelParams {
            num_entities,
            num_relations,
            dim,
            tables,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self, table: ParamTable) -> &[T] {
        &self.tables[table.index()]
    }

    pub fn table_mut(&mut self, table: ParamTable) -> &mut [T] {
        &mut self.tables[table.index()]
    }

    pub fn table_rows(&self, table: ParamTable) -> usize {
        match table {
            ParamTable::EntityEmbed => self.num_entities,
            _ => self.num_relations,
        }
    }

    pub fn row(&self, table: ParamTable, id: u32) -> &[T] {
        let d = self.dim;
        &self.tables[table.index()][id as usize * d..(id as usize + 1) * d]
    }

    pub fn row_mut(&mut self, table: ParamTable, id: u32) -> &mut [T] {
        let d = self.dim;
        &mut self.tables[table.index()][id as usize * d..(id as usize + 1) * d]
    }

    pub fn all_finite(&self) -> bool {
        self.tables
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn check_batch(&self, batch: &[Triple]) -> Result<()> {
        for t in batch {
            if t.head as usize >= self.num_entities || t.tail as usize >= self.num_entities {
                let id = if t.head as usize >= self.num_entities {
                    t.head
                } else {
                    t.tail
                };
                return Err(Error::IdOutOfRange {
                    kind: "entity",
                    id,
                    bound: self.num_entities,
                });
            }
            if t.relation as usize >= self.num_relations {
                return Err(Error::IdOutOfRange {
                    kind: "relation",
                    id: t.relation,
                    bound: self.num_relations,
                });
            }
        }
        Ok(())
    }
}

/// Initialize all tables uniformly from `[−(γ+2)/d, +(γ+2)/d]`,
/// deterministically from `config.seed`. Rotation tables are drawn the same
/// way; they are normalized at use time.
pub fn init_params<T>(
    num_entities: usize,
    num_relations: usize,
    config: &TrainConfig,
) -> Result<ModelParams<T>>
where
    T: Real + SampleUniform,
{
    config.validate()?;
    if num_entities == 0 || num_relations == 0 {
        return Err(Error::Config(
            "cannot initialize a model over an empty vocabulary".to_string(),
        ));
    }
    let range = real::<T>((config.gamma + 2.0) / config.dim as f64);
    let dist = Uniform::new_inclusive(-range, range);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |len: usize| -> Vec<T> { (0..len).map(|_| dist.sample(&mut rng)).collect() };
    let entity = draw(num_entities * config.dim);
    let trans = draw(num_relations * config.dim);
    let rot_head = draw(num_relations * config.dim);
    let rot_tail = draw(num_relations * config.dim);
    ModelParams::from_tables(
        num_entities,
        num_relations,
        config.dim,
        entity,
        trans,
        rot_head,
        rot_tail,
    )
}

/// Scores aligned with the triples they belong to.
#[derive(Clone, Debug)]
pub struct ScoreBatch<T> {
    pub triples: Vec<Triple>,
    pub scores: Vec<T>,
}

/// Gradients for the parameter rows a batch touched: row id → dense d-vector.
#[derive(Clone, Debug)]
pub struct SparseGrads<T> {
    dim: usize,
    maps: [HashMap<u32, Vec<T>>; 4],
}

impl<T: Real> SparseGrads<T> {
    pub fn new(dim: usize) -> Self {
        SparseGrads {
            dim,
            maps: Default::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_mut(&mut self, table: ParamTable, id: u32) -> &mut [T] {
        let dim = self.dim;
        self.maps[table.index()]
            .entry(id)
            .or_insert_with(|| vec![T::zero(); dim])
    }

    pub fn row(&self, table: ParamTable, id: u32) -> Option<&[T]> {
        self.maps[table.index()].get(&id).map(Vec::as_slice)
    }

    pub fn rows(&self, table: ParamTable) -> impl Iterator<Item = (u32, &[T])> {
        self.maps[table.index()]
            .iter()
            .map(|(id, row)| (*id, row.as_slice()))
    }

    /// Touched row ids, sorted (stable iteration for the optimizer).
    pub fn touched(&self, table: ParamTable) -> Vec<u32> {
        let mut ids: Vec<u32> = self.maps[table.index()].keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn num_rows(&self) -> usize {
        self.maps.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.iter().all(HashMap::is_empty)
    }

    pub fn all_finite(&self) -> bool {
        self.maps
            .iter()
            .all(|m| m.values().all(|row| row.iter().all(|x| x.is_finite())))
    }

    /// Elementwise add of another gradient set (used to merge per-chunk
    /// results in a fixed order, keeping reductions deterministic).
    pub fn add_from(&mut self, other: &SparseGrads<T>) {
        for table in ParamTable::ALL {
            for (id, row) in other.rows(table) {
                let dst = self.row_mut(table, id);
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += *s;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Variant-dispatched kernels over flat rows
// ---------------------------------------------------------------------------

/// Write the use-time rotation row: normalized per coordinate for the
/// normalized variants, a plain copy for the raw ones.
pub(crate) fn effective_rotation<T: Real>(raw: &[T], variant: ScoreVariant, out: &mut [T]) -> Result<()> {
    if variant.is_normalized() {
        let eps = real::<T>(NORM_EPS);
        if variant.is_hamilton() {
            quat::normalize_into(QuatRef::from_flat(raw)?, eps, QuatMut::from_flat(out)?)?;
        } else {
            let (wr, wi) = raw.split_at(raw.len() / 2);
            let (or, oi) = out.split_at_mut(raw.len() / 2);
            for k in 0..wr.len() {
                let inv = (wr[k] * wr[k] + wi[k] * wi[k] + eps).sqrt().recip();
                or[k] = wr[k] * inv;
                oi[k] = wi[k] * inv;
            }
        }
    } else {
        out.copy_from_slice(raw);
    }
    Ok(())
}

/// `out = x · rot`: Hamilton product per quaternion coordinate, or complex
/// product per complex coordinate.
pub(crate) fn apply_rotation<T: Real>(x: &[T], rot: &[T], variant: ScoreVariant, out: &mut [T]) -> Result<()> {
    if variant.is_hamilton() {
        quat::hamilton_product_into(
            QuatRef::from_flat(x)?,
            QuatRef::from_flat(rot)?,
            QuatMut::from_flat(out)?,
        )
    } else {
        let mc = x.len() / 2;
        let (xr, xi) = x.split_at(mc);
        let (wr, wi) = rot.split_at(mc);
        let (or, oi) = out.split_at_mut(mc);
        for k in 0..mc {
            or[k] = xr[k] * wr[k] - xi[k] * wi[k];
            oi[k] = xr[k] * wi[k] + xi[k] * wr[k];
        }
        Ok(())
    }
}

/// Accumulate the gradient of `x · rot` w.r.t. the entity row `x`:
/// `grad += upstream · conj(rot)`.
fn add_rotation_grad_entity<T: Real>(
    upstream: &[T],
    rot: &[T],
    variant: ScoreVariant,
    grad: &mut [T],
) -> Result<()> {
    if variant.is_hamilton() {
        quat::add_grad_wrt_lhs(
            QuatRef::from_flat(upstream)?,
            QuatRef::from_flat(rot)?,
            QuatMut::from_flat(grad)?,
        )
    } else {
        let mc = upstream.len() / 2;
        let (ur, ui) = upstream.split_at(mc);
        let (wr, wi) = rot.split_at(mc);
        let (gr, gi) = grad.split_at_mut(mc);
        for k in 0..mc {
            gr[k] += ur[k] * wr[k] + ui[k] * wi[k];
            gi[k] += ui[k] * wr[k] - ur[k] * wi[k];
        }
        Ok(())
    }
}

/// Accumulate the gradient of `x · rot` w.r.t. the *effective* rotation:
/// `grad += conj(x) · upstream`.
fn add_rotation_grad_rot<T: Real>(
    x: &[T],
    upstream: &[T],
    variant: ScoreVariant,
    grad: &mut [T],
) -> Result<()> {
    if variant.is_hamilton() {
        quat::add_grad_wrt_rhs(
            QuatRef::from_flat(x)?,
            QuatRef::from_flat(upstream)?,
            QuatMut::from_flat(grad)?,
        )
    } else {
        let mc = upstream.len() / 2;
        let (xr, xi) = x.split_at(mc);
        let (ur, ui) = upstream.split_at(mc);
        let (gr, gi) = grad.split_at_mut(mc);
        for k in 0..mc {
            gr[k] += ur[k] * xr[k] + ui[k] * xi[k];
            gi[k] += ui[k] * xr[k] - ur[k] * xi[k];
        }
        Ok(())
    }
}

/// Chain a gradient w.r.t. the effective rotation back to the raw stored
/// row: through the use-time normalization for normalized variants, directly
/// otherwise.
fn add_effective_rotation_backward<T: Real>(
    raw: &[T],
    upstream_eff: &[T],
    variant: ScoreVariant,
    grad_raw: &mut [T],
) -> Result<()> {
    if !variant.is_normalized() {
        for (g, u) in grad_raw.iter_mut().zip(upstream_eff) {
            *g += *u;
        }
        return Ok(());
    }
    let eps = real::<T>(NORM_EPS);
    if variant.is_hamilton() {
        quat::add_normalize_backward(
            QuatRef::from_flat(raw)?,
            eps,
            QuatRef::from_flat(upstream_eff)?,
            QuatMut::from_flat(grad_raw)?,
        )
    } else {
        let mc = raw.len() / 2;
        let (wr, wi) = raw.split_at(mc);
        let (ur, ui) = upstream_eff.split_at(mc);
        let (gr, gi) = grad_raw.split_at_mut(mc);
        for k in 0..mc {
            let n2 = wr[k] * wr[k] + wi[k] * wi[k] + eps;
            let n = n2.sqrt();
            let dot = ur[k] * wr[k] + ui[k] * wi[k];
            let scale = dot / (n2 * n);
            gr[k] += ur[k] / n - wr[k] * scale;
            gi[k] += ui[k] / n - wi[k] * scale;
        }
        Ok(())
    }
}

pub(crate) fn norm_value<T: Real>(residual: &[T], norm: NormKind) -> T {
    match norm {
        NormKind::L1 => residual.iter().map(|x| x.abs()).sum(),
        NormKind::L2 => residual.iter().map(|x| *x * *x).sum::<T>().sqrt(),
    }
}

/// Gradient of the norm w.r.t. the residual, scaled by `g = dL/d(distance)`.
/// L1 uses the sign subgradient with `sign(0) = 0`; L2 guards the root.
fn norm_backward<T: Real>(residual: &[T], norm: NormKind, dist: T, g: T, out: &mut [T]) {
    match norm {
        NormKind::L1 => {
            for (o, e) in out.iter_mut().zip(residual) {
                *o = if *e > T::zero() {
                    g
                } else if *e < T::zero() {
                    -g
                } else {
                    T::zero()
                };
            }
        }
        NormKind::L2 => {
            let scale = g / (dist + real::<T>(L2_GUARD));
            for (o, e) in out.iter_mut().zip(residual) {
                *o = *e * scale;
            }
        }
    }
}

/// Per-relation effective rotations, cached because batches repeat relations.
struct RotationCache<T> {
    dim: usize,
    variant: ScoreVariant,
    rows: HashMap<u32, (Vec<T>, Vec<T>)>,
}

impl<T: Real> RotationCache<T> {
    fn new(dim: usize, variant: ScoreVariant) -> Self {
        RotationCache {
            dim,
            variant,
            rows: HashMap::new(),
        }
    }

    fn get(&mut self, params: &ModelParams<T>, rel: u32) -> Result<(&[T], &[T])> {
        if !self.rows.contains_key(&rel) {
            let mut head = vec![T::zero(); self.dim];
            let mut tail = vec![T::zero(); self.dim];
            effective_rotation(params.row(ParamTable::RelRotHead, rel), self.variant, &mut head)?;
            effective_rotation(params.row(ParamTable::RelRotTail, rel), self.variant, &mut tail)?;
            self.rows.insert(rel, (head, tail));
        }
        let (head, tail) = self.rows.get(&rel).expect("just inserted");
        Ok((head, tail))
    }
}

/// Distance `‖ h·r◁H + r − t·r◁T ‖` for every triple in the batch.
pub fn distance<T: Real>(
    params: &ModelParams<T>,
    batch: &[Triple],
    variant: ScoreVariant,
    norm: NormKind,
) -> Result<Vec<T>> {
    params.check_batch(batch)?;
    let d = params.dim();
    let mut cache = RotationCache::new(d, variant);
    let mut rotated_h = vec![T::zero(); d];
    let mut rotated_t = vec![T::zero(); d];
    let mut residual = vec![T::zero(); d];
    let mut out = Vec::with_capacity(batch.len());
    for triple in batch {
        let (rot_h, rot_t) = cache.get(params, triple.relation)?;
        apply_rotation(
            params.row(ParamTable::EntityEmbed, triple.head),
            rot_h,
            variant,
            &mut rotated_h,
        )?;
        apply_rotation(
            params.row(ParamTable::EntityEmbed, triple.tail),
            rot_t,
            variant,
            &mut rotated_t,
        )?;
        let trans = params.row(ParamTable::RelTrans, triple.relation);
        for k in 0..d {
            residual[k] = rotated_h[k] + trans[k] - rotated_t[k];
        }
        out.push(norm_value(&residual, norm));
    }
    Ok(out)
}

/// Score `f(h, t) = −distance(h, t)`.
pub fn score<T: Real>(
    params: &ModelParams<T>,
    batch: &[Triple],
    variant: ScoreVariant,
    norm: NormKind,
) -> Result<ScoreBatch<T>> {
    let scores = distance(params, batch, variant, norm)?
        .into_iter()
        .map(|d| -d)
        .collect();
    Ok(ScoreBatch {
        triples: batch.to_vec(),
        scores,
    })
}

/// Parameter gradients of `Σ_i upstream_i · score_i`, sparse over the rows
/// the batch touches. Forward intermediates are recomputed.
pub fn score_backward<T: Real>(
    params: &ModelParams<T>,
    batch: &[Triple],
    variant: ScoreVariant,
    norm: NormKind,
    upstream: &[T],
) -> Result<SparseGrads<T>> {
    let negated: Vec<T> = upstream.iter().map(|g| -*g).collect();
    distance_backward(params, batch, variant, norm, &negated)
}

/// Parameter gradients of `Σ_i upstream_i · distance_i`.
pub fn distance_backward<T: Real>(
    params: &ModelParams<T>,
    batch: &[Triple],
    variant: ScoreVariant,
    norm: NormKind,
    upstream: &[T],
) -> Result<SparseGrads<T>> {
    if upstream.len() != batch.len() {
        return Err(Error::LengthMismatch {
            left: upstream.len(),
            right: batch.len(),
            context: "upstream gradient per triple",
        });
    }
    params.check_batch(batch)?;
    let d = params.dim();
    let mut grads = SparseGrads::new(d);
    let mut cache = RotationCache::new(d, variant);
    let mut rotated_h = vec![T::zero(); d];
    let mut rotated_t = vec![T::zero(); d];
    let mut residual = vec![T::zero(); d];
    let mut grad_e = vec![T::zero(); d];
    let mut neg_grad_e = vec![T::zero(); d];
    let mut grad_eff = vec![T::zero(); d];
    for (triple, &g) in batch.iter().zip(upstream) {
        if g == T::zero() {
            continue;
        }
        let (rot_h, rot_t) = {
            let (h, t) = cache.get(params, triple.relation)?;
            (h.to_vec(), t.to_vec())
        };
        let h_row = params.row(ParamTable::EntityEmbed, triple.head);
        let t_row = params.row(ParamTable::EntityEmbed, triple.tail);
        apply_rotation(h_row, &rot_h, variant, &mut rotated_h)?;
        apply_rotation(t_row, &rot_t, variant, &mut rotated_t)?;
        let trans = params.row(ParamTable::RelTrans, triple.relation);
        for k in 0..d {
            residual[k] = rotated_h[k] + trans[k] - rotated_t[k];
        }
        let dist = norm_value(&residual, norm);
        norm_backward(&residual, norm, dist, g, &mut grad_e);
        for k in 0..d {
            neg_grad_e[k] = -grad_e[k];
        }

        // translation row
        {
            let row = grads.row_mut(ParamTable::RelTrans, triple.relation);
            for k in 0..d {
                row[k] += grad_e[k];
            }
        }
        // head entity and head rotation
        add_rotation_grad_entity(
            &grad_e,
            &rot_h,
            variant,
            grads.row_mut(ParamTable::EntityEmbed, triple.head),
        )?;
        grad_eff.iter_mut().for_each(|x| *x = T::zero());
        add_rotation_grad_rot(h_row, &grad_e, variant, &mut grad_eff)?;
        add_effective_rotation_backward(
            params.row(ParamTable::RelRotHead, triple.relation),
            &grad_eff,
            variant,
            grads.row_mut(ParamTable::RelRotHead, triple.relation),
        )?;
        // tail entity and tail rotation (enters the residual negatively)
        add_rotation_grad_entity(
            &neg_grad_e,
            &rot_t,
            variant,
            grads.row_mut(ParamTable::EntityEmbed, triple.tail),
        )?;
        grad_eff.iter_mut().for_each(|x| *x = T::zero());
        add_rotation_grad_rot(t_row, &neg_grad_e, variant, &mut grad_eff)?;
        add_effective_rotation_backward(
            params.row(ParamTable::RelRotTail, triple.relation),
            &grad_eff,
            variant,
            grads.row_mut(ParamTable::RelRotTail, triple.relation),
        )?;
    }
    Ok(grads)
}

// ---------------------------------------------------------------------------
// Grouped forward/backward over a positive plus its corruption candidates:
// the training hot path. The uncorrupted part of the residual is computed
// once per positive and shared across its negatives.
// ---------------------------------------------------------------------------

/// Distances for positives and their negatives: returns
/// `(pos_dist[B], neg_dist[B·n])` where negative `j` of positive `i` replaces
/// the entity on `side` with `neg_entities[i·n + j]`.
pub(crate) fn grouped_forward<T: Real>(
    params: &ModelParams<T>,
    positives: &[Triple],
    neg_entities: &[u32],
    n: usize,
    side: Side,
    variant: ScoreVariant,
    norm: NormKind,
) -> Result<(Vec<T>, Vec<T>)> {
    params.check_batch(positives)?;
    let d = params.dim();
    let mut cache = RotationCache::new(d, variant);
    let mut rotated = vec![T::zero(); d];
    let mut base = vec![T::zero(); d];
    let mut residual = vec![T::zero(); d];
    let mut pos_dist = Vec::with_capacity(positives.len());
    let mut neg_dist = Vec::with_capacity(positives.len() * n);
    for (i, triple) in positives.iter().enumerate() {
        let (rot_h, rot_t) = {
            let (h, t) = cache.get(params, triple.relation)?;
            (h.to_vec(), t.to_vec())
        };
        let trans = params.row(ParamTable::RelTrans, triple.relation);
        // base: the shared part of the residual; candidates fill the rest
        let (cand_rot, cand_sign) = match side {
            Side::Tail => {
                apply_rotation(
                    params.row(ParamTable::EntityEmbed, triple.head),
                    &rot_h,
                    variant,
                    &mut rotated,
                )?;
                for k in 0..d {
                    base[k] = rotated[k] + trans[k];
                }
                (&rot_t, -T::one())
            }
            Side::Head => {
                apply_rotation(
                    params.row(ParamTable::EntityEmbed, triple.tail),
                    &rot_t,
                    variant,
                    &mut rotated,
                )?;
                for k in 0..d {
                    base[k] = trans[k] - rotated[k];
                }
                (&rot_h, T::one())
            }
        };
        let candidate_distance = |entity: u32,
                                      rotated: &mut Vec<T>,
                                      residual: &mut Vec<T>|
         -> Result<T> {
            apply_rotation(
                params.row(ParamTable::EntityEmbed, entity),
                cand_rot,
                variant,
                rotated,
            )?;
            for k in 0..d {
                residual[k] = base[k] + cand_sign * rotated[k];
            }
            Ok(norm_value(residual, norm))
        };
        pos_dist.push(candidate_distance(triple.entity(side), &mut rotated, &mut residual)?);
        for &neg in &neg_entities[i * n..(i + 1) * n] {
            if neg as usize >= params.num_entities() {
                return Err(Error::IdOutOfRange {
                    kind: "entity",
                    id: neg,
                    bound: params.num_entities(),
                });
            }
            neg_dist.push(candidate_distance(neg, &mut rotated, &mut residual)?);
        }
    }
    Ok((pos_dist, neg_dist))
}

/// Backward companion of [`grouped_forward`]: accumulates parameter
/// gradients of `Σ upstream · distance` over positives and negatives.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grouped_backward<T: Real>(
    params: &ModelParams<T>,
    positives: &[Triple],
    neg_entities: &[u32],
    n: usize,
    side: Side,
    variant: ScoreVariant,
    norm: NormKind,
    upstream_pos: &[T],
    upstream_neg: &[T],
    grads: &mut SparseGrads<T>,
) -> Result<()> {
    params.check_batch(positives)?;
    if upstream_pos.len() != positives.len() || upstream_neg.len() != positives.len() * n {
        return Err(Error::LengthMismatch {
            left: upstream_pos.len() + upstream_neg.len(),
            right: positives.len() * (n + 1),
            context: "grouped upstream gradients",
        });
    }
    let d = params.dim();
    let mut cache = RotationCache::new(d, variant);
    let mut rotated = vec![T::zero(); d];
    let mut base = vec![T::zero(); d];
    let mut residual = vec![T::zero(); d];
    let mut grad_e = vec![T::zero(); d];
    let mut grad_base = vec![T::zero(); d];
    let mut grad_cand = vec![T::zero(); d];
    let mut grad_eff_cand = vec![T::zero(); d];
    let mut grad_eff_anchor = vec![T::zero(); d];
    for (i, triple) in positives.iter().enumerate() {
        let (rot_h, rot_t) = {
            let (h, t) = cache.get(params, triple.relation)?;
            (h.to_vec(), t.to_vec())
        };
        let trans = params.row(ParamTable::RelTrans, triple.relation);
        let anchor_entity = triple.entity(side.flipped());
        let anchor_row = params.row(ParamTable::EntityEmbed, anchor_entity);
        let (anchor_rot, cand_rot, cand_sign) = match side {
            Side::Tail => (&rot_h, &rot_t, -T::one()),
            Side::Head => (&rot_t, &rot_h, T::one()),
        };
        apply_rotation(anchor_row, anchor_rot, variant, &mut rotated)?;
        match side {
            Side::Tail => {
                for k in 0..d {
                    base[k] = rotated[k] + trans[k];
                }
            }
            Side::Head => {
                for k in 0..d {
                    base[k] = trans[k] - rotated[k];
                }
            }
        }
        grad_base.iter_mut().for_each(|x| *x = T::zero());
        grad_eff_cand.iter_mut().for_each(|x| *x = T::zero());
        grad_eff_anchor.iter_mut().for_each(|x| *x = T::zero());

        let candidates = std::iter::once((triple.entity(side), upstream_pos[i])).chain(
            neg_entities[i * n..(i + 1) * n]
                .iter()
                .zip(&upstream_neg[i * n..(i + 1) * n])
                .map(|(e, g)| (*e, *g)),
        );
        for (entity, g) in candidates {
            if g == T::zero() {
                continue;
            }
            let cand_row = params.row(ParamTable::EntityEmbed, entity);
            apply_rotation(cand_row, cand_rot, variant, &mut rotated)?;
            for k in 0..d {
                residual[k] = base[k] + cand_sign * rotated[k];
            }
            let dist = norm_value(&residual, norm);
            norm_backward(&residual, norm, dist, g, &mut grad_e);
            for k in 0..d {
                grad_base[k] += grad_e[k];
            }
            // gradient w.r.t. the rotated candidate = cand_sign · grad_e
            for k in 0..d {
                grad_cand[k] = cand_sign * grad_e[k];
            }
            add_rotation_grad_entity(
                &grad_cand,
                cand_rot,
                variant,
                grads.row_mut(ParamTable::EntityEmbed, entity),
            )?;
            add_rotation_grad_rot(cand_row, &grad_cand, variant, &mut grad_eff_cand)?;
        }

        // shared base: translation row plus the anchor entity and rotation
        {
            let row = grads.row_mut(ParamTable::RelTrans, triple.relation);
            for k in 0..d {
                row[k] += grad_base[k];
            }
        }
        let anchor_sign = match side {
            Side::Tail => T::one(),
            Side::Head => -T::one(),
        };
        for k in 0..d {
            grad_cand[k] = anchor_sign * grad_base[k];
        }
        add_rotation_grad_entity(
            &grad_cand,
            anchor_rot,
            variant,
            grads.row_mut(ParamTable::EntityEmbed, anchor_entity),
        )?;
        add_rotation_grad_rot(anchor_row, &grad_cand, variant, &mut grad_eff_anchor)?;

        let (cand_table, anchor_table) = match side {
            Side::Tail => (ParamTable::RelRotTail, ParamTable::RelRotHead),
            Side::Head => (ParamTable::RelRotHead, ParamTable::RelRotTail),
        };
        add_effective_rotation_backward(
            params.row(cand_table, triple.relation),
            &grad_eff_cand,
            variant,
            grads.row_mut(cand_table, triple.relation),
        )?;
        add_effective_rotation_backward(
            params.row(anchor_table, triple.relation),
            &grad_eff_anchor,
            variant,
            grads.row_mut(anchor_table, triple.relation),
        )?;
    }
    Ok(())
}
