//! Self-adversarial margin loss, sparse adaptive-moment updates, and the
//! optimization loop with validation-driven model selection.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::TrainConfig;
use crate::data::{Dataset, Side, Triple};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_split, Protocol};
use crate::model::{
    self, init_params, ModelParams, NormKind, ParamTable, ScoreVariant, SparseGrads,
};
use crate::quat::{real, Real};
use crate::sampler::{self, NegativeSampler};

/// Positives per work unit when gradient computation is parallelized.
/// Fixed (not derived from the thread count) so reduction order, and hence
/// the result, does not depend on how many workers run.
const GRAD_CHUNK: usize = 64;

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow: `max(x, 0) + ln1p(e^{−|x|})`.
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + x.abs().neg().exp().ln_1p()
}

/// Per-distance partial derivatives of the batch loss.
#[derive(Clone, Debug)]
pub struct LossGrads<T> {
    /// `∂L/∂d_pos`, one per positive; always ≥ 0.
    pub wrt_pos: Vec<T>,
    /// `∂L/∂d_neg` flattened `B·n`; always ≤ 0.
    pub wrt_neg: Vec<T>,
}

/// Self-adversarial margin loss, averaged over the batch:
/// per positive `−log σ(γ − d_pos) − Σ_j p_j · log σ(d_neg_j − γ)`,
/// with the weights `p` treated as constants.
///
/// Returns the loss and its analytic gradients w.r.t. every distance,
/// computed in softplus form so arbitrary margins stay finite.
pub fn loss<T: Real>(
    pos_distances: &[T],
    neg_distances: &[T],
    weights: &[T],
    n: usize,
    gamma: T,
) -> Result<(T, LossGrads<T>)> {
    let b = pos_distances.len();
    if neg_distances.len() != b * n || weights.len() != b * n || n == 0 {
        return Err(Error::LengthMismatch {
            left: neg_distances.len(),
            right: b * n.max(1),
            context: "loss distances/weights shape",
        });
    }
    if b == 0 {
        return Ok((
            T::zero(),
            LossGrads {
                wrt_pos: Vec::new(),
                wrt_neg: Vec::new(),
            },
        ));
    }
    let inv_b = T::from(b).expect("batch size fits in float").recip();
    let mut total = T::zero();
    let mut wrt_pos = Vec::with_capacity(b);
    let mut wrt_neg = Vec::with_capacity(b * n);
    for i in 0..b {
        let dp = pos_distances[i];
        total += softplus(dp - gamma);
        wrt_pos.push(sigmoid(dp - gamma) * inv_b);
        for j in 0..n {
            let dn = neg_distances[i * n + j];
            let p = weights[i * n + j];
            total += p * softplus(gamma - dn);
            wrt_neg.push(-p * sigmoid(gamma - dn) * inv_b);
        }
    }
    Ok((total * inv_b, LossGrads { wrt_pos, wrt_neg }))
}

struct TableMoments {
    m: Vec<f32>,
    v: Vec<f32>,
    steps: Vec<u32>,
}

/// First/second-moment accumulators mirroring every parameter table, with
/// per-row step counters so sparse updates bias-correct exactly like a dense
/// schedule would for the touched rows.
pub struct OptimizerState {
    dim: usize,
    tables: [TableMoments; 4],
}

impl OptimizerState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        let make = |table: ParamTable| {
            let rows = params.table_rows(table);
            TableMoments {
                m: vec![0.0; rows * params.dim()],
                v: vec![0.0; rows * params.dim()],
                steps: vec![0; rows],
            }
        };
        OptimizerState {
            dim: params.dim(),
            tables: [
                make(ParamTable::EntityEmbed),
                make(ParamTable::RelTrans),
                make(ParamTable::RelRotHead),
                make(ParamTable::RelRotTail),
            ],
        }
    }

    pub fn row_step_count(&self, table: ParamTable, id: u32) -> u32 {
        self.tables[table.index()].steps[id as usize]
    }

    pub fn second_moment_row(&self, table: ParamTable, id: u32) -> &[f32] {
        let d = self.dim;
        &self.tables[table.index()].v[id as usize * d..(id as usize + 1) * d]
    }
}

/// One adaptive-moment update over exactly the rows present in `grads`.
/// Untouched rows and their moments are left alone.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &SparseGrads<f32>,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::NonFinite {
            what: "gradient",
            detail: "sparse gradients contain NaN or Inf; step aborted".to_string(),
        });
    }
    let d = params.dim();
    let lr = config.learning_rate as f32;
    let beta1 = config.adam_beta1 as f32;
    let beta2 = config.adam_beta2 as f32;
    let eps = config.adam_eps as f32;
    for table in ParamTable::ALL {
        let moments = &mut state.tables[table.index()];
        for id in grads.touched(table) {
            let grad = grads.row(table, id).expect("touched row present");
            let at = id as usize * d;
            let t = moments.steps[id as usize] + 1;
            moments.steps[id as usize] = t;
            let bias1 = 1.0 - beta1.powi(t as i32);
            let bias2 = 1.0 - beta2.powi(t as i32);
            let row = params.row_mut(table, id);
            let m = &mut moments.m[at..at + d];
            let v = &mut moments.v[at..at + d];
            let mut finite = true;
            for k in 0..d {
                let g = grad[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                row[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                finite &= row[k].is_finite();
            }
            if !finite {
                return Err(Error::NonFinite {
                    what: "parameter",
                    detail: format!("row {id} of {table:?} after update"),
                });
            }
        }
    }
    Ok(())
}

/// Run-time knobs that are not hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    /// Worker count for gradient and evaluation parallelism. `1` runs fully
    /// sequentially and is the reproducibility contract.
    pub threads: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { threads: 1 }
    }
}

/// One validation-point record of the training log.
#[derive(Clone, Debug, Serialize)]
pub struct LogPoint {
    pub step: u64,
    /// Mean batch loss since the previous validation point.
    pub loss: f64,
    /// Combined filtered MRR on the validation split (0 when it is empty).
    pub valid_mrr: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub points: Vec<LogPoint>,
    /// Populated when the run stopped early (non-finite loss or gradients).
    pub aborted: Option<String>,
    /// Negative-sampling rejection-cap fallbacks over the whole run.
    pub fallback_draws: u64,
    pub best_step: u64,
    pub best_valid_mrr: f64,
}

pub struct TrainOutcome {
    /// Parameters at the best validation MRR seen (the model to evaluate).
    pub best: ModelParams<f32>,
    /// Parameters after the last completed step.
    pub final_params: ModelParams<f32>,
    pub log: TrainLog,
}

/// Both paths (sequential and parallel) compute per-chunk results with the
/// same fixed chunking and merge them in chunk order, so the accumulated
/// floats are identical for every thread count.
#[allow(clippy::too_many_arguments)]
fn step_forward(
    params: &ModelParams<f32>,
    positives: &[Triple],
    negatives: &[u32],
    n: usize,
    side: Side,
    variant: ScoreVariant,
    norm: NormKind,
    threads: usize,
) -> Result<(Vec<f32>, Vec<f32>)> {
    let run_chunk = |(pos, neg): (&[Triple], &[u32])| {
        model::grouped_forward(params, pos, neg, n, side, variant, norm)
    };
    let chunks: Vec<(Vec<f32>, Vec<f32>)> = if threads <= 1 {
        positives
            .chunks(GRAD_CHUNK)
            .zip(negatives.chunks(GRAD_CHUNK * n))
            .map(run_chunk)
            .collect::<Result<_>>()?
    } else {
        positives
            .par_chunks(GRAD_CHUNK)
            .zip(negatives.par_chunks(GRAD_CHUNK * n))
            .map(run_chunk)
            .collect::<Result<_>>()?
    };
    let mut pos_dist = Vec::with_capacity(positives.len());
    let mut neg_dist = Vec::with_capacity(positives.len() * n);
    for (p, ng) in chunks {
        pos_dist.extend(p);
        neg_dist.extend(ng);
    }
    Ok((pos_dist, neg_dist))
}

#[allow(clippy::too_many_arguments)]
fn step_backward(
    params: &ModelParams<f32>,
    positives: &[Triple],
    negatives: &[u32],
    n: usize,
    side: Side,
    variant: ScoreVariant,
    norm: NormKind,
    grads_wrt: &LossGrads<f32>,
    threads: usize,
) -> Result<SparseGrads<f32>> {
    let chunk_count = positives.len().div_ceil(GRAD_CHUNK);
    let run_chunk = |c: usize| -> Result<SparseGrads<f32>> {
        let lo = c * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(positives.len());
        let mut grads = SparseGrads::new(params.dim());
        model::grouped_backward(
            params,
            &positives[lo..hi],
            &negatives[lo * n..hi * n],
            n,
            side,
            variant,
            norm,
            &grads_wrt.wrt_pos[lo..hi],
            &grads_wrt.wrt_neg[lo * n..hi * n],
            &mut grads,
        )?;
        Ok(grads)
    };
    let partials: Vec<SparseGrads<f32>> = if threads <= 1 {
        (0..chunk_count).map(run_chunk).collect::<Result<_>>()?
    } else {
        (0..chunk_count)
            .into_par_iter()
            .map(run_chunk)
            .collect::<Result<_>>()?
    };
    // merge in chunk order: float accumulation stays deterministic
    let mut iter = partials.into_iter();
    let mut grads = iter.next().expect("at least one chunk");
    for partial in iter {
        grads.add_from(&partial);
    }
    Ok(grads)
}

/// Run the optimization loop: `max_steps` minibatches of uniformly sampled
/// train triples, alternating head/tail corruption, evaluating filtered MRR
/// on the validation split every `valid_every` steps and keeping the best
/// checkpoint. Deterministic given the config seed (single-threaded mode is
/// the guarantee; the ordered reduction keeps multi-threaded runs stable on
/// this build as well).
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    options: &TrainOptions,
    mut on_log: impl FnMut(&LogPoint),
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.store.train.is_empty() {
        return Err(Error::Config("training split is empty".to_string()));
    }
    let num_entities = dataset.num_entities();
    let mut params: ModelParams<f32> = init_params(num_entities, dataset.num_relations(), config)?;
    let mut log = TrainLog::default();
    if config.max_steps == 0 {
        return Ok(TrainOutcome {
            best: params.clone(),
            final_params: params,
            log,
        });
    }

    let mut state = OptimizerState::new(&params);
    let mut sampler = NegativeSampler::new(num_entities, config.negatives);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1); // init_params consumed stream 0
    let train_triples = &dataset.store.train;
    let alpha = real::<f32>(config.alpha);
    let gamma = real::<f32>(config.gamma);
    let n = config.negatives;

    let mut best: Option<ModelParams<f32>> = None;
    let mut window_loss = 0.0f64;
    let mut window_count = 0u64;
    let started = Instant::now();

    for step in 1..=config.max_steps {
        let positives: Vec<Triple> = (0..config.batch_size)
            .map(|_| train_triples[rng.gen_range(0..train_triples.len())])
            .collect();
        let neg_batch = sampler.sample_batch(&positives, &dataset.filter_train, &mut rng);
        log.fallback_draws += neg_batch.fallback_draws;
        let side = neg_batch.sides[0];

        let (pos_dist, neg_dist) = step_forward(
            &params,
            &positives,
            &neg_batch.negatives,
            n,
            side,
            config.variant,
            config.norm,
            options.threads,
        )?;

        // softmax of current negative scores; detached from the gradient
        let mut weights = Vec::with_capacity(positives.len() * n);
        let mut scores_row = vec![0.0f32; n];
        for i in 0..positives.len() {
            for j in 0..n {
                scores_row[j] = -neg_dist[i * n + j];
            }
            weights.extend(sampler::self_adversarial_weights(&scores_row, alpha));
        }

        let (loss_value, grads_wrt) = loss(&pos_dist, &neg_dist, &weights, n, gamma)?;
        if !loss_value.is_finite() {
            log.aborted = Some(format!("non-finite loss at step {step}"));
            break;
        }
        window_loss += loss_value as f64;
        window_count += 1;

        let grads = step_backward(
            &params,
            &positives,
            &neg_batch.negatives,
            n,
            side,
            config.variant,
            config.norm,
            &grads_wrt,
            options.threads,
        )?;
        if let Err(e) = adam_step(&mut params, &grads, &mut state, config) {
            log.aborted = Some(format!("{e} (step {step})"));
            break;
        }

        if step % config.valid_every == 0 || step == config.max_steps {
            let valid_mrr = if dataset.store.valid.is_empty() {
                0.0
            } else {
                evaluate_split(
                    &params,
                    &dataset.store.valid,
                    &dataset.filter_all,
                    config.variant,
                    config.norm,
                    Protocol::Filtered,
                    options.threads,
                )?
                .combined
                .mrr
            };
            let point = LogPoint {
                step,
                loss: window_loss / window_count.max(1) as f64,
                valid_mrr,
                elapsed_s: started.elapsed().as_secs_f64(),
            };
            on_log(&point);
            log.points.push(point);
            window_loss = 0.0;
            window_count = 0;
            if !dataset.store.valid.is_empty() && valid_mrr > log.best_valid_mrr {
                log.best_valid_mrr = valid_mrr;
                log.best_step = step;
                best = Some(params.clone());
            }
        }
    }

    let aborted = log.aborted.is_some();
    let best = best.unwrap_or_else(|| params.clone());
    let final_params = if aborted { best.clone() } else { params };
    Ok(TrainOutcome {
        best,
        final_params,
        log,
    })
}
