//! Command implementations: everything past argument/config resolution.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use quatkgc_core::{
    evaluate_split, load_checkpoint, save_checkpoint, train, CheckpointMeta, Dataset, EvalReport,
    Error, NormKind, Protocol, ScoreVariant, Split, TrainConfig, TrainOptions, TrainOutcome,
};

use crate::manifest::RunManifest;

pub fn preprocess(data: &Path, out: Option<&Path>) -> Result<()> {
    let dataset = Dataset::load_dir(data).context("load dataset")?;
    let out = out.unwrap_or(data);
    dataset.write_cache(out).context("write preprocessed dataset")?;
    println!("{}", dataset.stats());
    println!(
        "wrote entities.dict, relations.dict, triples.bin to {}",
        out.display()
    );
    Ok(())
}

fn write_run_outputs(out: &Path, config: &TrainConfig, outcome: &TrainOutcome) -> Result<()> {
    let meta = CheckpointMeta {
        variant: config.variant,
        norm: config.norm,
        seed: config.seed,
    };
    save_checkpoint(&out.join("best.ckpt"), &outcome.best, &meta).context("write best.ckpt")?;
    save_checkpoint(&out.join("final.ckpt"), &outcome.final_params, &meta)
        .context("write final.ckpt")?;
    Ok(())
}

fn run_training(
    dataset: &Dataset,
    config: &TrainConfig,
    out: &Path,
    threads: usize,
) -> Result<TrainOutcome> {
    fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let log_path = out.join("train_log.jsonl");
    let mut log_file =
        fs::File::create(&log_path).with_context(|| format!("create {}", log_path.display()))?;
    let outcome = train(
        dataset,
        config,
        &TrainOptions { threads },
        |point| {
            let line = serde_json::to_string(point).expect("log point serializes");
            println!("{line}");
            let _ = writeln!(log_file, "{line}");
        },
    )
    .context("training failed")?;
    if let Some(reason) = &outcome.log.aborted {
        let _ = writeln!(log_file, "{}", serde_json::json!({ "aborted": reason }));
        eprintln!("warning: run aborted early ({reason}); last good checkpoint retained");
    }
    write_run_outputs(out, config, &outcome)?;
    println!(
        "done: best validation MRR {:.4} at step {} ({} sampler fallbacks); checkpoints in {}",
        outcome.log.best_valid_mrr,
        outcome.log.best_step,
        outcome.log.fallback_draws,
        out.display()
    );
    Ok(outcome)
}

pub fn train_run(data: &Path, out: &Path, config: &TrainConfig, threads: usize) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let manifest = RunManifest::new("train", data, out, config, threads);
    manifest.write(out)?;
    let dataset = Dataset::load_dir(data).context("load dataset")?;
    run_training(&dataset, config, out, threads)?;
    manifest.finish(out)
}

/// One structured metrics record, also the on-disk format. The checkpoint
/// is recorded by file name so identical runs emit identical bytes.
#[derive(Serialize)]
struct MetricsRecord {
    checkpoint: PathBuf,
    split: String,
    protocol: Protocol,
    variant: ScoreVariant,
    norm: NormKind,
    num_triples: usize,
    head: quatkgc_core::EvalMetrics,
    tail: quatkgc_core::EvalMetrics,
    combined: quatkgc_core::EvalMetrics,
}

fn write_metrics(
    path: &Path,
    ckpt: &Path,
    split: Split,
    protocol: Protocol,
    variant: ScoreVariant,
    norm: NormKind,
    report: &EvalReport,
) -> Result<()> {
    let record = MetricsRecord {
        checkpoint: ckpt.file_name().map_or_else(|| ckpt.to_path_buf(), PathBuf::from),
        split: split.to_string(),
        protocol,
        variant,
        norm,
        num_triples: report.num_triples,
        head: report.head,
        tail: report.tail,
        combined: report.combined,
    };
    let body = serde_json::to_string_pretty(&record).context("encode metrics")?;
    fs::write(path, body).with_context(|| format!("write {}", path.display()))?;
    Ok(())
}

fn evaluate_checkpoint(
    ckpt: &Path,
    dataset: &Dataset,
    split: Split,
    protocol: Protocol,
    out_dir: &Path,
    threads: usize,
) -> Result<EvalReport> {
    let (params, meta) = load_checkpoint(ckpt).context("load checkpoint")?;
    if params.num_entities() != dataset.num_entities()
        || params.num_relations() != dataset.num_relations()
    {
        bail!(Error::VocabMismatch {
            ckpt_entities: params.num_entities(),
            ckpt_relations: params.num_relations(),
            data_entities: dataset.num_entities(),
            data_relations: dataset.num_relations(),
        });
    }
    let triples = dataset.store.split(split);
    let report = evaluate_split(
        &params,
        triples,
        &dataset.filter_all,
        meta.variant,
        meta.norm,
        protocol,
        threads,
    )
    .context("evaluation failed")?;
    println!(
        "split {split} ({} triples), variant {}, norm {}, {:?} protocol",
        report.num_triples, meta.variant, meta.norm, protocol
    );
    print!("{}", report.table_string());
    let suffix = match protocol {
        Protocol::Filtered => String::new(),
        Protocol::Raw => "-raw".to_string(),
    };
    let metrics_path = out_dir.join(format!("metrics-{split}{suffix}.json"));
    write_metrics(&metrics_path, ckpt, split, protocol, meta.variant, meta.norm, &report)?;
    println!("metrics written to {}", metrics_path.display());
    Ok(report)
}

pub fn evaluate_run(
    ckpt: &Path,
    data: &Path,
    split: Split,
    raw: bool,
    out: Option<&Path>,
    threads: usize,
) -> Result<()> {
    let dataset = Dataset::load_dir(data).context("load dataset")?;
    let out_dir = match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
            dir.to_path_buf()
        }
        None => ckpt
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf(),
    };
    let protocol = if raw { Protocol::Raw } else { Protocol::Filtered };
    evaluate_checkpoint(ckpt, &dataset, split, protocol, &out_dir, threads)?;
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    variant: ScoreVariant,
    mr: f64,
    mrr: f64,
    hits1: f64,
    hits3: f64,
    hits10: f64,
}

pub fn ablate_run(
    data: &Path,
    out: &Path,
    config: &TrainConfig,
    variants: &[ScoreVariant],
    threads: usize,
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let manifest = RunManifest::new("ablate", data, out, config, threads);
    manifest.write(out)?;
    let dataset = Dataset::load_dir(data).context("load dataset")?;
    let mut rows = Vec::new();
    for &variant in variants {
        let sub_config = TrainConfig {
            variant,
            ..config.clone()
        };
        let sub_out = out.join(variant.as_str());
        fs::create_dir_all(&sub_out).with_context(|| format!("create {}", sub_out.display()))?;
        RunManifest::new("ablate", data, &sub_out, &sub_config, threads).write(&sub_out)?;
        println!("=== variant {variant} ===");
        run_training(&dataset, &sub_config, &sub_out, threads)?;
        let report = evaluate_checkpoint(
            &sub_out.join("best.ckpt"),
            &dataset,
            Split::Test,
            Protocol::Filtered,
            &sub_out,
            threads,
        )?;
        rows.push(AblationRow {
            variant,
            mr: report.combined.mr,
            mrr: report.combined.mrr,
            hits1: report.combined.hits1,
            hits3: report.combined.hits3,
            hits10: report.combined.hits10,
        });
    }
    let body = serde_json::to_string_pretty(&rows).context("encode ablation summary")?;
    fs::write(out.join("ablation.json"), body)
        .with_context(|| format!("write {}", out.join("ablation.json").display()))?;

    println!("\nablation summary (test split, filtered):");
    println!("{:<16}{:>10}{:>10}", "variant", "MRR", "Hits@10");
    for row in &rows {
        println!("{:<16}{:>10.4}{:>10.4}", row.variant.to_string(), row.mrr, row.hits10);
    }
    manifest.finish(out)
}
