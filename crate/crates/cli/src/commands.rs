//! Single-stage commands; the pipeline composes the same building blocks.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use recveil::analysis::{alpha_sweep, sweep_csv};
use recveil::attack::{run_attack, shadow_split, AttackOutcome};
use recveil::data::{
    build_attribute_table, filter_min_interactions_with, parse_attributes, parse_ratings,
    split_dataset,
};
use recveil::recsys::{eval_ranking, train_lightgcn, train_mf, ModelKind};
use recveil::synth::movielens_like;
use recveil::unlearn::{unlearn as run_unlearn, UnlearnResult};
use recveil::{derive_seed, AttributeTable, EmbeddingModel, InteractionDataset, RecReport};

use crate::config::ExperimentConfig;

// Seed streams per purpose, derived from `base + repeat`.
pub const STREAM_TRAIN: u64 = 0x01;
pub const STREAM_SHADOW: u64 = 0x02;
pub const STREAM_ATTACK: u64 = 0x03;
pub const STREAM_UNLEARN: u64 = 0x04;

pub fn out_dir(cfg: &ExperimentConfig) -> &Path {
    cfg.out_dir.as_deref().expect("out_dir resolved in main")
}

pub fn dataset_path(cfg: &ExperimentConfig) -> PathBuf {
    out_dir(cfg).join("dataset.txt")
}

pub fn attributes_path(cfg: &ExperimentConfig) -> PathBuf {
    out_dir(cfg).join("attributes.txt")
}

pub fn model_path(cfg: &ExperimentConfig, repeat: usize) -> PathBuf {
    out_dir(cfg).join(format!("model_seed{repeat}.emb"))
}

/// Build (or reuse) the serialized dataset and attribute table.
pub fn prepare(
    cfg: &ExperimentConfig,
    force: bool,
) -> Result<(InteractionDataset, AttributeTable)> {
    let ds_path = dataset_path(cfg);
    let attr_path = attributes_path(cfg);
    if !force && ds_path.exists() && attr_path.exists() {
        eprintln!("[prepare] reusing {}", ds_path.display());
        let dataset = InteractionDataset::load(&ds_path)?;
        let table = AttributeTable::load(&attr_path)?;
        return Ok((dataset, table));
    }

    let (raw, labels) = match cfg.dataset.source.as_str() {
        "files" => {
            let ratings_path = cfg.dataset.ratings.as_ref().expect("validated");
            let raw = parse_ratings(ratings_path, &cfg.ratings_format()?)?;
            let labels = match &cfg.dataset.users {
                Some(users_path) => parse_attributes(users_path, cfg.users_format()?)?,
                None => bail!(
                    "dataset.users is required to build the attribute table for {}",
                    cfg.dataset.name
                ),
            };
            (raw, labels)
        }
        "synthetic" => {
            let corpus = movielens_like(&cfg.synthetic_config()?);
            (corpus.interactions, corpus.labels)
        }
        other => bail!("unknown dataset source {other:?}"),
    };

    let filtered = filter_min_interactions_with(&raw, cfg.dataset.min_interactions, cfg.filter_mode())?;
    let dataset = split_dataset(&filtered, cfg.split_ratios(), derive_seed(cfg.seed, 0xDD))?;
    let table = build_attribute_table(&dataset, &labels)?;
    dataset.save(&ds_path)?;
    table.save(&attr_path)?;
    eprintln!(
        "[prepare] {}: {} users, {} items, {} interactions ({} raw), groups {:?}",
        cfg.dataset.name,
        dataset.n_users(),
        dataset.n_items(),
        dataset.n_interactions(),
        raw.len(),
        table.group_sizes()
    );
    Ok((dataset, table))
}

pub fn load_prepared(cfg: &ExperimentConfig) -> Result<(InteractionDataset, AttributeTable)> {
    let ds_path = dataset_path(cfg);
    if !ds_path.exists() {
        bail!(
            "missing {}: run `recveil prepare` first",
            ds_path.display()
        );
    }
    let dataset = InteractionDataset::load(&ds_path)?;
    let table = AttributeTable::load(&attributes_path(cfg))?;
    Ok((dataset, table))
}

pub fn train_model(
    cfg: &ExperimentConfig,
    dataset: &InteractionDataset,
    repeat: usize,
) -> Result<EmbeddingModel> {
    let seed = derive_seed(cfg.seed + repeat as u64, STREAM_TRAIN);
    let train_cfg = cfg.train_config(seed)?;
    let model = match cfg.model_kind()? {
        ModelKind::Mf => train_mf(dataset, &train_cfg)?,
        ModelKind::LightGcn => train_lightgcn(dataset, &train_cfg)?,
    };
    Ok(model)
}

/// Train the repeat-0 model and write its checkpoint.
pub fn train(cfg: &ExperimentConfig, force: bool) -> Result<EmbeddingModel> {
    let path = model_path(cfg, 0);
    if !force && path.exists() {
        eprintln!("[train] reusing {}", path.display());
        return Ok(EmbeddingModel::load(&path)?);
    }
    let (dataset, _) = load_prepared(cfg)?;
    let started = std::time::Instant::now();
    let model = train_model(cfg, &dataset, 0)?;
    model.save(&path)?;
    eprintln!(
        "[train] {} model trained in {:.2}s -> {}",
        model.kind().as_str(),
        started.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(model)
}

fn load_model_or_hint(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<EmbeddingModel> {
    let path = path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| model_path(cfg, 0));
    if !path.exists() {
        bail!(
            "missing checkpoint {}: run `recveil train` first",
            path.display()
        );
    }
    Ok(EmbeddingModel::load(&path)?)
}

/// Run every configured unlearning loss against a checkpoint; writes an
/// embedding checkpoint, a loss trace and a metadata file per loss.
pub fn unlearn(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<()> {
    let (_, table) = load_prepared(cfg)?;
    let model = load_model_or_hint(cfg, checkpoint)?;
    for spec in &cfg.unlearn {
        let seed = derive_seed(cfg.seed, STREAM_UNLEARN ^ spec.loss.len() as u64);
        let unlearn_cfg = cfg.unlearn_config(spec, seed)?;
        let result = run_unlearn(model.user_embedding(), &table, &unlearn_cfg)?;
        let stem = format!("unlearn_{}", unlearn_cfg.loss_kind.as_str());
        write_unlearn_outputs(cfg, &model, &result, &stem)?;
        eprintln!(
            "[unlearn] {} finished in {:.2}s (total loss {:.6} -> {:.6})",
            unlearn_cfg.loss_kind.as_str(),
            result.wall_time.as_secs_f64(),
            result.trace[0].total,
            result.final_loss().total
        );
    }
    Ok(())
}

pub fn write_unlearn_outputs(
    cfg: &ExperimentConfig,
    model: &EmbeddingModel,
    result: &UnlearnResult,
    stem: &str,
) -> Result<PathBuf> {
    let dir = out_dir(cfg);
    let emb_path = dir.join(format!("{stem}.emb"));
    let unlearned = model.replace_user_embedding(result.theta.clone())?;
    unlearned.save(&emb_path)?;
    result.write_trace_csv(&dir.join(format!("{stem}.trace.csv")))?;
    result.write_metadata(&dir.join(format!("{stem}.meta")))?;
    Ok(emb_path)
}

pub fn attack_once(
    cfg: &ExperimentConfig,
    theta: recveil::ndarray::ArrayView2<f64>,
    table: &AttributeTable,
    repeat: usize,
) -> Result<AttackOutcome> {
    let n = theta.nrows();
    let split = shadow_split(
        n,
        table,
        cfg.attack.fraction,
        derive_seed(cfg.seed + repeat as u64, STREAM_SHADOW),
    )?;
    let attacker = cfg.attacker_config(derive_seed(cfg.seed + repeat as u64, STREAM_ATTACK));
    Ok(run_attack(theta, table, &split, &attacker)?)
}

/// Append attack rows for one embedding source.
pub fn attack(cfg: &ExperimentConfig, embedding: Option<&Path>, method: &str) -> Result<()> {
    let (_, table) = load_prepared(cfg)?;
    let model = load_model_or_hint(cfg, embedding)?;
    let outcome = attack_once(cfg, model.user_embedding().view(), &table, 0)?;
    let path = out_dir(cfg).join("attacks.csv");
    let mut rows = String::new();
    for (attacker, report) in [("mlp", outcome.mlp), ("gbt", outcome.gbt)] {
        rows.push_str(&attack_row(cfg, method, attacker, &report, cfg.seed));
    }
    append_csv(&path, "dataset,model,method,attacker,acc,precision,recall,auc,seed", &rows)?;
    eprintln!(
        "[attack] {method}: mlp AUC {:.4}, gbt AUC {:.4} -> {}",
        outcome.mlp.auc,
        outcome.gbt.auc,
        path.display()
    );
    Ok(())
}

pub fn attack_row(
    cfg: &ExperimentConfig,
    method: &str,
    attacker: &str,
    report: &recveil::attack::AttackReport,
    seed: u64,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        cfg.dataset.name,
        cfg.model.kind.as_deref().unwrap_or("mf"),
        method,
        attacker,
        report.accuracy,
        report.precision,
        report.recall,
        report.auc,
        seed
    )
}

/// Append ranking rows for one embedding source.
pub fn eval(cfg: &ExperimentConfig, embedding: Option<&Path>, method: &str) -> Result<()> {
    let (dataset, _) = load_prepared(cfg)?;
    let model = load_model_or_hint(cfg, embedding)?;
    let report = eval_ranking(&model, &dataset, &[5, 10]);
    let path = out_dir(cfg).join("rec.csv");
    append_csv(
        &path,
        "dataset,model,method,ndcg5,hr5,ndcg10,hr10,seed",
        &rec_row(cfg, method, &report, cfg.seed),
    )?;
    eprintln!(
        "[eval] {method}: NDCG@10 {:.4}, HR@10 {:.4} over {} users -> {}",
        report.ndcg_at(10),
        report.hr_at(10),
        report.evaluated_users,
        path.display()
    );
    Ok(())
}

pub fn rec_row(cfg: &ExperimentConfig, method: &str, report: &RecReport, seed: u64) -> String {
    format!(
        "{},{},{},{},{},{},{},{}\n",
        cfg.dataset.name,
        cfg.model.kind.as_deref().unwrap_or("mf"),
        method,
        report.ndcg_at(5),
        report.hr_at(5),
        report.ndcg_at(10),
        report.hr_at(10),
        seed
    )
}

fn append_csv(path: &Path, header: &str, rows: &str) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{header}")?;
    }
    file.write_all(rows.as_bytes())?;
    Ok(())
}

/// Alpha sweep: unlearn + attack + ranking per grid point.
pub fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    let (dataset, table) = load_prepared(cfg)?;
    let model = load_model_or_hint(cfg, None)?;
    let spec = crate::config::UnlearnSpec {
        loss: cfg.sweep.loss.clone(),
        ..Default::default()
    };
    let base = cfg.unlearn_config(&spec, derive_seed(cfg.seed, STREAM_UNLEARN))?;
    let attacker = cfg.attacker_config(derive_seed(cfg.seed, STREAM_ATTACK));
    let rows = alpha_sweep(
        &model,
        &dataset,
        &table,
        &cfg.sweep.alphas,
        &base,
        &attacker,
        cfg.attack.fraction,
        derive_seed(cfg.seed, STREAM_SHADOW),
    )?;
    let path = out_dir(cfg).join("sweep.csv");
    std::fs::write(&path, sweep_csv(&rows))?;
    eprintln!("[sweep] {} alphas -> {}", rows.len(), path.display());
    Ok(())
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
