//! The full experiment grid: {original, unlearned, retrained} embeddings x
//! {MLP, GBT} attackers x repeats, with averaged summary tables, embedding
//! diagnostics and a run manifest. Completed repeats are skipped on resume
//! unless `--force` is given; resumed runs produce byte-identical reports.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use recveil::analysis::{
    embedding_histograms, histogram_csv, overlap_score, pca_project, projection_csv, write_report,
};
use recveil::attack::AttackReport;
use recveil::recsys::eval_ranking;
use recveil::unlearn::retrain_with_d2d;
use recveil::{derive_seed, AttributeTable, EmbeddingModel, RecReport};
use serde::{Deserialize, Serialize};

use crate::commands::{
    self, attack_once, attack_row, mean_std, model_path, out_dir, rec_row, write_unlearn_outputs,
};
use crate::config::ExperimentConfig;

#[derive(Debug, Serialize, Deserialize)]
struct MethodAttack {
    mlp: AttackReport,
    gbt: AttackReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeedRecord {
    repeat: usize,
    seed: u64,
    attacks: BTreeMap<String, MethodAttack>,
    rec: BTreeMap<String, RecReport>,
    timings_s: BTreeMap<String, f64>,
}

pub fn run(cfg: &ExperimentConfig, force: bool) -> Result<()> {
    let dir = out_dir(cfg).to_path_buf();
    let (dataset, table) = commands::prepare(cfg, force)?;

    let mut method_order: Vec<String> = vec!["original".to_string()];
    for spec in &cfg.unlearn {
        method_order.push(spec.loss.to_ascii_lowercase());
    }
    method_order.push("retrain".to_string());

    let mut records: Vec<SeedRecord> = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        let record_path = dir.join(format!("results_seed{repeat}.json"));
        if !force && record_path.exists() {
            let text = std::fs::read_to_string(&record_path)?;
            records.push(serde_json::from_str(&text).with_context(|| {
                format!("parsing {} (rerun with --force?)", record_path.display())
            })?);
            eprintln!("[pipeline] repeat {repeat}: reusing {}", record_path.display());
            continue;
        }

        let mut attacks = BTreeMap::new();
        let mut rec = BTreeMap::new();
        let mut timings = BTreeMap::new();

        let t0 = Instant::now();
        let model = commands::train_model(cfg, &dataset, repeat)?;
        timings.insert("train".to_string(), t0.elapsed().as_secs_f64());
        model.save(&model_path(cfg, repeat))?;

        let outcome = attack_once(cfg, model.user_embedding().view(), &table, repeat)?;
        attacks.insert(
            "original".to_string(),
            MethodAttack {
                mlp: outcome.mlp,
                gbt: outcome.gbt,
            },
        );
        rec.insert(
            "original".to_string(),
            eval_ranking(&model, &dataset, &[5, 10]),
        );

        for spec in &cfg.unlearn {
            let method = spec.loss.to_ascii_lowercase();
            let seed = derive_seed(
                cfg.seed + repeat as u64,
                commands::STREAM_UNLEARN ^ method.len() as u64,
            );
            let unlearn_cfg = cfg.unlearn_config(spec, seed)?;
            let result = recveil::unlearn::unlearn(model.user_embedding(), &table, &unlearn_cfg)?;
            timings.insert(
                format!("unlearn_{method}"),
                result.wall_time.as_secs_f64(),
            );
            let stem = format!("unlearn_{method}_seed{repeat}");
            write_unlearn_outputs(cfg, &model, &result, &stem)?;
            let unlearned = model.replace_user_embedding(result.theta)?;
            let outcome = attack_once(cfg, unlearned.user_embedding().view(), &table, repeat)?;
            attacks.insert(
                method.clone(),
                MethodAttack {
                    mlp: outcome.mlp,
                    gbt: outcome.gbt,
                },
            );
            rec.insert(method, eval_ranking(&unlearned, &dataset, &[5, 10]));
        }

        let t1 = Instant::now();
        let retrained = retrain_with_d2d(
            &dataset,
            &table,
            &cfg.train_config(derive_seed(
                cfg.seed + repeat as u64,
                commands::STREAM_TRAIN ^ 0xF0,
            ))?,
            cfg.model_kind()?,
            cfg.retrain.lambda,
            recveil::unlearn::Bandwidth::Median,
        )?;
        timings.insert("retrain".to_string(), t1.elapsed().as_secs_f64());
        retrained.save(&dir.join(format!("retrain_seed{repeat}.emb")))?;
        let outcome = attack_once(cfg, retrained.user_embedding().view(), &table, repeat)?;
        attacks.insert(
            "retrain".to_string(),
            MethodAttack {
                mlp: outcome.mlp,
                gbt: outcome.gbt,
            },
        );
        rec.insert(
            "retrain".to_string(),
            eval_ranking(&retrained, &dataset, &[5, 10]),
        );

        let record = SeedRecord {
            repeat,
            seed: cfg.seed + repeat as u64,
            attacks,
            rec,
            timings_s: timings,
        };
        std::fs::write(&record_path, serde_json::to_string_pretty(&record)?)?;
        eprintln!(
            "[pipeline] repeat {repeat}: done (train {:.2}s, retrain {:.2}s)",
            record.timings_s["train"], record.timings_s["retrain"]
        );
        records.push(record);
    }

    write_reports(cfg, &records, &method_order, &table)?;
    Ok(())
}

fn write_reports(
    cfg: &ExperimentConfig,
    records: &[SeedRecord],
    methods: &[String],
    table: &AttributeTable,
) -> Result<()> {
    let dir = out_dir(cfg).to_path_buf();
    let mut files: Vec<(String, String)> = Vec::new();

    // Detail rows.
    let mut attacks_csv = String::from("dataset,model,method,attacker,acc,precision,recall,auc,seed\n");
    let mut rec_csv = String::from("dataset,model,method,ndcg5,hr5,ndcg10,hr10,seed\n");
    for record in records {
        for method in methods {
            if let Some(a) = record.attacks.get(method) {
                attacks_csv.push_str(&attack_row(cfg, method, "mlp", &a.mlp, record.seed));
                attacks_csv.push_str(&attack_row(cfg, method, "gbt", &a.gbt, record.seed));
            }
            if let Some(r) = record.rec.get(method) {
                rec_csv.push_str(&rec_row(cfg, method, r, record.seed));
            }
        }
    }
    files.push(("attacks.csv".to_string(), attacks_csv));
    files.push(("rec.csv".to_string(), rec_csv));

    // Averaged attack table.
    let mut summary = String::from(
        "dataset,model,method,attacker,acc_mean,acc_std,precision_mean,precision_std,recall_mean,recall_std,auc_mean,auc_std,repeats\n",
    );
    for method in methods {
        for attacker in ["mlp", "gbt"] {
            let reports: Vec<&AttackReport> = records
                .iter()
                .filter_map(|r| r.attacks.get(method))
                .map(|m| if attacker == "mlp" { &m.mlp } else { &m.gbt })
                .collect();
            if reports.is_empty() {
                continue;
            }
            let col = |f: fn(&AttackReport) -> f64| -> (f64, f64) {
                mean_std(&reports.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (acc_m, acc_s) = col(|r| r.accuracy);
            let (pre_m, pre_s) = col(|r| r.precision);
            let (rec_m, rec_s) = col(|r| r.recall);
            let (auc_m, auc_s) = col(|r| r.auc);
            summary.push_str(&format!(
                "{},{},{},{},{acc_m},{acc_s},{pre_m},{pre_s},{rec_m},{rec_s},{auc_m},{auc_s},{}\n",
                cfg.dataset.name,
                cfg.model.kind.as_deref().unwrap_or("mf"),
                method,
                attacker,
                reports.len()
            ));
        }
    }
    files.push(("attack_summary.csv".to_string(), summary));

    // Averaged ranking table.
    let mut summary = String::from(
        "dataset,model,method,ndcg5_mean,ndcg5_std,hr5_mean,hr5_std,ndcg10_mean,ndcg10_std,hr10_mean,hr10_std,repeats\n",
    );
    for method in methods {
        let reports: Vec<&RecReport> = records.iter().filter_map(|r| r.rec.get(method)).collect();
        if reports.is_empty() {
            continue;
        }
        let col = |k: usize, ndcg: bool| -> (f64, f64) {
            mean_std(
                &reports
                    .iter()
                    .map(|r| if ndcg { r.ndcg_at(k) } else { r.hr_at(k) })
                    .collect::<Vec<_>>(),
            )
        };
        let (n5m, n5s) = col(5, true);
        let (h5m, h5s) = col(5, false);
        let (n10m, n10s) = col(10, true);
        let (h10m, h10s) = col(10, false);
        summary.push_str(&format!(
            "{},{},{},{n5m},{n5s},{h5m},{h5s},{n10m},{n10s},{h10m},{h10s},{}\n",
            cfg.dataset.name,
            cfg.model.kind.as_deref().unwrap_or("mf"),
            method,
            reports.len()
        ));
    }
    files.push(("rec_summary.csv".to_string(), summary));

    // Timing table.
    let mut timing = String::from("dataset,model,stage,mean_s,std_s,repeats\n");
    let stages: Vec<String> = {
        let mut s = vec!["train".to_string()];
        for spec in &cfg.unlearn {
            s.push(format!("unlearn_{}", spec.loss.to_ascii_lowercase()));
        }
        s.push("retrain".to_string());
        s
    };
    let mut timing_means: BTreeMap<String, f64> = BTreeMap::new();
    for stage in &stages {
        let values: Vec<f64> = records
            .iter()
            .filter_map(|r| r.timings_s.get(stage))
            .copied()
            .collect();
        if values.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&values);
        timing_means.insert(stage.clone(), mean);
        timing.push_str(&format!(
            "{},{},{stage},{mean},{std},{}\n",
            cfg.dataset.name,
            cfg.model.kind.as_deref().unwrap_or("mf"),
            values.len()
        ));
    }
    files.push(("timing.csv".to_string(), timing));

    // Embedding diagnostics from repeat 0 checkpoints.
    let mut overlaps: BTreeMap<String, f64> = BTreeMap::new();
    for method in methods {
        let path = embedding_for_method(cfg, method, 0);
        if !path.exists() {
            continue;
        }
        let model = EmbeddingModel::load(&path)?;
        let theta = model.user_embedding();
        let hist = embedding_histograms(theta.view(), table, 50, true, derive_seed(cfg.seed, 0x415))?;
        overlaps.insert(method.clone(), overlap_score(&hist).mean);
        files.push((format!("histograms_{method}.csv"), histogram_csv(&hist)));
        let proj = pca_project(theta.view())?;
        files.push((format!("projection_{method}.csv"), projection_csv(&proj, table)));
    }

    let checkpoints: Vec<String> = (0..records.len())
        .flat_map(|r| {
            let mut v = vec![format!("model_seed{r}.emb"), format!("retrain_seed{r}.emb")];
            for spec in &cfg.unlearn {
                v.push(format!(
                    "unlearn_{}_seed{r}.emb",
                    spec.loss.to_ascii_lowercase()
                ));
            }
            v
        })
        .collect();
    let meta = serde_json::json!({
        "dataset": cfg.dataset.name,
        "model": cfg.model.kind.as_deref().unwrap_or("mf"),
        "config_hash": cfg.config_hash(),
        "repeats": records.len(),
        "seeds": records.iter().map(|r| r.seed).collect::<Vec<_>>(),
        "stage_wall_time_means_s": timing_means,
        "histogram_overlap_means": overlaps,
        "checkpoints": checkpoints,
    });
    let manifest = write_report(&dir, &files, meta)?;
    eprintln!(
        "[pipeline] wrote {} report files + manifest.json under {}",
        manifest.entries.len(),
        dir.display()
    );
    Ok(())
}

fn embedding_for_method(cfg: &ExperimentConfig, method: &str, repeat: usize) -> PathBuf {
    let dir = out_dir(cfg);
    match method {
        "original" => model_path(cfg, repeat),
        "retrain" => dir.join(format!("retrain_seed{repeat}.emb")),
        other => dir.join(format!("unlearn_{other}_seed{repeat}.emb")),
    }
}
