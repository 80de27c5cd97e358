use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use dink_core::bench::{run_bench, summarize, to_csv, BenchConfig};
use dink_core::graph::io::{
    parse_features_text, read_labels, write_dataset, write_features_text, write_labels,
};
use dink_core::graph::{generate_sbm, load_graph, SbmParams, SparseGraph};
use dink_core::metrics::{aggregate, evaluate_labels, MetricsReport, NmiNormalization};
use dink_core::pipeline::{
    embed_all, infer, load_checkpoint, run, save_checkpoint, Preset, ShrinkMode, Stage,
    TrainConfig, TrainingLog,
};
use dink_core::{Error, Result};

use crate::manifest::{dataset_fingerprint, write_file, write_json, RunManifest};
use crate::{BenchArgs, DatasetArgs, EvalArgs, ExportArgs, GenSbmArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load_dataset(d: &DatasetArgs) -> Result<SparseGraph> {
    load_graph(&d.features, &d.edges, d.labels.as_deref())
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn labels_text(labels: &[usize]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_labels(&mut buf, labels).expect("writing to memory");
    buf
}

/// Defaults, then preset, then config file, then individual flags.
fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.preset {
        Some(name) => Preset::from_name(name)?.config(),
        None => TrainConfig::default(),
    };
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        cfg = cfg.overlay_toml_str(&text)?;
    }
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = a.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(
        pretrain_epochs,
        finetune_epochs,
        pretrain_lr,
        finetune_lr,
        alpha,
        latent_dim,
        normalize_embeddings,
        encoder_depth,
        freeze_projector,
        select_best,
        lloyd_init_iters,
        log_every
    );
    if let Some(b) = a.batch_size {
        cfg.batch_size = Some(b);
    }
    if let Some(b) = a.infer_batch_size {
        cfg.infer_batch_size = Some(b);
    }
    if let Some(k) = a.clusters {
        cfg.cluster_count = k;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(mode) = &a.shrink_mode {
        cfg.shrink_mode = match mode.as_str() {
            "all" => ShrinkMode::All,
            "nearest" => ShrinkMode::Nearest,
            other => {
                return Err(Error::Argument(format!(
                    "unknown shrink mode '{other}' (expected all or nearest)"
                )))
            }
        };
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct AssignmentSidecar<'a> {
    nodes: usize,
    clusters: usize,
    seed: u64,
    checkpoint: &'a str,
    normalize_embeddings: bool,
}

#[derive(Serialize)]
struct SeedReport {
    #[serde(flatten)]
    metrics: MetricsReport,
    /// Fine-tuning epoch whose parameters were kept.
    selected_epoch: usize,
    /// Accuracy right after center initialization.
    initial_acc: Option<f64>,
    /// Accuracy after the last fine-tuning epoch, whether or not it was kept.
    final_epoch_acc: Option<f64>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(&a)?;
    let g = load_dataset(&a.dataset)?;
    if a.clusters.is_none() {
        if let Some(k) = g.num_classes() {
            cfg.cluster_count = k;
        }
    }
    cfg.validate()?;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    if seeds.is_empty() {
        return Err(Error::Argument("--seeds needs at least one value".into()));
    }

    let mut files = vec![
        ("features", a.dataset.features.as_path()),
        ("edges", a.dataset.edges.as_path()),
    ];
    if let Some(l) = &a.dataset.labels {
        files.push(("labels", l.as_path()));
    }
    create_dir(&a.out)?;
    let seed_dir = |s: u64| a.out.join(format!("seed-{s}"));
    let mut outputs: Vec<PathBuf> = Vec::new();
    for &s in &seeds {
        let dir = seed_dir(s);
        for name in [
            "checkpoint.bin",
            "assignments.txt",
            "assignments.json",
            "train.jsonl",
        ] {
            outputs.push(dir.join(name));
        }
        if g.labels().is_some() {
            outputs.push(dir.join("metrics.json"));
        }
    }
    if g.labels().is_some() {
        outputs.push(a.out.join("report.json"));
    }
    RunManifest {
        command: "train".into(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        dataset_fingerprint: dataset_fingerprint(&files)?,
        seeds: seeds.clone(),
        outputs,
    }
    .write(&a.out.join("manifest.json"))?;

    let mut reports = Vec::new();
    for &seed in &seeds {
        let run_cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        let dir = seed_dir(seed);
        create_dir(&dir)?;
        let mut log = TrainingLog::to_file(&dir.join("train.jsonl"))?;
        let outcome = run(&g, &run_cfg, &mut log)?;
        save_checkpoint(&outcome.model, &dir.join("checkpoint.bin"))?;
        write_file(
            &dir.join("assignments.txt"),
            &labels_text(&outcome.assignment),
        )?;
        write_json(
            &dir.join("assignments.json"),
            &AssignmentSidecar {
                nodes: outcome.assignment.len(),
                clusters: run_cfg.cluster_count,
                seed,
                checkpoint: "checkpoint.bin",
                normalize_embeddings: run_cfg.normalize_embeddings,
            },
        )?;
        if let Some(metrics) = outcome.metrics {
            eprintln!(
                "seed {seed}: acc {:.4} nmi {:.4} ari {:.4} f1 {:.4} (epoch {} kept)",
                metrics.acc, metrics.nmi, metrics.ari, metrics.f1, outcome.selected_epoch
            );
            let report = SeedReport {
                metrics: metrics.clone(),
                selected_epoch: outcome.selected_epoch,
                initial_acc: outcome.epoch_accuracy.first().copied(),
                final_epoch_acc: outcome.epoch_accuracy.last().copied(),
            };
            write_json(&dir.join("metrics.json"), &report)?;
            reports.push(metrics);
        } else {
            eprintln!("seed {seed}: done (no labels, metrics skipped)");
        }
    }
    if reports.is_empty() {
        print_json(&serde_json::json!({ "seeds": seeds, "out": a.out }));
    } else {
        let agg = aggregate(reports)?;
        write_json(&a.out.join("report.json"), &agg)?;
        print_json(&agg);
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let norm = match a.nmi.as_str() {
        "arithmetic" => NmiNormalization::Arithmetic,
        "geometric" => NmiNormalization::Geometric,
        other => {
            return Err(Error::Argument(format!(
                "unknown NMI normalization '{other}' (expected arithmetic or geometric)"
            )))
        }
    };
    let pred = read_labels(&a.pred)?;
    let truth = read_labels(&a.labels)?;
    let report = evaluate_labels(&pred, &truth, None, norm)?;
    print_json(&report);
    Ok(())
}

pub fn gen_sbm(a: GenSbmArgs) -> Result<()> {
    let params = SbmParams {
        blocks: a.blocks,
        block_size: a.block_size,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.feature_dim,
        feature_shift: a.feature_shift,
    };
    let g = generate_sbm(&params, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let files = write_dataset(&a.out, &g)?;
    print_json(&serde_json::json!({
        "nodes": g.num_nodes(),
        "edges": g.num_edges(),
        "features": files.features,
        "edges_file": files.edges,
        "labels": files.labels,
    }));
    Ok(())
}

pub fn export_embeddings(a: ExportArgs) -> Result<()> {
    let trained = load_checkpoint(&a.checkpoint)?;
    if trained.stage != Stage::Finetuned {
        return Err(Error::State(format!(
            "export needs a fine-tuned checkpoint, got stage {}",
            trained.stage.name()
        )));
    }
    let g = load_dataset(&a.dataset)?;
    let h = embed_all(&g, &trained.model, &trained.config)?;
    let assignment = infer(&g, &trained)?;
    create_dir(&a.out)?;
    let mut buf = Vec::new();
    write_features_text(&mut buf, &h).expect("writing to memory");
    debug_assert!(parse_features_text(std::str::from_utf8(&buf).unwrap()).is_ok());
    write_file(&a.out.join("embeddings.txt"), &buf)?;
    write_file(&a.out.join("assignments.txt"), &labels_text(&assignment))?;
    print_json(&serde_json::json!({
        "nodes": h.rows(),
        "dim": h.cols(),
        "embeddings": a.out.join("embeddings.txt"),
        "assignments": a.out.join("assignments.txt"),
    }));
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        node_counts: a.nodes,
        batch_sizes: a.batch_sizes,
        feature_dim: a.feature_dim,
        latent_dim: a.latent_dim,
        clusters: a.clusters,
        iters: a.iters,
        repeats: a.repeats,
        seed: a.seed,
        ..BenchConfig::default()
    };
    let points = run_bench(&cfg)?;
    let csv = to_csv(&points);
    print!("{csv}");
    if let Some(path) = &a.csv {
        write_file(path, csv.as_bytes())?;
    }
    let summary = summarize(&points)?;
    for (n, fit) in &summary.fits {
        eprintln!(
            "N={n}: {:.3e} s per batch node, R^2 {:.4}",
            fit.slope, fit.r_squared
        );
    }
    for (b, ratio) in &summary.node_ratios {
        eprintln!("B={b}: time ratio across node counts {ratio:.3}");
    }
    if let Some(path) = &a.summary {
        write_json(path, &summary)?;
    }
    Ok(())
}
