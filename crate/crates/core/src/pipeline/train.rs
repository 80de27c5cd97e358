use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ShrinkMode, TrainConfig};
use super::log::{LogStage, TrainingLog};
use super::{Stage, TrainedModel};
use crate::clustering::{assign, kmeanspp_init, lloyd_refine, AssignmentVector, ClusterCenters};
use crate::error::{Error, Result};
use crate::graph::{
    augment, full_batch, normalize_adjacency, partition_nodes, sample_batches, AugmentationSpec,
    MiniBatch, NormalizedAdjacency, SparseGraph,
};
use crate::losses::{
    dilation_loss, discrimination_loss_logits, normalize_rows, normalize_rows_backward,
    shrink_loss, shrink_loss_nearest, LossReport,
};
use crate::metrics::{accuracy, aggregate, evaluate_labels, AggregateReport, MetricsReport};
use crate::model::{encode_rows, DinkModel, ViewForward};
use crate::numerics::{adam_step, AdamConfig, AdamState, DenseMatrix};

/// Independent random streams derived from one seed, so changing e.g. the number of
/// pre-training epochs does not shift the center initialization draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Init = 0,
    Pretrain = 1,
    Centers = 2,
    Finetune = 3,
}

pub fn stage_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn check_graph(g: &SparseGraph) -> Result<()> {
    if g.num_nodes() == 0 || g.num_features() == 0 {
        return Err(Error::Argument(format!(
            "graph must have nodes and features (got {} x {})",
            g.num_nodes(),
            g.num_features()
        )));
    }
    Ok(())
}

fn check_input_dim(g: &SparseGraph, model: &DinkModel) -> Result<()> {
    if g.num_features() != model.encoder.input_dim() {
        return Err(Error::shape(
            "model input",
            format!("{} feature columns", model.encoder.input_dim()),
            g.num_features(),
        ));
    }
    Ok(())
}

fn ensure_finite(value: f64, stage: &str, epoch: usize, batch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "non-finite loss ({value}) in {stage} epoch {epoch} batch {batch}"
        )))
    }
}

fn should_log(cfg: &TrainConfig, epoch: usize, last: usize) -> bool {
    epoch == 1 || epoch == last || epoch.is_multiple_of(cfg.log_every)
}

pub fn init_model(g: &SparseGraph, cfg: &TrainConfig) -> Result<DinkModel> {
    DinkModel::init(
        g.num_features(),
        cfg.latent_dim,
        cfg.encoder_depth,
        &mut stage_rng(cfg.seed, RngStream::Init),
    )
}

fn epoch_batches<'a>(
    g: &SparseGraph,
    full: Option<&'a MiniBatch>,
    batch_size: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Cow<'a, [MiniBatch]>> {
    match (batch_size, full) {
        (Some(bs), _) => Ok(Cow::Owned(sample_batches(g, bs, true, rng)?)),
        (None, Some(f)) => Ok(Cow::Borrowed(std::slice::from_ref(f))),
        (None, None) => unreachable!("full batch is prepared when batch_size is unset"),
    }
}

struct Views {
    fwd: ViewForward,
    aug_fwd: ViewForward,
    aug_graph: SparseGraph,
    aug_adj: NormalizedAdjacency,
}

fn two_views(
    model: &DinkModel,
    batch: &MiniBatch,
    spec: &AugmentationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Views> {
    let aug_graph = augment(&batch.subgraph, spec, rng)?;
    let aug_adj = normalize_adjacency(&aug_graph);
    let fwd = model.forward(&batch.normalized, batch.subgraph.features())?;
    let aug_fwd = model.forward(&aug_adj, aug_graph.features())?;
    Ok(Views {
        fwd,
        aug_fwd,
        aug_graph,
        aug_adj,
    })
}

fn fresh_states(model: &DinkModel) -> Vec<AdamState> {
    model
        .params()
        .into_iter()
        .map(|p| AdamState::for_param(p, AdamConfig::default()))
        .collect()
}

fn mean_report(reports: &[LossReport]) -> LossReport {
    let n = reports.len() as f64;
    let avg = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    LossReport {
        discrimination: avg(|r| r.discrimination),
        dilation: avg(|r| r.dilation),
        shrink: avg(|r| r.shrink),
        total: avg(|r| r.total),
        alpha: reports[0].alpha,
    }
}

/// Self-supervised pre-training: `pretrain_epochs` epochs of real-vs-corrupted
/// discrimination with Adam at `pretrain_lr`.
pub fn pretrain(g: &SparseGraph, cfg: &TrainConfig, log: &mut TrainingLog) -> Result<TrainedModel> {
    cfg.validate()?;
    check_graph(g)?;
    let mut model = init_model(g, cfg)?;
    let mut rng = stage_rng(cfg.seed, RngStream::Pretrain);
    let spec = cfg.augmentation();
    let full = cfg.batch_size.is_none().then(|| full_batch(g));
    let mut states = fresh_states(&model);
    let epochs = cfg.pretrain_epochs;
    for epoch in 1..=epochs {
        let batches = epoch_batches(g, full.as_ref(), cfg.batch_size, &mut rng)?;
        let mut reports = Vec::with_capacity(batches.len());
        for (b, batch) in batches.iter().enumerate() {
            let v = two_views(&model, batch, &spec, &mut rng)?;
            let (loss, gs, gs_aug) = discrimination_loss_logits(&v.fwd.logits, &v.aug_fwd.logits)?;
            ensure_finite(loss, "pretrain", epoch, b)?;
            model.backward(
                &batch.normalized,
                batch.subgraph.features(),
                &v.fwd,
                &gs,
                None,
            )?;
            model.backward(
                &v.aug_adj,
                v.aug_graph.features(),
                &v.aug_fwd,
                &gs_aug,
                None,
            )?;
            for (p, s) in model.params_mut().into_iter().zip(&mut states) {
                adam_step(p, s, cfg.pretrain_lr)?;
            }
            reports.push(LossReport::discrimination_only(loss));
        }
        if should_log(cfg, epoch, epochs) {
            log.push(LogStage::Pretrain, epoch, None, mean_report(&reports))?;
        }
    }
    log.flush()?;
    let optimizer = model
        .params()
        .into_iter()
        .map(|p| p.name.clone())
        .zip(states)
        .collect();
    Ok(TrainedModel {
        model,
        centers: None,
        stage: Stage::Pretrained,
        config: cfg.clone(),
        optimizer,
    })
}

fn embed_with(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    model: &DinkModel,
    cfg: &TrainConfig,
) -> Result<DenseMatrix> {
    let n = x.rows();
    let bs = cfg.infer_batch_size.unwrap_or(n).max(1);
    let parts = partition_nodes(n, bs, false, &mut stage_rng(0, RngStream::Init))?;
    let blocks = parts
        .iter()
        .map(|ids| encode_rows(adj, x, &model.encoder, ids))
        .collect::<Result<Vec<_>>>()?;
    let h = DenseMatrix::vstack(&blocks)?;
    Ok(if cfg.normalize_embeddings {
        normalize_rows(&h).0
    } else {
        h
    })
}

/// Node embeddings in the space used for clustering (row-normalized when
/// `normalize_embeddings` is set), computed in inference-sized batches.
pub fn embed_all(g: &SparseGraph, model: &DinkModel, cfg: &TrainConfig) -> Result<DenseMatrix> {
    check_input_dim(g, model)?;
    embed_with(&normalize_adjacency(g), g.features(), model, cfg)
}

fn assignment_centers(centers: &ClusterCenters, cfg: &TrainConfig) -> DenseMatrix {
    if cfg.normalize_embeddings {
        normalize_rows(centers.values()).0
    } else {
        centers.values().clone()
    }
}

fn infer_with(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    model: &DinkModel,
    centers: &ClusterCenters,
    cfg: &TrainConfig,
) -> Result<AssignmentVector> {
    let c = assignment_centers(centers, cfg);
    let n = x.rows();
    let bs = cfg.infer_batch_size.unwrap_or(n).max(1);
    let mut out = Vec::with_capacity(n);
    for ids in partition_nodes(n, bs, false, &mut stage_rng(0, RngStream::Init))? {
        let h = encode_rows(adj, x, &model.encoder, &ids)?;
        let h = if cfg.normalize_embeddings {
            normalize_rows(&h).0
        } else {
            h
        };
        out.extend(assign(&h, &c)?.0);
    }
    Ok(AssignmentVector(out))
}

/// Nearest-center assignment of every node, processed in batches of
/// `infer_batch_size` rows. The result does not depend on the batch size.
pub fn infer(g: &SparseGraph, trained: &TrainedModel) -> Result<AssignmentVector> {
    let centers = match (trained.stage, &trained.centers) {
        (Stage::Finetuned, Some(c)) => c,
        (stage, _) => {
            return Err(Error::State(format!(
                "inference needs a fine-tuned model with centers (model stage: {})",
                stage.name()
            )))
        }
    };
    check_input_dim(g, &trained.model)?;
    infer_with(
        &normalize_adjacency(g),
        g.features(),
        &trained.model,
        centers,
        &trained.config,
    )
}

/// Fine-tuning loss of one view pair. Accumulates gradients into the parameter
/// buffers of `model` and `centers` without stepping the optimizer.
pub fn finetune_objective(
    model: &mut DinkModel,
    centers: &mut ClusterCenters,
    view: (&NormalizedAdjacency, &DenseMatrix),
    aug_view: (&NormalizedAdjacency, &DenseMatrix),
    cfg: &TrainConfig,
) -> Result<LossReport> {
    let alpha = cfg.alpha;
    let fwd = model.forward(view.0, view.1)?;
    let aug_fwd = model.forward(aug_view.0, aug_view.1)?;
    let (dis, gs, gs_aug) = discrimination_loss_logits(&fwd.logits, &aug_fwd.logits)?;

    let (hn, h_norms) = if cfg.normalize_embeddings {
        normalize_rows(&fwd.h)
    } else {
        (fwd.h.clone(), Vec::new())
    };
    let (cn, c_norms) = if cfg.normalize_embeddings {
        normalize_rows(centers.values())
    } else {
        (centers.values().clone(), Vec::new())
    };
    let (dil, mut grad_c) = dilation_loss(&cn)?;
    let (shr, grad_hn, grad_cn) = match cfg.shrink_mode {
        ShrinkMode::All => shrink_loss(&hn, &cn)?,
        ShrinkMode::Nearest => shrink_loss_nearest(&hn, &cn)?,
    };
    let report = LossReport::new(dil, shr, dis, alpha);
    if !report.total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss ({})",
            report.total
        )));
    }
    grad_c.add_assign(&grad_cn)?;
    let (grad_h, grad_c) = if cfg.normalize_embeddings {
        (
            normalize_rows_backward(&hn, &h_norms, &grad_hn),
            normalize_rows_backward(&cn, &c_norms, &grad_c),
        )
    } else {
        (grad_hn, grad_c)
    };

    let gs: Vec<f64> = gs.iter().map(|v| alpha * v).collect();
    let gs_aug: Vec<f64> = gs_aug.iter().map(|v| alpha * v).collect();
    model.backward(view.0, view.1, &fwd, &gs, Some(&grad_h))?;
    model.backward(aug_view.0, aug_view.1, &aug_fwd, &gs_aug, None)?;
    centers.centers.accumulate_grad(&grad_c)?;
    Ok(report)
}

/// One fine-tuning optimizer step on `batch`: augment, [`finetune_objective`], then
/// Adam on the network parameters and the centers.
#[allow(clippy::too_many_arguments)]
pub fn finetune_step(
    model: &mut DinkModel,
    centers: &mut ClusterCenters,
    states: &mut [AdamState],
    center_state: &mut AdamState,
    batch: &MiniBatch,
    spec: &AugmentationSpec,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    let aug_graph = augment(&batch.subgraph, spec, rng)?;
    let aug_adj = normalize_adjacency(&aug_graph);
    let report = finetune_objective(
        model,
        centers,
        (&batch.normalized, batch.subgraph.features()),
        (&aug_adj, aug_graph.features()),
        cfg,
    )?;
    for (p, s) in model.params_mut().into_iter().zip(states.iter_mut()) {
        if cfg.freeze_projector && p.name.starts_with("projector") {
            p.zero_grad();
            continue;
        }
        adam_step(p, s, cfg.finetune_lr)?;
    }
    adam_step(&mut centers.centers, center_state, cfg.finetune_lr)?;
    Ok(report)
}

/// Result of fine-tuning.
#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: TrainedModel,
    /// Epoch whose parameters were returned. Only fine-tuned epochs are candidates,
    /// so this is 0 only when `finetune_epochs` is 0.
    pub selected_epoch: usize,
    /// Accuracy after each epoch, index 0 being the initial centers. Empty when the
    /// graph has no labels.
    pub epoch_accuracy: Vec<f64>,
}

struct Snapshot {
    epoch: usize,
    score: f64,
    model: DinkModel,
    centers: ClusterCenters,
    states: Vec<AdamState>,
    center_state: AdamState,
}

/// Clustering-oriented fine-tuning. Centers come from K-Means++ plus Lloyd on the
/// pre-trained embeddings unless `trained` is already fine-tuned, in which case
/// training resumes from its centers.
pub fn finetune(
    g: &SparseGraph,
    trained: TrainedModel,
    cfg: &TrainConfig,
    log: &mut TrainingLog,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    check_graph(g)?;
    check_input_dim(g, &trained.model)?;
    let k = cfg.cluster_count;
    if k < 2 || k > g.num_nodes() {
        return Err(Error::Argument(format!(
            "cluster_count must be in 2..={} for this graph, got {k}",
            g.num_nodes()
        )));
    }
    let adj = normalize_adjacency(g);
    let x = g.features();
    let mut model = trained.model;
    let mut centers = match (trained.stage, trained.centers) {
        (Stage::Finetuned, Some(c)) => {
            if c.k() != k || c.dim() != model.encoder.latent_dim() {
                return Err(Error::shape(
                    "resumed centers",
                    format!("{k}x{}", model.encoder.latent_dim()),
                    format!("{}x{}", c.k(), c.dim()),
                ));
            }
            c
        }
        _ => {
            let h = embed_with(&adj, x, &model, cfg)?;
            let seeded = kmeanspp_init(&h, k, &mut stage_rng(cfg.seed, RngStream::Centers))?;
            lloyd_refine(&h, &seeded, cfg.lloyd_init_iters)?
        }
    };

    let labels = g.labels();
    let score_of = |model: &DinkModel, centers: &ClusterCenters, loss: f64| -> Result<f64> {
        match labels {
            Some(truth) => accuracy(&infer_with(&adj, x, model, centers, cfg)?, truth),
            None => Ok(-loss),
        }
    };

    let mut rng = stage_rng(cfg.seed, RngStream::Finetune);
    let spec = cfg.augmentation();
    let full = cfg.batch_size.is_none().then(|| full_batch(g));
    let mut states = fresh_states(&model);
    let mut center_state = AdamState::for_param(&centers.centers, AdamConfig::default());
    let mut epoch_accuracy = Vec::new();
    let mut best: Option<Snapshot> = None;
    if labels.is_some() {
        epoch_accuracy.push(score_of(&model, &centers, f64::NAN)?);
    }

    let epochs = cfg.finetune_epochs;
    for epoch in 1..=epochs {
        let batches = epoch_batches(g, full.as_ref(), cfg.batch_size, &mut rng)?;
        let mut reports = Vec::with_capacity(batches.len());
        for (b, batch) in batches.iter().enumerate() {
            let report = finetune_step(
                &mut model,
                &mut centers,
                &mut states,
                &mut center_state,
                batch,
                &spec,
                cfg,
                &mut rng,
            )
            .map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("{msg} in finetune epoch {epoch} batch {b}"))
                }
                other => other,
            })?;
            log.push(LogStage::Finetune, epoch, Some(b), report)?;
            reports.push(report);
        }
        let summary = mean_report(&reports);
        if should_log(cfg, epoch, epochs) {
            log.push(LogStage::Finetune, epoch, None, summary)?;
        }

        if labels.is_some() || cfg.select_best {
            let score = score_of(&model, &centers, summary.total)?;
            if labels.is_some() {
                epoch_accuracy.push(score);
            }
            if best.as_ref().is_none_or(|s| score > s.score) {
                best = Some(Snapshot {
                    epoch,
                    score,
                    model: model.clone(),
                    centers: centers.clone(),
                    states: states.clone(),
                    center_state: center_state.clone(),
                });
            }
        }
    }
    log.flush()?;

    let mut selected_epoch = epochs;
    if cfg.select_best {
        if let Some(s) = best {
            selected_epoch = s.epoch;
            model = s.model;
            centers = s.centers;
            states = s.states;
            center_state = s.center_state;
        }
    }
    let mut optimizer: Vec<(String, AdamState)> = model
        .params()
        .into_iter()
        .map(|p| p.name.clone())
        .zip(states)
        .collect();
    optimizer.push((centers.centers.name.clone(), center_state));
    Ok(FinetuneOutcome {
        model: TrainedModel {
            model,
            centers: Some(centers),
            stage: Stage::Finetuned,
            config: cfg.clone(),
            optimizer,
        },
        selected_epoch,
        epoch_accuracy,
    })
}

/// One complete pre-train, fine-tune, infer (and evaluate, when labeled) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: TrainedModel,
    pub assignment: AssignmentVector,
    pub metrics: Option<MetricsReport>,
    pub selected_epoch: usize,
    pub epoch_accuracy: Vec<f64>,
}

pub fn run(g: &SparseGraph, cfg: &TrainConfig, log: &mut TrainingLog) -> Result<RunOutcome> {
    let pretrained = pretrain(g, cfg, log)?;
    let tuned = finetune(g, pretrained, cfg, log)?;
    let assignment = infer(g, &tuned.model)?;
    let metrics = g
        .labels()
        .map(|truth| evaluate_labels(&assignment, truth, Some(cfg.seed), cfg.nmi_normalization))
        .transpose()?;
    Ok(RunOutcome {
        model: tuned.model,
        assignment,
        metrics,
        selected_epoch: tuned.selected_epoch,
        epoch_accuracy: tuned.epoch_accuracy,
    })
}

/// Runs the full pipeline once per seed and aggregates the metrics.
pub fn evaluate_runs(g: &SparseGraph, cfg: &TrainConfig, seeds: &[u64]) -> Result<AggregateReport> {
    if g.labels().is_none() {
        return Err(Error::Argument(
            "evaluation needs ground-truth labels".into(),
        ));
    }
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        let outcome = run(g, &cfg, &mut TrainingLog::in_memory())?;
        reports.push(outcome.metrics.expect("labels checked above"));
    }
    aggregate(reports)
}
