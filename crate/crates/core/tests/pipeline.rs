use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dink_core::clustering::ClusterCenters;
use dink_core::graph::{generate_sbm, SbmParams, SparseGraph};
use dink_core::numerics::DenseMatrix;
use dink_core::pipeline::{
    finetune, infer, load_checkpoint, parse_log, pretrain, run, save_checkpoint, LogStage,
    ShrinkMode, Stage, TrainConfig, TrainingLog,
};
use dink_core::Error;

fn sbm(seed: u64) -> SparseGraph {
    let params = SbmParams {
        blocks: 3,
        block_size: 30,
        p_in: 0.3,
        p_out: 0.01,
        feature_dim: 16,
        feature_shift: 3.0,
    };
    generate_sbm(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        pretrain_epochs: 20,
        finetune_epochs: 5,
        latent_dim: 16,
        cluster_count: 3,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn pretrain_loss_decreases_on_sbm() {
    for seed in 0..5 {
        let cfg = TrainConfig {
            pretrain_epochs: 50,
            ..small_config(seed)
        };
        let mut log = TrainingLog::in_memory();
        pretrain(&sbm(seed), &cfg, &mut log).unwrap();
        let totals = log.epoch_totals(LogStage::Pretrain);
        assert_eq!(totals.len(), 50);
        let head: f64 = totals[..5].iter().sum();
        let tail: f64 = totals[45..].iter().sum();
        assert!(tail < head, "seed {seed}: {head} -> {tail}");
    }
}

#[test]
fn zero_epochs_leave_initial_state() {
    let g = sbm(1);
    let cfg = TrainConfig {
        pretrain_epochs: 0,
        finetune_epochs: 0,
        ..small_config(1)
    };
    let mut log = TrainingLog::in_memory();
    let out = run(&g, &cfg, &mut log).unwrap();
    assert!(log.records().is_empty());
    assert_eq!(out.selected_epoch, 0);
    assert_eq!(out.epoch_accuracy.len(), 1);
    assert_eq!(out.model.stage, Stage::Finetuned);
    assert_eq!(out.assignment.len(), g.num_nodes());
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let g = sbm(2);
    let a = run(&g, &small_config(3), &mut TrainingLog::in_memory()).unwrap();
    let b = run(&g, &small_config(3), &mut TrainingLog::in_memory()).unwrap();
    let c = run(&g, &small_config(4), &mut TrainingLog::in_memory()).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.assignment, b.assignment);
    assert_ne!(a.model.model, c.model.model);
}

#[test]
fn checkpoint_file_round_trip_preserves_inference() {
    let g = sbm(5);
    let out = run(&g, &small_config(5), &mut TrainingLog::in_memory()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&out.model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, out.model);
    assert_eq!(infer(&g, &loaded).unwrap(), out.assignment);
}

#[test]
fn finetuning_resumes_from_a_checkpoint() {
    let g = sbm(6);
    let cfg = small_config(6);
    let first = run(&g, &cfg, &mut TrainingLog::in_memory()).unwrap();
    let centers_before = first.model.centers.clone().unwrap();
    let resumed = finetune(&g, first.model, &cfg, &mut TrainingLog::in_memory()).unwrap();
    let centers_after = resumed.model.centers.unwrap();
    assert_eq!(centers_after.k(), 3);
    assert_ne!(centers_after, centers_before);
}

#[test]
fn infer_needs_a_finetuned_model() {
    let g = sbm(7);
    let pre = pretrain(&g, &small_config(7), &mut TrainingLog::in_memory()).unwrap();
    assert!(matches!(infer(&g, &pre), Err(Error::State(_))));
}

#[test]
fn single_center_assigns_everything_to_zero() {
    let g = sbm(8);
    let mut trained = pretrain(&g, &small_config(8), &mut TrainingLog::in_memory()).unwrap();
    trained.centers = Some(ClusterCenters::new(DenseMatrix::filled(1, 16, 0.5)).unwrap());
    trained.stage = Stage::Finetuned;
    for bs in [None, Some(4)] {
        trained.config.infer_batch_size = bs;
        assert!(infer(&g, &trained).unwrap().0.iter().all(|&c| c == 0));
    }
}

#[test]
fn cluster_count_outside_range_is_rejected() {
    let g = sbm(9);
    let pre = pretrain(&g, &small_config(9), &mut TrainingLog::in_memory()).unwrap();
    for k in [1, g.num_nodes() + 1] {
        let cfg = TrainConfig {
            cluster_count: k,
            ..small_config(9)
        };
        let res = finetune(&g, pre.clone(), &cfg, &mut TrainingLog::in_memory());
        assert!(matches!(res, Err(Error::Argument(_))), "k = {k}");
    }
}

#[test]
fn input_dimension_mismatch_is_rejected() {
    let g = sbm(10);
    let pre = pretrain(&g, &small_config(10), &mut TrainingLog::in_memory()).unwrap();
    let other = generate_sbm(
        &SbmParams {
            blocks: 3,
            block_size: 30,
            p_in: 0.3,
            p_out: 0.01,
            feature_dim: 8,
            feature_shift: 3.0,
        },
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert!(finetune(
        &other,
        pre,
        &small_config(10),
        &mut TrainingLog::in_memory()
    )
    .is_err());
}

#[test]
fn divergence_is_a_numeric_error() {
    let g = sbm(11);
    let huge = DenseMatrix::filled(g.num_nodes(), g.num_features(), 1e300);
    let edges: Vec<_> = g.undirected_edges().collect();
    let blown = SparseGraph::from_edges(huge, &edges, None).unwrap();
    let res = run(&blown, &small_config(11), &mut TrainingLog::in_memory());
    assert!(matches!(res, Err(Error::Numeric(_))), "{res:?}");
}

#[test]
fn unlabeled_runs_select_by_loss() {
    let g = sbm(12);
    let edges: Vec<_> = g.undirected_edges().collect();
    let unlabeled = SparseGraph::from_edges(g.features().clone(), &edges, None).unwrap();
    let out = run(&unlabeled, &small_config(12), &mut TrainingLog::in_memory()).unwrap();
    assert!(out.metrics.is_none());
    assert!(out.epoch_accuracy.is_empty());
    assert!((1..=5).contains(&out.selected_epoch));
}

#[test]
fn mini_batches_and_log_file_round_trip() {
    let g = sbm(13);
    let cfg = TrainConfig {
        batch_size: Some(32),
        ..small_config(13)
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    {
        let mut log = TrainingLog::to_file(&path).unwrap();
        run(&g, &cfg, &mut log).unwrap();
    }
    let records = parse_log(&std::fs::read_to_string(&path).unwrap()).unwrap();
    // 90 nodes in batches of 32 gives 3 steps per fine-tuning epoch.
    let steps = records
        .iter()
        .filter(|r| r.stage == LogStage::Finetune && r.batch.is_some())
        .count();
    assert_eq!(steps, 3 * cfg.finetune_epochs);
    assert!(records.iter().all(|r| r.loss.total.is_finite()));
}

#[test]
fn nearest_center_shrink_keeps_final_epoch_accuracy() {
    for seed in 0..2 {
        let cfg = TrainConfig {
            pretrain_epochs: 50,
            finetune_epochs: 30,
            shrink_mode: ShrinkMode::Nearest,
            select_best: false,
            ..small_config(seed)
        };
        let out = run(&sbm(seed), &cfg, &mut TrainingLog::in_memory()).unwrap();
        assert_eq!(out.selected_epoch, 30);
        assert!(out.metrics.unwrap().acc >= 0.95, "seed {seed}");
    }
}
