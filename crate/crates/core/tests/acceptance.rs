//! Acceptance run. Prints one status line per criterion and exits non-zero if any
//! criterion fails. Criteria whose inputs are unavailable print NOT RUN (or PARTIAL
//! when only part could be checked) and do not count as passed.
//!
//! Cora is read from `$DINK_CORA_DIR` (`features.txt` or `features.bin`,
//! `edges.txt`, `labels.txt`).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dink_core::bench::{run_bench, summarize, BenchConfig};
use dink_core::clustering::{kmeans_baseline, ClusterCenters};
use dink_core::graph::{
    augment, generate_sbm, load_graph, normalize_adjacency, AugmentationSpec, SbmParams,
    SparseGraph,
};
use dink_core::losses::{
    dilation_loss, discrimination_loss, discrimination_loss_logits, normalize_rows,
    normalize_rows_backward, shrink_loss,
};
use dink_core::metrics::{accuracy, ari, f1, hungarian_map, nmi, ContingencyTable};
use dink_core::model::DinkModel;
use dink_core::numerics::{relative_error, DenseMatrix};
use dink_core::pipeline::{
    encode_checkpoint, finetune_objective, infer, run, LogStage, Preset, RunOutcome, TrainConfig,
    TrainingLog,
};

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Partial,
    NotRun,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Partial => "PARTIAL",
            Status::NotRun => "NOT RUN",
        }
    }
}

struct Verdict {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    Verdict {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// Worst relative error between `grad` and central differences of `f` at `x`.
fn fd_check(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> f64 {
    const H: f64 = 1e-6;
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + H;
        let plus = f(&probe);
        probe[i] = x[i] - H;
        let minus = f(&probe);
        probe[i] = x[i];
        worst = worst.max(relative_error(grad[i], (plus - minus) / (2.0 * H)));
    }
    worst
}

fn with_values(m: &DenseMatrix, v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_vec(m.rows(), m.cols(), v.to_vec()).unwrap()
}

fn random_graph(n: usize, dim: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    SparseGraph::from_edges(random_matrix(n, dim, rng), &edges, None).unwrap()
}

/// Worst error over every gradient of one random instance, labelled by its source.
fn gradient_instance(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let n = rng.random_range(6..=20);
    let in_dim = rng.random_range(3..=8);
    let d = rng.random_range(2..=8);
    let k = rng.random_range(2..=4);
    let depth = 1 + (seed % 2) as usize;
    let g = random_graph(n, in_dim, 0.3, &mut rng);
    let aug = augment(&g, &AugmentationSpec::default(), &mut rng).unwrap();
    let (adj, aug_adj) = (normalize_adjacency(&g), normalize_adjacency(&aug));
    let model = DinkModel::init(in_dim, d, depth, &mut rng).unwrap();
    let centers = ClusterCenters::new(random_matrix(k, d, &mut rng)).unwrap();
    let cfg = TrainConfig {
        alpha: 0.5,
        normalize_embeddings: !seed.is_multiple_of(3),
        cluster_count: k,
        ..TrainConfig::default()
    };
    let objective = |m: &mut DinkModel, c: &mut ClusterCenters| {
        finetune_objective(m, c, (&adj, g.features()), (&aug_adj, aug.features()), &cfg)
            .unwrap()
            .total
    };

    let mut out = Vec::new();
    let (mut m, mut c) = (model.clone(), centers.clone());
    objective(&mut m, &mut c);
    for (idx, p) in m.params().into_iter().enumerate() {
        let err = fd_check(
            |v| {
                let (mut m2, mut c2) = (model.clone(), centers.clone());
                m2.params_mut()[idx].value = with_values(&p.value, v);
                objective(&mut m2, &mut c2)
            },
            p.value.as_slice(),
            p.grad.as_slice(),
        );
        let label = if p.name.starts_with("projector") {
            "projector and summary head"
        } else {
            "encoder"
        };
        out.push((label, err));
    }
    let err = fd_check(
        |v| {
            let (mut m2, mut c2) = (model.clone(), centers.clone());
            c2.centers.value = with_values(centers.values(), v);
            objective(&mut m2, &mut c2)
        },
        centers.values().as_slice(),
        c.centers.grad.as_slice(),
    );
    out.push(("centers through full objective", err));

    // The individual loss terms against every argument.
    let s: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let s_aug: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (_, gs, gs_aug) = discrimination_loss_logits(&s, &s_aug).unwrap();
    let dis = |a: &[f64], b: &[f64]| discrimination_loss_logits(a, b).unwrap().0;
    out.push((
        "discrimination (logits)",
        fd_check(|v| dis(v, &s_aug), &s, &gs),
    ));
    out.push((
        "discrimination (logits)",
        fd_check(|v| dis(&s, v), &s_aug, &gs_aug),
    ));
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let p_aug: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let (_, gp, gp_aug) = discrimination_loss(&p, &p_aug).unwrap();
    let disp = |a: &[f64], b: &[f64]| discrimination_loss(a, b).unwrap().0;
    out.push((
        "discrimination (probabilities)",
        fd_check(|v| disp(v, &p_aug), &p, &gp),
    ));
    out.push((
        "discrimination (probabilities)",
        fd_check(|v| disp(&p, v), &p_aug, &gp_aug),
    ));

    let h = random_matrix(n, d, &mut rng);
    let c0 = centers.values().clone();
    let (_, g_dil) = dilation_loss(&c0).unwrap();
    out.push((
        "dilation",
        fd_check(
            |v| dilation_loss(&with_values(&c0, v)).unwrap().0,
            c0.as_slice(),
            g_dil.as_slice(),
        ),
    ));
    let (_, g_h, g_c) = shrink_loss(&h, &c0).unwrap();
    out.push((
        "shrink",
        fd_check(
            |v| shrink_loss(&with_values(&h, v), &c0).unwrap().0,
            h.as_slice(),
            g_h.as_slice(),
        ),
    ));
    out.push((
        "shrink",
        fd_check(
            |v| shrink_loss(&h, &with_values(&c0, v)).unwrap().0,
            c0.as_slice(),
            g_c.as_slice(),
        ),
    ));
    // Row normalization, checked through a fixed linear functional.
    let w = random_matrix(n, d, &mut rng);
    let (hn, norms) = normalize_rows(&h);
    let g_norm = normalize_rows_backward(&hn, &norms, &w);
    let dotw = |m: &DenseMatrix| -> f64 {
        m.as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    };
    out.push((
        "row normalization",
        fd_check(
            |v| dotw(&normalize_rows(&with_values(&h, v)).0),
            h.as_slice(),
            g_norm.as_slice(),
        ),
    ));
    out
}

fn criterion_1() -> Verdict {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for seed in 0..20 {
        for (label, err) in gradient_instance(seed) {
            match worst.iter_mut().find(|(l, _)| *l == label) {
                Some(entry) => entry.1 = entry.1.max(err),
                None => worst.push((label, err)),
            }
        }
    }
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(l, e)| format!("{l} {e:.1e}")).collect();
    verdict(
        max < 1e-4,
        format!(
            "20 instances, worst relative error {max:.2e} ({})",
            parts.join(", ")
        ),
    )
}

fn sbm_fixture(seed: u64) -> SparseGraph {
    let params = SbmParams {
        blocks: 3,
        block_size: 50,
        p_in: 0.3,
        p_out: 0.01,
        feature_dim: 32,
        feature_shift: 3.0,
    };
    generate_sbm(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn sbm_config(seed: u64) -> TrainConfig {
    TrainConfig {
        pretrain_epochs: 100,
        finetune_epochs: 50,
        latent_dim: 64,
        cluster_count: 3,
        seed,
        ..TrainConfig::default()
    }
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut partitions = 0;
    for _ in 0..10 {
        let h = random_matrix(24, 5, &mut rng);
        let c = random_matrix(3, 5, &mut rng);
        let full = shrink_loss(&h, &c).unwrap().0;
        for size in [1, 2, 3, 4, 6, 8, 12, 24] {
            let mut ids: Vec<usize> = (0..24).collect();
            ids.shuffle(&mut rng);
            let parts: Vec<f64> = ids
                .chunks(size)
                .map(|chunk| shrink_loss(&h.select_rows(chunk), &c).unwrap().0)
                .collect();
            let mean = parts.iter().sum::<f64>() / parts.len() as f64;
            worst = worst.max((mean - full).abs() / full.abs());
            partitions += 1;
        }
    }

    let g = sbm_fixture(7);
    let cfg = TrainConfig {
        pretrain_epochs: 10,
        finetune_epochs: 3,
        latent_dim: 16,
        ..sbm_config(7)
    };
    let mut trained = run(&g, &cfg, &mut TrainingLog::in_memory()).unwrap().model;
    let mut mismatched = Vec::new();
    trained.config.infer_batch_size = None;
    let reference = infer(&g, &trained).unwrap();
    for bs in [1, 7, 64, 149] {
        trained.config.infer_batch_size = Some(bs);
        if infer(&g, &trained).unwrap() != reference {
            mismatched.push(bs);
        }
    }
    verdict(
        worst <= 1e-10 && mismatched.is_empty(),
        format!(
            "shrink over {partitions} partitions: worst relative gap {worst:.1e}; \
             batched infer (B = 1, 7, 64, 149 of 150) identical: {}",
            if mismatched.is_empty() {
                "yes".to_string()
            } else {
                format!("no, differs at {mismatched:?}")
            }
        ),
    )
}

/// Best matched count over every injective cluster-to-class map, by enumeration.
fn brute_force_matched(pred: &[usize], truth: &[usize]) -> u64 {
    let t = ContingencyTable::new(pred, truth).unwrap();
    let (kp, kt) = (t.pred_ids.len(), t.true_ids.len());
    let n = kp.max(kt);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = 0u64;
    permute(&mut perm, 0, &mut |p| {
        let score = (0..kp)
            .filter(|&r| p[r] < kt)
            .map(|r| t.counts[r][p[r]])
            .sum::<u64>();
        best = best.max(score);
    });
    best
}

fn permute(v: &mut Vec<usize>, at: usize, visit: &mut dyn FnMut(&[usize])) {
    if at == v.len() {
        visit(v);
        return;
    }
    for i in at..v.len() {
        v.swap(at, i);
        permute(v, at + 1, visit);
        v.swap(at, i);
    }
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut disagreements = 0;
    let instances = 60;
    for _ in 0..instances {
        let kp = rng.random_range(1..=6);
        let kt = rng.random_range(1..=6);
        let n = rng.random_range(10..=60);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        if hungarian_map(&pred, &truth).unwrap().matched != brute_force_matched(&pred, &truth) {
            disagreements += 1;
        }
    }

    let (p, t) = ([0, 0, 0, 1], [0, 0, 1, 1]);
    let (q, u) = ([0, 1, 0, 1], [0, 0, 1, 1]);
    let ln = f64::ln;
    let mi = 0.5 * ln(4.0 / 3.0) + 0.25 * ln(2.0 / 3.0) + 0.25 * ln(2.0);
    let h_pred = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
    let nmi_hand = mi / ((h_pred + ln(2.0)) / 2.0);
    let checks = [
        ("acc", accuracy(&p, &t).unwrap(), 0.75),
        ("nmi", nmi(&p, &t).unwrap(), nmi_hand),
        ("nmi independent", nmi(&q, &u).unwrap(), 0.0),
        ("ari", ari(&q, &u).unwrap(), -0.5),
        ("f1", f1(&p, &t).unwrap(), (0.8 + 2.0 / 3.0) / 2.0),
    ];
    let mut failed: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-12)
        .map(|(name, got, want)| format!("{name} {got} != {want}"))
        .collect();
    if ari(&q, &u).unwrap() != -0.5 {
        failed.push("ari not exactly -0.5".into());
    }
    verdict(
        disagreements == 0 && failed.is_empty(),
        format!(
            "Hungarian vs brute force: {} of {instances} instances agree (K <= 6); \
             worked examples: {}",
            instances - disagreements,
            if failed.is_empty() {
                "all match".to_string()
            } else {
                failed.join("; ")
            }
        ),
    )
}

struct SbmRuns {
    outcomes: Vec<RunOutcome>,
    baselines: Vec<f64>,
    logs: Vec<TrainingLog>,
}

fn sbm_runs() -> SbmRuns {
    let mut runs = SbmRuns {
        outcomes: Vec::new(),
        baselines: Vec::new(),
        logs: Vec::new(),
    };
    for seed in 0..3 {
        let g = sbm_fixture(seed);
        let mut log = TrainingLog::in_memory();
        runs.outcomes
            .push(run(&g, &sbm_config(seed), &mut log).unwrap());
        runs.logs.push(log);
        let km =
            kmeans_baseline(g.features(), 3, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        runs.baselines
            .push(accuracy(km.assignment.as_slice(), g.labels().unwrap()).unwrap());
    }
    runs
}

fn criterion_4(runs: &SbmRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (seed, (o, base)) in runs.outcomes.iter().zip(&runs.baselines).enumerate() {
        let acc = o.metrics.as_ref().unwrap().acc;
        ok &= acc >= 0.95 && acc > *base;
        parts.push(format!(
            "seed {seed}: acc {acc:.3} (epoch {} kept, last epoch {:.3}) vs K-Means {base:.3}",
            o.selected_epoch,
            o.epoch_accuracy.last().unwrap()
        ));
    }
    verdict(ok, parts.join("; "))
}

/// Share of consecutive 10-epoch moving averages that do not increase, and whether
/// the last epoch beats the first.
fn convergence(series: &[f64]) -> (f64, bool) {
    const W: usize = 10;
    let avgs: Vec<f64> = series
        .windows(W)
        .map(|w| w.iter().sum::<f64>() / W as f64)
        .collect();
    let steps = avgs.len().saturating_sub(1).max(1);
    let good = avgs.windows(2).filter(|p| p[1] <= p[0]).count();
    let last_below_first = series.last() < series.first();
    (good as f64 / steps as f64, last_below_first)
}

fn cora_dir() -> Option<PathBuf> {
    std::env::var_os("DINK_CORA_DIR").map(PathBuf::from)
}

fn load_cora(dir: &Path) -> dink_core::Result<SparseGraph> {
    let features = ["features.txt", "features.bin"]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.exists())
        .unwrap_or_else(|| dir.join("features.txt"));
    load_graph(
        &features,
        &dir.join("edges.txt"),
        Some(&dir.join("labels.txt")),
    )
}

struct CoraRuns {
    outcomes: Vec<RunOutcome>,
    logs: Vec<TrainingLog>,
}

fn cora_runs(dir: &Path) -> dink_core::Result<CoraRuns> {
    let g = load_cora(dir)?;
    let mut runs = CoraRuns {
        outcomes: Vec::new(),
        logs: Vec::new(),
    };
    for seed in 0..3 {
        let cfg = TrainConfig {
            seed,
            ..Preset::Cora.config()
        };
        let mut log = TrainingLog::in_memory();
        runs.outcomes.push(run(&g, &cfg, &mut log)?);
        runs.logs.push(log);
    }
    Ok(runs)
}

fn criterion_5(cora: &Option<dink_core::Result<CoraRuns>>) -> Verdict {
    let runs = match cora {
        None => {
            return Verdict {
                status: Status::NotRun,
                detail: "DINK_CORA_DIR is not set".into(),
            }
        }
        Some(Err(e)) => return verdict(false, format!("could not run on Cora: {e}")),
        Some(Ok(r)) => r,
    };
    let n = runs.outcomes.len() as f64;
    let mean = |f: fn(&dink_core::metrics::MetricsReport) -> f64| {
        runs.outcomes
            .iter()
            .map(|o| f(o.metrics.as_ref().unwrap()))
            .sum::<f64>()
            / n
    };
    let (acc, nmi) = (mean(|m| m.acc), mean(|m| m.nmi));
    let within_target = (acc - 0.781).abs() <= 0.08;
    let margin = acc - 0.338 >= 0.25;
    let nmi_ok = nmi >= 0.45;
    let detail = format!(
        "mean acc {acc:.4} (reference 0.7810), nmi {nmi:.4} (reference 0.6228), \
         margin over the K-Means reference {:.1} points",
        100.0 * (acc - 0.338)
    );
    if within_target && margin && nmi_ok {
        verdict(true, detail)
    } else {
        Verdict {
            status: if margin {
                Status::Partial
            } else {
                Status::Fail
            },
            detail: format!("{detail}; point target missed"),
        }
    }
}

fn criterion_6() -> Verdict {
    let points = match run_bench(&BenchConfig::default()) {
        Ok(p) => p,
        Err(e) => return verdict(false, format!("bench failed: {e}")),
    };
    let summary = summarize(&points).unwrap();
    let r2_ok = summary.fits.iter().all(|(_, f)| f.r_squared >= 0.9);
    let ratio_ok = summary
        .node_ratios
        .iter()
        .all(|(_, r)| (0.8..=1.3).contains(r));
    let fits: Vec<String> = summary
        .fits
        .iter()
        .map(|(n, f)| format!("N={n} R^2 {:.4}", f.r_squared))
        .collect();
    let ratios: Vec<String> = summary
        .node_ratios
        .iter()
        .map(|(b, r)| format!("B={b} {r:.2}"))
        .collect();
    verdict(
        r2_ok && ratio_ok,
        format!(
            "{}; N-doubling time ratios {}",
            fits.join(", "),
            ratios.join(", ")
        ),
    )
}

fn convergence_detail(name: &str, logs: &[TrainingLog]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for log in logs {
        let series = log.epoch_totals(LogStage::Finetune);
        let (share, lower) = convergence(&series);
        ok &= share >= 0.9 && lower;
        parts.push(format!(
            "{:.3} -> {:.3}, {:.0}% windows non-increasing",
            series.first().copied().unwrap_or(f64::NAN),
            series.last().copied().unwrap_or(f64::NAN),
            100.0 * share
        ));
    }
    (ok, format!("{name}: {}", parts.join(" / ")))
}

fn criterion_7(sbm: &SbmRuns, cora: &Option<dink_core::Result<CoraRuns>>) -> Verdict {
    let (sbm_ok, sbm_detail) = convergence_detail("SBM", &sbm.logs);
    match cora {
        Some(Ok(c)) => {
            let (cora_ok, cora_detail) = convergence_detail("Cora", &c.logs);
            verdict(sbm_ok && cora_ok, format!("{sbm_detail}; {cora_detail}"))
        }
        Some(Err(e)) => verdict(false, format!("{sbm_detail}; Cora failed: {e}")),
        None => Verdict {
            status: if sbm_ok {
                Status::Partial
            } else {
                Status::Fail
            },
            detail: format!("{sbm_detail}; Cora half not run (DINK_CORA_DIR is not set)"),
        },
    }
}

fn criterion_8() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let files = dink_core::graph::io::write_dataset(dir.path(), &sbm_fixture(11)).unwrap();
    let cfg = TrainConfig {
        pretrain_epochs: 30,
        finetune_epochs: 10,
        batch_size: Some(64),
        ..sbm_config(11)
    };
    let once = || {
        let g = files.load().unwrap();
        let o = run(&g, &cfg, &mut TrainingLog::in_memory()).unwrap();
        (o.assignment, encode_checkpoint(&o.model))
    };
    let first = once();
    let second = once();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let threaded = pool.install(once);
    let same = first == second;
    let same_threads = first == threaded;
    verdict(
        same && same_threads,
        format!(
            "two runs identical: {same}; run on a 3-thread pool identical: {same_threads} \
             ({} checkpoint bytes)",
            first.1.len()
        ),
    )
}

fn main() {
    let mut statuses = Vec::new();
    let mut report = |n: usize, name: &str, budget_s: f64, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let mut v = f();
        let secs = start.elapsed().as_secs_f64();
        if v.status == Status::Pass && secs > budget_s {
            v = verdict(
                false,
                format!("{} (over the {budget_s} s budget)", v.detail),
            );
        }
        println!(
            "{} criterion {n} {name}: {} [{secs:.1} s]",
            v.status.label(),
            v.detail
        );
        statuses.push(v.status);
    };

    report(1, "gradient suite", 30.0, &mut criterion_1);
    report(2, "mini-batch equivalence", 10.0, &mut criterion_2);
    report(3, "oracle equivalence", 30.0, &mut criterion_3);
    let start = Instant::now();
    let sbm = sbm_runs();
    let sbm_secs = start.elapsed().as_secs_f64();
    report(4, "planted-structure recovery", 120.0, &mut || {
        let v = criterion_4(&sbm);
        if sbm_secs > 120.0 {
            verdict(
                false,
                format!("{}; training took {sbm_secs:.0} s", v.detail),
            )
        } else {
            Verdict {
                detail: format!("{}; training took {sbm_secs:.1} s", v.detail),
                ..v
            }
        }
    });
    let start = Instant::now();
    let cora = cora_dir().map(|d| cora_runs(&d));
    let cora_secs = start.elapsed().as_secs_f64();
    report(5, "Cora reproduction", 900.0, &mut || {
        let v = criterion_5(&cora);
        if v.status == Status::Pass && cora_secs > 900.0 {
            verdict(false, format!("{} (took {cora_secs:.0} s)", v.detail))
        } else {
            v
        }
    });
    report(6, "scaling shape", 300.0, &mut criterion_6);
    report(7, "convergence", 60.0, &mut || criterion_7(&sbm, &cora));
    report(8, "determinism", 60.0, &mut criterion_8);

    if statuses.contains(&Status::Fail) {
        std::process::exit(1);
    }
}
