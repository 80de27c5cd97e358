//! Per-iteration fine-tuning cost as a function of batch size and graph size.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterCenters;
use crate::error::{Error, Result};
use crate::graph::{generate_sbm, sample_batches, MiniBatch, SbmParams};
use crate::model::DinkModel;
use crate::numerics::{AdamConfig, AdamState};
use crate::pipeline::{finetune_step, stage_rng, RngStream, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub node_counts: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    /// Expected node degree of the generated graphs, independent of their size.
    pub mean_degree: f64,
    /// Timed steps per repeat.
    pub iters: usize,
    /// The reported time is the fastest repeat.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            node_counts: vec![8192, 16384],
            batch_sizes: vec![256, 512, 1024, 2048, 4096],
            feature_dim: 64,
            latent_dim: 64,
            clusters: 8,
            mean_degree: 10.0,
            iters: 3,
            repeats: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub nodes: usize,
    pub batch_size: usize,
    pub seconds_per_iter: f64,
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Argument(
            "linear fit needs at least two (x, y) pairs".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Argument("linear fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

fn bench_graph(cfg: &BenchConfig, nodes: usize) -> Result<crate::graph::SparseGraph> {
    let block_size = nodes / cfg.clusters;
    // Degree split 80/20 between in-block and cross-block neighbours.
    let p_in = (0.8 * cfg.mean_degree / block_size as f64).min(1.0);
    let p_out = (0.2 * cfg.mean_degree / nodes as f64).min(p_in / 2.0);
    let params = SbmParams {
        blocks: cfg.clusters,
        block_size,
        p_in,
        p_out,
        feature_dim: cfg.feature_dim,
        feature_shift: 1.0,
    };
    generate_sbm(&params, &mut stage_rng(cfg.seed, RngStream::Init))
}

/// Model, optimizer state and pre-sampled batches for one (node count, batch size) point.
struct Runner {
    model: DinkModel,
    centers: ClusterCenters,
    states: Vec<AdamState>,
    center_state: AdamState,
    batches: Vec<MiniBatch>,
    next: usize,
    train_cfg: TrainConfig,
    rng: rand_chacha::ChaCha8Rng,
}

impl Runner {
    fn new(cfg: &BenchConfig, g: &crate::graph::SparseGraph, b: usize) -> Result<Self> {
        let train_cfg = TrainConfig {
            latent_dim: cfg.latent_dim,
            cluster_count: cfg.clusters,
            seed: cfg.seed,
            ..TrainConfig::default()
        };
        let mut rng = stage_rng(cfg.seed, RngStream::Finetune);
        let model = DinkModel::init(g.num_features(), cfg.latent_dim, 1, &mut rng)?;
        let centers = ClusterCenters::new(crate::model::glorot_uniform(
            cfg.clusters,
            cfg.latent_dim,
            &mut rng,
        ))?;
        let states = model
            .params()
            .into_iter()
            .map(|p| AdamState::for_param(p, AdamConfig::default()))
            .collect();
        let center_state = AdamState::for_param(&centers.centers, AdamConfig::default());

        let needed = cfg.iters * cfg.repeats + 1;
        let mut batches: Vec<MiniBatch> = Vec::with_capacity(needed);
        while batches.len() < needed {
            let mut epoch = sample_batches(g, b, true, &mut rng)?;
            // keep full-size batches only
            epoch.retain(|mb| mb.len() == b);
            batches.extend(epoch);
        }
        batches.truncate(needed);
        Ok(Self {
            model,
            centers,
            states,
            center_state,
            batches,
            next: 0,
            train_cfg,
            rng,
        })
    }

    /// Runs the next `count` pre-sampled batches; returns seconds per step.
    fn steps(&mut self, count: usize) -> Result<f64> {
        let spec = self.train_cfg.augmentation();
        let start = Instant::now();
        for _ in 0..count {
            finetune_step(
                &mut self.model,
                &mut self.centers,
                &mut self.states,
                &mut self.center_state,
                &self.batches[self.next],
                &spec,
                &self.train_cfg,
                &mut self.rng,
            )?;
            self.next += 1;
        }
        Ok(start.elapsed().as_secs_f64() / count as f64)
    }
}

/// Times one fine-tuning step (augmentation, two-view forward, losses, backward,
/// Adam) for every (node count, batch size) pair. Batches are materialized before
/// the clock starts and repeats are interleaved across points, so slow periods on a
/// shared machine hit every point alike. Runs on a single worker thread.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchPoint>> {
    if cfg.clusters < 2 || cfg.iters == 0 || cfg.repeats == 0 {
        return Err(Error::Argument(
            "bench needs clusters >= 2, iters >= 1, repeats >= 1".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut runners = Vec::new();
        for &nodes in &cfg.node_counts {
            let g = bench_graph(cfg, nodes)?;
            for &b in &cfg.batch_sizes {
                if b > g.num_nodes() {
                    return Err(Error::Argument(format!(
                        "batch size {b} exceeds node count {}",
                        g.num_nodes()
                    )));
                }
                let mut r = Runner::new(cfg, &g, b)?;
                r.steps(1)?; // warm-up
                runners.push((nodes, b, r, f64::INFINITY));
            }
        }
        for _ in 0..cfg.repeats {
            for (_, _, r, best) in runners.iter_mut() {
                *best = best.min(r.steps(cfg.iters)?);
            }
        }
        Ok(runners
            .into_iter()
            .map(|(nodes, batch_size, _, best)| BenchPoint {
                nodes,
                batch_size,
                seconds_per_iter: best,
            })
            .collect())
    })
}

pub fn to_csv(points: &[BenchPoint]) -> String {
    let mut s = String::from("nodes,batch_size,seconds_per_iter\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{:.9}\n",
            p.nodes, p.batch_size, p.seconds_per_iter
        ));
    }
    s
}

/// Linear fit of time against batch size for the rows with `nodes`.
pub fn fit_for_nodes(points: &[BenchPoint], nodes: usize) -> Result<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.nodes == nodes)
        .map(|p| (p.batch_size as f64, p.seconds_per_iter))
        .unzip();
    linear_fit(&xs, &ys)
}

/// Summary of a sweep: one linear fit per node count, plus the time ratio between
/// the largest and smallest node count at each shared batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub fits: Vec<(usize, LinearFit)>,
    pub node_ratios: Vec<(usize, f64)>,
}

pub fn summarize(points: &[BenchPoint]) -> Result<BenchSummary> {
    let mut nodes: Vec<usize> = points.iter().map(|p| p.nodes).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let fits = nodes
        .iter()
        .map(|&n| Ok((n, fit_for_nodes(points, n)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut node_ratios = Vec::new();
    if let (Some(&lo), Some(&hi)) = (nodes.first(), nodes.last()) {
        if hi != lo {
            for p in points.iter().filter(|p| p.nodes == lo) {
                if let Some(q) = points
                    .iter()
                    .find(|q| q.nodes == hi && q.batch_size == p.batch_size)
                {
                    node_ratios.push((p.batch_size, q.seconds_per_iter / p.seconds_per_iter));
                }
            }
        }
    }
    Ok(BenchSummary { fits, node_ratios })
}
