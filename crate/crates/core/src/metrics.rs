//! Clustering evaluation: optimal cluster-to-class matching and ACC / NMI / ARI / F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of distinct clusters or classes accepted by the matcher.
pub const MAX_MATCHED_LABELS: usize = 512;

/// Counts of (predicted cluster, true class) pairs over compacted label ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    /// `counts[p][t]` for compacted predicted id `p` and class id `t`.
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
    /// Original predicted id of each row.
    pub pred_ids: Vec<usize>,
    /// Original class id of each column.
    pub true_ids: Vec<usize>,
}

fn compact(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let codes = labels
        .iter()
        .map(|l| ids.binary_search(l).unwrap())
        .collect();
    (codes, ids)
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::shape("label vectors", truth.len(), pred.len()));
        }
        if pred.is_empty() {
            return Err(Error::Argument("cannot evaluate an empty labeling".into()));
        }
        let (p_codes, pred_ids) = compact(pred);
        let (t_codes, true_ids) = compact(truth);
        let mut counts = vec![vec![0u64; true_ids.len()]; pred_ids.len()];
        for (&p, &t) in p_codes.iter().zip(&t_codes) {
            counts[p][t] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..true_ids.len())
            .map(|t| counts.iter().map(|r| r[t]).sum())
            .collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: pred.len() as u64,
            pred_ids,
            true_ids,
        })
    }
}

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting paths
/// with potentials, O(n³)). Returns `row_to_col`.
pub fn linear_sum_assignment(cost: &[Vec<i128>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(
        cost.iter().all(|r| r.len() == n),
        "cost matrix must be square"
    );
    const INF: i128 = i128::MAX / 4;
    // 1-based: u/v potentials, p[col] = row matched to col, way = predecessor column
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}

/// Cluster-to-class matching that maximizes the number of agreeing nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    /// `(predicted cluster id, matched class id)`; clusters left without a class
    /// (more clusters than classes) are omitted.
    pub pairs: Vec<(usize, usize)>,
    /// Nodes whose matched class equals their true class.
    pub matched: u64,
}

impl LabelMapping {
    pub fn class_of(&self, cluster: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|(p, _)| *p == cluster)
            .map(|&(_, t)| t)
    }
}

fn mapping_from_table(table: &ContingencyTable) -> Result<LabelMapping> {
    let (kp, kt) = (table.pred_ids.len(), table.true_ids.len());
    if kp > MAX_MATCHED_LABELS || kt > MAX_MATCHED_LABELS {
        return Err(Error::Argument(format!(
            "label matching supports at most {MAX_MATCHED_LABELS} clusters/classes, got {kp}/{kt}"
        )));
    }
    let n = kp.max(kt);
    // Primary objective: matched nodes. Secondary (breaks ties between optimal
    // matchings so the choice does not depend on cluster numbering): the sum of
    // per-pair F1 scores 2·n/(row + col), quantized far below the primary unit.
    const PRIMARY: i128 = 1_000_000_000_000_000_000;
    const SECONDARY: f64 = 1e15;
    let cost: Vec<Vec<i128>> = (0..n)
        .map(|p| {
            (0..n)
                .map(|t| {
                    if p < kp && t < kt {
                        let count = table.counts[p][t];
                        let pair_f1 =
                            2.0 * count as f64 / (table.row_sums[p] + table.col_sums[t]) as f64;
                        -(count as i128 * PRIMARY + (pair_f1 * SECONDARY).round() as i128)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let row_to_col = linear_sum_assignment(&cost);
    let mut pairs = Vec::new();
    let mut matched = 0;
    for (p, &t) in row_to_col.iter().enumerate().take(kp) {
        if t < kt {
            pairs.push((table.pred_ids[p], table.true_ids[t]));
            matched += table.counts[p][t];
        }
    }
    Ok(LabelMapping { pairs, matched })
}

/// Optimal (Kuhn-Munkres) mapping of predicted clusters onto true classes.
pub fn hungarian_map(pred: &[usize], truth: &[usize]) -> Result<LabelMapping> {
    mapping_from_table(&ContingencyTable::new(pred, truth)?)
}

/// Fraction of nodes whose mapped cluster equals their class.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let m = hungarian_map(pred, truth)?;
    Ok(m.matched as f64 / pred.len() as f64)
}

/// Entropy normalization used by [`nmi_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    #[default]
    Arithmetic,
    Geometric,
}

fn entropy(counts: &[u64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

fn nmi_from_table(t: &ContingencyTable, norm: NmiNormalization) -> f64 {
    let total = t.total as f64;
    let hp = entropy(&t.row_sums, total);
    let ht = entropy(&t.col_sums, total);
    match (hp == 0.0, ht == 0.0) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut mi = 0.0;
    for (p, row) in t.counts.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            if n > 0 {
                let n = n as f64;
                mi += n / total * (total * n / (t.row_sums[p] as f64 * t.col_sums[c] as f64)).ln();
            }
        }
    }
    let denom = match norm {
        NmiNormalization::Arithmetic => 0.5 * (hp + ht),
        NmiNormalization::Geometric => (hp * ht).sqrt(),
    };
    (mi / denom).clamp(0.0, 1.0)
}

/// Normalized mutual information with natural logs and arithmetic-mean normalization.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNormalization::Arithmetic)
}

pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    Ok(nmi_from_table(&ContingencyTable::new(pred, truth)?, norm))
}

fn comb2(n: u64) -> i128 {
    let n = n as i128;
    n * (n - 1) / 2
}

fn ari_from_table(t: &ContingencyTable) -> f64 {
    let index: i128 = t.counts.iter().flatten().map(|&n| comb2(n)).sum();
    let a: i128 = t.row_sums.iter().map(|&n| comb2(n)).sum();
    let b: i128 = t.col_sums.iter().map(|&n| comb2(n)).sum();
    let pairs = comb2(t.total);
    if pairs == 0 {
        return 1.0;
    }
    // (index − a·b/pairs) / ((a + b)/2 − a·b/pairs), scaled by 2·pairs to stay integral
    let numerator = 2 * (index * pairs - a * b);
    let denominator = (a + b) * pairs - 2 * a * b;
    if denominator == 0 {
        return 1.0;
    }
    numerator as f64 / denominator as f64
}

/// Adjusted Rand index over pair counts.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(ari_from_table(&ContingencyTable::new(pred, truth)?))
}

fn f1_from_table(t: &ContingencyTable, mapping: &LabelMapping) -> f64 {
    let kt = t.true_ids.len();
    let mut tp = vec![0u64; kt];
    let mut predicted = vec![0u64; kt];
    for &(p, c) in &mapping.pairs {
        let pi = t.pred_ids.binary_search(&p).unwrap();
        let ci = t.true_ids.binary_search(&c).unwrap();
        tp[ci] = t.counts[pi][ci];
        predicted[ci] = t.row_sums[pi];
    }
    let per_class = (0..kt).map(|c| {
        if tp[c] == 0 {
            return 0.0;
        }
        let precision = tp[c] as f64 / predicted[c] as f64;
        let recall = tp[c] as f64 / t.col_sums[c] as f64;
        2.0 * precision * recall / (precision + recall)
    });
    per_class.sum::<f64>() / kt as f64
}

/// Macro-averaged F1 over true classes after optimal matching.
pub fn f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let mapping = mapping_from_table(&table)?;
    Ok(f1_from_table(&table, &mapping))
}

/// All four metrics for one labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
    pub mapping: Vec<(usize, usize)>,
    pub seed: Option<u64>,
}

pub fn evaluate_labels(
    pred: &[usize],
    truth: &[usize],
    seed: Option<u64>,
    norm: NmiNormalization,
) -> Result<MetricsReport> {
    let table = ContingencyTable::new(pred, truth)?;
    let mapping = mapping_from_table(&table)?;
    Ok(MetricsReport {
        acc: mapping.matched as f64 / table.total as f64,
        nmi: nmi_from_table(&table, norm),
        ari: ari_from_table(&table),
        f1: f1_from_table(&table, &mapping),
        mapping: mapping.pairs,
        seed,
    })
}

/// Metric values without the mapping, used for aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

/// Per-seed reports with their mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: Vec<MetricsReport>,
    pub mean: MetricValues,
    pub std: MetricValues,
}

pub fn aggregate(runs: Vec<MetricsReport>) -> Result<AggregateReport> {
    if runs.is_empty() {
        return Err(Error::Argument("nothing to aggregate".into()));
    }
    let n = runs.len() as f64;
    let stat = |f: fn(&MetricsReport) -> f64| {
        let mean = runs.iter().map(f).sum::<f64>() / n;
        let var = runs.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (acc, nmi, ari, f1) = (
        stat(|r| r.acc),
        stat(|r| r.nmi),
        stat(|r| r.ari),
        stat(|r| r.f1),
    );
    Ok(AggregateReport {
        mean: MetricValues {
            acc: acc.0,
            nmi: nmi.0,
            ari: ari.0,
            f1: f1.0,
        },
        std: MetricValues {
            acc: acc.1,
            nmi: nmi.1,
            ari: ari.1,
            f1: f1.1,
        },
        runs,
    })
}
