//! Graph convolutional encoder, MLP projector and node-summary head, with
//! hand-derived backward passes.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::numerics::{prelu, prelu_backward, spmm, DenseMatrix, ParamTensor};

pub const INITIAL_SLOPE: f64 = 0.25;

/// Glorot-uniform weight in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMatrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    DenseMatrix::from_vec(fan_in, fan_out, data).expect("finite init")
}

/// One propagation layer: `prelu(Â · X · W, slope)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub weight: ParamTensor,
    pub activation_slope: ParamTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<GcnLayer>,
}

impl EncoderParams {
    /// `depth` stacked layers mapping `input_dim` features to `latent_dim`.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        latent_dim: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if latent_dim == 0 || input_dim == 0 || depth == 0 {
            return Err(Error::Argument(format!(
                "encoder needs positive dims and depth (input {input_dim}, latent {latent_dim}, depth {depth})"
            )));
        }
        let layers = (0..depth)
            .map(|l| {
                let fan_in = if l == 0 { input_dim } else { latent_dim };
                GcnLayer {
                    weight: ParamTensor::new(
                        format!("encoder.{l}.weight"),
                        glorot_uniform(fan_in, latent_dim, rng),
                    ),
                    activation_slope: ParamTensor::scalar(
                        format!("encoder.{l}.slope"),
                        INITIAL_SLOPE,
                    ),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.value.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers.last().unwrap().weight.value.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams {
    pub weight: ParamTensor,
    pub activation_slope: ParamTensor,
}

impl ProjectorParams {
    pub fn init<R: Rng + ?Sized>(latent_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: ParamTensor::new(
                "projector.weight",
                glorot_uniform(latent_dim, latent_dim, rng),
            ),
            activation_slope: ParamTensor::scalar("projector.slope", INITIAL_SLOPE),
        }
    }
}

/// Intermediates of one encoder forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// Inputs of layers `1..depth`; layer 0's input is supplied again to `backward`.
    hidden_inputs: Vec<DenseMatrix>,
    pre_activations: Vec<DenseMatrix>,
}

/// Intermediates of one projector forward pass.
#[derive(Debug, Clone)]
pub struct ProjectorTrace {
    pre_activation: DenseMatrix,
}

fn check_cols(context: &str, m: &DenseMatrix, expected: usize) -> Result<()> {
    if m.cols() != expected {
        return Err(Error::shape(
            context,
            format!("{expected} columns"),
            m.cols(),
        ));
    }
    Ok(())
}

/// `H = prelu(Â · X · W, slope)` (per layer).
pub fn encode(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    enc: &EncoderParams,
) -> Result<(DenseMatrix, EncoderTrace)> {
    check_cols("encode input", x, enc.input_dim())?;
    let mut hidden_inputs = Vec::with_capacity(enc.layers.len() - 1);
    let mut pre_activations = Vec::with_capacity(enc.layers.len());
    let mut current: Option<DenseMatrix> = None;
    for layer in &enc.layers {
        let input = current.as_ref().unwrap_or(x);
        let pre = spmm(adj.matrix(), &input.matmul(&layer.weight.value)?)?;
        let out = prelu(&pre, layer.activation_slope.scalar_value());
        pre_activations.push(pre);
        if let Some(prev) = current.replace(out) {
            hidden_inputs.push(prev);
        }
    }
    let h = current.expect("at least one layer");
    Ok((
        h,
        EncoderTrace {
            hidden_inputs,
            pre_activations,
        },
    ))
}

/// Accumulates encoder parameter gradients for upstream gradient `grad_h`.
pub fn encode_backward(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    enc: &mut EncoderParams,
    trace: &EncoderTrace,
    grad_h: &DenseMatrix,
) -> Result<()> {
    let mut grad_out = grad_h.clone();
    for l in (0..enc.layers.len()).rev() {
        let layer = &mut enc.layers[l];
        let (grad_pre, grad_slope) = prelu_backward(
            &trace.pre_activations[l],
            layer.activation_slope.scalar_value(),
            &grad_out,
        );
        layer.activation_slope.grad.as_mut_slice()[0] += grad_slope;
        // Â is symmetric, so Âᵀ·G = Â·G.
        let propagated = spmm(adj.matrix(), &grad_pre)?;
        let input = if l == 0 {
            x
        } else {
            &trace.hidden_inputs[l - 1]
        };
        layer
            .weight
            .accumulate_grad(&input.matmul_tn(&propagated)?)?;
        if l > 0 {
            grad_out = propagated.matmul_nt(&layer.weight.value)?;
        }
    }
    Ok(())
}

/// Sorted, deduplicated column indices of `adj` over `rows`.
fn column_closure(adj: &NormalizedAdjacency, rows: &[usize]) -> Vec<usize> {
    let mut cols: Vec<usize> = rows
        .iter()
        .flat_map(|&r| adj.matrix().row(r).0.iter().copied())
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

/// Encoder output for `targets` only (in that order), propagating over the full
/// graph. Bitwise identical to the matching rows of [`encode`]: only the
/// `depth`-hop neighbourhood of the targets is computed, with the same per-row
/// arithmetic.
pub fn encode_rows(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    enc: &EncoderParams,
    targets: &[usize],
) -> Result<DenseMatrix> {
    check_cols("encode input", x, enc.input_dim())?;
    let n = adj.num_nodes();
    if x.rows() != n {
        return Err(Error::shape("encode input", format!("{n} rows"), x.rows()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
        return Err(Error::Range {
            context: "encode_rows target".into(),
            index: bad as u64,
            limit: n as u64,
        });
    }
    let depth = enc.layers.len();
    let mut row_sets = vec![Vec::new(); depth];
    row_sets[depth - 1] = targets.to_vec();
    for l in (0..depth - 1).rev() {
        row_sets[l] = column_closure(adj, &row_sets[l + 1]);
    }
    let mut current_rows = column_closure(adj, &row_sets[0]);
    let mut current = x.select_rows(&current_rows);
    for (layer, rows) in enc.layers.iter().zip(row_sets) {
        let xw = current.matmul(&layer.weight.value)?;
        let mut pre = DenseMatrix::zeros(rows.len(), xw.cols());
        for (r, &i) in rows.iter().enumerate() {
            let (cols, vals) = adj.matrix().row(i);
            let out = pre.row_mut(r);
            for (&c, &w) in cols.iter().zip(vals) {
                let pos = current_rows
                    .binary_search(&c)
                    .expect("closure contains every neighbour");
                for (o, &v) in out.iter_mut().zip(xw.row(pos)) {
                    *o += w * v;
                }
            }
        }
        current = prelu(&pre, layer.activation_slope.scalar_value());
        current_rows = rows;
    }
    Ok(current)
}

/// `Z = prelu(H · W, slope)`.
pub fn project(h: &DenseMatrix, proj: &ProjectorParams) -> Result<(DenseMatrix, ProjectorTrace)> {
    check_cols("project input", h, proj.weight.value.rows())?;
    let pre = h.matmul(&proj.weight.value)?;
    let z = prelu(&pre, proj.activation_slope.scalar_value());
    Ok((
        z,
        ProjectorTrace {
            pre_activation: pre,
        },
    ))
}

/// Accumulates projector gradients and returns the gradient with respect to `h`.
pub fn project_backward(
    h: &DenseMatrix,
    proj: &mut ProjectorParams,
    trace: &ProjectorTrace,
    grad_z: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (grad_pre, grad_slope) = prelu_backward(
        &trace.pre_activation,
        proj.activation_slope.scalar_value(),
        grad_z,
    );
    proj.activation_slope.grad.as_mut_slice()[0] += grad_slope;
    proj.weight.accumulate_grad(&h.matmul_tn(&grad_pre)?)?;
    grad_pre.matmul_nt(&proj.weight.value)
}

/// Row sums of `Z`: the pre-squashing node summaries.
pub fn summary_logits(z: &DenseMatrix) -> Vec<f64> {
    z.row_sums()
}

/// Node summaries `gᵢ = σ(Σⱼ Zᵢⱼ)`, each strictly inside (0, 1) for finite input.
pub fn summarize(z: &DenseMatrix) -> Vec<f64> {
    summary_logits(z)
        .into_iter()
        .map(crate::numerics::logistic)
        .collect()
}

/// Gradient of a loss with respect to `Z` given its gradient with respect to the
/// summary logits: each row receives its logit gradient in every column.
pub fn summary_logits_backward(grad_logits: &[f64], cols: usize) -> DenseMatrix {
    let mut g = DenseMatrix::zeros(grad_logits.len(), cols);
    for (r, &v) in grad_logits.iter().enumerate() {
        g.row_mut(r).fill(v);
    }
    g
}

/// Encoder and projector together.
#[derive(Debug, Clone, PartialEq)]
pub struct DinkModel {
    pub encoder: EncoderParams,
    pub projector: ProjectorParams,
}

/// Everything one view's forward pass produces.
#[derive(Debug, Clone)]
pub struct ViewForward {
    pub h: DenseMatrix,
    pub z: DenseMatrix,
    pub logits: Vec<f64>,
    encoder_trace: EncoderTrace,
    projector_trace: ProjectorTrace,
}

impl DinkModel {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        latent_dim: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = EncoderParams::init(input_dim, latent_dim, depth, rng)?;
        let projector = ProjectorParams::init(latent_dim, rng);
        Ok(Self { encoder, projector })
    }

    pub fn forward(&self, adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<ViewForward> {
        let (h, encoder_trace) = encode(adj, x, &self.encoder)?;
        let (z, projector_trace) = project(&h, &self.projector)?;
        let logits = summary_logits(&z);
        Ok(ViewForward {
            h,
            z,
            logits,
            encoder_trace,
            projector_trace,
        })
    }

    /// Backpropagates `grad_logits` (and an optional extra gradient arriving directly at
    /// `H`) into the parameter gradient buffers.
    pub fn backward(
        &mut self,
        adj: &NormalizedAdjacency,
        x: &DenseMatrix,
        fwd: &ViewForward,
        grad_logits: &[f64],
        grad_h_extra: Option<&DenseMatrix>,
    ) -> Result<()> {
        let grad_z = summary_logits_backward(grad_logits, fwd.z.cols());
        let mut grad_h =
            project_backward(&fwd.h, &mut self.projector, &fwd.projector_trace, &grad_z)?;
        if let Some(extra) = grad_h_extra {
            grad_h.add_assign(extra)?;
        }
        encode_backward(adj, x, &mut self.encoder, &fwd.encoder_trace, &grad_h)
    }

    /// All parameters in a fixed order: encoder layers, then the projector.
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for l in &self.encoder.layers {
            out.push(&l.weight);
            out.push(&l.activation_slope);
        }
        out.push(&self.projector.weight);
        out.push(&self.projector.activation_slope);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for l in &mut self.encoder.layers {
            out.push(&mut l.weight);
            out.push(&mut l.activation_slope);
        }
        out.push(&mut self.projector.weight);
        out.push(&mut self.projector.activation_slope);
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut()
            .into_iter()
            .for_each(ParamTensor::zero_grad);
    }
}
