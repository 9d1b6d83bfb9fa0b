//! Deep message-passing GNN with per-node weights.
//!
//! Layer `0` aggregates bias-augmented node inputs over the augmented
//! neighborhood, layers `1..k` aggregate the previous layer's embeddings the
//! same way, and the output layer `k` is a purely local map of the node's own
//! last hidden embedding:
//!
//! ```text
//! phi_i^(0) = [sigma(W_i^(0)^T  sum_{m in N̄_i} [kappa_m; 1]); 1]
//! phi_i^(j) = [sigma(W_i^(j)^T  sum_{m in N̄_i} phi_m^(j-1)); 1]      0 < j < k
//! phi_i     = out(W_i^(k)^T phi_i^(k-1))
//! ```
//!
//! Each node's weights are stored flat as `theta_i = [vec(W^(0)); ...; vec(W^(k))]`
//! with `vec` stacking columns, which is exactly nalgebra's column-major storage.
//!
//! Neighborhood sums are computed per component over the values sorted by
//! `f64::total_cmp`, so the result depends only on the multiset of summands.
//! That makes the forward pass bitwise equivariant under node relabeling.

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Element-wise activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Swish,
    Sigmoid,
}

impl Activation {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Swish => x * sigmoid(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer widths and activations shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnConfig {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    output_dim: usize,
    hidden_activations: Vec<Activation>,
    output_activation: Activation,
}

impl GnnConfig {
    /// Swish hidden layers and an identity output layer.
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        if hidden_dims.is_empty() {
            return Err(Error::Config("a GNN needs at least one hidden layer".into()));
        }
        if input_dim == 0 || output_dim == 0 || hidden_dims.contains(&0) {
            return Err(Error::Config("GNN layer widths must be positive".into()));
        }
        let hidden_activations = vec![Activation::Swish; hidden_dims.len()];
        Ok(Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activations,
            output_activation: Activation::Identity,
        })
    }

    /// Uses `activation` on every hidden layer.
    pub fn with_hidden_activation(mut self, activation: Activation) -> Self {
        self.hidden_activations.fill(activation);
        self
    }

    pub fn with_layer_activation(mut self, layer: usize, activation: Activation) -> Result<Self> {
        let depth = self.depth();
        let slot = self.hidden_activations.get_mut(layer).ok_or(Error::Dimension {
            context: "hidden layer index",
            expected: depth,
            actual: layer,
        })?;
        *slot = activation;
        Ok(self)
    }

    pub fn with_output_activation(mut self, activation: Activation) -> Self {
        self.output_activation = activation;
        self
    }

    /// Number of message-passing (hidden) layers, `k`.
    pub fn depth(&self) -> usize {
        self.hidden_dims.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn hidden_activation(&self, layer: usize) -> Activation {
        self.hidden_activations[layer]
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    /// Shape `(d^(j-1) + 1, d^(j))` of `W^(j)` for `j` in `0..=depth`.
    pub fn layer_shape(&self, layer: usize) -> (usize, usize) {
        let rows = if layer == 0 {
            self.input_dim + 1
        } else {
            self.hidden_dims[layer - 1] + 1
        };
        let cols = if layer == self.depth() {
            self.output_dim
        } else {
            self.hidden_dims[layer]
        };
        (rows, cols)
    }

    /// Offset of `vec(W^(layer))` inside the flat weight vector.
    pub fn layer_offset(&self, layer: usize) -> usize {
        (0..layer)
            .map(|j| {
                let (r, c) = self.layer_shape(j);
                r * c
            })
            .sum()
    }

    /// Weights per node.
    pub fn param_count(&self) -> usize {
        self.layer_offset(self.depth() + 1)
    }

    /// Draws a flat weight vector with i.i.d. `U(low, high)` entries in
    /// storage order.
    pub fn uniform_weights<R: Rng + ?Sized>(&self, rng: &mut R, low: f64, high: f64) -> DVector<f64> {
        DVector::from_fn(self.param_count(), |_, _| {
            if high > low {
                rng.gen_range(low..high)
            } else {
                low
            }
        })
    }

    fn layer_view<'a>(&self, theta: &'a DVector<f64>, layer: usize) -> DMatrixView<'a, f64> {
        let (rows, cols) = self.layer_shape(layer);
        let off = self.layer_offset(layer);
        DMatrixView::from_slice(&theta.as_slice()[off..off + rows * cols], rows, cols)
    }

    fn check_inputs(&self, graph: &Graph, weights: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<()> {
        let n = graph.node_count();
        if weights.len() < n {
            return Err(Error::Missing {
                what: "GNN weights",
                node: weights.len(),
            });
        }
        if weights.len() != n {
            return Err(Error::Dimension {
                context: "number of weight vectors",
                expected: n,
                actual: weights.len(),
            });
        }
        if inputs.len() != n {
            return Err(Error::Dimension {
                context: "number of node inputs",
                expected: n,
                actual: inputs.len(),
            });
        }
        let p = self.param_count();
        for w in weights {
            if w.len() != p {
                return Err(Error::Dimension {
                    context: "weight vector length",
                    expected: p,
                    actual: w.len(),
                });
            }
        }
        for x in inputs {
            if x.len() != self.input_dim {
                return Err(Error::Dimension {
                    context: "node input length",
                    expected: self.input_dim,
                    actual: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Evaluates every node and keeps the intermediate layers for
    /// [`GnnConfig::jacobians`].
    pub fn forward(&self, graph: &Graph, weights: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<ForwardPass> {
        self.check_inputs(graph, weights, inputs)?;
        let n = graph.node_count();
        let depth = self.depth();
        let augmented: Vec<Vec<usize>> = (0..n).map(|i| graph.augmented_neighbors(i)).collect();

        let biased: Vec<DVector<f64>> = inputs.iter().map(|x| x.push(1.0)).collect();
        let mut hidden: Vec<Vec<HiddenLayer>> = Vec::with_capacity(depth);
        for layer in 0..depth {
            let act = self.hidden_activations[layer];
            let nodes: Vec<HiddenLayer> = (0..n)
                .map(|i| {
                    let terms: Vec<&DVector<f64>> = augmented[i]
                        .iter()
                        .map(|&m| {
                            if layer == 0 {
                                &biased[m]
                            } else {
                                &hidden[layer - 1][m].embedding
                            }
                        })
                        .collect();
                    let aggregate = order_free_sum(&terms);
                    let pre_activation = self.layer_view(&weights[i], layer).tr_mul(&aggregate);
                    let embedding = pre_activation.map(|z| act.value(z)).push(1.0);
                    HiddenLayer {
                        aggregate,
                        pre_activation,
                        embedding,
                    }
                })
                .collect();
            hidden.push(nodes);
        }

        let last = &hidden[depth - 1];
        let out_act = self.output_activation;
        let output_pre: Vec<DVector<f64>> = (0..n)
            .map(|i| self.layer_view(&weights[i], depth).tr_mul(&last[i].embedding))
            .collect();
        let outputs = output_pre.iter().map(|z| z.map(|v| out_act.value(v))).collect();
        Ok(ForwardPass {
            hidden,
            output_pre,
            outputs,
        })
    }

    /// Analytic `d phi_i / d theta_j` for every `j` within `depth - 1` hops of
    /// `i` (including `i`), by reverse accumulation through `pass`.
    ///
    /// `pass` must come from [`GnnConfig::forward`] with the same graph and
    /// weights. The bias entry of each hidden embedding contributes nothing.
    pub fn jacobians(&self, graph: &Graph, weights: &[DVector<f64>], pass: &ForwardPass, i: usize) -> Result<NodeJacobians> {
        let n = graph.node_count();
        if i >= n {
            return Err(Error::NodeOutOfRange { index: i, nodes: n });
        }
        if weights.len() != n || pass.outputs.len() != n {
            return Err(Error::Dimension {
                context: "forward pass node count",
                expected: n,
                actual: pass.outputs.len().min(weights.len()),
            });
        }
        let depth = self.depth();
        let d_out = self.output_dim;
        let p = self.param_count();
        let mut blocks: Vec<Option<DMatrix<f64>>> = vec![None; n];

        // Output layer: only node i's own W^(k) enters, through a diagonal
        // activation derivative.
        let (rows, _) = self.layer_shape(depth);
        let off = self.layer_offset(depth);
        let phi_prev = &pass.hidden[depth - 1][i].embedding;
        let out_slope = pass.output_pre[i].map(|z| self.output_activation.derivative(z));
        let mut own = DMatrix::zeros(d_out, p);
        for r in 0..d_out {
            for a in 0..rows {
                own[(r, off + a + r * rows)] = out_slope[r] * phi_prev[a];
            }
        }
        blocks[i] = Some(own);
        let w_out = self.layer_view(&weights[i], depth);
        let mut adjoints: Vec<Option<DMatrix<f64>>> = vec![None; n];
        adjoints[i] = Some(DMatrix::from_diagonal(&out_slope) * w_out.transpose());

        for layer in (0..depth).rev() {
            let (rows, cols) = self.layer_shape(layer);
            let off = self.layer_offset(layer);
            let act = self.hidden_activations[layer];
            let mut next: Vec<Option<DMatrix<f64>>> = vec![None; n];
            for m in 0..n {
                let Some(g_embedding) = adjoints[m].take() else {
                    continue;
                };
                let cache = &pass.hidden[layer][m];
                // Drop the bias column and scale by the activation slope.
                let slope = cache.pre_activation.map(|z| act.derivative(z));
                let g_pre = DMatrix::from_fn(d_out, cols, |r, c| g_embedding[(r, c)] * slope[c]);
                let block = blocks[m].get_or_insert_with(|| DMatrix::zeros(d_out, p));
                // d/dW[a, c] = g_pre[:, c] * aggregate[a]; W is stored column-major.
                let dst = &mut block.as_mut_slice()[off * d_out..(off + rows * cols) * d_out];
                for (g, dst_c) in g_pre.as_slice().chunks_exact(d_out).zip(dst.chunks_exact_mut(rows * d_out)) {
                    for (&x, out) in cache.aggregate.as_slice().iter().zip(dst_c.chunks_exact_mut(d_out)) {
                        for (o, &gv) in out.iter_mut().zip(g) {
                            *o += gv * x;
                        }
                    }
                }
                if layer > 0 {
                    let g_aggregate = &g_pre * self.layer_view(&weights[m], layer).transpose();
                    for l in graph.augmented_neighbors(m) {
                        match &mut next[l] {
                            Some(acc) => *acc += &g_aggregate,
                            slot @ None => *slot = Some(g_aggregate.clone()),
                        }
                    }
                }
            }
            adjoints = next;
        }

        Ok(NodeJacobians { node: i, blocks })
    }

    /// Single block `d phi_i / d theta_j`.
    pub fn jacobian(
        &self,
        graph: &Graph,
        weights: &[DVector<f64>],
        inputs: &[DVector<f64>],
        i: usize,
        j: usize,
        outside: OutsideNeighborhood,
    ) -> Result<DMatrix<f64>> {
        let n = graph.node_count();
        if j >= n {
            return Err(Error::NodeOutOfRange { index: j, nodes: n });
        }
        let pass = self.forward(graph, weights, inputs)?;
        let jac = self.jacobians(graph, weights, &pass, i)?;
        match jac.get(j) {
            Some(block) => Ok(block.clone()),
            None => match outside {
                OutsideNeighborhood::Zero => Ok(DMatrix::zeros(self.output_dim, self.param_count())),
                OutsideNeighborhood::Error => Err(Error::OutsideNeighborhood {
                    i,
                    j,
                    hops: self.depth() - 1,
                }),
            },
        }
    }

    /// Central-difference approximation of `d phi_i / d theta_j`.
    pub fn finite_diff_jacobian(
        &self,
        graph: &Graph,
        weights: &[DVector<f64>],
        inputs: &[DVector<f64>],
        i: usize,
        j: usize,
        step: f64,
    ) -> Result<DMatrix<f64>> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
        }
        let n = graph.node_count();
        if i >= n || j >= n {
            return Err(Error::NodeOutOfRange { index: i.max(j), nodes: n });
        }
        self.check_inputs(graph, weights, inputs)?;
        let p = self.param_count();
        let mut perturbed = weights.to_vec();
        let mut out = DMatrix::zeros(self.output_dim, p);
        for q in 0..p {
            let base = weights[j][q];
            perturbed[j][q] = base + step;
            let plus = self.forward(graph, &perturbed, inputs)?.outputs[i].clone();
            perturbed[j][q] = base - step;
            let minus = self.forward(graph, &perturbed, inputs)?.outputs[i].clone();
            perturbed[j][q] = base;
            out.set_column(q, &((plus - minus) / (2.0 * step)));
        }
        Ok(out)
    }
}

/// `out += scale * J v`.
pub fn add_jacobian_product(out: &mut DVector<f64>, jac: &DMatrix<f64>, v: &DVector<f64>, scale: f64) {
    assert!(out.len() == jac.nrows() && v.len() == jac.ncols(), "Jacobian product shape");
    let rows = jac.nrows();
    if rows == 0 {
        return;
    }
    let out = out.as_mut_slice();
    for (col, &x) in jac.as_slice().chunks_exact(rows).zip(v.as_slice()) {
        let x = scale * x;
        for (o, &j) in out.iter_mut().zip(col) {
            *o += j * x;
        }
    }
}

/// `out += Jᵀ w`.
pub fn add_jacobian_transpose_product(out: &mut DVector<f64>, jac: &DMatrix<f64>, w: &DVector<f64>) {
    assert!(out.len() == jac.ncols() && w.len() == jac.nrows(), "Jacobian transpose product shape");
    let rows = jac.nrows();
    if rows == 0 {
        return;
    }
    let w = w.as_slice();
    for (o, col) in out.as_mut_slice().iter_mut().zip(jac.as_slice().chunks_exact(rows)) {
        *o += col.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `|a - b|_F / max(|a|_F, |b|_F, 1e-8)`.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-8)
}

/// Sum whose value depends only on the multiset of summands.
fn order_free_sum(terms: &[&DVector<f64>]) -> DVector<f64> {
    let dim = terms[0].len();
    let mut buf = Vec::with_capacity(terms.len());
    DVector::from_fn(dim, |r, _| {
        buf.clear();
        buf.extend(terms.iter().map(|t| t[r]));
        buf.sort_by(f64::total_cmp);
        buf.iter().fold(0.0, |acc, v| acc + v)
    })
}

/// What [`GnnConfig::jacobian`] does when `j` cannot influence `phi_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutsideNeighborhood {
    Error,
    Zero,
}

#[derive(Debug, Clone)]
pub struct HiddenLayer {
    /// Neighborhood sum fed into the layer (bias entries included).
    pub aggregate: DVector<f64>,
    pub pre_activation: DVector<f64>,
    /// Activated output with the trailing bias entry `1`.
    pub embedding: DVector<f64>,
}

/// Every intermediate quantity of one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    hidden: Vec<Vec<HiddenLayer>>,
    output_pre: Vec<DVector<f64>>,
    outputs: Vec<DVector<f64>>,
}

impl ForwardPass {
    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn into_outputs(self) -> Vec<DVector<f64>> {
        self.outputs
    }

    /// Hidden layer `layer` at `node`.
    pub fn hidden(&self, layer: usize, node: usize) -> &HiddenLayer {
        &self.hidden[layer][node]
    }
}

/// `d phi_i / d theta_j` for all `j` that can influence node `i`.
#[derive(Debug, Clone)]
pub struct NodeJacobians {
    node: usize,
    blocks: Vec<Option<DMatrix<f64>>>,
}

impl NodeJacobians {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn get(&self, j: usize) -> Option<&DMatrix<f64>> {
        self.blocks.get(j).and_then(Option::as_ref)
    }

    /// `(j, block)` pairs in ascending `j`, node `i` included.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.blocks
            .iter()
            .enumerate()
            .filter_map(|(j, b)| b.as_ref().map(|b| (j, b)))
    }

    /// Builds a set from explicit blocks; used when Jacobians come from
    /// somewhere other than [`GnnConfig::jacobians`].
    pub fn from_blocks(node: usize, blocks: Vec<Option<DMatrix<f64>>>) -> Self {
        Self { node, blocks }
    }
}

/// Per-layer weight matrices of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeights {
    pub layers: Vec<DMatrix<f64>>,
}

impl NodeWeights {
    pub fn zeros(config: &GnnConfig) -> Self {
        let layers = (0..=config.depth())
            .map(|j| {
                let (r, c) = config.layer_shape(j);
                DMatrix::zeros(r, c)
            })
            .collect();
        Self { layers }
    }

    /// Stacks `vec(W^(0)), ..., vec(W^(k))`.
    pub fn to_flat(&self) -> DVector<f64> {
        let data: Vec<f64> = self.layers.iter().flat_map(|w| w.as_slice().iter().copied()).collect();
        DVector::from_vec(data)
    }

    pub fn from_flat(config: &GnnConfig, theta: &[f64]) -> Result<Self> {
        let p = config.param_count();
        if theta.len() != p {
            return Err(Error::Dimension {
                context: "flat weight vector",
                expected: p,
                actual: theta.len(),
            });
        }
        let layers = (0..=config.depth())
            .map(|j| {
                let (r, c) = config.layer_shape(j);
                let off = config.layer_offset(j);
                DMatrix::from_column_slice(r, c, &theta[off..off + r * c])
            })
            .collect();
        Ok(Self { layers })
    }
}
